//! Client decisions (privacy level, participation, purchases) and a
//! brute-force check that no client gains by unilaterally changing its
//! privacy level.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::economy::{check_eviction, FreshnessPolicy, TokenLedger};
use crate::mechanisms::{cost, reward, utility, value, MechanismParams};
use crate::{Error, Result, Round};

/// Deviation payoffs must beat the profile by more than this to count.
pub const PAYOFF_TOLERANCE: f64 = 1e-9;

/// Privacy levels used across the experiments.
pub const DEFAULT_EPS_GRID: [f64; 9] = [1.0, 5.0, 10.0, 13.0, 15.0, 17.0, 20.0, 23.0, 25.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientState {
    pub id: u32,
    /// Committed at the start and kept for every round.
    pub chosen_eps: f64,
    /// Round of the global model the client holds; 0 is the free initial one.
    pub owned_model_round: Round,
    pub evicted: bool,
    /// Set once utility turns negative; the client never volunteers again.
    pub withdrawn: bool,
    pub cumulative_payoff: f64,
    pub ledger: TokenLedger,
}

impl ClientState {
    pub fn new(id: u32, chosen_eps: f64) -> Self {
        Self {
            id,
            chosen_eps,
            owned_model_round: 0,
            evicted: false,
            withdrawn: false,
            cumulative_payoff: 0.0,
            ledger: TokenLedger::new(),
        }
    }
}

/// One privacy level per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile(pub Vec<f64>);

impl StrategyProfile {
    pub fn uniform(eps: f64, clients: usize) -> Self {
        Self(alloc::vec![eps; clients])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_eps_range(eps: f64, params: &MechanismParams) -> Result<f64> {
    if !(eps >= params.eps_min && eps <= params.eps_max) {
        return Err(Error::EpsilonOutOfRange {
            eps,
            lo: params.eps_min,
            hi: params.eps_max,
        });
    }
    Ok(eps)
}

/// The rational commitment is `eps_a`; experiments may pin other levels.
pub fn choose_epsilon(params: &MechanismParams, override_eps: Option<f64>) -> Result<f64> {
    match override_eps {
        Some(eps) => check_eps_range(eps, params),
        None => Ok(params.eps_a),
    }
}

/// Participates iff the value gained over `stride` rounds covers the privacy
/// cost. A negative answer is sticky.
pub fn decide_participation(
    client: &mut ClientState,
    t: Round,
    stride: u32,
    params: &MechanismParams,
) -> bool {
    if client.evicted || client.withdrawn {
        return false;
    }
    if utility(t, client.chosen_eps, stride, params) >= 0.0 {
        true
    } else {
        client.withdrawn = true;
        false
    }
}

/// Real-currency payoff of one round. Tokens never enter it.
pub fn client_round_payoff(
    bought: bool,
    value_gain: f64,
    eps: f64,
    participated: bool,
    params: &MechanismParams,
) -> f64 {
    let gain = if bought { value_gain } else { 0.0 };
    let paid = if participated { cost(eps, params) } else { 0.0 };
    gain - paid
}

/// Freshness counting that goes with the group setting.
pub fn freshness_policy(params: &MechanismParams) -> FreshnessPolicy {
    if params.groups > 1 {
        FreshnessPolicy::participated(params.freshness)
    } else {
        FreshnessPolicy::calendar(params.freshness)
    }
}

/// Whether a participant should buy now: the model it holds would be too old
/// for its next scheduled round.
pub fn should_buy(client: &ClientState, t: Round, policy: &FreshnessPolicy, stride: u32) -> bool {
    let next = t + stride;
    policy.age(
        client.owned_model_round,
        next,
        client.ledger.participated_rounds(),
    ) > policy.window
}

/// Group of client `id` when `clients` are split into `groups` equal blocks.
pub fn group_of(id: u32, clients: u32, groups: u32) -> u32 {
    id / (clients / groups)
}

pub fn scheduled(id: u32, clients: u32, groups: u32, t: Round) -> bool {
    groups <= 1 || group_of(id, clients, groups) == (t - 1) % groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientOutcome {
    pub eps: f64,
    pub payoff: f64,
    pub participated: Vec<Round>,
    pub purchases: u32,
    pub evicted_at: Option<Round>,
    /// Round of the first purchase attempt that failed for lack of tokens.
    pub first_insufficient: Option<Round>,
}

/// When a simulated client uploads.
#[derive(Debug, Clone, Copy)]
pub enum Participation<'a> {
    /// Uses the utility rule with its own privacy level.
    Rational,
    /// Plays exactly the given rounds unless evicted first.
    Committed(&'a [Round]),
}

/// Token, eviction and payoff dynamics of one client over `horizon` rounds,
/// with the model value shared by everyone and unaffected by this client.
pub fn simulate_client(
    id: u32,
    clients: u32,
    eps: f64,
    horizon: Round,
    params: &MechanismParams,
    participation: Participation<'_>,
) -> ClientOutcome {
    let policy = freshness_policy(params);
    let stride = params.groups.max(1);
    let price = params.price();
    let mut c = ClientState::new(id, eps);
    let mut out = ClientOutcome {
        eps,
        payoff: 0.0,
        participated: Vec::new(),
        purchases: 0,
        evicted_at: None,
        first_insufficient: None,
    };
    for t in 1..=horizon {
        if c.evicted {
            break;
        }
        c.ledger.expire(t, &policy);
        if !scheduled(id, clients, stride, t) {
            continue;
        }
        if policy.age(c.owned_model_round, t, c.ledger.participated_rounds()) > policy.window
            && c.ledger.spend(price).is_ok()
        {
            out.payoff += value(t - 1) - value(c.owned_model_round);
            c.owned_model_round = t - 1;
            out.purchases += 1;
        }
        if check_eviction(&c, t, &policy, price) {
            c.evicted = true;
            out.evicted_at = Some(t);
            break;
        }
        let plays = match participation {
            Participation::Rational => decide_participation(&mut c, t, stride, params),
            Participation::Committed(rounds) => rounds.contains(&t),
        };
        if !plays {
            continue;
        }
        out.payoff -= cost(eps, params);
        c.ledger
            .credit(reward(eps, params), t)
            .expect("rounds increase");
        c.ledger.record_participation(t);
        out.participated.push(t);
        if should_buy(&c, t, &policy, stride) {
            match c.ledger.spend(price) {
                Ok(()) => {
                    out.payoff += value(t) - value(c.owned_model_round);
                    c.owned_model_round = t;
                    out.purchases += 1;
                }
                Err(_) => {
                    out.first_insufficient.get_or_insert(t);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub client: u32,
    pub from_eps: f64,
    pub to_eps: f64,
    /// Payoff when the deviator keeps the profile's participation rounds.
    pub committed_payoff: f64,
    pub committed_participations: u32,
    /// Payoff when the deviator also re-optimises when to stop.
    pub adaptive_payoff: f64,
    pub adaptive_participations: u32,
    pub profitable: bool,
}

impl Deviation {
    pub fn best_payoff(&self) -> f64 {
        self.committed_payoff.max(self.adaptive_payoff)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub profile: Vec<f64>,
    pub horizon: Round,
    pub profile_payoffs: Vec<f64>,
    pub profile_participations: Vec<u32>,
    pub deviations: Vec<Deviation>,
    pub is_equilibrium: bool,
}

impl NashReport {
    pub fn profitable(&self) -> impl Iterator<Item = &Deviation> {
        self.deviations.iter().filter(|d| d.profitable)
    }
}

/// Tries every single-client switch to every grid level and reports the
/// switches that pay strictly more than the profile.
pub fn nash_check(
    profile: &StrategyProfile,
    eps_grid: &[f64],
    horizon: Round,
    params: &MechanismParams,
) -> Result<NashReport> {
    params.validate()?;
    if profile.is_empty() {
        return Err(Error::Empty("strategy profile"));
    }
    if eps_grid.is_empty() {
        return Err(Error::Empty("epsilon grid"));
    }
    for &e in eps_grid.iter().chain(&profile.0) {
        check_eps_range(e, params)?;
    }
    let clients = profile.len() as u32;
    if params.groups > 1 && !clients.is_multiple_of(params.groups) {
        return Err(Error::Config(alloc::format!(
            "{clients} clients cannot form {} equal groups",
            params.groups
        )));
    }

    let baseline: Vec<ClientOutcome> = profile
        .0
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            simulate_client(
                i as u32,
                clients,
                e,
                horizon,
                params,
                Participation::Rational,
            )
        })
        .collect();

    let mut deviations = Vec::new();
    for (i, base) in baseline.iter().enumerate() {
        for &to in eps_grid {
            if to == base.eps {
                continue;
            }
            let id = i as u32;
            let committed = simulate_client(
                id,
                clients,
                to,
                horizon,
                params,
                Participation::Committed(&base.participated),
            );
            let adaptive =
                simulate_client(id, clients, to, horizon, params, Participation::Rational);
            let best = committed.payoff.max(adaptive.payoff);
            deviations.push(Deviation {
                client: id,
                from_eps: base.eps,
                to_eps: to,
                committed_payoff: committed.payoff,
                committed_participations: committed.participated.len() as u32,
                adaptive_payoff: adaptive.payoff,
                adaptive_participations: adaptive.participated.len() as u32,
                profitable: best > base.payoff + PAYOFF_TOLERANCE,
            });
        }
    }
    let is_equilibrium = deviations.iter().all(|d| !d.profitable);
    Ok(NashReport {
        profile: profile.0.clone(),
        horizon,
        profile_payoffs: baseline.iter().map(|o| o.payoff).collect(),
        profile_participations: baseline
            .iter()
            .map(|o| o.participated.len() as u32)
            .collect(),
        deviations,
        is_equilibrium,
    })
}

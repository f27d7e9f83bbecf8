//! Round orchestration: expiry, scheduling, participation decisions, local
//! training, LDP upload, token credit, aggregation and model purchases, in
//! that order, for the baseline, strategic and grouped mechanisms.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::economy::{check_eviction, FreshnessPolicy};
use crate::learning::{
    aggregate, evaluate, init_model, local_train, partition, Architecture, DataPartition, Dataset,
    ModelParams, PartitionScheme, Split, TrainSpec,
};
use crate::mechanisms::{baseline_token_reward, cost, reward, utility, value, MechanismParams};
use crate::privacy::{perturb_gradients, LdpConfig, LdpMechanism};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::strategy::{
    choose_epsilon, decide_participation, freshness_policy, should_buy, ClientState,
};
use crate::{Error, Result, Round};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    /// Linear token reward, fixed price, no freshness rule and no eviction.
    Baseline,
    Strategic,
    StrategicGrouped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySettings {
    pub enabled: bool,
    pub mechanism: LdpMechanism,
    /// Gradients are clipped per coordinate into `[center - radius, center + radius]`.
    pub center: f64,
    pub radius: f64,
}

impl Default for PrivacySettings {
    fn default() -> Self {
        Self {
            enabled: true,
            mechanism: LdpMechanism::TwoPoint,
            center: 0.0,
            radius: 1.0,
        }
    }
}

impl PrivacySettings {
    pub fn config_for(&self, eps: f64) -> LdpConfig {
        LdpConfig {
            eps,
            center: self.center,
            radius: self.radius,
            mechanism: self.mechanism,
        }
    }

    /// Magnitude of the noise a client at `eps` adds, as logged per round.
    pub fn noise_scale(&self, eps: f64) -> f64 {
        let cfg = self.config_for(eps);
        match self.mechanism {
            LdpMechanism::TwoPoint => cfg.radius * cfg.spread(),
            LdpMechanism::Laplace => 2.0 * cfg.radius / cfg.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub mechanism: MechanismKind,
    pub clients: u32,
    pub params: MechanismParams,
    pub train: TrainSpec,
    pub layers: Vec<usize>,
    pub scheme: PartitionScheme,
    pub privacy: PrivacySettings,
    pub seed: u64,
    pub horizon: Round,
    /// Privacy level per client. Empty: every client commits to `eps_a`.
    /// One entry: shared by all clients.
    pub eps: Vec<f64>,
    /// Stop once global accuracy reaches this value.
    pub stop_accuracy: Option<f64>,
    /// Model price of the baseline scheme, in tokens.
    pub baseline_price: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mechanism: MechanismKind::Strategic,
            clients: 3,
            params: MechanismParams::default(),
            train: TrainSpec::default(),
            layers: Architecture::mnist_mlp().layers,
            scheme: PartitionScheme::Intermediary,
            privacy: PrivacySettings::default(),
            seed: 1,
            horizon: crate::mechanisms::DEFAULT_HORIZON,
            eps: Vec::new(),
            stop_accuracy: Some(0.97),
            baseline_price: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        Architecture::new(self.layers.clone())?;
        if self.clients == 0 {
            return Err(Error::Config("clients must be at least 1".into()));
        }
        match self.mechanism {
            MechanismKind::StrategicGrouped => {
                let g = self.params.groups;
                if g < 2 || !self.clients.is_multiple_of(g) {
                    return Err(Error::Config(format!(
                        "grouped mode needs at least 2 groups dividing {} clients, got {g}",
                        self.clients
                    )));
                }
            }
            _ if self.params.groups != 1 => {
                return Err(Error::Config(format!(
                    "groups = {} requires mechanism strategic-grouped",
                    self.params.groups
                )));
            }
            _ => {}
        }
        if !(self.eps.is_empty() || self.eps.len() == 1 || self.eps.len() == self.clients as usize)
        {
            return Err(Error::Config(format!(
                "eps needs 0, 1 or {} entries, got {}",
                self.clients,
                self.eps.len()
            )));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.train.lr
            )));
        }
        if !(self.baseline_price >= 0.0) {
            return Err(Error::Config("baseline_price must be non-negative".into()));
        }
        if self.privacy.enabled {
            self.privacy.config_for(1.0).validate()?;
        }
        for eps in self.client_eps()? {
            if self.mechanism == MechanismKind::Baseline {
                baseline_token_reward(eps, &self.params)?;
            }
        }
        Ok(())
    }

    /// Resolved privacy level of every client.
    pub fn client_eps(&self) -> Result<Vec<f64>> {
        (0..self.clients as usize)
            .map(|i| {
                let o = match self.eps.len() {
                    0 => None,
                    1 => Some(self.eps[0]),
                    _ => Some(self.eps[i]),
                };
                choose_epsilon(&self.params, o)
            })
            .collect()
    }

    pub fn groups(&self) -> u32 {
        match self.mechanism {
            MechanismKind::StrategicGrouped => self.params.groups,
            _ => 1,
        }
    }

    fn is_strategic(&self) -> bool {
        self.mechanism != MechanismKind::Baseline
    }
}

/// Client ids scheduled in `round`: contiguous blocks of `clients / groups`
/// ids, one block per round in round-robin order.
pub fn schedule_group(round: Round, clients: u32, groups: u32) -> Result<Vec<u32>> {
    if groups == 0 || !clients.is_multiple_of(groups) {
        return Err(Error::Config(format!(
            "{groups} groups do not divide {clients} clients"
        )));
    }
    if round == 0 {
        return Err(Error::Config("rounds start at 1".into()));
    }
    let size = clients / groups;
    let g = (round - 1) % groups;
    Ok((g * size..(g + 1) * size).collect())
}

/// Splits the test set into the client-visible slice (the last `fraction`)
/// and the server's global test set (the rest).
pub fn split_test(test: &Dataset, fraction: f64) -> (Dataset, Dataset) {
    let local = libm::round(test.len() as f64 * fraction) as usize;
    let cut = test.len() - local.min(test.len());
    (
        test.range(cut, test.len(), Split::LocalTest),
        test.range(0, cut, Split::GlobalTest),
    )
}

/// Datasets a run needs.
#[derive(Debug, Clone, Copy)]
pub struct SimData<'a> {
    pub train: &'a Dataset,
    pub local_test: &'a Dataset,
    pub global_test: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundRecord {
    pub client: u32,
    pub eps: f64,
    pub scheduled: bool,
    pub trained: bool,
    pub participated: bool,
    pub earned: f64,
    pub spent: f64,
    pub expired: f64,
    pub balance: f64,
    pub bought: bool,
    pub evicted: bool,
    pub owned_model_round: Round,
    /// Accuracy of the model the client holds at the end of the round, on
    /// the client-visible test slice.
    pub accuracy: f64,
    pub utility: f64,
    pub cumulative_payoff: f64,
    pub noise_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: Round,
    pub participants: Vec<u32>,
    pub clients: Vec<ClientRoundRecord>,
    pub tokens_credited: f64,
    pub global_accuracy: f64,
}

struct Client {
    state: ClientState,
    model: ModelParams,
    partition: DataPartition,
    accuracy: Option<f64>,
}

/// A run in progress. Drive it with [`Simulation::step`] to observe each
/// record as it is produced.
pub struct Simulation<'a> {
    config: SimConfig,
    data: SimData<'a>,
    policy: FreshnessPolicy,
    global: ModelParams,
    clients: Vec<Client>,
    round: Round,
    stopped: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(config: SimConfig, data: SimData<'a>) -> Result<Self> {
        config.validate()?;
        let arch = Architecture::new(config.layers.clone())?;
        if arch.inputs() != data.train.dim() {
            return Err(Error::Config(format!(
                "model expects {} inputs, dataset has {}",
                arch.inputs(),
                data.train.dim()
            )));
        }
        let parts = partition(
            data.train,
            config.clients as usize,
            config.scheme,
            derive_seed(config.seed, Stream::Partition, 0, 0),
        )?;
        if parts.iter().any(DataPartition::is_empty) {
            return Err(Error::Config("a client received no training data".into()));
        }
        let global = init_model(&arch, derive_seed(config.seed, Stream::Init, 0, 0));
        let eps = config.client_eps()?;
        let clients = parts
            .into_iter()
            .zip(eps)
            .map(|(p, e)| Client {
                state: ClientState::new(p.client, e),
                model: global.clone(),
                partition: p,
                accuracy: None,
            })
            .collect();
        Ok(Self {
            policy: freshness_policy(&config.params),
            config,
            data,
            global,
            clients,
            round: 0,
            stopped: false,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub fn global_model(&self) -> &ModelParams {
        &self.global
    }

    pub fn partitions(&self) -> Vec<&DataPartition> {
        self.clients.iter().map(|c| &c.partition).collect()
    }

    pub fn client_states(&self) -> Vec<&ClientState> {
        self.clients.iter().map(|c| &c.state).collect()
    }

    pub fn is_finished(&self) -> bool {
        self.stopped || self.round >= self.config.horizon
    }

    /// Runs the next round, or returns `None` once the horizon or the
    /// accuracy target is reached.
    pub fn step(&mut self) -> Option<Result<RoundRecord>> {
        if self.is_finished() {
            return None;
        }
        Some(self.run_round())
    }

    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let t = self.round + 1;
        let cfg = &self.config;
        let strategic = cfg.is_strategic();
        let params = &cfg.params;
        let price = params.price();
        let stride = cfg.groups();
        let n = self.clients.len();

        let mut rec: Vec<ClientRoundRecord> = self
            .clients
            .iter()
            .map(|c| ClientRoundRecord {
                client: c.state.id,
                eps: c.state.chosen_eps,
                scheduled: false,
                trained: false,
                participated: false,
                earned: 0.0,
                spent: 0.0,
                expired: 0.0,
                balance: 0.0,
                bought: false,
                evicted: c.state.evicted,
                owned_model_round: c.state.owned_model_round,
                accuracy: 0.0,
                utility: utility(t, c.state.chosen_eps, stride, params),
                cumulative_payoff: 0.0,
                noise_scale: 0.0,
            })
            .collect();

        // Expiry runs first so every decision sees post-expiry balances.
        if strategic {
            for (c, r) in self.clients.iter_mut().zip(&mut rec) {
                if !c.state.evicted {
                    r.expired = c.state.ledger.expire(t, &self.policy);
                }
            }
        }

        let scheduled = schedule_group(t, cfg.clients, stride)?;
        for &id in &scheduled {
            rec[id as usize].scheduled = true;
        }

        // Freshness: a stale client buys the current model if it can,
        // otherwise it is evicted for good.
        if strategic {
            for &id in &scheduled {
                let c = &mut self.clients[id as usize];
                if c.state.evicted {
                    continue;
                }
                let age = self.policy.age(
                    c.state.owned_model_round,
                    t,
                    c.state.ledger.participated_rounds(),
                );
                if age > self.policy.window && c.state.ledger.spend(price).is_ok() {
                    c.state.cumulative_payoff += value(t - 1) - value(c.state.owned_model_round);
                    c.state.owned_model_round = t - 1;
                    c.model = self.global.clone();
                    c.accuracy = None;
                    rec[id as usize].spent += price;
                    rec[id as usize].bought = true;
                }
                if check_eviction(&c.state, t, &self.policy, price) {
                    c.state.evicted = true;
                    rec[id as usize].evicted = true;
                }
            }
        }

        // Local training, then upload for the willing.
        let mut uploads: Vec<(u32, Vec<f64>, usize)> = Vec::new();
        for &id in &scheduled {
            let c = &mut self.clients[id as usize];
            if c.state.evicted {
                continue;
            }
            let willing = if strategic {
                decide_participation(&mut c.state, t, stride, params)
            } else {
                true
            };
            let update = local_train(
                &c.model,
                self.data.train,
                &c.partition.indices,
                &cfg.train,
                derive_seed(cfg.seed, Stream::Training, id, t),
            )?;
            c.model = update.params;
            c.accuracy = None;
            let r = &mut rec[id as usize];
            r.trained = true;
            if !willing {
                continue;
            }
            let grads = if cfg.privacy.enabled {
                let ldp = cfg.privacy.config_for(c.state.chosen_eps);
                let mut rng = stream_rng(cfg.seed, Stream::Perturbation, id, t);
                r.noise_scale = cfg.privacy.noise_scale(c.state.chosen_eps);
                perturb_gradients(&update.gradient, &ldp, &mut rng)?
            } else {
                update.gradient
            };
            uploads.push((id, grads, c.partition.len()));
        }

        // Token credit and privacy cost for every uploader.
        let mut tokens_credited = 0.0;
        for (id, _, _) in &uploads {
            let c = &mut self.clients[*id as usize];
            let eps = c.state.chosen_eps;
            let earned = if strategic {
                reward(eps, params)
            } else {
                baseline_token_reward(eps, params)?
            };
            c.state.ledger.credit(earned, t)?;
            c.state.ledger.record_participation(t);
            c.state.cumulative_payoff -= cost(eps, params);
            tokens_credited += earned;
            let r = &mut rec[*id as usize];
            r.participated = true;
            r.earned = earned;
        }

        if !uploads.is_empty() {
            let grads: Vec<&[f64]> = uploads.iter().map(|(_, g, _)| g.as_slice()).collect();
            let sizes: Vec<usize> = uploads.iter().map(|(_, _, s)| *s).collect();
            self.global = aggregate(&self.global, &grads, &sizes, cfg.train.lr)?;
        }
        let global_accuracy = evaluate(&self.global, self.data.global_test);

        // Purchases of the freshly aggregated model.
        for (id, _, _) in &uploads {
            let c = &mut self.clients[*id as usize];
            let (buy, cost_tokens) = if strategic {
                (should_buy(&c.state, t, &self.policy, stride), price)
            } else {
                (true, cfg.baseline_price)
            };
            if buy && c.state.ledger.spend(cost_tokens).is_ok() {
                c.state.cumulative_payoff += value(t) - value(c.state.owned_model_round);
                c.state.owned_model_round = t;
                c.model = self.global.clone();
                c.accuracy = None;
                let r = &mut rec[*id as usize];
                r.spent += cost_tokens;
                r.bought = true;
            }
        }

        let mut global_local_acc = None;
        for (c, r) in self.clients.iter_mut().zip(&mut rec) {
            let acc = match c.accuracy {
                Some(a) => a,
                None if c.state.owned_model_round == t && r.bought => *global_local_acc
                    .get_or_insert_with(|| evaluate(&self.global, self.data.local_test)),
                None => evaluate(&c.model, self.data.local_test),
            };
            c.accuracy = Some(acc);
            r.accuracy = acc;
            r.balance = c.state.ledger.balance();
            r.evicted = c.state.evicted;
            r.owned_model_round = c.state.owned_model_round;
            r.cumulative_payoff = c.state.cumulative_payoff;
        }
        debug_assert_eq!(rec.len(), n);

        self.round = t;
        if let Some(target) = cfg.stop_accuracy {
            if global_accuracy >= target {
                self.stopped = true;
            }
        }
        Ok(RoundRecord {
            round: t,
            participants: uploads.iter().map(|(id, _, _)| *id).collect(),
            clients: rec,
            tokens_credited,
            global_accuracy,
        })
    }
}

/// Runs a whole simulation and collects every round.
pub fn run_simulation(config: SimConfig, data: SimData<'_>) -> Result<Vec<RoundRecord>> {
    let mut sim = Simulation::new(config, data)?;
    let mut out = Vec::new();
    while let Some(r) = sim.step() {
        out.push(r?);
    }
    Ok(out)
}

//! Token ledger with earn/spend/expire semantics and the freshness rule that
//! forces stale, insolvent clients out of training.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::strategy::ClientState;
use crate::{Error, Result, Round};

/// Balances below the price by less than this are treated as sufficient.
/// Baseline rewards are fractional and accumulate rounding noise.
pub const TOKEN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenLot {
    pub amount: f64,
    pub earned_at: Round,
}

/// How many rounds must pass before a model goes stale or a token lot
/// expires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreshnessPolicy {
    pub window: u32,
    /// Count only the rounds the client participated in (grouped scheme)
    /// instead of every calendar round.
    pub counts_participated_only: bool,
}

impl FreshnessPolicy {
    pub fn calendar(window: u32) -> Self {
        Self {
            window,
            counts_participated_only: false,
        }
    }

    pub fn participated(window: u32) -> Self {
        Self {
            window,
            counts_participated_only: true,
        }
    }

    /// Age at the start of round `now` of something stamped at round `since`.
    ///
    /// Calendar counting gives `now - since`. Participation counting gives the
    /// number of participated rounds strictly between the two plus one for
    /// the round about to be played, so both rules agree when a client plays
    /// every round.
    pub fn age(&self, since: Round, now: Round, participated: &[Round]) -> u32 {
        if now <= since {
            return 0;
        }
        if self.counts_participated_only {
            let between = participated
                .iter()
                .filter(|&&p| p > since && p < now)
                .count();
            between as u32 + 1
        } else {
            now - since
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("insufficient tokens: balance {balance}, cost {cost}")]
pub struct Insufficient {
    pub balance: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenLedger {
    lots: Vec<TokenLot>,
    participated: Vec<Round>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn balance(&self) -> f64 {
        self.lots.iter().map(|l| l.amount).sum()
    }

    pub fn lots(&self) -> &[TokenLot] {
        &self.lots
    }

    pub fn participated_rounds(&self) -> &[Round] {
        &self.participated
    }

    pub fn record_participation(&mut self, round: Round) {
        if self.participated.last().is_none_or(|&p| p < round) {
            self.participated.push(round);
        }
    }

    pub fn credit(&mut self, amount: f64, round: Round) -> Result<()> {
        if !(amount >= 0.0) {
            return Err(Error::NegativeAmount(amount));
        }
        if round == 0 {
            return Err(Error::NonMonotoneRound { round, latest: 0 });
        }
        if let Some(last) = self.lots.last() {
            if round <= last.earned_at {
                return Err(Error::NonMonotoneRound {
                    round,
                    latest: last.earned_at,
                });
            }
        }
        self.lots.push(TokenLot {
            amount,
            earned_at: round,
        });
        Ok(())
    }

    /// Pays `cost` from the oldest lots first. Leaves the ledger untouched on
    /// failure.
    pub fn spend(&mut self, cost: f64) -> core::result::Result<(), Insufficient> {
        let balance = self.balance();
        if !(cost >= 0.0) || balance < cost - TOKEN_TOLERANCE {
            return Err(Insufficient { balance, cost });
        }
        let mut remaining = cost;
        for lot in &mut self.lots {
            if remaining <= 0.0 {
                break;
            }
            let take = lot.amount.min(remaining);
            lot.amount -= take;
            remaining -= take;
        }
        // Only rounding residue can be left here.
        if remaining > 0.0 {
            if let Some(lot) = self.lots.iter_mut().rev().find(|l| l.amount > 0.0) {
                lot.amount = (lot.amount - remaining).max(0.0);
            }
        }
        Ok(())
    }

    /// Removes every lot older than the policy window and returns the total
    /// removed.
    pub fn expire(&mut self, current_round: Round, policy: &FreshnessPolicy) -> f64 {
        let participated = &self.participated;
        let mut expired = 0.0;
        self.lots.retain(|lot| {
            let stale = policy.age(lot.earned_at, current_round, participated) > policy.window;
            if stale {
                expired += lot.amount;
            }
            !stale
        });
        expired
    }
}

/// Whether the client is stale beyond the window and cannot afford a fresh
/// model.
pub fn check_eviction(
    client: &ClientState,
    current_round: Round,
    policy: &FreshnessPolicy,
    cost: f64,
) -> bool {
    let age = policy.age(
        client.owned_model_round,
        current_round,
        client.ledger.participated_rounds(),
    );
    age > policy.window && client.ledger.balance() < cost - TOKEN_TOLERANCE
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn credit_examples() {
        let mut l = TokenLedger::new();
        l.credit(1.0, 1).unwrap();
        assert_eq!(l.balance(), 1.0);
        l.credit(0.0, 2).unwrap();
        assert_eq!(l.balance(), 1.0);
        assert_eq!(
            l.credit(1.0, 2),
            Err(Error::NonMonotoneRound {
                round: 2,
                latest: 2
            })
        );
        assert!(matches!(l.credit(-1.0, 3), Err(Error::NegativeAmount(_))));
    }

    #[test]
    fn n_credits_of_c_over_n_sum_to_c() {
        for n in 1..=6u32 {
            let c = 2 * n;
            let mut l = TokenLedger::new();
            for r in 1..=n {
                l.credit(f64::from(c) / f64::from(n), r).unwrap();
            }
            assert_eq!(l.balance(), f64::from(c));
        }
    }

    #[test]
    fn spend_examples() {
        let mut l = TokenLedger::new();
        l.credit(1.0, 1).unwrap();
        l.spend(1.0).unwrap();
        assert_eq!(l.balance(), 0.0);

        let mut l = TokenLedger::new();
        l.credit(1.0 - 1e-3, 1).unwrap();
        let before = l.clone();
        assert!(l.spend(1.0).is_err());
        assert_eq!(l, before);

        let mut l = TokenLedger::new();
        l.credit(0.6, 1).unwrap();
        l.credit(0.6, 2).unwrap();
        l.spend(1.0).unwrap();
        assert_eq!(
            l.lots()[0],
            TokenLot {
                amount: 0.0,
                earned_at: 1
            }
        );
        assert_eq!(l.lots()[1].earned_at, 2);
        assert!((l.lots()[1].amount - 0.2).abs() < 1e-12);
    }

    #[test]
    fn calendar_expiry() {
        let mut l = TokenLedger::new();
        l.credit(1.0, 4).unwrap();
        assert_eq!(l.expire(5, &FreshnessPolicy::calendar(1)), 0.0);
        assert_eq!(l.expire(6, &FreshnessPolicy::calendar(1)), 1.0);
        assert!(l.lots().is_empty());

        let mut l = TokenLedger::new();
        l.credit(1.0, 4).unwrap();
        assert_eq!(l.expire(5, &FreshnessPolicy::calendar(3)), 0.0);
        assert_eq!(l.balance(), 1.0);
    }

    #[test]
    fn participation_counted_expiry() {
        // Earned at round 1 (group 0 of 2), then the client sits out rounds
        // 2..=5 and plays again in round 6.
        let mut l = TokenLedger::new();
        l.record_participation(1);
        l.credit(0.7, 1).unwrap();
        let mut calendar = l.clone();
        assert_eq!(l.expire(6, &FreshnessPolicy::participated(1)), 0.0);
        assert_eq!(l.balance(), 0.7);
        assert_eq!(calendar.expire(6, &FreshnessPolicy::calendar(1)), 0.7);

        // After playing round 6 without spending, the lot is gone by the
        // next participation.
        l.record_participation(6);
        assert_eq!(l.expire(8, &FreshnessPolicy::participated(1)), 0.7);
    }

    #[test]
    fn eviction_examples() {
        let policy = FreshnessPolicy::calendar(1);
        let mut c = ClientState::new(0, 25.0);
        c.owned_model_round = 5;
        assert!(!check_eviction(&c, 5, &policy, 1.0));
        c.owned_model_round = 3;
        assert!(check_eviction(&c, 5, &policy, 1.0));
        c.ledger.credit(1.0, 4).unwrap();
        assert!(!check_eviction(&c, 5, &policy, 1.0));
        c.owned_model_round = 4;
        c.ledger.spend(1.0).unwrap();
        assert!(!check_eviction(&c, 5, &policy, 1.0));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Credit(f64),
        Spend(f64),
        Expire,
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0.0f64..3.0).prop_map(Op::Credit),
            (0.0f64..3.0).prop_map(Op::Spend),
            Just(Op::Expire),
        ]
    }

    proptest! {
        #[test]
        fn conservation_and_fifo(ops in proptest::collection::vec(op(), 1..60), n in 1u32..4) {
            let policy = FreshnessPolicy::calendar(n);
            let mut l = TokenLedger::new();
            let (mut credited, mut spent, mut expired) = (0.0, 0.0, 0.0);
            for (i, op) in ops.into_iter().enumerate() {
                let round = i as Round + 1;
                match op {
                    Op::Credit(a) => {
                        l.credit(a, round).unwrap();
                        credited += a;
                    }
                    Op::Spend(c) => {
                        let live: Vec<Round> = l.lots().iter()
                            .filter(|x| x.amount > 0.0).map(|x| x.earned_at).collect();
                        let before: Vec<f64> = l.lots().iter().map(|x| x.amount).collect();
                        if l.spend(c).is_ok() {
                            spent += c;
                            // oldest live lot is the first one touched
                            let touched: Vec<Round> = l.lots().iter().zip(&before)
                                .filter(|(x, b)| x.amount < **b).map(|(x, _)| x.earned_at).collect();
                            if let (Some(first), Some(oldest)) = (touched.first(), live.first()) {
                                prop_assert_eq!(first, oldest);
                            }
                        }
                    }
                    Op::Expire => expired += l.expire(round, &policy),
                }
                prop_assert!(l.balance() >= 0.0);
                prop_assert!((l.balance() - (credited - spent - expired)).abs() < 1e-6);
            }
        }
    }
}

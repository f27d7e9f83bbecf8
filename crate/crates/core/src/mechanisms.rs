//! Closed-form game functions: the linear baseline reward, the value of a
//! global model, the privacy cost, the token reward and the participation
//! inequalities derived from them.

use alloc::format;
use alloc::vec::Vec;

use libm::{log, pow};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Round};

/// Horizon used by the experiments and the collapse tables.
pub const DEFAULT_HORIZON: Round = 50;

/// Shape of the token reward below the acceptable privacy level.
///
/// `Inverted` pays the most tokens to the most private clients. It breaks
/// the strict monotonicity the mechanism relies on and exists so tests (and
/// `tokenfl nash --reward-shape inverted`) can exhibit a profitable deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardShape {
    #[default]
    Cubic,
    Inverted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismParams {
    pub eps_min: f64,
    pub eps_max: f64,
    /// Acceptable privacy level chosen by the server.
    pub eps_a: f64,
    /// Price of the global model in tokens (`C`).
    pub model_price: u32,
    /// Freshness window `n`, in rounds.
    pub freshness: u32,
    /// Number of client groups `G` (1 = every client every round).
    pub groups: u32,
    pub cost_min: f64,
    pub cost_max: f64,
    /// Bounds of the linear baseline scheme.
    pub eps_low: f64,
    pub eps_high: f64,
    pub reward_shape: RewardShape,
}

impl Default for MechanismParams {
    fn default() -> Self {
        Self {
            eps_min: 1.0,
            eps_max: 25.0,
            eps_a: 15.0,
            model_price: 1,
            freshness: 1,
            groups: 1,
            // Least-squares fit of the collapse rounds for eps 25/20/17/15,
            // see `calibration_matches_reported_collapse_rounds` in the
            // acceptance suite.
            cost_min: 2.8,
            cost_max: 17.8,
            eps_low: 1.0,
            eps_high: 25.0,
            reward_shape: RewardShape::Cubic,
        }
    }
}

impl MechanismParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParams(msg));
        if !(self.eps_min > 0.0) {
            return bad(format!("eps_min must be positive, got {}", self.eps_min));
        }
        if !(self.eps_min <= self.eps_a && self.eps_a <= self.eps_max) {
            return bad(format!(
                "need eps_min <= eps_a <= eps_max, got {} / {} / {}",
                self.eps_min, self.eps_a, self.eps_max
            ));
        }
        if self.model_price == 0 {
            return bad("model_price must be a positive integer".into());
        }
        if self.freshness == 0 {
            return bad("freshness window must be at least 1".into());
        }
        if !self.model_price.is_multiple_of(self.freshness) {
            return bad(format!(
                "model_price {} must be a multiple of the freshness window {}",
                self.model_price, self.freshness
            ));
        }
        if self.groups == 0 {
            return bad("groups must be at least 1".into());
        }
        if !(self.cost_min >= 0.0 && self.cost_min <= self.cost_max) {
            return bad(format!(
                "need 0 <= cost_min <= cost_max, got {} / {}",
                self.cost_min, self.cost_max
            ));
        }
        if !(self.eps_low < self.eps_high) {
            return bad(format!(
                "need eps_low < eps_high, got {} / {}",
                self.eps_low, self.eps_high
            ));
        }
        Ok(())
    }

    pub fn price(&self) -> f64 {
        f64::from(self.model_price)
    }

    /// Tokens paid at the acceptable level, `C / n`.
    pub fn reward_at_acceptable(&self) -> f64 {
        self.price() / f64::from(self.freshness)
    }
}

/// Linear token reward of the non-strategic baseline scheme, in `[0.5, 1.0]`.
pub fn baseline_token_reward(eps: f64, params: &MechanismParams) -> Result<f64> {
    if !(eps >= params.eps_low && eps <= params.eps_high) {
        return Err(Error::EpsilonOutOfRange {
            eps,
            lo: params.eps_low,
            hi: params.eps_high,
        });
    }
    Ok(0.5 + (eps - params.eps_low) / (2.0 * (params.eps_high - params.eps_low)))
}

/// Value of the round-`t` global model. Concave, `value(0) == 0`.
///
/// Increments grow for the first three rounds and shrink from `t = 3` on.
pub fn value(t: Round) -> f64 {
    let l = log(f64::from(t) + 1.0);
    30.0 * pow(l, 2.8) / (1.0 + 0.15 * pow(l, 1.5))
}

/// Per-round privacy cost, clamped to `[cost_min, cost_max]`.
pub fn cost(eps: f64, params: &MechanismParams) -> f64 {
    if eps >= params.eps_max {
        return params.cost_max;
    }
    let x = (eps - 1.0) / (params.eps_max - 1.0);
    let c = (params.cost_max - params.cost_min) * x * x * x + params.cost_min;
    c.clamp(params.cost_min, params.cost_max)
}

/// Tokens credited for one participation at privacy level `eps`.
pub fn reward(eps: f64, params: &MechanismParams) -> f64 {
    let top = params.reward_at_acceptable();
    if eps >= params.eps_a {
        return top;
    }
    let span = params.eps_a - params.eps_min;
    let x = match params.reward_shape {
        RewardShape::Cubic => (eps - params.eps_min) / span,
        RewardShape::Inverted => (params.eps_a - eps) / span,
    };
    let x = x.clamp(0.0, 1.0);
    0.5 + (top - 0.5) * x * x * x
}

/// `value(t + stride) - value(t) - cost(eps)`: a client participates iff this
/// is non-negative.
pub fn utility(t: Round, eps: f64, stride: u32, params: &MechanismParams) -> f64 {
    value(t + stride) - value(t) - cost(eps, params)
}

/// First round in `1..=horizon` whose utility is negative.
pub fn predict_collapse_round(
    eps: f64,
    stride: u32,
    horizon: Round,
    params: &MechanismParams,
) -> Option<Round> {
    (1..=horizon).find(|&t| utility(t, eps, stride, params) < 0.0)
}

/// Participation condition over a freshness window of `n` rounds:
/// `V(t + n) - V(t) >= n * c(eps)`.
pub fn participation_condition_n(t: Round, n: u32, eps: f64, params: &MechanismParams) -> bool {
    value(t + n) - value(t) >= f64::from(n) * cost(eps, params)
}

/// Utility per round at a fixed privacy level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityCurve {
    pub eps: f64,
    pub stride: u32,
    /// `points[i]` is the utility at round `i + 1`.
    pub points: Vec<f64>,
}

impl UtilityCurve {
    pub fn new(eps: f64, stride: u32, horizon: Round, params: &MechanismParams) -> Self {
        let points = (1..=horizon)
            .map(|t| utility(t, eps, stride, params))
            .collect();
        Self {
            eps,
            stride,
            points,
        }
    }

    pub fn collapse_round(&self) -> Option<Round> {
        self.points
            .iter()
            .position(|&u| u < 0.0)
            .map(|i| i as Round + 1)
    }
}

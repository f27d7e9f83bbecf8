//! ε-LDP perturbation of gradient vectors.
//!
//! The default mechanism clips each coordinate into `[c - r, c + r]` and
//! answers with one of two points, `c ± r·(e^ε + 1)/(e^ε - 1)`, choosing the
//! upper one with a probability linear in the input so the output is
//! unbiased. For the two extreme inputs the probabilities of either output
//! differ by exactly a factor `e^ε`.
//!
//! A Laplace mechanism with scale `2r/ε` on the clipped value is available
//! behind the same interface.

use alloc::vec::Vec;

use libm::{exp, log, tanh};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LdpMechanism {
    #[default]
    TwoPoint,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpConfig {
    pub eps: f64,
    pub center: f64,
    pub radius: f64,
    pub mechanism: LdpMechanism,
}

impl LdpConfig {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            center: 0.0,
            radius: 1.0,
            mechanism: LdpMechanism::TwoPoint,
        }
    }

    pub fn with_range(mut self, center: f64, radius: f64) -> Self {
        self.center = center;
        self.radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParams(alloc::format!(
                "LDP epsilon must be positive, got {}",
                self.eps
            )));
        }
        if !(self.radius > 0.0) || !self.center.is_finite() {
            return Err(Error::InvalidParams(alloc::format!(
                "LDP clipping range needs radius > 0, got center {} radius {}",
                self.center,
                self.radius
            )));
        }
        Ok(())
    }

    /// `(e^ε + 1)/(e^ε - 1)`, written as `1/tanh(ε/2)` so large ε stays finite.
    pub fn spread(&self) -> f64 {
        1.0 / tanh(self.eps / 2.0)
    }

    /// The two possible outputs of the two-point mechanism, `(lower, upper)`.
    pub fn outputs(&self) -> (f64, f64) {
        let d = self.radius * self.spread();
        (self.center - d, self.center + d)
    }

    pub fn clip(&self, w: f64) -> f64 {
        w.clamp(self.center - self.radius, self.center + self.radius)
    }

    /// Probability that the two-point mechanism answers with the upper point.
    pub fn upper_probability(&self, w: f64) -> f64 {
        let x = self.clip(w) - self.center;
        (0.5 + x / (2.0 * self.radius * self.spread())).clamp(0.0, 1.0)
    }

    /// Worst-case ratio of output probabilities (or densities, for Laplace)
    /// over any two inputs of the clipping range.
    pub fn analytic_worst_case_ratio(&self) -> f64 {
        match self.mechanism {
            LdpMechanism::TwoPoint => {
                let hi = self.upper_probability(self.center + self.radius);
                let lo = self.upper_probability(self.center - self.radius);
                (hi / lo).max((1.0 - lo) / (1.0 - hi))
            }
            // Density ratio |x - a| vs |x - b| over scale 2r/ε is bounded by
            // exp(ε·|a - b| / 2r) <= e^ε.
            LdpMechanism::Laplace => exp(self.eps),
        }
    }
}

pub fn perturb_scalar<R: Rng + ?Sized>(w: f64, cfg: &LdpConfig, rng: &mut R) -> f64 {
    match cfg.mechanism {
        LdpMechanism::TwoPoint => {
            let (lower, upper) = cfg.outputs();
            let u: f64 = rng.random();
            if u < cfg.upper_probability(w) {
                upper
            } else {
                lower
            }
        }
        LdpMechanism::Laplace => {
            let scale = 2.0 * cfg.radius / cfg.eps;
            cfg.clip(w) + sample_laplace(scale, rng)
        }
    }
}

fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    // u in (-1/2, 1/2)
    let mut u: f64 = rng.random::<f64>() - 0.5;
    if u == -0.5 {
        u = 0.0;
    }
    let s = if u < 0.0 { -1.0 } else { 1.0 };
    -scale * s * log(1.0 - 2.0 * u.abs())
}

/// Perturbs every coordinate independently, drawing from one seeded stream.
pub fn perturb_gradients<R: Rng + ?Sized>(
    grads: &[f64],
    cfg: &LdpConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(grads.iter().map(|&g| perturb_scalar(g, cfg, rng)).collect())
}

/// Monte-Carlo estimate of the privacy-loss ratio between two inputs of the
/// two-point mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    /// `max(P[upper|v]/P[upper|v'], P[lower|v]/P[lower|v'])` over the
    /// outputs with a non-zero empirical denominator.
    pub ratio: f64,
    pub upper_ratio: Option<f64>,
    pub lower_ratio: Option<f64>,
    /// Delta-method standard error of `ratio`.
    pub stderr: f64,
    /// Some output never occurred for `v'`, so its ratio could not be formed.
    pub zero_denominator: bool,
    pub samples: usize,
}

pub fn empirical_ldp_ratio<R: Rng + ?Sized>(
    cfg: &LdpConfig,
    v: f64,
    v_prime: f64,
    samples: usize,
    rng: &mut R,
) -> Result<RatioEstimate> {
    cfg.validate()?;
    if cfg.mechanism != LdpMechanism::TwoPoint {
        return Err(Error::InvalidParams(
            "empirical ratio is defined for the two-point mechanism".into(),
        ));
    }
    let lo = cfg.center - cfg.radius;
    let hi = cfg.center + cfg.radius;
    if !(lo..=hi).contains(&v) || !(lo..=hi).contains(&v_prime) {
        return Err(Error::InvalidParams(alloc::format!(
            "inputs {v}, {v_prime} outside [{lo}, {hi}]"
        )));
    }
    if samples == 0 {
        return Err(Error::Empty("samples"));
    }
    let (_, upper) = cfg.outputs();
    let count_upper = |x: f64, rng: &mut R| {
        (0..samples)
            .filter(|_| perturb_scalar(x, cfg, rng) == upper)
            .count()
    };
    let a = count_upper(v, rng);
    let b = count_upper(v_prime, rng);
    let m = samples as f64;
    let ratio_of = |num: usize, den: usize| -> Option<(f64, f64)> {
        if den == 0 {
            return None;
        }
        let (p, q) = (num as f64 / m, den as f64 / m);
        let r = p / q;
        // Var(log r) ≈ (1-p)/(m p) + (1-q)/(m q)
        let var_log = if num == 0 {
            0.0
        } else {
            (1.0 - p) / (m * p) + (1.0 - q) / (m * q)
        };
        Some((r, r * libm::sqrt(var_log)))
    };
    let upper_est = ratio_of(a, b);
    let lower_est = ratio_of(samples - a, samples - b);
    let best = match (upper_est, lower_est) {
        (Some(x), Some(y)) => {
            if x.0 >= y.0 {
                x
            } else {
                y
            }
        }
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => (f64::NAN, f64::NAN),
    };
    Ok(RatioEstimate {
        ratio: best.0,
        upper_ratio: upper_est.map(|x| x.0),
        lower_ratio: lower_est.map(|x| x.0),
        stderr: best.1,
        zero_denominator: upper_est.is_none() || lower_est.is_none(),
        samples,
    })
}

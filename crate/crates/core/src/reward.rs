//! Reward catalog. Every kind depends only on the post-transition fillings.
//!
//! `QueueLenVariance` returns the population variance of the fillings with a
//! positive sign. Maximising it favours imbalance; it is kept for comparison
//! runs and should not be used as a load-balancing objective on its own.

use serde::{Deserialize, Serialize};

use crate::model::{Action, AugmentedState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardSpec {
    /// `-Σ b'_i`
    QueueLenLinear,
    /// `-Σ χ^{b'_i}`
    QueueLenExponential {
        #[serde(default = "default_chi")]
        chi: f64,
    },
    /// `Var(b'_1..b'_N)`, population convention
    QueueLenVariance,
    /// `-Σ b'_i / μ_i`
    Proportional,
    /// `-Σ 1(b'_i = b̄_i)`
    LossPenalty,
    /// `-Σ 1(b'_i = 0)`
    IdlePenalty,
    /// `-[Σ b'_i + κ Σ 1(b'_i = b̄_i)]`
    Combined {
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
}

fn default_chi() -> f64 {
    2.0
}

fn default_kappa() -> f64 {
    100.0
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec::Combined { kappa: default_kappa() }
    }
}

/// What a reward needs to know about one queue after a transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueLevel {
    pub filling: u32,
    pub capacity: u32,
    pub service_rate: f64,
}

impl QueueLevel {
    pub fn new(filling: u32, capacity: u32, service_rate: f64) -> Self {
        QueueLevel {
            filling,
            capacity,
            service_rate,
        }
    }

    fn full(&self) -> bool {
        self.filling >= self.capacity
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RewardSpec::QueueLenExponential { chi } if !(chi > 1.0 && chi.is_finite()) => {
                Err(Error::config("reward.chi", format!("must be > 1, got {chi}")))
            }
            RewardSpec::Combined { kappa } if !(kappa > 0.0 && kappa.is_finite()) => {
                Err(Error::config("reward.kappa", format!("must be > 0, got {kappa}")))
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, levels: impl IntoIterator<Item = QueueLevel>) -> f64 {
        let levels = levels.into_iter();
        match *self {
            RewardSpec::QueueLenLinear => -levels.map(|l| l.filling as f64).sum::<f64>(),
            RewardSpec::QueueLenExponential { chi } => -levels.map(|l| chi.powi(l.filling as i32)).sum::<f64>(),
            RewardSpec::QueueLenVariance => {
                let (n, sum, sum_sq) = levels.fold((0usize, 0.0, 0.0), |(n, s, q), l| {
                    let b = l.filling as f64;
                    (n + 1, s + b, q + b * b)
                });
                if n == 0 {
                    return 0.0;
                }
                let mean = sum / n as f64;
                (sum_sq / n as f64 - mean * mean).max(0.0)
            }
            RewardSpec::Proportional => -levels.map(|l| l.filling as f64 / l.service_rate).sum::<f64>(),
            RewardSpec::LossPenalty => -(levels.filter(QueueLevel::full).count() as f64),
            RewardSpec::IdlePenalty => -(levels.filter(|l| l.filling == 0).count() as f64),
            RewardSpec::Combined { kappa } => {
                let (jobs, full) =
                    levels.fold((0.0, 0usize), |(j, f), l| (j + l.filling as f64, f + l.full() as usize));
                -(jobs + kappa * full as f64)
            }
        }
    }

    pub fn evaluate_fillings(&self, fillings: &[u32], capacities: &[u32], service_rates: &[f64]) -> f64 {
        self.evaluate(
            fillings
                .iter()
                .zip(capacities)
                .zip(service_rates)
                .map(|((&b, &c), &mu)| QueueLevel::new(b, c, mu)),
        )
    }
}

/// `R(s', s, a)` for the configured kind. `state` and `action` are accepted for
/// interface symmetry; none of the catalog kinds read them.
pub fn reward(
    spec: &RewardSpec,
    next_state: &AugmentedState,
    _state: &AugmentedState,
    _action: Action,
    capacities: &[u32],
    service_rates: &[f64],
) -> f64 {
    spec.evaluate_fillings(&next_state.fillings(), capacities, service_rates)
}

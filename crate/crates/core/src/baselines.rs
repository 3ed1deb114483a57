//! Comparison routing rules.
//!
//! Full-information (FI) rules read the true queue fillings at the arrival
//! instant. Limited-information rules (JMO, JMO-E) only read the
//! acknowledgements that reached the balancer during the last inter-arrival
//! epoch. All ties are broken uniformly at random.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::Action;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrategyKind {
    Pol,
    JsqFi,
    DjsqFi { d: usize },
    SedFi,
    Jmo,
    JmoE { explore_prob: f64 },
}

pub const DEFAULT_DJSQ_D: usize = 2;
pub const DEFAULT_JMO_EXPLORE: f64 = 0.2;

impl StrategyKind {
    pub fn is_full_info(&self) -> bool {
        matches!(
            self,
            StrategyKind::JsqFi | StrategyKind::DjsqFi { .. } | StrategyKind::SedFi
        )
    }

    pub fn is_limited_info(&self) -> bool {
        matches!(self, StrategyKind::Jmo | StrategyKind::JmoE { .. })
    }

    pub fn validate(&self, n_queues: usize) -> Result<()> {
        match *self {
            StrategyKind::DjsqFi { d } if d == 0 || d > n_queues => Err(Error::config(
                "strategies",
                format!("djsq needs 1 <= d <= {n_queues}, got {d}"),
            )),
            StrategyKind::JmoE { explore_prob } if !(0.0..=1.0).contains(&explore_prob) => Err(Error::config(
                "strategies",
                format!("jmo-e explore probability {explore_prob} outside [0, 1]"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::Pol => f.write_str("pol"),
            StrategyKind::JsqFi => f.write_str("jsq"),
            StrategyKind::DjsqFi { d } if *d == DEFAULT_DJSQ_D => f.write_str("djsq"),
            StrategyKind::DjsqFi { d } => write!(f, "djsq:{d}"),
            StrategyKind::SedFi => f.write_str("sed"),
            StrategyKind::Jmo => f.write_str("jmo"),
            StrategyKind::JmoE { explore_prob } if *explore_prob == DEFAULT_JMO_EXPLORE => f.write_str("jmo-e"),
            StrategyKind::JmoE { explore_prob } => write!(f, "jmo-e:{explore_prob}"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    /// `pol`, `jsq`, `djsq[:d]`, `sed`, `jmo`, `jmo-e[:p]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = |why: String| Error::config("strategies", why);
        let kind = match (name.trim().to_ascii_lowercase().as_str(), arg) {
            ("pol", None) => StrategyKind::Pol,
            ("jsq", None) => StrategyKind::JsqFi,
            ("sed", None) => StrategyKind::SedFi,
            ("jmo", None) => StrategyKind::Jmo,
            ("djsq", d) => StrategyKind::DjsqFi {
                d: d.map(|d| d.trim().parse().map_err(|_| bad(format!("bad djsq d `{d}`"))))
                    .transpose()?
                    .unwrap_or(DEFAULT_DJSQ_D),
            },
            ("jmo-e", p) => StrategyKind::JmoE {
                explore_prob: p
                    .map(|p| {
                        p.trim()
                            .parse()
                            .map_err(|_| bad(format!("bad jmo-e probability `{p}`")))
                    })
                    .transpose()?
                    .unwrap_or(DEFAULT_JMO_EXPLORE),
            },
            _ => return Err(bad(format!("unknown strategy `{s}`"))),
        };
        Ok(kind)
    }
}

impl TryFrom<String> for StrategyKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StrategyKind> for String {
    fn from(k: StrategyKind) -> String {
        k.to_string()
    }
}

fn argmin_random<R: Rng + ?Sized>(candidates: impl Iterator<Item = (usize, f64)>, rng: &mut R) -> usize {
    let mut best = f64::INFINITY;
    let mut choice = None;
    let mut ties = 0u32;
    for (i, score) in candidates {
        if choice.is_none() || score < best {
            best = score;
            choice = Some(i);
            ties = 1;
        } else if score == best {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                choice = Some(i);
            }
        }
    }
    choice.expect("at least one candidate queue")
}

/// JSQ, DJSQ(d) or SED on the true fillings.
///
/// Panics if `kind` is not a full-information strategy.
pub fn decide_full_info<R: Rng + ?Sized>(
    kind: StrategyKind,
    fillings: &[u32],
    service_rates: &[f64],
    rng: &mut R,
) -> Action {
    let n = fillings.len();
    let chosen = match kind {
        StrategyKind::JsqFi => argmin_random(fillings.iter().map(|&b| b as f64).enumerate(), rng),
        StrategyKind::DjsqFi { d } => {
            let polled = index::sample(rng, n, d.min(n)).into_vec();
            argmin_random(polled.into_iter().map(|i| (i, fillings[i] as f64)), rng)
        }
        StrategyKind::SedFi => argmin_random(
            fillings
                .iter()
                .zip(service_rates)
                .map(|(&b, &mu)| b as f64 / mu)
                .enumerate(),
            rng,
        ),
        other => panic!("{other} is not a full-information strategy"),
    };
    Action(chosen)
}

/// What a limited-information strategy knows at an arrival.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitedInfoView<'a> {
    /// Acknowledgements received during the last inter-arrival epoch.
    pub last_epoch_acks: &'a [u32],
    /// Whether any job has ever been routed to the queue.
    pub ever_used: &'a [bool],
    /// Queue that received the previous job.
    pub last_routed: Option<usize>,
}

impl LimitedInfoView<'_> {
    /// Never used, or silent in the last epoch without having received the
    /// previous job.
    pub fn is_idle(&self, queue: usize) -> bool {
        !self.ever_used[queue] || (self.last_epoch_acks[queue] == 0 && self.last_routed != Some(queue))
    }
}

/// JMO or JMO-E.
///
/// Panics if `kind` is not a limited-information strategy.
pub fn decide_limited_info<R: Rng + ?Sized>(kind: StrategyKind, view: &LimitedInfoView<'_>, rng: &mut R) -> Action {
    let jmo = |rng: &mut R| {
        Action(argmin_random(
            view.last_epoch_acks.iter().map(|&a| -(a as f64)).enumerate(),
            rng,
        ))
    };
    match kind {
        StrategyKind::Jmo => jmo(rng),
        StrategyKind::JmoE { explore_prob } => {
            if explore_prob > 0.0 && rng.random::<f64>() < explore_prob {
                let idle: Vec<usize> = (0..view.last_epoch_acks.len()).filter(|&i| view.is_idle(i)).collect();
                if !idle.is_empty() {
                    return Action(idle[rng.random_range(0..idle.len())]);
                }
            }
            jmo(rng)
        }
        other => panic!("{other} is not a limited-information strategy"),
    }
}

//! Particle belief over the latent [`AugmentedState`] and its sequential
//! importance resampling update.
//!
//! Each update draws prior particles, pushes them through the generative
//! model under the action that was taken, and weights the successors by the
//! binomial likelihood of the real acknowledgement vector. Because the
//! observation fixes `y' = z` and `x' = min(b, k) + x - z` once the available
//! count is known, successors are stored with that bookkeeping applied rather
//! than with their own simulated acknowledgement draw.
//!
//! The acknowledgements of an epoch do not depend on where the job at its
//! end is routed, so the update also comes in two halves: [`sir_observe`]
//! conditions on `z` before the routing decision and [`Belief::route`] then
//! places the job in every particle.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{
    route_in_place, serve_in_place, serve_interval_in_place, Action, AugmentedState, ModelParams, Observation,
};
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    particles: Vec<AugmentedState>,
}

impl Belief {
    /// Panics on an empty particle list.
    pub fn new(particles: Vec<AugmentedState>) -> Self {
        assert!(!particles.is_empty(), "a belief needs at least one particle");
        Belief { particles }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[AugmentedState] {
        &self.particles
    }

    pub fn n_queues(&self) -> usize {
        self.particles[0].len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &AugmentedState {
        &self.particles[rng.random_range(0..self.particles.len())]
    }

    /// Places one job in queue `action` of every particle.
    pub fn route(&mut self, action: Action, model: &ModelParams) {
        for p in &mut self.particles {
            route_in_place(p, action, model);
        }
    }
}

/// `n_particles` copies of `initial`.
pub fn init_belief(n_particles: usize, initial: AugmentedState) -> Belief {
    assert!(n_particles >= 1, "n_particles must be positive");
    Belief::new(vec![initial; n_particles])
}

/// How much work one SIR update may spend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateBudget {
    Simulations(usize),
    WallClock(Duration),
}

const LN_FACT_TABLE: usize = 512;

fn ln_factorials() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for i in 1..LN_FACT_TABLE {
            acc += (i as f64).ln();
            t.push(acc);
        }
        t
    })
}

fn ln_choose(n: u32, k: u32) -> f64 {
    let table = ln_factorials();
    if (n as usize) < table.len() {
        return table[n as usize] - table[k as usize] - table[(n - k) as usize];
    }
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// `ln Bin(z; n, p)`, `-inf` when `z > n`.
pub fn binomial_log_pmf(z: u32, n: u32, p: f64) -> f64 {
    if z > n {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return if z == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let miss = n - z;
    let mut lp = ln_choose(n, z);
    if z > 0 {
        lp += z as f64 * p.ln();
    }
    if miss > 0 {
        lp += miss as f64 * (1.0 - p).ln();
    }
    lp
}

/// Log of [`observation_likelihood`].
pub fn log_observation_likelihood(available: &[u32], z: &Observation, ack_probabilities: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((&n, &obs), &p) in available.iter().zip(z.counts()).zip(ack_probabilities) {
        total += binomial_log_pmf(obs, n, p);
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    total
}

/// `p(z | s')`: product over queues of the `Bin(available_i, p_i)` pmf at `z_i`.
pub fn observation_likelihood(available: &[u32], z: &Observation, ack_probabilities: &[f64]) -> f64 {
    log_observation_likelihood(available, z, ack_probabilities).exp()
}

#[derive(Debug, Clone)]
pub struct SirUpdate {
    pub belief: Belief,
    /// Every propagated particle was inconsistent with the observation (or no
    /// simulation ran) and the fallback set was used instead.
    pub degenerate: bool,
    pub simulations: usize,
    /// Propagated particles with non-zero weight.
    pub accepted: usize,
}

/// Sequential importance resampling step for `(action, z)`.
///
/// The returned belief always has the same number of particles as the input.
/// If no propagated particle can explain `z`, the unweighted propagated set is
/// kept with `y' = z` and `x' = max(x' + y' - z, 0)`.
pub fn sir_update<R: Rng + ?Sized>(
    belief: &Belief,
    action: Action,
    z: &Observation,
    model: &ModelParams,
    budget: UpdateBudget,
    rng: &mut R,
) -> SirUpdate {
    sir_step(belief, None, Some(action), z, model, budget, rng)
}

/// The update for `z` alone: particles are served over one interval and
/// conditioned on `z`, but no job is routed. Following it with
/// [`Belief::route`] gives the same posterior as [`sir_update`].
///
/// When the length of the elapsed inter-arrival interval is known it is
/// used for every particle instead of a fresh draw from the arrival law.
pub fn sir_observe<R: Rng + ?Sized>(
    belief: &Belief,
    z: &Observation,
    interval: Option<f64>,
    model: &ModelParams,
    budget: UpdateBudget,
    rng: &mut R,
) -> SirUpdate {
    sir_step(belief, interval, None, z, model, budget, rng)
}

fn sir_step<R: Rng + ?Sized>(
    belief: &Belief,
    interval: Option<f64>,
    action: Option<Action>,
    z: &Observation,
    model: &ModelParams,
    budget: UpdateBudget,
    rng: &mut R,
) -> SirUpdate {
    let n = belief.len();
    let ack_p = model.ack_probabilities();
    let started = Instant::now();
    let mut candidates: Vec<AugmentedState> = Vec::new();
    let mut log_weights: Vec<f64> = Vec::new();
    let mut available = Vec::with_capacity(model.n_queues());
    // Given the interval, queues evolve independently and the posterior is a
    // product over queues, so each queue is resampled on its own weights.
    let factorized = interval.is_some() && model.n_queues() > 1;
    let mut queue_lw: Vec<f64> = Vec::new();

    let mut propagate = |prior: &AugmentedState, rng: &mut R| {
        let mut s = prior.clone();
        match interval {
            Some(u) => serve_interval_in_place(&mut s, u, model, rng, &mut available),
            None => serve_in_place(&mut s, model, rng, &mut available),
        }
        if let Some(a) = action {
            route_in_place(&mut s, a, model);
        }
        let lw = if factorized {
            let mut total = 0.0;
            for ((&n, &obs), &p) in available.iter().zip(z.counts()).zip(&ack_p) {
                let l = binomial_log_pmf(obs, n, p);
                queue_lw.push(l);
                total += l;
            }
            total
        } else {
            log_observation_likelihood(&available, z, &ack_p)
        };
        for ((slot, &avail), &obs) in s.slots_mut().iter_mut().zip(&available).zip(z.counts()) {
            slot.in_flight = avail.saturating_sub(obs);
            slot.observed = obs;
        }
        (s, lw)
    };

    match budget {
        UpdateBudget::Simulations(count) => {
            candidates.reserve(count);
            log_weights.reserve(count);
            // whole sweeps over the particles, random draws for the rest. Each
            // sweep is shuffled so systematic resampling cannot alias with
            // the storage order.
            let sweeps = count / n * n;
            let mut order: Vec<usize> = (0..n).collect();
            for j in 0..count {
                if j < sweeps && j % n == 0 {
                    order.shuffle(rng);
                }
                let prior = if j < sweeps {
                    &belief.particles[order[j % n]]
                } else {
                    belief.sample(rng)
                };
                let (s, lw) = propagate(prior, rng);
                candidates.push(s);
                log_weights.push(lw);
            }
        }
        UpdateBudget::WallClock(limit) => loop {
            if candidates.len().is_multiple_of(32) && started.elapsed() >= limit {
                break;
            }
            let prior = belief.sample(rng);
            let (s, lw) = propagate(prior, rng);
            candidates.push(s);
            log_weights.push(lw);
        },
    }
    let simulations = candidates.len();

    if simulations == 0 {
        log::debug!("sir_update: empty simulation budget, propagating prior unweighted");
        let propagated = belief.particles.iter().map(|p| propagate(p, rng).0).collect();
        return SirUpdate {
            belief: Belief::new(propagated),
            degenerate: true,
            simulations: 0,
            accepted: 0,
        };
    }

    let accepted = log_weights.iter().filter(|w| w.is_finite()).count();
    if factorized {
        let queues = model.n_queues();
        let mut degenerate = false;
        let mut particles: Vec<AugmentedState> = Vec::with_capacity(n);
        for i in 0..queues {
            let lw_i: Vec<f64> = queue_lw.iter().skip(i).step_by(queues).copied().collect();
            let max_i = lw_i.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = if max_i == f64::NEG_INFINITY {
                log::debug!(
                    "sir_update: queue {i}: all {simulations} propagated particles contradict z={}",
                    z.counts()[i]
                );
                degenerate = true;
                vec![1.0; simulations]
            } else {
                lw_i.iter().map(|lw| (lw - max_i).exp()).collect()
            };
            let mut picks = systematic_resample(&weights, n, rng);
            picks.shuffle(rng);
            if i == 0 {
                particles.extend(picks.iter().map(|&k| candidates[k].clone()));
            } else {
                for (particle, &k) in particles.iter_mut().zip(&picks) {
                    particle.slots_mut()[i] = candidates[k].slots()[i];
                }
            }
        }
        return SirUpdate {
            belief: Belief::new(particles),
            degenerate,
            simulations,
            accepted,
        };
    }

    let max_lw = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = max_lw == f64::NEG_INFINITY;
    let weights: Vec<f64> = if degenerate {
        log::debug!(
            "sir_update: all {simulations} propagated particles contradict z={:?}",
            z.counts()
        );
        vec![1.0; simulations]
    } else {
        log_weights.iter().map(|lw| (lw - max_lw).exp()).collect()
    };

    let picks = systematic_resample(&weights, n, rng);
    let particles = picks.into_iter().map(|i| candidates[i].clone()).collect();
    SirUpdate {
        belief: Belief::new(particles),
        degenerate,
        simulations,
        accepted,
    }
}

/// Low-variance resampling: `count` indices drawn proportionally to
/// `weights` (not necessarily normalised, at least one positive).
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "weights must have positive mass");
    let step = total / count as f64;
    let mut target = rng.random::<f64>() * step;
    let mut picks = Vec::with_capacity(count);
    let mut idx = 0;
    let mut cumulative = weights[0];
    for _ in 0..count {
        while cumulative < target && idx + 1 < weights.len() {
            idx += 1;
            cumulative += weights[idx];
        }
        picks.push(idx);
        target += step;
    }
    picks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueBeliefStats {
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

/// Per-queue mean and 10th/90th percentile of the believed filling.
pub fn belief_stats(belief: &Belief) -> Vec<QueueBeliefStats> {
    let n = belief.len() as f64;
    (0..belief.n_queues())
        .map(|q| {
            let mut values: Vec<f64> = belief.particles.iter().map(|p| p.slots()[q].filling as f64).collect();
            values.sort_by(f64::total_cmp);
            QueueBeliefStats {
                mean: values.iter().sum::<f64>() / n,
                p10: percentile_sorted(&values, 0.1),
                p90: percentile_sorted(&values, 0.9),
            }
        })
        .collect()
}

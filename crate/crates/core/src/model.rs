//! Queue-network state, duration distributions and the one-epoch generative
//! model used by the planner and the particle filter.
//!
//! An epoch is one inter-arrival interval. Within an epoch every queue can
//! serve `k_i` jobs, drawn by counting how many service times fit into the
//! interval. The routed job joins its queue after the departures of the
//! interval (a full queue drops it), and every acknowledgement that has not
//! yet reached the balancer is seen this epoch with probability `p_i`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Gamma, Pareto};
use serde::{Deserialize, Serialize};

use crate::reward::{QueueLevel, RewardSpec};
use crate::{Error, Result};

/// A positive duration distribution (seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Pareto { scale: f64, tail_index: f64 },
    Deterministic { value: f64 },
    Empirical { samples: Vec<f64> },
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Self {
        DistributionSpec::Exponential { rate }
    }

    pub fn deterministic(value: f64) -> Self {
        DistributionSpec::Deterministic { value }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be finite and > 0, got {v}")))
            }
        };
        match self {
            DistributionSpec::Exponential { rate } => positive("rate", *rate),
            DistributionSpec::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)
            }
            DistributionSpec::Pareto { scale, tail_index } => {
                positive("scale", *scale)?;
                positive("tail_index", *tail_index)
            }
            DistributionSpec::Deterministic { value } => positive("value", *value),
            DistributionSpec::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(Error::config("samples", "empirical sample list is empty"));
                }
                samples.iter().try_for_each(|s| positive("samples", *s))
            }
        }
    }

    /// Mean duration. Infinite for a Pareto law with tail index ≤ 1.
    pub fn mean(&self) -> f64 {
        match self {
            DistributionSpec::Exponential { rate } => 1.0 / rate,
            DistributionSpec::Gamma { shape, rate } => shape / rate,
            DistributionSpec::Pareto { scale, tail_index } => {
                if *tail_index > 1.0 {
                    scale * tail_index / (tail_index - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            DistributionSpec::Deterministic { value } => *value,
            DistributionSpec::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    /// Reciprocal mean, i.e. the event rate λ or μ_i.
    pub fn rate(&self) -> f64 {
        1.0 / self.mean()
    }

    /// The same family rescaled in time so that its mean becomes `new_mean`.
    pub fn scaled_to_mean(&self, new_mean: f64) -> Self {
        let factor = new_mean / self.mean();
        match self {
            DistributionSpec::Exponential { rate } => DistributionSpec::Exponential { rate: rate / factor },
            DistributionSpec::Gamma { shape, rate } => DistributionSpec::Gamma {
                shape: *shape,
                rate: rate / factor,
            },
            DistributionSpec::Pareto { scale, tail_index } => DistributionSpec::Pareto {
                scale: scale * factor,
                tail_index: *tail_index,
            },
            DistributionSpec::Deterministic { value } => DistributionSpec::Deterministic { value: value * factor },
            DistributionSpec::Empirical { samples } => DistributionSpec::Empirical {
                samples: samples.iter().map(|s| s * factor).collect(),
            },
        }
    }
}

/// A validated, ready-to-sample [`DistributionSpec`].
#[derive(Debug, Clone)]
pub struct DurationSampler {
    spec: DistributionSpec,
    inner: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Exponential(Exp<f64>),
    Gamma(Gamma<f64>),
    Pareto(Pareto<f64>),
    Fixed(f64),
    Empirical(Vec<f64>),
}

impl DurationSampler {
    pub fn new(spec: &DistributionSpec) -> Result<Self> {
        spec.validate()?;
        let bad = |e: &dyn std::fmt::Display| Error::config("distribution", e.to_string());
        let inner = match spec {
            DistributionSpec::Exponential { rate } => SamplerKind::Exponential(Exp::new(*rate).map_err(|e| bad(&e))?),
            DistributionSpec::Gamma { shape, rate } => {
                SamplerKind::Gamma(Gamma::new(*shape, 1.0 / rate).map_err(|e| bad(&e))?)
            }
            DistributionSpec::Pareto { scale, tail_index } => {
                SamplerKind::Pareto(Pareto::new(*scale, *tail_index).map_err(|e| bad(&e))?)
            }
            DistributionSpec::Deterministic { value } => SamplerKind::Fixed(*value),
            DistributionSpec::Empirical { samples } => SamplerKind::Empirical(samples.clone()),
        };
        Ok(DurationSampler {
            spec: spec.clone(),
            inner,
        })
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.inner {
            SamplerKind::Exponential(d) => d.sample(rng),
            SamplerKind::Gamma(d) => d.sample(rng),
            SamplerKind::Pareto(d) => d.sample(rng),
            SamplerKind::Fixed(v) => *v,
            SamplerKind::Empirical(samples) => samples[rng.random_range(0..samples.len())],
        }
    }

    /// Number of consecutive service times that fit into `interval`, stopping
    /// early once `cap` is reached.
    pub fn job_count_capped<R: Rng + ?Sized>(&self, interval: f64, cap: u32, rng: &mut R) -> u32 {
        if let SamplerKind::Fixed(v) = self.inner {
            let fits = (interval / v).floor();
            return if fits >= cap as f64 { cap } else { fits as u32 };
        }
        let mut elapsed = 0.0;
        let mut count = 0;
        while count < cap {
            elapsed += self.sample(rng);
            if elapsed > interval {
                break;
            }
            count += 1;
        }
        count
    }
}

/// Draws one duration from `sampler`.
pub fn sample_duration<R: Rng + ?Sized>(sampler: &DurationSampler, rng: &mut R) -> f64 {
    sampler.sample(rng)
}

/// `P(K = k)` for exponential inter-arrivals (rate `arrival_rate`) and
/// exponential service (rate `service_rate`): a geometric law on `{0, 1, ...}`
/// with success probability `λ / (λ + μ)`.
pub fn job_count_pmf_mm(arrival_rate: f64, service_rate: f64, k: u32) -> f64 {
    let total = arrival_rate + service_rate;
    (service_rate / total).powi(k as i32) * (arrival_rate / total)
}

/// Largest `j` such that the first `j` service times sum to at most
/// `inter_arrival`. No residual service carries over between calls.
pub fn sample_job_count<R: Rng + ?Sized>(service: &DurationSampler, inter_arrival: f64, rng: &mut R) -> u32 {
    service.job_count_capped(inter_arrival, u32::MAX, rng)
}

/// Number of the `available` outstanding acknowledgements that reach the
/// balancer this epoch: `Bin(available, p)`.
pub fn sample_ack_observation<R: Rng + ?Sized>(available: u32, p: f64, rng: &mut R) -> u32 {
    if p >= 1.0 || available == 0 {
        return available;
    }
    if available <= 32 {
        (0..available).filter(|_| rng.random::<f64>() < p).count() as u32
    } else {
        Binomial::new(available as u64, p)
            .expect("p validated in (0, 1]")
            .sample(rng) as u32
    }
}

/// Per-queue system description: buffer size, service law and per-epoch
/// acknowledgement probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueParams {
    pub buffer_capacity: u32,
    pub service: DistributionSpec,
    pub ack_probability: f64,
}

impl QueueParams {
    pub fn new(buffer_capacity: u32, service: DistributionSpec, ack_probability: f64) -> Self {
        QueueParams {
            buffer_capacity,
            service,
            ack_probability,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.buffer_capacity < 1 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        if !(self.ack_probability > 0.0 && self.ack_probability <= 1.0) {
            return Err(Error::config(
                "ack_probability",
                format!("must lie in (0, 1], got {}", self.ack_probability),
            ));
        }
        self.service.validate()
    }
}

/// Latent per-queue triple: filling `b`, in-flight (unseen) acknowledgements
/// `x`, and acknowledgements observed in the last epoch `y`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct QueueSlot {
    pub filling: u32,
    pub in_flight: u32,
    pub observed: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AugmentedState {
    slots: Vec<QueueSlot>,
}

impl AugmentedState {
    pub fn new(slots: Vec<QueueSlot>) -> Self {
        AugmentedState { slots }
    }

    /// The empty system with `n` queues.
    pub fn empty(n: usize) -> Self {
        AugmentedState {
            slots: vec![QueueSlot::default(); n],
        }
    }

    pub fn from_fillings(fillings: &[u32]) -> Self {
        AugmentedState {
            slots: fillings
                .iter()
                .map(|&filling| QueueSlot {
                    filling,
                    ..QueueSlot::default()
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[QueueSlot] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [QueueSlot] {
        &mut self.slots
    }

    pub fn fillings(&self) -> Vec<u32> {
        self.slots.iter().map(|s| s.filling).collect()
    }

    /// The observed part `y` of the state.
    pub fn observation(&self) -> Observation {
        Observation(self.slots.iter().map(|s| s.observed).collect())
    }

    pub fn is_valid_for(&self, model: &ModelParams) -> bool {
        self.slots.len() == model.queues.len()
            && self
                .slots
                .iter()
                .zip(&model.queues)
                .all(|(s, q)| s.filling <= q.capacity)
    }
}

/// Acknowledgement counts per queue seen by the balancer in one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Observation(pub Vec<u32>);

impl Observation {
    pub fn zeros(n: usize) -> Self {
        Observation(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }
}

/// Route the arriving job to queue `.0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(pub usize);

impl Action {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct QueueModel {
    pub capacity: u32,
    pub service: DurationSampler,
    pub ack_probability: f64,
    pub service_rate: f64,
}

/// The planner's world model: arrival law, per-queue parameters and reward.
/// It may differ from the parameters of the environment it is used against.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub arrival: DurationSampler,
    pub queues: Vec<QueueModel>,
    pub reward: RewardSpec,
}

impl ModelParams {
    pub fn new(arrival: &DistributionSpec, queues: &[QueueParams], reward: RewardSpec) -> Result<Self> {
        if queues.is_empty() {
            return Err(Error::config("queues", "at least one queue is required"));
        }
        reward.validate()?;
        let queues = queues
            .iter()
            .map(|q| {
                q.validate()?;
                Ok(QueueModel {
                    capacity: q.buffer_capacity,
                    service: DurationSampler::new(&q.service)?,
                    ack_probability: q.ack_probability,
                    service_rate: q.service.rate(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams {
            arrival: DurationSampler::new(arrival)?,
            queues,
            reward,
        })
    }

    pub fn n_queues(&self) -> usize {
        self.queues.len()
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.queues.iter().map(|q| q.capacity).collect()
    }

    pub fn service_rates(&self) -> Vec<f64> {
        self.queues.iter().map(|q| q.service_rate).collect()
    }

    pub fn ack_probabilities(&self) -> Vec<f64> {
        self.queues.iter().map(|q| q.ack_probability).collect()
    }

    pub(crate) fn reward_of(&self, state: &AugmentedState) -> f64 {
        self.reward.evaluate(
            state
                .slots
                .iter()
                .zip(&self.queues)
                .map(|(s, q)| QueueLevel::new(s.filling, q.capacity, q.service_rate)),
        )
    }
}

/// Result of one generative transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: AugmentedState,
    pub observation: Observation,
    pub reward: f64,
    /// `min(b_i, k_i) + x_i` of the transition, the number of acknowledgements
    /// that could have been seen. The particle filter weights against it.
    pub available: Vec<u32>,
    /// The routed job found its queue full after departures and was lost.
    pub dropped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub dropped: bool,
}

/// One draw from the generative model: `(s', z, R)` given `(s, a)`.
pub fn step_generative<R: Rng + ?Sized>(
    state: &AugmentedState,
    action: Action,
    model: &ModelParams,
    rng: &mut R,
) -> Transition {
    let mut next = state.clone();
    let mut available = Vec::with_capacity(state.len());
    let outcome = advance_in_place(&mut next, action, model, rng, &mut available);
    Transition {
        observation: next.observation(),
        state: next,
        reward: outcome.reward,
        available,
        dropped: outcome.dropped,
    }
}

/// [`step_generative`] with the per-queue service counts `k` given instead of
/// sampled. The inter-arrival time is not drawn.
pub fn step_with_job_counts<R: Rng + ?Sized>(
    state: &AugmentedState,
    action: Action,
    job_counts: &[u32],
    model: &ModelParams,
    rng: &mut R,
) -> Transition {
    assert_eq!(job_counts.len(), state.len(), "one job count per queue");
    let mut next = state.clone();
    let mut available = Vec::with_capacity(state.len());
    for ((slot, q), &k) in next.slots.iter_mut().zip(&model.queues).zip(job_counts) {
        serve_queue(slot, q, k, rng, &mut available);
    }
    let outcome = route_in_place(&mut next, action, model);
    Transition {
        observation: next.observation(),
        reward: outcome.reward,
        state: next,
        available,
        dropped: outcome.dropped,
    }
}

/// Allocation-free transition used in the search and filter hot loops.
/// `available` is overwritten with the per-queue available-ack counts.
///
/// Equivalent to [`serve_in_place`] followed by [`route_in_place`].
pub fn advance_in_place<R: Rng + ?Sized>(
    state: &mut AugmentedState,
    action: Action,
    model: &ModelParams,
    rng: &mut R,
    available: &mut Vec<u32>,
) -> StepOutcome {
    serve_in_place(state, model, rng, available);
    route_in_place(state, action, model)
}

/// Departures and acknowledgement draws over one sampled inter-arrival
/// interval, without placing a job.
pub fn serve_in_place<R: Rng + ?Sized>(
    state: &mut AugmentedState,
    model: &ModelParams,
    rng: &mut R,
    available: &mut Vec<u32>,
) {
    let interval = model.arrival.sample(rng);
    serve_interval_in_place(state, interval, model, rng, available);
}

/// [`serve_in_place`] over a given interval length.
pub fn serve_interval_in_place<R: Rng + ?Sized>(
    state: &mut AugmentedState,
    interval: f64,
    model: &ModelParams,
    rng: &mut R,
    available: &mut Vec<u32>,
) {
    debug_assert_eq!(state.len(), model.queues.len());
    available.clear();
    for (slot, q) in state.slots.iter_mut().zip(&model.queues) {
        // only min(b, k) matters, so counting can stop at b
        let k = q.service.job_count_capped(interval, slot.filling, rng);
        serve_queue(slot, q, k, rng, available);
    }
}

/// Places one job in queue `action` (lost if it is full) and scores the
/// resulting fillings.
pub fn route_in_place(state: &mut AugmentedState, action: Action, model: &ModelParams) -> StepOutcome {
    let slot = &mut state.slots[action.0];
    let dropped = slot.filling >= model.queues[action.0].capacity;
    if !dropped {
        slot.filling += 1;
    }
    StepOutcome {
        reward: model.reward_of(state),
        dropped,
    }
}

fn serve_queue<R: Rng + ?Sized>(
    slot: &mut QueueSlot,
    queue: &QueueModel,
    job_count: u32,
    rng: &mut R,
    available: &mut Vec<u32>,
) {
    let departed = slot.filling.min(job_count);
    let pending = departed + slot.in_flight;
    let seen = sample_ack_observation(pending, queue.ack_probability, rng);
    *slot = QueueSlot {
        filling: slot.filling - departed,
        in_flight: pending - seen,
        observed: seen,
    };
    available.push(pending);
}

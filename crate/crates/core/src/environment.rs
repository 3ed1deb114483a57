//! Ground-truth queueing network: N single-server FIFO queues with finite
//! buffers, served in continuous time with exact residual work.
//!
//! One epoch covers the inter-arrival interval that ends with a job arrival:
//! the servers work through the interval, every outstanding acknowledgement
//! is independently seen with probability `p_i`, and then the arriving job is
//! routed (and lost if its queue is full). This is the same ordering as the
//! generative model, so for exponential service the two agree in law.
//!
//! Random numbers come from [`CrnStreams`]: inter-arrival times are fixed per
//! run, and the j-th job admitted to queue i always receives the j-th draw of
//! that queue's service stream, whichever strategy is being replayed.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Action, DistributionSpec, DurationSampler, Observation, QueueParams};
use crate::reward::RewardSpec;
use crate::seed::{self, SimRng};
use crate::stats::percentile;
use crate::{Error, Result};

/// Everything needed to build one run of the real system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub arrival: DistributionSpec,
    pub queues: Vec<QueueParams>,
    pub reward: RewardSpec,
    /// Number of job arrivals in the run.
    pub jobs: usize,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.arrival.validate()?;
        if self.queues.is_empty() {
            return Err(Error::config("queues", "at least one queue is required"));
        }
        for q in &self.queues {
            q.validate()?;
        }
        self.reward.validate()?;
        if self.jobs == 0 {
            return Err(Error::config("t_e", "must be at least 1"));
        }
        Ok(())
    }
}

/// Lazily extended service-requirement stream of one queue.
#[derive(Debug, Clone)]
pub struct ServiceStream {
    sampler: DurationSampler,
    rng: SimRng,
    drawn: Vec<f64>,
}

impl ServiceStream {
    fn next(&mut self) -> f64 {
        let v = self.sampler.sample(&mut self.rng);
        self.drawn.push(v);
        v
    }

    /// Requirements handed out so far, in admission order.
    pub fn drawn(&self) -> &[f64] {
        &self.drawn
    }
}

/// Common random numbers of one run.
#[derive(Debug, Clone)]
pub struct CrnStreams {
    inter_arrivals: Vec<f64>,
    service: Vec<ServiceStream>,
    ack_coins: Vec<SimRng>,
}

impl CrnStreams {
    pub fn new(config: &EnvConfig, run_seed: u64) -> Result<Self> {
        let arrival = DurationSampler::new(&config.arrival)?;
        let mut arrivals_rng = seed::stream(run_seed, "arrivals", 0);
        let inter_arrivals = (0..config.jobs).map(|_| arrival.sample(&mut arrivals_rng)).collect();
        let service = config
            .queues
            .iter()
            .enumerate()
            .map(|(i, q)| {
                Ok(ServiceStream {
                    sampler: DurationSampler::new(&q.service)?,
                    rng: seed::stream(run_seed, "service", i as u64),
                    drawn: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ack_coins = (0..config.queues.len())
            .map(|i| seed::stream(run_seed, "acks", i as u64))
            .collect();
        Ok(CrnStreams {
            inter_arrivals,
            service,
            ack_coins,
        })
    }

    pub fn inter_arrivals(&self) -> &[f64] {
        &self.inter_arrivals
    }

    pub fn service(&self, queue: usize) -> &ServiceStream {
        &self.service[queue]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Job {
    arrival_time: f64,
    requirement: f64,
    remaining: f64,
}

#[derive(Debug, Clone)]
struct EnvQueue {
    jobs: VecDeque<Job>,
    capacity: u32,
    ack_probability: f64,
    service_rate: f64,
    ack_pool: u32,
    routed: u64,
    dropped: u64,
    completed: u64,
    acks_observed: u64,
}

/// Bookkeeping of one queue; `routed = in_queue + completed` and
/// `completed = acks_observed + ack_pool` hold at all times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueCounters {
    pub routed: u64,
    pub dropped: u64,
    pub in_queue: u64,
    pub completed: u64,
    pub acks_observed: u64,
    pub ack_pool: u32,
}

/// What the balancer sees when a job arrives.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    /// Length of the inter-arrival interval that just ended.
    pub interval: f64,
    /// Acknowledgements received during that interval.
    pub acks: Observation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutcome {
    pub dropped: bool,
    pub reward: f64,
    pub fillings: Vec<u32>,
}

/// What one full epoch (`step_env`) returns.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub observation: Observation,
    /// True fillings after the arriving job was routed.
    pub fillings: Vec<u32>,
    pub reward: f64,
    pub dropped: bool,
}

/// Planner bookkeeping attached to a run, when the strategy plans.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlannerStats {
    pub simulations: u64,
    pub mean_tree_size: f64,
    pub degenerate_updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub jobs_arrived: u64,
    pub jobs_dropped: u64,
    /// `jobs_dropped / jobs_arrived`; NaN for a run without arrivals.
    pub drop_rate: f64,
    /// Completion minus arrival time of every completed job.
    pub response_times: Vec<f64>,
    /// Jobs still queued when the run ended; neither dropped nor completed.
    pub residual_jobs: u64,
    pub cumulative_reward: f64,
    pub reward_trace: Vec<f64>,
    /// Seconds spent per routing decision.
    pub decision_latencies: Vec<f64>,
    pub planner: Option<PlannerStats>,
}

impl RunMetrics {
    pub fn mean_response(&self) -> f64 {
        if self.response_times.is_empty() {
            return f64::NAN;
        }
        self.response_times.iter().sum::<f64>() / self.response_times.len() as f64
    }

    pub fn p95_response(&self) -> f64 {
        percentile(&self.response_times, 0.95)
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    queues: Vec<EnvQueue>,
    streams: CrnStreams,
    reward: RewardSpec,
    clock: f64,
    consumed: usize,
    awaiting_route: bool,
    jobs_arrived: u64,
    jobs_dropped: u64,
    response_times: Vec<f64>,
    reward_trace: Vec<f64>,
}

/// Empty network at time 0 with streams seeded from `run_seed`.
pub fn make_env(config: &EnvConfig, run_seed: u64) -> Result<Environment> {
    config.validate()?;
    let streams = CrnStreams::new(config, run_seed)?;
    let queues = config
        .queues
        .iter()
        .map(|q| EnvQueue {
            jobs: VecDeque::with_capacity(q.buffer_capacity as usize),
            capacity: q.buffer_capacity,
            ack_probability: q.ack_probability,
            service_rate: q.service.rate(),
            ack_pool: 0,
            routed: 0,
            dropped: 0,
            completed: 0,
            acks_observed: 0,
        })
        .collect();
    Ok(Environment {
        queues,
        streams,
        reward: config.reward,
        clock: 0.0,
        consumed: 0,
        awaiting_route: false,
        jobs_arrived: 0,
        jobs_dropped: 0,
        response_times: Vec::with_capacity(config.jobs),
        reward_trace: Vec::with_capacity(config.jobs),
    })
}

impl Environment {
    pub fn n_queues(&self) -> usize {
        self.queues.len()
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn jobs_arrived(&self) -> u64 {
        self.jobs_arrived
    }

    pub fn remaining_arrivals(&self) -> usize {
        self.streams.inter_arrivals.len() - self.consumed
    }

    /// `None` until the first job has arrived.
    pub fn drop_rate(&self) -> Option<f64> {
        (self.jobs_arrived > 0).then(|| self.jobs_dropped as f64 / self.jobs_arrived as f64)
    }

    pub fn fillings(&self) -> Vec<u32> {
        self.queues.iter().map(|q| q.jobs.len() as u32).collect()
    }

    pub fn service_rates(&self) -> Vec<f64> {
        self.queues.iter().map(|q| q.service_rate).collect()
    }

    pub fn streams(&self) -> &CrnStreams {
        &self.streams
    }

    pub fn counters(&self, queue: usize) -> QueueCounters {
        let q = &self.queues[queue];
        QueueCounters {
            routed: q.routed,
            dropped: q.dropped,
            in_queue: q.jobs.len() as u64,
            completed: q.completed,
            acks_observed: q.acks_observed,
            ack_pool: q.ack_pool,
        }
    }

    /// Serves the next inter-arrival interval, thins the acknowledgement
    /// pools and returns the acknowledgements seen. The job that arrives at
    /// the end of the interval must then be placed with [`Environment::route`].
    pub fn next_arrival(&mut self) -> Result<Arrival> {
        assert!(!self.awaiting_route, "previous arrival has not been routed");
        let Some(&interval) = self.streams.inter_arrivals.get(self.consumed) else {
            return Err(Error::EndOfRun(self.consumed));
        };
        self.consumed += 1;
        let start = self.clock;
        let end = start + interval;
        for q in &mut self.queues {
            let mut t = start;
            while let Some(job) = q.jobs.front_mut() {
                let finish = t + job.remaining;
                if finish <= end {
                    t = finish;
                    self.response_times.push(finish - job.arrival_time);
                    q.jobs.pop_front();
                    q.completed += 1;
                    q.ack_pool += 1;
                } else {
                    job.remaining -= end - t;
                    break;
                }
            }
        }
        self.clock = end;

        let mut seen = Vec::with_capacity(self.queues.len());
        for (q, coins) in self.queues.iter_mut().zip(&mut self.streams.ack_coins) {
            let z = if q.ack_probability >= 1.0 {
                q.ack_pool
            } else {
                (0..q.ack_pool)
                    .filter(|_| coins.random::<f64>() < q.ack_probability)
                    .count() as u32
            };
            q.ack_pool -= z;
            q.acks_observed += z as u64;
            seen.push(z);
        }
        self.jobs_arrived += 1;
        self.awaiting_route = true;
        Ok(Arrival {
            interval,
            acks: Observation(seen),
        })
    }

    /// Places the pending arrival in queue `action`, dropping it if the
    /// buffer is full, and scores the resulting fillings.
    pub fn route(&mut self, action: Action) -> RouteOutcome {
        assert!(self.awaiting_route, "no pending arrival to route");
        self.awaiting_route = false;
        let clock = self.clock;
        let q = &mut self.queues[action.0];
        let dropped = q.jobs.len() as u32 >= q.capacity;
        if dropped {
            q.dropped += 1;
            self.jobs_dropped += 1;
        } else {
            let requirement = self.streams.service[action.0].next();
            q.jobs.push_back(Job {
                arrival_time: clock,
                requirement,
                remaining: requirement,
            });
            q.routed += 1;
        }
        let fillings = self.fillings();
        let reward = self.reward.evaluate(
            self.queues
                .iter()
                .zip(&fillings)
                .map(|(q, &b)| crate::reward::QueueLevel::new(b, q.capacity, q.service_rate)),
        );
        self.reward_trace.push(reward);
        RouteOutcome {
            dropped,
            reward,
            fillings,
        }
    }

    /// One epoch: serve the interval, observe, route the arriving job.
    pub fn step_env(&mut self, action: Action) -> Result<EpochOutcome> {
        let arrival = self.next_arrival()?;
        let routed = self.route(action);
        Ok(EpochOutcome {
            observation: arrival.acks,
            fillings: routed.fillings,
            reward: routed.reward,
            dropped: routed.dropped,
        })
    }

    /// Aggregates the run. Jobs still queued are reported as residual.
    pub fn finalize(self) -> RunMetrics {
        let residual_jobs = self.queues.iter().map(|q| q.jobs.len() as u64).sum();
        let drop_rate = if self.jobs_arrived == 0 {
            f64::NAN
        } else {
            self.jobs_dropped as f64 / self.jobs_arrived as f64
        };
        RunMetrics {
            jobs_arrived: self.jobs_arrived,
            jobs_dropped: self.jobs_dropped,
            drop_rate,
            response_times: self.response_times,
            residual_jobs,
            cumulative_reward: self.reward_trace.iter().sum(),
            reward_trace: self.reward_trace,
            decision_latencies: Vec::new(),
            planner: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::job_count_pmf_mm;
    use proptest::prelude::*;

    fn config(arrival: DistributionSpec, queues: Vec<QueueParams>, jobs: usize) -> EnvConfig {
        EnvConfig {
            arrival,
            queues,
            reward: RewardSpec::default(),
            jobs,
        }
    }

    fn exp_config(n: usize, p: f64, jobs: usize) -> EnvConfig {
        let q = QueueParams::new(10, DistributionSpec::exponential(4.0), p);
        config(DistributionSpec::exponential(5.0), vec![q; n], jobs)
    }

    #[test]
    fn seeded_streams() {
        let c = exp_config(2, 0.6, 100);
        let a = make_env(&c, 7).unwrap();
        let b = make_env(&c, 7).unwrap();
        let d = make_env(&c, 8).unwrap();
        assert_eq!(a.streams().inter_arrivals(), b.streams().inter_arrivals());
        assert_ne!(a.streams().inter_arrivals(), d.streams().inter_arrivals());
        assert_eq!(a.jobs_arrived(), 0);
        assert_eq!(a.drop_rate(), None);
    }

    #[test]
    fn underloaded_deterministic_response() {
        let q = QueueParams::new(10, DistributionSpec::deterministic(1.0), 1.0);
        let c = config(DistributionSpec::deterministic(2.0), vec![q], 50);
        let mut env = make_env(&c, 1).unwrap();
        while env.step_env(Action(0)).is_ok() {}
        let m = env.finalize();
        assert_eq!(m.response_times.len(), 49);
        assert!(m.response_times.iter().all(|&r| r == 1.0));
        assert_eq!(m.drop_rate, 0.0);
        assert_eq!(m.residual_jobs, 1);
    }

    #[test]
    fn full_buffer_drops() {
        let q = QueueParams::new(1, DistributionSpec::deterministic(10.0), 1.0);
        let c = config(DistributionSpec::deterministic(1.0), vec![q], 5);
        let mut env = make_env(&c, 1).unwrap();
        let first = env.step_env(Action(0)).unwrap();
        assert!(!first.dropped);
        for _ in 0..4 {
            let o = env.step_env(Action(0)).unwrap();
            assert!(o.dropped);
            assert_eq!(o.fillings, vec![1]);
        }
        assert!(matches!(env.step_env(Action(0)), Err(Error::EndOfRun(5))));
        let m = env.finalize();
        assert_eq!(m.jobs_dropped, 4);
        assert_eq!(m.drop_rate, 0.8);
    }

    #[test]
    fn stalled_sink_drops_everything_after_first() {
        let q = QueueParams::new(1, DistributionSpec::deterministic(1e12), 1.0);
        let c = config(DistributionSpec::exponential(5.0), vec![q], 1000);
        let mut env = make_env(&c, 3).unwrap();
        while env.step_env(Action(0)).is_ok() {}
        let m = env.finalize();
        assert_eq!(m.jobs_dropped, 999);
        assert!(m.response_times.is_empty());
    }

    #[test]
    fn no_delay_empties_pool() {
        let c = exp_config(3, 1.0, 500);
        let mut env = make_env(&c, 4).unwrap();
        for t in 0..500 {
            let before: Vec<u64> = (0..3).map(|i| env.counters(i).completed).collect();
            let o = env.step_env(Action(t % 3)).unwrap();
            for (i, done) in before.iter().enumerate() {
                let c = env.counters(i);
                assert_eq!(c.ack_pool, 0);
                assert_eq!(o.observation.0[i] as u64, c.completed - done);
            }
        }
    }

    #[test]
    fn reward_uses_post_routing_fillings() {
        let c = exp_config(2, 0.6, 10);
        let mut env = make_env(&c, 5).unwrap();
        let o = env.step_env(Action(1)).unwrap();
        assert_eq!(o.fillings, vec![0, 1]);
        assert_eq!(o.reward, -1.0);
    }

    #[test]
    fn crn_shared_across_routing() {
        let c = exp_config(3, 0.6, 400);
        let mut a = make_env(&c, 9).unwrap();
        let mut b = make_env(&c, 9).unwrap();
        for t in 0..400 {
            a.step_env(Action(t % 3)).unwrap();
            b.step_env(Action([2, 1, 0, 0, 0][t % 5])).unwrap();
        }
        assert_eq!(a.streams().inter_arrivals(), b.streams().inter_arrivals());
        for i in 0..3 {
            let (x, y) = (a.streams().service(i).drawn(), b.streams().service(i).drawn());
            let k = x.len().min(y.len());
            assert!(k > 0);
            assert_eq!(x[..k], y[..k]);
        }
    }

    #[test]
    fn busy_server_completions_are_geometric() {
        // overloaded single queue with a practically unbounded buffer never idles
        let q = QueueParams::new(1_000_000, DistributionSpec::exponential(4.0), 1.0);
        let c = config(DistributionSpec::exponential(5.0), vec![q], 100_200);
        let mut env = make_env(&c, 10).unwrap();
        let mut hist = vec![0u64; 64];
        let mut counted = 0u64;
        for t in 0..100_200 {
            let busy = env.fillings()[0] > 0;
            let o = env.step_env(Action(0)).unwrap();
            if t >= 200 {
                assert!(busy);
                hist[(o.observation.0[0] as usize).min(63)] += 1;
                counted += 1;
            }
        }
        let tv: f64 = 0.5
            * hist
                .iter()
                .enumerate()
                .map(|(k, &h)| (h as f64 / counted as f64 - job_count_pmf_mm(5.0, 4.0, k as u32)).abs())
                .sum::<f64>();
        assert!(tv < 0.02, "tv {tv}");
    }

    proptest! {
        #[test]
        fn conservation_and_clock(seed in any::<u64>(), p in 0.05f64..=1.0, actions in prop::collection::vec(0usize..3, 1..300)) {
            let c = exp_config(3, p, actions.len());
            let mut env = make_env(&c, seed).unwrap();
            let mut clock = 0.0;
            for (t, &a) in actions.iter().enumerate() {
                env.step_env(Action(a)).unwrap();
                clock += env.streams().inter_arrivals()[t];
                prop_assert_eq!(env.clock(), clock);
                for i in 0..3 {
                    let q = env.counters(i);
                    prop_assert_eq!(q.routed, q.in_queue + q.completed);
                    prop_assert_eq!(q.completed, q.acks_observed + q.ack_pool as u64);
                    prop_assert!(q.in_queue <= 10);
                }
            }
            let arrived = env.jobs_arrived();
            let m = env.finalize();
            prop_assert_eq!(arrived, actions.len() as u64);
            prop_assert_eq!(m.response_times.len() as u64 + m.residual_jobs + m.jobs_dropped, arrived);
            prop_assert!(m.response_times.iter().all(|&r| r > 0.0));
        }
    }
}

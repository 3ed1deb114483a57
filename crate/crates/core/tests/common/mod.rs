#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use polb::belief::{binomial_log_pmf, init_belief, sir_update, Belief, UpdateBudget};
use polb::experiment::ExperimentConfig;
use polb::model::{step_generative, QueueSlot};
use polb::seed::rng_from;
use polb::{Action, AugmentedState, DistributionSpec, ModelParams, QueueParams, RewardSpec};

pub fn two_server_config(overrides: &[&str]) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/two_server.toml");
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::load(&path, &overrides).unwrap()
}

/// A cheap two-queue experiment writing to `dir`.
pub fn small_config(dir: &Path, strategies: &str) -> ExperimentConfig {
    let text = format!(
        r#"
n_queues = 2
arrival = {{ kind = "exponential", rate = 5.0 }}
strategies = {strategies}
t_m = 4
t_e = 300
base_seed = 11
output_dir = "{}"
heatmap = true
trace_belief = true

[planner]
n_simulations = 40
n_particles = 100

[[queues]]
buffer_capacity = 6
ack_probability = 0.6
service = {{ kind = "exponential", rate = 4.0 }}

[[queues]]
buffer_capacity = 6
ack_probability = 0.6
service = {{ kind = "exponential", rate = 2.0 }}
"#,
        dir.display()
    );
    ExperimentConfig::from_toml(&text, &[]).unwrap()
}

/// Asserts that two result directories hold the same files with the same
/// bytes. `config.toml` records the output directory and is skipped.
pub fn assert_same_results(a: &Path, b: &Path) {
    let (ta, tb) = (read_tree(a), read_tree(b));
    let names = |t: &[(PathBuf, Vec<u8>)]| t.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    assert_eq!(names(&ta), names(&tb));
    for ((name, x), (_, y)) in ta.iter().zip(&tb) {
        if name.as_os_str() != "config.toml" {
            assert!(x == y, "{} differs", name.display());
        }
    }
}

/// Sorted `(name, bytes)` of every file below `dir`.
pub fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

pub fn tv<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut total = 0.0;
    for (k, pa) in a {
        total += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, pb) in b {
        if !a.contains_key(k) {
            total += pb;
        }
    }
    total / 2.0
}

/// Departures of one epoch in [`SmallChain`].
#[derive(Debug, Clone, Copy)]
pub enum Departures {
    /// Exactly `min(b, k)` jobs leave: one per epoch with unit inter-arrival
    /// times and service time 0.9.
    ForcedOne,
    /// `Poisson(μ)` capped at the filling: exponential service at rate `μ`.
    Poisson(f64),
}

/// One queue, `b̄ = 2`, unit-length epochs.
pub struct SmallChain {
    pub model: ModelParams,
    pub departures: Departures,
    pub p: f64,
    pub cap: u32,
}

impl SmallChain {
    pub fn new(departures: Departures, p: f64) -> Self {
        let service = match departures {
            Departures::ForcedOne => DistributionSpec::deterministic(0.9),
            Departures::Poisson(mu) => DistributionSpec::exponential(mu),
        };
        let q = QueueParams::new(2, service, p);
        let model = ModelParams::new(&DistributionSpec::deterministic(1.0), &[q], RewardSpec::QueueLenLinear).unwrap();
        SmallChain {
            model,
            departures,
            p,
            cap: 2,
        }
    }

    fn law(&self, b: u32) -> Vec<f64> {
        match self.departures {
            Departures::ForcedOne => {
                let mut pk = vec![0.0; b as usize + 1];
                pk[b.min(1) as usize] = 1.0;
                pk
            }
            Departures::Poisson(mu) => {
                let poisson = |k: u32| (-mu).exp() * mu.powi(k as i32) / (1..=k).product::<u32>() as f64;
                let mut pk: Vec<f64> = (0..b).map(poisson).collect();
                pk.push(1.0 - pk.iter().sum::<f64>());
                pk
            }
        }
    }

    /// Exact filter over `(b, x)`: serve, condition on `z`, route.
    pub fn exact_update(&self, prior: &BTreeMap<(u32, u32), f64>, z: u32) -> BTreeMap<(u32, u32), f64> {
        let mut post = BTreeMap::new();
        for (&(b, x), &w) in prior {
            for (k, pk) in self.law(b).into_iter().enumerate() {
                let avail = k as u32 + x;
                let lik = pk * binomial_log_pmf(z, avail, self.p).exp();
                if lik == 0.0 {
                    continue;
                }
                let b_next = (b - k as u32 + 1).min(self.cap);
                *post.entry((b_next, avail - z)).or_insert(0.0) += w * lik;
            }
        }
        let total: f64 = post.values().sum();
        post.values_mut().for_each(|v| *v /= total);
        post
    }

    pub fn empirical(belief: &Belief) -> BTreeMap<(u32, u32), f64> {
        let mut out = BTreeMap::new();
        let n = belief.len() as f64;
        for p in belief.particles() {
            let s = p.slots()[0];
            *out.entry((s.filling, s.in_flight)).or_insert(0.0) += 1.0 / n;
        }
        out
    }

    /// Particles spread evenly over `b ∈ {0, 1, 2}`, `x ∈ {0..=max_x}`.
    pub fn grid_prior(&self, particles: usize, max_x: u32) -> Belief {
        let grid: Vec<(u32, u32)> = (0..=self.cap).flat_map(|b| (0..=max_x).map(move |x| (b, x))).collect();
        Belief::new(
            (0..particles)
                .map(|i| {
                    let (b, x) = grid[i % grid.len()];
                    AugmentedState::new(vec![QueueSlot {
                        filling: b,
                        in_flight: x,
                        observed: 0,
                    }])
                })
                .collect(),
        )
    }

    /// TV between the particle filter and the exact filter after each of
    /// `epochs` updates along one simulated trajectory. The truth starts
    /// from a particle of `prior`.
    pub fn tv_path(&self, prior: Belief, epochs: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        let particles = prior.len();
        let mut truth = prior.sample(&mut rng).clone();
        let mut exact = Self::empirical(&prior);
        let mut belief = prior;
        let mut path = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let t = step_generative(&truth, Action(0), &self.model, &mut rng);
            truth = t.state;
            let z = t.observation;
            belief = sir_update(
                &belief,
                Action(0),
                &z,
                &self.model,
                UpdateBudget::Simulations(particles),
                &mut rng,
            )
            .belief;
            exact = self.exact_update(&exact, z.counts()[0]);
            path.push(tv(&Self::empirical(&belief), &exact));
        }
        path
    }
}

pub fn empty_prior(particles: usize) -> Belief {
    init_belief(particles, AugmentedState::empty(1))
}

//! The environment as an M/M/1 queue: simulated mean response time against
//! `1 / (mu - lambda)`.

use polb::environment::{make_env, EnvConfig};
use polb::{Action, DistributionSpec, QueueParams, RewardSpec};

fn main() {
    let mu = 4.0;
    for lambda in [1.0, 2.0, 3.0] {
        let config = EnvConfig {
            arrival: DistributionSpec::exponential(lambda),
            queues: vec![QueueParams::new(200, DistributionSpec::exponential(mu), 1.0)],
            reward: RewardSpec::default(),
            jobs: 200_000,
        };
        let mut env = make_env(&config, 2).unwrap();
        while env.step_env(Action(0)).is_ok() {}
        let m = env.finalize();
        println!(
            "lambda {lambda}: mean response {:.4}, theory {:.4}, p95 {:.4}",
            m.mean_response(),
            1.0 / (mu - lambda),
            m.p95_response()
        );
    }
}

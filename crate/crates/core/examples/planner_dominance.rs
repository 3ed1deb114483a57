//! One planning decision with a fast and a stalled server. With enough
//! simulations the search sends the job to the fast one.

use polb::belief::init_belief;
use polb::planner::{plan, PlannerParams};
use polb::seed::rng_from;
use polb::{Action, AugmentedState, DistributionSpec, ModelParams, QueueParams, RewardSpec};

fn main() {
    let queues = [
        QueueParams::new(10, DistributionSpec::deterministic(0.01), 0.6),
        QueueParams::new(10, DistributionSpec::deterministic(1e9), 0.6),
    ];
    let model = ModelParams::new(
        &DistributionSpec::exponential(5.0),
        &queues,
        RewardSpec::Combined { kappa: 100.0 },
    )
    .unwrap();
    let belief = init_belief(1000, AugmentedState::from_fillings(&[3, 3]));
    for sims in [5, 20, 100, 500] {
        let params = PlannerParams {
            n_simulations: sims,
            uct_c: 10.0,
            gamma: 0.8,
            ..PlannerParams::default()
        };
        let fast = (0..50)
            .filter(|&s| plan(&belief, &model, &params, &mut rng_from(s)) == Action(0))
            .count();
        println!("{sims:4} simulations: fast server chosen {fast}/50");
    }
}

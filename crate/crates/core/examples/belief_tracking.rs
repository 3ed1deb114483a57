//! Particle belief following a two-queue system routed round-robin, for a
//! prompt and a sluggish acknowledgement channel.

use polb::belief::{belief_stats, init_belief, sir_observe, UpdateBudget};
use polb::environment::{make_env, EnvConfig};
use polb::seed::rng_from;
use polb::{Action, AugmentedState, DistributionSpec, ModelParams, QueueParams, RewardSpec};

fn track(p: f64) {
    let queues = vec![
        QueueParams::new(10, DistributionSpec::exponential(4.0), p),
        QueueParams::new(10, DistributionSpec::exponential(2.0), p),
    ];
    let arrival = DistributionSpec::exponential(5.0);
    let model = ModelParams::new(&arrival, &queues, RewardSpec::default()).unwrap();
    let config = EnvConfig {
        arrival,
        queues,
        reward: RewardSpec::default(),
        jobs: 400,
    };
    let mut env = make_env(&config, 3).unwrap();
    let mut belief = init_belief(1000, AugmentedState::empty(2));
    let mut rng = rng_from(4);

    let mut error = 0.0;
    let mut t = 0;
    while let Ok(arrival) = env.next_arrival() {
        let update = sir_observe(
            &belief,
            &arrival.acks,
            Some(arrival.interval),
            &model,
            UpdateBudget::Simulations(1000),
            &mut rng,
        );
        belief = update.belief;
        let action = Action(t % 2);
        belief.route(action, &model);
        let truth = env.route(action).fillings;
        let stats = belief_stats(&belief);
        error += stats
            .iter()
            .zip(&truth)
            .map(|(s, &b)| (s.mean - b as f64).abs())
            .sum::<f64>()
            / 2.0;
        if t % 80 == 0 {
            println!(
                "  t={t:3} truth {truth:?}  belief means [{:.2}, {:.2}]  10-90% [{}-{}, {}-{}]",
                stats[0].mean, stats[1].mean, stats[0].p10, stats[0].p90, stats[1].p10, stats[1].p90
            );
        }
        t += 1;
    }
    println!("p = {p}: mean |belief - truth| = {:.3}\n", error / t as f64);
}

fn main() {
    track(1.0);
    track(0.1);
}

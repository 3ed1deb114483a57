//! Every reward in the catalog evaluated on a few three-queue states.

use polb::reward::QueueLevel;
use polb::RewardSpec;

fn main() {
    let caps = [5, 5, 10];
    let rates = [4.0, 2.0, 1.0];
    let rewards = [
        ("linear", RewardSpec::QueueLenLinear),
        ("exponential", RewardSpec::QueueLenExponential { chi: 2.0 }),
        ("variance", RewardSpec::QueueLenVariance),
        ("proportional", RewardSpec::Proportional),
        ("loss", RewardSpec::LossPenalty),
        ("idle", RewardSpec::IdlePenalty),
        ("combined", RewardSpec::Combined { kappa: 100.0 }),
    ];
    let states: [[u32; 3]; 4] = [[0, 0, 0], [1, 2, 3], [5, 0, 2], [5, 5, 10]];

    print!("{:>13}", "");
    for s in &states {
        print!("{:>14}", format!("{s:?}"));
    }
    println!();
    for (name, r) in &rewards {
        print!("{name:>13}");
        for s in &states {
            let levels = (0..3).map(|i| QueueLevel::new(s[i], caps[i], rates[i]));
            print!("{:>14.3}", r.evaluate(levels) + 0.0);
        }
        println!();
    }
}

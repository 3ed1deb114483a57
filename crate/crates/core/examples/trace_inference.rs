//! Conjugate fit of an arrival rate from a trace of inter-arrival times and
//! the predictive law handed to the planner.

use std::io::Write;

use polb::inference::{fit_exponential, load_trace, predictive_spec, GammaPosterior};
use polb::model::DurationSampler;
use polb::seed::rng_from;
use polb::DistributionSpec;

fn main() {
    let mut rng = rng_from(21);
    let truth = DurationSampler::new(&DistributionSpec::exponential(3.0)).unwrap();
    let path = std::env::temp_dir().join("polb_trace.txt");
    let mut file = std::fs::File::create(&path).unwrap();
    writeln!(file, "# inter-arrival times, seconds").unwrap();
    for _ in 0..500 {
        writeln!(file, "{}", truth.sample(&mut rng)).unwrap();
    }
    drop(file);

    let data = load_trace(&path, None).unwrap();
    let mut post = GammaPosterior::new(1.0, 1.0).unwrap();
    for chunk in data.chunks(100) {
        post = fit_exponential(chunk, post).unwrap();
        println!(
            "alpha {:6.1}  beta {:7.3}  rate mean {:.3}  predictive mean gap {:.4}",
            post.alpha,
            post.beta,
            post.rate_mean(),
            post.predictive_mean()
        );
    }
    let spec = predictive_spec(&post, 1000, &mut rng);
    println!("planner arrival law mean {:.4} (true 1/3)", spec.mean());
}

//! Number of services that fit into one inter-arrival interval, sampled and
//! compared with the closed form for exponential arrivals and services.

use polb::model::{job_count_pmf_mm, sample_job_count, DurationSampler};
use polb::seed::rng_from;
use polb::DistributionSpec;

fn main() {
    let (lambda, mu) = (5.0, 4.0);
    let arrival = DurationSampler::new(&DistributionSpec::exponential(lambda)).unwrap();
    let service = DurationSampler::new(&DistributionSpec::exponential(mu)).unwrap();
    let mut rng = rng_from(1);

    let n = 200_000;
    let mut hist = [0u64; 8];
    for _ in 0..n {
        let k = sample_job_count(&service, arrival.sample(&mut rng), &mut rng) as usize;
        hist[k.min(7)] += 1;
    }
    println!(" k  sampled   exact");
    for (k, &c) in hist.iter().enumerate().take(7) {
        println!(
            "{k:2}  {:.5}  {:.5}",
            c as f64 / n as f64,
            job_count_pmf_mm(lambda, mu, k as u32)
        );
    }
}

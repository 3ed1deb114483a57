//! Median drop rates of the baselines across offered loads on five identical
//! queues.

use polb::experiment::{sweep, ExperimentConfig};

const CONFIG: &str = r#"
n_queues = 5
arrival = { kind = "exponential", rate = 1.0 }
strategies = ["jsq", "sed", "djsq", "jmo", "jmo-e"]
t_m = 5
t_e = 2000
base_seed = 7
write_response_times = false

[[queues]]
buffer_capacity = 5
ack_probability = 0.5
service = { kind = "exponential", rate = 1.0 }
"#;

fn main() {
    let out = std::env::temp_dir().join("polb_load_sweep");
    let overrides = [format!("output_dir=\"{}\"", out.display())];
    let config = ExperimentConfig::from_toml(CONFIG, &overrides).unwrap();
    let etas = [0.5, 0.8, 1.0, 1.2];
    let points = sweep(&config, &etas).unwrap();

    print!("{:>6}", "eta");
    for row in &points[0].1 {
        print!("{:>10}", row.strategy);
    }
    println!();
    for (eta, rows) in &points {
        print!("{eta:>6.2}");
        for row in rows {
            print!("{:>10.4}", row.drop_rate_median);
        }
        println!();
    }
    println!("per-run rows in {}", out.join("sweep.csv").display());
}

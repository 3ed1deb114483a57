//! The two-server experiment at reduced size, all strategies on common
//! random numbers. Pass a run count to change the default of 4.
//!
//!     cargo run --release --example two_server_comparison -- 10

use std::path::Path;

use polb::experiment::{render_summary, run_experiment, ExperimentConfig};

fn main() {
    let runs = std::env::args().nth(1).unwrap_or_else(|| "4".into());
    let out = std::env::temp_dir().join("polb_two_server");
    let overrides = [
        format!("t_m={runs}"),
        "t_e=500".into(),
        format!("output_dir=\"{}\"", out.display()),
    ];
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/two_server.toml");
    let config = ExperimentConfig::load(&path, &overrides).unwrap();
    let result = run_experiment(&config).unwrap();
    print!("{}", render_summary(&result.summary));
    println!("results in {}", out.display());
}

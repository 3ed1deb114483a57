//! Arrival-rate inference from observed inter-arrival times.
//!
//! With exponential inter-arrival times of unknown rate `m` and a
//! `Gamma(α₀, β₀)` prior on `m`, the posterior after data `d₁..dₙ` is
//! `Gamma(α₀ + n, β₀ + Σ dⱼ)`. The posterior predictive of the next
//! inter-arrival time is a Pareto law translated to start at zero,
//! `P(D* > d) = (β / (β + d))^α`, sampled here as the compound
//! `m ~ Gamma(α, β)`, `D* ~ Exp(m)`.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::model::DistributionSpec;
use crate::{Error, Result};

/// Gamma law on the arrival rate, shape `alpha`, rate `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaPosterior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(GammaPosterior { alpha, beta })
    }

    /// Nearly flat prior, `α₀ = β₀ = 1e-6`.
    pub fn vague() -> Self {
        GammaPosterior {
            alpha: 1e-6,
            beta: 1e-6,
        }
    }

    /// Posterior mean of the rate, `α / β`.
    pub fn rate_mean(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Mean of the predictive inter-arrival time, `β / (α − 1)`; infinite
    /// for `α ≤ 1`.
    pub fn predictive_mean(&self) -> f64 {
        if self.alpha <= 1.0 {
            f64::INFINITY
        } else {
            self.beta / (self.alpha - 1.0)
        }
    }
}

/// Conjugate update of `prior` with exponential observations `data`.
pub fn fit_exponential(data: &[f64], prior: GammaPosterior) -> Result<GammaPosterior> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if let Some(&value) = data.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::NonPositiveObservation { value });
    }
    Ok(GammaPosterior {
        alpha: prior.alpha + data.len() as f64,
        beta: prior.beta + data.iter().sum::<f64>(),
    })
}

/// One draw from the posterior predictive.
pub fn posterior_predictive_sample<R: Rng + ?Sized>(post: &GammaPosterior, rng: &mut R) -> f64 {
    let gamma = Gamma::new(post.alpha, 1.0 / post.beta).expect("valid posterior");
    loop {
        let m: f64 = gamma.sample(rng);
        if m > 0.0 {
            let d = Exp::new(m).expect("positive rate").sample(rng);
            if d > 0.0 {
                return d;
            }
        }
    }
}

/// Arrival law for the planner: `n` predictive draws resampled uniformly.
pub fn predictive_spec<R: Rng + ?Sized>(post: &GammaPosterior, n: usize, rng: &mut R) -> DistributionSpec {
    assert!(n > 0);
    DistributionSpec::Empirical {
        samples: (0..n).map(|_| posterior_predictive_sample(post, rng)).collect(),
    }
}

fn parse_positive(field: &str, path: &Path, line: usize) -> Result<f64> {
    let bad = |reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| bad(format!("`{}` is not a number", field.trim())))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(bad(format!("duration {v} is not strictly positive")));
    }
    Ok(v)
}

/// Reads durations in seconds.
///
/// Without `column` the file holds one number per line; blank lines and
/// lines starting with `#` are skipped. With `column` the file is a CSV
/// with a header row and the named column is read.
pub fn load_trace(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let Some(column) = column else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            out.push(parse_positive(line, path, i + 1)?);
        }
        return Ok(out);
    };

    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
    let idx = headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("no column named `{column}`"),
        })?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = record.get(idx).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("missing column `{column}`"),
        })?;
        out.push(parse_positive(field, path, line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::*;
    use std::io::Write;

    fn exp_data(rate: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        let e = Exp::new(rate).unwrap();
        (0..n).map(|_| e.sample(&mut rng)).collect()
    }

    #[test]
    fn two_point_update() {
        let post = fit_exponential(&[1.0, 2.0], GammaPosterior::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(post, GammaPosterior { alpha: 3.0, beta: 4.0 });
        assert_eq!(post.rate_mean(), 0.75);
    }

    #[test]
    fn rejects_bad_data() {
        let prior = GammaPosterior::vague();
        assert!(matches!(fit_exponential(&[], prior), Err(Error::EmptyData)));
        assert!(matches!(
            fit_exponential(&[1.0, 0.0], prior),
            Err(Error::NonPositiveObservation { value }) if value == 0.0
        ));
        assert!(GammaPosterior::new(0.0, 1.0).is_err());
    }

    #[test]
    fn recovers_rate() {
        let post = fit_exponential(&exp_data(5.0, 10_000, 1), GammaPosterior::new(1.0, 1.0).unwrap()).unwrap();
        assert!((post.rate_mean() / 5.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn predictive_mean_monte_carlo() {
        let post = GammaPosterior::new(3.0, 4.0).unwrap();
        let mut rng = rng_from(2);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| posterior_predictive_sample(&post, &mut rng)).collect();
        assert!(draws.iter().all(|&d| d > 0.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        // Lomax variance β²α / ((α−1)²(α−2)) = 12
        let (a, b) = (post.alpha, post.beta);
        let var = b * b * a / ((a - 1.0).powi(2) * (a - 2.0));
        let se = (var / n as f64).sqrt();
        assert!((mean - post.predictive_mean()).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn concentrated_posterior_is_exponential() {
        let post = GammaPosterior::new(1e6, 2e5).unwrap();
        let mut rng = rng_from(3);
        let n = 400_000;
        let mean = (0..n)
            .map(|_| posterior_predictive_sample(&post, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean / 0.2 - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn vague_prior_tracks_empirical_mean() {
        let data = exp_data(5.0, 10_000, 4);
        let empirical = data.iter().sum::<f64>() / data.len() as f64;
        let post = fit_exponential(&data, GammaPosterior::vague()).unwrap();
        assert!((post.predictive_mean() / empirical - 1.0).abs() < 0.05);
    }

    #[test]
    fn predictive_spec_is_valid() {
        let post = GammaPosterior::new(30.0, 6.0).unwrap();
        let spec = predictive_spec(&post, 1000, &mut rng_from(5));
        spec.validate().unwrap();
        assert!((spec.mean() / post.predictive_mean() - 1.0).abs() < 0.15);
    }

    #[test]
    fn plain_trace() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "0.1\n0.2\n").unwrap();
        assert_eq!(load_trace(f.path(), None).unwrap(), vec![0.1, 0.2]);

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "-1").unwrap();
        assert!(matches!(load_trace(g.path(), None), Err(Error::Parse { line: 1, .. })));

        let mut h = tempfile::NamedTempFile::new().unwrap();
        write!(h, "0.5\n\nabc\n").unwrap();
        assert!(matches!(load_trace(h.path(), None), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn csv_column_trace() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "job,interarrival\n1,0.25\n2,0.5\n3,0\n").unwrap();
        match load_trace(f.path(), Some("interarrival")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let mut g = tempfile::NamedTempFile::new().unwrap();
        write!(g, "job,interarrival\n1,0.25\n2,0.5\n").unwrap();
        assert_eq!(load_trace(g.path(), Some("interarrival")).unwrap(), vec![0.25, 0.5]);
        assert!(load_trace(g.path(), Some("service")).is_err());
    }

    #[test]
    fn synthetic_trace_end_to_end() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for d in exp_data(5.0, 10_000, 6) {
            writeln!(f, "{d}").unwrap();
        }
        let data = load_trace(f.path(), None).unwrap();
        let post = fit_exponential(&data, GammaPosterior::new(1.0, 1.0).unwrap()).unwrap();
        assert!((post.rate_mean() / 5.0 - 1.0).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn update_is_associative(
            a in prop::collection::vec(0.001f64..10.0, 1..50),
            b in prop::collection::vec(0.001f64..10.0, 1..50),
        ) {
            let prior = GammaPosterior::new(2.0, 0.5).unwrap();
            let split = fit_exponential(&b, fit_exponential(&a, prior).unwrap()).unwrap();
            let joint: Vec<f64> = a.iter().chain(&b).copied().collect();
            let whole = fit_exponential(&joint, prior).unwrap();
            prop_assert_eq!(split.alpha, whole.alpha);
            prop_assert!((split.beta - whole.beta).abs() <= 1e-12 * whole.beta);
        }
    }
}

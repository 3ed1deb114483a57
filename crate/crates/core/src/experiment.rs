//! Experiment harness: configuration, CRN-coupled replay of every strategy
//! over `t_m` runs of `t_e` jobs, CSV output and summaries.
//!
//! Run `r` draws its arrival, service and acknowledgement streams from
//! `base_seed + r`, so every strategy faces the same jobs. Decision
//! randomness comes from a separate seed derived from
//! `(base_seed, r, strategy)`.
//!
//! Output files, all with 9 significant digits:
//!
//! | file | columns |
//! |---|---|
//! | `runs.csv` | run_id, strategy, seed, eta, jobs_arrived, jobs_dropped, drop_rate, mean_response, p95_response, cumulative_reward |
//! | `response_times.csv` | run_id, strategy, response_time |
//! | `belief_trace_run{r}.csv` | epoch, queue, true_b, belief_mean, belief_p10, belief_p90 |
//! | `policy_heatmap_{strategy}.csv` | b1, b2, action, count |
//! | `summary.csv` | strategy, runs, drop_rate_median, drop_rate_p05, drop_rate_p95, mean_response, mean_cumulative_reward |

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::StrategyKind;
use crate::belief::belief_stats;
use crate::environment::{make_env, EnvConfig, RunMetrics};
use crate::model::{DistributionSpec, ModelParams, QueueParams};
use crate::planner::PlannerParams;
use crate::policy::{make_policy, ArrivalView};
use crate::reward::RewardSpec;
use crate::seed;
use crate::stats::{fmt_sig9, mean, percentile, quantize};
use crate::{Error, Result};

fn default_t_m() -> usize {
    20
}

fn default_t_e() -> usize {
    2000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

/// Experiment description, read from TOML.
///
/// `queues` may hold a single entry, which then applies to every queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_queues: usize,
    pub arrival: DistributionSpec,
    pub queues: Vec<QueueParams>,
    #[serde(default)]
    pub reward: RewardSpec,
    #[serde(default)]
    pub planner: PlannerParams,
    /// Arrival law assumed by the planner; the true law when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner_arrival: Option<DistributionSpec>,
    pub strategies: Vec<StrategyKind>,
    #[serde(default = "default_t_m")]
    pub t_m: usize,
    #[serde(default = "default_t_e")]
    pub t_e: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Index of the first run, for splitting an experiment into shards.
    #[serde(default)]
    pub first_run: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_true")]
    pub write_response_times: bool,
    #[serde(default)]
    pub trace_belief: bool,
    /// Per-state action counts; two-queue systems only.
    #[serde(default)]
    pub heatmap: bool,
}

/// Parses `raw` as a TOML value, falling back to a plain string.
fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let mut root = toml::Value::Table(std::mem::take(table));
    let mut node = &mut root;
    for part in &path {
        node = child(node, key, part)?;
    }
    *node = parse_override_value(raw.trim());
    let toml::Value::Table(t) = root else { unreachable!() };
    *table = t;
    Ok(())
}

/// The entry `part` of a table (created if missing) or, when `part` is an
/// index, an element of an array (`queues.1.ack_probability`).
fn child<'a>(value: &'a mut toml::Value, key: &str, part: &str) -> Result<&'a mut toml::Value> {
    match value {
        toml::Value::Table(t) => Ok(t
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))),
        toml::Value::Array(items) => {
            let len = items.len();
            let idx: usize = part
                .parse()
                .map_err(|_| Error::config(key, format!("`{part}` is not an array index")))?;
            items
                .get_mut(idx)
                .ok_or_else(|| Error::config(key, format!("index {idx} out of range for {len} entries")))
        }
        _ => Err(Error::config(key, format!("cannot descend into `{part}`"))),
    }
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides (dotted keys reach
    /// into tables) and validates the result.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_queues < 1 {
            return Err(Error::config("n_queues", "must be at least 1"));
        }
        if self.queues.len() != 1 && self.queues.len() != self.n_queues {
            return Err(Error::config(
                "queues",
                format!("expected 1 or {} entries, got {}", self.n_queues, self.queues.len()),
            ));
        }
        self.arrival.validate()?;
        if let Some(a) = &self.planner_arrival {
            a.validate()?;
        }
        for q in &self.queues {
            q.validate()?;
        }
        self.reward.validate()?;
        self.planner.validate()?;
        if self.strategies.is_empty() {
            return Err(Error::config("strategies", "at least one strategy is required"));
        }
        let mut seen = HashSet::new();
        for s in &self.strategies {
            s.validate(self.n_queues)?;
            if !seen.insert(s.to_string()) {
                return Err(Error::config("strategies", format!("`{s}` listed twice")));
            }
        }
        if self.t_m < 1 {
            return Err(Error::config("t_m", "must be at least 1"));
        }
        if self.t_e < 1 {
            return Err(Error::config("t_e", "must be at least 1"));
        }
        if self.heatmap && self.n_queues != 2 {
            return Err(Error::config("heatmap", "only available for n_queues = 2"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }

    pub fn resolved_queues(&self) -> Vec<QueueParams> {
        if self.queues.len() == 1 {
            vec![self.queues[0].clone(); self.n_queues]
        } else {
            self.queues.clone()
        }
    }

    /// Offered load `λ / Σ μ_i`.
    pub fn eta(&self) -> f64 {
        let mu: f64 = self.resolved_queues().iter().map(|q| q.service.rate()).sum();
        self.arrival.rate() / mu
    }

    /// Copy with the arrival law (and the planner's, if set) rescaled in
    /// time so that the offered load becomes `eta`.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::config("eta", format!("must be finite and > 0, got {eta}")));
        }
        let mu: f64 = self.resolved_queues().iter().map(|q| q.service.rate()).sum();
        let target_mean = 1.0 / (eta * mu);
        let factor = target_mean / self.arrival.mean();
        let mut out = self.clone();
        out.arrival = self.arrival.scaled_to_mean(target_mean);
        out.planner_arrival = self
            .planner_arrival
            .as_ref()
            .map(|a| a.scaled_to_mean(a.mean() * factor));
        Ok(out)
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            arrival: self.arrival.clone(),
            queues: self.resolved_queues(),
            reward: self.reward,
            jobs: self.t_e,
        }
    }

    /// The planner's world model.
    pub fn model_params(&self) -> Result<ModelParams> {
        let arrival = self.planner_arrival.as_ref().unwrap_or(&self.arrival);
        ModelParams::new(arrival, &self.resolved_queues(), self.reward)
    }

    pub fn run_ids(&self) -> std::ops::Range<usize> {
        self.first_run..self.first_run + self.t_m
    }
}

/// Seed of the decision randomness of one strategy in one run.
pub fn decision_seed(base_seed: u64, run_id: usize, strategy: StrategyKind) -> u64 {
    seed::derive(
        seed::derive(base_seed, "decisions", run_id as u64),
        &strategy.to_string(),
        0,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefRow {
    pub epoch: usize,
    pub queue: usize,
    pub true_b: u32,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

/// One strategy replayed on one run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: usize,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub belief_trace: Vec<BeliefRow>,
    /// `(b1, b2, action) -> count` on the fillings seen at each arrival.
    pub heatmap: BTreeMap<(u32, u32, usize), u64>,
}

/// Replays `strategy` on run `run_id`.
pub fn run_single(config: &ExperimentConfig, run_id: usize, strategy: StrategyKind) -> Result<RunRecord> {
    let run_seed = config.base_seed.wrapping_add(run_id as u64);
    let mut env = make_env(&config.env_config(), run_seed)?;
    let model = config.model_params()?;
    let rng = seed::rng_from(decision_seed(config.base_seed, run_id, strategy));
    let mut policy = make_policy(strategy, &model, &config.planner, rng);
    let rates = env.service_rates();
    let mut latencies = Vec::with_capacity(config.t_e);
    let mut belief_trace = Vec::new();
    let mut heatmap = BTreeMap::new();
    let mut epoch = 0;
    loop {
        let arrival = match env.next_arrival() {
            Ok(a) => a,
            Err(Error::EndOfRun(_)) => break,
            Err(e) => return Err(e),
        };
        let fillings = env.fillings();
        let started = Instant::now();
        let action = policy.decide(&ArrivalView {
            fillings: &fillings,
            service_rates: &rates,
            acks: &arrival.acks,
            interval: arrival.interval,
        });
        let routed = env.route(action);
        policy.observe(action, &arrival.acks);
        latencies.push(started.elapsed().as_secs_f64());

        if config.heatmap {
            *heatmap.entry((fillings[0], fillings[1], action.0)).or_insert(0) += 1;
        }
        if config.trace_belief {
            if let Some(belief) = policy.belief() {
                for (queue, s) in belief_stats(belief).into_iter().enumerate() {
                    belief_trace.push(BeliefRow {
                        epoch,
                        queue,
                        true_b: routed.fillings[queue],
                        mean: s.mean,
                        p10: s.p10,
                        p90: s.p90,
                    });
                }
            }
        }
        epoch += 1;
    }
    let mut metrics = env.finalize();
    metrics.decision_latencies = latencies;
    metrics.planner = policy.planner_stats();
    Ok(RunRecord {
        run_id,
        strategy,
        seed: run_seed,
        metrics,
        belief_trace,
        heatmap,
    })
}

/// One row of `runs.csv`, with every real quantised to 9 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: usize,
    pub strategy: String,
    pub seed: u64,
    pub eta: f64,
    pub jobs_arrived: u64,
    pub jobs_dropped: u64,
    pub drop_rate: f64,
    pub mean_response: f64,
    pub p95_response: f64,
    pub cumulative_reward: f64,
}

const RUN_HEADER: [&str; 10] = [
    "run_id",
    "strategy",
    "seed",
    "eta",
    "jobs_arrived",
    "jobs_dropped",
    "drop_rate",
    "mean_response",
    "p95_response",
    "cumulative_reward",
];

impl RunRow {
    pub fn from_record(record: &RunRecord, eta: f64) -> Self {
        let m = &record.metrics;
        RunRow {
            run_id: record.run_id,
            strategy: record.strategy.to_string(),
            seed: record.seed,
            eta: quantize(eta),
            jobs_arrived: m.jobs_arrived,
            jobs_dropped: m.jobs_dropped,
            drop_rate: quantize(m.drop_rate),
            mean_response: quantize(m.mean_response()),
            p95_response: quantize(m.p95_response()),
            cumulative_reward: quantize(m.cumulative_reward),
        }
    }

    fn fields(&self) -> [String; 10] {
        [
            self.run_id.to_string(),
            self.strategy.clone(),
            self.seed.to_string(),
            fmt_sig9(self.eta),
            self.jobs_arrived.to_string(),
            self.jobs_dropped.to_string(),
            fmt_sig9(self.drop_rate),
            fmt_sig9(self.mean_response),
            fmt_sig9(self.p95_response),
            fmt_sig9(self.cumulative_reward),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub runs: usize,
    pub drop_rate_median: f64,
    pub drop_rate_p05: f64,
    pub drop_rate_p95: f64,
    pub mean_response: f64,
    pub mean_cumulative_reward: f64,
}

const SUMMARY_HEADER: [&str; 7] = [
    "strategy",
    "runs",
    "drop_rate_median",
    "drop_rate_p05",
    "drop_rate_p95",
    "mean_response",
    "mean_cumulative_reward",
];

/// Per-strategy aggregates, in order of first appearance after sorting the
/// rows by run id. The result does not depend on the order of `rows`
/// within a run.
pub fn summarize_rows(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&RunRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.run_id);
    let mut order: Vec<&str> = Vec::new();
    for r in &sorted {
        if !order.contains(&r.strategy.as_str()) {
            order.push(&r.strategy);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let mine: Vec<&RunRow> = sorted.iter().copied().filter(|r| r.strategy == name).collect();
            let drops: Vec<f64> = mine.iter().map(|r| r.drop_rate).collect();
            let responses: Vec<f64> = mine.iter().map(|r| r.mean_response).collect();
            let rewards: Vec<f64> = mine.iter().map(|r| r.cumulative_reward).collect();
            SummaryRow {
                strategy: name.to_string(),
                runs: mine.len(),
                drop_rate_median: quantize(percentile(&drops, 0.5)),
                drop_rate_p05: quantize(percentile(&drops, 0.05)),
                drop_rate_p95: quantize(percentile(&drops, 0.95)),
                mean_response: quantize(mean(&responses)),
                mean_cumulative_reward: quantize(mean(&rewards)),
            }
        })
        .collect()
}

/// Fixed-width table for the terminal.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>5} {:>12} {:>25} {:>14} {:>16}",
        "strategy", "runs", "drop median", "drop [p05, p95]", "mean resp", "mean reward"
    );
    for r in rows {
        let band = format!("[{}, {}]", fmt_sig9(r.drop_rate_p05), fmt_sig9(r.drop_rate_p95));
        let _ = writeln!(
            out,
            "{:<12} {:>5} {:>12} {:>25} {:>14} {:>16}",
            r.strategy,
            r.runs,
            fmt_sig9(r.drop_rate_median),
            band,
            fmt_sig9(r.mean_response),
            fmt_sig9(r.mean_cumulative_reward),
        );
    }
    out
}

/// Everything produced by [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub rows: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn write_csv<I, R>(path: &Path, header: &[&str], records: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in records {
        w.write_record(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn file_label(strategy: &str) -> String {
    strategy
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    write_csv(
        path,
        &SUMMARY_HEADER,
        summary.iter().map(|s| {
            [
                s.strategy.clone(),
                s.runs.to_string(),
                fmt_sig9(s.drop_rate_median),
                fmt_sig9(s.drop_rate_p05),
                fmt_sig9(s.drop_rate_p95),
                fmt_sig9(s.mean_response),
                fmt_sig9(s.mean_cumulative_reward),
            ]
        }),
    )
}

fn write_outputs(
    config: &ExperimentConfig,
    records: &[RunRecord],
    rows: &[RunRow],
    summary: &[SummaryRow],
) -> Result<()> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_path = dir.join("config.toml");
    fs::write(&config_path, config.to_toml()).map_err(|e| Error::io(&config_path, e))?;

    write_csv(&dir.join("runs.csv"), &RUN_HEADER, rows.iter().map(RunRow::fields))?;

    if config.write_response_times {
        write_csv(
            &dir.join("response_times.csv"),
            &["run_id", "strategy", "response_time"],
            records.iter().flat_map(|rec| {
                let name = rec.strategy.to_string();
                rec.metrics
                    .response_times
                    .iter()
                    .map(move |&t| [rec.run_id.to_string(), name.clone(), fmt_sig9(t)])
            }),
        )?;
    }

    if config.trace_belief {
        for rec in records.iter().filter(|r| !r.belief_trace.is_empty()) {
            write_csv(
                &dir.join(format!("belief_trace_run{}.csv", rec.run_id)),
                &["epoch", "queue", "true_b", "belief_mean", "belief_p10", "belief_p90"],
                rec.belief_trace.iter().map(|b| {
                    [
                        b.epoch.to_string(),
                        b.queue.to_string(),
                        b.true_b.to_string(),
                        fmt_sig9(b.mean),
                        fmt_sig9(b.p10),
                        fmt_sig9(b.p90),
                    ]
                }),
            )?;
        }
    }

    if config.heatmap {
        for strategy in &config.strategies {
            let mut counts: BTreeMap<(u32, u32, usize), u64> = BTreeMap::new();
            for rec in records.iter().filter(|r| r.strategy == *strategy) {
                for (k, v) in &rec.heatmap {
                    *counts.entry(*k).or_insert(0) += v;
                }
            }
            write_csv(
                &dir.join(format!("policy_heatmap_{}.csv", file_label(&strategy.to_string()))),
                &["b1", "b2", "action", "count"],
                counts
                    .iter()
                    .map(|(&(b1, b2, a), &c)| [b1.to_string(), b2.to_string(), a.to_string(), c.to_string()]),
            )?;
        }
    }

    write_summary(&dir.join("summary.csv"), summary)
}

/// Runs every `(run, strategy)` pair on a pool of `config.workers` threads
/// and writes the result files. Output does not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let workers = config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let units: Vec<(usize, StrategyKind)> = config
        .run_ids()
        .flat_map(|r| config.strategies.iter().map(move |&s| (r, s)))
        .collect();
    log::info!(
        "running {} runs x {} strategies on {workers} worker(s)",
        config.t_m,
        config.strategies.len()
    );
    let records = pool.install(|| {
        units
            .par_iter()
            .map(|&(r, s)| {
                let rec = run_single(config, r, s);
                if let Ok(rec) = &rec {
                    log::debug!("run {r} {s}: drop rate {}", rec.metrics.drop_rate);
                }
                rec
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let eta = config.eta();
    let rows: Vec<RunRow> = records.iter().map(|r| RunRow::from_record(r, eta)).collect();
    let summary = summarize_rows(&rows);
    write_outputs(config, &records, &rows, &summary)?;
    Ok(ExperimentResult { records, rows, summary })
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: format!("bad {name} `{raw}`"),
    })
}

/// Reads `runs.csv` from a results directory.
pub fn read_runs(dir: &Path) -> Result<Vec<RunRow>> {
    let path = dir.join("runs.csv");
    if !path.is_file() {
        return Err(Error::NoResults(dir.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(&path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != RUN_HEADER {
        return Err(Error::Parse {
            path,
            line: 1,
            reason: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(&path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let f = |i: usize| record.get(i).unwrap_or("");
        rows.push(RunRow {
            run_id: parse_field(&path, line, "run_id", f(0))?,
            strategy: f(1).to_string(),
            seed: parse_field(&path, line, "seed", f(2))?,
            eta: parse_field(&path, line, "eta", f(3))?,
            jobs_arrived: parse_field(&path, line, "jobs_arrived", f(4))?,
            jobs_dropped: parse_field(&path, line, "jobs_dropped", f(5))?,
            drop_rate: parse_field(&path, line, "drop_rate", f(6))?,
            mean_response: parse_field(&path, line, "mean_response", f(7))?,
            p95_response: parse_field(&path, line, "p95_response", f(8))?,
            cumulative_reward: parse_field(&path, line, "cumulative_reward", f(9))?,
        });
    }
    Ok(rows)
}

/// Recomputes the summary from the `runs.csv` files of one or more result
/// directories (shards of one experiment). Nothing else is consulted.
pub fn summarize(dirs: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for dir in dirs {
        for row in read_runs(dir)? {
            if !seen.insert((row.run_id, row.strategy.clone())) {
                return Err(Error::Parse {
                    path: dir.join("runs.csv"),
                    line: 0,
                    reason: format!("run {} of `{}` appears twice", row.run_id, row.strategy),
                });
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::NoResults(dirs.first().cloned().unwrap_or_default()));
    }
    Ok(summarize_rows(&rows))
}

/// Runs the experiment once per target load, each into
/// `output_dir/eta_{eta}`, and writes `sweep.csv` with one summary row per
/// load and strategy.
pub fn sweep(config: &ExperimentConfig, etas: &[f64]) -> Result<Vec<(f64, Vec<SummaryRow>)>> {
    if etas.is_empty() {
        return Err(Error::config("eta", "no target loads given"));
    }
    let mut out = Vec::new();
    for &eta in etas {
        let mut c = config.with_eta(eta)?;
        c.output_dir = config.output_dir.join(format!("eta_{}", fmt_sig9(eta)));
        log::info!("sweep: eta {} -> {}", fmt_sig9(eta), c.output_dir.display());
        out.push((eta, run_experiment(&c)?.summary));
    }
    let mut header = vec!["eta"];
    header.extend(SUMMARY_HEADER);
    let path = config.output_dir.join("sweep.csv");
    write_csv(
        &path,
        &header,
        out.iter().flat_map(|(eta, rows)| {
            rows.iter().map(move |s| {
                [
                    fmt_sig9(*eta),
                    s.strategy.clone(),
                    s.runs.to_string(),
                    fmt_sig9(s.drop_rate_median),
                    fmt_sig9(s.drop_rate_p05),
                    fmt_sig9(s.drop_rate_p95),
                    fmt_sig9(s.mean_response),
                    fmt_sig9(s.mean_cumulative_reward),
                ]
            })
        }),
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
n_queues = 2
arrival = { kind = "exponential", rate = 5.0 }
strategies = ["jsq", "jmo"]
t_m = 2
t_e = 50

[[queues]]
buffer_capacity = 10
ack_probability = 0.6
service = { kind = "exponential", rate = 4.0 }

[[queues]]
buffer_capacity = 10
ack_probability = 0.6
service = { kind = "exponential", rate = 2.0 }
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(BASE, &[]).unwrap();
        assert_eq!(c.reward, RewardSpec::Combined { kappa: 100.0 });
        assert_eq!(c.planner, PlannerParams::default());
        assert!((c.eta() - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(c.run_ids(), 0..2);
    }

    #[test]
    fn overrides() {
        let o = vec![
            "t_e=7".to_string(),
            "planner.n_simulations=20".to_string(),
            "strategies=[\"pol\", \"sed\"]".to_string(),
            "output_dir=out/x".to_string(),
            "reward.kind=loss_penalty".to_string(),
        ];
        let c = ExperimentConfig::from_toml(BASE, &o).unwrap();
        assert_eq!(c.t_e, 7);
        assert_eq!(c.planner.n_simulations, 20);
        assert_eq!(c.strategies, vec![StrategyKind::Pol, StrategyKind::SedFi]);
        assert_eq!(c.output_dir, PathBuf::from("out/x"));
        assert_eq!(c.reward, RewardSpec::LossPenalty);

        let c = ExperimentConfig::from_toml(BASE, &["queues.1.ack_probability=0.25".into()]).unwrap();
        assert_eq!(c.queues[1].ack_probability, 0.25);
        assert_eq!(c.queues[0].ack_probability, 0.6);
        assert!(ExperimentConfig::from_toml(BASE, &["queues.2.ack_probability=0.25".into()]).is_err());
        assert!(ExperimentConfig::from_toml(BASE, &["queues.x.ack_probability=0.25".into()]).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            ("n_queues=3", "queues"),
            ("strategies=[\"jsq\", \"jsq\"]", "strategies"),
            ("t_m=0", "t_m"),
            ("planner.gamma=1.0", "planner.gamma"),
        ];
        for (o, field) in cases {
            let err = ExperimentConfig::from_toml(BASE, &[o.to_string()]);
            match err {
                Err(Error::InvalidConfig { field: f, .. }) => assert_eq!(f, field, "{o}"),
                other => panic!("{o}: {other:?}"),
            }
        }
        let err = ExperimentConfig::from_toml(BASE, &["n_queues=1".into(), "heatmap=true".into()]);
        assert!(err.is_err());
        assert!(ExperimentConfig::from_toml(&format!("bogus = 1\n{BASE}"), &[]).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{BASE}\nbogus = 1\n"), &[]).is_err());
    }

    #[test]
    fn eta_rescaling() {
        let c = ExperimentConfig::from_toml(BASE, &[]).unwrap();
        for eta in [0.2, 0.55, 0.9, 1.3] {
            assert!((c.with_eta(eta).unwrap().eta() - eta).abs() < 1e-12);
        }
    }

    #[test]
    fn broadcast_queue() {
        let text = BASE.replace("n_queues = 2", "n_queues = 3");
        let text = &text[..text.rfind("[[queues]]").unwrap()];
        let c = ExperimentConfig::from_toml(text, &[]).unwrap();
        assert_eq!(c.resolved_queues().len(), 3);
    }

    #[test]
    fn summary_order_and_values() {
        let row = |run_id, strategy: &str, drop_rate| RunRow {
            run_id,
            strategy: strategy.into(),
            seed: run_id as u64,
            eta: 0.5,
            jobs_arrived: 10,
            jobs_dropped: 0,
            drop_rate,
            mean_response: 1.0,
            p95_response: 2.0,
            cumulative_reward: -3.0,
        };
        let rows = vec![row(1, "b", 0.2), row(0, "b", 0.1), row(0, "a", 0.0), row(1, "a", 0.4)];
        let s = summarize_rows(&rows);
        assert_eq!(s[0].strategy, "b");
        assert_eq!(s[1].runs, 2);
        assert!((s[1].drop_rate_median - 0.2).abs() < 1e-12);
    }
}

//! Run manifests, suites of BO runs, and their CSV persistence.
//!
//! A manifest is plain text with `[defaults]` and `[run <label>]` sections
//! of `key = value` lines; `#` starts a comment. Each run section expands
//! to the product of its `functions`, `policies` and `seeds`:
//!
//! ```text
//! [defaults]
//! budget = 15
//! samples = 64
//!
//! [run table1]
//! functions = gramacy-lee, branin
//! policies = pi, ei, rollout-h1
//! seeds = 0..20
//! ```
//!
//! Recognized keys: `function(s)`, `policy`/`policies` (`pi`, `ei`, `ucb`,
//! `rollout-h<h>`, or `rollout` together with `horizon`), `horizon`,
//! `seeds` (`a..b` or a comma list), `seed` with `trials`, `budget`,
//! `n_init`, `samples`, `qmc`, `crn`, `cv` (`on`/`off`), `ucb_beta`,
//! `adam_iters`, `adam_restarts`, `inner_restarts`, `estimator`
//! (`pathwise`/`sample-path`) and `timing`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use super::bo::{run_bo, BenchRun, BoConfig, Policy};
use super::functions::by_name;
use crate::error::{Error, Result};
use crate::rollout::GradientEstimator;

/// First line of every CSV written here.
pub const CSV_MAGIC: &str = "# rbo-bench csv v1";
pub const RUN_COLUMNS: [&str; 7] = ["function", "policy", "seed", "iteration", "incumbent", "gap", "wall_ms"];
pub const SUMMARY_COLUMNS: [&str; 6] = ["function", "policy", "trials", "failures", "mean_gap", "median_gap"];

#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub function: String,
    pub policy: Policy,
    pub seed: u64,
    pub config: BoConfig,
}

fn parse_switch(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_seeds(v: &str) -> Option<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b) = (a.trim().parse::<u64>().ok()?, b.trim().parse::<u64>().ok()?);
        return Some((a..b).collect());
    }
    v.split(',').map(|s| s.trim().parse::<u64>().ok()).collect()
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

#[derive(Clone, Debug)]
struct Section {
    line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

fn apply(cfg: &mut BoConfig, key: &str, value: &str, line: usize) -> Result<bool> {
    let bad = |what: &str| Error::Manifest { line, message: format!("invalid {what} {value:?}") };
    let num = |what: &str| value.parse::<usize>().map_err(|_| bad(what));
    match key {
        "budget" => cfg.budget = num("budget")?,
        "n_init" => cfg.n_init = num("n_init")?,
        "samples" => cfg.n_samples = num("samples")?,
        "adam_iters" => cfg.adam.max_iters = num("adam_iters")?,
        "adam_restarts" => cfg.adam.restarts = num("adam_restarts")?,
        "inner_restarts" => cfg.inner.restarts = num("inner_restarts")?,
        "ucb_beta" => cfg.ucb_beta = value.parse().map_err(|_| bad("ucb_beta"))?,
        "qmc" => cfg.variance_reduction.qmc = parse_switch(value).ok_or_else(|| bad("switch"))?,
        "crn" => cfg.variance_reduction.crn = parse_switch(value).ok_or_else(|| bad("switch"))?,
        "cv" => cfg.variance_reduction.control_variate = parse_switch(value).ok_or_else(|| bad("switch"))?,
        "timing" => cfg.timing = parse_switch(value).ok_or_else(|| bad("switch"))?,
        "estimator" => {
            cfg.estimator = match value {
                "pathwise" => GradientEstimator::Pathwise,
                "sample-path" => GradientEstimator::SamplePath,
                _ => return Err(bad("estimator")),
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

/// Parses a manifest into its expanded job list, in file order.
pub fn parse_manifest(text: &str) -> Result<Vec<Job>> {
    let mut defaults = Section { line: 0, entries: BTreeMap::new() };
    let mut runs: Vec<Section> = Vec::new();
    let mut in_defaults = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| Error::Manifest { line, message: "unterminated section header".into() })?
                .trim();
            if header == "defaults" {
                in_defaults = true;
            } else if header == "run" || header.starts_with("run ") {
                in_defaults = false;
                runs.push(Section { line, entries: BTreeMap::new() });
            } else {
                return Err(Error::Manifest { line, message: format!("unknown section [{header}]") });
            }
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| Error::Manifest { line, message: "expected key = value".into() })?;
        let section = if in_defaults {
            &mut defaults
        } else {
            runs.last_mut()
                .ok_or_else(|| Error::Manifest { line, message: "key outside of a section".into() })?
        };
        section.entries.insert(k.trim().to_ascii_lowercase(), (line, v.trim().to_string()));
    }

    let mut jobs = Vec::new();
    for run in runs {
        let mut merged = defaults.entries.clone();
        merged.extend(run.entries.clone());
        let mut cfg = BoConfig::default();
        let mut functions = Vec::new();
        let mut policies = Vec::new();
        let mut horizon: Option<usize> = None;
        let mut seeds: Option<Vec<u64>> = None;
        let mut seed0: Option<u64> = None;
        let mut trials: Option<u64> = None;
        for (key, (line, value)) in &merged {
            let line = *line;
            let bad = |what: &str| Error::Manifest { line, message: format!("invalid {what} {value:?}") };
            match key.as_str() {
                "function" | "functions" => functions = list(value),
                "policy" | "policies" => policies = list(value),
                "horizon" => horizon = Some(value.parse().map_err(|_| bad("horizon"))?),
                "seeds" => seeds = Some(parse_seeds(value).ok_or_else(|| bad("seeds"))?),
                "seed" => seed0 = Some(value.parse().map_err(|_| bad("seed"))?),
                "trials" => trials = Some(value.parse().map_err(|_| bad("trials"))?),
                k => {
                    if !apply(&mut cfg, k, value, line)? {
                        return Err(Error::Manifest { line, message: format!("unknown key {k:?}") });
                    }
                }
            }
        }
        let seeds = match (seeds, seed0, trials) {
            (Some(s), _, _) => s,
            (None, s, t) => {
                let s = s.unwrap_or(0);
                (s..s + t.unwrap_or(1)).collect()
            }
        };
        let missing = |what: &str| Error::Manifest { line: run.line, message: format!("run section without {what}") };
        if functions.is_empty() {
            return Err(missing("functions"));
        }
        if policies.is_empty() {
            return Err(missing("policies"));
        }
        let policies: Vec<Policy> = policies
            .iter()
            .map(|p| {
                if p.eq_ignore_ascii_case("rollout") {
                    horizon.map(|h| Policy::Rollout { horizon: h }).ok_or_else(|| missing("horizon for rollout"))
                } else {
                    p.parse::<Policy>().map_err(|e| Error::Manifest { line: run.line, message: e.to_string() })
                }
            })
            .collect::<Result<_>>()?;
        for f in &functions {
            by_name(f).map_err(|e| Error::Manifest { line: run.line, message: e.to_string() })?;
            for p in &policies {
                for s in &seeds {
                    jobs.push(Job { function: f.clone(), policy: *p, seed: *s, config: cfg.clone() });
                }
            }
        }
    }
    Ok(jobs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub function: String,
    pub policy: Policy,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteResults {
    pub runs: Vec<BenchRun>,
    pub failures: Vec<Failure>,
}

pub fn run_job(job: &Job) -> Result<BenchRun> {
    run_bo(&by_name(&job.function)?, job.policy, job.seed, &job.config)
}

/// Runs every job (in parallel), keeping job order. Failed runs are
/// recorded and do not stop the suite.
pub fn run_suite(jobs: &[Job]) -> SuiteResults {
    let outcomes: Vec<Result<BenchRun>> = jobs.par_iter().map(run_job).collect();
    let mut res = SuiteResults::default();
    for (job, out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(r) => res.runs.push(r),
            Err(e) => res.failures.push(Failure {
                function: job.function.clone(),
                policy: job.policy,
                seed: job.seed,
                message: e.to_string(),
            }),
        }
    }
    res
}

fn magic<W: Write>(out: &mut W) -> Result<()> {
    writeln!(out, "{CSV_MAGIC}")?;
    Ok(())
}

/// One row per run and history entry; iteration 0 is the initial design.
pub fn write_runs_csv<W: Write>(mut out: W, runs: &[BenchRun]) -> Result<()> {
    magic(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_COLUMNS)?;
    for r in runs {
        for (it, (inc, g)) in r.history.iter().zip(&r.gap_history).enumerate() {
            let wall = match it.checked_sub(1).and_then(|k| r.wall_ms.get(k).copied().flatten()) {
                Some(ms) => format!("{ms:.3}"),
                None => "NA".to_string(),
            };
            w.write_record([
                r.function.clone(),
                r.policy.to_string(),
                r.seed.to_string(),
                it.to_string(),
                inc.to_string(),
                g.to_string(),
                wall,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub function: String,
    pub policy: Policy,
    pub trials: usize,
    pub failures: usize,
    pub mean_gap: f64,
    pub median_gap: f64,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and median final GAP per (function, policy), in first-seen order.
pub fn summarize(res: &SuiteResults) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Policy)> = Vec::new();
    let key_of = |f: &str, p: Policy| (f.to_string(), p);
    for k in res.runs.iter().map(|r| key_of(&r.function, r.policy)).chain(res.failures.iter().map(|f| key_of(&f.function, f.policy))) {
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(function, policy)| {
            let mut gaps: Vec<f64> =
                res.runs.iter().filter(|r| r.function == function && r.policy == policy).map(|r| r.gap).collect();
            let failures = res.failures.iter().filter(|f| f.function == function && f.policy == policy).count();
            let trials = gaps.len();
            let mean_gap = if trials > 0 { gaps.iter().sum::<f64>() / trials as f64 } else { f64::NAN };
            SummaryRow { function, policy, trials, failures, mean_gap, median_gap: median(&mut gaps) }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(mut out: W, rows: &[SummaryRow]) -> Result<()> {
    magic(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.function.clone(),
            r.policy.to_string(),
            r.trials.to_string(),
            r.failures.to_string(),
            format!("{:.6}", r.mean_gap),
            format!("{:.6}", r.median_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Table-style text: one row per function, mean/median GAP per policy.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut policies: Vec<Policy> = Vec::new();
    let mut functions: Vec<String> = Vec::new();
    for r in rows {
        if !policies.contains(&r.policy) {
            policies.push(r.policy);
        }
        if !functions.contains(&r.function) {
            functions.push(r.function.clone());
        }
    }
    let mut s = format!("{:<16}", "function");
    for p in &policies {
        s.push_str(&format!(" {:>17}", format!("{p} mean/med")));
    }
    s.push('\n');
    for f in &functions {
        s.push_str(&format!("{f:<16}"));
        for p in &policies {
            match rows.iter().find(|r| &r.function == f && r.policy == *p) {
                Some(r) => s.push_str(&format!(" {:>8.3}/{:<8.3}", r.mean_gap, r.median_gap)),
                None => s.push_str(&format!(" {:>17}", "-")),
            }
        }
        s.push('\n');
    }
    s
}

/// A parsed row of a runs CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub function: String,
    pub policy: String,
    pub seed: u64,
    pub iteration: usize,
    pub incumbent: f64,
    pub gap: f64,
    pub wall_ms: Option<f64>,
}

/// Reads a runs CSV, failing with a schema error on missing columns.
pub fn read_runs_csv<R: Read>(input: R) -> Result<Vec<RunRow>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let idx: Vec<usize> = RUN_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let bad = |what: &str| Error::Schema(format!("row {}: invalid {what}", n + 1));
        rows.push(RunRow {
            function: field(0).to_string(),
            policy: field(1).to_string(),
            seed: field(2).parse().map_err(|_| bad("seed"))?,
            iteration: field(3).parse().map_err(|_| bad("iteration"))?,
            incumbent: field(4).parse().map_err(|_| bad("incumbent"))?,
            gap: field(5).parse().map_err(|_| bad("gap"))?,
            wall_ms: match field(6) {
                "NA" => None,
                v => Some(v.parse().map_err(|_| bad("wall_ms"))?),
            },
        });
    }
    Ok(rows)
}

//! Replicated simulation benchmark producing table-shaped CSV summaries.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::BoostConfig;
use crate::error::{Error, Result};
use crate::fit::{fit_many, Method};
use crate::importance::{permutation_importance, recovery_fraction};
use crate::metrics::{rmse, summarize};
use crate::simgen::{make_setting, stream_rng, streams, ErrorModel, SimSetting};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Label written to the `setting` column.
    pub label: String,
    /// Design template; its error model is replaced by each entry of `errors`.
    pub template: SimSetting,
    pub errors: Vec<ErrorModel>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    pub jobs: usize,
    pub config: BoostConfig,
    pub importance: bool,
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub errors: String,
    pub method: Method,
    pub replication: usize,
    pub rmse: Option<f64>,
    pub recovery: Option<f64>,
    pub stop_index: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: String,
    pub errors: String,
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub rmse_mean: f64,
    pub rmse_sd: f64,
    pub recovery_mean: f64,
    pub recovery_sd: f64,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub records: Vec<RepRecord>,
    pub summary: Vec<SummaryRow>,
}

impl BenchOptions {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.methods.is_empty() || self.errors.is_empty() {
            return Err(Error::InvalidArgument("need at least one method and one error model".into()));
        }
        self.config.validate()
    }
}

fn run_replication(opts: &BenchOptions, errors: ErrorModel, rep: usize) -> Vec<RepRecord> {
    let mut setting = opts.template.clone();
    setting.errors = errors;
    setting.seed = opts.seed;
    setting.replication = rep as u64;
    let label = errors.to_string();
    let failed = |method: Method, msg: String| RepRecord {
        errors: label.clone(),
        method,
        replication: rep,
        rmse: None,
        recovery: None,
        stop_index: None,
        failure: Some(msg),
    };
    let data = match make_setting(&setting) {
        Ok(d) => d,
        Err(e) => return opts.methods.iter().map(|&m| failed(m, e.to_string())).collect(),
    };
    let fits = match fit_many(&opts.methods, &data.train, &data.val, &opts.config) {
        Ok(f) => f,
        Err(_) => {
            // retry one method at a time so a single failure does not sink the rest
            return opts
                .methods
                .iter()
                .map(|&m| match fit_many(&[m], &data.train, &data.val, &opts.config) {
                    Ok(mut f) => score(opts, &setting, &data, f.remove(0), rep, &label),
                    Err(e) => failed(m, e.to_string()),
                })
                .collect();
        }
    };
    fits.into_iter()
        .map(|f| score(opts, &setting, &data, f, rep, &label))
        .collect()
}

fn score(
    opts: &BenchOptions,
    setting: &SimSetting,
    data: &crate::simgen::SimData,
    fit: crate::fit::FitOutcome,
    rep: usize,
    label: &str,
) -> RepRecord {
    let pred = fit.ensemble.predict(&data.test.x);
    let test_rmse = rmse(&pred, &data.test.y);
    let recovery = if opts.importance {
        use rand::Rng;
        let seed = stream_rng(opts.seed, rep as u64, streams::PERMUTATION).random::<u64>();
        permutation_importance(&fit.ensemble, &data.val, seed).map(|r| recovery_fraction(&r, &setting.g.active()))
    } else {
        Ok(f64::NAN)
    };
    match (test_rmse, recovery) {
        (Ok(r), Ok(rec)) => RepRecord {
            errors: label.to_string(),
            method: fit.method,
            replication: rep,
            rmse: Some(r),
            recovery: rec.is_finite().then_some(rec),
            stop_index: Some(fit.ensemble.stop_index),
            failure: None,
        },
        (Err(e), _) | (_, Err(e)) => RepRecord {
            errors: label.to_string(),
            method: fit.method,
            replication: rep,
            rmse: None,
            recovery: None,
            stop_index: None,
            failure: Some(e.to_string()),
        },
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    match values.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (values[0], f64::NAN),
        _ => summarize(values).expect("two or more values"),
    }
}

/// Runs every (error model, replication) cell on a pool of `opts.jobs` workers.
pub fn run_benchmark(opts: &BenchOptions) -> Result<BenchResult> {
    opts.validate()?;
    let cells: Vec<(ErrorModel, usize)> = opts
        .errors
        .iter()
        .flat_map(|&e| (0..opts.reps).map(move |r| (e, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let nested: Vec<Vec<RepRecord>> =
        pool.install(|| cells.par_iter().map(|&(e, r)| run_replication(opts, e, r)).collect());
    let records: Vec<RepRecord> = nested.into_iter().flatten().collect();

    let mut summary = Vec::new();
    for e in &opts.errors {
        let label = e.to_string();
        for &m in &opts.methods {
            let rows: Vec<&RepRecord> = records.iter().filter(|r| r.errors == label && r.method == m).collect();
            let ok: Vec<&RepRecord> = rows.iter().copied().filter(|r| r.failure.is_none()).collect();
            let rm: Vec<f64> = ok.iter().filter_map(|r| r.rmse).collect();
            let rc: Vec<f64> = ok.iter().filter_map(|r| r.recovery).collect();
            let (rmse_mean, rmse_sd) = mean_sd(&rm);
            let (recovery_mean, recovery_sd) = mean_sd(&rc);
            summary.push(SummaryRow {
                setting: opts.label.clone(),
                errors: label.clone(),
                method: m,
                n_ok: ok.len(),
                n_failed: rows.len() - ok.len(),
                rmse_mean,
                rmse_sd,
                recovery_mean,
                recovery_sd,
            });
        }
    }
    Ok(BenchResult { records, summary })
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NA".to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record([
        "setting",
        "errors",
        "method",
        "n_ok",
        "n_failed",
        "rmse_mean",
        "rmse_sd",
        "recovery_mean",
        "recovery_sd",
    ])
    .map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.setting.clone(),
            r.errors.clone(),
            r.method.to_string(),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
            fmt(r.rmse_mean),
            fmt(r.rmse_sd),
            fmt(r.recovery_mean),
            fmt(r.recovery_sd),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records_csv<W: Write>(records: &[RepRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["errors", "method", "replication", "rmse", "recovery", "stop_index", "failure"])
        .map_err(csv_err)?;
    for r in records {
        out.write_record([
            r.errors.clone(),
            r.method.to_string(),
            r.replication.to_string(),
            fmt_opt(r.rmse),
            fmt_opt(r.recovery),
            r.stop_index.map_or_else(|| "NA".to_string(), |s| s.to_string()),
            r.failure.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `summary.csv`, `replications.csv` and `manifest.json` into `dir`.
pub fn write_outputs(opts: &BenchOptions, result: &BenchResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_summary_csv(&result.summary, std::fs::File::create(dir.join("summary.csv"))?)?;
    write_records_csv(&result.records, std::fs::File::create(dir.join("replications.csv"))?)?;
    let heavy_tailed = opts.errors.contains(&ErrorModel::D4);
    let manifest = serde_json::json!({
        "options": opts,
        "notes": if heavy_tailed {
            vec!["D4 has no finite variance; its noise multiplier assumes unit error variance"]
        } else {
            Vec::new()
        },
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

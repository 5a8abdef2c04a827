use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rrboost::bench::{run_benchmark, write_outputs, BenchOptions};
use rrboost::boosting::Stage;
use rrboost::data::read_features_csv;
use rrboost::importance::{permutation_importance_with, ImportanceOptions};
use rrboost::metrics::{rmse, trmse};
use rrboost::model::TrainManifest;
use rrboost::simgen::{contaminate, make_setting, stream_rng, streams, ErrorModel, Signal, SimSetting, Structure};
use rrboost::{fit, BoostConfig, Dataset, Error, FitTrace, Method, ModelFile};

#[derive(Parser)]
#[command(name = "rrboost", version, about = "Robust two-stage gradient boosting for regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Robust permutation importance of a saved model.
    Importance(ImportanceArgs),
    /// Test-set RMSE and trimmed RMSE of a saved model.
    Evaluate(EvaluateArgs),
    /// Write simulated train/validation/test splits.
    Simulate(SimulateArgs),
    /// Replicated simulation benchmark.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Base learner depth.
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long)]
    min_node: Option<usize>,
    /// Shrinkage in (0, 1].
    #[arg(long, value_parser = parse_gamma)]
    gamma: Option<f64>,
    #[arg(long)]
    t1_max: Option<usize>,
    #[arg(long)]
    t2_max: Option<usize>,
    /// Iteration budget of the single-stage methods.
    #[arg(long)]
    t_max: Option<usize>,
    /// Run every stage to its maximum (no plateau cut-off).
    #[arg(long)]
    reproduction: bool,
}

impl FitArgs {
    fn config(&self, depth: usize) -> BoostConfig {
        let mut c = BoostConfig::for_depth(depth);
        if let Some(m) = self.min_node {
            c.min_node = m;
        }
        if let Some(g) = self.gamma {
            c.gamma = g;
        }
        if let Some(t) = self.t1_max {
            c.t1_max = t;
        }
        if let Some(t) = self.t2_max {
            c.t2_max = t;
        }
        if let Some(t) = self.t_max {
            c.t_max = t;
        }
        if self.reproduction {
            c.plateau_patience = None;
        }
        c
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long, default_value = "rrboost")]
    method: Method,
    /// Response column (default: last column).
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Also write the fit report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Add C·ε noise from this error model to the training and validation responses.
    #[arg(long)]
    contaminate: Option<ErrorModel>,
    /// Signal-to-noise ratio for --contaminate.
    #[arg(long, default_value_t = 6.0, requires = "contaminate")]
    snr: f64,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    /// Validation CSV including the response.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shuffles averaged per feature.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct DesignArgs {
    /// Reference design 1, 2, 3, or custom.
    #[arg(long, default_value = "1")]
    setting: String,
    #[arg(long)]
    g: Option<Signal>,
    #[arg(long)]
    structure: Option<Structure>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
}

impl DesignArgs {
    fn template(&self, errors: ErrorModel, seed: u64) -> rrboost::Result<SimSetting> {
        let mut s = match self.setting.as_str() {
            "custom" => {
                let mut s = SimSetting::reference(1, errors, seed)?;
                s.g = self
                    .g
                    .ok_or_else(|| Error::InvalidArgument("--setting custom needs --g".into()))?;
                s.structure = self.structure.unwrap_or(Structure::S0);
                s
            }
            id => {
                let id: u8 = id
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("unknown setting '{id}'")))?;
                let mut s = SimSetting::reference(id, errors, seed)?;
                if let Some(g) = self.g {
                    s.g = g;
                }
                if let Some(st) = self.structure {
                    s.structure = st;
                }
                s
            }
        };
        if let Some(n) = self.n_train {
            s.n_train = n;
        }
        if let Some(n) = self.n_val {
            s.n_val = n;
        }
        if let Some(n) = self.n_test {
            s.n_test = n;
        }
        if let Some(p) = self.p {
            s.p = p;
        }
        if let Some(v) = self.snr {
            s.snr = v;
        }
        let k = s.g.active().len();
        if s.p < k {
            return Err(Error::InvalidArgument(format!("p must be at least {k} for this function")));
        }
        Ok(s)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value = "D0")]
    errors: ErrorModel,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replication: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, value_delimiter = ',', default_value = "rrboost,sboost,l2,lad,mboost,robloss")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "D0,D1:0.1,D1:0.2,D2:0.1,D2:0.2,D3,D4")]
    errors: Vec<ErrorModel>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Skip variable importance.
    #[arg(long)]
    no_importance: bool,
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
    /// Base learner depth (default: the design's reference depth).
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    min_node: Option<usize>,
    #[arg(long, value_parser = parse_gamma)]
    gamma: Option<f64>,
    #[arg(long)]
    t1_max: Option<usize>,
    #[arg(long)]
    t2_max: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    reproduction: bool,
}

fn parse_gamma(s: &str) -> Result<f64, String> {
    let g: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if g > 0.0 && g <= 1.0 {
        Ok(g)
    } else {
        Err(format!("gamma must lie in (0, 1], got {s}"))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_numerical() => 3,
        Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Importance(a) => cmd_importance(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_dataset(path: &Path, target: Option<&str>) -> rrboost::Result<Dataset> {
    Dataset::read_csv_path(path, target).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn output(path: Option<&Path>) -> rrboost::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json(value: &serde_json::Value, path: &Path) -> rrboost::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn stage_report(trace: &FitTrace) -> Vec<serde_json::Value> {
    [Stage::Scale, Stage::Refine, Stage::Single]
        .into_iter()
        .filter_map(|stage| {
            let (tr, va) = trace.stage_losses(stage);
            if tr.is_empty() {
                return None;
            }
            let best = va
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i);
            let termination = trace.terminations.iter().find(|(s, _)| *s == stage).map(|(_, t)| *t);
            Some(json!({
                "stage": stage,
                "iterations": tr.len(),
                "stop": best.map(|i| i + 1),
                "val_loss": best.map(|i| va[i]),
                "train_loss": best.map(|i| tr[i]),
                "termination": termination,
            }))
        })
        .collect()
}

fn cmd_train(a: TrainArgs) -> rrboost::Result<()> {
    let mut train = read_dataset(&a.train, a.target.as_deref())?;
    let mut val = read_dataset(&a.val, a.target.as_deref())?;
    if train.feature_names != val.feature_names {
        return Err(Error::Data(format!(
            "validation columns {:?} differ from training columns {:?}",
            val.feature_names, train.feature_names
        )));
    }
    let mut noise = None;
    if let Some(model) = a.contaminate {
        let mut rng = stream_rng(a.seed, 0, streams::CONTAMINATION);
        let (y, c) = contaminate(&train.y, model, a.snr, &mut rng)?;
        train.y = y;
        let (y, _) = contaminate(&val.y, model, a.snr, &mut rng)?;
        val.y = y;
        noise = Some(c);
    }
    let config = a.fit.config(a.fit.depth);
    let start = Instant::now();
    let out = fit(a.method, &train, &val, &config)?;
    let wall = start.elapsed().as_secs_f64();
    let manifest = TrainManifest {
        seed: a.seed,
        config,
        n_train: train.n_rows(),
        n_val: val.n_rows(),
    };
    let model = ModelFile::new(
        a.method,
        train.feature_names.clone(),
        train.target_name.clone(),
        out.ensemble,
        manifest,
    );
    model.save(&a.out)?;
    let e = &model.ensemble;
    let report = json!({
        "method": a.method,
        "model": a.out.display().to_string(),
        "steps": e.steps.len(),
        "stage_boundary": e.stage_boundary,
        "stop_index": e.stop_index,
        "sigma_hat": e.sigma_hat,
        "stages": stage_report(&out.trace),
        "contamination": a.contaminate.map(|m| json!({"errors": m.to_string(), "snr": a.snr, "c": noise})),
        "wall_seconds": wall,
    });
    if let Some(p) = &a.report {
        write_json(&report, p)?;
    }
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> rrboost::Result<()> {
    let model = ModelFile::load(&a.model)?;
    let file = std::fs::File::open(&a.data)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", a.data.display())))?;
    let x = read_features_csv(file, &model.feature_names)?;
    let pred = model.ensemble.predict_checked(&x)?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "prediction")?;
    for v in pred {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Dataset with columns reordered to the model's features.
fn aligned(model: &ModelFile, path: &Path, target: Option<&str>) -> rrboost::Result<Dataset> {
    let target = target.unwrap_or(&model.target_name);
    let d = read_dataset(path, Some(target))?;
    let mut idx = Vec::with_capacity(model.feature_names.len());
    for name in &model.feature_names {
        let j = d
            .feature_names
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("feature '{name}' missing from {}", path.display())))?;
        idx.push(j);
    }
    let mut data = Vec::with_capacity(d.n_rows() * idx.len());
    for row in d.x.rows() {
        data.extend(idx.iter().map(|&j| row[j]));
    }
    let x = rrboost::Matrix::new(d.n_rows(), idx.len(), data)?;
    Dataset::new(x, d.y, model.feature_names.clone(), d.target_name)
}

fn cmd_importance(a: ImportanceArgs) -> rrboost::Result<()> {
    let model = ModelFile::load(&a.model)?;
    let val = aligned(&model, &a.data, a.target.as_deref())?;
    let mut opts = ImportanceOptions::new(a.seed);
    opts.repeats = a.repeats;
    let report = permutation_importance_with(&model.ensemble, &val, &opts)?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "feature,importance")?;
    for j in report.ranking() {
        writeln!(w, "{},{}", model.feature_names[j], report.scores[j])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> rrboost::Result<()> {
    let model = ModelFile::load(&a.model)?;
    let d = aligned(&model, &a.data, a.target.as_deref())?;
    let pred = model.ensemble.predict_checked(&d.x)?;
    let report = json!({
        "n": d.n_rows(),
        "rmse": rmse(&pred, &d.y)?,
        "trmse": trmse(&pred, &d.y)?,
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> rrboost::Result<()> {
    let setting = a.design.template(a.errors, a.seed)?.with_replication(a.replication);
    let data = make_setting(&setting)?;
    std::fs::create_dir_all(&a.out_dir)?;
    data.train.write_csv_path(&a.out_dir.join("train.csv"))?;
    data.val.write_csv_path(&a.out_dir.join("val.csv"))?;
    data.test.write_csv_path(&a.out_dir.join("test.csv"))?;
    write_json(
        &json!({ "setting": setting, "c": data.c }),
        &a.out_dir.join("manifest.json"),
    )?;
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> rrboost::Result<()> {
    let template = a.design.template(ErrorModel::D0, a.seed)?;
    let fit_args = FitArgs {
        depth: a.depth.unwrap_or_else(|| template.reference_depth()),
        min_node: a.min_node,
        gamma: a.gamma,
        t1_max: a.t1_max,
        t2_max: a.t2_max,
        t_max: a.t_max,
        reproduction: a.reproduction,
    };
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let opts = BenchOptions {
        label: a.design.setting.clone(),
        template,
        errors: a.errors,
        methods: a.methods,
        reps: a.reps,
        seed: a.seed,
        jobs,
        config: fit_args.config(fit_args.depth),
        importance: !a.no_importance,
    };
    let result = run_benchmark(&opts)?;
    write_outputs(&opts, &result, &a.out_dir)?;
    let mut out = std::io::stdout().lock();
    rrboost::bench::write_summary_csv(&result.summary, &mut out)?;
    Ok(())
}

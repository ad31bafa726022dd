use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;

use edgeslm_core::costmodel::{estimate, CostTable, WorkloadSpec, MB};
use edgeslm_core::datapipe::{
    few_shot_subsample, fit_label_codec, load_prepared, load_table, prepare, save_prepared, split, synth_generate,
    synthetic_descriptor, DataError, LabeledRecord, RawTable, SynthConfig,
};
use edgeslm_core::edgesim::{
    run as simulate_queue, run_realtime, LatencySource, SimConfig, SimReport, Stability, StabilityVerdict,
};
use edgeslm_core::featsel::{
    binary_target, correlation_filter, lambda_max, lasso, pca, random_forest_importance, rfe, standardize,
    ForestConfig, LassoConfig, Method, NumericMatrix, PcaConfig, RfeConfig, SelectionResult,
};
use edgeslm_core::harness::{
    cross_matrix, emit_report, evaluate, run_experiment_full, run_kfold, save_predictions, score_prediction_file,
    CrossMatrix, ExperimentMode, ExperimentReport, ExperimentSpec, KFoldReport, MetricsReport, Regime,
    ReportFormat, SystemClock,
};
use edgeslm_core::learner::{load_checkpoint, save_checkpoint, ClassifierState, HashedFeaturizer, TrainConfig};
use edgeslm_core::registry::{DatasetDescriptor, HardwareProfile, ModelProfile, Registry};

use crate::manifest::{digest_file, RunManifest};
use crate::{
    usage, Cli, Command, CrossEvalArgs, EstimateArgs, EvalArgs, Format, KfoldArgs, Mode, PrepareArgs, RegimeArg,
    ReportArgs, ScoreArgs, SelectArgs, SimulateArgs, SynthArgs, TrainArgs, TrainOpts,
};

const DEFAULT_OUT_DIR: &str = "edgeslm-out";

struct Context {
    seed: u64,
    format: Format,
    out_dir: PathBuf,
    registry: Registry,
    manifest: RunManifest,
}

impl Context {
    fn report_format(&self) -> ReportFormat {
        match self.format {
            Format::Md => ReportFormat::Markdown,
            Format::Csv => ReportFormat::Csv,
        }
    }

    fn ext(&self) -> &'static str {
        match self.format {
            Format::Md => "md",
            Format::Csv => "csv",
        }
    }

    /// Checks that `path` exists and records its digest.
    fn input(&mut self, path: &Path) -> Result<()> {
        if !path.is_file() {
            return Err(usage(format!("input file `{}` does not exist", path.display())));
        }
        let digest = digest_file(path).with_context(|| format!("reading {}", path.display()))?;
        self.manifest.inputs.push(digest);
        Ok(())
    }

    fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.to_string(), value);
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let path = self.out_dir.join(name);
        self.track(&path);
        path
    }

    fn track(&mut self, path: &Path) {
        self.manifest.outputs.push(path.to_path_buf());
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.output(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    /// Writes the rendering next to the JSON and echoes it.
    fn emit(&mut self, stem: &str, rendering: &str) -> Result<()> {
        self.write(&format!("{stem}.{}", self.ext()), rendering)?;
        print!("{rendering}");
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finished_at = now();
        let path = self.out_dir.join(RunManifest::file_name(&self.manifest.command));
        fs::write(&path, serde_json::to_string_pretty(&self.manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let registry = match &cli.registry {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("registry file `{}` does not exist", path.display())));
            }
            Registry::load(path).map_err(|e| usage(e.to_string()))?
        }
        None => Registry::builtin(),
    };
    let out_dir = match (&cli.out_dir, &cli.command) {
        (Some(dir), _) => dir.clone(),
        (None, Command::Synth(a)) => parent_dir(&a.out),
        (None, Command::Prepare(a)) => parent_dir(&a.out),
        (None, _) => PathBuf::from(DEFAULT_OUT_DIR),
    };
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut ctx = Context {
        seed: cli.seed,
        format: cli.format,
        out_dir,
        registry,
        manifest: RunManifest {
            command: cli.command.name().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            params: serde_json::to_value(cli)?,
            seeds: BTreeMap::from([("seed".to_string(), cli.seed)]),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now(),
            finished_at: String::new(),
        },
    };
    if let Some(path) = &cli.registry {
        ctx.input(path)?;
    }
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(&mut ctx, a)?,
        Command::Synth(a) => cmd_synth(&mut ctx, a)?,
        Command::Prepare(a) => cmd_prepare(&mut ctx, a)?,
        Command::Train(a) => cmd_train(&mut ctx, a)?,
        Command::Eval(a) => cmd_eval(&mut ctx, a)?,
        Command::CrossEval(a) => cmd_cross_eval(&mut ctx, a)?,
        Command::Kfold(a) => cmd_kfold(&mut ctx, a)?,
        Command::SelectFeatures(a) => cmd_select(&mut ctx, a)?,
        Command::Simulate(a) => cmd_simulate(&mut ctx, a)?,
        Command::ScorePreds(a) => cmd_score(&mut ctx, a)?,
        Command::Report(a) => cmd_report(&mut ctx, a)?,
    }
    ctx.finish()
}

fn data_error(e: DataError) -> anyhow::Error {
    match e {
        DataError::InvalidArgument(_) | DataError::MissingColumns { .. } => usage(e.to_string()),
        other => other.into(),
    }
}

fn unknown(kind: &str, name: &str, valid: impl Iterator<Item = String>) -> anyhow::Error {
    let valid: Vec<String> = valid.collect();
    usage(format!("unknown {kind} `{name}`; valid options: {}", valid.join(", ")))
}

fn select_models<'a>(registry: &'a Registry, spec: &str) -> Result<Vec<&'a ModelProfile>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(registry.models().iter().collect());
    }
    spec.split(',')
        .map(|name| {
            let name = name.trim();
            registry.model(name).ok_or_else(|| {
                unknown("model", name, registry.models().iter().map(|m| m.name.clone()).chain(["all".into()]))
            })
        })
        .collect()
}

fn select_hardware<'a>(registry: &'a Registry, spec: &str) -> Result<Vec<&'a HardwareProfile>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(registry.primary_hardware().collect());
    }
    spec.split(',')
        .map(|name| {
            let name = name.trim();
            registry.hardware_profile(name).ok_or_else(|| {
                unknown("hardware", name, registry.hardware().iter().map(|h| h.name.clone()).chain(["all".into()]))
            })
        })
        .collect()
}

fn dataset_descriptor(registry: &Registry, name: &str) -> Result<DatasetDescriptor> {
    if name.eq_ignore_ascii_case("synthetic") {
        return Ok(synthetic_descriptor(0));
    }
    registry.dataset(name).cloned().ok_or_else(|| {
        unknown(
            "dataset",
            name,
            registry.datasets().iter().map(|d| d.name.clone()).chain(["synthetic".into()]),
        )
    })
}

/// Loads a CSV table; generator tables get their feature count from the
/// header.
fn load_dataset(ctx: &mut Context, name: &str, path: &Path) -> Result<(DatasetDescriptor, RawTable)> {
    let mut descriptor = dataset_descriptor(&ctx.registry, name)?;
    ctx.input(path)?;
    let table = load_table(path, &descriptor).map_err(data_error)?;
    if descriptor.name == "synthetic" {
        descriptor.n_features = table.column_names.len() - descriptor.label_columns.len();
    }
    Ok((descriptor, table))
}

fn load_records(ctx: &mut Context, path: &Path) -> Result<Vec<LabeledRecord>> {
    ctx.input(path)?;
    load_prepared(path).map_err(data_error)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn train_config(ctx: &mut Context, opts: &TrainOpts) -> Result<TrainConfig> {
    let config = TrainConfig {
        epochs: opts.epochs,
        learning_rate: opts.learning_rate,
        batch_size: opts.batch_size,
        weight_decay: opts.weight_decay,
        hash_dimension: opts.hash_dim,
        seed: ctx.seed,
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    ctx.seed("train", config.seed);
    ctx.seed("hash", config.hash_seed);
    Ok(config)
}

/// Two-column metric table.
fn render_pairs(format: Format, pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    match format {
        Format::Md => {
            out.push_str("| Metric | Value |\n|---|---|\n");
            for (k, v) in pairs {
                let _ = writeln!(out, "| {k} | {v} |");
            }
        }
        Format::Csv => {
            out.push_str("metric,value\n");
            for (k, v) in pairs {
                let _ = writeln!(out, "{k},{v}");
            }
        }
    }
    out
}

fn metric_pairs(m: &MetricsReport) -> Vec<(&'static str, String)> {
    let mut pairs = vec![
        ("Accuracy", format!("{:.4}", m.accuracy)),
        ("Precision", format!("{:.4}", m.precision)),
        ("Recall", format!("{:.4}", m.recall)),
        ("F1-score", format!("{:.4}", m.f1)),
        ("Loss", m.mean_loss.map_or("---".into(), |l| format!("{l:.4}"))),
        ("Support", m.support.to_string()),
    ];
    if !m.zero_division.is_empty() {
        pairs.push(("Zero division", format!("{:?}", m.zero_division)));
    }
    pairs
}

fn cmd_estimate(ctx: &mut Context, a: &EstimateArgs) -> Result<()> {
    let models = select_models(&ctx.registry, &a.model)?;
    let hardware = select_hardware(&ctx.registry, &a.hardware)?;
    let workload = WorkloadSpec {
        batch_size: a.batch,
        seq_length: a.seq_len,
        bytes_per_scalar: a.fpa,
        runtime_overhead_bytes: a
            .overhead_mb
            .checked_mul(MB)
            .ok_or_else(|| usage("overhead too large"))?,
    };
    workload.validate().map_err(|e| usage(e.to_string()))?;
    let table = CostTable::build(&models, &hardware, &workload)?;
    let mut reports = Vec::new();
    for m in &models {
        for h in &hardware {
            reports.push(estimate(m, &workload, h)?);
        }
    }
    ctx.write_json("estimate.json", &reports)?;
    let rendering = match ctx.format {
        Format::Md => table.to_markdown(),
        Format::Csv => table.to_csv(),
    };
    ctx.emit("estimate", &rendering)
}

#[derive(Serialize)]
struct SynthSummary<'a> {
    records: usize,
    attacks: usize,
    informative: &'a [usize],
    informative_names: Vec<String>,
    weights: &'a [f64],
    out: &'a Path,
}

fn cmd_synth(ctx: &mut Context, a: &SynthArgs) -> Result<()> {
    let mut config = SynthConfig::new(a.rows, a.features, a.informative, a.attack_fraction, ctx.seed);
    config.family_seed = a.family_seed;
    config.levels = a.levels;
    config.label_noise = a.label_noise;
    ctx.seed("family", a.family_seed.unwrap_or(ctx.seed));
    let data = synth_generate(&config).map_err(data_error)?;
    save_prepared(&a.out, &data.records)?;
    ctx.track(&a.out);
    if let Some(path) = &a.table {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        data.table.write_csv(file)?;
        ctx.track(path);
    }
    let summary = SynthSummary {
        records: data.records.len(),
        attacks: data.records.iter().filter(|r| r.binary_label == 1).count(),
        informative: &data.informative,
        informative_names: data.informative.iter().map(|&i| format!("f{i}")).collect(),
        weights: &data.weights,
        out: &a.out,
    };
    ctx.write_json("synth.json", &summary)?;
    println!(
        "wrote {} records ({} attacks) to {}",
        summary.records,
        summary.attacks,
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PrepareSummary<'a> {
    dataset: &'a str,
    rows: usize,
    records: usize,
    attacks: usize,
    classes: &'a [String],
    out: &'a Path,
}

fn cmd_prepare(ctx: &mut Context, a: &PrepareArgs) -> Result<()> {
    let (descriptor, table) = load_dataset(ctx, &a.dataset, &a.input)?;
    let codec = fit_label_codec(&table, descriptor.primary_label()).map_err(data_error)?;
    let mut records = prepare(&table, &descriptor, &codec).map_err(data_error)?;
    if let Some(limit) = a.limit {
        ctx.seed("limit", ctx.seed);
        records = few_shot_subsample(&records, limit, ctx.seed).map_err(data_error)?;
    }
    save_prepared(&a.out, &records)?;
    ctx.track(&a.out);
    let summary = PrepareSummary {
        dataset: &descriptor.name,
        rows: table.rows.len(),
        records: records.len(),
        attacks: records.iter().filter(|r| r.binary_label == 1).count(),
        classes: &codec.classes,
        out: &a.out,
    };
    ctx.write_json("prepare.json", &summary)?;
    println!("wrote {} records to {}", summary.records, a.out.display());
    Ok(())
}

fn cmd_train(ctx: &mut Context, a: &TrainArgs) -> Result<()> {
    let records = load_records(ctx, &a.data)?;
    let config = train_config(ctx, &a.train)?;
    let mode = match a.mode {
        Mode::ZeroShot => ExperimentMode::ZeroShot,
        Mode::FewShot => ExperimentMode::FewShot,
        Mode::Complete => ExperimentMode::Complete,
    };
    if !(a.train_ratio > 0.0 && a.train_ratio < 1.0) {
        return Err(usage(format!("--train-ratio must be in (0, 1), got {}", a.train_ratio)));
    }
    let name = a.name.clone().unwrap_or_else(|| stem(&a.data));
    let mut spec = ExperimentSpec::new(mode, name, config, ctx.seed);
    spec.train_ratio = a.train_ratio;
    spec.few_shot_limit = a.few_shot_limit;
    ctx.seed("split", spec.seed);

    let outcome = run_experiment_full(&spec, &records, None, &SystemClock::new())?;
    let plan = split(records.len(), spec.train_ratio, spec.seed)?;
    let held_out: Vec<LabeledRecord> = plan.apply(&records).1.into_iter().cloned().collect();
    save_prepared(ctx.output("heldout.prep"), &held_out)?;
    save_checkpoint(ctx.output("model.ckpt"), &outcome.state)?;
    save_predictions(ctx.output("train.predictions"), &outcome.predictions)?;
    ctx.write_json("train.json", &outcome.report)?;
    let rendering = emit_report(std::slice::from_ref(&outcome.report), ctx.report_format());
    ctx.emit("train", &rendering)
}

#[derive(Serialize)]
struct EvalSummary {
    records: usize,
    metrics: MetricsReport,
    confusion: edgeslm_core::harness::ConfusionCounts,
}

fn cmd_eval(ctx: &mut Context, a: &EvalArgs) -> Result<()> {
    ctx.input(&a.checkpoint)?;
    let state = load_checkpoint(&a.checkpoint)?;
    let records = load_records(ctx, &a.data)?;
    let (predictions, metrics, confusion) = evaluate(&state, &records)?;
    save_predictions(ctx.output("eval.predictions"), &predictions)?;
    let rendering = render_pairs(ctx.format, &metric_pairs(&metrics));
    ctx.write_json(
        "eval.json",
        &EvalSummary {
            records: records.len(),
            metrics,
            confusion,
        },
    )?;
    ctx.emit("eval", &rendering)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn cmd_cross_eval(ctx: &mut Context, a: &CrossEvalArgs) -> Result<()> {
    let regime = match a.regime {
        RegimeArg::FewShot => Regime::FewShot,
        RegimeArg::Complete => Regime::Complete,
    };
    let config = train_config(ctx, &a.train_opts)?;
    ctx.seed("split", ctx.seed);
    let clock = SystemClock::new();
    match (&a.train, &a.eval) {
        (Some(train_path), Some(eval_path)) => {
            let (train_name, eval_name) = (stem(train_path), stem(eval_path));
            if same_file(train_path, eval_path) || train_name.eq_ignore_ascii_case(&eval_name) {
                return Err(usage(format!(
                    "cross-eval needs two different datasets, got `{}` twice",
                    train_name
                )));
            }
            let train = load_records(ctx, train_path)?;
            let eval = load_records(ctx, eval_path)?;
            let mut spec = ExperimentSpec::cross(regime, train_name, eval_name, config, ctx.seed);
            spec.few_shot_limit = a.few_shot_limit;
            let outcome = run_experiment_full(&spec, &train, Some(&eval), &clock)?;
            save_predictions(ctx.output("cross-eval.predictions"), &outcome.predictions)?;
            ctx.write_json("cross-eval.json", &outcome.report)?;
            let rendering = emit_report(std::slice::from_ref(&outcome.report), ctx.report_format());
            ctx.emit("cross-eval", &rendering)
        }
        _ if a.data.len() >= 2 => {
            let mut datasets: Vec<(String, Vec<LabeledRecord>)> = Vec::new();
            for (i, path) in a.data.iter().enumerate() {
                let name = stem(path);
                if a.data[..i].iter().any(|p| same_file(p, path) || stem(p).eq_ignore_ascii_case(&name)) {
                    return Err(usage(format!("dataset `{name}` given twice")));
                }
                datasets.push((name, load_records(ctx, path)?));
            }
            let matrix = cross_matrix(&datasets, regime, &config, ctx.seed, &clock)?;
            ctx.write_json("cross-eval.json", &matrix)?;
            let rendering = match ctx.format {
                Format::Md => matrix.to_markdown(),
                Format::Csv => matrix.to_csv(),
            };
            ctx.emit("cross-eval", &rendering)
        }
        _ => Err(usage("cross-eval needs --train and --eval, or --data with two or more files")),
    }
}

fn cmd_kfold(ctx: &mut Context, a: &KfoldArgs) -> Result<()> {
    if a.k < 2 {
        return Err(usage(format!("--k must be at least 2, got {}", a.k)));
    }
    let records = load_records(ctx, &a.data)?;
    if a.k > records.len() {
        return Err(usage(format!("--k {} exceeds the {} records", a.k, records.len())));
    }
    let config = train_config(ctx, &a.train)?;
    let name = a.name.clone().unwrap_or_else(|| stem(&a.data));
    let report = run_kfold(&name, &records, a.k, &config, ctx.seed, &SystemClock::new())?;
    ctx.seed("folds", report.plan_seed);
    ctx.write_json("kfold.json", &report)?;
    let rendering = emit_report(&report.folds, ctx.report_format());
    ctx.emit("kfold", &rendering)?;
    println!("accuracy spread across folds: {:.4}", report.spread);
    Ok(())
}

fn cmd_select(ctx: &mut Context, a: &SelectArgs) -> Result<()> {
    let methods: Vec<Method> = if a.method.eq_ignore_ascii_case("all") {
        Method::ALL.to_vec()
    } else {
        a.method
            .split(',')
            .map(|m| {
                m.trim().parse::<Method>().map_err(|_| {
                    unknown(
                        "method",
                        m.trim(),
                        Method::ALL.iter().map(|m| m.to_string()).chain(["all".into()]),
                    )
                })
            })
            .collect::<Result<_>>()?
    };
    let (descriptor, table) = load_dataset(ctx, &a.dataset, &a.input)?;
    let (x, encoded) = NumericMatrix::from_table(&table, &descriptor)?;
    let y = binary_target(&table, &descriptor)?;
    let p = x.n_cols();
    if let Some(n) = a.n_keep {
        if n == 0 || n > p {
            return Err(usage(format!("--n-keep must be in 1..={p}, got {n}")));
        }
    }

    let mut results: Vec<SelectionResult> = Vec::new();
    for method in methods {
        let result = match method {
            Method::Lasso => {
                let lambda = match a.lambda {
                    Some(l) => l,
                    None => {
                        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
                        let mean = yf.iter().sum::<f64>() / yf.len().max(1) as f64;
                        let centered: Vec<f64> = yf.iter().map(|v| v - mean).collect();
                        0.05 * lambda_max(&standardize(&x).matrix, &centered)
                    }
                };
                let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
                lasso(&x, &yf, &LassoConfig::new(lambda))?.0
            }
            Method::Rfe => {
                let mut config = RfeConfig::new(a.n_keep.unwrap_or(p.div_ceil(2)));
                config.train.seed = ctx.seed;
                rfe(&x, &y, &config)?
            }
            Method::Pca => {
                let k = a.components.unwrap_or(p.min(3));
                pca(&x, &PcaConfig { k, n_keep: a.n_keep })?.0
            }
            Method::RandomForest => {
                let config = ForestConfig {
                    n_trees: a.trees,
                    max_depth: a.max_depth,
                    seed: ctx.seed,
                    n_keep: a.n_keep,
                };
                random_forest_importance(&x, &y, &config)?
            }
            Method::Correlation => correlation_filter(&x, a.threshold)?,
        };
        let path = ctx.output(&format!("select-features.{}.csv", method.as_str()));
        result.write_csv(File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
        results.push(result);
    }
    if !encoded.is_empty() {
        eprintln!("ordinal-encoded non-numeric columns: {}", encoded.join(", "));
    }
    ctx.write_json("select-features.json", &results)?;

    let mut rendering = String::new();
    match ctx.format {
        Format::Md => {
            rendering.push_str("| Method | Kept | Features | Notes |\n|---|---|---|---|\n");
            for r in &results {
                let _ = writeln!(
                    rendering,
                    "| {} | {} | {} | {} |",
                    r.method,
                    r.kept.len(),
                    r.kept_names().join(", "),
                    r.flags.join("; ")
                );
            }
        }
        Format::Csv => {
            rendering.push_str("method,kept,features\n");
            for r in &results {
                let _ = writeln!(rendering, "{},{},\"{}\"", r.method, r.kept.len(), r.kept_names().join(" "));
            }
        }
    }
    ctx.emit("select-features", &rendering)
}

#[derive(Serialize)]
struct SimSummary<'a> {
    report: &'a SimReport,
    stability: Option<Stability>,
    realtime: bool,
    primary_task_cycles: Option<u64>,
    error: Option<&'a str>,
}

fn classifier(ctx: &mut Context, checkpoint: Option<&Path>) -> Result<ClassifierState> {
    match checkpoint {
        Some(path) => {
            ctx.input(path)?;
            Ok(load_checkpoint(path)?)
        }
        None => Ok(ClassifierState::untrained(HashedFeaturizer::new(
            TrainConfig::default().hash_dimension,
            0,
        )?)),
    }
}

fn cmd_simulate(ctx: &mut Context, a: &SimulateArgs) -> Result<()> {
    let source = if let Some(s) = a.service_time {
        LatencySource::Fixed(s)
    } else if a.measured || a.realtime {
        LatencySource::Measured(Arc::new(classifier(ctx, a.checkpoint.as_deref())?))
    } else {
        let (Some(model), Some(hardware)) = (&a.model, &a.hardware) else {
            return Err(usage("simulate needs --model and --hardware, --service-time, or --measured"));
        };
        let model = select_models(&ctx.registry, model)?;
        let hardware = select_hardware(&ctx.registry, hardware)?;
        let ([model], [hardware]) = (model.as_slice(), hardware.as_slice()) else {
            return Err(usage("simulate takes exactly one model and one hardware profile"));
        };
        let unit = match &a.unit {
            Some(u) => hardware
                .unit(u)
                .map(|u| u.name.clone())
                .ok_or_else(|| unknown("unit", u, hardware.units.iter().map(|u| u.name.clone())))?,
            None => hardware.units[0].name.clone(),
        };
        LatencySource::Analytical {
            model: (*model).clone(),
            hardware: (*hardware).clone(),
            unit,
            workload: WorkloadSpec::default(),
        }
    };
    let mut config = SimConfig::new(source, a.duration);
    config.arrival_interval = a.interval;
    config.queue_capacity = a.capacity;
    config.primary_task_share = a.share;
    config.validate().map_err(|e| usage(e.to_string()))?;

    let (report, stability, cycles, error) = if a.realtime {
        let LatencySource::Measured(state) = &config.latency_source else {
            bail!("real-time runs need a classifier");
        };
        let state = Arc::clone(state);
        let packets: Vec<String> = match &a.packets {
            Some(path) => load_records(ctx, path)?.into_iter().map(|r| r.text).collect(),
            None => synth_generate(&SynthConfig::new(64, 16, 4, 0.5, ctx.seed))?
                .records
                .into_iter()
                .map(|r| r.text)
                .collect(),
        };
        let out = run_realtime(&config, state.as_ref(), &packets)?;
        (out.report, None, Some(out.primary_task_cycles), out.error)
    } else {
        let out = simulate_queue(&config)?;
        let path = ctx.output("simulate.trajectory.csv");
        out.write_trajectory_csv(File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
        (out.report, Some(out.stability), None, None)
    };
    ctx.write_json(
        "simulate.json",
        &SimSummary {
            report: &report,
            stability,
            realtime: a.realtime,
            primary_task_cycles: cycles,
            error: error.as_deref(),
        },
    )?;

    let mut pairs = vec![
        ("Arrivals", report.arrivals.to_string()),
        ("Completed", report.completed.to_string()),
        ("Dropped", report.dropped.to_string()),
        ("Final backlog", report.final_backlog.to_string()),
        ("Max backlog", report.max_backlog.to_string()),
        ("Mean sojourn (s)", format!("{:.4}", report.mean_sojourn)),
        ("Utilization", format!("{:.4}", report.utilization)),
        ("Service time (s)", format!("{:.6}", report.service_time)),
    ];
    if let Some(s) = stability {
        pairs.push(("Rho", format!("{:.6}", s.rho)));
        let verdict = match s.verdict {
            StabilityVerdict::Stable => "stable",
            StabilityVerdict::Saturated => "saturated",
        };
        pairs.push(("Verdict", verdict.to_string()));
    }
    if let Some(c) = cycles {
        pairs.push(("Primary task cycles", c.to_string()));
    }
    let rendering = render_pairs(ctx.format, &pairs);
    ctx.emit("simulate", &rendering)?;
    if let Some(e) = error {
        bail!("classifier failed during the run: {e}");
    }
    Ok(())
}

fn cmd_score(ctx: &mut Context, a: &ScoreArgs) -> Result<()> {
    ctx.input(&a.predictions)?;
    let score = score_prediction_file(&a.predictions)?;
    ctx.write_json("score-preds.json", &score)?;
    let rendering = render_pairs(ctx.format, &metric_pairs(&score.metrics));
    ctx.emit("score-preds", &rendering)
}

fn reports_in(value: serde_json::Value) -> Option<Vec<ExperimentReport>> {
    if let Ok(r) = serde_json::from_value::<ExperimentReport>(value.clone()) {
        return Some(vec![r]);
    }
    if let Ok(rs) = serde_json::from_value::<Vec<ExperimentReport>>(value.clone()) {
        return Some(rs);
    }
    if let Ok(k) = serde_json::from_value::<KFoldReport>(value.clone()) {
        return Some(k.folds);
    }
    if let Ok(m) = serde_json::from_value::<CrossMatrix>(value) {
        return Some(m.cells.into_iter().flatten().flatten().collect());
    }
    None
}

fn cmd_report(ctx: &mut Context, a: &ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &a.inputs {
        ctx.input(path)?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        match reports_in(value) {
            Some(rs) => reports.extend(rs),
            None => bail!("{} holds no experiment reports", path.display()),
        }
    }
    let rendering = emit_report(&reports, ctx.report_format());
    ctx.emit("report", &rendering)
}

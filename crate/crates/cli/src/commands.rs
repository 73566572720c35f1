//! Implementations of the five subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tabcav_core::data::{
    demographic_parity, gen_biased_income, gen_xor_synthetic, load_csv, protected_column,
    write_csv, Dataset, INCOME_GROUP_A, INCOME_GROUP_B, INCOME_POSITIVE_CLASS,
    INCOME_PROTECTED_COLUMN,
};
use tabcav_core::model::{self, ModelConfig, ModelError, TrainedModel};
use tabcav_core::predicate::{parse_predicate, Predicate};
use tabcav_core::tcav::{
    derive_seed, fairness_audit, run_tcav, FairnessConfig, ScoreVariant, TcavConfig, TcavError,
    TcavReport,
};

use crate::artifacts::{
    config_hash, ensure_parent, resolve_out, sidecar_path, write_json, write_run_stamp, FileReport,
    CLI_SCHEMA_VERSION, TOOL_VERSION,
};
use crate::{
    usage, CliError, DataKind, FairnessArgs, ModelArgs, SweepBiasArgs, SynthDataArgs, TcavArgs,
    TrainArgs,
};

impl ModelArgs {
    fn to_config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden.clone(),
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            l2: self.l2,
            validation_fraction: self.validation_fraction,
        }
    }
}

fn internal(err: impl std::error::Error + Send + Sync + 'static) -> CliError {
    CliError::Internal(anyhow::Error::new(err))
}

/// Failures while reading user-supplied inputs are configuration errors.
fn input_error(err: impl std::fmt::Display) -> CliError {
    usage(err.to_string())
}

fn train_error(err: model::TrainError) -> CliError {
    match &err {
        model::TrainError::Diverged { .. } => internal(err),
        _ => usage(err.to_string()),
    }
}

/// Split pipeline errors by who can fix them: bad names and predicates are
/// usage errors, everything else is an internal failure.
fn tcav_error(err: TcavError) -> CliError {
    match &err {
        TcavError::BadProtectedColumn { .. }
        | TcavError::ProtectedValueAbsent { .. }
        | TcavError::UnknownClassLabel(_)
        | TcavError::Predicate(_) => usage(err.to_string()),
        TcavError::Model(ModelError::UnknownLayer(_)) => usage(err.to_string()),
        _ => internal(err),
    }
}

fn parse_source(text: &str) -> Result<tabcav_core::cav::CavSource, CliError> {
    text.parse().map_err(usage)
}

fn parse_variant(text: &str) -> Result<ScoreVariant, CliError> {
    text.parse().map_err(usage)
}

fn check_n_runs(n_runs: usize) -> Result<(), CliError> {
    if n_runs < 2 {
        return Err(usage("--n-runs must be at least 2"));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Reject unknown layer names up front, listing the valid ones.
fn check_layers(model: &TrainedModel, layers: &[String]) -> Result<(), CliError> {
    for layer in layers {
        if model.layer_index(layer).is_err() {
            return Err(usage(format!(
                "unknown layer `{layer}`; model layers are: {}",
                model.layer_names().join(", ")
            )));
        }
    }
    Ok(())
}

/// Class indices in reports and gradients are positions in the label's
/// class list, so the data file must agree with the model about it.
fn check_classes(model: &TrainedModel, ds: &Dataset, what: &str) -> Result<(), CliError> {
    let data_classes = ds.schema().label.classes.as_slice();
    if data_classes != model.classes() {
        return Err(usage(format!(
            "label classes in {what} ({data_classes:?}) do not match the model's ({:?})",
            model.classes()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth-data

#[derive(Serialize)]
struct SynthMeta<'a> {
    schema_version: u32,
    tool_version: &'a str,
    kind: &'a str,
    n: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_epsilon: Option<f64>,
    /// Demographic parity measured on the written labels.
    #[serde(skip_serializing_if = "Option::is_none")]
    measured_epsilon: Option<f64>,
    columns: Vec<&'a str>,
    label: &'a str,
    classes: &'a [String],
}

/// Demographic parity of the labels themselves (not model predictions)
/// for the income table.
fn label_parity(ds: &Dataset) -> Result<f64, CliError> {
    let protected = protected_column(ds, INCOME_PROTECTED_COLUMN).map_err(internal)?;
    let positive = ds
        .schema()
        .label
        .classes
        .iter()
        .position(|c| c == INCOME_POSITIVE_CLASS)
        .ok_or_else(|| {
            usage(format!(
                "income data lacks a `{INCOME_POSITIVE_CLASS}` class"
            ))
        })?;
    demographic_parity(
        ds.labels(),
        &protected,
        INCOME_GROUP_A,
        INCOME_GROUP_B,
        positive,
    )
    .map_err(internal)
}

pub fn synth_data(args: SynthDataArgs) -> Result<(), CliError> {
    let started = Instant::now();
    if args.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let (ds, target_epsilon) = match args.kind {
        DataKind::Xor => {
            if args.epsilon.is_some() {
                return Err(usage("--epsilon only applies to the income dataset"));
            }
            (gen_xor_synthetic(args.n, args.seed), None)
        }
        DataKind::Income => {
            let eps = args.epsilon.unwrap_or(0.0);
            (
                gen_biased_income(args.n, eps, args.seed).map_err(input_error)?,
                Some(eps),
            )
        }
    };

    let out = resolve_out(args.out, &format!("{}.csv", args.kind.name()));
    ensure_parent(&out)?;
    write_csv(&ds, &out).map_err(internal)?;

    let measured_epsilon = match target_epsilon {
        Some(_) => Some(label_parity(&ds)?),
        None => None,
    };
    let schema = ds.schema();
    let meta = SynthMeta {
        schema_version: CLI_SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        kind: args.kind.name(),
        n: args.n,
        seed: args.seed,
        target_epsilon,
        measured_epsilon,
        columns: schema.columns.iter().map(|c| c.name.as_str()).collect(),
        label: &schema.label.name,
        classes: &schema.label.classes,
    };
    write_json(&sidecar_path(&out, "meta"), &meta)?;
    write_run_stamp(&out, "synth-data", started)?;

    match measured_epsilon {
        Some(eps) => println!(
            "wrote {} rows to {} (label parity {eps:+.4})",
            args.n,
            out.display()
        ),
        None => println!("wrote {} rows to {}", args.n, out.display()),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Serialize)]
struct TrainMetrics<'a> {
    schema_version: u32,
    tool_version: &'a str,
    data: String,
    label: &'a str,
    config: &'a ModelConfig,
    classes: &'a [String],
    layers: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    train_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_accuracy: Option<f64>,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let cfg = args.model.to_config(args.seed);
    let ds = load_csv(&args.data, &args.label).map_err(input_error)?;
    let trained = model::train(&ds, &cfg).map_err(train_error)?;

    let test_accuracy = match &args.test_data {
        Some(path) => {
            let test = load_csv(path, &args.label).map_err(input_error)?;
            check_classes(&trained, &test, "--test-data")?;
            Some(trained.accuracy(&test).map_err(input_error)?)
        }
        None => None,
    };

    let out = resolve_out(args.out, "model.json");
    ensure_parent(&out)?;
    model::save_model(&trained, &out).map_err(internal)?;

    let metrics = TrainMetrics {
        schema_version: CLI_SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        data: args.data.display().to_string(),
        label: &args.label,
        config: &cfg,
        classes: trained.classes(),
        layers: trained.layer_names(),
        train_accuracy: trained.train_accuracy(),
        validation_accuracy: trained.validation_accuracy(),
        test_accuracy,
    };
    write_json(&sidecar_path(&out, "metrics"), &metrics)?;
    write_run_stamp(&out, "train", started)?;

    let fmt = |acc: Option<f64>| match acc {
        Some(a) => format!("{a:.4}"),
        None => "-".to_string(),
    };
    println!(
        "trained on {} rows; accuracy train {} / validation {} / test {}; wrote {}",
        ds.len(),
        fmt(trained.train_accuracy()),
        fmt(trained.validation_accuracy()),
        fmt(test_accuracy),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// tcav

/// Strip a `#` comment, ignoring `#` inside string literals.
fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    for (i, ch) in line.char_indices() {
        match quote {
            Some(q) if ch == q => quote = None,
            Some(_) => {}
            None => match ch {
                '\'' | '"' => quote = Some(ch),
                '#' => return &line[..i],
                _ => {}
            },
        }
    }
    line
}

/// Gather concepts from repeated `--concept` flags plus the optional
/// concepts file (one predicate per line, `#` comments).
fn collect_concepts(
    inline: &[String],
    file: Option<&Path>,
) -> Result<(Vec<String>, Vec<Predicate>), CliError> {
    let mut texts: Vec<String> = Vec::new();
    let mut predicates = Vec::new();
    for (i, text) in inline.iter().enumerate() {
        let pred =
            parse_predicate(text).map_err(|e| usage(format!("--concept #{}: {e}", i + 1)))?;
        texts.push(text.trim().to_string());
        predicates.push(pred);
    }
    if let Some(path) = file {
        let body = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read `{}`: {e}", path.display())))?;
        for (lineno, raw) in body.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let pred = parse_predicate(line)
                .map_err(|e| usage(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            texts.push(line.to_string());
            predicates.push(pred);
        }
    }
    if predicates.is_empty() {
        return Err(usage(
            "no concepts given; pass --concept or --concepts-file",
        ));
    }
    Ok((texts, predicates))
}

#[derive(Serialize)]
struct TcavInvocation<'a> {
    command: &'a str,
    model: String,
    data: String,
    label: &'a str,
    concepts: &'a [String],
    config: &'a TcavConfig,
}

/// One row per concept × class × layer × run, for plotting.
fn write_plot_csv(path: &Path, report: &TcavReport) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write `{}`", path.display()))?;
    w.write_record([
        "concept",
        "class",
        "layer",
        "run",
        "score",
        "angle_degrees",
        "accuracy_mean",
        "accuracy_std",
        "p_value",
        "passed",
    ])
    .context("plot csv")?;
    for r in &report.results {
        for (run, (score, angle)) in r.scores.iter().zip(&r.angles).enumerate() {
            w.write_record([
                r.concept.as_str(),
                r.class_label.as_str(),
                r.layer.as_str(),
                &run.to_string(),
                &format!("{score}"),
                &format!("{angle}"),
                &format!("{}", r.accuracy_mean),
                &format!("{}", r.accuracy_std),
                &format!("{}", r.p_value),
                if r.passed { "true" } else { "false" },
            ])
            .context("plot csv")?;
        }
    }
    w.flush().context("plot csv")?;
    Ok(())
}

pub fn tcav(args: TcavArgs) -> Result<(), CliError> {
    let started = Instant::now();
    check_n_runs(args.n_runs)?;
    check_alpha(args.alpha)?;
    if args.examples_per_side < tabcav_core::cav::MIN_EXAMPLES_PER_SIDE {
        return Err(usage(format!(
            "--examples-per-side must be at least {}",
            tabcav_core::cav::MIN_EXAMPLES_PER_SIDE
        )));
    }
    let source = parse_source(&args.source)?;
    let score_variant = parse_variant(&args.score_variant)?;
    let (texts, predicates) = collect_concepts(&args.concepts, args.concepts_file.as_deref())?;

    let trained = model::load_model(&args.model).map_err(input_error)?;
    let data = load_csv(&args.data, &args.label).map_err(input_error)?;
    check_classes(&trained, &data, "--data")?;
    check_layers(&trained, &args.layers)?;

    let cfg = TcavConfig {
        layers: args.layers.clone(),
        n_runs: args.n_runs,
        alpha: args.alpha,
        examples_per_side: args.examples_per_side,
        seed: args.seed,
        source,
        score_variant,
    };
    let report = run_tcav(&trained, &data, &predicates, &cfg).map_err(tcav_error)?;

    let out = resolve_out(args.out, "tcav.json");
    let plot = args
        .plot_csv
        .unwrap_or_else(|| out.with_extension("plot.csv"));
    let envelope = FileReport {
        tool_version: TOOL_VERSION,
        invocation: TcavInvocation {
            command: "tcav",
            model: args.model.display().to_string(),
            data: args.data.display().to_string(),
            label: &args.label,
            concepts: &texts,
            config: &cfg,
        },
        report: &report,
    };
    write_json(&out, &envelope)?;
    write_plot_csv(&plot, &report)?;
    write_run_stamp(&out, "tcav", started)?;

    let passed = report.results.iter().filter(|r| r.passed).count();
    println!(
        "{passed} of {} concept x class x layer cells passed at alpha {}; wrote {} and {}",
        report.results.len(),
        args.alpha,
        out.display(),
        plot.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fairness

#[derive(Serialize)]
struct FairnessInvocation<'a> {
    command: &'a str,
    model: String,
    data: String,
    label: &'a str,
    protected_column: &'a str,
    protected_value: &'a str,
    config: &'a FairnessConfig,
}

pub fn fairness(args: FairnessArgs) -> Result<(), CliError> {
    let started = Instant::now();
    check_n_runs(args.n_runs)?;
    check_alpha(args.alpha)?;
    let score_variant = parse_variant(&args.score_variant)?;

    let trained = model::load_model(&args.model).map_err(input_error)?;
    let data = load_csv(&args.data, &args.label).map_err(input_error)?;
    check_classes(&trained, &data, "--data")?;
    check_layers(&trained, &args.layers)?;

    let cfg = FairnessConfig {
        layers: args.layers.clone(),
        n_runs: args.n_runs,
        alpha: args.alpha,
        seed: args.seed,
        positive_class: args.positive_class.clone(),
        score_variant,
    };
    let report = fairness_audit(
        &trained,
        &data,
        &args.protected_column,
        &args.protected_value,
        &cfg,
    )
    .map_err(tcav_error)?;

    let out = resolve_out(args.out, "fairness.json");
    let envelope = FileReport {
        tool_version: TOOL_VERSION,
        invocation: FairnessInvocation {
            command: "fairness",
            model: args.model.display().to_string(),
            data: args.data.display().to_string(),
            label: &args.label,
            protected_column: &args.protected_column,
            protected_value: &args.protected_value,
            config: &cfg,
        },
        report: &report,
    };
    write_json(&out, &envelope)?;
    write_run_stamp(&out, "fairness", started)?;

    let widest = report
        .entries
        .iter()
        .max_by(|a, b| a.gap.abs().total_cmp(&b.gap.abs()));
    match widest {
        Some(e) => println!(
            "demographic parity {:+.4}; widest TCAV gap {:.4} at class `{}` layer `{}`; wrote {}",
            report.epsilon,
            e.gap,
            e.class_label,
            e.layer,
            out.display()
        ),
        None => println!(
            "demographic parity {:+.4}; wrote {}",
            report.epsilon,
            out.display()
        ),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-bias

/// Everything that determines one sweep entry's outputs. Hashed for
/// resumability: a cached entry is reused only if its hash still matches.
#[derive(Clone, Serialize, Deserialize)]
struct SweepEntryConfig {
    tool_version: String,
    epsilon: f64,
    n: usize,
    eval_n: usize,
    data_seed: u64,
    eval_seed: u64,
    audit_seed: u64,
    model: ModelConfig,
    n_runs: usize,
    alpha: f64,
    protected_column: String,
    protected_value: String,
    positive_class: String,
}

/// One summary line of the sweep, also a CSV row.
#[derive(Clone, Serialize, Deserialize)]
struct SweepRow {
    epsilon_target: f64,
    epsilon_model: f64,
    class: String,
    layer: String,
    gap: f64,
    angle_c1: f64,
    angle_c2: f64,
    score_c1: f64,
    score_c2: f64,
    accuracy_c1: f64,
    accuracy_c2: f64,
    p_value_c1: f64,
    p_value_c2: f64,
    passed_c1: bool,
    passed_c2: bool,
}

/// `entry.json`, the per-ε cache unit.
#[derive(Serialize, Deserialize)]
struct SweepEntryFile {
    schema_version: u32,
    tool_version: String,
    config_hash: String,
    config: SweepEntryConfig,
    /// Demographic parity of the generated training labels.
    epsilon_data: f64,
    rows: Vec<SweepRow>,
}

struct EntryPlan {
    cfg: SweepEntryConfig,
    hash: String,
    dir: PathBuf,
}

#[derive(Serialize)]
struct ModelEcho<'a> {
    hidden: &'a [usize],
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    l2: f64,
    validation_fraction: f64,
}

#[derive(Serialize)]
struct SweepInvocation<'a> {
    command: &'a str,
    epsilons: &'a [f64],
    n: usize,
    eval_n: usize,
    n_runs: usize,
    alpha: f64,
    protected_column: &'a str,
    protected_value: &'a str,
    positive_class: &'a str,
    seed: u64,
    model: ModelEcho<'a>,
}

/// The deterministic master report of a sweep (`sweep.json`).
#[derive(Serialize)]
struct SweepReport<'a> {
    schema_version: u32,
    tool_version: &'a str,
    invocation: SweepInvocation<'a>,
    entries: Vec<SweepEntrySummary<'a>>,
    rows: Vec<&'a SweepRow>,
}

#[derive(Serialize)]
struct SweepEntrySummary<'a> {
    dir: String,
    config_hash: &'a str,
    epsilon_target: f64,
    epsilon_data: f64,
}

/// Timing sidecar for the sweep; the only file recording cache hits.
#[derive(Serialize)]
struct SweepStamp<'a> {
    tool_version: &'a str,
    command: &'a str,
    unix_time_seconds: u64,
    elapsed_seconds: f64,
    jobs: usize,
    reused: Vec<bool>,
}

fn run_sweep_entry(plan: &EntryPlan) -> Result<(SweepEntryFile, bool), CliError> {
    let entry_path = plan.dir.join("entry.json");
    if let Ok(text) = std::fs::read_to_string(&entry_path) {
        if let Ok(prev) = serde_json::from_str::<SweepEntryFile>(&text) {
            if prev.config_hash == plan.hash {
                return Ok((prev, true));
            }
        }
    }

    std::fs::create_dir_all(&plan.dir)
        .with_context(|| format!("cannot create `{}`", plan.dir.display()))?;
    let cfg = &plan.cfg;
    let train_ds = gen_biased_income(cfg.n, cfg.epsilon, cfg.data_seed).map_err(internal)?;
    let eval_ds = gen_biased_income(cfg.eval_n, cfg.epsilon, cfg.eval_seed).map_err(internal)?;
    let trained = model::train(&train_ds, &cfg.model).map_err(train_error)?;
    model::save_model(&trained, plan.dir.join("model.json")).map_err(internal)?;

    let audit_cfg = FairnessConfig {
        layers: Vec::new(),
        n_runs: cfg.n_runs,
        alpha: cfg.alpha,
        seed: cfg.audit_seed,
        positive_class: Some(cfg.positive_class.clone()),
        score_variant: ScoreVariant::MeanDerivative,
    };
    let report = fairness_audit(
        &trained,
        &eval_ds,
        &cfg.protected_column,
        &cfg.protected_value,
        &audit_cfg,
    )
    .map_err(tcav_error)?;
    let envelope = FileReport {
        tool_version: TOOL_VERSION,
        invocation: cfg,
        report: &report,
    };
    write_json(&plan.dir.join("fairness.json"), &envelope)?;

    let rows = report
        .entries
        .iter()
        .map(|e| SweepRow {
            epsilon_target: cfg.epsilon,
            epsilon_model: report.epsilon,
            class: e.class_label.clone(),
            layer: e.layer.clone(),
            gap: e.gap,
            angle_c1: e.angle_c1,
            angle_c2: e.angle_c2,
            score_c1: e.c1.score_mean,
            score_c2: e.c2.score_mean,
            accuracy_c1: e.c1.accuracy_mean,
            accuracy_c2: e.c2.accuracy_mean,
            p_value_c1: e.c1.p_value,
            p_value_c2: e.c2.p_value,
            passed_c1: e.c1.passed,
            passed_c2: e.c2.passed,
        })
        .collect();
    let entry = SweepEntryFile {
        schema_version: CLI_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        config_hash: plan.hash.clone(),
        config: cfg.clone(),
        epsilon_data: label_parity(&train_ds)?,
        rows,
    };
    write_json(&entry_path, &entry)?;
    Ok((entry, false))
}

pub fn sweep_bias(args: SweepBiasArgs) -> Result<(), CliError> {
    let started = Instant::now();
    if args.epsilons.is_empty() {
        return Err(usage("--epsilons must list at least one value"));
    }
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    check_n_runs(args.n_runs)?;
    check_alpha(args.alpha)?;
    for &eps in &args.epsilons {
        // Fail fast on infeasible targets before any training happens.
        gen_biased_income(1, eps, 0).map_err(input_error)?;
    }

    let out_dir = resolve_out(args.out_dir, "sweep");
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create `{}`", out_dir.display()))?;

    let plans: Vec<EntryPlan> = args
        .epsilons
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let cfg = SweepEntryConfig {
                tool_version: TOOL_VERSION.to_string(),
                epsilon: eps,
                n: args.n,
                eval_n: args.eval_n,
                data_seed: derive_seed(args.seed, 2 * i as u64),
                eval_seed: derive_seed(args.seed, 2 * i as u64 + 1),
                audit_seed: derive_seed(args.seed, 1_000 + i as u64),
                model: args
                    .model
                    .to_config(derive_seed(args.seed, 2_000 + i as u64)),
                n_runs: args.n_runs,
                alpha: args.alpha,
                protected_column: INCOME_PROTECTED_COLUMN.to_string(),
                protected_value: args.protected_value.clone(),
                positive_class: INCOME_POSITIVE_CLASS.to_string(),
            };
            let hash = config_hash(&cfg);
            let dir = out_dir.join(format!("eps_{i}_{eps}"));
            EntryPlan { cfg, hash, dir }
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.min(plans.len()))
        .build()
        .context("cannot build the sweep thread pool")?;
    let outcomes: Vec<(SweepEntryFile, bool)> = pool.install(|| {
        plans
            .par_iter()
            .map(run_sweep_entry)
            .collect::<Result<_, _>>()
    })?;

    let summary_path = out_dir.join("sweep-summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)
        .with_context(|| format!("cannot write `{}`", summary_path.display()))?;
    for (entry, _) in &outcomes {
        for row in &entry.rows {
            w.serialize(row).context("sweep summary")?;
        }
    }
    w.flush().context("sweep summary")?;

    let report = SweepReport {
        schema_version: CLI_SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        invocation: SweepInvocation {
            command: "sweep-bias",
            epsilons: &args.epsilons,
            n: args.n,
            eval_n: args.eval_n,
            n_runs: args.n_runs,
            alpha: args.alpha,
            protected_column: INCOME_PROTECTED_COLUMN,
            protected_value: &args.protected_value,
            positive_class: INCOME_POSITIVE_CLASS,
            seed: args.seed,
            model: ModelEcho {
                hidden: &args.model.hidden,
                learning_rate: args.model.learning_rate,
                batch_size: args.model.batch_size,
                epochs: args.model.epochs,
                l2: args.model.l2,
                validation_fraction: args.model.validation_fraction,
            },
        },
        entries: plans
            .iter()
            .zip(&outcomes)
            .map(|(plan, (entry, _))| SweepEntrySummary {
                dir: plan.dir.display().to_string(),
                config_hash: &plan.hash,
                epsilon_target: entry.config.epsilon,
                epsilon_data: entry.epsilon_data,
            })
            .collect(),
        rows: outcomes.iter().flat_map(|(e, _)| &e.rows).collect(),
    };
    let report_path = out_dir.join("sweep.json");
    write_json(&report_path, &report)?;

    let stamp = SweepStamp {
        tool_version: TOOL_VERSION,
        command: "sweep-bias",
        unix_time_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        jobs: args.jobs,
        reused: outcomes.iter().map(|(_, reused)| *reused).collect(),
    };
    write_json(&sidecar_path(&report_path, "run"), &stamp)?;

    for (plan, (entry, reused)) in plans.iter().zip(&outcomes) {
        let model_eps = entry
            .rows
            .first()
            .map(|r| r.epsilon_model)
            .unwrap_or(f64::NAN);
        println!(
            "eps {:+.3}: data parity {:+.4}, model parity {model_eps:+.4}{} ({})",
            entry.config.epsilon,
            entry.epsilon_data,
            if *reused { " [cached]" } else { "" },
            plan.dir.display()
        );
    }
    println!(
        "wrote {} and {}",
        summary_path.display(),
        report_path.display()
    );
    Ok(())
}

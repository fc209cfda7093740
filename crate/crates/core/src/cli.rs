//! The `premodel` command-line tool.
//!
//! Each subcommand wraps one pipeline stage and writes its artifacts to the
//! output directory. Settings come from built-in defaults, then an optional
//! JSON config file, then flags. Exit codes: 0 success, 1 domain failure,
//! 2 usage error or missing input.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierKind, Hyperparams, TrainerSpec};
use crate::evaluation::{
    comparison_report, kfold_split, stratified_kfold_split, AdaptiveRecipe, ArchitectureChoice, Evaluator, FoldPlan,
    ModelChoice, Policy,
};
use crate::features::{select_features, FeatureSelection, PipelineConfig};
use crate::labeling::{label_dataset, optimal_share, read_labels, write_labels, Criterion, Label, LabeledExample, OutcomeTable};
use crate::model_selection::{select_models, sensitivity_sweep, write_selection_log, write_sweep, SelectionConfig, SelectionMethod, SelectionResult};
use crate::premodel::{load_premodel, save_premodel, FallbackPolicy};
use crate::soundness::{cross_validated_radius_curve, write_radius_curve, RadiusSweepConfig};
use crate::trace_store::{self, Dataset, DatasetMode};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Missing(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) | CliError::Missing(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Missing(m) => write!(f, "missing {m}"),
            CliError::Domain(m) => write!(f, "{m}"),
        }
    }
}

fn domain<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Domain(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchitectureFlag {
    Single,
    Cascade,
    Stacked,
}

#[derive(Debug, Parser)]
#[command(name = "premodel", version, about = "Train and evaluate a premodel that picks an inference model per input")]
pub struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    #[arg(long, global = true)]
    pub features: Option<PathBuf>,
    /// Optional models sidecar CSV.
    #[arg(long, global = true)]
    pub models: Option<PathBuf>,
    /// Score threshold; selects the score criterion.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub method: Option<SelectionMethod>,
    /// Selection threshold in percentage points.
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub architecture: Option<ArchitectureFlag>,
    /// Classifier kind: knn, naive_bayes, decision_tree, linear_svm.
    #[arg(long, global = true)]
    pub kind: Option<ClassifierKind>,
    /// Count-feature classifier for the stacked architecture.
    #[arg(long, global = true)]
    pub count_kind: Option<ClassifierKind>,
    /// `failure`, or a model id to run when the premodel declines.
    #[arg(long, global = true)]
    pub fallback: Option<String>,
    #[arg(long, global = true)]
    pub overhead_ms: Option<f64>,
    #[arg(long, global = true)]
    pub k_folds: Option<usize>,
    /// Comma-separated radii; `inf` allowed.
    #[arg(long, global = true, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub input_id: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check trace and feature files; list violations.
    Validate,
    /// Write the optimum model of every input to labels.csv.
    Label,
    /// Run correlation, greedy and chi-square feature selection.
    SelectFeatures,
    /// Choose the candidate model set.
    SelectModels,
    /// Train a premodel from labels.csv and selection.json.
    Train,
    /// Cross-validate single models, the adaptive policy and the oracle.
    Evaluate,
    /// Dispatch feature rows with a trained premodel.
    Predict,
    /// Selection sensitivity sweep and permissible-distance sweep.
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trace: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub out: PathBuf,
    /// `None` means the boolean goal.
    pub criterion: Option<Criterion>,
    pub selection: SelectionConfig,
    pub pipeline: PipelineConfig,
    pub hyperparams: Hyperparams,
    pub architecture: ArchitectureChoice,
    pub fallback: FallbackPolicy,
    pub overhead_ms: f64,
    pub seed: u64,
    pub k_folds: usize,
    pub stratify: bool,
    /// Run feature selection inside evaluation folds.
    pub feature_selection: bool,
    pub sweep_methods: Vec<SelectionMethod>,
    pub sweep_thetas: Vec<f64>,
    pub radii: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trace: None,
            features: None,
            models: None,
            out: PathBuf::from("out"),
            criterion: None,
            selection: SelectionConfig::default(),
            pipeline: PipelineConfig::default(),
            hyperparams: Hyperparams::default(),
            architecture: ArchitectureChoice::Cascade { kind: ClassifierKind::Knn },
            fallback: FallbackPolicy::ReportFailure,
            overhead_ms: 0.0,
            seed: 0,
            k_folds: 10,
            stratify: false,
            feature_selection: true,
            sweep_methods: SelectionMethod::ALL.to_vec(),
            sweep_thetas: vec![5.0, 2.0, 1.0, 0.5],
            radii: vec![0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0],
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file, then flags. The top-level seed is
    /// copied into every seeded component.
    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let mut cfg = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Missing(format!("config {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = &$flag {
                    $field = v.clone().into();
                }
            };
        }
        set!(cli.trace => cfg.trace);
        set!(cli.features => cfg.features);
        set!(cli.models => cfg.models);
        set!(cli.out => cfg.out);
        set!(cli.seed => cfg.seed);
        set!(cli.method => cfg.selection.method);
        set!(cli.theta => cfg.selection.theta);
        set!(cli.overhead_ms => cfg.overhead_ms);
        set!(cli.k_folds => cfg.k_folds);
        set!(cli.radii => cfg.radii);
        if let Some(t) = cli.threshold {
            cfg.criterion = Some(Criterion::ScoreThreshold { threshold: t });
        }
        if let Some(f) = &cli.fallback {
            cfg.fallback = if f.eq_ignore_ascii_case("failure") {
                FallbackPolicy::ReportFailure
            } else {
                FallbackPolicy::UseModel { model_id: f.clone() }
            };
        }
        let (kind, count_kind) = match cfg.architecture {
            ArchitectureChoice::Single { kind } | ArchitectureChoice::Cascade { kind } => (kind, ClassifierKind::NaiveBayes),
            ArchitectureChoice::Stacked { dense_kind, count_kind } => (dense_kind, count_kind),
        };
        let kind = cli.kind.unwrap_or(kind);
        let count_kind = cli.count_kind.unwrap_or(count_kind);
        let arch = cli.architecture.unwrap_or(match cfg.architecture {
            ArchitectureChoice::Single { .. } => ArchitectureFlag::Single,
            ArchitectureChoice::Cascade { .. } => ArchitectureFlag::Cascade,
            ArchitectureChoice::Stacked { .. } => ArchitectureFlag::Stacked,
        });
        cfg.architecture = match arch {
            ArchitectureFlag::Single => ArchitectureChoice::Single { kind },
            ArchitectureFlag::Cascade => ArchitectureChoice::Cascade { kind },
            ArchitectureFlag::Stacked => ArchitectureChoice::Stacked { dense_kind: kind, count_kind },
        };
        cfg.hyperparams.rng_seed = cfg.seed;
        cfg.pipeline.seed = cfg.seed;
        cfg.hyperparams.check().map_err(|e| CliError::Usage(e.to_string()))?;
        if cfg.k_folds < 2 {
            return Err(CliError::Usage(format!("k_folds must be at least 2, got {}", cfg.k_folds)));
        }
        Ok(cfg)
    }

    fn recipe(&self) -> AdaptiveRecipe {
        AdaptiveRecipe {
            architecture: self.architecture,
            models: ModelChoice::Select(self.selection.clone()),
            hp: self.hyperparams.clone(),
            fallback: self.fallback.clone(),
            overhead_ms: self.overhead_ms,
            feature_selection: self.feature_selection.then(|| self.pipeline.clone()),
        }
    }

    fn trainer(&self) -> TrainerSpec {
        let kind = match self.architecture {
            ArchitectureChoice::Single { kind } | ArchitectureChoice::Cascade { kind } => kind,
            ArchitectureChoice::Stacked { dense_kind, .. } => dense_kind,
        };
        TrainerSpec::new(kind, self.hyperparams.clone())
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn prerequisite(&self, name: &str, made_by: &str) -> Result<PathBuf, CliError> {
        let path = self.artifact(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::Missing(format!("{} (run `premodel {made_by}` first)", path.display())))
        }
    }
}

fn existing(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    let path = path.as_ref().ok_or_else(|| CliError::Usage(format!("--{flag} is required")))?;
    if !path.is_file() {
        return Err(CliError::Missing(format!("--{flag} file {}", path.display())));
    }
    Ok(path.clone())
}

fn models_path(cfg: &RunConfig) -> Result<Option<PathBuf>, CliError> {
    match &cfg.models {
        Some(_) => existing(&cfg.models, "models").map(Some),
        None => Ok(None),
    }
}

fn load(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let trace = existing(&cfg.trace, "trace")?;
    let features = existing(&cfg.features, "features")?;
    let models = models_path(cfg)?;
    trace_store::load_dataset_with_models(&trace, &features, models.as_deref()).map_err(domain)
}

fn criterion(cfg: &RunConfig, dataset: &Dataset) -> Result<Criterion, CliError> {
    match (&cfg.criterion, dataset.mode) {
        (Some(c), _) => Ok(*c),
        (None, DatasetMode::BooleanGoal) => Ok(Criterion::BooleanGoal),
        (None, DatasetMode::Scored) => Err(CliError::Usage("scored trace needs --threshold".into())),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(domain)?;
    text.push('\n');
    trace_store::write_file(path, &text).map_err(domain)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = trace_store::read_file(path).map_err(domain)?;
    serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn folds(cfg: &RunConfig, dataset: &Dataset, table: &OutcomeTable) -> Result<FoldPlan, CliError> {
    let k = cfg.k_folds.min(dataset.features.len());
    let plan = if cfg.stratify {
        stratified_kfold_split(table, k, cfg.seed)
    } else {
        kfold_split(dataset, k, cfg.seed)
    };
    plan.map_err(domain)
}

/// Parses arguments and runs one command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("premodel: {e}");
            e.exit_code()
        }
    }
}

/// Runs the parsed command and returns its one-line summary.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(cli)?;
    if cli.command != Command::Validate {
        std::fs::create_dir_all(&cfg.out)
            .map_err(|e| CliError::Domain(format!("cannot create {}: {e}", cfg.out.display())))?;
    }
    match cli.command {
        Command::Validate => cmd_validate(&cfg),
        Command::Label => cmd_label(&cfg),
        Command::SelectFeatures => cmd_select_features(&cfg),
        Command::SelectModels => cmd_select_models(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::Predict => cmd_predict(&cfg, cli.input_id.as_deref()),
        Command::Sweep => cmd_sweep(&cfg),
    }
}

fn cmd_validate(cfg: &RunConfig) -> Result<String, CliError> {
    let trace = existing(&cfg.trace, "trace")?;
    let features = existing(&cfg.features, "features")?;
    let models = models_path(cfg)?;
    let dataset = trace_store::read_dataset_unchecked(&trace, &features, models.as_deref()).map_err(domain)?;
    let report = trace_store::validate(&dataset);
    if !report.is_clean() {
        let mut msg = format!("{} violation(s)", report.violations.len());
        for v in &report.violations {
            write!(msg, "\n{v}").unwrap();
        }
        return Err(CliError::Domain(msg));
    }
    Ok(format!(
        "ok: {} inputs, {} models, {} records",
        dataset.features.len(),
        dataset.models.len(),
        dataset.records.len()
    ))
}

fn cmd_label(cfg: &RunConfig) -> Result<String, CliError> {
    let dataset = load(cfg)?;
    let labeled = label_dataset(&dataset, &criterion(cfg, &dataset)?).map_err(domain)?;
    write_labels(&labeled, &cfg.artifact("labels.csv")).map_err(domain)?;
    let share = optimal_share(&labeled).map_err(domain)?;
    let parts: Vec<String> = share.iter().map(|(l, s)| format!("{l} {:.1}%", s * 100.0)).collect();
    Ok(format!("labeled {} inputs: {}", labeled.len(), parts.join(", ")))
}

fn cmd_select_features(cfg: &RunConfig) -> Result<String, CliError> {
    let dataset = load(cfg)?;
    let labeled = label_dataset(&dataset, &criterion(cfg, &dataset)?).map_err(domain)?;
    let selection =
        select_features(&labeled, dataset.dense_width(), dataset.vocab_size, &cfg.trainer(), &cfg.pipeline).map_err(domain)?;
    write_json(&selection, &cfg.artifact("feature_selection.json"))?;
    let mut csv = String::from("stage,feature,action,statistic\n");
    for (stage, feature, action, stat) in selection.report_rows(&dataset.dense_names) {
        writeln!(csv, "{stage},{feature},{action},{stat:.6}").unwrap();
    }
    trace_store::write_file(&cfg.artifact("feature_selection.csv"), &csv).map_err(domain)?;
    Ok(format!(
        "kept {} of {} dense features and {} of {} count features",
        selection.kept_dense.len(),
        dataset.dense_width(),
        selection.kept_counts.len(),
        dataset.vocab_size
    ))
}

fn cmd_select_models(cfg: &RunConfig) -> Result<String, CliError> {
    let dataset = load(cfg)?;
    let table = OutcomeTable::build(&dataset, &criterion(cfg, &dataset)?).map_err(domain)?;
    let result = select_models(&table, &cfg.selection).map_err(domain)?;
    write_json(&result, &cfg.artifact("selection.json"))?;
    write_selection_log(&result, &cfg.artifact("selection_log.csv")).map_err(domain)?;
    Ok(format!("selected {} model(s): {}", result.selected.len(), result.selected.join(", ")))
}

fn cmd_train(cfg: &RunConfig) -> Result<String, CliError> {
    let labels_path = cfg.prerequisite("labels.csv", "label")?;
    let selection_path = cfg.prerequisite("selection.json", "select-models")?;
    let dataset = load(cfg)?;
    let table = OutcomeTable::build(&dataset, &criterion(cfg, &dataset)?).map_err(domain)?;
    let labels = read_labels(&labels_path).map_err(domain)?;
    let selection: SelectionResult = read_json(&selection_path)?;
    let labeled: Vec<LabeledExample> = dataset
        .features
        .iter()
        .map(|row| {
            let label = labels
                .get(&row.input_id)
                .cloned()
                .ok_or_else(|| CliError::Domain(format!("labels.csv has no label for `{}`", row.input_id)))?;
            Ok(LabeledExample { input_id: row.input_id.clone(), features: row.clone(), label })
        })
        .collect::<Result<_, CliError>>()?;
    let fs_path = cfg.artifact("feature_selection.json");
    let fs = if fs_path.is_file() {
        read_json(&fs_path)?
    } else {
        FeatureSelection::all(dataset.dense_width(), dataset.vocab_size)
    };
    let premodel = cfg.recipe().build(&labeled, &table, &selection.selected, fs).map_err(domain)?;
    save_premodel(&premodel, &cfg.artifact("premodel.json")).map_err(domain)?;
    Ok(format!(
        "trained premodel over {} on {} inputs",
        premodel.selected_models.join(", "),
        premodel.training_inputs.len()
    ))
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<String, CliError> {
    let dataset = load(cfg)?;
    let ev = Evaluator::new(&dataset, &criterion(cfg, &dataset)?).map_err(domain)?;
    let plan = folds(cfg, &dataset, &ev.table)?;
    let mut policies: Vec<(String, Policy)> =
        ev.table.models.iter().map(|m| (m.clone(), Policy::SingleModel(m.clone()))).collect();
    policies.push(("adaptive".into(), Policy::Adaptive(cfg.recipe())));
    policies.push(("oracle".into(), Policy::Oracle));
    let mut rows = Vec::with_capacity(policies.len());
    for (name, policy) in &policies {
        rows.push((name.clone(), ev.evaluate(policy, &plan).map_err(domain)?));
    }
    comparison_report(&rows, &cfg.artifact("report.csv")).map_err(domain)?;
    let adaptive = &rows[rows.len() - 2].1;
    let best_single = rows[..rows.len() - 2].iter().map(|(_, m)| m.accuracy).fold(0.0, f64::max);
    Ok(format!(
        "adaptive accuracy {:.2}% (best single {:.2}%, oracle {:.2}%), mean latency {:.3} ms",
        adaptive.accuracy * 100.0,
        best_single * 100.0,
        adaptive.oracle_accuracy * 100.0,
        adaptive.mean_latency_ms
    ))
}

fn cmd_predict(cfg: &RunConfig, input_id: Option<&str>) -> Result<String, CliError> {
    let premodel_path = cfg.prerequisite("premodel.json", "train")?;
    let features = existing(&cfg.features, "features")?;
    let premodel = load_premodel(&premodel_path).map_err(domain)?;
    let (rows, _) = trace_store::read_feature_rows(&features).map_err(domain)?;
    let rows: Vec<_> = match input_id {
        Some(id) => {
            let row = rows
                .into_iter()
                .find(|r| r.input_id == id)
                .ok_or_else(|| CliError::Missing(format!("input `{id}` in {}", features.display())))?;
            vec![row]
        }
        None => rows,
    };
    let mut csv = String::from("input_id,choice,confidence,levels_consulted\n");
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    let mut last = Label::Failure;
    for row in &rows {
        let p = premodel.predict(row).map_err(domain)?;
        writeln!(csv, "{},{},{:.6},{}", row.input_id, p.choice, p.confidence, p.levels_consulted).unwrap();
        *counts.entry(p.choice.clone()).or_default() += 1;
        last = p.choice;
    }
    trace_store::write_file(&cfg.artifact("predictions.csv"), &csv).map_err(domain)?;
    if input_id.is_some() {
        return Ok(last.to_string());
    }
    let parts: Vec<String> = counts.iter().map(|(l, c)| format!("{l} {c}")).collect();
    Ok(format!("predicted {} inputs: {}", rows.len(), parts.join(", ")))
}

fn cmd_sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let dataset = load(cfg)?;
    let table = OutcomeTable::build(&dataset, &criterion(cfg, &dataset)?).map_err(domain)?;
    let rows = sensitivity_sweep(&table, &cfg.sweep_methods, &cfg.sweep_thetas).map_err(domain)?;
    write_sweep(&rows, &cfg.artifact("sweep.csv")).map_err(domain)?;

    let radii = RadiusSweepConfig::new(cfg.radii.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let plan = folds(cfg, &dataset, &table)?;
    let curve = cross_validated_radius_curve(&dataset, &table, &plan, &radii).map_err(domain)?;
    write_radius_curve(&curve, &cfg.artifact("radius.csv")).map_err(domain)?;
    let best = curve
        .iter()
        .fold(None::<&crate::soundness::RadiusPoint>, |b, p| match b {
            Some(b) if b.accuracy >= p.accuracy => Some(b),
            _ => Some(p),
        })
        .expect("at least one radius");
    Ok(format!(
        "{} selection configurations; best radius {} ({:.2}% accuracy)",
        rows.len(),
        best.radius,
        best.accuracy * 100.0
    ))
}

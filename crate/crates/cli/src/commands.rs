use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use roundabout_core::intent::{
    self, BoostParams, ClassifierMetrics, Dataset, ForestParams, IntentError, ModelKind, ModelParams, SyntheticVariant,
    TreeParams,
};
use roundabout_core::scenario::{self, Reaction, StopGo};
use roundabout_core::stats::{self, EffectRow, StatsError};
use roundabout_core::trajectory::{kalman_smooth, KalmanConfig};
use roundabout_core::{
    Aggressiveness, AnovaResult, FactorialSample, SafetyReport, ScenarioConfig, Trajectory, TrialResult, WarningEvent,
    WarningLead,
};
use serde::{Deserialize, Serialize};

use crate::{CliError, DatasetArgs, MetricsArgs, PredictArgs, SimulateArgs, SmoothArgs, StatsArgs};

const TOOL: &str = env!("CARGO_PKG_NAME");
const VERSION: &str = env!("CARGO_PKG_VERSION");

const EGO_CSV: &str = "ego.csv";
const AGGRESSIVE_CSV: &str = "aggressive.csv";
const TRIAL_JSON: &str = "trial.json";

/// Per-trial manifest written next to the two trajectory CSVs.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrialManifest {
    pub trial_id: String,
    pub subject: String,
    pub repeat: usize,
    pub aggressiveness: Aggressiveness,
    pub warning_lead: WarningLead,
    /// Effective configuration, jittered driver included.
    pub config: ScenarioConfig,
    pub warning: Option<WarningEvent>,
    pub reaction: Option<Reaction>,
    pub outcome: Option<StopGo>,
    pub collision: bool,
    pub roundabout_entry_time: Option<f64>,
    pub ego_conflict_time: Option<f64>,
    pub scheduled_headway: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TrialEntry {
    trial_id: String,
    dir: String,
    outcome: Option<StopGo>,
    warned: bool,
    collision: bool,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    trials: usize,
    warnings: usize,
    collisions: usize,
    stop: usize,
    go: usize,
    no_reaction: usize,
}

/// Design-level manifest. Re-running `simulate --config <dir>/config.json
/// --repeats <repeats>` reproduces the run.
#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    repeats: usize,
    driver_seeds: Vec<u64>,
    config: ScenarioConfig,
    trials: Vec<TrialEntry>,
    summary: RunSummary,
}

fn subject_id(repeat: usize) -> String {
    format!("driver{repeat:02}")
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display(), e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path.display(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create_file(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(path.display(), e))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::io(path.display(), e))
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut out = create_file(path)?;
    traj.write_csv(&mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(path.display(), e))
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    let Some(path) = path else {
        return Ok(ScenarioConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    ScenarioConfig::from_json(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.repeats == 0 {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    let seeds = scenario::derive_seeds(config.seed, args.repeats);
    let trials = scenario::run_design(&config, args.repeats, &seeds).map_err(|e| CliError::usage(e.to_string()))?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(args.out.display(), e))?;

    let mut entries = Vec::with_capacity(trials.len());
    for trial in &trials {
        let id = trial.trial_id();
        let dir = args.out.join(&id);
        write_trajectory(&dir.join(EGO_CSV), &trial.ego)?;
        write_trajectory(&dir.join(AGGRESSIVE_CSV), &trial.aggressive)?;
        write_json(&dir.join(TRIAL_JSON), &manifest_of(trial))?;
        entries.push(TrialEntry {
            trial_id: id.clone(),
            dir: id,
            outcome: trial.outcome(),
            warned: trial.warning.is_some(),
            collision: trial.collision,
        });
    }
    let summary = RunSummary {
        trials: trials.len(),
        warnings: trials.iter().filter(|t| t.warning.is_some()).count(),
        collisions: trials.iter().filter(|t| t.collision).count(),
        stop: trials.iter().filter(|t| t.outcome() == Some(StopGo::Stop)).count(),
        go: trials.iter().filter(|t| t.outcome() == Some(StopGo::Go)).count(),
        no_reaction: trials.iter().filter(|t| t.outcome().is_none()).count(),
    };
    info!(
        "{} trials: {} warnings, {} collisions, {} stop, {} go",
        summary.trials, summary.warnings, summary.collisions, summary.stop, summary.go
    );
    write_json(&args.out.join("config.json"), &config)?;
    let manifest = RunManifest {
        tool: TOOL,
        version: VERSION,
        seed: config.seed,
        repeats: args.repeats,
        driver_seeds: seeds,
        config,
        trials: entries,
        summary,
    };
    write_json(&args.out.join("manifest.json"), &manifest)
}

fn manifest_of(trial: &TrialResult) -> TrialManifest {
    TrialManifest {
        trial_id: trial.trial_id(),
        subject: subject_id(trial.repeat),
        repeat: trial.repeat,
        aggressiveness: trial.config.aggressiveness,
        warning_lead: trial.config.warning_lead,
        config: trial.config.clone(),
        warning: trial.warning.clone(),
        reaction: trial.reaction,
        outcome: trial.outcome(),
        collision: trial.collision,
        roundabout_entry_time: trial.roundabout_entry_time,
        ego_conflict_time: trial.ego_conflict_time,
        scheduled_headway: trial.scheduled_headway,
    }
}

/// Metrics of one trial directory. Without `trial.json` the default geometry
/// and vehicle specs apply and the exposure window opens at the first sample.
fn trial_metrics(dir: &Path) -> Result<(Vec<String>, SafetyReport), String> {
    let ego = Trajectory::read_csv_path(dir.join(EGO_CSV)).map_err(|e| format!("{EGO_CSV}: {e}"))?;
    let agg = Trajectory::read_csv_path(dir.join(AGGRESSIVE_CSV)).map_err(|e| format!("{AGGRESSIVE_CSV}: {e}"))?;
    let name = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest_path = dir.join(TRIAL_JSON);
    let (ids, config, t_e) = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| format!("{TRIAL_JSON}: {e}"))?;
        let m: TrialManifest = serde_json::from_str(&text).map_err(|e| format!("{TRIAL_JSON}: {e}"))?;
        m.config.validate().map_err(|e| format!("{TRIAL_JSON}: {e}"))?;
        let t_e = m.roundabout_entry_time.or(ego.start_time()).unwrap_or(0.0);
        let ids = vec![m.trial_id, m.subject, m.warning_lead.to_string(), m.aggressiveness.to_string()];
        (ids, m.config, t_e)
    } else {
        (vec![name, String::new(), String::new(), String::new()], ScenarioConfig::default(), ego.start_time().unwrap_or(0.0))
    };
    let geometry = config.path_geometry().map_err(|e| e.to_string())?.conflict_geometry(&ego, &agg);
    let report = roundabout_core::ssm::safety_report(&ego, &agg, &config.ego_vehicle, &config.aggressive_vehicle, &geometry, t_e)
        .map_err(|e| e.to_string())?;
    Ok((ids, report))
}

pub fn metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let entries = fs::read_dir(&args.trials).map_err(|e| CliError::io(args.trials.display(), e))?;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(args.trials.display(), e))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::empty(format!("no trial directories in {}", args.trials.display())));
    }
    use rayon::prelude::*;
    let results: Vec<_> = dirs.par_iter().map(|d| trial_metrics(d)).collect();

    let mut rows = Vec::new();
    for (dir, result) in dirs.iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => warn!("skipping {}: {e}", dir.display()),
        }
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("none of the {} trial directories could be read", dirs.len())));
    }
    let mut out = csv::Writer::from_writer(create_file(&args.out)?);
    let io = |e: csv::Error| CliError::io(args.out.display(), e);
    let header = ["trial_id", "subject", "warning", "aggressiveness"].into_iter().chain(SafetyReport::CSV_HEADER);
    out.write_record(header).map_err(io)?;
    for (ids, report) in &rows {
        out.write_record(ids.iter().cloned().chain(report.csv_fields())).map_err(io)?;
    }
    out.flush().map_err(|e| CliError::io(args.out.display(), e))?;
    info!("{} of {} trials written to {}", rows.len(), dirs.len(), args.out.display());
    Ok(())
}

/// Reads `subject`, `warning`, `aggressiveness` and the metric column.
fn read_samples(path: &Path, metric: &str) -> Result<Vec<FactorialSample>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| CliError::data(format!("{}: {e}", path.display())))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(format!("{}: missing column `{name}`", path.display())))
    };
    let (cs, cw, ca, cv) = (col("subject")?, col("warning")?, col("aggressiveness")?, col(metric)?);
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::data(format!("{} line {line}: {e}", path.display())))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let bad = |m: String| CliError::data(format!("{} line {line}: {m}", path.display()));
        let subject = field(cs);
        if subject.is_empty() {
            return Err(bad("empty subject".into()));
        }
        let warning_level: WarningLead = field(cw).parse().map_err(bad)?;
        let aggressiveness: Aggressiveness = field(ca).parse().map_err(bad)?;
        let raw = field(cv);
        let value: f64 = raw.parse().map_err(|_| {
            bad(format!(
                "`{metric}` is `{raw}` for subject `{subject}`, warning={warning_level}, aggressiveness={aggressiveness}"
            ))
        })?;
        samples.push(FactorialSample { subject_id: subject.to_string(), warning_level, aggressiveness, value });
    }
    Ok(samples)
}

#[derive(Serialize)]
struct AnovaReport<'a> {
    metric: &'a str,
    #[serde(flatten)]
    anova: &'a AnovaResult,
}

pub fn stats(args: &StatsArgs) -> Result<(), CliError> {
    let metric = args.metric.as_deref().unwrap_or("value");
    let samples = read_samples(&args.input, metric)?;
    if samples.is_empty() {
        return Err(CliError::empty(format!("{} has no rows", args.input.display())));
    }
    let anova = stats::rm_anova(&samples).map_err(|e: StatsError| CliError::data(e.to_string()))?;
    let json = args.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if json {
        return write_json(&args.out, &AnovaReport { metric, anova: &anova });
    }
    let mut out = csv::Writer::from_writer(create_file(&args.out)?);
    let io = |e: csv::Error| CliError::io(args.out.display(), e);
    out.write_record(["metric", "effect", "df", "df_error", "SS", "MS", "SS_error", "MS_error", "F", "p", "partial_eta_sq"])
        .map_err(io)?;
    let rows: [(&str, &EffectRow<f64>); 3] =
        [("warning", &anova.warning), ("aggressiveness", &anova.aggressiveness), ("warning:aggressiveness", &anova.interaction)];
    for (name, r) in rows {
        out.write_record([
            metric.to_string(),
            name.to_string(),
            r.df.to_string(),
            r.df_error.to_string(),
            r.sum_of_squares.to_string(),
            r.mean_square.to_string(),
            r.error_sum_of_squares.to_string(),
            r.error_mean_square.to_string(),
            r.f.to_string(),
            r.p.to_string(),
            r.partial_eta_sq.to_string(),
        ])
        .map_err(io)?;
    }
    out.flush().map_err(|e| CliError::io(args.out.display(), e))
}

#[derive(Serialize)]
struct PredictReport<'a> {
    dataset: String,
    rows: usize,
    seed: u64,
    features: [&'static str; 6],
    params: &'a ModelParams,
    #[serde(flatten)]
    metrics: &'a ClassifierMetrics,
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let kind: ModelKind = args.model.parse().map_err(CliError::usage)?;
    let params = ModelParams {
        k: args.k,
        tree: TreeParams { max_depth: args.max_depth, min_leaf: args.min_leaf },
        forest: ForestParams {
            n_trees: args.trees,
            tree: TreeParams { max_depth: args.max_depth, min_leaf: args.min_leaf },
            ..ForestParams::default()
        },
        boost: BoostParams { rounds: args.rounds, max_depth: args.boost_depth, min_leaf: args.min_leaf, shrinkage: args.shrinkage },
        seed: args.seed,
    };
    if params.k == 0 || params.forest.n_trees == 0 || !(params.boost.shrinkage > 0.0) {
        return Err(CliError::usage("--k, --trees and --shrinkage must be positive"));
    }
    let ds = Dataset::read_csv_path(&args.dataset, args.seed).map_err(|e| match e {
        IntentError::Io(e) => CliError::io(args.dataset.display(), e),
        other => CliError::data(format!("{}: {other}", args.dataset.display())),
    })?;
    if ds.is_empty() {
        return Err(CliError::empty(format!("{} has no rows", args.dataset.display())));
    }
    let (_, metrics) = intent::train_and_evaluate(&ds, kind, &params).map_err(|e| CliError::data(e.to_string()))?;
    info!("{kind}: test accuracy {:.3}, auc {:?}", metrics.test_accuracy, metrics.auc);
    write_json(
        &args.out,
        &PredictReport {
            dataset: args.dataset.display().to_string(),
            rows: ds.len(),
            seed: args.seed,
            features: intent::FEATURE_NAMES,
            params: &params,
            metrics: &metrics,
        },
    )?;
    let roc_path = args.roc.clone().unwrap_or_else(|| args.out.with_extension("roc.csv"));
    let mut out = csv::Writer::from_writer(create_file(&roc_path)?);
    let io = |e: csv::Error| CliError::io(roc_path.display(), e);
    out.write_record(["fpr", "tpr"]).map_err(io)?;
    for (fpr, tpr) in &metrics.roc {
        out.write_record([fpr.to_string(), tpr.to_string()]).map_err(io)?;
    }
    out.flush().map_err(|e| CliError::io(roc_path.display(), e))
}

pub fn dataset(args: &DatasetArgs) -> Result<(), CliError> {
    let variant: SyntheticVariant = args.variant.parse().map_err(CliError::usage)?;
    if args.go > args.rows {
        return Err(CliError::usage("--go must not exceed --rows"));
    }
    let ds = intent::synthetic_dataset(variant, args.rows, args.go, args.seed);
    let mut out = create_file(&args.out)?;
    ds.write_csv(&mut out).map_err(|e| CliError::io(args.out.display(), e))?;
    out.flush().map_err(|e| CliError::io(args.out.display(), e))
}

pub fn smooth(args: &SmoothArgs) -> Result<(), CliError> {
    let traj = Trajectory::read_csv_path(&args.input).map_err(|e| match e {
        roundabout_core::trajectory::TrajectoryError::Io(e) => CliError::io(args.input.display(), e),
        other => CliError::data(format!("{}: {other}", args.input.display())),
    })?;
    let mut cfg = KalmanConfig::default();
    if let Some(q) = args.q {
        cfg.process_noise_std = q;
    }
    if let Some(r) = args.r {
        cfg.measurement_noise_std_pos = r;
    }
    let smoothed = kalman_smooth(&traj, &cfg).map_err(|e| match e {
        roundabout_core::trajectory::TrajectoryError::InvalidConfig(_) => CliError::usage(e.to_string()),
        other => CliError::data(other.to_string()),
    })?;
    write_trajectory(&args.out, &smoothed)
}


//! Stop-or-go prediction at warning onset: feature extraction, correlation
//! screening, four classifiers and their evaluation. Go is the positive class.

pub mod boost;
pub mod knn;
pub mod synth;
pub mod tree;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::{fixation_features, mean_pupil_diameter, Aoi, GazeLog};
use crate::scenario::{StopGo, TrialResult};
use crate::ssm::{acceleration_noise, time_headway, ttc_series};

pub use boost::{BoostParams, Booster};
pub use knn::{Knn, Scaler};
pub use synth::{synthetic_dataset, synthetic_gaze, SyntheticVariant};
pub use tree::{Forest, ForestParams, Tree, TreeParams};

#[derive(Debug, Error)]
pub enum IntentError {
    #[error("trial has no warning, so it has no onset")]
    NoWarning,
    #[error("gaze features are missing")]
    MissingGaze,
    #[error("window [{0}, {1}] is empty")]
    DegenerateWindow(f64, f64),
    #[error("{0} is undefined at warning onset")]
    Undefined(&'static str),
    #[error("row {row}: {message}")]
    Invalid { row: usize, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("stratified split impossible: {0}")]
    Stratification(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const FEATURE_NAMES: [&str; 6] = ["v_i", "h_t", "an", "drac", "mfd_road", "pd_bar"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub v_i: f64,
    pub h_t: f64,
    pub an: f64,
    pub drac: f64,
    pub mfd_road: f64,
    pub pd_bar: f64,
    pub label: StopGo,
}

impl FeatureVector {
    pub fn features(&self) -> [f64; 6] {
        [self.v_i, self.h_t, self.an, self.drac, self.mfd_road, self.pd_bar]
    }

    pub fn validate(&self) -> Result<(), String> {
        let f = self.features();
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(format!("{} is not finite", FEATURE_NAMES[i]));
        }
        for i in 2..6 {
            if f[i] < 0.0 {
                return Err(format!("{} must be >= 0", FEATURE_NAMES[i]));
            }
        }
        Ok(())
    }
}

fn is_go(label: StopGo) -> f64 {
    if label == StopGo::Go {
        1.0
    } else {
        0.0
    }
}

/// Features of a warned trial. Instantaneous values are taken at the issue
/// time; window values cover [roundabout entry, issue time]. `h_t` is the
/// magnitude of the signed headway.
pub fn extract_features(trial: &TrialResult, gaze: Option<&GazeLog<f64>>) -> Result<FeatureVector, IntentError> {
    let warning = trial.warning.as_ref().ok_or(IntentError::NoWarning)?;
    let label = trial.outcome().ok_or(IntentError::Undefined("label"))?;
    let t_issue = warning.t_issue;
    let t_entry = trial.roundabout_entry_time.ok_or(IntentError::Undefined("roundabout entry"))?;
    if t_issue <= t_entry {
        return Err(IntentError::DegenerateWindow(t_entry, t_issue));
    }
    let gaze = gaze.ok_or(IntentError::MissingGaze)?;

    let k = trial.ego.index_at(t_issue).ok_or(IntentError::Undefined("ego state"))?;
    let geometry = trial.conflict_geometry().map_err(|_| IntentError::Undefined("geometry"))?;
    let ego = &trial.ego.points[k];
    let agg = &trial.aggressive.points[k];
    let h = time_headway(geometry.dist_to_conflict_i[k], ego.v, geometry.dist_to_conflict_j[k], agg.v)
        .ok_or(IntentError::Undefined("h_t"))?;

    let series = ttc_series(&trial.ego, &trial.aggressive, &trial.config.ego_vehicle, &trial.config.aggressive_vehicle)
        .map_err(|_| IntentError::Undefined("drac"))?;
    let drac = series.iter().find(|s| (s.t - t_issue).abs() <= 1e-6 * trial.ego.dt.max(1.0)).map(|s| s.drac());
    let drac = drac.filter(|d| d.is_finite()).ok_or(IntentError::Undefined("drac"))?;

    let an = acceleration_noise(&trial.ego.accelerations(), t_entry, t_issue, trial.ego.dt)
        .map_err(|_| IntentError::DegenerateWindow(t_entry, t_issue))?;

    let window = [t_entry, t_issue];
    let mfd_road = fixation_features(gaze, window, Aoi::RoadAhead).mean_duration.ok_or(IntentError::MissingGaze)?;
    let pd_bar = mean_pupil_diameter(gaze, window).map_err(|_| IntentError::MissingGaze)?;

    Ok(FeatureVector { v_i: ego.v, h_t: h.abs(), an, drac, mfd_road, pd_bar, label })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<FeatureVector>,
    pub split_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    v_i: f64,
    h_t: f64,
    an: f64,
    drac: f64,
    mfd_road: f64,
    pd_bar: f64,
    label: String,
}

impl Dataset {
    pub fn new(rows: Vec<FeatureVector>, split_seed: u64) -> Result<Self, IntentError> {
        for (row, r) in rows.iter().enumerate() {
            r.validate().map_err(|message| IntentError::Invalid { row, message })?;
        }
        Ok(Self { rows, split_seed })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, label: StopGo) -> usize {
        self.rows.iter().filter(|r| r.label == label).count()
    }

    pub fn matrix(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        self.rows.iter().map(|r| (r.features().to_vec(), is_go(r.label))).unzip()
    }

    /// Reads `v_i,h_t,an,drac,mfd_road,pd_bar,label`; labels are Stop/Go or 0/1.
    pub fn read_csv<R: Read>(reader: R, split_seed: u64) -> Result<Self, IntentError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| IntentError::Parse { line, message: e.to_string() })?;
            let label = rec.label.parse().map_err(|message| IntentError::Parse { line, message })?;
            let fv = FeatureVector {
                v_i: rec.v_i,
                h_t: rec.h_t,
                an: rec.an,
                drac: rec.drac,
                mfd_road: rec.mfd_road,
                pd_bar: rec.pd_bar,
                label,
            };
            fv.validate().map_err(|message| IntentError::Parse { line, message })?;
            rows.push(fv);
        }
        Ok(Self { rows, split_seed })
    }

    pub fn read_csv_path(path: impl AsRef<Path>, split_seed: u64) -> Result<Self, IntentError> {
        Self::read_csv(std::fs::File::open(path)?, split_seed)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), IntentError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(CsvRow {
                v_i: r.v_i,
                h_t: r.h_t,
                an: r.an,
                drac: r.drac,
                mfd_road: r.mfd_road,
                pd_bar: r.pd_bar,
                label: r.label.to_string(),
            })
            .map_err(|e| IntentError::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Stratified split: in each class a `test_fraction` share (rounded, at
    /// least one row, never all rows) goes to the test side. Index lists are
    /// ascending.
    pub fn stratified_split(&self, test_fraction: f64) -> Result<Split, IntentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.split_seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for label in [StopGo::Stop, StopGo::Go] {
            let mut idx: Vec<usize> = (0..self.rows.len()).filter(|&i| self.rows[i].label == label).collect();
            if idx.len() < 2 {
                return Err(IntentError::Stratification(format!("class {label} has {} rows, need at least 2", idx.len())));
            }
            idx.shuffle(&mut rng);
            let n_test = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok(Split { train, test })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Strength bands used when reporting correlations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationBand {
    Negligible,
    Low,
    Moderate,
    High,
}

pub fn correlation_band(r: f64) -> CorrelationBand {
    match r.abs() {
        a if a < 0.3 => CorrelationBand::Negligible,
        a if a < 0.5 => CorrelationBand::Low,
        a if a < 0.7 => CorrelationBand::Moderate,
        _ => CorrelationBand::High,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonMatrix {
    /// `None` in every row and column of a zero-variance feature.
    pub r: [[Option<f64>; 6]; 6],
    pub undefined: [bool; 6],
}

pub fn pearson_matrix(ds: &Dataset) -> Result<PearsonMatrix, IntentError> {
    let n = ds.rows.len();
    if n < 3 {
        return Err(IntentError::TooFewRows { needed: 3, got: n });
    }
    let cols: Vec<[f64; 6]> = ds.rows.iter().map(|r| r.features()).collect();
    let mut mean = [0.0; 6];
    for c in &cols {
        for j in 0..6 {
            mean[j] += c[j] / n as f64;
        }
    }
    let mut cov = [[0.0; 6]; 6];
    for c in &cols {
        for a in 0..6 {
            for b in 0..6 {
                cov[a][b] += (c[a] - mean[a]) * (c[b] - mean[b]);
            }
        }
    }
    let scale: [f64; 6] = std::array::from_fn(|j| mean[j].abs().max(1.0));
    let undefined: [bool; 6] = std::array::from_fn(|j| cov[j][j].sqrt() <= 1e-12 * scale[j] * (n as f64).sqrt());
    let mut r = [[None; 6]; 6];
    for a in 0..6 {
        for b in 0..6 {
            if undefined[a] || undefined[b] {
                continue;
            }
            r[a][b] = Some(if a == b { 1.0 } else { (cov[a][b] / (cov[a][a] * cov[b][b]).sqrt()).clamp(-1.0, 1.0) });
        }
    }
    Ok(PearsonMatrix { r, undefined })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Knn,
    DecisionTree,
    RandomForest,
    GradientBoosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Knn, ModelKind::DecisionTree, ModelKind::RandomForest, ModelKind::GradientBoosting];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::DecisionTree => "tree",
            ModelKind::RandomForest => "forest",
            ModelKind::GradientBoosting => "gbt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let names: Vec<&str> = ModelKind::ALL.iter().map(|m| m.name()).collect();
            format!("unknown model `{s}`, expected one of: {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub k: usize,
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub boost: BoostParams,
    /// Seed of the forest's bootstrap and feature draws.
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { k: 5, tree: TreeParams::default(), forest: ForestParams::default(), boost: BoostParams::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Knn(Knn),
    DecisionTree(Tree),
    RandomForest(Forest),
    GradientBoosting(Booster),
}

impl FittedModel {
    pub fn fit(kind: ModelKind, params: &ModelParams, x: &[Vec<f64>], y: &[f64]) -> FittedModel {
        match kind {
            ModelKind::Knn => FittedModel::Knn(Knn::fit(x, y, params.k)),
            ModelKind::DecisionTree => FittedModel::DecisionTree(Tree::fit_classifier(x, y, params.tree)),
            ModelKind::RandomForest => FittedModel::RandomForest(Forest::fit(x, y, params.forest, params.seed)),
            ModelKind::GradientBoosting => FittedModel::GradientBoosting(Booster::fit(x, y, params.boost)),
        }
    }

    /// Go score in [0, 1]: neighbor vote, leaf fraction, tree vote or
    /// logistic probability.
    pub fn score(&self, row: &[f64]) -> f64 {
        match self {
            FittedModel::Knn(m) => m.vote_fraction(row),
            FittedModel::DecisionTree(t) => t.predict(row),
            FittedModel::RandomForest(f) => f.vote_fraction(row),
            FittedModel::GradientBoosting(b) => b.probability(row),
        }
    }

    pub fn predict(&self, row: &[f64]) -> StopGo {
        if self.score(row) > 0.5 {
            StopGo::Go
        } else {
            StopGo::Stop
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(truth: &[StopGo], predicted: &[StopGo]) -> Self {
        let mut c = Confusion { tp: 0, fp: 0, tn: 0, fn_: 0 };
        for (t, p) in truth.iter().zip(predicted) {
            match (t, p) {
                (StopGo::Go, StopGo::Go) => c.tp += 1,
                (StopGo::Stop, StopGo::Go) => c.fp += 1,
                (StopGo::Stop, StopGo::Stop) => c.tn += 1,
                (StopGo::Go, StopGo::Stop) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn accuracy(&self) -> Option<f64> {
        let n = self.tp + self.fp + self.tn + self.fn_;
        (n > 0).then(|| (self.tp + self.tn) as f64 / n as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        Some(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
    }
}

/// ROC points from (0, 0) to (1, 1), one per distinct score threshold, and the
/// trapezoidal AUC. `None` unless both classes are present.
pub fn roc_curve(truth: &[StopGo], scores: &[f64]) -> Option<(Vec<(f64, f64)>, f64)> {
    let pos = truth.iter().filter(|&&t| t == StopGo::Go).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if truth[order[k]] == StopGo::Go {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
    Some((points, auc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub model: ModelKind,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Undefined without predicted positives.
    pub precision: Option<f64>,
    /// Undefined when the test split has no Go rows.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub roc: Vec<(f64, f64)>,
    pub confusion: Confusion,
    pub n_train: usize,
    pub n_test: usize,
}

fn subset(ds: &Dataset, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<StopGo>) {
    let x = idx.iter().map(|&i| ds.rows[i].features().to_vec()).collect();
    let y = idx.iter().map(|&i| is_go(ds.rows[i].label)).collect();
    let labels = idx.iter().map(|&i| ds.rows[i].label).collect();
    (x, y, labels)
}

/// Metrics of a fitted model on rows `test`, with `train` used for the
/// training accuracy.
pub fn evaluate(model: &FittedModel, kind: ModelKind, ds: &Dataset, split: &Split) -> ClassifierMetrics {
    let accuracy = |idx: &[usize]| {
        let (x, _, truth) = subset(ds, idx);
        let pred: Vec<StopGo> = x.iter().map(|r| model.predict(r)).collect();
        Confusion::from_predictions(&truth, &pred)
    };
    let train = accuracy(&split.train);
    let (x, _, truth) = subset(ds, &split.test);
    let scores: Vec<f64> = x.iter().map(|r| model.score(r)).collect();
    let pred: Vec<StopGo> = x.iter().map(|r| model.predict(r)).collect();
    let confusion = Confusion::from_predictions(&truth, &pred);
    let (roc, auc) = match roc_curve(&truth, &scores) {
        Some((roc, auc)) => (roc, Some(auc)),
        None => (Vec::new(), None),
    };
    ClassifierMetrics {
        model: kind,
        train_accuracy: train.accuracy().unwrap_or(0.0),
        test_accuracy: confusion.accuracy().unwrap_or(0.0),
        precision: confusion.precision(),
        recall: confusion.recall(),
        f1: confusion.f1(),
        auc,
        roc,
        confusion,
        n_train: split.train.len(),
        n_test: split.test.len(),
    }
}

/// Stratified 80/20 split by the dataset's seed, fit on the training rows,
/// evaluate on the test rows.
pub fn train_and_evaluate(
    ds: &Dataset,
    kind: ModelKind,
    params: &ModelParams,
) -> Result<(FittedModel, ClassifierMetrics), IntentError> {
    let split = ds.stratified_split(0.2)?;
    let (x, y, _) = subset(ds, &split.train);
    let model = FittedModel::fit(kind, params, &x, &y);
    let metrics = evaluate(&model, kind, ds, &split);
    Ok((model, metrics))
}

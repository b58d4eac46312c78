//! Repeated-split experiments: train a pool, fit combiners on validation
//! votes, score everything on the test split, aggregate over repetitions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, WmvWeighting};
use crate::dataset::{self, Dataset, Schema, SplitPlan, POSITIVE};
use crate::error::{Error, Result};
use crate::solver::{self, FitDiagnostics, SdwecParams, WeightVector};
use crate::tree::{self, PredictionMatrix, TreeConfig};

pub const BAGGING: &str = "bagging";
pub const WMV: &str = "wmv";
pub const SINGLE: &str = "single";

/// Result key of an SDWEC preset.
pub fn sdwec_method(preset: &str) -> String {
    format!("sdwec-{preset}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedParams {
    pub name: String,
    pub params: SdwecParams,
}

impl NamedParams {
    pub fn new(name: impl Into<String>, params: SdwecParams) -> Self {
        Self {
            name: name.into(),
            params,
        }
    }
}

/// Which tree stands in for "one classifier".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleTree {
    /// The pool member with the best validation accuracy.
    #[default]
    BestOfPool,
    /// A tree grown on the whole training split, without bootstrap.
    FullTrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV file; its schema defaults to the `.json` file next to it.
    pub dataset: PathBuf,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default = "default_presets")]
    pub presets: Vec<NamedParams>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub wmv_weighting: WmvWeighting,
    #[serde(default)]
    pub single_tree: SingleTree,
}

pub fn default_pool_size() -> usize {
    200
}

pub fn default_repetitions() -> usize {
    10
}

pub fn default_presets() -> Vec<NamedParams> {
    vec![
        NamedParams::new("A", SdwecParams::preset_a()),
        NamedParams::new("B", SdwecParams::preset_b()),
    ]
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            schema: None,
            pool_size: default_pool_size(),
            tree: TreeConfig::default(),
            presets: default_presets(),
            repetitions: default_repetitions(),
            base_seed: 0,
            wmv_weighting: WmvWeighting::default(),
            single_tree: SingleTree::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::InvalidParams("pool_size must be at least 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParams("repetitions must be at least 1".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for p in &self.presets {
            p.params.validate()?;
            if !names.insert(p.name.as_str()) {
                return Err(Error::InvalidParams(format!("duplicate preset name `{}`", p.name)));
            }
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        load_dataset(&self.dataset, self.schema.as_deref())
    }
}

pub fn load_dataset(csv: &Path, schema: Option<&Path>) -> Result<Dataset> {
    match schema {
        Some(s) => dataset::load_csv(csv, &Schema::from_json_file(s)?),
        None => dataset::load_with_sidecar(csv),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepetitionTimes {
    pub pool_seconds: f64,
    pub scoring_seconds: f64,
    pub fit_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub seed: u64,
    /// Test accuracy per method.
    pub accuracy: BTreeMap<String, f64>,
    /// Exact zero fraction of each preset's weights.
    pub sparsity: BTreeMap<String, f64>,
    /// Presets whose weights were all thresholded away; those predict +1.
    pub empty_ensembles: Vec<String>,
    pub times: RepetitionTimes,
    #[serde(skip)]
    pub weights: BTreeMap<String, WeightVector>,
    #[serde(skip)]
    pub diagnostics: BTreeMap<String, FitDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub config: ExperimentConfig,
    pub repetitions: Vec<RepetitionResult>,
    pub mean_accuracy: BTreeMap<String, f64>,
    pub mean_sparsity: BTreeMap<String, f64>,
    pub mean_times: RepetitionTimes,
}

/// Fraction of positions where `predictions` and `truth` agree.
pub fn score_accuracy(predictions: &[i8], truth: &[i8]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = predictions.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Weighted vote of every row; an all-zero weight vector votes +1 everywhere.
pub fn weighted_predictions(h: &PredictionMatrix, weights: &[f64]) -> Result<Vec<i8>> {
    if weights.len() != h.cols() {
        return Err(Error::DimensionMismatch {
            expected: h.cols(),
            actual: weights.len(),
        });
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Ok(vec![POSITIVE; h.rows()]);
    }
    baselines::combine_matrix(h, weights)
}

/// Per-repetition material shared by every combiner.
#[derive(Debug, Clone)]
pub struct PreparedRepetition {
    pub repetition: usize,
    pub seed: u64,
    pub h_val: PredictionMatrix,
    pub y_val: Vec<i8>,
    pub h_test: PredictionMatrix,
    pub y_test: Vec<i8>,
    pub pool_seconds: f64,
    /// Test accuracies of the baselines.
    pub baselines: BTreeMap<String, f64>,
    pub baseline_seconds: f64,
}

/// Bag seed of a repetition, decorrelated from its shuffle seed.
pub fn bag_seed(split_seed: u64) -> u64 {
    tree::tree_seed(split_seed, usize::MAX)
}

pub fn prepare_repetition(
    data: &Dataset,
    split: &SplitPlan,
    repetition: usize,
    config: &ExperimentConfig,
) -> Result<PreparedRepetition> {
    let train = data.subset(&split.train);
    let val = data.subset(&split.validation);
    let test = data.subset(&split.test);

    let start = Instant::now();
    let pool = tree::train_pool(&train, config.pool_size, &config.tree, bag_seed(split.seed))?;
    let pool_seconds = start.elapsed().as_secs_f64();

    let h_val = tree::predict_matrix(&pool, &val)?;
    let h_test = tree::predict_matrix(&pool, &test)?;

    let start = Instant::now();
    let mut scores = BTreeMap::new();
    scores.insert(
        BAGGING.to_string(),
        score_accuracy(&baselines::majority_vote(&h_test)?, &test.labels)?,
    );
    let wmv = baselines::wmv_weights_with(&h_val, &val.labels, config.wmv_weighting)?;
    scores.insert(
        WMV.to_string(),
        score_accuracy(&weighted_predictions(&h_test, &wmv.weights)?, &test.labels)?,
    );
    let single = match config.single_tree {
        SingleTree::BestOfPool => h_test.column(baselines::single_best(&h_val, &val.labels)?),
        SingleTree::FullTrain => {
            let all: Vec<usize> = (0..train.n_rows()).collect();
            let t = tree::train_tree(&train, &all, &config.tree, split.seed)?;
            (0..test.n_rows()).map(|s| t.predict_row(test.row(s))).collect()
        }
    };
    scores.insert(SINGLE.to_string(), score_accuracy(&single, &test.labels)?);

    Ok(PreparedRepetition {
        repetition,
        seed: split.seed,
        h_val,
        y_val: val.labels,
        h_test,
        y_test: test.labels,
        pool_seconds,
        baselines: scores,
        baseline_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct SdwecOutcome {
    pub weights: WeightVector,
    pub diagnostics: FitDiagnostics,
    pub accuracy: f64,
    pub fit_seconds: f64,
    pub scoring_seconds: f64,
}

impl SdwecOutcome {
    pub fn sparsity(&self) -> f64 {
        self.weights.sparsity()
    }
}

/// Fits one parameter point on the validation votes and scores it on test.
pub fn evaluate_sdwec(prep: &PreparedRepetition, params: &SdwecParams) -> Result<SdwecOutcome> {
    let start = Instant::now();
    let (weights, diagnostics) = solver::fit(&prep.h_val, &prep.y_val, params)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let predictions = weighted_predictions(&prep.h_test, &weights.weights)?;
    let accuracy = score_accuracy(&predictions, &prep.y_test)?;
    Ok(SdwecOutcome {
        weights,
        diagnostics,
        accuracy,
        fit_seconds,
        scoring_seconds: start.elapsed().as_secs_f64(),
    })
}

fn annotate<T>(repetition: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Repetition {
        repetition,
        source: Box::new(e),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_by_key<'a>(maps: impl Iterator<Item = &'a BTreeMap<String, f64>> + Clone) -> BTreeMap<String, f64> {
    let keys: std::collections::BTreeSet<&String> = maps.clone().flat_map(|m| m.keys()).collect();
    keys.into_iter()
        .map(|k| (k.clone(), mean(maps.clone().filter_map(|m| m.get(k).copied()))))
        .collect()
}

/// Loads the configured dataset and runs [`run_experiment_on`].
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let data = config.load_dataset()?;
    run_experiment_on(&data, config)
}

pub fn run_experiment_on(data: &Dataset, config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let plan = dataset::make_run_plan(data.n_rows(), config.repetitions, config.base_seed)?;
    let repetitions = plan
        .splits
        .par_iter()
        .enumerate()
        .map(|(i, split)| annotate(i, run_repetition(data, split, i, config)))
        .collect::<Result<Vec<_>>>()?;

    let mean_accuracy = mean_by_key(repetitions.iter().map(|r| &r.accuracy));
    let mean_sparsity = mean_by_key(repetitions.iter().map(|r| &r.sparsity));
    let mean_times = RepetitionTimes {
        pool_seconds: mean(repetitions.iter().map(|r| r.times.pool_seconds)),
        scoring_seconds: mean(repetitions.iter().map(|r| r.times.scoring_seconds)),
        fit_seconds: mean_by_key(repetitions.iter().map(|r| &r.times.fit_seconds)),
    };
    Ok(RunResult {
        dataset: data.name.clone(),
        config: config.clone(),
        repetitions,
        mean_accuracy,
        mean_sparsity,
        mean_times,
    })
}

fn run_repetition(
    data: &Dataset,
    split: &SplitPlan,
    repetition: usize,
    config: &ExperimentConfig,
) -> Result<RepetitionResult> {
    let prep = prepare_repetition(data, split, repetition, config)?;
    let mut result = RepetitionResult {
        repetition,
        seed: prep.seed,
        accuracy: prep.baselines.clone(),
        sparsity: BTreeMap::new(),
        empty_ensembles: Vec::new(),
        times: RepetitionTimes {
            pool_seconds: prep.pool_seconds,
            scoring_seconds: prep.baseline_seconds,
            fit_seconds: BTreeMap::new(),
        },
        weights: BTreeMap::new(),
        diagnostics: BTreeMap::new(),
    };
    for preset in &config.presets {
        let out = evaluate_sdwec(&prep, &preset.params)?;
        if out.weights.nonzero().is_empty() {
            log::warn!(
                "{}: repetition {repetition}, preset {}: every weight was thresholded to zero",
                data.name,
                preset.name
            );
            result.empty_ensembles.push(preset.name.clone());
        }
        result.accuracy.insert(sdwec_method(&preset.name), out.accuracy);
        result.sparsity.insert(preset.name.clone(), out.sparsity());
        result.times.fit_seconds.insert(preset.name.clone(), out.fit_seconds);
        result.times.scoring_seconds += out.scoring_seconds;
        result.weights.insert(preset.name.clone(), out.weights);
        result.diagnostics.insert(preset.name.clone(), out.diagnostics);
    }
    log::info!(
        "{}: repetition {repetition} (seed {}) done in {:.2}s pool time",
        data.name,
        prep.seed,
        prep.pool_seconds
    );
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: SdwecParams,
    pub mean_sparsity: f64,
    pub mean_accuracy: f64,
}

/// Mean sparsity and accuracy of every grid point over the configured
/// repetitions. Pools are trained once per repetition and shared by all points.
pub fn sparsity_accuracy_sweep(config: &ExperimentConfig, grid: &[SdwecParams]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    config.validate()?;
    let data = config.load_dataset()?;
    sparsity_accuracy_sweep_on(&data, config, grid)
}

pub fn sparsity_accuracy_sweep_on(
    data: &Dataset,
    config: &ExperimentConfig,
    grid: &[SdwecParams],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for p in grid {
        p.validate()?;
    }
    let plan = dataset::make_run_plan(data.n_rows(), config.repetitions, config.base_seed)?;
    // outcomes[rep][point] = (sparsity, accuracy)
    let outcomes = plan
        .splits
        .par_iter()
        .enumerate()
        .map(|(i, split)| {
            annotate(i, (|| {
                let prep = prepare_repetition(data, split, i, config)?;
                grid.iter()
                    .map(|p| evaluate_sdwec(&prep, p).map(|o| (o.sparsity(), o.accuracy)))
                    .collect::<Result<Vec<_>>>()
            })())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(k, p)| SweepRow {
            params: *p,
            mean_sparsity: mean(outcomes.iter().map(|o| o[k].0)),
            mean_accuracy: mean(outcomes.iter().map(|o| o[k].1)),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub m: usize,
    pub l: usize,
    pub seconds: f64,
}

/// Least-squares line `seconds ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LinearFit {
    /// `None` with fewer than two distinct `x` values.
    pub fn fit(points: &[(f64, f64)]) -> Option<Self> {
        let n = points.len() as f64;
        let mx = mean(points.iter().map(|p| p.0));
        let my = mean(points.iter().map(|p| p.1));
        let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        if points.len() < 2 || sxx <= 0.0 {
            return None;
        }
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_tot: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
        let ss_res: f64 = points
            .iter()
            .map(|p| {
                let e = p.1 - (intercept + slope * p.0);
                e * e
            })
            .sum();
        let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        debug_assert!(n >= 2.0);
        Some(Self {
            slope,
            intercept,
            r_squared,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisFit {
    /// `"m"` when time is regressed on `m` at fixed `l`, `"l"` for the reverse.
    pub axis: String,
    pub fixed: usize,
    pub fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStudy {
    pub rows: Vec<TimingRow>,
    pub fits: Vec<AxisFit>,
}

impl TimingStudy {
    pub fn seconds(&self, m: usize, l: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.m == m && r.l == l).map(|r| r.seconds)
    }

    pub fn fit_vs_m(&self, l: usize) -> Option<LinearFit> {
        self.fits.iter().find(|f| f.axis == "m" && f.fixed == l).map(|f| f.fit)
    }

    pub fn fit_vs_l(&self, m: usize) -> Option<LinearFit> {
        self.fits.iter().find(|f| f.axis == "l" && f.fixed == m).map(|f| f.fit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub l_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub params: SdwecParams,
    pub tree: TreeConfig,
    pub seed: u64,
    /// Each cell reports the fastest of this many fits.
    pub trials: usize,
}

/// Fit wall-clock over a grid of row counts and pool sizes, run serially.
///
/// One pool of `max(l)` trees is trained on a seeded training split; every
/// cell takes the first `m` rows of a seeded permutation of the whole dataset
/// and the first `l` trees.
pub fn timing_scaling_study(data: &Dataset, config: &TimingConfig) -> Result<TimingStudy> {
    let (Some(&max_l), Some(&max_m)) = (config.l_values.iter().max(), config.m_values.iter().max()) else {
        return Err(Error::EmptyInput);
    };
    if config.l_values.contains(&0) || config.m_values.contains(&0) {
        return Err(Error::InvalidParams("timing sizes must be positive".into()));
    }
    if max_m > data.n_rows() {
        return Err(Error::InvalidParams(format!(
            "m = {max_m} exceeds the {} rows of {}",
            data.n_rows(),
            data.name
        )));
    }
    config.params.validate()?;

    let split = dataset::make_split(data.n_rows(), dataset::DEFAULT_FRACTIONS, config.seed)?;
    let pool = tree::train_pool(&data.subset(&split.train), max_l, &config.tree, bag_seed(config.seed))?;
    let order: Vec<usize> = split
        .validation
        .iter()
        .chain(&split.test)
        .chain(&split.train)
        .copied()
        .collect();
    let h_all = tree::predict_matrix(&pool, &data.subset(&order))?;
    let y_all: Vec<i8> = order.iter().map(|&i| data.labels[i]).collect();

    let mut rows = Vec::new();
    for &m in &config.m_values {
        let rows_m: Vec<usize> = (0..m).collect();
        let h_m = h_all.select_rows(&rows_m);
        for &l in &config.l_values {
            let cols: Vec<usize> = (0..l).collect();
            let h = h_m.select_columns(&cols);
            let mut best = f64::INFINITY;
            for _ in 0..config.trials.max(1) {
                let start = Instant::now();
                solver::fit(&h, &y_all[..m], &config.params)?;
                best = best.min(start.elapsed().as_secs_f64());
            }
            log::info!("timing m={m} l={l}: {best:.4}s");
            rows.push(TimingRow { m, l, seconds: best });
        }
    }

    let mut fits = Vec::new();
    for &l in &config.l_values {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.l == l).map(|r| (r.m as f64, r.seconds)).collect();
        if let Some(fit) = LinearFit::fit(&pts) {
            fits.push(AxisFit {
                axis: "m".into(),
                fixed: l,
                fit,
            });
        }
    }
    for &m in &config.m_values {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.m == m).map(|r| (r.l as f64, r.seconds)).collect();
        if let Some(fit) = LinearFit::fit(&pts) {
            fits.push(AxisFit {
                axis: "l".into(),
                fixed: m,
                fit,
            });
        }
    }
    Ok(TimingStudy { rows, fits })
}

//! Leave-one-out cross-validation of the linear model against the
//! historical-mean benchmark.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureConfig;
use crate::model::{fit, ModelError, Observation};

/// One more point than the model has parameters, so every training fold
/// can still be fitted.
pub const MIN_DATASET: usize = 4;

/// Identifies the dispersion statistic reported as `std_*_pct`.
pub const STD_ESTIMATOR: &str = "sample-sd-of-absolute-errors";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least {required} observations for leave-one-out evaluation, got {n}")]
    TooFewObservations { n: usize, required: usize },
    #[error("fold {fold} ({region}, {year}): {source}")]
    RankDeficientFold {
        fold: usize,
        region: String,
        year: i32,
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no folds to summarize")]
    EmptyFolds,
    #[error("no fold has a benchmark prediction")]
    NoBenchmarkFolds,
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::TooFewObservations { .. } => "TooFewObservations",
            EvalError::RankDeficientFold { .. } => "RankDeficientFold",
            EvalError::Model(e) => e.code(),
            EvalError::EmptyFolds => "EmptyFolds",
            EvalError::NoBenchmarkFolds => "NoBenchmarkFolds",
        }
    }
}

/// How the historical-mean benchmark is formed for a held-out point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkMode {
    /// Mean performance of the training fold.
    #[default]
    TrainfoldMean,
    /// Mean performance of all strictly earlier years, across regions.
    /// Folds without an earlier year get no benchmark prediction.
    PriorYearsMean,
}

impl BenchmarkMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkMode::TrainfoldMean => "trainfold-mean",
            BenchmarkMode::PriorYearsMean => "prior-years-mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    #[serde(rename = "region")]
    pub region_id: String,
    pub year: i32,
    pub actual: f64,
    pub pred_model: f64,
    /// `None` when the benchmark has no data for this fold.
    pub pred_benchmark: Option<f64>,
    pub abs_err_model: f64,
    pub abs_err_benchmark: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae_model_pct: f64,
    pub mae_benchmark_pct: f64,
    /// `None` with fewer than two errors.
    pub std_model_pct: Option<f64>,
    pub std_benchmark_pct: Option<f64>,
    /// `None` when the model's MAE is zero.
    pub relative_inaccuracy_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub benchmark_mode: BenchmarkMode,
    pub feature_config: FeatureConfig,
    pub folds: Vec<FoldResult>,
    pub mae_model_pct: f64,
    pub mae_benchmark_pct: f64,
    pub std_model_pct: Option<f64>,
    pub std_benchmark_pct: Option<f64>,
    pub relative_inaccuracy_pct: Option<f64>,
    pub std_estimator: String,
    pub n_benchmark_folds: usize,
}

impl EvalReport {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            mae_model_pct: self.mae_model_pct,
            mae_benchmark_pct: self.mae_benchmark_pct,
            std_model_pct: self.std_model_pct,
            std_benchmark_pct: self.std_benchmark_pct,
            relative_inaccuracy_pct: self.relative_inaccuracy_pct,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("EvalReport serializes") + "\n"
    }
}

/// How much larger the benchmark's MAE is than the model's, in percent.
pub fn relative_inaccuracy_pct(mae_model_pct: f64, mae_benchmark_pct: f64) -> Option<f64> {
    (mae_model_pct > 0.0).then(|| (mae_benchmark_pct / mae_model_pct - 1.0) * 100.0)
}

/// Rounds half away from zero to `dp` decimal places, for display.
pub fn round_dp(value: f64, dp: u32) -> f64 {
    let f = 10f64.powi(dp as i32);
    (value * f).round() / f
}

fn mean_pct(errors: &[f64]) -> f64 {
    errors.iter().sum::<f64>() / errors.len() as f64 * 100.0
}

fn sample_std_pct(errors: &[f64]) -> Option<f64> {
    let n = errors.len();
    if n < 2 {
        return None;
    }
    let mean = errors.iter().sum::<f64>() / n as f64;
    let ss: f64 = errors.iter().map(|e| (e - mean).powi(2)).sum();
    Some((ss / (n - 1) as f64).sqrt() * 100.0)
}

/// Mean and sample standard deviation of the absolute errors, in
/// percentage points. Benchmark statistics use only folds that have a
/// benchmark prediction.
pub fn metrics(folds: &[FoldResult]) -> Result<Metrics, EvalError> {
    if folds.is_empty() {
        return Err(EvalError::EmptyFolds);
    }
    let model: Vec<f64> = folds.iter().map(|f| f.abs_err_model).collect();
    let bench: Vec<f64> = folds.iter().filter_map(|f| f.abs_err_benchmark).collect();
    if bench.is_empty() {
        return Err(EvalError::NoBenchmarkFolds);
    }
    let mae_model_pct = mean_pct(&model);
    let mae_benchmark_pct = mean_pct(&bench);
    Ok(Metrics {
        mae_model_pct,
        mae_benchmark_pct,
        std_model_pct: sample_std_pct(&model),
        std_benchmark_pct: sample_std_pct(&bench),
        relative_inaccuracy_pct: relative_inaccuracy_pct(mae_model_pct, mae_benchmark_pct),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One leave-one-out split: the held-out index and the training indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub test: usize,
    pub train: Vec<usize>,
}

/// The `n` leave-one-out splits of `0..n`, in test-index order.
pub fn loo_splits(n: usize) -> impl ExactSizeIterator<Item = Split> {
    (0..n).map(move |i| Split {
        test: i,
        train: (0..n).filter(|&j| j != i).collect(),
    })
}

fn evaluate_fold(
    data: &[Observation],
    split: &Split,
    mode: BenchmarkMode,
) -> Result<FoldResult, EvalError> {
    let i = split.test;
    let test = &data[i];
    let train: Vec<Observation> = split.train.iter().map(|&j| data[j].clone()).collect();
    let model = fit(&train).map_err(|e| match e {
        ModelError::RankDeficientDesign { .. } => EvalError::RankDeficientFold {
            fold: i,
            region: test.features.region_id.clone(),
            year: test.features.year,
            source: e,
        },
        other => EvalError::Model(other),
    })?;
    let pred_model = model.predict(&test.features)?;
    let pred_benchmark = match mode {
        BenchmarkMode::TrainfoldMean => mean(train.iter().map(|o| o.performance)),
        BenchmarkMode::PriorYearsMean => mean(
            train
                .iter()
                .filter(|o| o.features.year < test.features.year)
                .map(|o| o.performance),
        ),
    };
    let actual = test.performance;
    Ok(FoldResult {
        region_id: test.features.region_id.clone(),
        year: test.features.year,
        actual,
        pred_model,
        pred_benchmark,
        abs_err_model: (pred_model - actual).abs(),
        abs_err_benchmark: pred_benchmark.map(|p| (p - actual).abs()),
    })
}

fn run(
    dataset: &[Observation],
    mode: BenchmarkMode,
    parallel: bool,
) -> Result<EvalReport, EvalError> {
    let n = dataset.len();
    if n < MIN_DATASET {
        return Err(EvalError::TooFewObservations {
            n,
            required: MIN_DATASET,
        });
    }
    let mut data = dataset.to_vec();
    data.sort_by(|a, b| {
        (&a.features.region_id, a.features.year).cmp(&(&b.features.region_id, b.features.year))
    });
    let config = data[0].features.config;

    let splits: Vec<Split> = loo_splits(n).collect();
    let results: Vec<Result<FoldResult, EvalError>> = if parallel {
        splits
            .par_iter()
            .map(|s| evaluate_fold(&data, s, mode))
            .collect()
    } else {
        splits
            .iter()
            .map(|s| evaluate_fold(&data, s, mode))
            .collect()
    };
    // First failure in fold order, independent of scheduling.
    let folds = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let m = metrics(&folds)?;
    Ok(EvalReport {
        benchmark_mode: mode,
        feature_config: config,
        n_benchmark_folds: folds.iter().filter(|f| f.pred_benchmark.is_some()).count(),
        folds,
        mae_model_pct: m.mae_model_pct,
        mae_benchmark_pct: m.mae_benchmark_pct,
        std_model_pct: m.std_model_pct,
        std_benchmark_pct: m.std_benchmark_pct,
        relative_inaccuracy_pct: m.relative_inaccuracy_pct,
        std_estimator: STD_ESTIMATOR.to_string(),
    })
}

/// Leave-one-out cross-validation: one fold per observation, folds run in
/// parallel and reported in `(region, year)` order.
pub fn loocv(dataset: &[Observation], mode: BenchmarkMode) -> Result<EvalReport, EvalError> {
    run(dataset, mode, true)
}

/// Same as [`loocv`] on the calling thread.
pub fn loocv_sequential(
    dataset: &[Observation],
    mode: BenchmarkMode,
) -> Result<EvalReport, EvalError> {
    run(dataset, mode, false)
}

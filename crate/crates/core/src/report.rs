//! Baselining transforms and plot-data files for the four figures, plus a
//! plain-text evaluation summary.
//!
//! Files written by [`emit_figure_data`]:
//!
//! | file                    | columns                                                      |
//! |-------------------------|--------------------------------------------------------------|
//! | `fig1_demand.csv`       | `region,year,value` (preceded by a `# normalized=` line)     |
//! | `fig2_unemployment.csv` | `region,year,value`                                          |
//! | `fig3_population.csv`   | `region,year,ratio` (`difference` in difference mode)        |
//! | `fig4_eval.csv`         | `region,year,actual_baselined,model_baselined,benchmark_baselined` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use csv::WriterBuilder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{round_dp, EvalReport};
use crate::features::{working_age_population, FeatureError, FeatureRow};
use crate::ingest::{AgeBand, RegionalSeries};
use crate::perf::PerformanceRow;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{label}: baseline year {year} not in series")]
    MissingBaselineYear { label: String, year: i32 },
    #[error("{label}: baseline value at {year} is zero")]
    ZeroBaseline { label: String, year: i32 },
    #[error("region {region}: no performance rows to baseline against")]
    MissingPerformance { region: String },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ReportError {
    pub fn code(&self) -> &'static str {
        match self {
            ReportError::MissingBaselineYear { .. } => "MissingBaselineYear",
            ReportError::ZeroBaseline { .. } => "ZeroBaseline",
            ReportError::MissingPerformance { .. } => "MissingPerformance",
            ReportError::Features(e) => e.code(),
            ReportError::Io { .. } => "Io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// Subtract the baseline value.
    Difference,
    /// Divide by the baseline value.
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinedSeries {
    pub label: String,
    pub baseline_year: i32,
    pub baseline_value: f64,
    pub mode: BaselineMode,
    pub points: Vec<(i32, f64)>,
}

impl BaselinedSeries {
    /// Inverse transform using the stored baseline value.
    pub fn unbaseline(&self) -> BTreeMap<i32, f64> {
        self.points
            .iter()
            .map(|&(y, v)| {
                let raw = match self.mode {
                    BaselineMode::Difference => v + self.baseline_value,
                    BaselineMode::Ratio => v * self.baseline_value,
                };
                (y, raw)
            })
            .collect()
    }
}

fn apply(mode: BaselineMode, value: f64, base: f64) -> f64 {
    match mode {
        BaselineMode::Difference => value - base,
        BaselineMode::Ratio => value / base,
    }
}

/// Expresses `series` relative to its value at `baseline_year`.
pub fn baseline(
    label: &str,
    series: &BTreeMap<i32, f64>,
    baseline_year: i32,
    mode: BaselineMode,
) -> Result<BaselinedSeries, ReportError> {
    let base = *series
        .get(&baseline_year)
        .ok_or_else(|| ReportError::MissingBaselineYear {
            label: label.to_string(),
            year: baseline_year,
        })?;
    if mode == BaselineMode::Ratio && base == 0.0 {
        return Err(ReportError::ZeroBaseline {
            label: label.to_string(),
            year: baseline_year,
        });
    }
    Ok(BaselinedSeries {
        label: label.to_string(),
        baseline_year,
        baseline_value: base,
        mode,
        points: series
            .iter()
            .map(|(&y, &v)| (y, apply(mode, v, base)))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureOptions {
    /// Population baseline year; each region's first year when `None`.
    pub baseline_year: Option<i32>,
    pub population_mode: BaselineMode,
    pub performance_mode: BaselineMode,
    pub working_age: AgeBand,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            baseline_year: None,
            population_mode: BaselineMode::Ratio,
            performance_mode: BaselineMode::Difference,
            working_age: crate::features::DEFAULT_WORKING_AGE,
        }
    }
}

pub struct FigureInputs<'a> {
    pub series: &'a BTreeMap<String, RegionalSeries>,
    pub features: &'a [FeatureRow],
    pub performance: &'a [PerformanceRow],
    pub report: &'a EvalReport,
}

pub const FIGURE_FILES: [&str; 4] = [
    "fig1_demand.csv",
    "fig2_unemployment.csv",
    "fig3_population.csv",
    "fig4_eval.csv",
];

fn csv_bytes(preamble: &str, header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = WriterBuilder::new().from_writer(preamble.as_bytes().to_vec());
    w.write_record(header).expect("write to Vec");
    for r in rows {
        w.write_record(r).expect("write to Vec");
    }
    w.into_inner().expect("flush to Vec")
}

fn fig1(features: &[FeatureRow]) -> Vec<u8> {
    let normalized = features.first().map(|f| f.config.normalize).unwrap_or(true);
    let rows = features
        .iter()
        .map(|f| {
            vec![
                f.region_id.clone(),
                f.year.to_string(),
                crate::fmt_f64(f.demand),
            ]
        })
        .collect();
    csv_bytes(
        &format!("# normalized={}\n", u8::from(normalized)),
        &["region", "year", "value"],
        rows,
    )
}

fn fig2(series: &BTreeMap<String, RegionalSeries>) -> Vec<u8> {
    let rows = series
        .values()
        .flat_map(|s| {
            s.unemployed_6m
                .iter()
                .map(|(y, u)| vec![s.region_id.clone(), y.to_string(), u.to_string()])
        })
        .collect();
    csv_bytes("", &["region", "year", "value"], rows)
}

fn fig3(
    series: &BTreeMap<String, RegionalSeries>,
    options: &FigureOptions,
) -> Result<Vec<u8>, ReportError> {
    let mut rows = Vec::new();
    for s in series.values() {
        let population = s
            .years
            .iter()
            .map(|&y| Ok((y, working_age_population(s, y, options.working_age)?)))
            .collect::<Result<BTreeMap<_, _>, FeatureError>>()?;
        let year = match options.baseline_year.or_else(|| s.first_year()) {
            Some(y) => y,
            None => continue,
        };
        let b = baseline(&s.region_id, &population, year, options.population_mode)?;
        rows.extend(
            b.points
                .iter()
                .map(|(y, v)| vec![s.region_id.clone(), y.to_string(), crate::fmt_f64(*v)]),
        );
    }
    let value = match options.population_mode {
        BaselineMode::Ratio => "ratio",
        BaselineMode::Difference => "difference",
    };
    Ok(csv_bytes("", &["region", "year", value], rows))
}

fn fig4(
    performance: &[PerformanceRow],
    report: &EvalReport,
    mode: BaselineMode,
) -> Result<Vec<u8>, ReportError> {
    // Baseline per region: performance in its first entry year.
    let mut first: BTreeMap<&str, (i32, f64)> = BTreeMap::new();
    for p in performance {
        let e = first
            .entry(&p.region_id)
            .or_insert((p.entry_year, p.performance));
        if p.entry_year < e.0 {
            *e = (p.entry_year, p.performance);
        }
    }
    let mut rows = Vec::with_capacity(report.folds.len());
    for f in &report.folds {
        let &(year, base) =
            first
                .get(f.region_id.as_str())
                .ok_or_else(|| ReportError::MissingPerformance {
                    region: f.region_id.clone(),
                })?;
        if mode == BaselineMode::Ratio && base == 0.0 {
            return Err(ReportError::ZeroBaseline {
                label: f.region_id.clone(),
                year,
            });
        }
        rows.push(vec![
            f.region_id.clone(),
            f.year.to_string(),
            crate::fmt_f64(apply(mode, f.actual, base)),
            crate::fmt_f64(apply(mode, f.pred_model, base)),
            f.pred_benchmark
                .map(|p| crate::fmt_f64(apply(mode, p, base)))
                .unwrap_or_default(),
        ]);
    }
    Ok(csv_bytes(
        "",
        &[
            "region",
            "year",
            "actual_baselined",
            "model_baselined",
            "benchmark_baselined",
        ],
        rows,
    ))
}

/// Writes the four figure files into `out_dir` and returns their paths.
pub fn emit_figure_data(
    inputs: &FigureInputs<'_>,
    options: &FigureOptions,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let contents = [
        fig1(inputs.features),
        fig2(inputs.series),
        fig3(inputs.series, options)?,
        fig4(inputs.performance, inputs.report, options.performance_mode)?,
    ];
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for (name, bytes) in FIGURE_FILES.iter().zip(contents) {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

fn opt(v: Option<f64>, dp: u32) -> String {
    v.map(|x| format!("{:.*}", dp as usize, round_dp(x, dp)))
        .unwrap_or_else(|| "n/a".into())
}

/// Short human-readable account of an evaluation.
pub fn summary(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "leave-one-out evaluation: {} folds, benchmark {} ({} folds), features {}",
        report.folds.len(),
        report.benchmark_mode.as_str(),
        report.n_benchmark_folds,
        report.feature_config
    );
    let _ = writeln!(
        s,
        "  model     MAE {:.2}%  sd {}%",
        report.mae_model_pct,
        opt(report.std_model_pct, 2)
    );
    let _ = writeln!(
        s,
        "  benchmark MAE {:.2}%  sd {}%",
        report.mae_benchmark_pct,
        opt(report.std_benchmark_pct, 2)
    );
    let _ = writeln!(
        s,
        "  benchmark is {}% more inaccurate",
        opt(report.relative_inaccuracy_pct, 1)
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(i32, f64)]) -> BTreeMap<i32, f64> {
        points.iter().copied().collect()
    }

    #[test]
    fn ratio_and_difference() {
        let s = series(&[(2011, 100.0), (2012, 110.0)]);
        let r = baseline("x", &s, 2011, BaselineMode::Ratio).unwrap();
        assert_eq!(r.points, vec![(2011, 1.0), (2012, 1.1)]);
        let d = baseline("x", &s, 2011, BaselineMode::Difference).unwrap();
        assert_eq!(d.points, vec![(2011, 0.0), (2012, 10.0)]);
        assert_eq!(d.unbaseline(), s);
    }

    #[test]
    fn baseline_errors() {
        let s = series(&[(2011, 0.0), (2012, 110.0)]);
        assert!(matches!(
            baseline("x", &s, 2010, BaselineMode::Ratio),
            Err(ReportError::MissingBaselineYear { year: 2010, .. })
        ));
        assert!(matches!(
            baseline("x", &s, 2011, BaselineMode::Ratio),
            Err(ReportError::ZeroBaseline { .. })
        ));
        assert!(baseline("x", &s, 2011, BaselineMode::Difference).is_ok());
    }
}

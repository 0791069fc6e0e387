//! Two-predictor linear model with intercept, fitted by unregularized least
//! squares.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureConfig, FeatureRow};
use crate::linalg::{least_squares, Matrix};

/// Column names of the design matrix, in order.
pub const DESIGN_COLUMNS: [&str; 3] = ["intercept", "demand", "supply"];

/// One fitted coefficient per design column.
pub const MIN_OBSERVATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("need at least {required} observations, got {n}")]
    TooFewObservations { n: usize, required: usize },
    #[error("design matrix is rank deficient: columns {columns:?} are collinear (condition estimate {condition:.3e})")]
    RankDeficientDesign {
        columns: Vec<String>,
        condition: f64,
    },
    #[error("feature configuration mismatch: model uses {expected}, row uses {found}")]
    FeatureConfigMismatch {
        expected: FeatureConfig,
        found: FeatureConfig,
    },
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::TooFewObservations { .. } => "TooFewObservations",
            ModelError::RankDeficientDesign { .. } => "RankDeficientDesign",
            ModelError::FeatureConfigMismatch { .. } => "FeatureConfigMismatch",
        }
    }
}

/// A feature row paired with its observed performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: FeatureRow,
    pub performance: f64,
}

/// Inner join of feature rows and performance rows on `(region, year)`,
/// sorted by region then year.
pub fn join_observations(
    features: &[FeatureRow],
    performance: &[crate::perf::PerformanceRow],
) -> Vec<Observation> {
    let targets: BTreeMap<(&str, i32), f64> = performance
        .iter()
        .map(|p| ((p.region_id.as_str(), p.entry_year), p.performance))
        .collect();
    let mut out: Vec<Observation> = features
        .iter()
        .filter_map(|f| {
            targets
                .get(&(f.region_id.as_str(), f.year))
                .map(|&performance| Observation {
                    features: f.clone(),
                    performance,
                })
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.features.region_id, a.features.year).cmp(&(&b.features.region_id, b.features.year))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub intercept: f64,
    pub coef_demand: f64,
    pub coef_supply: f64,
    pub n_obs: usize,
    /// Residual sum of squares on the training rows.
    pub rss: f64,
    pub r_squared: f64,
    pub feature_config: FeatureConfig,
}

impl ModelFit {
    pub fn coefficients(&self) -> [f64; 3] {
        [self.intercept, self.coef_demand, self.coef_supply]
    }

    /// Raw linear prediction; never clamped.
    pub fn predict(&self, row: &FeatureRow) -> Result<f64, ModelError> {
        if row.config != self.feature_config {
            return Err(ModelError::FeatureConfigMismatch {
                expected: self.feature_config,
                found: row.config,
            });
        }
        Ok(self.predict_unchecked(row.demand, row.supply))
    }

    pub fn predict_unchecked(&self, demand: f64, supply: f64) -> f64 {
        self.intercept + self.coef_demand * demand + self.coef_supply * supply
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ModelFit serializes") + "\n"
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// `[1, demand, supply]` rows.
pub fn design_matrix<'a>(rows: impl IntoIterator<Item = &'a FeatureRow>) -> Matrix {
    let rows: Vec<[f64; 3]> = rows
        .into_iter()
        .map(|r| [1.0, r.demand, r.supply])
        .collect();
    Matrix::from_rows(&rows, 3)
}

/// Least-squares fit of `performance ≈ intercept + β_d·demand + β_s·supply`.
///
/// All rows must share one feature configuration. A rank-deficient design is
/// an error rather than a minimum-norm solution.
pub fn fit(rows: &[Observation]) -> Result<ModelFit, ModelError> {
    let n = rows.len();
    if n < MIN_OBSERVATIONS {
        return Err(ModelError::TooFewObservations {
            n,
            required: MIN_OBSERVATIONS,
        });
    }
    let config = rows[0].features.config;
    if let Some(bad) = rows.iter().find(|r| r.features.config != config) {
        return Err(ModelError::FeatureConfigMismatch {
            expected: config,
            found: bad.features.config,
        });
    }
    let x = design_matrix(rows.iter().map(|r| &r.features));
    let y: Vec<f64> = rows.iter().map(|r| r.performance).collect();
    let beta = least_squares(&x, &y).map_err(|d| ModelError::RankDeficientDesign {
        columns: d
            .columns
            .iter()
            .map(|&j| DESIGN_COLUMNS[j].to_string())
            .collect(),
        condition: d.condition,
    })?;

    let fitted = x.mul_vec(&beta);
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    // A target that is constant up to rounding is fully explained by the
    // intercept.
    let ymax = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let negligible = (64.0 * f64::EPSILON * ymax).powi(2) * n as f64;
    let r_squared = if tss <= negligible {
        1.0
    } else {
        (1.0 - rss / tss).min(1.0)
    };

    Ok(ModelFit {
        intercept: beta[0],
        coef_demand: beta[1],
        coef_supply: beta[2],
        n_obs: n,
        rss,
        r_squared,
        feature_config: config,
    })
}

/// Separate fit per region.
pub fn fit_per_region(rows: &[Observation]) -> Result<BTreeMap<String, ModelFit>, ModelError> {
    let mut groups: BTreeMap<&str, Vec<Observation>> = BTreeMap::new();
    for r in rows {
        groups
            .entry(&r.features.region_id)
            .or_default()
            .push(r.clone());
    }
    groups
        .into_iter()
        .map(|(region, obs)| Ok((region.to_string(), fit(&obs)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(demand: f64, supply: f64, performance: f64) -> Observation {
        Observation {
            features: FeatureRow {
                region_id: "R1".into(),
                year: 2000,
                demand,
                supply,
                config: FeatureConfig::default(),
            },
            performance,
        }
    }

    const POINTS: [(f64, f64); 6] = [
        (0.01, 0.03),
        (-0.02, 0.05),
        (0.03, 0.02),
        (0.00, 0.04),
        (0.015, 0.06),
        (-0.01, 0.01),
    ];

    #[test]
    fn recovers_exact_linear_law() {
        let rows: Vec<_> = POINTS
            .iter()
            .map(|&(d, s)| obs(d, s, 0.5 + 2.0 * d - 3.0 * s))
            .collect();
        let m = fit(&rows).unwrap();
        assert!((m.intercept - 0.5).abs() < 1e-9);
        assert!((m.coef_demand - 2.0).abs() < 1e-9);
        assert!((m.coef_supply + 3.0).abs() < 1e-9);
        assert!(m.rss <= 1e-18, "rss {}", m.rss);
        assert!((m.r_squared - 1.0).abs() < 1e-12);
        for r in &rows {
            assert!((m.predict(&r.features).unwrap() - r.performance).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_target() {
        let rows: Vec<_> = POINTS.iter().map(|&(d, s)| obs(d, s, 0.4)).collect();
        let m = fit(&rows).unwrap();
        assert!((m.intercept - 0.4).abs() < 1e-9);
        assert!(m.coef_demand.abs() < 1e-9);
        assert!(m.coef_supply.abs() < 1e-9);
        assert_eq!(m.r_squared, 1.0);
    }

    #[test]
    fn prediction_arithmetic() {
        let m = ModelFit {
            intercept: 0.5,
            coef_demand: 2.0,
            coef_supply: -3.0,
            n_obs: 3,
            rss: 0.0,
            r_squared: 1.0,
            feature_config: FeatureConfig::default(),
        };
        let row = obs(0.1, 0.1, 0.0).features;
        assert!((m.predict(&row).unwrap() - 0.4).abs() < 1e-15);
        let zero = ModelFit {
            coef_demand: 0.0,
            coef_supply: 0.0,
            ..m.clone()
        };
        assert_eq!(zero.predict(&row).unwrap(), 0.5);
        let mut other = row.clone();
        other.config.normalize = false;
        assert_eq!(
            m.predict(&other).unwrap_err().code(),
            "FeatureConfigMismatch"
        );
    }

    #[test]
    fn too_few_and_rank_deficient() {
        let rows = vec![obs(0.1, 0.2, 0.3), obs(0.2, 0.1, 0.3)];
        assert_eq!(
            fit(&rows).unwrap_err(),
            ModelError::TooFewObservations { n: 2, required: 3 }
        );
        let rows: Vec<_> = (0..5).map(|i| obs(i as f64, 2.0 * i as f64, 0.3)).collect();
        match fit(&rows).unwrap_err() {
            ModelError::RankDeficientDesign { columns, .. } => {
                assert_eq!(columns, vec!["demand", "supply"]);
            }
            e => panic!("unexpected {e}"),
        }
        let rows: Vec<_> = (0..5).map(|i| obs(0.02, i as f64 * 0.01, 0.3)).collect();
        match fit(&rows).unwrap_err() {
            ModelError::RankDeficientDesign { columns, .. } => {
                assert_eq!(columns, vec!["intercept", "demand"]);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn mixed_configs_rejected() {
        let mut rows: Vec<_> = POINTS.iter().map(|&(d, s)| obs(d, s, 0.3)).collect();
        rows[2].features.config.lag = 1;
        assert_eq!(fit(&rows).unwrap_err().code(), "FeatureConfigMismatch");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows: Vec<_> = POINTS
            .iter()
            .enumerate()
            .map(|(i, &(d, s))| obs(d, s, 0.3 + 0.01 * (i as f64).sin()))
            .collect();
        let m = fit(&rows).unwrap();
        let back = ModelFit::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let value: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        for key in [
            "intercept",
            "coef_demand",
            "coef_supply",
            "n_obs",
            "rss",
            "r_squared",
            "feature_config",
        ] {
            assert!(value.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn per_region_fits() {
        let mut rows: Vec<_> = POINTS
            .iter()
            .map(|&(d, s)| obs(d, s, 0.1 + d + s))
            .collect();
        for r in rows.iter_mut().skip(3) {
            r.features.region_id = "R2".into();
            r.performance += 0.05;
        }
        let fits = fit_per_region(&rows).unwrap();
        assert_eq!(fits.len(), 2);
        assert!((fits["R2"].intercept - 0.15).abs() < 1e-9);
    }
}

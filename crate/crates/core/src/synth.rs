//! Synthetic multi-region panels with a known linear ground truth.
//!
//! Each region gets its own random streams, derived from the run seed and
//! the region index, so regions can be generated in any order or in
//! parallel. The generator is ChaCha8 seeded through SplitMix64; noise is
//! Gaussian on the performance scale.
//!
//! Statistical series cover `first_year - 1 ..= last_year`, so the feature
//! pipeline yields exactly one row per region for each year in
//! `first_year ..= last_year`. Shocks shift the underlying employment and
//! unemployment levels from the shock year onward.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{build_features, FeatureConfig, FeatureError};
use crate::ingest::{
    write_employment_csv, write_population_csv, write_records_csv, write_unemployment_csv, AgeBand,
    PopulationBand, ProgrammeRecord, RegionalSeries, Spell,
};
use crate::perf::{window_end, write_performance_csv_exact, PerformanceRow};

pub const RNG_ALGORITHM: &str = "chacha8 (rand_chacha), per-region streams seeded via splitmix64";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::InvalidConfig(_) => "InvalidConfig",
            SynthError::Features(e) => e.code(),
            SynthError::Io { .. } => "Io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    pub year: i32,
    /// Step in employment, as a fraction of working-age population.
    pub demand_shift: f64,
    /// Step in the long-term unemployment rate.
    pub supply_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_regions: u32,
    /// First programme-entry year with a performance value.
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
    pub true_intercept: f64,
    pub true_coef_demand: f64,
    pub true_coef_supply: f64,
    pub noise_sd: f64,
    pub shock: Option<Shock>,
    /// Individual records emitted per region and entry year.
    pub entrants_per_cell: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_regions: 2,
            first_year: 2011,
            last_year: 2017,
            seed: 0,
            true_intercept: 0.35,
            true_coef_demand: 1.5,
            true_coef_supply: -2.0,
            noise_sd: 0.0,
            shock: None,
            entrants_per_cell: 50,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_regions == 0 {
            return bad("n_regions must be positive");
        }
        if self.first_year > self.last_year {
            return bad("first_year must not exceed last_year");
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return bad("noise_sd must be a non-negative number");
        }
        if ![
            self.true_intercept,
            self.true_coef_demand,
            self.true_coef_supply,
        ]
        .iter()
        .all(|v| v.is_finite())
        {
            return bad("coefficients must be finite");
        }
        if self.entrants_per_cell == 0 {
            return bad("entrants_per_cell must be positive");
        }
        if let Some(s) = &self.shock {
            if !(self.first_year..=self.last_year).contains(&s.year) {
                return bad("shock year must lie inside the year range");
            }
            if !(s.demand_shift.is_finite() && s.supply_shift.is_finite()) {
                return bad("shock shifts must be finite");
            }
        }
        Ok(())
    }

    /// Features the ground-truth law is defined on.
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig::default()
    }

    fn law(&self, demand: f64, supply: f64) -> f64 {
        self.true_intercept + self.true_coef_demand * demand + self.true_coef_supply * supply
    }

    pub fn region_id(&self, index: u32) -> String {
        let width = self.n_regions.to_string().len();
        format!("R{:0width$}", index + 1)
    }
}

/// Output of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionOutput {
    pub series: RegionalSeries,
    pub performance: Vec<PerformanceRow>,
    pub records: Vec<ProgrammeRecord>,
    pub n_clipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub series: BTreeMap<String, RegionalSeries>,
    pub performance: Vec<PerformanceRow>,
    pub records: Vec<ProgrammeRecord>,
    /// Points whose noisy law fell outside `[0, 1]`.
    pub n_clipped: usize,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, region: u32, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed) ^ mix(u64::from(region) << 8 | purpose)))
}

const STREAM_SERIES: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite, non-negative sd")
}

fn region_series(config: &SynthConfig, index: u32) -> RegionalSeries {
    let mut rng = stream(config.seed, index, STREAM_SERIES);
    let wap0: f64 = rng.random_range(300_000.0..1_500_000.0);
    let growth: f64 = rng.random_range(-0.004..0.012);
    let employment_rate: f64 = rng.random_range(0.66..0.78);
    let mut rate: f64 = rng.random_range(0.012..0.05);
    let rate_step = normal(0.0, 0.004);
    let hiring = normal(0.004, 0.012);

    let years: Vec<i32> = (config.first_year - 1..=config.last_year).collect();
    let mut employment = BTreeMap::new();
    let mut unemployed = BTreeMap::new();
    let mut population = BTreeMap::new();
    let mut employed = (wap0 * employment_rate).round();
    for (i, &year) in years.iter().enumerate() {
        let wap = (wap0 * (1.0 + growth).powi(i as i32)).round();
        if i > 0 {
            rate = (rate + rate_step.sample(&mut rng)).clamp(0.005, 0.09);
            employed = (employed + (wap * hiring.sample(&mut rng)).round()).max(0.0);
        }
        let (mut e, mut r) = (employed, rate);
        if let Some(shock) = config.shock.filter(|s| year >= s.year) {
            e = (e + (shock.demand_shift * wap).round()).max(0.0);
            r += shock.supply_shift;
        }
        let u = (r * wap).round().clamp(0.0, wap);
        employment.insert(year, e as u64);
        unemployed.insert(year, u as u64);
        population.insert(
            year,
            vec![
                PopulationBand {
                    band: AgeBand::new(0, 15),
                    persons: (wap * 0.24).round() as u64,
                },
                PopulationBand {
                    band: AgeBand::new(16, 64),
                    persons: wap as u64,
                },
                PopulationBand {
                    band: AgeBand::new(65, 90),
                    persons: (wap * 0.28).round() as u64,
                },
            ],
        );
    }
    RegionalSeries {
        region_id: config.region_id(index),
        years,
        employment,
        unemployed_6m: unemployed,
        population,
    }
}

fn cell_records(config: &SynthConfig, row: &PerformanceRow) -> Vec<ProgrammeRecord> {
    let n = u64::from(config.entrants_per_cell);
    let start = NaiveDate::from_ymd_opt(row.entry_year, 1, 1).expect("valid year");
    (0..n)
        .map(|j| {
            let entry = start + Duration::days((j * 365 / n) as i64);
            let days = |d: i64| entry + Duration::days(d);
            let covered = window_end(entry, 6);
            let spells = if j < row.n_success {
                if j % 2 == 0 {
                    vec![Spell {
                        start: entry,
                        end: covered + Duration::days(30),
                        hours_per_week: 20.0 + (j % 3) as f64 * 8.0,
                    }]
                } else {
                    // Employer change with no gap.
                    vec![
                        Spell {
                            start: days(-40),
                            end: days(60),
                            hours_per_week: 16.0,
                        },
                        Spell {
                            start: days(61),
                            end: covered,
                            hours_per_week: 37.5,
                        },
                    ]
                }
            } else {
                match j % 3 {
                    0 => Vec::new(),
                    1 => vec![Spell {
                        start: entry,
                        end: days(90),
                        hours_per_week: 30.0,
                    }],
                    _ => vec![Spell {
                        start: entry,
                        end: covered + Duration::days(60),
                        hours_per_week: 12.0,
                    }],
                }
            };
            ProgrammeRecord {
                person_id: format!("{}-{}-{j:05}", row.region_id, row.entry_year),
                region_id: row.region_id.clone(),
                entry_date: entry,
                spells,
            }
        })
        .collect()
}

/// Generates region `index` (0-based) of the panel.
pub fn generate_region(config: &SynthConfig, index: u32) -> Result<RegionOutput, SynthError> {
    config.validate()?;
    let series = region_series(config, index);
    let single = BTreeMap::from([(series.region_id.clone(), series.clone())]);
    let features = build_features(&single, &config.feature_config())?;

    let mut rng = stream(config.seed, index, STREAM_NOISE);
    let noise = normal(0.0, config.noise_sd);
    let n = u64::from(config.entrants_per_cell);
    let mut n_clipped = 0;
    let mut performance = Vec::with_capacity(features.len());
    for f in &features {
        let mut p = config.law(f.demand, f.supply);
        if config.noise_sd > 0.0 {
            p += noise.sample(&mut rng);
        }
        if !(0.0..=1.0).contains(&p) {
            n_clipped += 1;
            p = p.clamp(0.0, 1.0);
        }
        performance.push(PerformanceRow {
            region_id: f.region_id.clone(),
            entry_year: f.year,
            n_entrants: n,
            n_success: (p * n as f64).round() as u64,
            performance: p,
        });
    }
    let records = performance
        .iter()
        .flat_map(|row| cell_records(config, row))
        .collect();
    Ok(RegionOutput {
        series,
        performance,
        records,
        n_clipped,
    })
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let regions: Vec<RegionOutput> = (0..config.n_regions)
        .into_par_iter()
        .map(|k| generate_region(config, k))
        .collect::<Result<_, _>>()?;
    let mut out = SynthOutput {
        series: BTreeMap::new(),
        performance: Vec::new(),
        records: Vec::new(),
        n_clipped: 0,
    };
    for r in regions {
        out.series.insert(r.series.region_id.clone(), r.series);
        out.performance.extend(r.performance);
        out.records.extend(r.records);
        out.n_clipped += r.n_clipped;
    }
    out.performance
        .sort_by(|a, b| (&a.region_id, a.entry_year).cmp(&(&b.region_id, b.entry_year)));
    out.records
        .sort_by(|a, b| (&a.person_id, a.entry_date).cmp(&(&b.person_id, b.entry_date)));
    Ok(out)
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: SynthConfig,
    pub feature_config: FeatureConfig,
    pub rng: String,
    pub n_points: usize,
    pub n_clipped: usize,
}

pub const OUTPUT_FILES: [&str; 6] = [
    "employment.csv",
    "unemployment.csv",
    "population.csv",
    "records.csv",
    "performance.csv",
    "truth.json",
];

/// Writes the ingest schemas plus `performance.csv` (full precision) and
/// `truth.json` into `dir`.
pub fn write_outputs(
    config: &SynthConfig,
    output: &SynthOutput,
    dir: &Path,
) -> Result<Vec<PathBuf>, SynthError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let truth = Truth {
        config: config.clone(),
        feature_config: config.feature_config(),
        rng: RNG_ALGORITHM.to_string(),
        n_points: output.performance.len(),
        n_clipped: output.n_clipped,
    };
    let contents: [Vec<u8>; 6] = [
        write_employment_csv(&output.series),
        write_unemployment_csv(&output.series),
        write_population_csv(&output.series),
        write_records_csv(&output.records),
        write_performance_csv_exact(&output.performance),
        (serde_json::to_string_pretty(&truth).expect("Truth serializes") + "\n").into_bytes(),
    ];
    let mut written = Vec::new();
    for (name, bytes) in OUTPUT_FILES.iter().zip(contents) {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_programme_records, parse_regional_series, CsvInput};
    use crate::model::{fit, join_observations};
    use crate::perf::{aggregate_performance, SuccessRule};

    #[test]
    fn noiseless_data_recovers_truth() {
        let config = SynthConfig {
            seed: 3,
            ..SynthConfig::default()
        };
        let out = generate(&config).unwrap();
        assert_eq!(out.n_clipped, 0);
        let features = build_features(&out.series, &config.feature_config()).unwrap();
        assert_eq!(features.len(), 14);
        let m = fit(&join_observations(&features, &out.performance)).unwrap();
        assert!((m.intercept - 0.35).abs() < 1e-9);
        assert!((m.coef_demand - 1.5).abs() < 1e-9);
        assert!((m.coef_supply + 2.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_output() {
        let config = SynthConfig {
            seed: 11,
            noise_sd: 0.02,
            ..SynthConfig::default()
        };
        assert_eq!(generate(&config).unwrap(), generate(&config).unwrap());
        let other = SynthConfig {
            seed: 12,
            ..config.clone()
        };
        assert_ne!(
            generate(&config).unwrap().series,
            generate(&other).unwrap().series
        );
    }

    #[test]
    fn regions_are_order_independent() {
        let config = SynthConfig {
            n_regions: 4,
            noise_sd: 0.01,
            seed: 5,
            ..SynthConfig::default()
        };
        let all = generate(&config).unwrap();
        for k in (0..4).rev() {
            let r = generate_region(&config, k).unwrap();
            assert_eq!(all.series[&r.series.region_id], r.series);
            for row in &r.performance {
                assert!(all.performance.contains(row));
            }
        }
    }

    #[test]
    fn clipping_is_counted() {
        let config = SynthConfig {
            true_intercept: 1.2,
            ..SynthConfig::default()
        };
        let out = generate(&config).unwrap();
        assert_eq!(out.n_clipped, 14);
        assert!(out.performance.iter().all(|p| p.performance == 1.0));
    }

    #[test]
    fn shock_shifts_underlying_levels() {
        let base = SynthConfig {
            first_year: 2011,
            last_year: 2020,
            seed: 9,
            ..SynthConfig::default()
        };
        let shocked = SynthConfig {
            shock: Some(Shock {
                year: 2019,
                demand_shift: -0.05,
                supply_shift: 0.01,
            }),
            ..base.clone()
        };
        let (a, b) = (generate(&base).unwrap(), generate(&shocked).unwrap());
        let (sa, sb) = (&a.series["R1"], &b.series["R1"]);
        for y in 2010..2019 {
            assert_eq!(sa.employment[&y], sb.employment[&y]);
        }
        let wap = sa.population[&2019][1].persons as f64;
        let drop = sa.employment[&2019] as f64 - sb.employment[&2019] as f64;
        assert!((drop - 0.05 * wap).abs() <= 1.0);
        assert!(sb.unemployed_6m[&2020] > sa.unemployed_6m[&2020]);
    }

    #[test]
    fn outputs_reingest_cleanly() {
        let config = SynthConfig {
            noise_sd: 0.01,
            seed: 21,
            ..SynthConfig::default()
        };
        let out = generate(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&config, &out, dir.path()).unwrap();
        let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
        let (e, u, p, r) = (
            read("employment.csv"),
            read("unemployment.csv"),
            read("population.csv"),
            read("records.csv"),
        );
        let series = parse_regional_series(
            CsvInput::new("e", &e),
            CsvInput::new("u", &u),
            CsvInput::new("p", &p),
        )
        .unwrap();
        assert_eq!(series, out.series);
        let records = parse_programme_records(CsvInput::new("r", &r)).unwrap();
        assert_eq!(records.len(), 14 * 50);
        let agg = aggregate_performance(&records, SuccessRule::default());
        for (a, b) in agg.iter().zip(&out.performance) {
            assert_eq!(
                (&a.region_id, a.entry_year, a.n_success),
                (&b.region_id, b.entry_year, b.n_success)
            );
            assert!((a.performance - b.performance).abs() <= 0.5 / 50.0);
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig {
                n_regions: 0,
                ..SynthConfig::default()
            },
            SynthConfig {
                noise_sd: -1.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                first_year: 2020,
                last_year: 2010,
                ..SynthConfig::default()
            },
            SynthConfig {
                shock: Some(Shock {
                    year: 2030,
                    demand_shift: 0.0,
                    supply_shift: 0.0,
                }),
                ..SynthConfig::default()
            },
        ];
        for c in bad {
            assert_eq!(generate(&c).unwrap_err().code(), "InvalidConfig");
        }
    }
}

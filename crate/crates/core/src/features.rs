//! Demand and supply proxies per region and year.
//!
//! * demand: year-on-year change in employment, optionally divided by the
//!   working-age population of the later year;
//! * supply: persons out of work for at least six months as a fraction of
//!   the working-age population.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use csv::{ReaderBuilder, Trim, WriterBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AgeBand, CsvInput, IngestError, Location, RegionalSeries};

pub const DEFAULT_WORKING_AGE: AgeBand = AgeBand::new(16, 64);

pub const FEATURES_HEADER: [&str; 5] = ["region", "year", "demand", "supply", "normalized"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("region {region}: employment missing for year {year}")]
    MissingYear { region: String, year: i32 },
    #[error("region {region}, year {year}: working-age population is zero")]
    ZeroWorkingAgePopulation { region: String, year: i32 },
    #[error("region {region}, year {year}: {unemployed} unemployed exceeds working-age population {population}")]
    SupplyExceedsOne {
        region: String,
        year: i32,
        unemployed: u64,
        population: f64,
    },
    #[error("region {region}, year {year}: no population band covers age {age}")]
    UncoveredWorkingAge { region: String, year: i32, age: u32 },
    #[error("invalid working-age interval {0}")]
    InvalidWorkingAge(AgeBand),
}

impl FeatureError {
    pub fn code(&self) -> &'static str {
        match self {
            FeatureError::MissingYear { .. } => "MissingYear",
            FeatureError::ZeroWorkingAgePopulation { .. } => "ZeroWorkingAgePopulation",
            FeatureError::SupplyExceedsOne { .. } => "SupplyExceedsOne",
            FeatureError::UncoveredWorkingAge { .. } => "UncoveredWorkingAge",
            FeatureError::InvalidWorkingAge(_) => "InvalidWorkingAge",
        }
    }
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

/// How a set of feature rows was produced. Models and feature rows must
/// agree on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Demand divided by working-age population.
    pub normalize: bool,
    /// Whole years by which both proxies trail the entry year.
    pub lag: u32,
    pub working_age: AgeBand,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            normalize: true,
            lag: 0,
            working_age: DEFAULT_WORKING_AGE,
        }
    }
}

impl fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "normalize={} lag={} working_age={}:{}",
            self.normalize, self.lag, self.working_age.lo, self.working_age.hi
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub region_id: String,
    /// Programme-entry year the row is aligned to.
    pub year: i32,
    pub demand: f64,
    pub supply: f64,
    pub config: FeatureConfig,
}

/// Working-age population at `year`. Bands that straddle the interval
/// contribute in proportion to the integer ages they share with it.
pub fn working_age_population(
    series: &RegionalSeries,
    year: i32,
    working_age: AgeBand,
) -> Result<f64> {
    if working_age.lo > working_age.hi {
        return Err(FeatureError::InvalidWorkingAge(working_age));
    }
    let bands = series
        .population
        .get(&year)
        .ok_or_else(|| FeatureError::MissingYear {
            region: series.region_id.clone(),
            year,
        })?;
    // Bands are disjoint and sorted; walk them to find uncovered ages.
    let mut next_age = working_age.lo;
    let mut total = 0.0;
    for b in bands {
        let shared = b.band.overlap_width(&working_age);
        if shared == 0 {
            continue;
        }
        if b.band.lo.max(working_age.lo) > next_age {
            break;
        }
        total += b.persons as f64 * f64::from(shared) / f64::from(b.band.width());
        next_age = b.band.hi.saturating_add(1);
    }
    if next_age <= working_age.hi {
        return Err(FeatureError::UncoveredWorkingAge {
            region: series.region_id.clone(),
            year,
            age: next_age,
        });
    }
    if total <= 0.0 {
        return Err(FeatureError::ZeroWorkingAgePopulation {
            region: series.region_id.clone(),
            year,
        });
    }
    Ok(total)
}

/// `employment(year) − employment(year − 1)`, divided by the working-age
/// population at `year` when `config.normalize` is set.
pub fn demand_proxy(series: &RegionalSeries, year: i32, config: &FeatureConfig) -> Result<f64> {
    let employed = |y: i32| {
        series
            .employment
            .get(&y)
            .copied()
            .ok_or_else(|| FeatureError::MissingYear {
                region: series.region_id.clone(),
                year: y,
            })
    };
    let current = employed(year)?;
    let previous = employed(year - 1)?;
    let change = current as f64 - previous as f64;
    if config.normalize {
        Ok(change / working_age_population(series, year, config.working_age)?)
    } else {
        Ok(change)
    }
}

pub fn supply_proxy(series: &RegionalSeries, year: i32, working_age: AgeBand) -> Result<f64> {
    let unemployed = *series
        .unemployed_6m
        .get(&year)
        .ok_or_else(|| FeatureError::MissingYear {
            region: series.region_id.clone(),
            year,
        })?;
    let population = working_age_population(series, year, working_age)?;
    let supply = unemployed as f64 / population;
    if supply > 1.0 {
        return Err(FeatureError::SupplyExceedsOne {
            region: series.region_id.clone(),
            year,
            unemployed,
            population,
        });
    }
    Ok(supply)
}

fn region_features(series: &RegionalSeries, config: &FeatureConfig) -> Result<Vec<FeatureRow>> {
    series
        .years
        .iter()
        .skip(1)
        .map(|&t| {
            Ok(FeatureRow {
                region_id: series.region_id.clone(),
                year: t + config.lag as i32,
                demand: demand_proxy(series, t, config)?,
                supply: supply_proxy(series, t, config.working_age)?,
                config: *config,
            })
        })
        .collect()
}

/// Feature rows for every region and every year with a predecessor, sorted
/// by region then year.
pub fn build_features(
    series_by_region: &BTreeMap<String, RegionalSeries>,
    config: &FeatureConfig,
) -> Result<Vec<FeatureRow>> {
    if config.working_age.lo > config.working_age.hi {
        return Err(FeatureError::InvalidWorkingAge(config.working_age));
    }
    let per_region: Vec<Vec<FeatureRow>> = series_by_region
        .par_iter()
        .map(|(_, s)| region_features(s, config))
        .collect::<Result<_>>()?;
    let mut rows: Vec<FeatureRow> = per_region.into_iter().flatten().collect();
    rows.sort_by(|a, b| (&a.region_id, a.year).cmp(&(&b.region_id, b.year)));
    Ok(rows)
}

/// `features.csv`; numbers at full round-trip precision.
pub fn write_features_csv(rows: &[FeatureRow]) -> Vec<u8> {
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(FEATURES_HEADER).expect("write to Vec");
    for r in rows {
        w.write_record([
            r.region_id.clone(),
            r.year.to_string(),
            crate::fmt_f64(r.demand),
            crate::fmt_f64(r.supply),
            u8::from(r.config.normalize).to_string(),
        ])
        .expect("write to Vec");
    }
    w.into_inner().expect("flush to Vec")
}

/// Parses `features.csv`. The file records only the normalize flag, so lag
/// and working-age interval are supplied by the caller.
pub fn parse_features_csv(
    input: CsvInput<'_>,
    lag: u32,
    working_age: AgeBand,
) -> Result<Vec<FeatureRow>, IngestError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(input.bytes);
    let mut rows = Vec::new();
    let mut header_seen = false;
    let mut keys = BTreeSet::new();
    let mut normalize: Option<bool> = None;
    for result in reader.records() {
        let record = result.map_err(|e| IngestError::MalformedRow {
            at: Location::new(input.name, e.position().map(|p| p.line()).unwrap_or(1)),
            reason: e.to_string(),
        })?;
        let at = Location::new(input.name, record.position().map(|p| p.line()).unwrap_or(0));
        let bad = |reason: String| IngestError::MalformedRow {
            at: at.clone(),
            reason,
        };
        if !header_seen {
            header_seen = true;
            if record.iter().ne(FEATURES_HEADER) {
                return Err(bad(format!(
                    "expected header `{}`",
                    FEATURES_HEADER.join(",")
                )));
            }
            continue;
        }
        if record.len() != FEATURES_HEADER.len() {
            return Err(bad(format!("expected 5 fields, found {}", record.len())));
        }
        let region = record[0].to_string();
        if region.is_empty() {
            return Err(bad("empty region".into()));
        }
        let year: i32 = record[1]
            .parse()
            .map_err(|_| bad(format!("invalid year {:?}", &record[1])))?;
        let number = |i: usize, name: &str| -> Result<f64, IngestError> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("invalid {name} {:?}", &record[i])))
        };
        let demand = number(2, "demand")?;
        let supply = number(3, "supply")?;
        if !(0.0..=1.0).contains(&supply) {
            return Err(bad(format!("supply {supply} outside [0, 1]")));
        }
        let flag = match &record[4] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("normalized must be 0 or 1, got {other:?}"))),
        };
        if *normalize.get_or_insert(flag) != flag {
            return Err(bad("mixed normalized flags in one file".into()));
        }
        if !keys.insert((region.clone(), year)) {
            return Err(bad(format!(
                "duplicate row for region {region}, year {year}"
            )));
        }
        rows.push(FeatureRow {
            region_id: region,
            year,
            demand,
            supply,
            config: FeatureConfig {
                normalize: flag,
                lag,
                working_age,
            },
        });
    }
    if !header_seen {
        return Err(IngestError::MalformedRow {
            at: Location::new(input.name, 1),
            reason: "missing header".into(),
        });
    }
    rows.sort_by(|a, b| (&a.region_id, a.year).cmp(&(&b.region_id, b.year)));
    Ok(rows)
}

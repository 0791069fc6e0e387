//! Brute-force reference implementations used to check the library. None of
//! these call into the code paths they are compared against.
#![allow(dead_code)]

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use workforce_forecast::features::FeatureConfig;
use workforce_forecast::features::FeatureRow;
use workforce_forecast::ingest::{AgeBand, PopulationBand, ProgrammeRecord, RegionalSeries, Spell};
use workforce_forecast::model::Observation;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Minimizes `Σ (y − b0 − b1·x1 − b2·x2)²` by exact cyclic coordinate
/// descent, stopping when a full sweep moves no coefficient by more than
/// `tol`.
pub fn coordinate_descent(x1: &[f64], x2: &[f64], y: &[f64], tol: f64) -> [f64; 3] {
    let n = y.len();
    let cols: [Vec<f64>; 3] = [vec![1.0; n], x1.to_vec(), x2.to_vec()];
    let sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut beta = [0.0; 3];
    let mut resid = y.to_vec();
    for _ in 0..5_000_000 {
        let mut moved = 0.0_f64;
        for j in 0..3 {
            let g: f64 = cols[j].iter().zip(&resid).map(|(c, r)| c * r).sum();
            let step = g / sq[j];
            beta[j] += step;
            for (r, c) in resid.iter_mut().zip(&cols[j]) {
                *r -= step * c;
            }
            moved = moved.max(step.abs());
        }
        if moved < tol {
            break;
        }
    }
    beta
}

pub fn rss(x1: &[f64], x2: &[f64], y: &[f64], b: [f64; 3]) -> f64 {
    (0..y.len())
        .map(|i| (y[i] - b[0] - b[1] * x1[i] - b[2] * x2[i]).powi(2))
        .sum()
}

fn is_leap(y: i32) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn days_in_month(y: i32, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        _ if is_leap(y) => 29,
        _ => 28,
    }
}

/// `date + months` calendar months, clamping the day to the target month.
pub fn add_months(date: NaiveDate, months: u32) -> NaiveDate {
    let total = date.year() * 12 + date.month0() as i32 + months as i32;
    let (y, m) = (total.div_euclid(12), total.rem_euclid(12) as u32 + 1);
    let d = date.day().min(days_in_month(y, m));
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Checks every calendar day of the window against every spell.
pub fn reintegrated_by_enumeration(record: &ProgrammeRecord, min_hours: f64, months: u32) -> bool {
    let last = add_months(record.entry_date, months);
    let mut day = record.entry_date;
    while day <= last {
        let covered = record
            .spells
            .iter()
            .any(|s| s.start <= day && day <= s.end && s.hours_per_week >= min_hours);
        if !covered {
            return false;
        }
        day += Duration::days(1);
    }
    true
}

const HOURS: [f64; 8] = [8.0, 15.0, 15.99, 16.0, 16.0, 16.01, 20.0, 37.5];

/// Random valid record: sorted, disjoint spells with small gaps (often
/// none), hours clustered around the 16-hour threshold.
pub fn random_record(rng: &mut impl Rng, id: usize) -> ProgrammeRecord {
    let entry =
        NaiveDate::from_ymd_opt(2014, 1, 1).unwrap() + Duration::days(rng.random_range(0..1100));
    let mut spells = Vec::new();
    let mut cursor = entry - Duration::days(rng.random_range(-5..60));
    for _ in 0..rng.random_range(0..6) {
        let gap = [0, 0, 0, 0, 1, 2, 7, 30][rng.random_range(0..8)];
        let start = cursor + Duration::days(gap);
        let len = [1, 10, 30, 60, 90, 120, 181, 182, 183, 184, 250][rng.random_range(0..11)];
        let end = start + Duration::days(len - 1 + rng.random_range(0..3));
        spells.push(Spell {
            start,
            end,
            hours_per_week: HOURS[rng.random_range(0..HOURS.len())],
        });
        cursor = end + Duration::days(1);
    }
    ProgrammeRecord {
        person_id: format!("p{id}"),
        region_id: "R1".into(),
        entry_date: entry,
        spells,
    }
}

/// Random dense series with population split into random contiguous bands
/// covering ages 0..=99.
pub fn random_series(rng: &mut impl Rng, region: &str) -> RegionalSeries {
    let first = rng.random_range(1995..2015);
    let n_years = rng.random_range(2..15);
    let years: Vec<i32> = (first..first + n_years).collect();
    let mut employment = std::collections::BTreeMap::new();
    let mut unemployed = std::collections::BTreeMap::new();
    let mut population = std::collections::BTreeMap::new();
    for &y in &years {
        let mut cuts: Vec<u32> = (0..rng.random_range(0..8))
            .map(|_| rng.random_range(1..100))
            .collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut lo = 0;
        let mut bands = Vec::new();
        for hi_excl in cuts.into_iter().chain([100]) {
            bands.push(PopulationBand {
                band: AgeBand::new(lo, hi_excl - 1),
                persons: rng.random_range(1_000..2_000_000),
            });
            lo = hi_excl;
        }
        let wap = expanded_working_age(&bands, AgeBand::new(16, 64));
        employment.insert(y, rng.random_range(0..5_000_000));
        unemployed.insert(y, rng.random_range(0..=(wap.floor() as u64)));
        population.insert(y, bands);
    }
    RegionalSeries {
        region_id: region.into(),
        years,
        employment,
        unemployed_6m: unemployed,
        population,
    }
}

/// Working-age population by spreading each band evenly over its ages and
/// summing the ages inside `working_age` one by one.
pub fn expanded_working_age(bands: &[PopulationBand], working_age: AgeBand) -> f64 {
    let mut total = 0.0;
    for b in bands {
        let per_age = b.persons as f64 / (b.band.hi - b.band.lo + 1) as f64;
        for age in b.band.lo..=b.band.hi {
            if working_age.lo <= age && age <= working_age.hi {
                total += per_age;
            }
        }
    }
    total
}

pub fn observation(
    region: &str,
    year: i32,
    demand: f64,
    supply: f64,
    performance: f64,
) -> Observation {
    Observation {
        features: FeatureRow {
            region_id: region.into(),
            year,
            demand,
            supply,
            config: FeatureConfig::default(),
        },
        performance,
    }
}

/// Random regression instance with `n` rows and Gaussian-ish noise.
pub fn random_instance(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let b: [f64; 3] = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    ];
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..n)
        .map(|i| b[0] + b[1] * x1[i] + b[2] * x2[i] + 0.1 * (rng.random::<f64>() - 0.5))
        .collect();
    (x1, x2, y)
}

//! Per-person reintegration outcome and per-region, per-entry-year
//! performance rates.

use std::collections::BTreeMap;

use chrono::{Datelike, Months, NaiveDate};
use csv::{ReaderBuilder, Trim, WriterBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{CsvInput, IngestError, Location, ProgrammeRecord};

pub const DEFAULT_MIN_HOURS: f64 = 16.0;
pub const DEFAULT_WINDOW_MONTHS: u32 = 6;

pub const PERFORMANCE_HEADER: [&str; 5] = [
    "region",
    "entry_year",
    "n_entrants",
    "n_success",
    "performance",
];

/// Success rule: minimum weekly hours and the length of the continuous
/// employment window in calendar months.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRule {
    pub min_hours: f64,
    pub window_months: u32,
}

impl Default for SuccessRule {
    fn default() -> Self {
        Self {
            min_hours: DEFAULT_MIN_HOURS,
            window_months: DEFAULT_WINDOW_MONTHS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub region_id: String,
    pub entry_year: i32,
    pub n_entrants: u64,
    pub n_success: u64,
    /// Success rate. Equals `n_success / n_entrants` for aggregated rows;
    /// synthetic rows carry the latent rate and the nearest whole count.
    pub performance: f64,
}

impl PerformanceRow {
    pub fn from_counts(
        region_id: impl Into<String>,
        entry_year: i32,
        n_entrants: u64,
        n_success: u64,
    ) -> Self {
        debug_assert!(n_entrants > 0 && n_success <= n_entrants);
        Self {
            region_id: region_id.into(),
            entry_year,
            n_entrants,
            n_success,
            performance: n_success as f64 / n_entrants as f64,
        }
    }
}

/// Last day of the success window; the target day is clamped to the end of
/// a shorter month (Aug 31 + 6 months is the last day of February).
pub fn window_end(entry: NaiveDate, window_months: u32) -> NaiveDate {
    entry
        .checked_add_months(Months::new(window_months))
        .expect("date within chrono range")
}

/// Whether the closed window `[entry, entry + window_months]` is fully
/// covered by spells working at least `min_hours` per week.
///
/// Adjacent spells (one ends the day before the next starts) are
/// continuous. Days before the entry date are ignored.
pub fn is_reintegrated(record: &ProgrammeRecord, min_hours: f64, window_months: u32) -> bool {
    let end = window_end(record.entry_date, window_months);
    // First day not yet known to be covered.
    let mut cursor = record.entry_date;
    for spell in record
        .spells
        .iter()
        .filter(|s| s.hours_per_week >= min_hours)
    {
        if spell.end < cursor {
            continue;
        }
        if spell.start > cursor {
            return false;
        }
        if spell.end >= end {
            return true;
        }
        cursor = spell.end.succ_opt().expect("date within chrono range");
    }
    false
}

/// One row per `(region, entry year)` with at least one entrant, sorted by
/// region then year. Each record counts as one entrant.
pub fn aggregate_performance(
    records: &[ProgrammeRecord],
    rule: SuccessRule,
) -> Vec<PerformanceRow> {
    let outcomes: Vec<bool> = records
        .par_iter()
        .map(|r| is_reintegrated(r, rule.min_hours, rule.window_months))
        .collect();
    let mut cells: BTreeMap<(&str, i32), (u64, u64)> = BTreeMap::new();
    for (record, success) in records.iter().zip(outcomes) {
        let cell = cells
            .entry((record.region_id.as_str(), record.entry_date.year()))
            .or_default();
        cell.0 += 1;
        cell.1 += u64::from(success);
    }
    cells
        .into_iter()
        .map(|((region, year), (n, s))| PerformanceRow::from_counts(region, year, n, s))
        .collect()
}

/// `performance.csv` with the rate printed to 6 decimal places.
pub fn write_performance_csv(rows: &[PerformanceRow]) -> Vec<u8> {
    write_rows(rows, |p| format!("{p:.6}"))
}

/// Same schema, rate printed at full round-trip precision.
pub fn write_performance_csv_exact(rows: &[PerformanceRow]) -> Vec<u8> {
    write_rows(rows, crate::fmt_f64)
}

fn write_rows(rows: &[PerformanceRow], fmt_rate: impl Fn(f64) -> String) -> Vec<u8> {
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(PERFORMANCE_HEADER).expect("write to Vec");
    for r in rows {
        w.write_record([
            r.region_id.clone(),
            r.entry_year.to_string(),
            r.n_entrants.to_string(),
            r.n_success.to_string(),
            fmt_rate(r.performance),
        ])
        .expect("write to Vec");
    }
    w.into_inner().expect("flush to Vec")
}

/// Parses `performance.csv`.
///
/// Counts must satisfy `0 ≤ n_success ≤ n_entrants`, `n_entrants > 0`, and
/// the rate must lie in `[0, 1]` within half a person of `n_success / n_entrants`
/// (printed rounding included).
pub fn parse_performance_csv(input: CsvInput<'_>) -> Result<Vec<PerformanceRow>, IngestError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(input.bytes);
    let mut rows = Vec::new();
    let mut header_seen = false;
    let mut seen: BTreeMap<(String, i32), u64> = BTreeMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| IngestError::MalformedRow {
            at: Location::new(input.name, e.position().map(|p| p.line()).unwrap_or(1)),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let at = Location::new(input.name, line);
        let bad = |reason: String| IngestError::MalformedRow {
            at: at.clone(),
            reason,
        };
        if !header_seen {
            header_seen = true;
            if record.iter().ne(PERFORMANCE_HEADER) {
                return Err(bad(format!(
                    "expected header `{}`",
                    PERFORMANCE_HEADER.join(",")
                )));
            }
            continue;
        }
        if record.len() != PERFORMANCE_HEADER.len() {
            return Err(bad(format!("expected 5 fields, found {}", record.len())));
        }
        let region = record[0].to_string();
        if region.is_empty() {
            return Err(bad("empty region".into()));
        }
        let year: i32 = record[1]
            .parse()
            .map_err(|_| bad(format!("invalid entry_year {:?}", &record[1])))?;
        let n: u64 = record[2]
            .parse()
            .map_err(|_| bad(format!("invalid n_entrants {:?}", &record[2])))?;
        let s: u64 = record[3]
            .parse()
            .map_err(|_| bad(format!("invalid n_success {:?}", &record[3])))?;
        let p: f64 = record[4]
            .parse()
            .map_err(|_| bad(format!("invalid performance {:?}", &record[4])))?;
        if n == 0 || s > n {
            return Err(bad(format!(
                "need 0 <= n_success <= n_entrants and n_entrants > 0, got {s}/{n}"
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("performance {p} outside [0, 1]")));
        }
        let implied = s as f64 / n as f64;
        if (p - implied).abs() > 0.5 / n as f64 + 5e-7 {
            return Err(bad(format!("performance {p} inconsistent with {s}/{n}")));
        }
        if let Some(first) = seen.insert((region.clone(), year), line) {
            return Err(bad(format!(
                "duplicate row for region {region}, year {year} (first at line {first})"
            )));
        }
        rows.push(PerformanceRow {
            region_id: region,
            entry_year: year,
            n_entrants: n,
            n_success: s,
            performance: p,
        });
    }
    if !header_seen {
        return Err(IngestError::MalformedRow {
            at: Location::new(input.name, 1),
            reason: "missing header".into(),
        });
    }
    rows.sort_by(|a, b| (&a.region_id, a.entry_year).cmp(&(&b.region_id, b.entry_year)));
    Ok(rows)
}

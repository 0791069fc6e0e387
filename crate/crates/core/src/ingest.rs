//! Parsing and validation of the regional statistics files and the
//! individual programme-record file.
//!
//! All four inputs are UTF-8 CSV with a mandatory header row:
//!
//! ```text
//! employment.csv    region,year,employed
//! unemployment.csv  region,year,unemployed_6m
//! population.csv    region,year,age_lo,age_hi,persons
//! records.csv       person_id,region,entry_date,spell_start,spell_end,hours_per_week
//! ```
//!
//! Parsers work on in-memory bytes so they can be called concurrently on
//! distinct inputs. The `load_*` helpers read from disk first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMPLOYMENT_HEADER: [&str; 3] = ["region", "year", "employed"];
pub const UNEMPLOYMENT_HEADER: [&str; 3] = ["region", "year", "unemployed_6m"];
pub const POPULATION_HEADER: [&str; 5] = ["region", "year", "age_lo", "age_hi", "persons"];
pub const RECORDS_HEADER: [&str; 6] = [
    "person_id",
    "region",
    "entry_date",
    "spell_start",
    "spell_end",
    "hours_per_week",
];

const DATE_FORMAT: &str = "%Y-%m-%d";

/// File name and 1-based line number of an offending row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub file: String,
    pub line: u64,
}

impl Location {
    pub fn new(file: &str, line: u64) -> Self {
        Self {
            file: file.to_string(),
            line,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("{at}: malformed row: {reason}")]
    MalformedRow { at: Location, reason: String },
    #[error("{at}: region {region} has no row for year {missing_year}")]
    GapInYears {
        at: Location,
        region: String,
        missing_year: i32,
    },
    #[error("{at}: negative count {value:?} in column {column}")]
    NegativeCount {
        at: Location,
        column: String,
        value: String,
    },
    #[error("{at}: age band {band} overlaps {other} for region {region}, year {year}")]
    OverlappingAgeBands {
        at: Location,
        region: String,
        year: i32,
        band: AgeBand,
        other: AgeBand,
    },
    #[error("{at}: region {region} has no year common to employment, unemployment and population")]
    EmptyIntersection { at: Location, region: String },
    #[error("{at}: overlapping employment spells for person {person_id}")]
    OverlappingSpells { at: Location, person_id: String },
    #[error("{file}: {message}")]
    Io { file: String, message: String },
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::MalformedRow { .. } => "MalformedRow",
            IngestError::GapInYears { .. } => "GapInYears",
            IngestError::NegativeCount { .. } => "NegativeCount",
            IngestError::OverlappingAgeBands { .. } => "OverlappingAgeBands",
            IngestError::EmptyIntersection { .. } => "EmptyIntersection",
            IngestError::OverlappingSpells { .. } => "OverlappingSpells",
            IngestError::Io { .. } => "Io",
        }
    }

    /// Location of the offending row, when the error is tied to one.
    pub fn location(&self) -> Option<&Location> {
        match self {
            IngestError::MalformedRow { at, .. }
            | IngestError::GapInYears { at, .. }
            | IngestError::NegativeCount { at, .. }
            | IngestError::OverlappingAgeBands { at, .. }
            | IngestError::EmptyIntersection { at, .. }
            | IngestError::OverlappingSpells { at, .. } => Some(at),
            IngestError::Io { .. } => None,
        }
    }
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Closed interval of integer ages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgeBand {
    pub lo: u32,
    pub hi: u32,
}

impl AgeBand {
    pub const fn new(lo: u32, hi: u32) -> Self {
        Self { lo, hi }
    }

    /// Number of integer ages in the band.
    pub fn width(&self) -> u32 {
        self.hi - self.lo + 1
    }

    pub fn overlaps(&self, other: &AgeBand) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Number of integer ages shared with `other`.
    pub fn overlap_width(&self, other: &AgeBand) -> u32 {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationBand {
    pub band: AgeBand,
    pub persons: u64,
}

/// Dense per-region panel of labour statistics.
///
/// `years` is consecutive and strictly increasing, and every series holds
/// a cell for each of those years. Population bands within a year are
/// disjoint and sorted by lower age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalSeries {
    pub region_id: String,
    pub years: Vec<i32>,
    pub employment: BTreeMap<i32, u64>,
    pub unemployed_6m: BTreeMap<i32, u64>,
    pub population: BTreeMap<i32, Vec<PopulationBand>>,
}

impl RegionalSeries {
    pub fn first_year(&self) -> Option<i32> {
        self.years.first().copied()
    }

    pub fn last_year(&self) -> Option<i32> {
        self.years.last().copied()
    }

    pub fn contains_year(&self, year: i32) -> bool {
        self.employment.contains_key(&year)
    }
}

/// One employment spell; `end` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spell {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub hours_per_week: f64,
}

/// One programme entry with the person's employment spells, sorted by start
/// date and pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgrammeRecord {
    pub person_id: String,
    pub region_id: String,
    pub entry_date: NaiveDate,
    pub spells: Vec<Spell>,
}

/// A named CSV payload.
#[derive(Debug, Clone, Copy)]
pub struct CsvInput<'a> {
    pub name: &'a str,
    pub bytes: &'a [u8],
}

impl<'a> CsvInput<'a> {
    pub fn new(name: &'a str, bytes: &'a [u8]) -> Self {
        Self { name, bytes }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| IngestError::Io {
        file: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads the three statistics files from disk and parses them.
pub fn load_regional_series(
    employment: &Path,
    unemployment: &Path,
    population: &Path,
) -> Result<BTreeMap<String, RegionalSeries>> {
    let (e, u, p) = (
        read_file(employment)?,
        read_file(unemployment)?,
        read_file(population)?,
    );
    let (en, un, pn) = (
        employment.display().to_string(),
        unemployment.display().to_string(),
        population.display().to_string(),
    );
    parse_regional_series(
        CsvInput::new(&en, &e),
        CsvInput::new(&un, &u),
        CsvInput::new(&pn, &p),
    )
}

pub fn load_programme_records(path: &Path) -> Result<Vec<ProgrammeRecord>> {
    let bytes = read_file(path)?;
    parse_programme_records(CsvInput::new(&path.display().to_string(), &bytes))
}

/// Reads every data row, checking the header and the field count.
fn read_rows(input: CsvInput<'_>, header: &[&str]) -> Result<Vec<(u64, StringRecord)>> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(input.bytes);
    let mut rows = Vec::new();
    let mut seen_header = false;
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(1);
            IngestError::MalformedRow {
                at: Location::new(input.name, line),
                reason: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !seen_header {
            seen_header = true;
            if record.iter().ne(header.iter().copied()) {
                return Err(IngestError::MalformedRow {
                    at: Location::new(input.name, line),
                    reason: format!("expected header `{}`", header.join(",")),
                });
            }
            continue;
        }
        // Blank lines are skipped by the reader; a lone empty field is not data.
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(IngestError::MalformedRow {
                at: Location::new(input.name, line),
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        rows.push((line, record));
    }
    if !seen_header {
        return Err(IngestError::MalformedRow {
            at: Location::new(input.name, 1),
            reason: format!("missing header `{}`", header.join(",")),
        });
    }
    Ok(rows)
}

fn malformed(at: &Location, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        at: at.clone(),
        reason: reason.into(),
    }
}

fn parse_region(field: &str, at: &Location) -> Result<String> {
    if field.is_empty() {
        return Err(malformed(at, "empty region"));
    }
    Ok(field.to_string())
}

fn parse_year(field: &str, at: &Location) -> Result<i32> {
    field
        .parse::<i32>()
        .map_err(|_| malformed(at, format!("invalid year {field:?}")))
}

/// Head-counts are non-negative integers; fractions are rejected.
fn parse_count(field: &str, column: &str, at: &Location) -> Result<u64> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    if let Some(rest) = field.strip_prefix('-') {
        if rest.parse::<f64>().is_ok() {
            return Err(IngestError::NegativeCount {
                at: at.clone(),
                column: column.to_string(),
                value: field.to_string(),
            });
        }
    }
    Err(malformed(
        at,
        format!("column {column}: {field:?} is not a non-negative integer"),
    ))
}

fn parse_age(field: &str, column: &str, at: &Location) -> Result<u32> {
    field
        .parse::<u32>()
        .map_err(|_| malformed(at, format!("column {column}: invalid age {field:?}")))
}

fn parse_date(field: &str, column: &str, at: &Location) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field, DATE_FORMAT)
        .map_err(|_| malformed(at, format!("column {column}: invalid date {field:?}")))
}

/// `region → year → (count, line)` for a single-count statistics file.
type CountTable = BTreeMap<String, BTreeMap<i32, (u64, u64)>>;

fn parse_count_file(input: CsvInput<'_>, header: &[&str]) -> Result<CountTable> {
    let column = header[2];
    let mut table: CountTable = BTreeMap::new();
    for (line, record) in read_rows(input, header)? {
        let at = Location::new(input.name, line);
        let region = parse_region(&record[0], &at)?;
        let year = parse_year(&record[1], &at)?;
        let count = parse_count(&record[2], column, &at)?;
        let cells = table.entry(region.clone()).or_default();
        if let Some((_, first)) = cells.get(&year) {
            return Err(malformed(
                &at,
                format!("duplicate row for region {region}, year {year} (first at line {first})"),
            ));
        }
        cells.insert(year, (count, line));
    }
    Ok(table)
}

/// `region → year → band → (persons, line)`.
type PopulationTable = BTreeMap<String, BTreeMap<i32, BTreeMap<AgeBand, (u64, u64)>>>;

fn parse_population_file(input: CsvInput<'_>) -> Result<PopulationTable> {
    let mut table: PopulationTable = BTreeMap::new();
    for (line, record) in read_rows(input, &POPULATION_HEADER)? {
        let at = Location::new(input.name, line);
        let region = parse_region(&record[0], &at)?;
        let year = parse_year(&record[1], &at)?;
        let lo = parse_age(&record[2], "age_lo", &at)?;
        let hi = parse_age(&record[3], "age_hi", &at)?;
        if lo > hi {
            return Err(malformed(&at, format!("age_lo {lo} exceeds age_hi {hi}")));
        }
        let persons = parse_count(&record[4], "persons", &at)?;
        let band = AgeBand::new(lo, hi);
        let bands = table
            .entry(region.clone())
            .or_default()
            .entry(year)
            .or_default();
        if bands.insert(band, (persons, line)).is_some() {
            return Err(IngestError::OverlappingAgeBands {
                at,
                region,
                year,
                band,
                other: band,
            });
        }
    }
    Ok(table)
}

/// Checks that `years` has no holes; the error points at the first row after
/// the hole.
fn check_consecutive<'a>(
    file: &str,
    region: &str,
    years: impl Iterator<Item = (&'a i32, u64)>,
) -> Result<()> {
    let mut prev: Option<i32> = None;
    for (&year, line) in years {
        if let Some(p) = prev {
            if year != p + 1 {
                return Err(IngestError::GapInYears {
                    at: Location::new(file, line),
                    region: region.to_string(),
                    missing_year: p + 1,
                });
            }
        }
        prev = Some(year);
    }
    Ok(())
}

/// Parses the three statistics files into one dense series per region.
///
/// Years are restricted to those present in all three files for the region.
pub fn parse_regional_series(
    employment: CsvInput<'_>,
    unemployment: CsvInput<'_>,
    population: CsvInput<'_>,
) -> Result<BTreeMap<String, RegionalSeries>> {
    let emp = parse_count_file(employment, &EMPLOYMENT_HEADER)?;
    let unemp = parse_count_file(unemployment, &UNEMPLOYMENT_HEADER)?;
    let pop = parse_population_file(population)?;

    for (region, cells) in &emp {
        check_consecutive(employment.name, region, cells.iter().map(|(y, c)| (y, c.1)))?;
    }
    for (region, cells) in &unemp {
        check_consecutive(
            unemployment.name,
            region,
            cells.iter().map(|(y, c)| (y, c.1)),
        )?;
    }
    for (region, years) in &pop {
        let first_lines = years
            .iter()
            .map(|(y, bands)| (y, bands.values().map(|v| v.1).min().unwrap_or(0)));
        check_consecutive(population.name, region, first_lines)?;
        for (&year, bands) in years {
            let mut prev: Option<(&AgeBand, &(u64, u64))> = None;
            for (band, cell) in bands {
                if let Some((pb, _)) = prev {
                    if pb.overlaps(band) {
                        return Err(IngestError::OverlappingAgeBands {
                            at: Location::new(population.name, cell.1),
                            region: region.clone(),
                            year,
                            band: *band,
                            other: *pb,
                        });
                    }
                }
                // Keep the band reaching furthest so nested bands are caught.
                prev = match prev {
                    Some((pb, pc)) if pb.hi >= band.hi => Some((pb, pc)),
                    _ => Some((band, cell)),
                };
            }
        }
    }

    let regions: BTreeSet<&String> = emp.keys().chain(unemp.keys()).chain(pop.keys()).collect();
    let mut out = BTreeMap::new();
    for region in regions {
        let first_row = || {
            [
                (
                    employment.name,
                    emp.get(region).and_then(|c| c.values().map(|v| v.1).min()),
                ),
                (
                    unemployment.name,
                    unemp
                        .get(region)
                        .and_then(|c| c.values().map(|v| v.1).min()),
                ),
                (
                    population.name,
                    pop.get(region)
                        .and_then(|ys| ys.values().flat_map(|b| b.values().map(|v| v.1)).min()),
                ),
            ]
            .into_iter()
            .find_map(|(file, line)| line.map(|l| Location::new(file, l)))
            .expect("region appears in at least one file")
        };
        let (Some(e), Some(u), Some(p)) = (emp.get(region), unemp.get(region), pop.get(region))
        else {
            return Err(IngestError::EmptyIntersection {
                at: first_row(),
                region: region.clone(),
            });
        };
        let years: Vec<i32> = e
            .keys()
            .filter(|y| u.contains_key(y) && p.contains_key(y))
            .copied()
            .collect();
        if years.is_empty() {
            return Err(IngestError::EmptyIntersection {
                at: first_row(),
                region: region.clone(),
            });
        }
        let series = RegionalSeries {
            region_id: region.clone(),
            employment: years.iter().map(|y| (*y, e[y].0)).collect(),
            unemployed_6m: years.iter().map(|y| (*y, u[y].0)).collect(),
            population: years
                .iter()
                .map(|y| {
                    let bands = p[y]
                        .iter()
                        .map(|(band, cell)| PopulationBand {
                            band: *band,
                            persons: cell.0,
                        })
                        .collect();
                    (*y, bands)
                })
                .collect(),
            years,
        };
        out.insert(region.clone(), series);
    }
    Ok(out)
}

/// Parses the programme-record file.
///
/// Rows are grouped by `(person_id, entry_date)`, so one person entering the
/// programme twice yields two records. A row with empty spell fields marks a
/// person with no spells. Spells before the entry date are kept.
pub fn parse_programme_records(input: CsvInput<'_>) -> Result<Vec<ProgrammeRecord>> {
    struct Pending {
        region: String,
        spells: Vec<(Spell, u64)>,
    }
    let mut groups: BTreeMap<(String, NaiveDate), Pending> = BTreeMap::new();
    for (line, record) in read_rows(input, &RECORDS_HEADER)? {
        let at = Location::new(input.name, line);
        let person = record[0].to_string();
        if person.is_empty() {
            return Err(malformed(&at, "empty person_id"));
        }
        let region = parse_region(&record[1], &at)?;
        let entry = parse_date(&record[2], "entry_date", &at)?;
        let spell_fields = [&record[3], &record[4], &record[5]];
        let spell = if spell_fields.iter().all(|f| f.is_empty()) {
            None
        } else if spell_fields.iter().any(|f| f.is_empty()) {
            return Err(malformed(
                &at,
                "spell fields must be all present or all empty",
            ));
        } else {
            let start = parse_date(&record[3], "spell_start", &at)?;
            let end = parse_date(&record[4], "spell_end", &at)?;
            if start > end {
                return Err(malformed(
                    &at,
                    format!("spell_start {start} is after spell_end {end}"),
                ));
            }
            let hours: f64 = record[5]
                .parse()
                .map_err(|_| malformed(&at, format!("invalid hours_per_week {:?}", &record[5])))?;
            if !hours.is_finite() || hours < 0.0 {
                return Err(malformed(
                    &at,
                    format!("hours_per_week must be non-negative, got {hours}"),
                ));
            }
            Some(Spell {
                start,
                end,
                hours_per_week: hours,
            })
        };
        let group = groups
            .entry((person.clone(), entry))
            .or_insert_with(|| Pending {
                region: region.clone(),
                spells: Vec::new(),
            });
        if group.region != region {
            return Err(malformed(
                &at,
                format!(
                    "person {person} is recorded in regions {} and {region}",
                    group.region
                ),
            ));
        }
        if let Some(s) = spell {
            group.spells.push((s, line));
        }
    }

    let mut out = Vec::with_capacity(groups.len());
    for ((person_id, entry_date), mut group) in groups {
        // Sort on every field so identical-start rows order deterministically.
        group.spells.sort_by(|(a, la), (b, lb)| {
            (a.start, a.end)
                .cmp(&(b.start, b.end))
                .then(a.hours_per_week.total_cmp(&b.hours_per_week))
                .then(la.cmp(lb))
        });
        for pair in group.spells.windows(2) {
            let ((prev, pl), (next, nl)) = (&pair[0], &pair[1]);
            if next.start <= prev.end {
                return Err(IngestError::OverlappingSpells {
                    at: Location::new(input.name, (*pl).max(*nl)),
                    person_id,
                });
            }
        }
        out.push(ProgrammeRecord {
            person_id,
            region_id: group.region,
            entry_date,
            spells: group.spells.into_iter().map(|(s, _)| s).collect(),
        });
    }
    Ok(out)
}

fn write_csv<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("write to Vec");
    for row in rows {
        w.write_record(row).expect("write to Vec");
    }
    w.into_inner().expect("flush to Vec")
}

/// Canonical `employment.csv` for the given series.
pub fn write_employment_csv(series: &BTreeMap<String, RegionalSeries>) -> Vec<u8> {
    write_csv(
        &EMPLOYMENT_HEADER,
        series.values().flat_map(|s| {
            s.employment
                .iter()
                .map(|(y, v)| vec![s.region_id.clone(), y.to_string(), v.to_string()])
        }),
    )
}

pub fn write_unemployment_csv(series: &BTreeMap<String, RegionalSeries>) -> Vec<u8> {
    write_csv(
        &UNEMPLOYMENT_HEADER,
        series.values().flat_map(|s| {
            s.unemployed_6m
                .iter()
                .map(|(y, v)| vec![s.region_id.clone(), y.to_string(), v.to_string()])
        }),
    )
}

pub fn write_population_csv(series: &BTreeMap<String, RegionalSeries>) -> Vec<u8> {
    write_csv(
        &POPULATION_HEADER,
        series.values().flat_map(|s| {
            s.population.iter().flat_map(move |(y, bands)| {
                bands.iter().map(move |b| {
                    vec![
                        s.region_id.clone(),
                        y.to_string(),
                        b.band.lo.to_string(),
                        b.band.hi.to_string(),
                        b.persons.to_string(),
                    ]
                })
            })
        }),
    )
}

pub fn write_records_csv(records: &[ProgrammeRecord]) -> Vec<u8> {
    write_csv(
        &RECORDS_HEADER,
        records.iter().flat_map(|r| {
            let base = [
                r.person_id.clone(),
                r.region_id.clone(),
                r.entry_date.to_string(),
            ];
            if r.spells.is_empty() {
                vec![base
                    .iter()
                    .cloned()
                    .chain(["".into(), "".into(), "".into()])
                    .collect::<Vec<_>>()]
            } else {
                r.spells
                    .iter()
                    .map(|s| {
                        base.iter()
                            .cloned()
                            .chain([
                                s.start.to_string(),
                                s.end.to_string(),
                                crate::fmt_f64(s.hours_per_week),
                            ])
                            .collect()
                    })
                    .collect()
            }
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(emp: &str, unemp: &str, pop: &str) -> Result<BTreeMap<String, RegionalSeries>> {
        parse_regional_series(
            CsvInput::new("employment.csv", emp.as_bytes()),
            CsvInput::new("unemployment.csv", unemp.as_bytes()),
            CsvInput::new("population.csv", pop.as_bytes()),
        )
    }

    fn count_file(header: &str, region: &str, years: std::ops::RangeInclusive<i32>) -> String {
        let mut s = format!("{header}\n");
        for y in years {
            s.push_str(&format!("{region},{y},{}\n", 1000 + y));
        }
        s
    }

    fn pop_file(region: &str, years: std::ops::RangeInclusive<i32>) -> String {
        let mut s = "region,year,age_lo,age_hi,persons\n".to_string();
        for y in years {
            s.push_str(&format!("{region},{y},0,15,200\n{region},{y},16,64,800\n"));
        }
        s
    }

    #[test]
    fn full_coverage_gives_all_years() {
        let out = parse(
            &count_file("region,year,employed", "R1", 2000..=2020),
            &count_file("region,year,unemployed_6m", "R1", 2000..=2020),
            &pop_file("R1", 2000..=2020),
        )
        .unwrap();
        let s = &out["R1"];
        assert_eq!(s.years.len(), 21);
        assert_eq!(s.years, (2000..=2020).collect::<Vec<_>>());
        assert_eq!(s.employment[&2005], 3005);
        assert_eq!(s.population[&2005].len(), 2);
    }

    #[test]
    fn years_are_intersected() {
        let out = parse(
            &count_file("region,year,employed", "R1", 2000..=2020),
            &count_file("region,year,unemployed_6m", "R1", 2000..=2020),
            &pop_file("R1", 2011..=2020),
        )
        .unwrap();
        assert_eq!(out["R1"].years, (2011..=2020).collect::<Vec<_>>());
        assert_eq!(out["R1"].employment.len(), 10);
    }

    #[test]
    fn negative_count_names_row() {
        let err = parse(
            "region,year,employed\nR1,2000,10\nR1,2001,-5\n",
            &count_file("region,year,unemployed_6m", "R1", 2000..=2001),
            &pop_file("R1", 2000..=2001),
        )
        .unwrap_err();
        assert_eq!(err.code(), "NegativeCount");
        assert_eq!(err.location(), Some(&Location::new("employment.csv", 3)));
    }

    #[test]
    fn fractional_count_is_malformed() {
        let err = parse(
            "region,year,employed\nR1,2000,10.5\n",
            &count_file("region,year,unemployed_6m", "R1", 2000..=2000),
            &pop_file("R1", 2000..=2000),
        )
        .unwrap_err();
        assert_eq!(err.code(), "MalformedRow");
        assert_eq!(err.location().unwrap().line, 2);
    }

    #[test]
    fn gap_is_rejected() {
        let err = parse(
            "region,year,employed\nR1,2000,10\nR1,2001,11\nR1,2003,12\n",
            &count_file("region,year,unemployed_6m", "R1", 2000..=2003),
            &pop_file("R1", 2000..=2003),
        )
        .unwrap_err();
        match err {
            IngestError::GapInYears {
                at,
                region,
                missing_year,
            } => {
                assert_eq!(region, "R1");
                assert_eq!(missing_year, 2002);
                assert_eq!(at, Location::new("employment.csv", 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlapping_bands_rejected() {
        let pop = "region,year,age_lo,age_hi,persons\nR1,2000,0,20,5\nR1,2000,16,64,9\n";
        let err = parse(
            &count_file("region,year,employed", "R1", 2000..=2000),
            &count_file("region,year,unemployed_6m", "R1", 2000..=2000),
            pop,
        )
        .unwrap_err();
        assert_eq!(err.code(), "OverlappingAgeBands");
        assert_eq!(err.location().unwrap().line, 3);
    }

    #[test]
    fn nested_and_duplicate_bands_rejected() {
        let nested =
            "region,year,age_lo,age_hi,persons\nR1,2000,0,90,5\nR1,2000,16,20,9\nR1,2000,30,40,9\n";
        let dup = "region,year,age_lo,age_hi,persons\nR1,2000,16,64,5\nR1,2000,16,64,9\n";
        for pop in [nested, dup] {
            let err = parse(
                &count_file("region,year,employed", "R1", 2000..=2000),
                &count_file("region,year,unemployed_6m", "R1", 2000..=2000),
                pop,
            )
            .unwrap_err();
            assert_eq!(err.code(), "OverlappingAgeBands", "{pop}");
        }
    }

    #[test]
    fn disjoint_coverage_is_empty_intersection() {
        let err = parse(
            &count_file("region,year,employed", "R1", 2000..=2005),
            &count_file("region,year,unemployed_6m", "R1", 2000..=2005),
            &pop_file("R1", 2010..=2012),
        )
        .unwrap_err();
        assert_eq!(err.code(), "EmptyIntersection");

        let err = parse(
            &count_file("region,year,employed", "R2", 2000..=2005),
            &count_file("region,year,unemployed_6m", "R1", 2000..=2005),
            &pop_file("R1", 2000..=2005),
        )
        .unwrap_err();
        assert_eq!(err.code(), "EmptyIntersection");
        assert_eq!(err.location().unwrap().file, "unemployment.csv");
    }

    #[test]
    fn bad_header_and_field_count() {
        let err = parse(
            "region,yr,employed\n",
            "region,year,unemployed_6m\n",
            "region,year,age_lo,age_hi,persons\n",
        )
        .unwrap_err();
        assert_eq!(err.location().unwrap().line, 1);
        let err = parse(
            "region,year,employed\nR1,2000\n",
            "region,year,unemployed_6m\n",
            "region,year,age_lo,age_hi,persons\n",
        )
        .unwrap_err();
        assert_eq!(err.code(), "MalformedRow");
        assert_eq!(err.location().unwrap().line, 2);
        let err = parse("", "", "").unwrap_err();
        assert_eq!(err.code(), "MalformedRow");
    }

    #[test]
    fn duplicate_year_is_malformed() {
        let err = parse(
            "region,year,employed\nR1,2000,1\nR1,2000,2\n",
            "region,year,unemployed_6m\n",
            "region,year,age_lo,age_hi,persons\n",
        )
        .unwrap_err();
        assert_eq!(err.code(), "MalformedRow");
        assert_eq!(err.location().unwrap().line, 3);
    }

    #[test]
    fn canonical_csv_round_trip() {
        let out = parse(
            &count_file("region,year,employed", "R1", 2003..=2009),
            &count_file("region,year,unemployed_6m", "R1", 2003..=2009),
            &pop_file("R1", 2003..=2009),
        )
        .unwrap();
        let (e, u, p) = (
            write_employment_csv(&out),
            write_unemployment_csv(&out),
            write_population_csv(&out),
        );
        let again = parse_regional_series(
            CsvInput::new("e", &e),
            CsvInput::new("u", &u),
            CsvInput::new("p", &p),
        )
        .unwrap();
        assert_eq!(out, again);
    }

    fn records(body: &str) -> Result<Vec<ProgrammeRecord>> {
        let text =
            format!("person_id,region,entry_date,spell_start,spell_end,hours_per_week\n{body}");
        parse_programme_records(CsvInput::new("records.csv", text.as_bytes()))
    }

    #[test]
    fn person_with_two_disjoint_spells() {
        let out = records(
            "p1,R1,2015-03-01,2015-06-01,2015-12-31,20\np1,R1,2015-03-01,2015-03-01,2015-05-31,16\n",
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].spells.len(), 2);
        assert!(out[0].spells[0].start < out[0].spells[1].start);
        assert_eq!(
            out[0].entry_date,
            NaiveDate::from_ymd_opt(2015, 3, 1).unwrap()
        );
    }

    #[test]
    fn overlapping_spells_rejected() {
        let err = records(
            "p1,R1,2015-03-01,2015-03-01,2015-06-30,20\np1,R1,2015-03-01,2015-06-30,2015-09-30,20\n",
        )
        .unwrap_err();
        assert!(
            matches!(err, IngestError::OverlappingSpells { ref person_id, .. } if person_id == "p1")
        );
        assert_eq!(err.location().unwrap().line, 3);
    }

    #[test]
    fn empty_records_file() {
        assert!(records("").unwrap().is_empty());
    }

    #[test]
    fn person_without_spells_and_pre_entry_spells() {
        let out =
            records("p1,R1,2015-03-01,,,\np2,R2,2016-01-01,2015-01-01,2015-06-30,40\n").unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].spells.is_empty());
        assert_eq!(out[1].spells.len(), 1);
    }

    #[test]
    fn malformed_record_rows() {
        for body in [
            "p1,R1,2015-13-01,,,\n",
            "p1,R1,2015-03-01,2015-04-01,,20\n",
            "p1,R1,2015-03-01,2015-05-01,2015-04-01,20\n",
            "p1,R1,2015-03-01,2015-04-01,2015-05-01,-1\n",
            "p1,R1,2015-03-01,,,\np1,R2,2015-03-01,,,\n",
        ] {
            let err = records(body).unwrap_err();
            assert_eq!(err.code(), "MalformedRow", "{body}");
        }
    }

    #[test]
    fn records_round_trip() {
        let out = records(
            "p1,R1,2015-03-01,2015-06-01,2015-12-31,20.5\np2,R1,2015-04-01,,,\np1,R1,2015-03-01,2015-03-01,2015-05-31,16\n",
        )
        .unwrap();
        let bytes = write_records_csv(&out);
        let again = parse_programme_records(CsvInput::new("r", &bytes)).unwrap();
        assert_eq!(out, again);
    }
}

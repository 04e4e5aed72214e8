// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV ingestion for long (`region,date,count`) and wide (`date,<region>...`)
//! layouts.
//!
//! Every region must be observed on a gap-free run of days that ends on the
//! last date of the panel. Days before a region's first observation are
//! filled with zero counts; interior and trailing gaps are errors.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use csas_core::series::CountSeries;

use crate::config::InputFormat;
use crate::error::{CliError, Result};

/// Aligned count panel on a daily grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dates: Vec<NaiveDate>,
    pub series: Vec<CountSeries>,
}

impl Dataset {
    pub fn num_regions(&self) -> usize {
        self.series.len()
    }

    pub fn series_length(&self) -> usize {
        self.dates.len()
    }

    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.series.iter().position(|s| s.region_id == id)
    }
}

/// Inclusive date window applied before alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DateRange {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl DateRange {
    fn contains(&self, d: NaiveDate) -> bool {
        self.from.map_or(true, |f| d >= f) && self.to.map_or(true, |t| d <= t)
    }
}

pub fn ingest_csv(path: &Path, format: InputFormat, range: DateRange) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.into(),
        source,
    })?;
    ingest_reader(file, format, range)
}

pub fn ingest_reader(reader: impl Read, format: InputFormat, range: DateRange) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let observed = match format {
        InputFormat::Long => read_long(&mut csv, range)?,
        InputFormat::Wide => read_wide(&mut csv, range)?,
    };
    align(observed)
}

/// Per-region observations: date → (count, line), in first-seen region order.
#[derive(Default)]
struct Observed {
    order: Vec<String>,
    by_region: HashMap<String, BTreeMap<NaiveDate, (i64, u64)>>,
}

impl Observed {
    fn region(&mut self, id: &str) -> &mut BTreeMap<NaiveDate, (i64, u64)> {
        if !self.by_region.contains_key(id) {
            self.order.push(id.to_string());
        }
        self.by_region.entry(id.to_string()).or_default()
    }

    fn insert(&mut self, region: &str, date: NaiveDate, count: i64, line: u64) -> Result<()> {
        if let Some(&(_, first)) = self.region(region).get(&date) {
            return Err(CliError::Input(format!(
                "line {line}: duplicate observation for region {region:?} on {date} (first seen on line {first})"
            )));
        }
        self.region(region).insert(date, (count, line));
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> CliError {
    match e.position() {
        Some(p) => CliError::Input(format!("line {}: {e}", p.line())),
        None => CliError::Input(e.to_string()),
    }
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| CliError::Input(format!("line {line}: cannot parse date {s:?} (expected YYYY-MM-DD)")))
}

fn parse_count(s: &str, line: u64, region: &str) -> Result<i64> {
    let v: i64 = s
        .parse()
        .map_err(|_| CliError::Input(format!("line {line}: count {s:?} for region {region:?} is not an integer")))?;
    if v < 0 {
        return Err(CliError::Input(format!("line {line}: negative count {v} for region {region:?}")));
    }
    Ok(v)
}

fn read_long<R: Read>(csv: &mut csv::Reader<R>, range: DateRange) -> Result<Observed> {
    let header = csv.headers().map_err(csv_error)?.clone();
    let find = |names: &[&str]| {
        header
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let cols = match (find(&["region"]), find(&["date"]), find(&["count", "cumulative_count"])) {
        (Some(r), Some(d), Some(c)) => [r, d, c],
        _ if header.len() == 3 => [0, 1, 2],
        _ => {
            return Err(CliError::Input(
                "line 1: long format needs region, date and count columns".into(),
            ))
        }
    };
    let mut observed = Observed::default();
    for record in csv.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let [region, date, count] = cols.map(|i| record.get(i).unwrap_or(""));
        if region.is_empty() {
            return Err(CliError::Input(format!("line {line}: empty region id")));
        }
        let date = parse_date(date, line)?;
        if !range.contains(date) {
            continue;
        }
        let count = parse_count(count, line, region)?;
        observed.insert(region, date, count, line)?;
    }
    Ok(observed)
}

fn read_wide<R: Read>(csv: &mut csv::Reader<R>, range: DateRange) -> Result<Observed> {
    let header = csv.headers().map_err(csv_error)?.clone();
    if header.len() < 2 {
        return Err(CliError::Input(
            "line 1: wide format needs a date column and at least one region column".into(),
        ));
    }
    let regions: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut observed = Observed::default();
    for (i, r) in regions.iter().enumerate() {
        if r.is_empty() {
            return Err(CliError::Input(format!("line 1: column {} has an empty region id", i + 2)));
        }
        if observed.by_region.contains_key(r) {
            return Err(CliError::Input(format!("line 1: region {r:?} appears twice")));
        }
        observed.region(r);
    }
    let mut seen_dates: HashMap<NaiveDate, u64> = HashMap::new();
    for record in csv.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let date = parse_date(record.get(0).unwrap_or(""), line)?;
        if let Some(first) = seen_dates.insert(date, line) {
            return Err(CliError::Input(format!(
                "line {line}: date {date} repeats line {first}"
            )));
        }
        if !range.contains(date) {
            continue;
        }
        for (region, cell) in regions.iter().zip(record.iter().skip(1)) {
            if !cell.is_empty() {
                let count = parse_count(cell, line, region)?;
                observed.insert(region, date, count, line)?;
            }
        }
    }
    Ok(observed)
}

fn align(observed: Observed) -> Result<Dataset> {
    let all = observed.by_region.values().flat_map(|m| m.keys().copied());
    let (Some(start), Some(end)) = (all.clone().min(), all.max()) else {
        return Err(CliError::Input("no observations in the selected date range".into()));
    };
    let dates: Vec<NaiveDate> = start.iter_days().take_while(|d| *d <= end).collect();
    let mut series = Vec::with_capacity(observed.order.len());
    for region in &observed.order {
        let obs = &observed.by_region[region];
        let Some((&first, _)) = obs.first_key_value() else {
            return Err(CliError::Input(format!(
                "region {region:?} has no observations in the selected date range"
            )));
        };
        let mut counts = Vec::with_capacity(dates.len());
        let mut previous_line = None;
        for &d in &dates {
            match obs.get(&d) {
                Some(&(c, line)) => {
                    counts.push(c);
                    previous_line = Some(line);
                }
                None if d < first => counts.push(0),
                None => {
                    let after = previous_line.map(|l| format!(" (after line {l})")).unwrap_or_default();
                    let kind = if obs.range(d..).next().is_some() { "missing" } else { "no data from" };
                    return Err(CliError::Input(format!(
                        "region {region:?}: {kind} {d}{after}; gaps are not imputed"
                    )));
                }
            }
        }
        let day_numbers = dates.iter().map(|d| i64::from(d.num_days_from_ce())).collect();
        let s = CountSeries::new(region.clone(), counts, Some(day_numbers))
            .map_err(|e| CliError::Input(format!("region {region:?}: {e}")))?;
        series.push(s);
    }
    Ok(Dataset { dates, series })
}

/// Reads `region,class` ground-truth labels.
pub fn read_labels(path: &Path) -> Result<HashMap<String, String>> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.into(),
        source,
    })?;
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = HashMap::new();
    for record in csv.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let (Some(region), Some(class)) = (record.get(0), record.get(1)) else {
            return Err(CliError::Input(format!("line {line}: expected region,class")));
        };
        if out.insert(region.to_string(), class.to_string()).is_some() {
            return Err(CliError::Input(format!("line {line}: region {region:?} labelled twice")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide(text: &str) -> Result<Dataset> {
        ingest_reader(text.as_bytes(), InputFormat::Wide, DateRange::default())
    }

    fn long(text: &str) -> Result<Dataset> {
        ingest_reader(text.as_bytes(), InputFormat::Long, DateRange::default())
    }

    #[test]
    fn wide_two_regions_three_days() {
        let d = wide("date,a,b\n2020-01-01,1,0\n2020-01-02,2,1\n2020-01-03,4,3\n").unwrap();
        assert_eq!(d.num_regions(), 2);
        assert_eq!(d.series_length(), 3);
        assert_eq!(d.series[1].counts, vec![0, 1, 3]);
    }

    #[test]
    fn long_gap_names_the_missing_date() {
        let err = long("region,date,count\na,2020-01-01,1\na,2020-01-03,2\n").unwrap_err();
        assert!(err.to_string().contains("2020-01-02"), "{err}");
    }

    #[test]
    fn leading_days_are_zero_and_trailing_gaps_fail() {
        let d = long("region,date,count\na,2020-01-01,1\na,2020-01-02,2\nb,2020-01-02,5\n").unwrap();
        assert_eq!(d.series[1].counts, vec![0, 5]);
        let err = long("region,date,count\na,2020-01-01,1\na,2020-01-02,2\nb,2020-01-01,5\n").unwrap_err();
        assert!(err.to_string().contains("no data from 2020-01-02"), "{err}");
    }

    #[test]
    fn duplicates_and_bad_cells_cite_lines() {
        let err = long("region,date,count\na,2020-01-01,1\na,2020-01-01,2\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = wide("date,a\n2020-01-01,1\n2020-01-02,x\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = wide("date,a\n2020-01-01,-1\n").unwrap_err();
        assert!(err.to_string().contains("negative"), "{err}");
        assert!(wide("date,a,a\n2020-01-01,1,1\n").is_err());
    }

    #[test]
    fn date_filter_is_inclusive() {
        let range = DateRange {
            from: NaiveDate::from_ymd_opt(2020, 1, 2),
            to: NaiveDate::from_ymd_opt(2020, 1, 3),
        };
        let text = "date,a\n2020-01-01,1\n2020-01-02,2\n2020-01-03,3\n2020-01-04,4\n";
        let d = ingest_reader(text.as_bytes(), InputFormat::Wide, range).unwrap();
        assert_eq!(d.series[0].counts, vec![2, 3]);
    }
}

//! CSV formats.
//!
//! - `scenarios.csv`: `id,prob,loss` then `r{row}_m{month}` columns (both
//!   1-based, row-major) when weather grids are attached.
//! - `yields.csv`: `county,year,yield`.
//! - `weather.csv`: `county,year,index,m1..m12`, one line per index row.
//!   `index` is either a 1-based row number or one of the default index
//!   names.

use std::collections::BTreeMap;
use std::path::Path;

use bowley_core::dataio::{WeatherRecord, YieldRecord, INDEX_NAMES};
use bowley_core::game::{Scenario, ScenarioSet, MONTHS};

use crate::error::{Error, Result};

fn grid_header(rows: usize) -> Vec<String> {
    (1..=rows)
        .flat_map(|r| (1..=MONTHS).map(move |m| format!("r{r}_m{m}")))
        .collect()
}

fn parse_f64(path: &Path, line: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim().parse().map_err(|_| Error::Data {
        path: path.to_path_buf(),
        line,
        message: format!("column {column}: not a number: {raw:?}"),
    })
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

pub fn write_scenarios(path: &Path, s: &ScenarioSet) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["id".to_string(), "prob".into(), "loss".into()];
    header.extend(grid_header(s.rows()));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (n, sc) in s.scenarios().iter().enumerate() {
        let mut rec = vec![n.to_string(), sc.prob.to_string(), sc.loss.to_string()];
        if let Some(grid) = &sc.weather {
            rec.extend(grid.iter().map(f64::to_string));
        }
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scenarios(path: &Path) -> Result<ScenarioSet> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let bad_header = |message: String| Error::Data {
        path: path.to_path_buf(),
        line: 1,
        message,
    };
    if names.len() < 3 || names[..3] != ["id", "prob", "loss"] {
        return Err(bad_header("header must start with id,prob,loss".into()));
    }
    let extra = names.len() - 3;
    if !extra.is_multiple_of(MONTHS) {
        return Err(bad_header(format!(
            "{extra} weather columns is not a multiple of {MONTHS}"
        )));
    }
    let rows = extra / MONTHS;
    if names[3..] != grid_header(rows) {
        return Err(bad_header(format!(
            "weather columns must be r1_m1..r{rows}_m{MONTHS}"
        )));
    }
    let mut scenarios = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = k + 2;
        let field = |c: usize| parse_f64(path, line, names[c], &rec[c]);
        let weather = if rows == 0 {
            None
        } else {
            Some((3..names.len()).map(field).collect::<Result<Vec<_>>>()?)
        };
        scenarios.push(Scenario {
            prob: field(1)?,
            loss: field(2)?,
            weather,
        });
    }
    Ok(ScenarioSet::new(rows, scenarios)?)
}

pub fn read_yields(path: &Path) -> Result<Vec<YieldRecord>> {
    let mut r = reader(path)?;
    r.deserialize()
        .map(|rec| rec.map_err(|e| Error::csv(path, e)))
        .collect()
}

pub fn write_yields(path: &Path, records: &[YieldRecord]) -> Result<()> {
    let mut w = writer(path)?;
    for rec in records {
        w.serialize(rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn index_row(raw: &str, rows: usize) -> Option<usize> {
    let row = match raw.parse::<usize>() {
        Ok(n) => n.checked_sub(1)?,
        Err(_) => INDEX_NAMES.iter().position(|n| n.eq_ignore_ascii_case(raw))?,
    };
    (row < rows).then_some(row)
}

/// Reads `rows` index lines per county-year; every county-year must list
/// each row exactly once.
pub fn read_weather(path: &Path, rows: usize) -> Result<Vec<WeatherRecord>> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut want = vec!["county".to_string(), "year".into(), "index".into()];
    want.extend((1..=MONTHS).map(|m| format!("m{m}")));
    if header.iter().ne(want.iter().map(String::as_str)) {
        return Err(Error::Data {
            path: path.to_path_buf(),
            line: 1,
            message: format!("header must be {}", want.join(",")),
        });
    }
    let mut grids: BTreeMap<(String, i32), Vec<Option<Vec<f64>>>> = BTreeMap::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = k + 2;
        let data = |message: String| Error::Data {
            path: path.to_path_buf(),
            line,
            message,
        };
        let year: i32 = rec[1]
            .parse()
            .map_err(|_| data(format!("year is not an integer: {:?}", &rec[1])))?;
        let row = index_row(&rec[2], rows)
            .ok_or_else(|| data(format!("unknown index {:?} for {rows} rows", &rec[2])))?;
        let values = (3..3 + MONTHS)
            .map(|c| parse_f64(path, line, &want[c], &rec[c]))
            .collect::<Result<Vec<_>>>()?;
        let slot = grids
            .entry((rec[0].to_string(), year))
            .or_insert_with(|| vec![None; rows]);
        if slot[row].replace(values).is_some() {
            return Err(data(format!("index {:?} listed twice", &rec[2])));
        }
    }
    grids
        .into_iter()
        .map(|((county, year), slots)| {
            let mut values = Vec::with_capacity(rows * MONTHS);
            for (row, v) in slots.into_iter().enumerate() {
                let v = v.ok_or_else(|| Error::Data {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("{county} {year}: index row {} missing", row + 1),
                })?;
                values.extend(v);
            }
            Ok(WeatherRecord {
                county,
                year,
                values,
            })
        })
        .collect()
}

pub fn write_weather(path: &Path, records: &[WeatherRecord], rows: usize) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["county".to_string(), "year".into(), "index".into()];
    header.extend((1..=MONTHS).map(|m| format!("m{m}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for rec in records {
        for (row, chunk) in rec.values.chunks(MONTHS).take(rows).enumerate() {
            let mut line = vec![rec.county.clone(), rec.year.to_string(), (row + 1).to_string()];
            line.extend(chunk.iter().map(f64::to_string));
            w.write_record(&line).map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

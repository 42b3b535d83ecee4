use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::group::{DomainSeries, Provenance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    /// `timestamp,node_id,value` rows.
    #[default]
    Long,
    /// `timestamp,<node>,<node>,...` with one row per step.
    Wide,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub layout: CsvLayout,
    pub group_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum TimeKey {
    Int(i64),
    Text(String),
}

impl TimeKey {
    fn parse(s: &str) -> Self {
        s.trim()
            .parse::<i64>()
            .map(TimeKey::Int)
            .unwrap_or_else(|_| TimeKey::Text(s.trim().to_string()))
    }

    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (TimeKey::Int(a), TimeKey::Int(b)) => a.cmp(b),
            (a, b) => a.text().cmp(&b.text()),
        }
    }

    fn text(&self) -> String {
        match self {
            TimeKey::Int(v) => v.to_string(),
            TimeKey::Text(s) => s.clone(),
        }
    }
}

fn malformed(line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

fn parse_value(raw: &str, line: u64) -> Result<Option<f64>> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| malformed(line, format!("value '{t}' is not a number")))
}

/// Load a dense `T × N` series; absent or empty cells are masked out.
/// Timestamps must be strictly increasing.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<DomainSeries> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let (values, mask) = match schema.layout {
        CsvLayout::Long => read_long(&mut reader)?,
        CsvLayout::Wide => read_wide(&mut reader)?,
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    let mut series = DomainSeries::new(
        schema.group_id,
        name,
        values,
        Provenance::File {
            path: path.display().to_string(),
        },
    );
    series.mask = mask;
    Ok(series)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn read_long<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<(Array2<f64>, Array2<f64>)> {
    let headers = reader.headers()?.clone();
    if headers.len() != 3 {
        return Err(malformed(1, "long layout needs columns timestamp,node_id,value"));
    }
    let mut steps: Vec<TimeKey> = Vec::new();
    let mut node_names: BTreeMap<String, ()> = BTreeMap::new();
    let mut cells: Vec<(usize, String, Option<f64>, u64)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != 3 {
            return Err(malformed(line, format!("expected 3 fields, found {}", record.len())));
        }
        let ts = TimeKey::parse(&record[0]);
        match steps.last() {
            Some(last) if *last == ts => {}
            Some(last) if last.cmp(&ts) != Ordering::Less => {
                return Err(malformed(
                    line,
                    format!("timestamp {} does not increase after {}", ts.text(), last.text()),
                ));
            }
            _ => steps.push(ts),
        }
        let node = record[1].to_string();
        if node.is_empty() {
            return Err(malformed(line, "empty node_id"));
        }
        node_names.insert(node.clone(), ());
        cells.push((steps.len() - 1, node, parse_value(&record[2], line)?, line));
    }
    if steps.is_empty() {
        return Err(Error::Empty("csv has no data rows".into()));
    }
    let mut names: Vec<String> = node_names.into_keys().collect();
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().unwrap());
    }
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut values = Array2::<f64>::zeros((steps.len(), names.len()));
    let mut mask = Array2::<f64>::zeros((steps.len(), names.len()));
    for (t, node, v, line) in cells {
        let j = index[node.as_str()];
        if mask[[t, j]] != 0.0 {
            return Err(malformed(line, format!("duplicate cell for node {node}")));
        }
        if let Some(v) = v {
            values[[t, j]] = v;
            mask[[t, j]] = 1.0;
        }
    }
    Ok((values, mask))
}

fn read_wide<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<(Array2<f64>, Array2<f64>)> {
    let headers = reader.headers()?.clone();
    let n = headers.len().saturating_sub(1);
    if n == 0 {
        return Err(malformed(1, "wide layout needs a timestamp column and node columns"));
    }
    let mut last: Option<TimeKey> = None;
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != n + 1 {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", n + 1, record.len()),
            ));
        }
        let ts = TimeKey::parse(&record[0]);
        if let Some(prev) = &last {
            if prev.cmp(&ts) != Ordering::Less {
                return Err(malformed(
                    line,
                    format!("timestamp {} does not increase after {}", ts.text(), prev.text()),
                ));
            }
        }
        last = Some(ts);
        rows.push(
            (1..=n)
                .map(|j| parse_value(&record[j], line))
                .collect::<Result<_>>()?,
        );
    }
    if rows.is_empty() {
        return Err(Error::Empty("csv has no data rows".into()));
    }
    let mut values = Array2::<f64>::zeros((rows.len(), n));
    let mut mask = Array2::<f64>::zeros((rows.len(), n));
    for (t, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if let Some(v) = v {
                values[[t, j]] = *v;
                mask[[t, j]] = 1.0;
            }
        }
    }
    Ok((values, mask))
}

/// Write a series in the same schema [`load_csv`] reads. Timestamps are step
/// indices; masked cells are written empty (wide) or skipped (long).
pub fn write_csv(series: &DomainSeries, path: impl AsRef<Path>, layout: CsvLayout) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = series.node_count();
    match layout {
        CsvLayout::Long => {
            w.write_record(["timestamp", "node_id", "value"])?;
            for t in 0..series.len() {
                for j in 0..n {
                    if series.mask[[t, j]] > 0.0 {
                        w.write_record([t.to_string(), j.to_string(), series.values[[t, j]].to_string()])?;
                    }
                }
            }
        }
        CsvLayout::Wide => {
            let mut header = vec!["timestamp".to_string()];
            header.extend((0..n).map(|j| j.to_string()));
            w.write_record(&header)?;
            for t in 0..series.len() {
                let mut row = vec![t.to_string()];
                row.extend((0..n).map(|j| {
                    if series.mask[[t, j]] > 0.0 {
                        series.values[[t, j]].to_string()
                    } else {
                        String::new()
                    }
                }));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

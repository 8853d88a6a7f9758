use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::FrontierPoint;

/// Externally measured metrics keyed by `(config_id, metric)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationTable {
    values: BTreeMap<(String, String), f64>,
    source: Option<PathBuf>,
}

impl AnnotationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = Self::from_reader(file, path)?;
        table.source = Some(path.to_path_buf());
        Ok(table)
    }

    /// Parses `config_id,metric,value` CSV. An empty input yields an empty
    /// table; a repeated `(config_id, metric)` pair is an error naming both
    /// lines.
    pub fn from_reader<R: Read>(reader: R, path: &Path) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line as usize,
            column: 0,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut first_line: BTreeMap<(String, String), u64> = BTreeMap::new();
        let mut table = AnnotationTable::new();
        let mut header_seen = false;
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if !header_seen {
                header_seen = true;
                if record.iter().collect::<Vec<_>>() != ["config_id", "metric", "value"] {
                    return Err(parse_err(
                        line,
                        "expected header `config_id,metric,value`".into(),
                    ));
                }
                continue;
            }
            if record.len() != 3 {
                return Err(parse_err(
                    line,
                    format!("expected 3 fields, found {}", record.len()),
                ));
            }
            let value: f64 = record[2]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("invalid value `{}`", &record[2])))?;
            let key = (record[0].to_string(), record[1].to_string());
            if let Some(&first) = first_line.get(&key) {
                return Err(Error::DuplicateAnnotation {
                    path: path.to_path_buf(),
                    config_id: key.0,
                    metric: key.1,
                    first_line: first,
                    line,
                });
            }
            first_line.insert(key.clone(), line);
            table.values.insert(key, value);
        }
        Ok(table)
    }

    /// Collects the annotations already attached to frontier points.
    pub fn from_points(points: &[FrontierPoint]) -> Self {
        let mut table = AnnotationTable::new();
        for p in points {
            for (metric, &v) in &p.annotations {
                table.insert(&p.config_id, metric, v);
            }
        }
        table
    }

    pub fn insert(&mut self, config_id: &str, metric: &str, value: f64) {
        self.values
            .insert((config_id.to_string(), metric.to_string()), value);
    }

    /// Inserts every row of `other`, overwriting existing keys.
    pub fn merge(&mut self, other: &AnnotationTable) {
        for (k, &v) in &other.values {
            self.values.insert(k.clone(), v);
        }
    }

    pub fn get(&self, config_id: &str, metric: &str) -> Option<f64> {
        self.values
            .get(&(config_id.to_string(), metric.to_string()))
            .copied()
    }

    pub fn metrics(&self) -> BTreeSet<String> {
        self.values.keys().map(|(_, m)| m.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    /// Copies matching annotations onto each point.
    pub fn attach(&self, points: &mut [FrontierPoint]) {
        for p in points {
            for ((id, metric), &v) in &self.values {
                if *id == p.config_id {
                    p.annotations.insert(metric.clone(), v);
                }
            }
        }
    }
}

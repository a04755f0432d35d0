use std::collections::BTreeMap;
use std::path::Path;

use crate::harness::{HarnessError, Method};
use crate::numfmt::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub method: Method,
    pub seed: u64,
    /// Last step of the window.
    pub step: u64,
    /// Mean raw reward over the window.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub step: u64,
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub stddev: f64,
}

/// Resolved config and its hash, embedded in every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub config: String,
    pub hash: String,
}

impl Manifest {
    fn header(&self, comment: &str) -> String {
        format!("{comment} config: {}\n{comment} hash: {}\n", self.config, self.hash)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
    pub manifest: Option<Manifest>,
}

pub(crate) fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

const RAW_HEADER: &str = "method,seed,step,window_avg_reward";
const AGG_HEADER: &str = "method,step,mean,stddev";

impl CurveTable {
    pub fn new(rows: Vec<CurveRow>) -> Self {
        Self { rows, manifest: None }
    }

    pub fn with_manifest(mut self, manifest: Manifest) -> Self {
        self.manifest = Some(manifest);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Methods present, in canonical order.
    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Per-seed values at `step`, ordered by seed.
    pub fn values_at(&self, method: Method, step: u64) -> Vec<f64> {
        let mut v: Vec<(u64, f64)> =
            self.rows.iter().filter(|r| r.method == method && r.step == step).map(|r| (r.seed, r.value)).collect();
        v.sort_by_key(|&(s, _)| s);
        v.into_iter().map(|(_, x)| x).collect()
    }

    pub fn last_step(&self) -> Option<u64> {
        self.rows.iter().map(|r| r.step).max()
    }

    /// Mean and sample standard deviation across seeds per method and step.
    /// Values are summed in seed order, so row order does not matter.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut groups: BTreeMap<(Method, u64), Vec<(u64, f64)>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry((r.method, r.step)).or_default().push((r.seed, r.value));
        }
        groups
            .into_iter()
            .map(|((method, step), mut v)| {
                v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
                let xs: Vec<f64> = v.into_iter().map(|(_, x)| x).collect();
                let (mean, stddev) = mean_and_stddev(&xs);
                AggregateRow { method, step, mean, stddev }
            })
            .collect()
    }

    fn preamble(&self) -> String {
        self.manifest.as_ref().map(|m| m.header("#")).unwrap_or_default()
    }

    pub fn raw_csv(&self) -> String {
        let mut out = self.preamble();
        out.push_str(RAW_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.method, r.seed, r.step, r.value));
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = self.preamble();
        out.push_str(AGG_HEADER);
        out.push('\n');
        for a in self.aggregate() {
            out.push_str(&format!("{},{},{},{}\n", a.method, a.step, a.mean, a.stddev));
        }
        out
    }

    pub fn write_raw(&self, path: &Path) -> Result<(), HarnessError> {
        Ok(write_atomic(path, self.raw_csv().as_bytes())?)
    }

    pub fn write_aggregate(&self, path: &Path) -> Result<(), HarnessError> {
        Ok(write_atomic(path, self.aggregate_csv().as_bytes())?)
    }

    pub fn from_raw_csv(text: &str) -> Result<Self, HarnessError> {
        let manifest = read_manifest(text);
        let records = read_records(text, RAW_HEADER)?;
        let mut rows = Vec::with_capacity(records.len());
        for rec in records {
            rows.push(CurveRow {
                method: rec[0].parse()?,
                seed: parse_field(&rec[1])?,
                step: parse_field(&rec[2])?,
                value: parse_field(&rec[3])?,
            });
        }
        Ok(Self { rows, manifest })
    }

    pub fn read_raw(path: &Path) -> Result<Self, HarnessError> {
        Self::from_raw_csv(&std::fs::read_to_string(path)?)
    }
}

pub fn read_aggregate_csv(text: &str) -> Result<Vec<AggregateRow>, HarnessError> {
    read_records(text, AGG_HEADER)?
        .into_iter()
        .map(|rec| {
            Ok(AggregateRow {
                method: rec[0].parse()?,
                step: parse_field(&rec[1])?,
                mean: parse_field(&rec[2])?,
                stddev: parse_field(&rec[3])?,
            })
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T, HarnessError> {
    s.trim().parse().map_err(|_| HarnessError::Parse(format!("bad field `{s}`")))
}

fn read_manifest(text: &str) -> Option<Manifest> {
    let mut config = None;
    let mut hash = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(c) = line.strip_prefix("# config: ") {
            config = Some(c.to_string());
        } else if let Some(h) = line.strip_prefix("# hash: ") {
            hash = Some(h.to_string());
        }
    }
    Some(Manifest { config: config?, hash: hash? })
}

fn read_records(text: &str, header: &str) -> Result<Vec<csv::StringRecord>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(text.as_bytes());
    let found = rdr.headers().map_err(|e| HarnessError::Parse(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(HarnessError::Parse(format!("expected header `{header}`, found `{found}`")));
    }
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| HarnessError::Parse(e.to_string()))?;
            if r.len() != 4 {
                return Err(HarnessError::Parse(format!("expected 4 fields, got {}", r.len())));
            }
            Ok(r)
        })
        .collect()
}

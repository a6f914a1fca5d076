use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::{ExperimentConfig, ExperimentKind};

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Decimal rendering with [`SIGNIFICANT_DIGITS`] significant digits, trailing
/// zeros dropped; exponent notation outside `1e-5 ≤ |x| < 1e12`.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Flag(bool),
    Empty,
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Self::Num(x) => format_sig(*x),
            Self::Int(i) => i.to_string(),
            Self::Text(s) => s.clone(),
            Self::Flag(b) => b.to_string(),
            Self::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Num(x) => Some(*x),
            Self::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Self::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Self::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Self::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Self::Flag(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Self::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Self::Text(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Self::Empty, Self::Num)
    }
}

/// Rows of one CSV file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric values of a column; non-numeric cells are skipped.
    pub fn numbers(&self, name: &str) -> Vec<f64> {
        self.column(name)
            .map(|c| self.rows.iter().filter_map(|r| r[c].as_f64()).collect())
            .unwrap_or_default()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// One invariant check of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub fits: BTreeMap<String, Value>,
    pub results: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            tool: "roughflow".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: config.experiment,
            config: config.clone(),
            fits: BTreeMap::new(),
            results: BTreeMap::new(),
            checks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn fit<T: Serialize>(&mut self, name: &str, value: &T) {
        self.fits.insert(name.to_string(), to_value(value));
    }

    pub fn result<T: Serialize>(&mut self, name: &str, value: &T) {
        self.results.insert(name.to_string(), to_value(value));
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report values serialize")
}

/// Everything a run writes.
#[derive(Debug, Clone)]
pub struct Report {
    pub summary: Summary,
    pub table: Table,
    /// Additional files as `(name, bytes)`.
    pub extras: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.summary.checks.iter().all(|c| c.passed)
    }

    pub fn csv_name(&self) -> String {
        format!("{}.csv", self.summary.experiment.name())
    }

    pub fn summary_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&self.summary).expect("summary serializes");
        out.push(b'\n');
        out
    }

    /// Writes the CSV, `summary.json` and extras into `dir`, returning the paths.
    pub fn write(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files = vec![
            (self.csv_name(), self.table.to_csv()),
            ("summary.json".to_string(), self.summary_json()),
        ];
        files.extend(self.extras.iter().cloned());
        let mut paths = Vec::with_capacity(files.len());
        for (name, bytes) in files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(-0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.1), "0.1");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(-2.0 / 3.0 * 1e4), "-6666.66666667");
        assert_eq!(format_sig(9.999999999999995), "10");
        assert_eq!(format_sig(1e-8), "1e-8");
        assert_eq!(format_sig(1.5e-12), "1.5e-12");
        assert_eq!(format_sig(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_sig(f64::NAN), "nan");
        for x in [std::f64::consts::PI, 1e-7 / 3.0, 6.02214076e23, -4.2e-3] {
            let back: f64 = format_sig(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-11, "{x}");
        }
    }

    #[test]
    fn csv_quotes_text_and_keeps_header() {
        let mut t = Table::new(&["path", "value", "flag", "gap"]);
        t.push(vec!["a,b".into(), 0.25.into(), true.into(), None.into()]);
        let text = String::from_utf8(t.to_csv()).unwrap();
        assert_eq!(text, "path,value,flag,gap\n\"a,b\",0.25,true,\n");
        assert_eq!(t.numbers("value"), vec![0.25]);
    }
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Tag};
use crate::analysis::FitResult;
use crate::error::Error;

/// One CSV table: fixed header row, one row per record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    /// 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `>= 1.8`.
    pub rule: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: FitResult,
}

/// Data-size, solution-size and source-size bounds of a stability estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityBudget {
    pub eta: f64,
    pub zeta: f64,
    pub m0: f64,
}

impl StabilityBudget {
    pub fn new(eta: f64, zeta: f64, m0: f64) -> Result<Self, Error> {
        if [eta, zeta, m0].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Experiment(format!("budget must be finite and nonnegative: {eta}, {zeta}, {m0}")));
        }
        Ok(StabilityBudget { eta, zeta, m0 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tag: Tag,
    pub config: ExperimentConfig,
    /// The first table is the primary record table.
    pub tables: Vec<Table>,
    pub fits: Vec<NamedFit>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Kept out of the sidecar so reruns are byte-identical.
    #[serde(skip)]
    pub wall_clock: f64,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        Report {
            tag: config.experiment,
            config: config.clone(),
            tables: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            wall_clock: 0.0,
        }
    }

    pub fn check(&mut self, name: &str, value: f64, rule: impl Into<String>, pass: bool) {
        self.checks.push(Check { name: name.into(), value, rule: rule.into(), pass: pass && !value.is_nan() });
    }

    pub fn check_le(&mut self, name: &str, value: f64, bound: f64) {
        self.check(name, value, format!("<= {bound:e}"), value <= bound);
    }

    pub fn check_ge(&mut self, name: &str, value: f64, bound: f64) {
        self.check(name, value, format!(">= {bound:e}"), value >= bound);
    }

    pub fn fit(&mut self, name: &str, fit: FitResult) {
        self.fits.push(NamedFit { name: name.into(), fit });
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn get_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn get_fit(&self, name: &str) -> Option<&FitResult> {
        self.fits.iter().find(|f| f.name == name).map(|f| &f.fit)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Appends the finiteness check over every table.
    pub fn finish(&mut self) {
        let all = self.tables.iter().all(Table::is_finite);
        self.check("finite_columns", if all { 1.0 } else { 0.0 }, "== 1", all);
    }

    pub fn sidecar(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment {} ({:.2} s)", self.tag.name(), self.wall_clock);
        for c in &self.checks {
            let _ = writeln!(s, "  {} {} = {:.6e} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.rule);
        }
        for f in &self.fits {
            let _ = writeln!(s, "  fit {}: C = {:.6e}, exponent = {:.6e}, R2 = {:.4}", f.name, f.fit.c, f.fit.exponent, f.fit.r2);
        }
        s
    }

    /// CSV files `<tag>.csv` (primary) and `<tag>_<name>.csv`, the sidecar `<tag>.json`
    /// and the wall-clock file `<tag>.timing.json`. Returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, Error> {
        std::fs::create_dir_all(dir)?;
        let tag = self.tag.name();
        let mut out = Vec::new();
        for (k, t) in self.tables.iter().enumerate() {
            let p = if k == 0 { dir.join(format!("{tag}.csv")) } else { dir.join(format!("{tag}_{}.csv", t.name)) };
            std::fs::write(&p, t.to_csv())?;
            out.push(p);
        }
        let p = dir.join(format!("{tag}.json"));
        std::fs::write(&p, self.sidecar())?;
        out.push(p);
        let p = dir.join(format!("{tag}.timing.json"));
        std::fs::write(&p, serde_json::json!({ "wall_clock_seconds": self.wall_clock }).to_string())?;
        out.push(p);
        Ok(out)
    }
}

/// Reads the config echo back out of a sidecar.
pub fn config_from_sidecar(text: &str) -> Result<ExperimentConfig, Error> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Experiment(e.to_string()))?;
    let cfg = v.get("config").ok_or_else(|| Error::Experiment("sidecar has no config".into()))?;
    Ok(super::config::parse_config(&cfg.to_string())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_17_digits() {
        let mut t = Table::new("main", &["a", "b"]);
        t.push(vec![0.1, -2.5e-7]);
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("a,b"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1, -2.5e-7]);
        assert!(csv.contains("1.0000000000000001e-1") || csv.contains("1.0000000000000000e-1"));
    }

    #[test]
    fn finite_check_and_sidecar_echo() {
        let cfg = super::super::config::parse_config(r#"{"experiment": "verify_solver", "seed": 4}"#).unwrap();
        let mut r = Report::new(&cfg);
        let mut t = Table::new("main", &["x"]);
        t.push(vec![f64::NAN]);
        r.tables.push(t);
        r.finish();
        assert!(!r.passed());
        assert_eq!(config_from_sidecar(&r.sidecar()).unwrap(), cfg);
    }

    #[test]
    fn budget_rejects_negative() {
        assert!(StabilityBudget::new(1.0, 2.0, 0.0).is_ok());
        assert!(StabilityBudget::new(-1.0, 2.0, 0.0).is_err());
    }
}

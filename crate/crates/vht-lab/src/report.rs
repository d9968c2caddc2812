//! CSV emission and pass/fail check plumbing.
//!
//! Real columns print with 17 significant digits so replays are
//! byte-identical; integer columns print plainly.

use std::fmt::Write as _;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// An in-memory CSV table: header row, comma separators, '\n' newlines.
#[derive(Debug, Clone)]
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        Csv {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[CsvField<'_>]) {
        assert_eq!(fields.len(), self.columns, "row width mismatch");
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match f {
                CsvField::Int(v) => write!(self.buf, "{v}").unwrap(),
                CsvField::UInt(v) => write!(self.buf, "{v}").unwrap(),
                CsvField::Real(v) => self.buf.push_str(&fmt_real(*v)),
                CsvField::Str(s) => self.buf.push_str(s),
            }
        }
        self.buf.push('\n');
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CsvField<'a> {
    Int(i64),
    UInt(u64),
    Real(f64),
    Str(&'a str),
}

/// One named pass/fail verdict with a human-readable detail line.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Accumulates the checks a command evaluates in --check mode.
#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn new() -> Self {
        CheckReport { checks: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// One machine-greppable line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            writeln!(out, "CHECK {}: {} ({})", c.name, verdict, c.detail).unwrap();
        }
        out
    }
}

/// Output of one experiment command: named CSV artifacts, a human summary,
/// and the checks.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub csv: Vec<(String, String)>,
    pub summary: String,
    pub checks: CheckReport,
}

impl CommandOutput {
    pub fn new() -> Self {
        CommandOutput {
            csv: Vec::new(),
            summary: String::new(),
            checks: CheckReport::new(),
        }
    }

    pub fn add_csv(&mut self, name: impl Into<String>, contents: String) {
        self.csv.push((name.into(), contents));
    }

    pub fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }
}

impl Default for CommandOutput {
    fn default() -> Self {
        Self::new()
    }
}

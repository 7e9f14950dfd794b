//! One report value, rendered either as text or as json.

use std::fmt::Write as _;

use omega_core::scores::{write_csv, ColumnLabel, RawGrid};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Convergence {
    pub converged: bool,
    pub objective: f64,
    pub iterations: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Setting {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Scalar {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Dataset {
    pub labels: Vec<String>,
    pub rows: RawGrid,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub call: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<Convergence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    pub control: Vec<Setting>,
    pub tables: Vec<Table>,
    pub scalars: Vec<Scalar>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Dataset>,
}

impl Report {
    pub fn new(call: String) -> Self {
        Report {
            call,
            convergence: None,
            samples: None,
            control: Vec::new(),
            tables: Vec::new(),
            scalars: Vec::new(),
            notes: Vec::new(),
            data: None,
        }
    }

    pub fn set(&mut self, name: &str, value: impl ToString) {
        self.control.push(Setting {
            name: name.to_string(),
            value: value.to_string(),
        });
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.push(Scalar {
            name: name.to_string(),
            value,
        });
    }

    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Text layout. A report carrying a dataset renders as that dataset's CSV.
    pub fn text(&self) -> String {
        if let Some(d) = &self.data {
            let labels: Vec<ColumnLabel> = d.labels.iter().filter_map(|l| l.parse().ok()).collect();
            let mut buf = Vec::new();
            write_csv(&mut buf, &labels, &d.rows).expect("writing to memory");
            return String::from_utf8(buf).expect("csv is utf-8");
        }
        let mut s = String::new();
        let _ = writeln!(s, "Call:\n\n{}\n", self.call);
        if let Some(c) = &self.convergence {
            let _ = writeln!(s, "Convergence:\n");
            if c.converged {
                let _ = writeln!(
                    s,
                    "Optimization converged at {} after {} iterations.\n",
                    sig4(c.objective),
                    c.iterations
                );
            } else {
                let _ = writeln!(
                    s,
                    "Optimization did not converge ({}); stopped at {} after {} iterations.\n",
                    c.message,
                    sig4(c.objective),
                    c.iterations
                );
            }
        }
        if let Some(n) = self.samples {
            let _ = writeln!(s, "Number of posterior samples: {n}\n");
        }
        if !self.control.is_empty() {
            let _ = writeln!(s, "Control parameters:\n");
            let w = self.control.iter().map(|c| c.name.len()).max().unwrap_or(0);
            for c in &self.control {
                let _ = writeln!(s, "{:<w$} {}", c.name, c.value);
            }
            s.push('\n');
        }
        for t in &self.tables {
            let _ = writeln!(s, "{}:\n", t.title);
            s.push_str(&render_table(t));
            s.push('\n');
        }
        for v in &self.scalars {
            let _ = writeln!(s, "{}: {}", v.name, scalar_text(v.value));
        }
        if !self.scalars.is_empty() {
            s.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(s, "Note: {n}");
        }
        s
    }
}

fn render_table(t: &Table) -> String {
    let cells: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| r.values.iter().map(|v| v.map_or_else(|| "NA".to_string(), sig4)).collect())
        .collect();
    let name_w = t.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let widths: Vec<usize> = t
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| cells.iter().map(|r| r[j].len()).chain([c.len()]).max().unwrap_or(0))
        .collect();
    let mut s = format!("{:name_w$}", "");
    for (c, w) in t.columns.iter().zip(&widths) {
        let _ = write!(s, " {c:>w$}");
    }
    s.push('\n');
    for (r, row) in t.rows.iter().zip(&cells) {
        let _ = write!(s, "{:<name_w$}", r.name);
        for (v, w) in row.iter().zip(&widths) {
            let _ = write!(s, " {v:>w$}");
        }
        s.push('\n');
    }
    s
}

fn scalar_text(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.0}")
    } else {
        sig4(x)
    }
}

/// Four significant figures; scientific notation for very large or small
/// magnitudes.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

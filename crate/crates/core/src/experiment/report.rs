use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::evaluate::EvalReport;
use crate::error::{Error, Result};

/// One JSON report per line.
pub fn write_reports(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?);
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Markdown table with one row per dataset and one column per policy,
/// each cell `mean ± sd` of normalized net revenue.
pub fn render_table(reports: &[EvalReport], column_order: &[&str]) -> String {
    let mut cells: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    let mut rows = BTreeSet::new();
    let mut cols: Vec<String> = column_order.iter().map(|s| s.to_string()).collect();
    for r in reports {
        let row = r.dataset.clone().unwrap_or_else(|| "-".into());
        rows.insert(row.clone());
        if !cols.contains(&r.policy) {
            cols.push(r.policy.clone());
        }
        cells.insert((row, r.policy.clone()), (r.normalized_mean, r.normalized_sd));
    }
    cols.retain(|c| cells.keys().any(|(_, p)| p == c));
    let mut s = String::from("| dataset |");
    for c in &cols {
        s.push_str(&format!(" {c} |"));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(cols.len()));
    s.push('\n');
    for row in rows {
        s.push_str(&format!("| {row} |"));
        for c in &cols {
            match cells.get(&(row.clone(), c.clone())) {
                Some((m, sd)) => s.push_str(&format!(" {m:.2} ± {sd:.2} |")),
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }
    s
}

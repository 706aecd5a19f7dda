//! Aggregation of run records into delimited tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crbo::metrics::QuantileCurve;
use crbo::record::{aggregate_runs, RunSummary};
use crbo::{Method, RunRecord};

use crate::error::CliError;

pub const RUNS_DIR: &str = "runs";
pub const TABLES_DIR: &str = "tables";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub method: Method,
    pub gamma: f64,
    pub budget: usize,
    pub summary: RunSummary,
}

/// Record files of a result directory: `<dir>/runs/*.json` when that
/// directory exists, `<dir>/*.json` otherwise. Sorted by file name.
pub fn record_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!("{} is not a directory", dir.display())));
    }
    let runs = dir.join(RUNS_DIR);
    let root = if runs.is_dir() { runs } else { dir.to_path_buf() };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Parse every file that holds a run record. Other JSON files (such as a
/// suite manifest) are skipped.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, CliError> {
    let mut out = Vec::new();
    for f in record_files(dir)? {
        let text = std::fs::read_to_string(&f)?;
        if let Ok(r) = RunRecord::from_json(&text) {
            out.push(r);
        }
    }
    Ok(out)
}

/// Median and quartiles per (method, gamma), in a fixed order. Incomplete
/// records are left out; the second value counts them.
pub fn summarize(records: &[RunRecord]) -> Result<(Vec<GroupSummary>, usize), CliError> {
    let complete: Vec<&RunRecord> = records.iter().filter(|r| r.complete).collect();
    let incomplete = records.len() - complete.len();
    if complete.is_empty() {
        return Err(CliError::Input(if records.is_empty() {
            "no run records found".into()
        } else {
            format!("none of the {} run records is complete", records.len())
        }));
    }
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in &complete {
        if !keys.iter().any(|&(m, g)| m == r.method && g == r.gamma) {
            keys.push((r.method, r.gamma));
        }
    }
    keys.sort_by(|a, b| a.0.as_str().cmp(b.0.as_str()).then(a.1.total_cmp(&b.1)));
    let mut groups = Vec::new();
    for (method, gamma) in keys {
        let members: Vec<RunRecord> = complete
            .iter()
            .filter(|r| r.method == method && r.gamma == gamma)
            .map(|r| (*r).clone())
            .collect();
        let summary = aggregate_runs(&members).map_err(|e| CliError::Input(format!("{method} gamma={gamma}: {e}")))?;
        groups.push(GroupSummary {
            method,
            gamma,
            budget: members[0].budget,
            summary,
        });
    }
    Ok((groups, incomplete))
}

pub fn group_stem(method: Method, gamma: f64) -> String {
    format!("{method}_gamma{gamma}")
}

fn write_curve(path: &Path, curve: &QuantileCurve) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "median", "q25", "q75"])?;
    for i in 0..curve.len() {
        w.write_record([
            (i + 1).to_string(),
            curve.median[i].to_string(),
            curve.q25[i].to_string(),
            curve.q75[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn last(curve: Option<&QuantileCurve>) -> [String; 3] {
    match curve {
        Some(c) if !c.is_empty() => {
            let i = c.len() - 1;
            [c.median[i].to_string(), c.q25[i].to_string(), c.q75[i].to_string()]
        }
        _ => [String::new(), String::new(), String::new()],
    }
}

/// One file per (method, gamma, metric) under `<out>/tables`, plus
/// `<out>/summary.csv` with the final-iteration values of every group.
pub fn write_tables(out: &Path, groups: &[GroupSummary]) -> Result<(), CliError> {
    let tables = out.join(TABLES_DIR);
    std::fs::create_dir_all(&tables)?;
    let mut summary = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    summary.write_record([
        "method",
        "gamma",
        "runs",
        "budget",
        "regret_median",
        "regret_q25",
        "regret_q75",
        "return_median",
        "return_q25",
        "return_q75",
    ])?;
    for g in groups {
        let stem = group_stem(g.method, g.gamma);
        if let Some(c) = &g.summary.simple_regret {
            write_curve(&tables.join(format!("{stem}_simple_regret.csv")), c)?;
        }
        write_curve(
            &tables.join(format!("{stem}_average_return.csv")),
            &g.summary.average_return,
        )?;
        let mut row = vec![
            g.method.to_string(),
            g.gamma.to_string(),
            g.summary.runs.to_string(),
            g.budget.to_string(),
        ];
        row.extend(last(g.summary.simple_regret.as_ref()));
        row.extend(last(Some(&g.summary.average_return)));
        summary.write_record(&row)?;
    }
    summary.flush()?;
    Ok(())
}

/// Fixed-width text version of the summary.
pub fn render(groups: &[GroupSummary], incomplete: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>6} {:>5} {:>7}  {:>34}  {:>34}",
        "method", "gamma", "runs", "budget", "final regret median [q25, q75]", "final avg return median [q25, q75]"
    );
    let fmt = |c: Option<&QuantileCurve>| match c {
        Some(c) if !c.is_empty() => {
            let i = c.len() - 1;
            format!("{:.3e} [{:.3e}, {:.3e}]", c.median[i], c.q25[i], c.q75[i])
        }
        _ => "-".to_string(),
    };
    for g in groups {
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>5} {:>7}  {:>34}  {:>34}",
            g.method.as_str(),
            g.gamma,
            g.summary.runs,
            g.budget,
            fmt(g.summary.simple_regret.as_ref()),
            fmt(Some(&g.summary.average_return))
        );
    }
    if incomplete > 0 {
        let _ = writeln!(s, "{incomplete} incomplete record(s) left out");
    }
    s
}

/// Aggregate the records found in `dir`, write the tables to `out`
/// (default `dir`) and return the text summary.
pub fn cmd_report(dir: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let records = load_records(dir)?;
    let (groups, incomplete) = summarize(&records)?;
    write_tables(out.unwrap_or(dir), &groups)?;
    Ok(render(&groups, incomplete))
}

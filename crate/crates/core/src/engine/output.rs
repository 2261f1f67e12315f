//! Result files: `rounds.csv`, `selections.csv`, `summary.json` per run and
//! `aggregate.csv`/`aggregate.json` per replication sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{mean_std, Aggregate, Replication, RunSummary};
use crate::error::{Error, Result};

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

pub fn rounds_csv(summary: &RunSummary) -> Result<Vec<u8>> {
    let with_holdout = summary.records.iter().any(|r| !r.holdout.is_empty());
    let mut header: Vec<String> = ["t", "selected_count", "hits", "cum_hits", "recall"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if with_holdout {
        header.extend(summary.property_names.iter().map(|n| format!("acc_{n}")));
        header.extend(summary.property_names.iter().map(|n| format!("rec_{n}")));
    }
    let rows = summary
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.t.to_string(),
                r.revealed.len().to_string(),
                r.hits.to_string(),
                r.cum_hits.to_string(),
                r.recall.to_string(),
            ];
            if with_holdout {
                row.extend(r.holdout.iter().map(|m| m.accuracy.to_string()));
                row.extend(
                    r.holdout
                        .iter()
                        .map(|m| m.positive_recall.map(|v| v.to_string()).unwrap_or_default()),
                );
            }
            row
        })
        .collect();
    csv_bytes(header, rows)
}

pub fn selections_csv(summary: &RunSummary) -> Result<Vec<u8>> {
    let header = ["t", "id", "source_batch", "disclosed", "was_target"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = summary
        .selections
        .iter()
        .map(|s| {
            vec![
                s.t.to_string(),
                s.id.clone(),
                s.source_batch.clone(),
                s.disclosed.to_string(),
                s.was_target.to_string(),
            ]
        })
        .collect();
    csv_bytes(header, rows)
}

/// Writes `rounds.csv`, `selections.csv` and `summary.json` into `dir`.
pub fn write_run(dir: &Path, summary: &RunSummary) -> Result<()> {
    write_atomic(&dir.join("rounds.csv"), &rounds_csv(summary)?)?;
    write_atomic(&dir.join("selections.csv"), &selections_csv(summary)?)?;
    write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(summary)?.as_bytes())
}

fn aggregate_csv(agg: &Aggregate) -> Result<Vec<u8>> {
    let header = ["t", "mean_recall", "lo_band", "hi_band"].iter().map(|s| s.to_string()).collect();
    let rows = agg
        .per_round
        .iter()
        .map(|r| {
            vec![
                r.t.to_string(),
                r.mean_recall.to_string(),
                r.lo_band.to_string(),
                r.hi_band.to_string(),
            ]
        })
        .collect();
    csv_bytes(header, rows)
}

/// Writes `aggregate.csv`, `aggregate.json` and one `seed-N/` run directory
/// per replication.
pub fn write_replication(dir: &Path, rep: &Replication) -> Result<()> {
    for run in &rep.runs {
        write_run(&dir.join(format!("seed-{}", run.seed)), run)?;
    }
    write_atomic(&dir.join("aggregate.csv"), &aggregate_csv(&rep.aggregate)?)?;
    write_atomic(
        &dir.join("aggregate.json"),
        serde_json::to_string_pretty(&rep.aggregate)?.as_bytes(),
    )
}

fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Run summaries under `dir`: the directory itself if it holds a
/// `summary.json`, otherwise its immediate subdirectories in name order.
pub fn read_results(dir: &Path) -> Result<Vec<RunSummary>> {
    let own = dir.join("summary.json");
    if own.is_file() {
        return Ok(vec![read_summary(&own)?]);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("summary.json").is_file())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Error::Parse(format!("no run results under {}", dir.display())));
    }
    subdirs.iter().map(|p| read_summary(&p.join("summary.json"))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub runs: usize,
    pub mean_hit_rate: f64,
    pub std_hit_rate: f64,
    pub mean_recall: f64,
    pub std_recall: f64,
}

/// One row per run label, in order of first appearance.
pub fn report(summaries: &[RunSummary]) -> Vec<ReportRow> {
    let mut labels: Vec<&str> = Vec::new();
    for s in summaries {
        if !labels.contains(&s.label.as_str()) {
            labels.push(&s.label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&RunSummary> = summaries.iter().filter(|s| s.label == label).collect();
            let hits: Vec<f64> = group.iter().map(|s| s.hit_rate).collect();
            let recalls: Vec<f64> = group.iter().map(|s| s.final_recall).collect();
            let (mean_hit_rate, std_hit_rate) = mean_std(&hits);
            let (mean_recall, std_recall) = mean_std(&recalls);
            ReportRow {
                label: label.to_string(),
                runs: group.len(),
                mean_hit_rate,
                std_hit_rate,
                mean_recall,
                std_recall,
            }
        })
        .collect()
}

pub fn report_csv(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let header = ["policy", "runs", "mean_hit_rate", "std_hit_rate", "mean_recall", "std_recall"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.runs.to_string(),
                r.mean_hit_rate.to_string(),
                r.std_hit_rate.to_string(),
                r.mean_recall.to_string(),
                r.std_recall.to_string(),
            ]
        })
        .collect();
    csv_bytes(header, body)
}

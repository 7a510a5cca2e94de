use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::ingest::{IngestionMeta, Solution, META_FILE};
use super::metrics::{accuracy, balanced_accuracy, per_class_recall, MetricsReport};
use crate::error::{Error, Result};
use crate::graph::read_labels;

pub const SCORES_FILE: &str = "scores.json";

fn id_list(ids: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s: Vec<String> = ids.iter().take(SHOWN).map(|i| i.to_string()).collect();
    if ids.len() > SHOWN {
        s.push(format!("... ({} total)", ids.len()));
    }
    s.join(", ")
}

/// Scores a prediction file against a truth file, joining on node id.
///
/// `n_classes` defaults to one past the largest truth label. Predicted
/// labels outside the class range count as wrong. Timing fields come from
/// an `ingestion_meta.json` next to the predictions, when present.
pub fn score(
    pred_path: impl AsRef<Path>,
    truth_path: impl AsRef<Path>,
    n_classes: Option<usize>,
) -> Result<MetricsReport> {
    let pred_path = pred_path.as_ref();
    let truth = read_labels(truth_path.as_ref())?;
    let pred = read_labels(pred_path)?;

    let mut by_id: HashMap<usize, i64> = HashMap::with_capacity(pred.len());
    let mut duplicates = Vec::new();
    for &(id, label) in &pred {
        if by_id.insert(id, label).is_some() {
            duplicates.push(id);
        }
    }
    let mut truth_ids = HashMap::with_capacity(truth.len());
    for &(id, label) in &truth {
        if label < 0 {
            return Err(Error::Scoring(format!("truth label {label} for node {id}")));
        }
        if truth_ids.insert(id, label as usize).is_some() {
            return Err(Error::Scoring(format!("truth lists node {id} twice")));
        }
    }
    let mut missing: Vec<usize> = truth.iter().map(|&(id, _)| id).filter(|id| !by_id.contains_key(id)).collect();
    let mut extra: Vec<usize> = by_id.keys().copied().filter(|id| !truth_ids.contains_key(id)).collect();
    missing.sort_unstable();
    extra.sort_unstable();
    duplicates.sort_unstable();
    if !missing.is_empty() || !extra.is_empty() || !duplicates.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing node ids: {}", id_list(&missing)));
        }
        if !extra.is_empty() {
            parts.push(format!("unexpected node ids: {}", id_list(&extra)));
        }
        if !duplicates.is_empty() {
            parts.push(format!("duplicated node ids: {}", id_list(&duplicates)));
        }
        return Err(Error::Scoring(parts.join("; ")));
    }

    let truth_labels: Vec<usize> = truth.iter().map(|&(_, l)| l as usize).collect();
    let c = n_classes.unwrap_or_else(|| truth_labels.iter().max().map_or(1, |m| m + 1));
    if truth_labels.iter().any(|&t| t >= c) {
        return Err(Error::Scoring(format!("truth label outside 0..{c}")));
    }
    let pred_labels: Vec<usize> = truth
        .iter()
        .map(|&(id, _)| {
            let p = by_id[&id];
            if p < 0 || p as usize >= c {
                usize::MAX
            } else {
                p as usize
            }
        })
        .collect();

    let meta: Option<IngestionMeta> = pred_path
        .parent()
        .map(|d| d.join(META_FILE))
        .filter(|p| p.is_file())
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|s| serde_json::from_str(&s).ok());

    Ok(MetricsReport {
        accuracy: accuracy(&pred_labels, &truth_labels)?,
        balanced_accuracy: balanced_accuracy(&pred_labels, &truth_labels, c)?,
        per_class_recall: per_class_recall(&pred_labels, &truth_labels, c)?,
        n_test: truth_labels.len(),
        wall_seconds: meta.as_ref().map_or(0.0, |m| m.wall_seconds),
        budget_exceeded: meta.is_some_and(|m| m.budget_exceeded),
    })
}

pub fn write_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    if let Some(dir) = path.as_ref().parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

/// Table of `results_dir/<dataset>/<solution>/scores.json`: one row per
/// dataset (sorted), accuracy and balanced accuracy per solution in a fixed
/// column order, `-` where a score is missing.
pub fn leaderboard(results_dir: impl AsRef<Path>) -> Result<String> {
    let results_dir = results_dir.as_ref();
    let mut rows: BTreeMap<String, HashMap<Solution, MetricsReport>> = BTreeMap::new();
    let entries = fs::read_dir(results_dir).map_err(|e| Error::Load {
        path: results_dir.to_path_buf(),
        source: e,
    })?;
    for entry in entries {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let dataset = entry.file_name().to_string_lossy().into_owned();
        let row = rows.entry(dataset).or_default();
        for s in Solution::ALL {
            let path = entry.path().join(s.name()).join(SCORES_FILE);
            if path.is_file() {
                let report: MetricsReport = serde_json::from_str(&fs::read_to_string(&path)?)?;
                row.insert(s, report);
            }
        }
    }
    let mut out = String::from("dataset");
    for s in Solution::ALL {
        out.push_str(&format!(",{0}_acc,{0}_balacc", s.name()));
    }
    out.push('\n');
    for (dataset, row) in &rows {
        out.push_str(dataset);
        for s in Solution::ALL {
            match row.get(&s) {
                Some(r) => out.push_str(&format!(",{:.4},{:.4}", r.accuracy, r.balanced_accuracy)),
                None => out.push_str(",-,-"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

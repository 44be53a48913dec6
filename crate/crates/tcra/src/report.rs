//! Serialized training logs and evaluation reports.
//!
//! Both come in two flavours: a flat CSV with just the plottable numbers,
//! and a JSON document carrying everything (per-sample outcomes, confusion
//! matrices, config hash). Floats are written in shortest round-trip form,
//! so parsing a CSV back recovers the exact values.

use std::fs::File;
use std::path::Path;

use tcra_core::eval::EvalReport;
use tcra_core::train::TrainLog;

use crate::{Error, Result};

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_flush(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One CSV row per epoch: `epoch,loss,acc,lr`.
pub fn write_train_log_csv(path: &Path, log: &TrainLog) -> Result<()> {
    let mut w = csv_writer(path)?;
    let row = |e: &tcra_core::train::EpochStats| {
        [
            e.epoch.to_string(),
            e.loss.to_string(),
            e.accuracy.to_string(),
            e.lr.to_string(),
        ]
    };
    w.write_record(["epoch", "loss", "acc", "lr"])
        .map_err(|e| Error::io(path, e.into()))?;
    for epoch in &log.epochs {
        w.write_record(row(epoch))
            .map_err(|e| Error::io(path, e.into()))?;
    }
    csv_flush(path, w)
}

pub fn write_train_log_json(path: &Path, log: &TrainLog) -> Result<()> {
    write_json(path, log)
}

pub fn read_train_log_json(path: &Path) -> Result<TrainLog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// One CSV row per observation ratio: `ratio,accuracy` — the early
/// prediction curve, directly plottable.
pub fn write_eval_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["ratio", "accuracy"])
        .map_err(|e| Error::io(path, e.into()))?;
    for r in &report.ratios {
        w.write_record([r.ratio.to_string(), r.accuracy.to_string()])
            .map_err(|e| Error::io(path, e.into()))?;
    }
    csv_flush(path, w)
}

pub fn write_eval_json(path: &Path, report: &EvalReport) -> Result<()> {
    write_json(path, report)
}

pub fn read_eval_json(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tcra_core::eval::{RatioReport, SampleOutcome};
    use tcra_core::train::EpochStats;

    fn log() -> TrainLog {
        TrainLog {
            seed: 9,
            config_hash: 0xdead_beef,
            epochs: vec![
                EpochStats {
                    epoch: 0,
                    loss: 1.0986122886681098,
                    accuracy: 0.25,
                    lr: 0.001,
                },
                EpochStats {
                    epoch: 1,
                    loss: 0.7,
                    accuracy: 0.5,
                    lr: 0.001,
                },
            ],
        }
    }

    fn report() -> EvalReport {
        EvalReport {
            ratios: vec![RatioReport {
                ratio: 0.5,
                accuracy: 0.75,
                correct: 3,
                total: 4,
                confusion: vec![vec![2, 0], vec![1, 1]],
                samples: vec![SampleOutcome {
                    id: "a0".into(),
                    label: 1,
                    predicted: 1,
                    probs: vec![0.3, 0.7],
                }],
            }],
        }
    }

    #[test]
    fn train_log_json_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.json");
        write_train_log_json(&path, &log()).unwrap();
        assert_eq!(read_train_log_json(&path).unwrap(), log());
    }

    #[test]
    fn train_log_csv_has_one_row_per_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_train_log_csv(&path, &log()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,loss,acc,lr");
        assert_eq!(lines.len(), 3);
        // Shortest round-trip float formatting: parsing gives the bits back.
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[0], "0");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 1.0986122886681098);
        assert_eq!(fields[3].parse::<f64>().unwrap(), 0.001);
    }

    #[test]
    fn eval_json_round_trips_with_confusion_matrices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_eval_json(&path, &report()).unwrap();
        let back = read_eval_json(&path).unwrap();
        assert_eq!(back, report());
        assert_eq!(back.ratios[0].confusion[1][0], 1);
    }

    #[test]
    fn eval_csv_is_the_accuracy_curve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_eval_csv(&path, &report()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "ratio,accuracy");
        assert_eq!(text.lines().nth(1).unwrap(), "0.5,0.75");
    }
}

//! Attention-weight exports: where the model looked, step by step.
//!
//! Two formats per (sample, subject) pair:
//!
//! * one CSV covering all steps, columns `step,row,col,weight`, weights in
//!   shortest round-trip decimal form;
//! * one binary 8-bit PGM (`P5`) per step, named
//!   `<sample>_<subject>_<step>.pgm`, pixel = `round(255 * l / max(l))`,
//!   so the brightest pixel marks the most-attended location and uniform
//!   attention renders solid white.

use std::fs;
use std::path::{Path, PathBuf};

use tcra_core::Tensor;

use crate::{Error, Result};

fn check_grid(weights: &Tensor<f64>, side: usize) -> Result<()> {
    if weights.numel() != side * side {
        return Err(Error::Core(tcra_core::Error::Data(format!(
            "attention weights have {} entries, a side-{side} grid needs {}",
            weights.numel(),
            side * side
        ))));
    }
    Ok(())
}

/// Renders one step's weights as a binary PGM image.
pub fn pgm_bytes(weights: &Tensor<f64>, side: usize) -> Result<Vec<u8>> {
    check_grid(weights, side)?;
    let max = weights.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    for &l in weights.data() {
        let v = if max > 0.0 { (255.0 * l / max).round() } else { 0.0 };
        out.push(v.clamp(0.0, 255.0) as u8);
    }
    Ok(out)
}

/// Writes one PGM per step into `dir`, returning the paths written.
pub fn write_pgms(
    dir: &Path,
    sample: &str,
    subject: &str,
    steps: &[Tensor<f64>],
    side: usize,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(steps.len());
    for (step, weights) in steps.iter().enumerate() {
        let path = dir.join(format!("{sample}_{subject}_{step}.pgm"));
        fs::write(&path, pgm_bytes(weights, side)?).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes every step's grid into one CSV, row-major per step.
pub fn write_csv(path: &Path, steps: &[Tensor<f64>], side: usize) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["step", "row", "col", "weight"]).map_err(io_err)?;
    for (step, weights) in steps.iter().enumerate() {
        check_grid(weights, side)?;
        for row in 0..side {
            for col in 0..side {
                let l = weights.data()[row * side + col];
                w.write_record([
                    step.to_string(),
                    row.to_string(),
                    col.to_string(),
                    l.to_string(),
                ])
                .map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a weight CSV back into one `[side^2]` tensor per step. The file
/// must cover every grid cell of every step exactly once.
pub fn read_csv(path: &Path) -> Result<Vec<Tensor<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => {
            Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))
        }
        _ => Error::format(path, 0, e.to_string()),
    })?;

    let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let offset = e.position().map(|p| p.byte()).unwrap_or(0);
            Error::format(path, offset, e.to_string())
        })?;
        let offset = record.position().map(|p| p.byte()).unwrap_or(0);
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| Error::format(path, offset, format!("missing column {i}")))
        };
        let int = |i: usize| -> Result<usize> {
            field(i)?
                .parse()
                .map_err(|e| Error::format(path, offset, format!("column {i}: {e}")))
        };
        let weight: f64 = field(3)?
            .parse()
            .map_err(|e| Error::format(path, offset, format!("weight: {e}")))?;
        rows.push((int(0)?, int(1)?, int(2)?, weight));
    }
    if rows.is_empty() {
        return Err(Error::format(path, 0, "no weight rows"));
    }

    let side = rows.iter().map(|r| r.1.max(r.2)).max().unwrap() + 1;
    let steps = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let mut grids = vec![vec![None; side * side]; steps];
    for (step, row, col, weight) in rows {
        let slot = &mut grids[step][row * side + col];
        if slot.is_some() {
            return Err(Error::format(
                path,
                0,
                format!("cell (step {step}, row {row}, col {col}) appears twice"),
            ));
        }
        *slot = Some(weight);
    }
    grids
        .into_iter()
        .enumerate()
        .map(|(step, grid)| {
            let data: Option<Vec<f64>> = grid.into_iter().collect();
            data.map(Tensor::vector).ok_or_else(|| {
                Error::format(path, 0, format!("step {step} does not cover the full grid"))
            })
        })
        .collect()
}

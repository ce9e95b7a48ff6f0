//! Export of the aggregation layer's correlation matrix: a CSV of the
//! values, a JSON sidecar describing the window, and a grayscale heatmap.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use stan_core::relation::hour_of_week;
use stan_core::TrajectorySequence;

use crate::Error;

/// Values written with 17 significant digits so a CSV reload is exact.
pub fn write_csv<W: Write>(matrix: &[f64], n: usize, mut out: W) -> std::io::Result<()> {
    for row in matrix.chunks(n) {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()
}

pub fn read_csv<R: BufRead>(source: R) -> Result<(Vec<f64>, usize), Error> {
    let mut values = Vec::new();
    let mut n = None;
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Format(format!("attention csv line {}: not a number", i + 1)))?;
        if *n.get_or_insert(row.len()) != row.len() {
            return Err(Error::Format(format!("attention csv line {}: ragged row", i + 1)));
        }
        values.extend(row);
    }
    let n = n.unwrap_or(0);
    if values.len() != n * n {
        return Err(Error::Format("attention csv is not square".into()));
    }
    Ok((values, n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub index: usize,
    pub location_id: u32,
    pub venue: String,
    pub timestamp: i64,
    pub hour_of_week: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub user_id: u32,
    pub user: String,
    pub n: usize,
    pub valid_len: usize,
    pub label_location: u32,
    pub label_time: i64,
    pub positions: Vec<Position>,
    /// Effective run configuration in config-file syntax.
    pub config: String,
}

impl Sidecar {
    pub fn new(seq: &TrajectorySequence, user: &str, venue_keys: &[String], config: String) -> Self {
        let positions = seq
            .valid()
            .iter()
            .enumerate()
            .map(|(index, c)| Position {
                index,
                location_id: c.location_id,
                venue: venue_keys.get(c.location_id as usize - 1).cloned().unwrap_or_default(),
                timestamp: c.timestamp,
                hour_of_week: hour_of_week(c.timestamp),
            })
            .collect();
        Self {
            user_id: seq.user_id,
            user: user.to_string(),
            n: seq.n(),
            valid_len: seq.valid_len,
            label_location: seq.label_location,
            label_time: seq.label_time,
            positions,
            config,
        }
    }
}

/// Grayscale PNG, `scale` pixels per cell, darker for larger weights.
pub fn write_png<W: Write>(matrix: &[f64], n: usize, scale: usize, out: W) -> Result<(), Error> {
    let max = matrix.iter().copied().fold(0.0f64, f64::max);
    let side = n * scale;
    let mut pixels = vec![255u8; side * side];
    for r in 0..side {
        for c in 0..side {
            let v = matrix[(r / scale) * n + c / scale];
            let shade = if max > 0.0 { v / max } else { 0.0 };
            pixels[r * side + c] = (255.0 * (1.0 - shade.clamp(0.0, 1.0))).round() as u8;
        }
    }
    let mut enc = png::Encoder::new(out, side as u32, side as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| Error::Format(format!("png: {e}")))?;
    w.write_image_data(&pixels).map_err(|e| Error::Format(format!("png: {e}")))?;
    Ok(())
}

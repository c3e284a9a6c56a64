//! Attention heatmaps as binary PGM (P5) images.

use std::fs;
use std::path::Path;

use sqap_core::attention::AttentionVector;
use sqap_core::pruner::TokenGrid;

use crate::error::{HarnessError, Result};

/// Encodes `a_q` as a `grid_w × grid_h` 8-bit graymap, one pixel per token
/// in row-major order. Scores are min-max scaled to `0..=255`; a constant
/// vector maps to 128 everywhere.
pub fn encode_pgm(a_q: &AttentionVector, grid: &TokenGrid) -> Result<Vec<u8>> {
    let scores = a_q.scores();
    if scores.len() != grid.len() {
        return Err(HarnessError::Config(format!(
            "attention has {} entries but the grid has {} tokens",
            scores.len(),
            grid.len()
        )));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", grid.grid_w, grid.grid_h).into_bytes();
    if max > min {
        let span = max - min;
        out.extend(scores.iter().map(|s| ((s - min) / span * 255.0).round() as u8));
    } else {
        out.extend(std::iter::repeat_n(128u8, scores.len()));
    }
    Ok(out)
}

pub fn emit_heatmap(a_q: &AttentionVector, grid: &TokenGrid, path: &Path) -> Result<()> {
    let bytes = encode_pgm(a_q, grid)?;
    fs::write(path, bytes)?;
    Ok(())
}

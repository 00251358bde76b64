//! Synchronization analytics over matched heavy-beat series.

pub mod feedback;
pub mod information;
pub mod report;

pub use feedback::{simulate_feedback_conditions, Condition, FeedbackParams, FeedbackRun};
pub use information::{
    deviation_entropy, quantile_bins, shuffled_surrogates, transfer_entropy, MIN_TE_LENGTH,
};
pub use report::{analyze, AnalysisConfig, SyncReport};

use std::f64::consts::TAU;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error("series of length {found} is too short; at least {min} needed")]
    TooShort { found: usize, min: usize },
    #[error("timestamps must be strictly increasing (index {0})")]
    NotIncreasing(usize),
}

fn same_len(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    Ok(())
}

/// Human minus robot timestamp per matched beat; positive when the human leads.
pub fn time_gaps(human: &[f64], robot: &[f64]) -> Result<Vec<f64>, MetricsError> {
    same_len(human.len(), robot.len())?;
    Ok(human.iter().zip(robot).map(|(h, r)| h - r).collect())
}

pub fn mae_sae(human: &[f64], robot: &[f64]) -> Result<(f64, f64), MetricsError> {
    same_len(human.len(), robot.len())?;
    if human.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sae: f64 = human.iter().zip(robot).map(|(h, r)| (h - r).abs()).sum();
    Ok((sae / human.len() as f64, sae))
}

/// Magnitude of the mean phase-difference phasor.
pub fn sync_index(phi_h: &[f64], phi_r: &[f64]) -> Result<f64, MetricsError> {
    same_len(phi_h.len(), phi_r.len())?;
    if phi_h.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mut re, mut im) = (0.0, 0.0);
    for (a, b) in phi_h.iter().zip(phi_r) {
        let d = a - b;
        re += d.cos();
        im += d.sin();
    }
    let n = phi_h.len() as f64;
    Ok((re / n).hypot(im / n).min(1.0))
}

/// Phase of each event against a strictly increasing reference grid, one
/// full turn per grid interval. Events outside the grid extrapolate from the
/// nearest interval.
pub fn phases(events: &[f64], grid: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if grid.len() < 2 {
        return Err(MetricsError::TooShort {
            found: grid.len(),
            min: 2,
        });
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(MetricsError::NotIncreasing(i + 1));
    }
    Ok(events
        .iter()
        .map(|&t| {
            let k = grid
                .partition_point(|&g| g <= t)
                .saturating_sub(1)
                .min(grid.len() - 2);
            let frac = (t - grid[k]) / (grid[k + 1] - grid[k]);
            TAU * (k as f64 + frac)
        })
        .collect())
}

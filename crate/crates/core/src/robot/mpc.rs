//! Receding-horizon choice of horizontal speed and travel-time allocation.
//!
//! Over a horizon of `n` steps the hand moves at a constant speed `v` toward
//! the target, so the predicted position is linear in `v` and the cost
//! `w_track * sum (y_k - r_k)^2 + w_effort * sum v^2` is a convex quadratic.
//! The travel-time fraction `zeta` of a strike slot must leave enough time
//! to cover the chord change: `v * zeta * slot >= h * key_width`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::KeyboardGeometry;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub w_track: f64,
    pub w_effort: f64,
    /// Horizontal speed limit in mm/s.
    pub v_max: f64,
    pub dt: f64,
    /// Allowed travel-time fractions, each a power of one half.
    pub zetas: Vec<f64>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 8,
            w_track: 1.0,
            w_effort: 1e-4,
            v_max: 1000.0,
            dt: 0.01,
            zetas: vec![1.0, 0.5, 0.25, 0.125],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcDecision {
    pub v: f64,
    pub zeta: f64,
    /// Predicted positions for steps 0..=horizon.
    pub predicted: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[error("chord change of {h} keys cannot be made in a {slot:.4} s slot at {v_max} mm/s (needs {required:.1} mm/s)")]
pub struct Infeasible {
    pub h: u32,
    pub slot: f64,
    pub v_max: f64,
    pub required: f64,
}

fn direction(y0: f64, reference: &[f64]) -> f64 {
    let end = *reference.last().expect("reference is nonempty");
    if end > y0 {
        1.0
    } else if end < y0 {
        -1.0
    } else {
        0.0
    }
}

fn predict(y0: f64, dir: f64, v: f64, n: usize, dt: f64) -> Vec<f64> {
    (0..=n).map(|k| y0 + dir * v * k as f64 * dt).collect()
}

/// Cost of holding speed `v` for the whole horizon.
pub fn cost(y0: f64, dir: f64, v: f64, reference: &[f64], cfg: &MpcConfig) -> f64 {
    let n = cfg.horizon;
    let track: f64 = (1..=n)
        .map(|k| {
            let e = y0 + dir * v * k as f64 * cfg.dt - reference[k];
            e * e
        })
        .sum();
    cfg.w_track * track + cfg.w_effort * n as f64 * v * v
}

/// Largest speed keeping the predicted horizon inside the travel limits.
fn box_cap(y0: f64, dir: f64, cfg: &MpcConfig, geometry: &KeyboardGeometry) -> f64 {
    let (lo, hi) = geometry.bounds();
    let span = cfg.horizon as f64 * cfg.dt;
    let room = if dir > 0.0 {
        hi - y0
    } else if dir < 0.0 {
        y0 - lo
    } else {
        f64::INFINITY
    };
    (room / span).max(0.0)
}

/// Minimize the cost over `[lo, hi]` by golden-section search.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    [lo, mid, hi]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .expect("three candidates")
}

/// Travel-time fraction for a change of `h` keys: the largest allowed value
/// no greater than one half that is feasible, else the largest feasible one.
pub fn select_zeta(
    h: u32,
    slot: f64,
    v_hi: f64,
    cfg: &MpcConfig,
    key_width: f64,
) -> Result<f64, Infeasible> {
    let need = |z: f64| f64::from(h) * key_width / (z * slot);
    let feasible: Vec<f64> = cfg
        .zetas
        .iter()
        .copied()
        .filter(|&z| need(z) <= v_hi)
        .collect();
    let half = feasible
        .iter()
        .copied()
        .filter(|&z| z <= 0.5)
        .reduce(f64::max);
    half.or_else(|| feasible.iter().copied().reduce(f64::max))
        .ok_or_else(|| {
            let widest = cfg.zetas.iter().copied().fold(0.0, f64::max);
            Infeasible {
                h,
                slot,
                v_max: cfg.v_max,
                required: need(widest),
            }
        })
}

/// Decide speed and travel-time fraction for a change of `h` keys within a
/// strike slot of `slot` seconds, tracking `reference` (horizon + 1 points).
pub fn mpc_step(
    y0: f64,
    reference: &[f64],
    cfg: &MpcConfig,
    geometry: &KeyboardGeometry,
    h: u32,
    slot: f64,
) -> Result<MpcDecision, Infeasible> {
    assert_eq!(
        reference.len(),
        cfg.horizon + 1,
        "reference must cover the horizon"
    );
    let dir = direction(y0, reference);
    let v_hi = cfg.v_max.min(box_cap(y0, dir, cfg, geometry));
    let zeta = select_zeta(h, slot, v_hi, cfg, geometry.key_width)?;
    let v_lo = f64::from(h) * geometry.key_width / (zeta * slot);
    let v = golden_section(|v| cost(y0, dir, v, reference, cfg), v_lo, v_hi, 1e-7);
    Ok(MpcDecision {
        v,
        zeta,
        predicted: predict(y0, dir, v, cfg.horizon, cfg.dt),
        cost: cost(y0, dir, v, reference, cfg),
    })
}

/// Exhaustive reference for [`mpc_step`]: every allowed fraction crossed with
/// every whole mm/s speed up to the limit.
pub fn oracle_step(
    y0: f64,
    reference: &[f64],
    cfg: &MpcConfig,
    geometry: &KeyboardGeometry,
    h: u32,
    slot: f64,
) -> Option<(f64, f64)> {
    let dir = direction(y0, reference);
    let (lo, hi) = geometry.bounds();
    let grid: Vec<f64> = (0..=cfg.v_max.floor() as u64).map(|v| v as f64).collect();
    let ok = |z: f64, v: f64| {
        let end = y0 + dir * v * cfg.horizon as f64 * cfg.dt;
        v * z * slot >= f64::from(h) * geometry.key_width && end >= lo && end <= hi
    };
    let feasible: Vec<f64> = cfg
        .zetas
        .iter()
        .copied()
        .filter(|&z| grid.iter().any(|&v| ok(z, v)))
        .collect();
    let half: Vec<f64> = feasible.iter().copied().filter(|&z| z <= 0.5).collect();
    let pool = if half.is_empty() { &feasible } else { &half };
    let zeta = pool.iter().copied().reduce(f64::max)?;
    let v = grid
        .iter()
        .copied()
        .filter(|&v| ok(zeta, v))
        .min_by(|a, b| {
            cost(y0, dir, *a, reference, cfg).total_cmp(&cost(y0, dir, *b, reference, cfg))
        })?;
    Some((zeta, v))
}

/// Per-step tracking during a move: reach `target` by `time_left` seconds
/// without overshooting within the next step.
pub fn track_step(
    y0: f64,
    target: f64,
    reference: &[f64],
    cfg: &MpcConfig,
    geometry: &KeyboardGeometry,
    zeta: f64,
    time_left: f64,
) -> MpcDecision {
    let dist = (target - y0).abs();
    let dir = if target > y0 {
        1.0
    } else if target < y0 {
        -1.0
    } else {
        0.0
    };
    let hi = cfg
        .v_max
        .min(dist / cfg.dt)
        .min(box_cap(y0, dir, cfg, geometry));
    let lo = if time_left > cfg.dt {
        (dist / time_left).min(hi)
    } else {
        hi
    };
    let v = if hi <= 0.0 {
        0.0
    } else {
        golden_section(|v| cost(y0, dir, v, reference, cfg), lo, hi, 1e-7)
    };
    MpcDecision {
        v,
        zeta,
        predicted: predict(y0, dir, v, cfg.horizon, cfg.dt),
        cost: cost(y0, dir, v, reference, cfg),
    }
}

//! One-call analysis of a matched beat series and a tabular rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::information::{deviation_entropy, quantile_bins, transfer_entropy, MIN_TE_LENGTH};
use super::{mae_sae, phases, sync_index, time_gaps, MetricsError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Histogram bin width for deviation entropy (s).
    pub bin_width: f64,
    /// Symbols per series for transfer entropy.
    pub te_bins: usize,
    pub target_lag: usize,
    pub source_lag: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bin_width: 0.02,
            te_bins: 4,
            target_lag: 1,
            source_lag: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub beats: usize,
    pub tg: Vec<f64>,
    pub mean_tg: f64,
    pub mean_abs_tg: f64,
    pub si: f64,
    pub mae: f64,
    pub sae: f64,
    pub entropy: f64,
    /// Robot-to-human transfer entropy over inter-beat intervals; absent
    /// when the series is too short.
    pub te_r_to_h: Option<f64>,
    pub config: AnalysisConfig,
}

fn intervals(t: &[f64]) -> Vec<f64> {
    t.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Analyze matched heavy beats. Phases are measured against `grid`, the
/// nominal beat clock.
pub fn analyze(
    human: &[f64],
    robot: &[f64],
    grid: &[f64],
    cfg: &AnalysisConfig,
) -> Result<SyncReport, MetricsError> {
    let tg = time_gaps(human, robot)?;
    let (mae, sae) = mae_sae(human, robot)?;
    let si = sync_index(&phases(human, grid)?, &phases(robot, grid)?)?;
    let entropy = deviation_entropy(&tg, cfg.bin_width)?;
    let te_r_to_h = if human.len() > MIN_TE_LENGTH {
        let sh = quantile_bins(&intervals(human), cfg.te_bins);
        let sr = quantile_bins(&intervals(robot), cfg.te_bins);
        Some(transfer_entropy(&sr, &sh, cfg.target_lag, cfg.source_lag)?)
    } else {
        None
    };
    let n = tg.len() as f64;
    Ok(SyncReport {
        beats: tg.len(),
        mean_tg: tg.iter().sum::<f64>() / n,
        mean_abs_tg: mae,
        tg,
        si,
        mae,
        sae,
        entropy,
        te_r_to_h,
        config: cfg.clone(),
    })
}

/// Plain-text table with one row per labelled report.
pub fn render_table(rows: &[(String, SyncReport)]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<16} {:>6} {:>10} {:>8} {:>9} {:>9} {:>12} {:>8}",
        "case", "beats", "mean TG(s)", "SI", "MAE(s)", "SAE(s)", "entropy(bit)", "TE(bit)"
    )
    .unwrap();
    for (name, r) in rows {
        let te = r
            .te_r_to_h
            .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        writeln!(
            s,
            "{:<16} {:>6} {:>10.4} {:>8.4} {:>9.4} {:>9.4} {:>12.4} {:>8}",
            name, r.beats, r.mean_tg, r.si, r.mae, r.sae, r.entropy, te
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_logs_are_perfectly_synchronized() {
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 2.0).collect();
        let r = analyze(&t, &t, &t, &AnalysisConfig::default()).unwrap();
        assert!((r.si - 1.0).abs() < 1e-12);
        assert_eq!((r.mae, r.sae, r.entropy), (0.0, 0.0, 0.0));
        assert!(r.te_r_to_h.is_some());
        let table = render_table(&[("same".into(), r)]);
        assert!(table.contains("same"));
    }

    #[test]
    fn short_series_skip_transfer_entropy() {
        let t = [0.0, 1.0, 2.0];
        let r = analyze(&t, &t, &t, &AnalysisConfig::default()).unwrap();
        assert_eq!(r.te_r_to_h, None);
    }
}

//! Two-neuron mutual-inhibition oscillator with adaptation, used to drive the
//! vertical keystroke axis.
//!
//! Each neuron obeys
//! `t_rise * dx_i/dt = -x_i + s_i - sum_j a_ij y_j - b f_i` and
//! `t_adapt * df_i/dt = -f_i + y_i` with `y_i = max(x_i, 0)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DT: f64 = 0.001;
pub const MIN_PERIOD: f64 = 0.05;
pub const MAX_PERIOD: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpgError {
    #[error("oscillator state became non-finite at t = {t:.6} s: x = {x:?}, f = {f:?}")]
    NonFinite { t: f64, x: [f64; 2], f: [f64; 2] },
    #[error("invalid oscillator parameters: {0}")]
    InvalidParams(String),
    #[error("period {requested:.4} s is outside the tunable range [{min}, {max}] s")]
    PeriodOutOfRange { requested: f64, min: f64, max: f64 },
    #[error("oscillator does not oscillate with these parameters")]
    NoOscillation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub t_rise: f64,
    pub t_adapt: f64,
    pub tonic: [f64; 2],
    /// Inhibition weights; the diagonal must be zero.
    pub inhibition: [[f64; 2]; 2],
    pub adaptation_gain: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        OscillatorParams {
            t_rise: 0.1,
            t_adapt: 0.2,
            tonic: [1.0, 1.0],
            inhibition: [[0.0, 2.0], [2.0, 0.0]],
            adaptation_gain: 2.5,
        }
    }
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<(), CpgError> {
        let finite = [self.t_rise, self.t_adapt, self.adaptation_gain]
            .iter()
            .chain(self.tonic.iter())
            .chain(self.inhibition.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(CpgError::InvalidParams("non-finite value".into()));
        }
        if self.t_rise <= 0.0 || self.t_adapt <= 0.0 {
            return Err(CpgError::InvalidParams(
                "time constants must be positive".into(),
            ));
        }
        if self.adaptation_gain < 0.0 {
            return Err(CpgError::InvalidParams(
                "adaptation gain must be nonnegative".into(),
            ));
        }
        if self.inhibition[0][0] != 0.0 || self.inhibition[1][1] != 0.0 {
            return Err(CpgError::InvalidParams(
                "self-inhibition weights must be zero".into(),
            ));
        }
        Ok(())
    }

    /// Same oscillator running `factor` times slower.
    pub fn time_scaled(&self, factor: f64) -> Self {
        OscillatorParams {
            t_rise: self.t_rise * factor,
            t_adapt: self.t_adapt * factor,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorState {
    pub x: [f64; 2],
    pub f: [f64; 2],
    pub y: [f64; 2],
    pub t: f64,
}

impl OscillatorState {
    pub fn new(x: [f64; 2], f: [f64; 2]) -> Self {
        OscillatorState {
            x,
            f,
            y: x.map(|v| v.max(0.0)),
            t: 0.0,
        }
    }

    /// Asymmetric start that settles onto the limit cycle.
    pub fn kick() -> Self {
        Self::new([0.1, 0.0], [0.0, 0.0])
    }

    /// Flexor minus extensor output.
    pub fn output(&self) -> f64 {
        self.y[0] - self.y[1]
    }
}

fn derivative(p: &OscillatorParams, v: [f64; 4]) -> [f64; 4] {
    let y = [v[0].max(0.0), v[1].max(0.0)];
    let mut d = [0.0; 4];
    for i in 0..2 {
        let inhib: f64 = (0..2).map(|j| p.inhibition[i][j] * y[j]).sum();
        d[i] = (-v[i] + p.tonic[i] - inhib - p.adaptation_gain * v[2 + i]) / p.t_rise;
        d[2 + i] = (-v[2 + i] + y[i]) / p.t_adapt;
    }
    d
}

/// One classical Runge-Kutta step.
pub fn step(
    state: &OscillatorState,
    p: &OscillatorParams,
    dt: f64,
) -> Result<OscillatorState, CpgError> {
    let v = [state.x[0], state.x[1], state.f[0], state.f[1]];
    let add =
        |a: [f64; 4], b: [f64; 4], h: f64| std::array::from_fn::<f64, 4, _>(|i| a[i] + h * b[i]);
    let k1 = derivative(p, v);
    let k2 = derivative(p, add(v, k1, dt / 2.0));
    let k3 = derivative(p, add(v, k2, dt / 2.0));
    let k4 = derivative(p, add(v, k3, dt));
    let n: [f64; 4] =
        std::array::from_fn(|i| v[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    let t = state.t + dt;
    if n.iter().any(|x| !x.is_finite()) {
        return Err(CpgError::NonFinite {
            t,
            x: [n[0], n[1]],
            f: [n[2], n[3]],
        });
    }
    let mut out = OscillatorState::new([n[0], n[1]], [n[2], n[3]]);
    out.t = t;
    Ok(out)
}

/// Upward zero crossings of the output, linearly interpolated.
pub fn upward_crossings(samples: &[f64], t0: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..samples.len() {
        let (a, b) = (samples[k - 1], samples[k]);
        if a <= 0.0 && b > 0.0 {
            out.push(t0 + dt * ((k - 1) as f64 + (-a) / (b - a)));
        }
    }
    out
}

/// Output samples after discarding `settle` seconds of transient.
pub fn simulate(
    p: &OscillatorParams,
    dt: f64,
    settle: f64,
    duration: f64,
) -> Result<Vec<f64>, CpgError> {
    let mut s = OscillatorState::kick();
    let warm = (settle / dt).round() as usize;
    for _ in 0..warm {
        s = step(&s, p, dt)?;
    }
    let n = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    out.push(s.output());
    for _ in 0..n {
        s = step(&s, p, dt)?;
        out.push(s.output());
    }
    Ok(out)
}

/// Settling time and measurement window, in units of the adaptation constant.
const SETTLE_TAU: f64 = 40.0;
const MEASURE_TAU: f64 = 60.0;

/// Mean period over the measurement window.
pub fn measure_period(p: &OscillatorParams, dt: f64) -> Result<f64, CpgError> {
    p.validate()?;
    let out = simulate(p, dt, SETTLE_TAU * p.t_adapt, MEASURE_TAU * p.t_adapt)?;
    let c = upward_crossings(&out, 0.0, dt);
    if c.len() < 3 {
        return Err(CpgError::NoOscillation);
    }
    Ok((c[c.len() - 1] - c[0]) / (c.len() - 1) as f64)
}

/// Scale both time constants of `reference` so the measured period matches
/// `period`, by bisection on the scale factor.
pub fn tune_period(
    reference: &OscillatorParams,
    period: f64,
    dt: f64,
) -> Result<OscillatorParams, CpgError> {
    if !(MIN_PERIOD..=MAX_PERIOD).contains(&period) {
        return Err(CpgError::PeriodOutOfRange {
            requested: period,
            min: MIN_PERIOD,
            max: MAX_PERIOD,
        });
    }
    let base = measure_period(reference, dt)?;
    let guess = period / base;
    let (mut lo, mut hi) = (guess * 0.9, guess * 1.1);
    while measure_period(&reference.time_scaled(lo), dt)? > period {
        lo *= 0.9;
    }
    while measure_period(&reference.time_scaled(hi), dt)? < period {
        hi *= 1.1;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if measure_period(&reference.time_scaled(mid), dt)? < period {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) / mid < 1e-9 {
            break;
        }
    }
    Ok(reference.time_scaled(0.5 * (lo + hi)))
}

/// Vertical geometry of a keystroke, in millimetres above the key surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeGeometry {
    pub rest_height: f64,
    /// Height of the key-press threshold (negative: below the key surface).
    pub press_height: f64,
    /// Height of the key bed.
    pub bottom_height: f64,
}

impl Default for StrokeGeometry {
    fn default() -> Self {
        StrokeGeometry {
            rest_height: 15.0,
            press_height: -6.0,
            bottom_height: -10.0,
        }
    }
}

/// One steady-state cycle of the vertical command, starting at an upward zero
/// crossing of the oscillator output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeystrokeWaveform {
    pub params: OscillatorParams,
    pub period: f64,
    pub dt: f64,
    pub gain: f64,
    pub geometry: StrokeGeometry,
    /// Heights sampled every `dt` over one period.
    pub heights: Vec<f64>,
    /// Time into the cycle at which the press threshold is crossed.
    pub press_offset: f64,
}

/// Headroom of the stroke below the key bed, as a fraction of rest-to-bed travel.
const OVERDRIVE: f64 = 0.1;

impl KeystrokeWaveform {
    /// Waveform whose cycle lasts `period` seconds.
    pub fn tuned(
        reference: &OscillatorParams,
        period: f64,
        dt: f64,
        geometry: StrokeGeometry,
    ) -> Result<Self, CpgError> {
        let params = tune_period(reference, period, dt)?;
        let settle = SETTLE_TAU * params.t_adapt;
        let out = simulate(&params, dt, settle, settle + 3.0 * period)?;
        let c = upward_crossings(&out, 0.0, dt);
        if c.len() < 2 {
            return Err(CpgError::NoOscillation);
        }
        let start = c[0];
        let n = (period / dt).round() as usize;
        let peak = out.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(CpgError::NoOscillation);
        }
        let gain = (1.0 + OVERDRIVE) * (geometry.rest_height - geometry.bottom_height) / peak;
        let sample = |t: f64| {
            let u = t / dt;
            let k = (u.floor() as usize).min(out.len() - 2);
            let w = u - k as f64;
            out[k] * (1.0 - w) + out[k + 1] * w
        };
        let heights: Vec<f64> = (0..n)
            .map(|i| geometry.rest_height - gain * sample(start + i as f64 * dt).max(0.0))
            .collect();
        let press_offset = heights
            .windows(2)
            .position(|w| w[0] > geometry.press_height && w[1] <= geometry.press_height)
            .map(|i| {
                let (a, b) = (heights[i], heights[i + 1]);
                (i as f64 + (a - geometry.press_height) / (a - b)) * dt
            })
            .ok_or(CpgError::NoOscillation)?;
        Ok(KeystrokeWaveform {
            params,
            period,
            dt,
            gain,
            geometry,
            heights,
            press_offset,
        })
    }

    /// Commanded height `t` seconds after a scheduled strike; the threshold
    /// crossing lands exactly on the strike.
    pub fn height_after_strike(&self, t: f64) -> f64 {
        let phase = (t + self.press_offset).rem_euclid(self.period);
        let u = phase / self.dt;
        let n = self.heights.len();
        let k = u.floor() as usize % n;
        let w = u - u.floor();
        self.heights[k] * (1.0 - w) + self.heights[(k + 1) % n] * w
    }

    /// Fraction of the cycle spent below the press threshold.
    pub fn duty_cycle(&self) -> f64 {
        let below = self
            .heights
            .iter()
            .filter(|&&z| z <= self.geometry.press_height)
            .count();
        below as f64 / self.heights.len() as f64
    }

    /// Duty cycle of a sine with the same period, top and bottom crossing the
    /// same threshold.
    pub fn sine_duty_cycle(&self) -> f64 {
        let top = self
            .heights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let bottom = self.heights.iter().cloned().fold(f64::INFINITY, f64::min);
        let mid = 0.5 * (top + bottom);
        let amp = 0.5 * (top - bottom);
        let c = ((self.geometry.press_height - mid) / amp).clamp(-1.0, 1.0);
        // z = mid + amp cos(theta) lies below the threshold where cos(theta) <= c.
        1.0 - c.acos() / std::f64::consts::PI
    }
}

/// Duty cycle of `heights` below `threshold` for a sampled sine, used as an
/// independent check of the closed form.
pub fn sampled_sine_duty(top: f64, bottom: f64, threshold: f64, samples: usize) -> f64 {
    let mid = 0.5 * (top + bottom);
    let amp = 0.5 * (top - bottom);
    let below = (0..samples)
        .filter(|&i| {
            let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / samples as f64;
            mid + amp * th.cos() <= threshold
        })
        .count();
    below as f64 / samples as f64
}

/// Peak output of each of `cycles` successive cycles after settling.
pub fn cycle_peaks(p: &OscillatorParams, dt: f64, cycles: usize) -> Result<Vec<f64>, CpgError> {
    let period = measure_period(p, dt)?;
    let out = simulate(
        p,
        dt,
        SETTLE_TAU * p.t_adapt,
        (cycles as f64 + 2.0) * period,
    )?;
    let c = upward_crossings(&out, 0.0, dt);
    Ok(c.windows(2)
        .take(cycles)
        .map(|w| {
            let a = (w[0] / dt).ceil() as usize;
            let b = ((w[1] / dt).floor() as usize).min(out.len() - 1);
            out[a..=b].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unforced_system_decays() {
        let p = OscillatorParams {
            tonic: [0.0, 0.0],
            ..OscillatorParams::default()
        };
        let mut s = OscillatorState::new([-1.0, -0.5], [0.0, 0.0]);
        let mut norm = f64::INFINITY;
        for _ in 0..2000 {
            s = step(&s, &p, DEFAULT_DT).unwrap();
            let n = s.x[0].hypot(s.x[1]);
            assert!(n < norm);
            norm = n;
            assert_eq!(s.y, [0.0, 0.0]);
        }
        assert!(norm < 1e-6);
    }

    #[test]
    fn unforced_system_settles_from_positive_start() {
        let p = OscillatorParams {
            tonic: [0.0, 0.0],
            ..OscillatorParams::default()
        };
        let mut s = OscillatorState::new([1.0, 0.3], [0.2, 0.0]);
        for _ in 0..20_000 {
            s = step(&s, &p, DEFAULT_DT).unwrap();
        }
        assert!(s.x.iter().chain(&s.f).all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn outputs_are_rectified() {
        let p = OscillatorParams::default();
        let mut s = OscillatorState::kick();
        for _ in 0..5000 {
            s = step(&s, &p, DEFAULT_DT).unwrap();
            assert!(s.y[0] >= 0.0 && s.y[1] >= 0.0);
            assert_eq!(s.y, s.x.map(|v| v.max(0.0)));
        }
    }

    #[test]
    fn non_finite_state_is_reported() {
        let p = OscillatorParams::default();
        let s = OscillatorState::new([f64::NAN, 0.0], [0.0, 0.0]);
        assert!(matches!(
            step(&s, &p, DEFAULT_DT),
            Err(CpgError::NonFinite { .. })
        ));
    }

    #[test]
    fn self_inhibition_is_rejected() {
        let mut p = OscillatorParams::default();
        p.inhibition[0][0] = 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn limit_cycle_amplitude_is_stable() {
        let peaks = cycle_peaks(&OscillatorParams::default(), DEFAULT_DT, 50).unwrap();
        assert_eq!(peaks.len(), 50);
        let lo = peaks.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = peaks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((hi - lo) / hi < 0.01, "{lo} {hi}");
    }

    #[test]
    fn period_converges_in_step_size() {
        let p = OscillatorParams::default();
        let a = measure_period(&p, DEFAULT_DT).unwrap();
        let b = measure_period(&p, DEFAULT_DT / 2.0).unwrap();
        assert!((a - b).abs() / b < 1e-3, "{a} {b}");
    }

    #[test]
    fn doubling_time_constants_doubles_period() {
        let p = OscillatorParams::default();
        let a = measure_period(&p, DEFAULT_DT / 4.0).unwrap();
        let b = measure_period(&p.time_scaled(2.0), DEFAULT_DT / 2.0).unwrap();
        assert!((b / a - 2.0).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn tuned_period_matches_request() {
        let t_bar = 60.0 * 4.0 / 90.0;
        for ck in [1.0, 2.0, 4.0] {
            let p = tune_period(&OscillatorParams::default(), t_bar / ck, DEFAULT_DT).unwrap();
            let got = measure_period(&p, DEFAULT_DT).unwrap();
            assert!((got - t_bar / ck).abs() < 1e-6, "{got}");
        }
        let ratio = OscillatorParams::default();
        let p = tune_period(&ratio, 1.0, DEFAULT_DT).unwrap();
        assert!((p.t_adapt / p.t_rise - 2.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_period_is_rejected() {
        let p = OscillatorParams::default();
        assert!(matches!(
            tune_period(&p, 0.01, DEFAULT_DT),
            Err(CpgError::PeriodOutOfRange { .. })
        ));
        assert!(matches!(
            tune_period(&p, 50.0, DEFAULT_DT),
            Err(CpgError::PeriodOutOfRange { .. })
        ));
    }

    #[test]
    fn waveform_is_more_impulsive_than_a_sine() {
        let w = KeystrokeWaveform::tuned(
            &OscillatorParams::default(),
            60.0 * 4.0 / 90.0,
            DEFAULT_DT,
            StrokeGeometry::default(),
        )
        .unwrap();
        let top = w.heights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bottom = w.heights.iter().cloned().fold(f64::INFINITY, f64::min);
        let sampled = sampled_sine_duty(top, bottom, w.geometry.press_height, 100_000);
        assert!((sampled - w.sine_duty_cycle()).abs() < 1e-4);
        assert!(w.duty_cycle() < 0.5);
        assert!(
            w.duty_cycle() < w.sine_duty_cycle(),
            "{} vs {}",
            w.duty_cycle(),
            w.sine_duty_cycle()
        );
        assert!(bottom < w.geometry.bottom_height);
    }

    #[test]
    fn strike_lands_on_threshold() {
        let w = KeystrokeWaveform::tuned(
            &OscillatorParams::default(),
            0.5,
            DEFAULT_DT,
            StrokeGeometry::default(),
        )
        .unwrap();
        let th = w.geometry.press_height;
        assert!(w.height_after_strike(-0.002) > th);
        assert!(w.height_after_strike(0.002) < th);
        assert!((w.height_after_strike(0.0) - th).abs() < 0.5);
        assert!((w.height_after_strike(0.1) - w.height_after_strike(0.6)).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let p = OscillatorParams::default();
        assert_eq!(
            simulate(&p, DEFAULT_DT, 1.0, 2.0).unwrap(),
            simulate(&p, DEFAULT_DT, 1.0, 2.0).unwrap()
        );
    }
}

//! Leaky-integrator readout of the LR and RL populations.
//!
//! ```text
//! tau_a dA/dt = -A + sum delta(t - t_LR) - sum delta(t - t_RL)
//! ```
//!
//! LR spikes count positive. A single global sign flag, applied by the caller,
//! reconciles this with whatever yaw convention the ground truth uses.

use std::collections::HashMap;
use std::io::Write;

use thiserror::Error;

use crate::events::{PoseSample, PoseTrack, RateSource};
use crate::network::{Orientation, OutputSpike};
use crate::tde::micros;

#[derive(Debug, Error, PartialEq)]
pub enum ReadoutError {
    #[error("tau_a must be positive, got {0}")]
    Tau(f64),
    #[error("readout step {dt} s must be a whole number of microseconds not above tau_a = {tau_a} s")]
    Step { dt: f64, tau_a: f64 },
    #[error("spike from unit {0} which has no orientation label")]
    UnlabeledUnit(u32),
    #[error("traces are on different time grids")]
    GridMismatch,
    #[error("nothing to combine")]
    Empty,
    #[error("trace is already normalized")]
    AlreadyNormalized,
    #[error("scale must be finite, got {0}")]
    Scale(f64),
}

pub type Result<T> = std::result::Result<T, ReadoutError>;

/// Readout variable `A` sampled at `t0 + i * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityTrace {
    /// Sample spacing, s.
    pub dt: f64,
    pub dt_us: u64,
    /// Time of the first sample, us.
    pub t0: u64,
    pub samples: Vec<f64>,
    pub normalized: bool,
    /// Divisor applied by normalization. 1 for raw traces, 0 for a
    /// normalized all-zero trace.
    pub norm_constant: f64,
}

impl ActivityTrace {
    /// All-zero raw trace covering `[t0, t0 + duration_us]`.
    pub fn zeros(dt: f64, t0: u64, duration_us: u64) -> Option<Self> {
        let dt_us = micros(dt)?;
        Some(Self {
            dt,
            dt_us,
            t0,
            samples: vec![0.0; (duration_us / dt_us) as usize + 1],
            normalized: false,
            norm_constant: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Normalized but identically zero: there was no net motion signal.
    pub fn is_degenerate(&self) -> bool {
        self.normalized && self.norm_constant == 0.0
    }

    pub fn time(&self, i: usize) -> u64 {
        self.t0 + i as u64 * self.dt_us
    }

    pub fn times(&self) -> Vec<u64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn end(&self) -> u64 {
        self.time(self.len().saturating_sub(1))
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.dt_us == other.dt_us && self.t0 == other.t0 && self.len() == other.len()
    }
}

/// Euler integration of the readout on a `dt` grid starting at 0 and
/// spanning `duration_us`. Sample `k` includes every spike with
/// `(k - 1) dt < t <= k dt`; spikes after the window are ignored.
pub fn integrate_diff(
    spikes: &[OutputSpike],
    labels: &HashMap<u32, Orientation>,
    tau_a: f64,
    dt: f64,
    duration_us: u64,
) -> Result<ActivityTrace> {
    if !(tau_a > 0.0) || !tau_a.is_finite() {
        return Err(ReadoutError::Tau(tau_a));
    }
    let mut trace = ActivityTrace::zeros(dt, 0, duration_us)
        .filter(|_| dt <= tau_a)
        .ok_or(ReadoutError::Step { dt, tau_a })?;
    let mut net = vec![0i64; trace.len()];
    for s in spikes {
        let orientation = labels.get(&s.unit_id).ok_or(ReadoutError::UnlabeledUnit(s.unit_id))?;
        let k = s.t.div_ceil(trace.dt_us) as usize;
        if let Some(slot) = net.get_mut(k) {
            *slot += match orientation {
                Orientation::LeftToRight => 1,
                Orientation::RightToLeft => -1,
            };
        }
    }
    let keep = 1.0 - dt / tau_a;
    let mut a = 0.0;
    for (sample, n) in trace.samples.iter_mut().zip(net) {
        a = a * keep + n as f64 / tau_a;
        *sample = a;
    }
    Ok(trace)
}

/// Pointwise sum of raw traces on the same grid.
pub fn combine(traces: &[ActivityTrace]) -> Result<ActivityTrace> {
    let (first, rest) = traces.split_first().ok_or(ReadoutError::Empty)?;
    let mut out = first.clone();
    if out.normalized {
        return Err(ReadoutError::AlreadyNormalized);
    }
    for t in rest {
        if !out.same_grid(t) {
            return Err(ReadoutError::GridMismatch);
        }
        if t.normalized {
            return Err(ReadoutError::AlreadyNormalized);
        }
        for (a, b) in out.samples.iter_mut().zip(&t.samples) {
            *a += b;
        }
    }
    Ok(out)
}

/// Divides by the maximum absolute sample over the whole trace.
pub fn normalize(trace: &ActivityTrace) -> Result<ActivityTrace> {
    if trace.normalized {
        return Err(ReadoutError::AlreadyNormalized);
    }
    let peak = trace.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = trace.clone();
    out.normalized = true;
    out.norm_constant = peak;
    if peak > 0.0 {
        for v in &mut out.samples {
            *v /= peak;
        }
    }
    Ok(out)
}

/// Causal variant: each sample is divided by the running maximum of |A| up to
/// and including itself. `norm_constant` is the final running maximum.
pub fn normalize_causal(trace: &ActivityTrace) -> Result<ActivityTrace> {
    if trace.normalized {
        return Err(ReadoutError::AlreadyNormalized);
    }
    let mut out = trace.clone();
    let mut peak = 0.0f64;
    for v in &mut out.samples {
        peak = peak.max(v.abs());
        if peak > 0.0 {
            *v /= peak;
        }
    }
    out.normalized = true;
    out.norm_constant = peak;
    Ok(out)
}

/// Heading by trapezoidal integration of `scale * A`, starting from zero.
pub fn integrate_heading(trace: &ActivityTrace, scale: f64) -> Result<PoseTrack> {
    if !scale.is_finite() {
        return Err(ReadoutError::Scale(scale));
    }
    let mut yaw = 0.0;
    let mut prev_rate = None;
    let samples = trace
        .samples
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let rate = scale * a;
            if let Some(p) = prev_rate {
                yaw += 0.5 * (p + rate) * trace.dt;
            }
            prev_rate = Some(rate);
            PoseSample { t: trace.time(i), yaw, yaw_rate: rate }
        })
        .collect();
    Ok(PoseTrack { samples, rate_source: RateSource::Provided })
}

pub const ACTIVITY_HEADER: &str = "t_us,a_raw,a_norm";

pub fn write_activity_csv<W: Write>(raw: &ActivityTrace, norm: &ActivityTrace, out: &mut W) -> std::io::Result<()> {
    if !raw.same_grid(norm) {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, ReadoutError::GridMismatch));
    }
    writeln!(out, "{ACTIVITY_HEADER}")?;
    for (i, (a, b)) in raw.samples.iter().zip(&norm.samples).enumerate() {
        writeln!(out, "{},{},{}", raw.time(i), a, b)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn labels() -> HashMap<u32, Orientation> {
        HashMap::from([(0, Orientation::LeftToRight), (1, Orientation::RightToLeft)])
    }

    fn spike(t: u64, unit_id: u32) -> OutputSpike {
        OutputSpike { t, unit_id }
    }

    #[test]
    fn no_spikes_zero_trace() {
        let tr = integrate_diff(&[], &labels(), 0.75, 1e-3, 1_000_000).unwrap();
        assert_eq!(tr.len(), 1001);
        assert!(tr.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_lr_impulse() {
        let tau = 0.75;
        let dt = 1e-4;
        let tr = integrate_diff(&[spike(0, 0)], &labels(), tau, dt, 3_000_000).unwrap();
        assert_abs_diff_eq!(tr.samples[0], 1.0 / tau, epsilon = 1e-12);
        let r = dt / tau;
        for (k, &v) in tr.samples.iter().enumerate() {
            assert_abs_diff_eq!(v, (1.0 - r).powi(k as i32) / tau, epsilon = 1e-12);
            // (1 - r)^k = exp(-k r - k r^2 / 2 - ...), so the gap to the
            // continuous impulse response grows like k r^2 / 2.
            let exact = (-(k as f64) * r).exp() / tau;
            let bound = 1.01 * k as f64 * r * r / 2.0;
            assert!((v - exact).abs() <= bound * exact + 1e-15, "{k}: {v} vs {exact}");
        }
    }

    #[test]
    fn opposite_spikes_cancel() {
        let tr = integrate_diff(&[spike(500, 0), spike(500, 1)], &labels(), 0.01, 1e-4, 10_000).unwrap();
        assert!(tr.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        assert_eq!(integrate_diff(&[], &labels(), 0.0, 1e-3, 10).unwrap_err(), ReadoutError::Tau(0.0));
        assert!(matches!(integrate_diff(&[], &labels(), 1e-4, 1e-3, 10), Err(ReadoutError::Step { .. })));
        assert_eq!(
            integrate_diff(&[spike(0, 9)], &labels(), 0.1, 1e-3, 10).unwrap_err(),
            ReadoutError::UnlabeledUnit(9)
        );
        let a = ActivityTrace::zeros(1e-3, 0, 10_000).unwrap();
        let b = ActivityTrace::zeros(1e-3, 0, 20_000).unwrap();
        assert_eq!(combine(&[a, b]).unwrap_err(), ReadoutError::GridMismatch);
        assert_eq!(combine(&[]).unwrap_err(), ReadoutError::Empty);
    }

    #[test]
    fn normalize_examples() {
        let mut t = ActivityTrace::zeros(1e-3, 0, 2_000).unwrap();
        t.samples = vec![2.0, -4.0, 1.0];
        let n = normalize(&t).unwrap();
        assert_eq!(n.samples, vec![0.5, -1.0, 0.25]);
        assert_eq!(n.norm_constant, 4.0);
        assert!(!n.is_degenerate());
        assert_eq!(normalize(&n).unwrap_err(), ReadoutError::AlreadyNormalized);

        let z = normalize(&ActivityTrace::zeros(1e-3, 0, 2_000).unwrap()).unwrap();
        assert!(z.is_degenerate());
        assert!(z.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn causal_normalization_uses_running_max() {
        let mut t = ActivityTrace::zeros(1e-3, 0, 3_000).unwrap();
        t.samples = vec![0.0, 1.0, -2.0, 1.0];
        let n = normalize_causal(&t).unwrap();
        assert_eq!(n.samples, vec![0.0, 1.0, -1.0, 0.5]);
        assert_eq!(n.norm_constant, 2.0);
    }

    #[test]
    fn heading_integrals() {
        let mut t = ActivityTrace::zeros(1e-2, 0, 10_000_000).unwrap();
        t.samples.fill(1.0);
        let h = integrate_heading(&t, 0.1).unwrap();
        assert_abs_diff_eq!(h.samples.last().unwrap().yaw, 1.0, epsilon = 1e-12);
        assert_eq!(h.samples[5].yaw_rate, 0.1);

        let zero = integrate_heading(&ActivityTrace::zeros(1e-2, 0, 1_000_000).unwrap(), 3.0).unwrap();
        assert!(zero.samples.iter().all(|s| s.yaw == 0.0));

        // A = sin(w t): heading (1 - cos(w t)) / w, trapezoid error O(dt^2).
        let w = 2.0;
        // Trapezoid error: dt^2 / 12 * (f'(t) - f'(0)), at most dt^2 w / 6.
        for dt in [1e-2, 5e-3] {
            let bound = 1.01 * dt * dt * w / 6.0;
            let mut s = ActivityTrace::zeros(dt, 0, 5_000_000).unwrap();
            for (i, v) in s.samples.iter_mut().enumerate() {
                *v = (w * i as f64 * dt).sin();
            }
            let h = integrate_heading(&s, 1.0).unwrap();
            let err = h
                .samples
                .iter()
                .map(|p| (p.yaw - (1.0 - (w * p.t as f64 * 1e-6).cos()) / w).abs())
                .fold(0.0, f64::max);
            assert!(err < bound, "dt {dt}: {err}");
        }
        assert!(integrate_heading(&t, f64::NAN).is_err());
    }

    #[test]
    fn activity_csv_layout() {
        let raw = integrate_diff(&[spike(1_000, 0)], &labels(), 0.01, 1e-3, 2_000).unwrap();
        let norm = normalize(&raw).unwrap();
        let mut buf = Vec::new();
        write_activity_csv(&raw, &norm, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ACTIVITY_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "1000,100,1");
    }

    fn arb_spikes() -> impl Strategy<Value = Vec<OutputSpike>> {
        prop::collection::vec((0u64..200_000, 0u32..2).prop_map(|(t, u)| spike(t, u)), 0..60)
    }

    proptest! {
        #[test]
        fn sign_equivariance(spikes in arb_spikes()) {
            let flipped: HashMap<u32, Orientation> =
                labels().into_iter().map(|(k, o)| (k, o.flipped())).collect();
            let a = integrate_diff(&spikes, &labels(), 0.01, 1e-4, 200_000).unwrap();
            let b = integrate_diff(&spikes, &flipped, 0.01, 1e-4, 200_000).unwrap();
            for (x, y) in a.samples.iter().zip(&b.samples) {
                prop_assert_eq!(*x, -*y);
            }
        }

        #[test]
        fn linearity_over_spike_union(left in arb_spikes(), right in arb_spikes()) {
            let mut union = left.clone();
            union.extend(&right);
            let a = integrate_diff(&left, &labels(), 0.75, 1e-3, 200_000).unwrap();
            let b = integrate_diff(&right, &labels(), 0.75, 1e-3, 200_000).unwrap();
            let u = integrate_diff(&union, &labels(), 0.75, 1e-3, 200_000).unwrap();
            let sum = combine(&[a, b]).unwrap();
            for (x, y) in sum.samples.iter().zip(&u.samples) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn normalization_bound_and_extrema(spikes in arb_spikes()) {
            let raw = integrate_diff(&spikes, &labels(), 0.01, 1e-4, 200_000).unwrap();
            let n = normalize(&raw).unwrap();
            let peak = n.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if n.is_degenerate() {
                prop_assert_eq!(peak, 0.0);
            } else {
                prop_assert_eq!(peak, 1.0);
            }
            for (r, v) in raw.samples.iter().zip(&n.samples) {
                prop_assert_eq!(r.signum() * (*r != 0.0) as i32 as f64, v.signum() * (*v != 0.0) as i32 as f64);
            }
            let argmax = |v: &[f64]| v.iter().enumerate().fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b }).0;
            prop_assert_eq!(argmax(&raw.samples), argmax(&n.samples));
        }
    }
}

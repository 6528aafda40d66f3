//! Rotation error (ARRE), alignment, scale calibration and heading drift.
//!
//! ARRE is the mean over measurement steps of `|| log(P_i^T G_i) ||` where
//! `P_i` and `G_i` are the predicted and ground-truth rotations over step `i`.
//! The default norm is the rotation angle (the spectral norm of the skew log);
//! the Frobenius norm is `sqrt(2)` times that.

mod so3;

pub use so3::{rot_z, so3_exp, so3_log, so3_log_vec, RotationMatrix, ROTATION_TOL};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{PoseSample, PoseTrack, RateSource};
use crate::readout::{integrate_heading, ActivityTrace};
use crate::stats::pearson;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("not a rotation: |R^T R - I| = {orthogonality:e}, det = {det}")]
    NotRotation { orthogonality: f64, det: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("cannot extrapolate to t = {t} us outside [{start}, {end}]")]
    Extrapolation { t: u64, start: u64, end: u64 },
    #[error("prediction is identically zero, scale is undefined")]
    Degenerate,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("prediction and ground truth do not overlap in time")]
    NoOverlap,
    #[error("readout: {0}")]
    Readout(#[from] crate::readout::ReadoutError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArreNorm {
    #[default]
    Angle,
    Frobenius,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArreOptions {
    pub norm: ArreNorm,
}

pub fn arre(p: &[RotationMatrix], g: &[RotationMatrix], opts: ArreOptions) -> Result<f64> {
    if p.len() != g.len() {
        return Err(MetricsError::LengthMismatch(p.len(), g.len()));
    }
    if p.is_empty() {
        return Err(MetricsError::Empty);
    }
    let factor = match opts.norm {
        ArreNorm::Angle => 1.0,
        ArreNorm::Frobenius => std::f64::consts::SQRT_2,
    };
    let total: f64 = p.iter().zip(g).map(|(pi, gi)| (pi.transpose() * *gi).angle()).sum();
    Ok(factor * total / p.len() as f64)
}

/// Linear interpolation of `(times, values)` at each target time.
pub fn resample_linear(times: &[u64], values: &[f64], targets: &[u64]) -> Result<Vec<f64>> {
    if times.len() != values.len() {
        return Err(MetricsError::LengthMismatch(times.len(), values.len()));
    }
    let (&start, &end) = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(MetricsError::Empty),
    };
    targets
        .iter()
        .map(|&t| {
            if t < start || t > end {
                return Err(MetricsError::Extrapolation { t, start, end });
            }
            // First index with times[i] > t; the left neighbour is i - 1.
            let i = times.partition_point(|&s| s <= t);
            let l = i - 1;
            if times[l] == t || i == times.len() {
                return Ok(values[l]);
            }
            let w = (t - times[l]) as f64 / (times[i] - times[l]) as f64;
            Ok(values[l] + w * (values[i] - values[l]))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// rad/s per unit of activity.
    pub scale: f64,
    pub sign: i8,
}

/// Least-squares `s` minimising `sum (s a_i - rate_i)^2`.
pub fn calibrate_scale(pred: &[f64], gt_rate: &[f64]) -> Result<Calibration> {
    if pred.len() != gt_rate.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gt_rate.len()));
    }
    let aa: f64 = pred.iter().map(|a| a * a).sum();
    if aa == 0.0 {
        return Err(MetricsError::Degenerate);
    }
    let ar: f64 = pred.iter().zip(gt_rate).map(|(a, r)| a * r).sum();
    let scale = ar / aa;
    Ok(Calibration { scale, sign: if scale < 0.0 { -1 } else { 1 } })
}

/// Per-step yaw rotations `rot_z(rate_i * (t_{i+1} - t_i))`.
pub fn relative_rotations(times: &[u64], rates: &[f64]) -> Result<Vec<RotationMatrix>> {
    if times.len() != rates.len() {
        return Err(MetricsError::LengthMismatch(times.len(), rates.len()));
    }
    if times.len() < 2 {
        return Err(MetricsError::TooFewSamples(times.len()));
    }
    Ok(times
        .windows(2)
        .zip(rates)
        .map(|(w, r)| rot_z(r * (w[1] - w[0]) as f64 * 1e-6))
        .collect())
}

pub fn track_rotations(track: &PoseTrack) -> Result<Vec<RotationMatrix>> {
    relative_rotations(&track.times(), &track.rates())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub final_error: f64,
    pub max_error: f64,
    /// Heading correlation; `None` when either heading is constant.
    pub pearson_r: Option<f64>,
}

/// Heading errors on the ground-truth samples that fall inside the predicted
/// track's time span.
pub fn drift_report(pred: &PoseTrack, gt: &PoseTrack) -> Result<DriftReport> {
    let (start, end) = match (pred.samples.first(), pred.samples.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(MetricsError::NoOverlap),
    };
    let grid: Vec<&PoseSample> = gt.samples.iter().filter(|s| s.t >= start && s.t <= end).collect();
    if grid.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    let times: Vec<u64> = grid.iter().map(|s| s.t).collect();
    let truth: Vec<f64> = grid.iter().map(|s| s.yaw).collect();
    let est = resample_linear(&pred.times(), &pred.yaws(), &times)?;
    let errors: Vec<f64> = est.iter().zip(&truth).map(|(a, b)| (a - b).abs()).collect();
    Ok(DriftReport {
        final_error: *errors.last().unwrap_or(&0.0),
        max_error: errors.iter().copied().fold(0.0, f64::max),
        pearson_r: pearson(&est, &truth),
    })
}

/// Summary written next to each estimate run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arre_angle: f64,
    pub arre_frobenius: f64,
    pub scale: f64,
    pub sign: i8,
    /// Normalized activity against ground-truth yaw rate.
    pub pearson_r: Option<f64>,
    pub final_heading_error: f64,
    pub max_heading_error: f64,
}

/// Scores a normalized activity trace against a ground-truth pose track.
///
/// Everything is evaluated on the ground-truth samples inside the trace's time
/// span. With `scale = None` the activity-to-rad/s factor is fitted by least
/// squares. The predicted heading starts from the ground-truth yaw at the
/// first evaluated sample.
pub fn evaluate(trace: &ActivityTrace, gt: &PoseTrack, scale: Option<f64>) -> Result<MetricsReport> {
    let window: Vec<&PoseSample> = gt.samples.iter().filter(|s| s.t >= trace.t0 && s.t <= trace.end()).collect();
    if window.len() < 2 {
        return Err(MetricsError::TooFewSamples(window.len()));
    }
    let times: Vec<u64> = window.iter().map(|s| s.t).collect();
    let gt_rate: Vec<f64> = window.iter().map(|s| s.yaw_rate).collect();
    let activity = resample_linear(&trace.times(), &trace.samples, &times)?;
    let calibration = match scale {
        Some(s) => Calibration { scale: s, sign: if s < 0.0 { -1 } else { 1 } },
        None => calibrate_scale(&activity, &gt_rate)?,
    };
    let pred_rate: Vec<f64> = activity.iter().map(|a| a * calibration.scale).collect();
    let p = relative_rotations(&times, &pred_rate)?;
    let g = relative_rotations(&times, &gt_rate)?;

    let mut heading = integrate_heading(trace, calibration.scale)?;
    let anchor = resample_linear(&heading.times(), &heading.yaws(), &times[..1])?[0];
    let offset = window[0].yaw - anchor;
    for s in &mut heading.samples {
        s.yaw += offset;
    }
    let gt_window = PoseTrack {
        samples: window.iter().map(|s| **s).collect(),
        rate_source: RateSource::Provided,
    };
    let drift = drift_report(&heading, &gt_window)?;

    Ok(MetricsReport {
        arre_angle: arre(&p, &g, ArreOptions { norm: ArreNorm::Angle })?,
        arre_frobenius: arre(&p, &g, ArreOptions { norm: ArreNorm::Frobenius })?,
        scale: calibration.scale,
        sign: calibration.sign,
        pearson_r: pearson(&activity, &gt_rate),
        final_heading_error: drift.final_error,
        max_heading_error: drift.max_error,
    })
}

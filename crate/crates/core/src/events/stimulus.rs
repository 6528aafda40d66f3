//! Synthetic stimuli with exact ground truth: a sweeping vertical edge and a
//! field of random dots translating horizontally under a prescribed yaw rate.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Event, EventError, EventStream, Geometry, Polarity, PoseSample, PoseTrack, RateSource, Result};

/// Yaw rate as a function of time, in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum YawRateFn {
    Constant { rate: f64 },
    /// `amplitude * sin(2 pi t / period_s + phase_rad)`.
    Sinusoid { amplitude: f64, period_s: f64, #[serde(default)] phase_rad: f64 },
    /// Piecewise-linear through the knots, held constant outside them.
    Samples { t_us: Vec<u64>, rate: Vec<f64> },
}

impl YawRateFn {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            YawRateFn::Constant { rate } => rate.is_finite(),
            YawRateFn::Sinusoid { amplitude, period_s, phase_rad } => {
                amplitude.is_finite() && phase_rad.is_finite() && *period_s > 0.0
            }
            YawRateFn::Samples { t_us, rate } => {
                !t_us.is_empty()
                    && t_us.len() == rate.len()
                    && t_us.windows(2).all(|w| w[0] < w[1])
                    && rate.iter().all(|r| r.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(EventError::Stimulus(format!("invalid yaw rate function {self:?}")))
        }
    }

    /// Yaw rate at `t` seconds.
    pub fn rate(&self, t: f64) -> f64 {
        match self {
            YawRateFn::Constant { rate } => *rate,
            YawRateFn::Sinusoid { amplitude, period_s, phase_rad } => {
                amplitude * (2.0 * PI * t / period_s + phase_rad).sin()
            }
            YawRateFn::Samples { t_us, rate } => {
                let knots: Vec<f64> = t_us.iter().map(|&k| k as f64 * 1e-6).collect();
                match knots.iter().position(|&k| k > t) {
                    Some(0) => rate[0],
                    None => rate[rate.len() - 1],
                    Some(i) => {
                        let f = (t - knots[i - 1]) / (knots[i] - knots[i - 1]);
                        rate[i - 1] + f * (rate[i] - rate[i - 1])
                    }
                }
            }
        }
    }
}

/// Exact heading integral of a [`YawRateFn`], with cumulative sums cached for
/// the sampled variant.
struct Heading<'a> {
    rate: &'a YawRateFn,
    knots: Vec<f64>,
    cumulative: Vec<f64>,
}

impl<'a> Heading<'a> {
    fn new(rate: &'a YawRateFn) -> Self {
        let (knots, cumulative) = match rate {
            YawRateFn::Samples { t_us, rate: r } => {
                let knots: Vec<f64> = t_us.iter().map(|&k| k as f64 * 1e-6).collect();
                // Integral from 0 to each knot; the rate is r[0] before the first knot.
                let mut cumulative = Vec::with_capacity(knots.len());
                let mut acc = r[0] * knots[0];
                cumulative.push(acc);
                for i in 1..knots.len() {
                    acc += 0.5 * (r[i] + r[i - 1]) * (knots[i] - knots[i - 1]);
                    cumulative.push(acc);
                }
                (knots, cumulative)
            }
            _ => (Vec::new(), Vec::new()),
        };
        Self { rate, knots, cumulative }
    }

    /// Heading at `t` seconds, with heading 0 at t = 0.
    fn at(&self, t: f64) -> f64 {
        match self.rate {
            YawRateFn::Constant { rate } => rate * t,
            YawRateFn::Sinusoid { amplitude, period_s, phase_rad } => {
                let w = 2.0 * PI / period_s;
                amplitude / w * (phase_rad.cos() - (w * t + phase_rad).cos())
            }
            YawRateFn::Samples { rate, .. } => {
                let i = self.knots.partition_point(|&k| k <= t);
                if i == 0 {
                    rate[0] * t
                } else if i == self.knots.len() {
                    self.cumulative[i - 1] + rate[i - 1] * (t - self.knots[i - 1])
                } else {
                    let (t0, t1) = (self.knots[i - 1], self.knots[i]);
                    let (r0, r1) = (rate[i - 1], rate[i]);
                    let dt = t - t0;
                    self.cumulative[i - 1] + r0 * dt + 0.5 * (r1 - r0) / (t1 - t0) * dt * dt
                }
            }
        }
    }

    /// Times in (0, end) where the rate changes sign; between consecutive
    /// breaks the heading is monotone.
    fn monotone_breaks(&self, end: f64) -> Vec<f64> {
        let mut breaks = Vec::new();
        match self.rate {
            YawRateFn::Constant { .. } => {}
            YawRateFn::Sinusoid { period_s, phase_rad, .. } => {
                // Zeros at (k pi - phase) * period / (2 pi).
                let mut k = (phase_rad / PI).floor() as i64;
                loop {
                    let t = (k as f64 * PI - phase_rad) / (2.0 * PI) * period_s;
                    if t >= end {
                        break;
                    }
                    if t > 0.0 {
                        breaks.push(t);
                    }
                    k += 1;
                }
            }
            YawRateFn::Samples { rate, .. } => {
                for i in 0..self.knots.len() {
                    if rate[i] == 0.0 && self.knots[i] > 0.0 && self.knots[i] < end {
                        breaks.push(self.knots[i]);
                    }
                    if i + 1 < self.knots.len() && rate[i] * rate[i + 1] < 0.0 {
                        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
                        let t = t0 + (t1 - t0) * rate[i] / (rate[i] - rate[i + 1]);
                        if t > 0.0 && t < end {
                            breaks.push(t);
                        }
                    }
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StimulusKind {
    MovingEdge {
        velocity_px_per_s: f64,
    },
    YawDots {
        yaw_rate: YawRateFn,
        /// Dots per pixel, in (0, 1].
        dot_density: f64,
        /// Image shift in pixels per radian of yaw.
        px_per_rad: f64,
        /// Ground-truth pose sampling interval.
        #[serde(default = "default_pose_interval")]
        pose_interval_us: u64,
    },
}

fn default_pose_interval() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub geometry: Geometry,
    pub duration_us: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub kind: StimulusKind,
}

impl StimulusSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(EventError::Stimulus(m.to_string()));
        if self.duration_us == 0 {
            return fail("duration_us must be positive");
        }
        if self.geometry.width == 0 || self.geometry.height == 0 {
            return fail("empty sensor geometry");
        }
        match &self.kind {
            StimulusKind::MovingEdge { velocity_px_per_s } => {
                if !velocity_px_per_s.is_finite() {
                    return fail("velocity must be finite");
                }
            }
            StimulusKind::YawDots { yaw_rate, dot_density, px_per_rad, pose_interval_us } => {
                if !(*dot_density > 0.0 && *dot_density <= 1.0) {
                    return fail("dot_density must lie in (0, 1]");
                }
                if !(*px_per_rad > 0.0 && px_per_rad.is_finite()) {
                    return fail("px_per_rad must be positive");
                }
                if *pose_interval_us == 0 {
                    return fail("pose_interval_us must be positive");
                }
                yaw_rate.validate()?;
            }
        }
        Ok(())
    }
}

/// A vertical edge sweeping horizontally: column `x` fires once per row at
/// `round(x / v)` (or from the right border for v < 0). Events after
/// `duration_us` are dropped.
pub fn gen_moving_edge(spec: &StimulusSpec) -> Result<EventStream> {
    spec.validate()?;
    let v = match spec.kind {
        StimulusKind::MovingEdge { velocity_px_per_s } => velocity_px_per_s,
        _ => return Err(EventError::Stimulus("expected a moving_edge stimulus".into())),
    };
    if v == 0.0 {
        return Err(EventError::Stimulus("zero velocity".into()));
    }
    let g = spec.geometry;
    let speed = v.abs();
    let columns: Vec<u16> = if v > 0.0 {
        (0..g.width).collect()
    } else {
        (0..g.width).rev().collect()
    };
    let mut events = Vec::with_capacity(g.pixel_count());
    for x in columns {
        let travelled = if v > 0.0 { x } else { g.width - 1 - x };
        let t = (travelled as f64 / speed * 1e6).round() as u64;
        if t > spec.duration_us {
            break;
        }
        events.extend((0..g.height).map(|y| Event::new(t, x, y, Polarity::On)));
    }
    EventStream::new(g, events)
}

/// Random dots on a horizontally periodic scene, shifted by
/// `px_per_rad * heading(t)`. A dot emits one event each time it enters a new
/// pixel column; crossing times are solved on monotone stretches of the
/// heading and rounded to the nearest microsecond.
pub fn gen_yaw_dots(spec: &StimulusSpec) -> Result<(EventStream, PoseTrack)> {
    spec.validate()?;
    let (yaw_rate, dot_density, px_per_rad, pose_interval_us) = match &spec.kind {
        StimulusKind::YawDots { yaw_rate, dot_density, px_per_rad, pose_interval_us } => {
            (yaw_rate, *dot_density, *px_per_rad, *pose_interval_us)
        }
        _ => return Err(EventError::Stimulus("expected a yaw_dots stimulus".into())),
    };
    let g = spec.geometry;
    let width = g.width as f64;
    let end = spec.duration_us as f64 * 1e-6;
    let heading = Heading::new(yaw_rate);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_dots = (dot_density * g.pixel_count() as f64).round() as usize;
    let dots: Vec<(f64, u16)> = (0..n_dots)
        .map(|_| (rng.random_range(0.0..width), rng.random_range(0..g.height)))
        .collect();

    let mut bounds = vec![0.0];
    bounds.extend(heading.monotone_breaks(end));
    bounds.push(end);
    let shifts: Vec<f64> = bounds.iter().map(|&t| px_per_rad * heading.at(t)).collect();

    let mut events = Vec::new();
    for &(x0, y) in &dots {
        for seg in 0..bounds.len() - 1 {
            let (a, b) = (bounds[seg], bounds[seg + 1]);
            let (xa, xb) = (x0 + shifts[seg], x0 + shifts[seg + 1]);
            let (fa, fb) = (xa.floor() as i64, xb.floor() as i64);
            // Each boundary k is solved on [a, b]; the entered column is k going
            // right and k - 1 going left.
            let crossings: Box<dyn Iterator<Item = (i64, i64)>> = if fb > fa {
                Box::new((fa + 1..=fb).map(|k| (k, k)))
            } else {
                Box::new((fb + 1..=fa).rev().map(|k| (k, k - 1)))
            };
            for (boundary, entered) in crossings {
                let target = boundary as f64 - x0;
                let t = solve_monotone(|t| px_per_rad * heading.at(t), target, a, b);
                let t_us = (t * 1e6).round() as u64;
                if t_us > spec.duration_us {
                    continue;
                }
                let x = entered.rem_euclid(g.width as i64) as u16;
                events.push(Event::new(t_us, x, y, Polarity::On));
            }
        }
    }
    // Stable: ties keep dot order, then per-dot time order.
    events.sort_by_key(|e| e.t);
    let stream = EventStream::new(g, events)?;

    let mut samples = Vec::new();
    let mut yaw = 0.0;
    let mut prev: Option<(u64, f64)> = None;
    let mut t = 0u64;
    while t <= spec.duration_us {
        let rate = yaw_rate.rate(t as f64 * 1e-6);
        if let Some((tp, rp)) = prev {
            yaw += 0.5 * (rate + rp) * (t - tp) as f64 * 1e-6;
        }
        samples.push(PoseSample { t, yaw, yaw_rate: rate });
        prev = Some((t, rate));
        t += pose_interval_us;
    }
    let track = PoseTrack::new(samples, RateSource::Provided)?;
    Ok((stream, track))
}

/// Bisection for `f(t) = target` on `[a, b]` where `f` is monotone.
fn solve_monotone(f: impl Fn(f64) -> f64, target: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (a, b);
    let increasing = f(b) >= f(a);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

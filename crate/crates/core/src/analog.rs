//! Closed-form model of the subthreshold CMOS TDE synapse.
//!
//! Two differential pair integrators in series. The FAC pulse drives the
//! first, whose output `I_gain^TRG` becomes the gain of the second; the TRG
//! pulse then draws a current `I^TDE` whose peak falls off as
//! `exp(-delay / tau_FAC)`.
//!
//! In the regime `I_w^FAC >> I_tau^FAC` the first stage is linear:
//!
//! ```text
//! tau_FAC dI/dt + I = (I_w^FAC / I_tau^FAC) I_gain^FAC   during the FAC pulse
//! tau_TRG dJ/dt + J = (I_w^TRG / I_tau^TRG) I(t)          during the TRG pulse
//! tau = U_T C / (kappa I_tau)
//! ```
//!
//! Numerical ODE integration with an adaptive Dormand-Prince scheme is
//! provided as an oracle for the closed forms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{linear_fit, LinearFit};

#[derive(Debug, Error, PartialEq)]
pub enum AnalogError {
    #[error("invalid bias: {0}")]
    Bias(String),
    #[error("invalid pulse window [{0}, {1}]")]
    Window(f64, f64),
    #[error("trigger pulse at {trigger} s starts before the facilitator pulse ends at {fac_end} s")]
    Ordering { trigger: f64, fac_end: f64 },
    #[error("negative time {0} s")]
    NegativeTime(f64),
    #[error("invalid sweep: {0}")]
    Sweep(String),
}

pub type Result<T> = std::result::Result<T, AnalogError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpiBiases {
    pub i_w_fac: f64,
    pub i_gain_fac: f64,
    pub i_tau_fac: f64,
    pub i_w_trg: f64,
    pub i_tau_trg: f64,
    pub c_fac: f64,
    pub c_trg: f64,
    /// Thermal voltage, V.
    pub u_t: f64,
    /// Subthreshold slope factor.
    pub kappa: f64,
}

impl Default for DpiBiases {
    /// On-chip biases (I_tau = 2 pA, I_w = 4 nA, I_gain = 10 pA) with room
    /// temperature U_T, kappa = 0.7 and 100 fF capacitors.
    fn default() -> Self {
        Self {
            i_w_fac: 4e-9,
            i_gain_fac: 10e-12,
            i_tau_fac: 2e-12,
            i_w_trg: 4e-9,
            i_tau_trg: 2e-12,
            c_fac: 100e-15,
            c_trg: 100e-15,
            u_t: 25.85e-3,
            kappa: 0.7,
        }
    }
}

impl DpiBiases {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("i_w_fac", self.i_w_fac),
            ("i_gain_fac", self.i_gain_fac),
            ("i_tau_fac", self.i_tau_fac),
            ("i_w_trg", self.i_w_trg),
            ("i_tau_trg", self.i_tau_trg),
            ("c_fac", self.c_fac),
            ("c_trg", self.c_trg),
            ("u_t", self.u_t),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AnalogError::Bias(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(AnalogError::Bias(format!("kappa must be in (0, 1], got {}", self.kappa)));
        }
        Ok(())
    }

    pub fn tau_fac(&self) -> f64 {
        self.u_t * self.c_fac / (self.kappa * self.i_tau_fac)
    }

    pub fn tau_trg(&self) -> f64 {
        self.u_t * self.c_trg / (self.kappa * self.i_tau_trg)
    }

    /// Long-pulse limit of `I_gain^TRG`.
    pub fn gain_asymptote(&self) -> f64 {
        self.i_w_fac * self.i_gain_fac / self.i_tau_fac
    }

    fn trg_ratio(&self) -> f64 {
        self.i_w_trg / self.i_tau_trg
    }
}

/// Input pulse from `t_minus` to `t_plus`, s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseWindow {
    pub t_minus: f64,
    pub t_plus: f64,
}

impl PulseWindow {
    pub fn new(t_minus: f64, t_plus: f64) -> Result<Self> {
        if !(t_minus >= 0.0 && t_plus > t_minus && t_plus.is_finite()) {
            return Err(AnalogError::Window(t_minus, t_plus));
        }
        Ok(Self { t_minus, t_plus })
    }

    pub fn width(&self) -> f64 {
        self.t_plus - self.t_minus
    }
}

/// Resting currents before any input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RestCurrents {
    /// `I_gain^TRG` before the FAC pulse.
    pub gain: f64,
    /// `I^TDE` before the TRG pulse.
    pub tde: f64,
}

/// `I_gain^TRG(t)`: charges towards the asymptote during the pulse and relaxes
/// back to `initial` afterwards. Equal to `initial` before the pulse.
pub fn trg_gain_response(t: f64, window: PulseWindow, biases: &DpiBiases, initial: f64) -> Result<f64> {
    biases.validate()?;
    if t < 0.0 {
        return Err(AnalogError::NegativeTime(t));
    }
    Ok(gain_unchecked(t, window, biases, initial))
}

fn gain_unchecked(t: f64, w: PulseWindow, b: &DpiBiases, initial: f64) -> f64 {
    let tau = b.tau_fac();
    let discharge = |t: f64| {
        let e = (-(t - w.t_minus) / tau).exp();
        b.gain_asymptote() * (1.0 - e) + initial * e
    };
    if t < w.t_minus {
        initial
    } else if t < w.t_plus {
        discharge(t)
    } else {
        let peak = discharge(w.t_plus);
        initial + (peak - initial) * (-(t - w.t_plus) / tau).exp()
    }
}

/// `I^TDE(t)` for a TRG pulse arriving after the FAC pulse has ended.
pub fn tde_current_response(
    t: f64,
    fac: PulseWindow,
    trg: PulseWindow,
    biases: &DpiBiases,
    rest: RestCurrents,
) -> Result<f64> {
    biases.validate()?;
    if t < 0.0 {
        return Err(AnalogError::NegativeTime(t));
    }
    if trg.t_minus < fac.t_plus {
        return Err(AnalogError::Ordering { trigger: trg.t_minus, fac_end: fac.t_plus });
    }
    Ok(tde_unchecked(t, fac, trg, biases, rest))
}

fn tde_unchecked(t: f64, fac: PulseWindow, trg: PulseWindow, b: &DpiBiases, rest: RestCurrents) -> f64 {
    let tau_f = b.tau_fac();
    let tau_t = b.tau_trg();
    let k = b.trg_ratio();
    let i_minus = rest.gain;
    let delta = gain_unchecked(fac.t_plus, fac, b, i_minus) - i_minus;
    // Gain excess at the start of the trigger pulse.
    let excess = delta * (-(trg.t_minus - fac.t_plus) / tau_f).exp();
    let discharge = |t: f64| {
        let s = t - trg.t_minus;
        let et = (-s / tau_t).exp();
        rest.tde * et + k * i_minus * (1.0 - et) + k * excess * two_exp(s, tau_f, tau_t)
    };
    if t < trg.t_minus {
        rest.tde
    } else if t < trg.t_plus {
        discharge(t)
    } else {
        discharge(trg.t_plus) * (-(t - trg.t_plus) / tau_t).exp()
    }
}

/// `tau_f (e^{-s/tau_f} - e^{-s/tau_t}) / (tau_f - tau_t)`, with the removable
/// singularity at `tau_f = tau_t` handled by a first-order expansion.
fn two_exp(s: f64, tau_f: f64, tau_t: f64) -> f64 {
    let eps = tau_f - tau_t;
    if eps.abs() < 1e-6 * tau_f {
        let x = tau_t;
        let e = (-s / x).exp();
        let d1 = s / (x * x) * e;
        let d2 = e * (s * s / x.powi(4) - 2.0 * s / x.powi(3));
        tau_f * (d1 + 0.5 * eps * d2)
    } else {
        tau_f * ((-s / tau_f).exp() - (-s / tau_t).exp()) / eps
    }
}

/// FAC pulse `[0, w]`, TRG pulse `[w + delay, 2w + delay]`, both stages at
/// rest (zero) beforehand. Returns `(delay, I^TDE at the end of the TRG
/// pulse)`.
pub fn peak_current_vs_delay(delays: &[f64], biases: &DpiBiases, pulse_width: f64) -> Result<Vec<(f64, f64)>> {
    biases.validate()?;
    if !(pulse_width > 0.0 && pulse_width.is_finite()) {
        return Err(AnalogError::Sweep(format!("pulse width must be positive, got {pulse_width}")));
    }
    let fac = PulseWindow::new(0.0, pulse_width)?;
    delays
        .iter()
        .map(|&delay| {
            if !(delay >= 0.0 && delay.is_finite()) {
                return Err(AnalogError::Sweep(format!("delay must be nonnegative, got {delay}")));
            }
            let start = pulse_width + delay;
            let trg = PulseWindow::new(start, start + pulse_width)?;
            Ok((delay, tde_unchecked(trg.t_plus, fac, trg, biases, RestCurrents::default())))
        })
        .collect()
}

/// Fit of `ln(peak)` against delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakLawFit {
    pub slope: f64,
    pub expected_slope: f64,
    pub relative_error: f64,
    pub r2: f64,
}

pub fn fit_peak_law(sweep: &[(f64, f64)], biases: &DpiBiases) -> Result<PeakLawFit> {
    if sweep.iter().any(|&(_, p)| !(p > 0.0)) {
        return Err(AnalogError::Sweep("peaks must be positive to take logarithms".into()));
    }
    let x: Vec<f64> = sweep.iter().map(|p| p.0).collect();
    let y: Vec<f64> = sweep.iter().map(|p| p.1.ln()).collect();
    let LinearFit { slope, r2, .. } =
        linear_fit(&x, &y).ok_or_else(|| AnalogError::Sweep("need at least two distinct delays".into()))?;
    let expected_slope = -1.0 / biases.tau_fac();
    Ok(PeakLawFit { slope, expected_slope, relative_error: ((slope - expected_slope) / expected_slope).abs(), r2 })
}

/// Adaptive Dormand-Prince 5(4) integration of `y' = f(t, y)` from `t0` to
/// `t1`, returning `y(t1)`.
pub fn dopri5(f: impl Fn(f64, f64) -> f64, t0: f64, y0: f64, t1: f64, rtol: f64, atol: f64) -> f64 {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let span = t1 - t0;
    if span <= 0.0 {
        return y0;
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = span / 100.0;
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let mut k = [0.0; 7];
        for i in 0..7 {
            let yi = y + h * (0..i).map(|j| A[i][j] * k[j]).sum::<f64>();
            k[i] = f(t + C[i] * h, yi);
        }
        let y5 = y + h * (0..7).map(|i| B5[i] * k[i]).sum::<f64>();
        let y4 = y + h * (0..7).map(|i| B4[i] * k[i]).sum::<f64>();
        let scale = atol + rtol * y.abs().max(y5.abs());
        let err = (y5 - y4).abs() / scale;
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < span * 1e-14 {
            h = span * 1e-14;
        }
    }
    y
}

/// Integrates piecewise over consecutive phases, each `(end time, rhs)`, and
/// samples the solution on `samples` (sorted, within the phases).
fn integrate_phases(t0: f64, y0: f64, phases: &[(f64, &dyn Fn(f64, f64) -> f64)], samples: &[f64]) -> Vec<f64> {
    let (rtol, atol) = (1e-10, 1e-24);
    let mut out = Vec::with_capacity(samples.len());
    let mut t = t0;
    let mut y = y0;
    let mut next = samples.iter().peekable();
    for &(end, rhs) in phases {
        while let Some(&&s) = next.peek() {
            if s > end {
                break;
            }
            y = dopri5(rhs, t, y, s, rtol, atol);
            t = s;
            out.push(y);
            next.next();
        }
        y = dopri5(rhs, t, y, end, rtol, atol);
        t = end;
    }
    out
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn relative_deviation(closed: &[f64], ode: &[f64]) -> f64 {
    let scale = ode.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = closed.iter().zip(ode).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / scale
}

/// Closed-form `I_gain^TRG` against the unsimplified first-stage ODE
///
/// ```text
/// tau_FAC dI/dt = I ((I_w / I_tau) / (1 + I / I_gain^FAC) - 1)   during the pulse
/// tau_FAC dI/dt = -I                                             otherwise
/// ```
///
/// over `[0, t_end]`. `initial` must be positive since zero is a fixed point
/// of the full ODE. Returns `max |closed - ode| / max |ode|`.
pub fn gain_ode_deviation(window: PulseWindow, biases: &DpiBiases, initial: f64, t_end: f64) -> Result<f64> {
    biases.validate()?;
    if !(initial > 0.0) || t_end <= window.t_plus {
        return Err(AnalogError::Sweep("need a positive resting current and t_end past the pulse".into()));
    }
    let b = *biases;
    let tau = b.tau_fac();
    let ratio = b.i_w_fac / b.i_tau_fac;
    let on = move |_: f64, i: f64| i / tau * (ratio / (1.0 + i / b.i_gain_fac) - 1.0);
    let off = move |_: f64, i: f64| -i / tau;
    let samples = linspace(0.0, t_end, 2001);
    let ode = integrate_phases(0.0, initial, &[(window.t_minus, &off), (window.t_plus, &on), (t_end, &off)], &samples);
    let closed: Vec<f64> = samples.iter().map(|&t| gain_unchecked(t, window, &b, initial)).collect();
    Ok(relative_deviation(&closed, &ode))
}

/// Closed-form `I^TDE` against numerical integration of the linear second
/// stage driven by the closed-form `I_gain^TRG(t)`. Returns
/// `max |closed - ode| / max |ode|` over `[0, t_end]`.
pub fn tde_ode_deviation(
    fac: PulseWindow,
    trg: PulseWindow,
    biases: &DpiBiases,
    rest: RestCurrents,
    t_end: f64,
) -> Result<f64> {
    tde_current_response(0.0, fac, trg, biases, rest)?;
    if t_end <= trg.t_plus {
        return Err(AnalogError::Sweep("t_end must be past the trigger pulse".into()));
    }
    let b = *biases;
    let tau = b.tau_trg();
    let k = b.trg_ratio();
    let on = move |t: f64, j: f64| (k * gain_unchecked(t, fac, &b, rest.gain) - j) / tau;
    let off = move |_: f64, j: f64| -j / tau;
    let hold = |_: f64, _: f64| 0.0;
    let samples = linspace(0.0, t_end, 2001);
    let ode = integrate_phases(0.0, rest.tde, &[(trg.t_minus, &hold), (trg.t_plus, &on), (t_end, &off)], &samples);
    let closed: Vec<f64> = samples.iter().map(|&t| tde_unchecked(t, fac, trg, &b, rest)).collect();
    Ok(relative_deviation(&closed, &ode))
}

pub const SWEEP_HEADER: &str = "delay_s,peak_a";

pub fn write_sweep_csv<W: std::io::Write>(sweep: &[(f64, f64)], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for (d, p) in sweep {
        writeln!(out, "{d},{p:e}")?;
    }
    Ok(())
}

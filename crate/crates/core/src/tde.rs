//! The Time Difference Encoder unit.
//!
//! A FAC event adds `w_fac` to the facilitation trace. A TRG event adds
//! `w_trg * i_fac` to the trigger trace, so the trigger is gated by how recently
//! the unit was facilitated. The trigger trace drives a leaky integrate-and-fire
//! membrane:
//!
//! ```text
//! d i_fac / dt = -i_fac / tau_fac + w_fac * sum delta(t - t_fac)
//! d i_trg / dt = -i_trg / tau_trg + i_fac(t) * w_trg * sum delta(t - t_trg)
//! d u / dt     = -u / tau_m + gain * i_trg
//! ```
//!
//! The unit spikes when `u >= u_theta`, resets `u` to zero and holds it there
//! for `t_ref`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Traces and membrane values below this are flushed to zero after each Euler
/// step so idle units return to an exact all-zero state.
pub const FLUSH_FLOOR: f64 = 1e-12;

/// Relative activity level at which a pair simulation counts as quiescent.
pub const QUIESCENCE: f64 = 1e-6;

/// Default Euler step, 0.1 ms.
pub const DEFAULT_DT: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum TdeError {
    #[error("invalid TDE parameters: {0}")]
    Params(String),
    #[error("Euler step {dt} s is unstable, must be below {limit} s")]
    UnstableStep { dt: f64, limit: f64 },
    #[error("step {0} s is not a positive whole number of microseconds")]
    StepResolution(f64),
    #[error("negative elapsed time {0} s")]
    NegativeElapsed(f64),
    #[error("negative time difference {0} s")]
    NegativeDelta(f64),
}

pub type Result<T> = std::result::Result<T, TdeError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdeParams {
    /// Facilitation time constant, s.
    pub tau_fac: f64,
    /// Trigger time constant, s.
    pub tau_trg: f64,
    /// Membrane time constant, s.
    pub tau_m: f64,
    pub w_fac: f64,
    pub w_trg: f64,
    /// Firing threshold.
    pub u_theta: f64,
    /// Refractory period, s.
    pub t_ref: f64,
    /// Membrane input gain on the trigger trace, 1/s.
    pub gain: f64,
}

impl Default for TdeParams {
    /// Time constants, weights, threshold and refractory period of the Brian2
    /// on-chip comparison model; `gain` puts a coincident pair at a burst of 32
    /// spikes and silences the unit beyond roughly 50 ms.
    fn default() -> Self {
        Self {
            tau_fac: 0.020,
            tau_trg: 0.020,
            tau_m: 0.020,
            w_fac: 1.0,
            w_trg: 1.0,
            u_theta: 50.0,
            t_ref: 1e-4,
            gain: 1e5,
        }
    }
}

impl TdeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_fac", self.tau_fac),
            ("tau_trg", self.tau_trg),
            ("tau_m", self.tau_m),
            ("u_theta", self.u_theta),
            ("gain", self.gain),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TdeError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("t_ref", self.t_ref), ("w_fac", self.w_fac), ("w_trg", self.w_trg)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TdeError::Params(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    fn min_tau(&self) -> f64 {
        self.tau_fac.min(self.tau_trg).min(self.tau_m)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TdeState {
    pub i_fac: f64,
    pub i_trg: f64,
    pub u: f64,
    /// End of the refractory window, us.
    pub refrac_until: u64,
}

impl TdeState {
    pub fn is_zero(&self) -> bool {
        self.i_fac == 0.0 && self.i_trg == 0.0 && self.u == 0.0
    }

    #[inline]
    pub fn facilitate(&mut self, params: &TdeParams) {
        self.i_fac += params.w_fac;
    }

    #[inline]
    pub fn trigger(&mut self, params: &TdeParams) {
        self.i_trg += self.i_fac * params.w_trg;
    }
}

pub fn on_fac(state: TdeState, params: &TdeParams) -> TdeState {
    let mut next = state;
    next.facilitate(params);
    next
}

pub fn on_trg(state: TdeState, params: &TdeParams) -> TdeState {
    let mut next = state;
    next.trigger(params);
    next
}

/// Forward-Euler stepper with the per-step factors precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Euler {
    params: TdeParams,
    dt: f64,
    dt_us: u64,
    t_ref_us: u64,
    fac_keep: f64,
    trg_keep: f64,
}

impl Euler {
    /// `dt` must be a whole number of microseconds and below half the
    /// smallest time constant.
    pub fn new(params: TdeParams, dt: f64) -> Result<Self> {
        params.validate()?;
        let limit = params.min_tau() / 2.0;
        if !(dt > 0.0) {
            return Err(TdeError::StepResolution(dt));
        }
        if dt >= limit {
            return Err(TdeError::UnstableStep { dt, limit });
        }
        let dt_us = micros(dt).ok_or(TdeError::StepResolution(dt))?;
        Ok(Self {
            params,
            dt,
            dt_us,
            t_ref_us: (params.t_ref * 1e6).round() as u64,
            fac_keep: 1.0 - dt / params.tau_fac,
            trg_keep: 1.0 - dt / params.tau_trg,
        })
    }

    pub fn params(&self) -> &TdeParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dt_us(&self) -> u64 {
        self.dt_us
    }

    /// Advances one step ending at `now` (us). Derivatives use the state at
    /// the start of the step. Returns whether the unit spiked at `now`.
    #[inline]
    pub fn step(&self, s: &mut TdeState, now: u64) -> bool {
        let p = &self.params;
        let (i_trg, u) = (s.i_trg, s.u);
        s.i_fac = flush(s.i_fac * self.fac_keep);
        s.i_trg = flush(i_trg * self.trg_keep);
        if now.saturating_sub(self.dt_us) < s.refrac_until {
            s.u = 0.0;
            return false;
        }
        let u = u + self.dt * (-u / p.tau_m + p.gain * i_trg);
        if u >= p.u_theta {
            s.u = 0.0;
            s.refrac_until = now + self.t_ref_us;
            true
        } else {
            s.u = flush(u);
            false
        }
    }
}

#[inline]
fn flush(v: f64) -> f64 {
    if v.abs() < FLUSH_FLOOR {
        0.0
    } else {
        v
    }
}

pub(crate) fn micros(seconds: f64) -> Option<u64> {
    let us = seconds * 1e6;
    let rounded = us.round();
    if rounded >= 1.0 && (us - rounded).abs() < 1e-6 {
        Some(rounded as u64)
    } else {
        None
    }
}

/// One Euler step ending at `now` (us). See [`Euler::step`].
pub fn step_euler(state: TdeState, params: &TdeParams, dt: f64, now: u64) -> Result<(TdeState, bool)> {
    let euler = Euler::new(*params, dt)?;
    let mut next = state;
    let spiked = euler.step(&mut next, now);
    Ok((next, spiked))
}

/// Closed-form evolution over an input-free interval. Threshold crossings and
/// the refractory clamp are not applied; this is an oracle for the traces.
pub fn decay_exact(state: TdeState, params: &TdeParams, elapsed: f64) -> Result<TdeState> {
    if elapsed < 0.0 {
        return Err(TdeError::NegativeElapsed(elapsed));
    }
    let p = params;
    let e_fac = (-elapsed / p.tau_fac).exp();
    let e_trg = (-elapsed / p.tau_trg).exp();
    let e_m = (-elapsed / p.tau_m).exp();
    let drive = p.gain * state.i_trg;
    let u = if (p.tau_m - p.tau_trg).abs() < 1e-9 * p.tau_m {
        let tau = 0.5 * (p.tau_m + p.tau_trg);
        state.u * e_m + drive * elapsed * (-elapsed / tau).exp()
    } else {
        state.u * e_m + drive * (e_trg - e_m) / (1.0 / p.tau_m - 1.0 / p.tau_trg)
    };
    Ok(TdeState { i_fac: state.i_fac * e_fac, i_trg: state.i_trg * e_trg, u, ..state })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// FAC-to-TRG time difference, s.
    pub delta_t: f64,
    pub spike_count: usize,
    /// First spike time after the TRG event, s.
    pub first_spike_latency: Option<f64>,
}

/// Inputs delivered to a single unit at given step indices.
#[derive(Debug, Clone, Copy)]
pub struct PairInput {
    pub fac_step: u64,
    pub trg_step: u64,
}

impl PairInput {
    pub fn from_delta(delta_t: f64, dt_us: u64) -> Result<Self> {
        if delta_t < 0.0 {
            return Err(TdeError::NegativeDelta(delta_t));
        }
        let delta_us = (delta_t * 1e6).round() as u64;
        Ok(Self { fac_step: 0, trg_step: delta_us / dt_us })
    }
}

/// Simulates a single FAC/TRG pair for `steps` steps and returns the state at
/// the end of every step plus the spike step indices. FAC is applied before
/// TRG when both fall in the same step.
pub fn simulate_pair(euler: &Euler, input: PairInput, steps: u64) -> (Vec<TdeState>, Vec<u64>) {
    let mut s = TdeState::default();
    let mut trace = Vec::with_capacity(steps as usize);
    let mut spikes = Vec::new();
    for k in 0..steps {
        apply_pair_inputs(&mut s, euler.params(), input, k);
        if euler.step(&mut s, (k + 1) * euler.dt_us()) {
            spikes.push(k);
        }
        trace.push(s);
    }
    (trace, spikes)
}

fn apply_pair_inputs(s: &mut TdeState, params: &TdeParams, input: PairInput, k: u64) {
    if k == input.fac_step {
        s.facilitate(params);
    }
    if k == input.trg_step {
        s.trigger(params);
    }
}

/// For each time difference: fresh unit, FAC at 0, TRG at `delta_t`, run until
/// the membrane and trigger trace have decayed below [`QUIESCENCE`].
pub fn run_pair_sweep(delta_ts: &[f64], params: &TdeParams, dt: f64) -> Result<Vec<SweepResult>> {
    let euler = Euler::new(*params, dt)?;
    let dt_us = euler.dt_us();
    // Hard stop well past any plausible burst.
    let max_tail = (50.0 * params.tau_fac.max(params.tau_trg).max(params.tau_m) / dt).ceil() as u64;
    delta_ts
        .iter()
        .map(|&delta_t| {
            let input = PairInput::from_delta(delta_t, dt_us)?;
            let mut s = TdeState::default();
            let mut spikes = Vec::new();
            let mut k = 0u64;
            loop {
                apply_pair_inputs(&mut s, params, input, k);
                let now = (k + 1) * dt_us;
                if euler.step(&mut s, now) {
                    spikes.push(now);
                }
                k += 1;
                let quiet = s.u < QUIESCENCE * params.u_theta && s.i_trg < QUIESCENCE;
                if k > input.trg_step && (quiet || k > input.trg_step + max_tail) {
                    break;
                }
            }
            let trg_time = input.trg_step * dt_us;
            Ok(SweepResult {
                delta_t,
                spike_count: spikes.len(),
                first_spike_latency: spikes.first().map(|&t| (t - trg_time) as f64 * 1e-6),
            })
        })
        .collect()
}

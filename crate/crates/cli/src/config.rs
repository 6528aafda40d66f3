//! Experiment configuration. One JSON document drives every subcommand; the
//! fully resolved form (all defaults filled in) is written back as
//! `run_manifest.json`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tde_egomotion::analog::DpiBiases;
use tde_egomotion::events::{EventFormat, Geometry, StimulusSpec};
use tde_egomotion::metrics::ArreOptions;
use tde_egomotion::network::PolarityFilter;
use tde_egomotion::tde::{TdeParams, DEFAULT_DT};

/// Readout time constant for the two-box network, s.
pub const TWO_BOX_TAU_A: f64 = 0.75;
/// Readout time constant for the dense network, s.
pub const DENSE_TAU_A: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub input: Option<InputSpec>,
    #[serde(default)]
    pub network: Option<NetworkSpec>,
    #[serde(default)]
    pub tde: TdeParams,
    /// Euler step of the network and readout, s.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub polarity: PolarityFilter,
    #[serde(default)]
    pub readout: ReadoutSpec,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub analog: AnalogSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input: None,
            network: None,
            tde: TdeParams::default(),
            dt: DEFAULT_DT,
            polarity: PolarityFilter::default(),
            readout: ReadoutSpec::default(),
            metrics: MetricsSpec::default(),
            sweep: SweepSpec::default(),
            analog: AnalogSpec::default(),
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    File {
        path: PathBuf,
        /// Inferred from the extension when absent.
        #[serde(default)]
        format: Option<EventFormat>,
        /// Required for CSV, checked against the header for EVT1.
        #[serde(default)]
        geometry: Option<Geometry>,
        /// Readout window; defaults to the last event timestamp.
        #[serde(default)]
        duration_us: Option<u64>,
    },
    Stimulus(StimulusSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSpec {
    TwoBox {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_stride")]
        stride: u16,
    },
    Dense {
        #[serde(default = "default_stride")]
        stride: u16,
    },
}

fn default_stride() -> u16 {
    2
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the maximum |A| over the whole run.
    #[default]
    Offline,
    /// Divide by the running maximum of |A|.
    Causal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSpec {
    /// Defaults to 0.75 s for two-box and 10 ms for dense networks.
    #[serde(default)]
    pub tau_a: Option<f64>,
    /// +1 keeps LR positive, -1 flips the trace.
    #[serde(default = "default_sign")]
    pub sign: f64,
    #[serde(default)]
    pub normalization: Normalization,
    /// Fixed rad/s per unit activity. Fitted against ground truth when absent.
    #[serde(default)]
    pub scale: Option<f64>,
}

fn default_sign() -> f64 {
    1.0
}

impl Default for ReadoutSpec {
    fn default() -> Self {
        Self { tau_a: None, sign: 1.0, normalization: Normalization::Offline, scale: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundTruth {
    /// The synthetic pose track when the input is a yaw_dots stimulus.
    #[default]
    Auto,
    None,
    Pose {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default)]
    pub ground_truth: GroundTruth,
    #[serde(default)]
    pub arre: ArreOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_deltas")]
    pub delta_t_s: Vec<f64>,
}

fn default_deltas() -> Vec<f64> {
    vec![0.0, 0.02, 0.04, 0.06, 0.08]
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { delta_t_s: default_deltas() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalogSpec {
    #[serde(default)]
    pub biases: DpiBiases,
    /// Trigger delays after the end of the FAC pulse, s.
    #[serde(default = "default_delays")]
    pub delays_s: Vec<f64>,
    /// Width of both input pulses in the delay sweep, s.
    #[serde(default = "default_pulse_width")]
    pub pulse_width_s: f64,
    /// Resting `I_gain^TRG` for the ODE comparison, A.
    #[serde(default = "default_rest_current")]
    pub rest_current_a: f64,
}

fn default_delays() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 1e-3).collect()
}

fn default_pulse_width() -> f64 {
    10e-6
}

fn default_rest_current() -> f64 {
    1e-12
}

impl Default for AnalogSpec {
    fn default() -> Self {
        Self {
            biases: DpiBiases::default(),
            delays_s: default_delays(),
            pulse_width_s: default_pulse_width(),
            rest_current_a: default_rest_current(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase_paths(base);
        Ok(config)
    }

    /// Resolves relative paths, including `output_dir`, against `base` (the
    /// config's directory).
    fn rebase_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(InputSpec::File { path, .. }) = &mut self.input {
            fix(path);
        }
        if let GroundTruth::Pose { path } = &mut self.metrics.ground_truth {
            fix(path);
        }
        if let Some(dir) = &mut self.output_dir {
            fix(dir);
        }
    }

    /// Applies `--seed`: both the stimulus seed and the two-box placement seed.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(InputSpec::Stimulus(spec)) = &mut self.input {
            spec.seed = seed;
        }
        if let Some(NetworkSpec::TwoBox { seed: s, .. }) = &mut self.network {
            *s = seed;
        }
    }

    /// Fills layout-dependent defaults so the manifest is self-contained.
    pub fn resolve(&mut self) {
        if self.readout.tau_a.is_none() {
            self.readout.tau_a = match self.network {
                Some(NetworkSpec::TwoBox { .. }) => Some(TWO_BOX_TAU_A),
                Some(NetworkSpec::Dense { .. }) => Some(DENSE_TAU_A),
                None => None,
            };
        }
    }

    pub fn validate_estimate(&self) -> Result<()> {
        if self.input.is_none() {
            bail!("config has no `input`");
        }
        if self.network.is_none() {
            bail!("config has no `network`");
        }
        if self.readout.sign.abs() != 1.0 {
            bail!("readout.sign must be +1 or -1, got {}", self.readout.sign);
        }
        if let Some(s) = self.readout.scale {
            if !s.is_finite() {
                bail!("readout.scale must be finite");
            }
        }
        self.tde.validate()?;
        Ok(())
    }
}

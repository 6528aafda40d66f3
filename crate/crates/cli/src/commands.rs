use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use tde_egomotion::analog::{
    fit_peak_law, gain_ode_deviation, peak_current_vs_delay, tde_ode_deviation, write_sweep_csv, PeakLawFit,
    PulseWindow, RestCurrents,
};
use tde_egomotion::events::{
    gen_moving_edge, gen_yaw_dots, read_events, read_pose_csv, write_pose_csv, EventFormat, EventStream, PoseTrack,
    StimulusKind,
};
use tde_egomotion::metrics::{evaluate, MetricsReport};
use tde_egomotion::network::{
    build_dense, build_two_box, run_with, Group, NetworkConfig, Orientation, OutputSpike, RunOptions,
};
use tde_egomotion::readout::{
    combine, integrate_diff, integrate_heading, normalize, normalize_causal, write_activity_csv, ActivityTrace,
};
use tde_egomotion::tde::run_pair_sweep;

use crate::config::{ExperimentConfig, GroundTruth, InputSpec, NetworkSpec, Normalization};

/// Tolerance on the fitted ln(peak) slope relative to -1/tau_FAC.
pub const ANALOG_SLOPE_TOL: f64 = 0.02;
/// Tolerance on the closed-form vs ODE relative deviation.
pub const ANALOG_ODE_TOL: f64 = 0.01;

pub const SWEEP_HEADER: &str = "delta_t_s,spike_count,first_spike_latency_s";
pub const SPIKES_HEADER: &str = "t_us,unit_id";

/// Outcome of one subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: &'static str,
    pub outputs: Vec<PathBuf>,
    /// Named embedded checks and whether each passed.
    pub checks: Vec<(String, bool)>,
    pub messages: Vec<String>,
}

impl RunSummary {
    fn new(command: &'static str) -> Self {
        Self { command, outputs: Vec::new(), checks: Vec::new(), messages: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

fn create(dir: &Path, name: &str, summary: &mut RunSummary) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    summary.outputs.push(path);
    Ok(BufWriter::new(file))
}

fn write_manifest(dir: &Path, config: &ExperimentConfig, workers: usize, summary: &mut RunSummary) -> Result<()> {
    let manifest = json!({
        "command": summary.command,
        "version": env!("CARGO_PKG_VERSION"),
        "workers": workers,
        "config": config,
        "outputs": summary.outputs.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "checks": summary.checks.iter().map(|(k, v)| (k.clone(), *v)).collect::<HashMap<_, _>>(),
        "passed": summary.passed(),
    });
    let mut out = create(dir, "run_manifest.json", summary)?;
    serde_json::to_writer_pretty(&mut out, &manifest)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Single-unit time-difference sweep; writes `sweep.csv`.
pub fn cmd_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let deltas = &config.sweep.delta_t_s;
    if deltas.is_empty() {
        bail!("empty sweep");
    }
    let results = run_pair_sweep(deltas, &config.tde, config.dt).context("running sweep")?;
    fs::create_dir_all(out_dir)?;
    let mut summary = RunSummary::new("sweep");
    let mut out = create(out_dir, "sweep.csv", &mut summary)?;
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in &results {
        let latency = r.first_spike_latency.map(|l| format!("{l}")).unwrap_or_default();
        writeln!(out, "{},{},{}", r.delta_t, r.spike_count, latency)?;
    }
    out.flush()?;
    summary.messages.push(format!("{} time differences swept", results.len()));
    write_manifest(out_dir, config, 1, &mut summary)?;
    Ok(summary)
}

/// Everything `cmd_estimate` computes, for callers that want it in memory.
pub struct Estimate {
    pub network: NetworkConfig,
    pub spikes: Vec<OutputSpike>,
    pub raw: ActivityTrace,
    pub normalized: ActivityTrace,
    pub heading: PoseTrack,
    pub metrics: Option<MetricsReport>,
}

fn load_input(input: &InputSpec) -> Result<(EventStream, Option<PoseTrack>, u64)> {
    match input {
        InputSpec::File { path, format, geometry, duration_us } => {
            let format = format.unwrap_or_else(|| EventFormat::from_path(path));
            let stream =
                read_events(path, format, *geometry).with_context(|| format!("reading events {}", path.display()))?;
            let duration = duration_us.or(stream.last_timestamp()).unwrap_or(0);
            Ok((stream, None, duration))
        }
        InputSpec::Stimulus(spec) => match spec.kind {
            StimulusKind::MovingEdge { .. } => Ok((gen_moving_edge(spec)?, None, spec.duration_us)),
            StimulusKind::YawDots { .. } => {
                let (stream, pose) = gen_yaw_dots(spec)?;
                Ok((stream, Some(pose), spec.duration_us))
            }
        },
    }
}

/// Runs the full pipeline without touching the filesystem (apart from reading
/// the configured inputs).
pub fn estimate(config: &ExperimentConfig, workers: usize) -> Result<Estimate> {
    config.validate_estimate()?;
    let input = config.input.as_ref().expect("validated");
    let layout = config.network.expect("validated");
    let (stream, synthetic_pose, duration_us) = load_input(input)?;
    let geometry = stream.geometry();

    let mut network = match layout {
        NetworkSpec::TwoBox { seed, stride } => build_two_box(seed, geometry, stride, config.tde)?,
        NetworkSpec::Dense { stride } => build_dense(geometry, stride, config.tde)?,
    };
    network.dt = config.dt;
    network.polarity = config.polarity;
    let spikes = run_with(&stream, &network, RunOptions { workers, until_us: Some(duration_us) })?;

    let tau_a = config.readout.tau_a.context("readout.tau_a unresolved")?;
    let labels = network.group_labels();
    let groups: Vec<Group> = match layout {
        NetworkSpec::TwoBox { .. } => vec![Group::LeftBox, Group::RightBox],
        NetworkSpec::Dense { .. } => vec![Group::FullField],
    };
    let traces = groups
        .iter()
        .map(|&g| {
            let members: HashMap<u32, Orientation> =
                labels.iter().filter(|(_, (group, _))| *group == g).map(|(&id, &(_, o))| (id, o)).collect();
            let part: Vec<OutputSpike> = spikes.iter().copied().filter(|s| members.contains_key(&s.unit_id)).collect();
            integrate_diff(&part, &members, tau_a, config.dt, duration_us)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut raw = combine(&traces)?;
    for v in &mut raw.samples {
        *v *= config.readout.sign;
    }
    let normalized = match config.readout.normalization {
        Normalization::Offline => normalize(&raw)?,
        Normalization::Causal => normalize_causal(&raw)?,
    };

    let truth = match &config.metrics.ground_truth {
        GroundTruth::Auto => synthetic_pose,
        GroundTruth::None => None,
        GroundTruth::Pose { path } => {
            Some(read_pose_csv(path).with_context(|| format!("reading pose {}", path.display()))?)
        }
    };
    let metrics = match &truth {
        Some(gt) if !normalized.is_degenerate() => Some(evaluate(&normalized, gt, config.readout.scale)?),
        _ => None,
    };
    let scale = metrics.map(|m| m.scale).or(config.readout.scale).unwrap_or(1.0);
    let mut heading = integrate_heading(&normalized, scale)?;
    if let Some(gt) = &truth {
        // Start from the true heading so the two can be overlaid directly.
        if let Some(first) = gt.samples.iter().find(|s| s.t >= normalized.t0) {
            let offset = first.yaw;
            for s in &mut heading.samples {
                s.yaw += offset;
            }
        }
    }
    Ok(Estimate { network, spikes, raw, normalized, heading, metrics })
}

/// Writes `activity.csv`, `spikes.csv`, `heading.csv` and, with ground
/// truth, `metrics.json`.
pub fn cmd_estimate(config: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<RunSummary> {
    let result = estimate(config, workers)?;
    fs::create_dir_all(out_dir)?;
    let mut summary = RunSummary::new("estimate");

    let mut out = create(out_dir, "activity.csv", &mut summary)?;
    write_activity_csv(&result.raw, &result.normalized, &mut out)?;
    out.flush()?;

    let mut out = create(out_dir, "spikes.csv", &mut summary)?;
    writeln!(out, "{SPIKES_HEADER}")?;
    for s in &result.spikes {
        writeln!(out, "{},{}", s.t, s.unit_id)?;
    }
    out.flush()?;

    let mut out = create(out_dir, "heading.csv", &mut summary)?;
    write_pose_csv(&result.heading, &mut out)?;
    out.flush()?;

    if let Some(m) = &result.metrics {
        let mut out = create(out_dir, "metrics.json", &mut summary)?;
        serde_json::to_writer_pretty(&mut out, m)?;
        writeln!(out)?;
        out.flush()?;
        summary.messages.push(format!(
            "pearson_r {} arre_angle {:.6} rad scale {:.6} rad/s",
            m.pearson_r.map_or("n/a".to_string(), |r| format!("{r:.4}")),
            m.arre_angle,
            m.scale
        ));
    }
    summary.messages.push(format!("{} units, {} output spikes", result.network.len(), result.spikes.len()));
    if result.normalized.is_degenerate() {
        summary.messages.push("activity is identically zero (degenerate), no metrics computed".into());
    }
    write_manifest(out_dir, config, workers, &mut summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalogReport {
    pub tau_fac_s: f64,
    pub tau_trg_s: f64,
    pub peak_fit: PeakLawFit,
    pub gain_ode_relative_error: f64,
    pub tde_ode_relative_error: f64,
}

/// Delay sweep, peak-law fit and closed-form vs ODE checks.
pub fn analog_report(config: &ExperimentConfig) -> Result<(Vec<(f64, f64)>, AnalogReport)> {
    let spec = &config.analog;
    let b = &spec.biases;
    b.validate()?;
    let sweep = peak_current_vs_delay(&spec.delays_s, b, spec.pulse_width_s)?;
    let peak_fit = fit_peak_law(&sweep, b)?;
    let (tf, tt) = (b.tau_fac(), b.tau_trg());

    // A long FAC pulse brings the first stage into its linear regime.
    let fac_long = PulseWindow::new(0.5 * tf, 5.5 * tf)?;
    let gain_err = gain_ode_deviation(fac_long, b, spec.rest_current_a, 10.5 * tf)?;
    let fac = PulseWindow::new(0.0, 3.0 * tf)?;
    let trg = PulseWindow::new(4.0 * tf, 4.0 * tf + 0.25 * tt)?;
    let rest = RestCurrents { gain: spec.rest_current_a, tde: 0.0 };
    let tde_err = tde_ode_deviation(fac, trg, b, rest, trg.t_plus + 4.0 * tt)?;

    Ok((
        sweep,
        AnalogReport {
            tau_fac_s: tf,
            tau_trg_s: tt,
            peak_fit,
            gain_ode_relative_error: gain_err,
            tde_ode_relative_error: tde_err,
        },
    ))
}

/// Writes `analog_sweep.csv` and `analog_summary.json`.
pub fn cmd_analog(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let (sweep, report) = analog_report(config)?;
    fs::create_dir_all(out_dir)?;
    let mut summary = RunSummary::new("analog");
    let mut out = create(out_dir, "analog_sweep.csv", &mut summary)?;
    write_sweep_csv(&sweep, &mut out)?;
    out.flush()?;

    summary.checks = vec![
        ("peak_slope_within_2pct".into(), report.peak_fit.relative_error < ANALOG_SLOPE_TOL),
        ("gain_ode_within_1pct".into(), report.gain_ode_relative_error < ANALOG_ODE_TOL),
        ("tde_ode_within_1pct".into(), report.tde_ode_relative_error < ANALOG_ODE_TOL),
    ];
    summary.messages.push(format!(
        "tau_FAC {:.4e} s, fitted slope {:.4} 1/s vs {:.4} 1/s ({:.3e} relative), R^2 {:.6}",
        report.tau_fac_s,
        report.peak_fit.slope,
        report.peak_fit.expected_slope,
        report.peak_fit.relative_error,
        report.peak_fit.r2
    ));
    summary.messages.push(format!(
        "closed form vs ODE: I_gain {:.3e}, I_TDE {:.3e} relative",
        report.gain_ode_relative_error, report.tde_ode_relative_error
    ));
    let mut out = create(out_dir, "analog_summary.json", &mut summary)?;
    serde_json::to_writer_pretty(&mut out, &json!({ "report": report, "checks": summary.checks }))?;
    writeln!(out)?;
    out.flush()?;
    write_manifest(out_dir, config, 1, &mut summary)?;
    Ok(summary)
}

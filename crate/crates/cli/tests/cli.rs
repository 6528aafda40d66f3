use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use tde_cli::commands::{estimate, SPIKES_HEADER, SWEEP_HEADER};
use tde_cli::config::{ExperimentConfig, GroundTruth, InputSpec, NetworkSpec};
use tde_egomotion::events::{
    gen_moving_edge, write_events, write_pose_csv, EventFormat, Geometry, PoseSample, PoseTrack, RateSource,
    StimulusKind, StimulusSpec, YawRateFn,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tde-ego"))
}

fn write_config(dir: &Path, value: serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

#[test]
fn sweep_defaults_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let status = bin().args(["sweep", "--out"]).arg(out).status().unwrap();
        assert!(status.success());
    }
    let text = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("sweep.csv")).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SWEEP_HEADER));
    let counts: Vec<usize> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(counts.len(), 5);
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
    assert!(a.join("run_manifest.json").exists());
}

#[test]
fn empty_sweep_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), serde_json::json!({ "sweep": { "delta_t_s": [] } }));
    let out = bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty sweep"));
}

#[test]
fn invalid_tde_params_fail_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), serde_json::json!({ "tde": { "tau_m": -1.0 } }));
    let out = bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn analog_passes_and_rejects_negative_bias() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["analog", "--out"]).arg(dir.path().join("ok")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("PASS").count(), 3, "{stdout}");
    let csv = fs::read_to_string(dir.path().join("ok/analog_sweep.csv")).unwrap();
    assert!(csv.starts_with("delay_s,peak_a\n"));
    assert_eq!(csv.lines().count(), 11);

    let cfg = write_config(dir.path(), serde_json::json!({ "analog": { "biases": { "i_tau_fac": -2e-12 } } }));
    let out = bin().args(["analog", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("bad")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("i_tau_fac"));
}

#[test]
fn estimate_needs_config() {
    let out = bin().arg("estimate").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn zero_motion_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "input": {
                "source": "stimulus", "geometry": {"width": 32, "height": 8}, "duration_us": 500000,
                "kind": "yaw_dots", "yaw_rate": {"shape": "constant", "rate": 0.0},
                "dot_density": 0.1, "px_per_rad": 300.0
            },
            "network": {"layout": "dense", "stride": 2},
            "output_dir": "run"
        }),
    );
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    let activity = fs::read_to_string(run.join("activity.csv")).unwrap();
    for line in activity.lines().skip(1) {
        assert!(line.ends_with(",0,0"), "{line}");
    }
    assert!(!run.join("metrics.json").exists());
    assert_eq!(fs::read_to_string(run.join("spikes.csv")).unwrap(), format!("{SPIKES_HEADER}\n"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("degenerate"));
}

#[test]
fn two_box_uses_200_units() {
    let spec = StimulusSpec {
        geometry: Geometry::new(346, 260),
        duration_us: 2_000_000,
        seed: 0,
        kind: StimulusKind::MovingEdge { velocity_px_per_s: 200.0 },
    };
    let mut config = ExperimentConfig {
        input: Some(InputSpec::Stimulus(spec)),
        network: Some(NetworkSpec::TwoBox { seed: 4, stride: 2 }),
        ..Default::default()
    };
    config.resolve();
    let result = estimate(&config, 2).unwrap();
    assert_eq!(result.network.len(), 200);
    let ids: HashSet<u32> = result.spikes.iter().map(|s| s.unit_id).collect();
    assert!(!ids.is_empty());
    assert!(ids.iter().all(|&id| id < 200));
    // A rightward edge drives the LR halves of both boxes.
    assert!(result.raw.samples.iter().cloned().fold(f64::MIN, f64::max) > 0.0);
}

#[test]
fn file_input_with_pose_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new(40, 6);
    let stream = gen_moving_edge(&StimulusSpec {
        geometry: g,
        duration_us: 1_000_000,
        seed: 0,
        kind: StimulusKind::MovingEdge { velocity_px_per_s: 60.0 },
    })
    .unwrap();
    write_events(&stream, &dir.path().join("edge.evt1"), EventFormat::Evt1).unwrap();
    write_events(&stream, &dir.path().join("edge.csv"), EventFormat::Csv).unwrap();
    let pose = PoseTrack {
        samples: (0..=100)
            .map(|i| PoseSample { t: i * 10_000, yaw: 0.1 * i as f64 * 0.01, yaw_rate: 0.1 })
            .collect(),
        rate_source: RateSource::Provided,
    };
    let mut f = fs::File::create(dir.path().join("pose.csv")).unwrap();
    write_pose_csv(&pose, &mut f).unwrap();

    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "input": {"source": "file", "path": "edge.evt1", "duration_us": 1000000},
            "network": {"layout": "dense", "stride": 2},
            "metrics": {"ground_truth": {"kind": "pose", "path": "pose.csv"}},
            "output_dir": "run"
        }),
    );
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/metrics.json")).unwrap()).unwrap();
    for key in
        ["arre_angle", "arre_frobenius", "scale", "sign", "pearson_r", "final_heading_error", "max_heading_error"]
    {
        assert!(metrics.get(key).is_some(), "missing {key}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["readout"]["tau_a"], 0.01);
    assert_eq!(manifest["passed"], true);

    // CSV has no header geometry, so it must be configured.
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "input": {"source": "file", "path": "edge.csv"},
            "network": {"layout": "dense", "stride": 2},
            "output_dir": "csv_run"
        }),
    );
    assert!(!bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap().status.success());
    let mut config = ExperimentConfig::load(&cfg).unwrap();
    if let Some(InputSpec::File { geometry, .. }) = &mut config.input {
        *geometry = Some(g);
    }
    config.metrics.ground_truth = GroundTruth::None;
    config.resolve();
    let from_csv = estimate(&config, 1).unwrap();
    assert!(!from_csv.spikes.is_empty());
}

#[test]
fn seed_flag_changes_stimulus() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StimulusSpec {
        geometry: Geometry::new(32, 8),
        duration_us: 1_000_000,
        seed: 1,
        kind: StimulusKind::YawDots {
            yaw_rate: YawRateFn::Constant { rate: 0.2 },
            dot_density: 0.1,
            px_per_rad: 300.0,
            pose_interval_us: 10_000,
        },
    };
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "input": {"source": "stimulus", "geometry": spec.geometry, "duration_us": spec.duration_us,
                      "seed": 1, "kind": "yaw_dots", "yaw_rate": {"shape": "constant", "rate": 0.2},
                      "dot_density": 0.1, "px_per_rad": 300.0},
            "network": {"layout": "dense", "stride": 2}
        }),
    );
    let run = |seed: &str, out: &str| {
        let o = dir.path().join(out);
        assert!(bin().args(["estimate", "--seed", seed, "--config"]).arg(&cfg).arg("--out").arg(&o).status().unwrap().success());
        fs::read_to_string(o.join("spikes.csv")).unwrap()
    };
    let a = run("1", "a");
    assert_eq!(a, run("1", "b"));
    assert_ne!(a, run("2", "c"));
    let manifest = fs::read_to_string(dir.path().join("c/run_manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 2"));
}

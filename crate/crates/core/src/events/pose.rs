use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EventError, Result};

/// Heading `yaw` (rad) and yaw rate (rad/s) at time `t` (us).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: u64,
    pub yaw: f64,
    pub yaw_rate: f64,
}

/// Where the yaw-rate column of a [`PoseTrack`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateSource {
    /// Given explicitly (file column or analytic generator).
    Provided,
    /// Derived from the yaw column by finite differences.
    Differenced,
    /// Fewer than two samples: the rate is set to zero.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseTrack {
    pub samples: Vec<PoseSample>,
    pub rate_source: RateSource,
}

impl PoseTrack {
    pub fn new(samples: Vec<PoseSample>, rate_source: RateSource) -> Result<Self> {
        for (index, w) in samples.windows(2).enumerate() {
            if w[1].t < w[0].t {
                return Err(EventError::Decreasing { index: index + 1, prev: w[0].t, t: w[1].t });
            }
        }
        Ok(Self { samples, rate_source })
    }

    /// Builds a track from yaw samples only, filling the rate by finite
    /// differences (three-point formula, exact for quadratics; one-sided at
    /// the ends).
    pub fn from_yaw(times: &[u64], yaw: &[f64]) -> Result<Self> {
        assert_eq!(times.len(), yaw.len());
        let n = times.len();
        let secs: Vec<f64> = times.iter().map(|&t| t as f64 * 1e-6).collect();
        let mut rate = vec![0.0; n];
        let source = if n < 2 {
            RateSource::Unavailable
        } else {
            for i in 0..n {
                rate[i] = if i == 0 {
                    (yaw[1] - yaw[0]) / (secs[1] - secs[0])
                } else if i == n - 1 {
                    (yaw[i] - yaw[i - 1]) / (secs[i] - secs[i - 1])
                } else {
                    let hm = secs[i] - secs[i - 1];
                    let hp = secs[i + 1] - secs[i];
                    (hm * hm * (yaw[i + 1] - yaw[i]) + hp * hp * (yaw[i] - yaw[i - 1])) / (hm * hp * (hm + hp))
                };
            }
            RateSource::Differenced
        };
        let samples = (0..n)
            .map(|i| PoseSample { t: times[i], yaw: yaw[i], yaw_rate: rate[i] })
            .collect();
        Self::new(samples, source)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn yaws(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.yaw).collect()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.yaw_rate).collect()
    }
}

pub const POSE_HEADER: &str = "t_us,yaw_rad,yaw_rate_rad_s";

pub fn read_pose_csv(path: &Path) -> Result<PoseTrack> {
    read_pose_csv_from(BufReader::new(File::open(path)?))
}

/// Parses `t_us,yaw_rad[,yaw_rate_rad_s]`.
pub fn read_pose_csv_from<R: BufRead>(reader: R) -> Result<PoseTrack> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| EventError::MalformedLine { line: 1, message: "missing header".into() })?;
    let columns: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let with_rate = match columns.as_slice() {
        ["t_us", "yaw_rad"] => false,
        ["t_us", "yaw_rad", "yaw_rate_rad_s"] => true,
        _ => {
            return Err(EventError::MalformedLine {
                line: 1,
                message: format!("unexpected pose header `{}`", header.trim()),
            })
        }
    };

    let mut times = Vec::new();
    let mut yaw = Vec::new();
    let mut rate = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(EventError::MalformedLine {
                line: line_no,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        let bad = |name: &str, s: &str| EventError::MalformedLine {
            line: line_no,
            message: format!("cannot parse `{s}` as {name}"),
        };
        let t: u64 = fields[0].parse().map_err(|_| bad("t_us", fields[0]))?;
        let y: f64 = fields[1].parse().map_err(|_| bad("yaw_rad", fields[1]))?;
        if let Some(&prev) = times.last() {
            if t < prev {
                return Err(EventError::Decreasing { index: times.len(), prev, t });
            }
        }
        times.push(t);
        yaw.push(y);
        if with_rate {
            rate.push(fields[2].parse::<f64>().map_err(|_| bad("yaw_rate_rad_s", fields[2]))?);
        }
    }

    if with_rate {
        let samples = times
            .iter()
            .zip(&yaw)
            .zip(&rate)
            .map(|((&t, &yaw), &yaw_rate)| PoseSample { t, yaw, yaw_rate })
            .collect();
        PoseTrack::new(samples, RateSource::Provided)
    } else {
        PoseTrack::from_yaw(&times, &yaw)
    }
}

pub fn write_pose_csv<W: Write>(track: &PoseTrack, out: &mut W) -> Result<()> {
    writeln!(out, "{POSE_HEADER}")?;
    for s in &track.samples {
        writeln!(out, "{},{},{}", s.t, s.yaw, s.yaw_rate)?;
    }
    Ok(())
}

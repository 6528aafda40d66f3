//! Camera events, ground-truth poses, portable file formats and synthetic
//! stimuli with analytic ground truth.

mod io;
mod pose;
mod stimulus;

pub use io::{read_csv, read_events, read_evt1, write_csv, write_events, write_evt1, EventFormat};
pub use pose::{read_pose_csv, read_pose_csv_from, write_pose_csv, PoseSample, PoseTrack, RateSource};
pub use stimulus::{gen_moving_edge, gen_yaw_dots, StimulusKind, StimulusSpec, YawRateFn};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sensor geometry of a DAVIS 346B, the camera used in the MVSEC recordings.
pub const DAVIS346: Geometry = Geometry { width: 346, height: 260 };

#[derive(Debug, Error)]
pub enum EventError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record at line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("malformed binary data at offset {offset}: {message}")]
    MalformedBinary { offset: u64, message: String },
    #[error("event {index}: {axis} out of bounds ({value} >= {limit})")]
    OutOfBounds { index: usize, axis: char, value: u32, limit: u32 },
    #[error("event {index}: timestamps decreasing ({prev} us then {t} us)")]
    Decreasing { index: usize, prev: u64, t: u64 },
    #[error("invalid polarity {0}, expected -1 or 1")]
    Polarity(i64),
    #[error("geometry mismatch: expected {expected}, found {found}")]
    GeometryMismatch { expected: Geometry, found: Geometry },
    #[error("csv event input needs an explicit sensor geometry")]
    MissingGeometry,
    #[error("invalid stimulus: {0}")]
    Stimulus(String),
}

pub type Result<T> = std::result::Result<T, EventError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub width: u16,
    pub height: u16,
}

impl Geometry {
    pub fn new(width: u16, height: u16) -> Self {
        Self { width, height }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn from_i64(p: i64) -> Result<Self> {
        match p {
            1 => Ok(Polarity::On),
            -1 => Ok(Polarity::Off),
            other => Err(EventError::Polarity(other)),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }
}

/// One camera event. `t` is in microseconds since stream start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Self { t, x, y, p }
    }
}

/// A validated, time-sorted event sequence for one sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: Geometry,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates bounds and ordering. Out-of-order input is rejected, never sorted.
    pub fn new(geometry: Geometry, events: Vec<Event>) -> Result<Self> {
        let mut prev = 0u64;
        for (index, e) in events.iter().enumerate() {
            check_bounds(geometry, index, e.x, e.y)?;
            if e.t < prev {
                return Err(EventError::Decreasing { index, prev, t: e.t });
            }
            prev = e.t;
        }
        Ok(Self { geometry, events })
    }

    pub fn empty(geometry: Geometry) -> Self {
        Self { geometry, events: Vec::new() }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Horizontal mirror image, x -> width - 1 - x. Order and timestamps are kept.
    pub fn mirrored(&self) -> Self {
        let w = self.geometry.width;
        let events = self
            .events
            .iter()
            .map(|e| Event { x: w - 1 - e.x, ..*e })
            .collect();
        Self { geometry: self.geometry, events }
    }
}

pub(crate) fn check_bounds(g: Geometry, index: usize, x: u16, y: u16) -> Result<()> {
    if x >= g.width {
        return Err(EventError::OutOfBounds {
            index,
            axis: 'x',
            value: x.into(),
            limit: g.width.into(),
        });
    }
    if y >= g.height {
        return Err(EventError::OutOfBounds {
            index,
            axis: 'y',
            value: y.into(),
            limit: g.height.into(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_order() {
        let g = Geometry::new(4, 4);
        let events = vec![
            Event::new(10, 0, 0, Polarity::On),
            Event::new(5, 1, 0, Polarity::On),
        ];
        let err = EventStream::new(g, events).unwrap_err();
        assert!(matches!(err, EventError::Decreasing { index: 1, prev: 10, t: 5 }));
    }

    #[test]
    fn ties_are_allowed() {
        let g = Geometry::new(4, 4);
        let events = vec![
            Event::new(10, 0, 0, Polarity::On),
            Event::new(10, 1, 0, Polarity::Off),
        ];
        assert_eq!(EventStream::new(g, events).unwrap().len(), 2);
    }

    #[test]
    fn bounds_message_names_axis() {
        let g = DAVIS346;
        let err = EventStream::new(g, vec![Event::new(5, 400, 10, Polarity::On)]).unwrap_err();
        assert!(err.to_string().contains("x out of bounds"), "{err}");
        let err = EventStream::new(g, vec![Event::new(5, 4, 260, Polarity::On)]).unwrap_err();
        assert!(err.to_string().contains("y out of bounds"), "{err}");
    }

    #[test]
    fn mirror_is_an_involution() {
        let g = Geometry::new(5, 2);
        let s = EventStream::new(
            g,
            vec![Event::new(0, 0, 1, Polarity::On), Event::new(3, 3, 0, Polarity::Off)],
        )
        .unwrap();
        assert_eq!(s.mirrored().events()[0].x, 4);
        assert_eq!(s.mirrored().mirrored(), s);
    }

    #[test]
    fn polarity_parsing() {
        assert_eq!(Polarity::from_i64(1).unwrap(), Polarity::On);
        assert_eq!(Polarity::from_i64(-1).unwrap(), Polarity::Off);
        assert!(Polarity::from_i64(0).is_err());
    }
}

//! TDE populations wired to the pixel grid.
//!
//! An LR (left-to-right) unit takes FAC from the left pixel and TRG from the
//! pixel `stride` columns to its right, so rightward motion facilitates then
//! triggers it. RL units are the mirror image.

mod engine;

pub use engine::{run, run_with, OutputSpike, RunOptions};

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Geometry, Polarity};
use crate::tde::{TdeError, TdeParams, DEFAULT_DT};

pub const BOX_SIZE: u16 = 20;
pub const BOX_OFFSET: u16 = 100;
pub const UNITS_PER_BOX: usize = 100;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{0}")]
    Tde(#[from] TdeError),
    #[error("sampling boxes do not fit a {0} sensor")]
    BoxesOutOfBounds(Geometry),
    #[error("stride {stride} invalid for sensor width {width}")]
    Stride { stride: u16, width: u16 },
    #[error("unit {unit_id}: {message}")]
    Placement { unit_id: u32, message: String },
    #[error("duplicate unit id {0}")]
    DuplicateId(u32),
    #[error("stream geometry {stream} does not match network geometry {network}")]
    GeometryMismatch { stream: Geometry, network: Geometry },
    #[error("worker count must be at least 1")]
    Workers,
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "LR")]
    LeftToRight,
    #[serde(rename = "RL")]
    RightToLeft,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::LeftToRight => Orientation::RightToLeft,
            Orientation::RightToLeft => Orientation::LeftToRight,
        }
    }

    /// +1 for LR, -1 for RL.
    pub fn sign(self) -> f64 {
        match self {
            Orientation::LeftToRight => 1.0,
            Orientation::RightToLeft => -1.0,
        }
    }
}

/// Which part of the visual field a unit samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    LeftBox,
    RightBox,
    FullField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub x: u16,
    pub y: u16,
}

impl Pixel {
    pub fn new(x: u16, y: u16) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitPlacement {
    pub unit_id: u32,
    pub orientation: Orientation,
    pub fac: Pixel,
    pub trg: Pixel,
    pub stride: u16,
    pub group: Group,
}

impl UnitPlacement {
    /// Places a unit whose leftmost port sits at `anchor`.
    pub fn at_anchor(unit_id: u32, orientation: Orientation, anchor: Pixel, stride: u16, group: Group) -> Self {
        let left = anchor;
        let right = Pixel::new(anchor.x + stride, anchor.y);
        let (fac, trg) = match orientation {
            Orientation::LeftToRight => (left, right),
            Orientation::RightToLeft => (right, left),
        };
        Self { unit_id, orientation, fac, trg, stride, group }
    }

    fn check(&self, g: Geometry) -> Result<()> {
        let fail = |m: String| Err(NetworkError::Placement { unit_id: self.unit_id, message: m });
        if !g.contains(self.fac.x, self.fac.y) || !g.contains(self.trg.x, self.trg.y) {
            return fail(format!("ports outside the {g} sensor"));
        }
        if self.fac.y != self.trg.y {
            return fail("FAC and TRG rows differ".into());
        }
        let expected_trg = match self.orientation {
            Orientation::LeftToRight => self.fac.x.checked_add(self.stride),
            Orientation::RightToLeft => self.fac.x.checked_sub(self.stride),
        };
        if self.stride == 0 || expected_trg != Some(self.trg.x) {
            return fail("port separation does not match stride and orientation".into());
        }
        Ok(())
    }

    fn mirrored(&self, width: u16) -> Self {
        let m = |p: Pixel| Pixel::new(width - 1 - p.x, p.y);
        Self {
            orientation: self.orientation.flipped(),
            fac: m(self.fac),
            trg: m(self.trg),
            ..*self
        }
    }
}

/// Which event polarities drive the network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarityFilter {
    #[default]
    Both,
    OnOnly,
    OffOnly,
}

impl PolarityFilter {
    pub fn accepts(self, p: Polarity) -> bool {
        match self {
            PolarityFilter::Both => true,
            PolarityFilter::OnOnly => p == Polarity::On,
            PolarityFilter::OffOnly => p == Polarity::Off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub geometry: Geometry,
    pub placements: Vec<UnitPlacement>,
    pub params: TdeParams,
    /// Euler step, s.
    pub dt: f64,
    #[serde(default)]
    pub polarity: PolarityFilter,
}

impl NetworkConfig {
    pub fn new(geometry: Geometry, placements: Vec<UnitPlacement>, params: TdeParams) -> Result<Self> {
        let config = Self { geometry, placements, params, dt: DEFAULT_DT, polarity: PolarityFilter::Both };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let mut seen = HashSet::with_capacity(self.placements.len());
        for p in &self.placements {
            p.check(self.geometry)?;
            if !seen.insert(p.unit_id) {
                return Err(NetworkError::DuplicateId(p.unit_id));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn orientation_labels(&self) -> HashMap<u32, Orientation> {
        self.placements.iter().map(|p| (p.unit_id, p.orientation)).collect()
    }

    pub fn group_labels(&self) -> HashMap<u32, (Group, Orientation)> {
        self.placements.iter().map(|p| (p.unit_id, (p.group, p.orientation))).collect()
    }

    /// Units of one sampling group.
    pub fn group(&self, group: Group) -> impl Iterator<Item = &UnitPlacement> {
        self.placements.iter().filter(move |p| p.group == group)
    }

    /// Horizontal mirror image: ports mirrored, orientations swapped, ids kept.
    pub fn mirrored(&self) -> Self {
        let w = self.geometry.width;
        Self {
            placements: self.placements.iter().map(|p| p.mirrored(w)).collect(),
            ..self.clone()
        }
    }

    /// For configurations that are their own mirror image (such as the dense
    /// grid), maps each unit id to the id of its mirrored counterpart.
    pub fn mirror_map(&self) -> Option<HashMap<u32, u32>> {
        let w = self.geometry.width;
        let by_ports: HashMap<(Pixel, Pixel), u32> =
            self.placements.iter().map(|p| ((p.fac, p.trg), p.unit_id)).collect();
        self.placements
            .iter()
            .map(|p| {
                let m = p.mirrored(w);
                by_ports.get(&(m.fac, m.trg)).map(|&id| (p.unit_id, id))
            })
            .collect()
    }
}

/// Two 20x20 sampling boxes on the vertical centre line, centred 100 px left
/// and right of the image centre. Each holds 100 randomly placed units (50 LR,
/// 50 RL) and both boxes share the identical intra-box layout. Ids 0..100 are
/// the left box, 100..200 the right box, in matching order.
pub fn build_two_box(seed: u64, geometry: Geometry, stride: u16, params: TdeParams) -> Result<NetworkConfig> {
    if stride == 0 || stride >= BOX_SIZE {
        return Err(NetworkError::Stride { stride, width: BOX_SIZE });
    }
    let (w, h) = (geometry.width as i32, geometry.height as i32);
    let (cx, cy) = (w / 2, h / 2);
    let half = BOX_SIZE as i32 / 2;
    let offset = BOX_OFFSET as i32;
    let left_x0 = cx - offset - half;
    let right_x0 = cx + offset - half;
    let y0 = cy - half;
    if left_x0 < 0 || right_x0 + BOX_SIZE as i32 > w || y0 < 0 || y0 + BOX_SIZE as i32 > h {
        return Err(NetworkError::BoxesOutOfBounds(geometry));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout: Vec<(Orientation, u16, u16)> = (0..UNITS_PER_BOX)
        .map(|i| {
            let orientation = if i < UNITS_PER_BOX / 2 { Orientation::LeftToRight } else { Orientation::RightToLeft };
            let ax = rng.random_range(0..BOX_SIZE - stride);
            let ay = rng.random_range(0..BOX_SIZE);
            (orientation, ax, ay)
        })
        .collect();

    let mut placements = Vec::with_capacity(2 * UNITS_PER_BOX);
    for (group, x0) in [(Group::LeftBox, left_x0), (Group::RightBox, right_x0)] {
        for &(orientation, ax, ay) in &layout {
            let anchor = Pixel::new(x0 as u16 + ax, y0 as u16 + ay);
            let id = placements.len() as u32;
            placements.push(UnitPlacement::at_anchor(id, orientation, anchor, stride, group));
        }
    }
    NetworkConfig::new(geometry, placements, params)
}

/// One LR and one RL unit for every anchor `(x, y)` with `x + stride < width`,
/// giving `2 (width - stride) height` units. Ids are `2 * anchor_index` for LR
/// and `2 * anchor_index + 1` for RL, anchors in row-major order.
pub fn build_dense(geometry: Geometry, stride: u16, params: TdeParams) -> Result<NetworkConfig> {
    if stride == 0 || stride >= geometry.width {
        return Err(NetworkError::Stride { stride, width: geometry.width });
    }
    let per_row = (geometry.width - stride) as usize;
    let mut placements = Vec::with_capacity(2 * per_row * geometry.height as usize);
    for y in 0..geometry.height {
        for x in 0..geometry.width - stride {
            for orientation in [Orientation::LeftToRight, Orientation::RightToLeft] {
                let id = placements.len() as u32;
                placements.push(UnitPlacement::at_anchor(id, orientation, Pixel::new(x, y), stride, Group::FullField));
            }
        }
    }
    NetworkConfig::new(geometry, placements, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    Fac,
    Trg,
}

/// Inverse wiring: for every pixel, the `(unit index, port)` pairs it drives.
/// Unit indices refer to positions in `NetworkConfig::placements`.
#[derive(Debug, Clone)]
pub struct RoutingIndex {
    width: u16,
    offsets: Vec<usize>,
    entries: Vec<(u32, Port)>,
}

impl RoutingIndex {
    pub fn targets(&self, x: u16, y: u16) -> &[(u32, Port)] {
        let i = y as usize * self.width as usize + x as usize;
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn total_entries(&self) -> usize {
        self.entries.len()
    }
}

pub fn route(config: &NetworkConfig) -> RoutingIndex {
    let g = config.geometry;
    let pixel = |p: Pixel| p.y as usize * g.width as usize + p.x as usize;
    let mut counts = vec![0usize; g.pixel_count() + 1];
    for p in &config.placements {
        counts[pixel(p.fac) + 1] += 1;
        counts[pixel(p.trg) + 1] += 1;
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let offsets = counts.clone();
    let mut cursor = counts;
    let mut entries = vec![(0u32, Port::Fac); offsets[g.pixel_count()]];
    for (index, p) in config.placements.iter().enumerate() {
        for (px, port) in [(p.fac, Port::Fac), (p.trg, Port::Trg)] {
            let slot = &mut cursor[pixel(px)];
            entries[*slot] = (index as u32, port);
            *slot += 1;
        }
    }
    RoutingIndex { width: g.width, offsets, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> TdeParams {
        TdeParams::default()
    }

    #[test]
    fn two_box_layout() {
        let c = build_two_box(0, Geometry::new(346, 260), 2, params()).unwrap();
        assert_eq!(c.len(), 200);
        for group in [Group::LeftBox, Group::RightBox] {
            let units: Vec<_> = c.group(group).collect();
            assert_eq!(units.len(), 100);
            let lr = units.iter().filter(|p| p.orientation == Orientation::LeftToRight).count();
            assert_eq!(lr, 50);
        }
        let left: Vec<_> = c.group(Group::LeftBox).collect();
        let right: Vec<_> = c.group(Group::RightBox).collect();
        for (l, r) in left.iter().zip(&right) {
            assert_eq!(l.orientation, r.orientation);
            assert_eq!(l.fac.x + 2 * BOX_OFFSET, r.fac.x);
            assert_eq!(l.trg.x + 2 * BOX_OFFSET, r.trg.x);
            assert_eq!((l.fac.y, l.trg.y), (r.fac.y, r.trg.y));
            // Both ports inside the left box.
            for px in [l.fac, l.trg] {
                assert!((63..83).contains(&px.x), "{px:?}");
                assert!((120..140).contains(&px.y), "{px:?}");
            }
        }
    }

    #[test]
    fn two_box_deterministic_and_seeded() {
        let g = Geometry::new(346, 260);
        assert_eq!(build_two_box(7, g, 2, params()).unwrap(), build_two_box(7, g, 2, params()).unwrap());
        assert_ne!(build_two_box(7, g, 2, params()).unwrap(), build_two_box(8, g, 2, params()).unwrap());
    }

    #[test]
    fn two_box_needs_room() {
        assert!(matches!(
            build_two_box(0, Geometry::new(200, 260), 2, params()),
            Err(NetworkError::BoxesOutOfBounds(_))
        ));
        assert!(build_two_box(0, Geometry::new(220, 20), 2, params()).is_ok());
    }

    #[test]
    fn dense_counts() {
        assert_eq!(build_dense(Geometry::new(346, 260), 2, params()).unwrap().len(), 178_880);
        let tiny = build_dense(Geometry::new(3, 1), 2, params()).unwrap();
        assert_eq!(tiny.len(), 2);
        assert_eq!(tiny.placements[0].orientation, Orientation::LeftToRight);
        assert_eq!(tiny.placements[1].orientation, Orientation::RightToLeft);
        assert_eq!(build_dense(Geometry::new(10, 4), 2, params()).unwrap().len(), 64);
        assert!(build_dense(Geometry::new(2, 4), 2, params()).is_err());
    }

    #[test]
    fn routing_single_unit() {
        let g = Geometry::new(4, 1);
        let unit = UnitPlacement::at_anchor(9, Orientation::LeftToRight, Pixel::new(0, 0), 2, Group::FullField);
        let c = NetworkConfig::new(g, vec![unit], params()).unwrap();
        let r = route(&c);
        assert_eq!(r.targets(0, 0), &[(0, Port::Fac)]);
        assert_eq!(r.targets(2, 0), &[(0, Port::Trg)]);
        assert!(r.targets(1, 0).is_empty());
    }

    #[test]
    fn routing_dense() {
        let c = build_dense(Geometry::new(3, 1), 2, params()).unwrap();
        let r = route(&c);
        assert_eq!(r.targets(0, 0), &[(0, Port::Fac), (1, Port::Trg)]);
        let big = build_dense(Geometry::new(346, 260), 2, params()).unwrap();
        assert_eq!(route(&big).total_entries(), 2 * 178_880);
    }

    #[test]
    fn placement_validation() {
        let g = Geometry::new(5, 2);
        let mut bad = UnitPlacement::at_anchor(0, Orientation::LeftToRight, Pixel::new(0, 0), 2, Group::FullField);
        bad.trg.x = 3;
        assert!(NetworkConfig::new(g, vec![bad], params()).is_err());
        let off = UnitPlacement::at_anchor(0, Orientation::LeftToRight, Pixel::new(3, 0), 2, Group::FullField);
        assert!(NetworkConfig::new(g, vec![off], params()).is_err());
        let a = UnitPlacement::at_anchor(4, Orientation::LeftToRight, Pixel::new(0, 0), 2, Group::FullField);
        let b = UnitPlacement::at_anchor(4, Orientation::RightToLeft, Pixel::new(0, 1), 2, Group::FullField);
        assert!(matches!(NetworkConfig::new(g, vec![a, b], params()), Err(NetworkError::DuplicateId(4))));
    }

    #[test]
    fn dense_is_mirror_symmetric() {
        let c = build_dense(Geometry::new(9, 3), 2, params()).unwrap();
        let map = c.mirror_map().unwrap();
        let labels = c.orientation_labels();
        for (a, b) in &map {
            assert_eq!(labels[a].flipped(), labels[b]);
            assert_eq!(map[b], *a);
        }
        let two_box = build_two_box(1, Geometry::new(346, 260), 2, params()).unwrap();
        assert!(two_box.mirror_map().is_none());
    }

    #[test]
    fn dense_count_law() {
        for w in 3u16..20 {
            for h in 1u16..6 {
                for s in 1..w {
                    let c = build_dense(Geometry::new(w, h), s, params()).unwrap();
                    assert_eq!(c.len(), 2 * (w - s) as usize * h as usize);
                }
            }
        }
    }
}

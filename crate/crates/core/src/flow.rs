//! Exhaustive SSD block-matching tracker, 10-frame median smoothing and
//! displacement feature vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::Image;
use crate::landmarks::{Landmark, LandmarkSet, NUM_LANDMARKS};

pub const HISTORY_LEN: usize = 10;
pub const FEATURE_LEN: usize = 2 * NUM_LANDMARKS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub wx: usize,
    pub wy: usize,
    /// Per-axis search radius.
    pub radius: i64,
    /// Points whose best SSD exceeds this become invalid.
    pub max_error: Option<u64>,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            wx: 4,
            wy: 4,
            radius: 6,
            max_error: None,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.wx == 0 || self.wy == 0 || self.radius < 0 {
            return Err(Error::invalid(format!("bad flow parameters: {self:?}")));
        }
        Ok(())
    }
}

fn window_inside(img: &Image, x: i64, y: i64, p: &FlowParams) -> bool {
    let (wx, wy) = (p.wx as i64, p.wy as i64);
    x - wx >= 0 && y - wy >= 0 && x + wx < img.width() as i64 && y + wy < img.height() as i64
}

#[inline]
fn ssd_unchecked(i1: &Image, i2: &Image, x: i64, y: i64, dx: i64, dy: i64, p: &FlowParams) -> u64 {
    let (wx, wy) = (p.wx as i64, p.wy as i64);
    let n = (2 * wx + 1) as usize;
    let (w1, w2) = (i1.width(), i2.width());
    let (d1, d2) = (i1.data(), i2.data());
    let mut acc = 0u64;
    for v in -wy..=wy {
        let a = ((y + v) as usize) * w1 + (x - wx) as usize;
        let b = ((y + v + dy) as usize) * w2 + (x - wx + dx) as usize;
        for (&p1, &p2) in d1[a..a + n].iter().zip(&d2[b..b + n]) {
            let d = p1 as i32 - p2 as i32;
            acc += (d * d) as u64;
        }
    }
    acc
}

/// Sum of squared differences between the window of `i1` at `(x, y)` and
/// the window of `i2` at `(x + dx, y + dy)`.
pub fn ssd(i1: &Image, i2: &Image, x: i64, y: i64, dx: i64, dy: i64, p: &FlowParams) -> Result<u64> {
    if !i1.is_gray() || !i2.is_gray() {
        return Err(Error::invalid("flow needs single channel images"));
    }
    if !window_inside(i1, x, y, p) || !window_inside(i2, x + dx, y + dy, p) {
        return Err(Error::OutOfBounds(format!(
            "window at ({x}, {y}) displaced by ({dx}, {dy}) leaves the frame"
        )));
    }
    Ok(ssd_unchecked(i1, i2, x, y, dx, dy, p))
}

/// Search offsets ordered by the tie-break rule: Manhattan length, then
/// row-major.
pub fn search_order(radius: i64) -> Vec<(i64, i64)> {
    let mut d: Vec<(i64, i64)> = (-radius..=radius)
        .flat_map(|dy| (-radius..=radius).map(move |dx| (dx, dy)))
        .collect();
    d.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    pub x: i64,
    pub y: i64,
    pub dx: i64,
    pub dy: i64,
    pub error: u64,
}

/// Displacement minimizing the SSD over the search box. Displacements whose
/// window would leave `i2` are skipped; `None` if the source window is out of
/// the frame or no displacement fits.
pub fn track_point(i1: &Image, i2: &Image, x: i64, y: i64, p: &FlowParams) -> Result<Option<Track>> {
    p.validate()?;
    if !i1.is_gray() || !i2.is_gray() {
        return Err(Error::invalid("flow needs single channel images"));
    }
    Ok(track_in_order(i1, i2, x, y, p, &search_order(p.radius)))
}

fn track_in_order(i1: &Image, i2: &Image, x: i64, y: i64, p: &FlowParams, order: &[(i64, i64)]) -> Option<Track> {
    if !window_inside(i1, x, y, p) {
        return None;
    }
    let mut best: Option<Track> = None;
    for &(dx, dy) in order {
        if !window_inside(i2, x + dx, y + dy, p) {
            continue;
        }
        let e = ssd_unchecked(i1, i2, x, y, dx, dy, p);
        if best.map_or(true, |b| e < b.error) {
            best = Some(Track {
                x: x + dx,
                y: y + dy,
                dx,
                dy,
                error: e,
            });
            if e == 0 {
                break;
            }
        }
    }
    best
}

/// Tracks every valid landmark; lost or over-threshold points become invalid.
pub fn track_set(i1: &Image, i2: &Image, set: &LandmarkSet, p: &FlowParams) -> Result<LandmarkSet> {
    p.validate()?;
    if !i1.is_gray() || !i2.is_gray() {
        return Err(Error::invalid("flow needs single channel images"));
    }
    let order = search_order(p.radius);
    let points = set
        .points
        .iter()
        .map(|l| {
            if !l.valid {
                return *l;
            }
            let t = track_in_order(i1, i2, l.x.round() as i64, l.y.round() as i64, p, &order)
                .filter(|t| p.max_error.map_or(true, |m| t.error <= m));
            match t {
                Some(t) => Landmark {
                    x: t.x as f64,
                    y: t.y as f64,
                    ..*l
                },
                None => Landmark { valid: false, ..*l },
            }
        })
        .collect();
    Ok(LandmarkSet { points })
}

/// Median of a non-empty slice; even counts average the middle pair.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per-slot, per-coordinate median over the frames where the slot is valid.
/// A slot stays valid when valid in at least half of the frames.
pub fn median_smooth(history: &[LandmarkSet]) -> Result<LandmarkSet> {
    let first = history
        .first()
        .ok_or_else(|| Error::invalid("median over an empty history"))?;
    let n = first.points.len();
    if history.iter().any(|s| s.points.len() != n) {
        return Err(Error::invalid("landmark sets of different sizes"));
    }
    let mut out = first.clone();
    for i in 0..n {
        let mut xs = Vec::with_capacity(history.len());
        let mut ys = Vec::with_capacity(history.len());
        for s in history {
            let p = s.points[i];
            if p.valid {
                xs.push(p.x);
                ys.push(p.y);
            }
        }
        let slot = &mut out.points[i];
        if xs.is_empty() || 2 * xs.len() < history.len() {
            slot.valid = false;
            if !xs.is_empty() {
                slot.x = median(&mut xs);
                slot.y = median(&mut ys);
            }
        } else {
            slot.valid = true;
            slot.x = median(&mut xs);
            slot.y = median(&mut ys);
        }
        if let Some(p) = history.iter().map(|s| s.points[i]).find(|p| p.valid) {
            slot.region = p.region;
        }
    }
    Ok(out)
}

/// The most recent tracked sets (at most `capacity`) plus the neutral
/// reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackHistory {
    pub reference: LandmarkSet,
    pub interocular: f64,
    capacity: usize,
    frames: Vec<LandmarkSet>,
}

impl TrackHistory {
    pub fn new(reference: LandmarkSet) -> Result<Self> {
        Self::with_capacity(reference, HISTORY_LEN)
    }

    pub fn with_capacity(reference: LandmarkSet, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("history capacity must be at least 1"));
        }
        let interocular = reference.interocular().ok_or_else(|| {
            Error::invalid("reference needs valid points in both eye regions")
        })?;
        Ok(TrackHistory {
            reference,
            interocular,
            capacity,
            frames: Vec::with_capacity(capacity),
        })
    }

    /// Adds a frame, dropping the oldest once full.
    pub fn push(&mut self, set: LandmarkSet) {
        if self.frames.len() == self.capacity {
            self.frames.remove(0);
        }
        self.frames.push(set);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn frames(&self) -> impl Iterator<Item = &LandmarkSet> {
        self.frames.iter()
    }

    pub fn smoothed(&self) -> Result<LandmarkSet> {
        median_smooth(&self.frames)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Interocular,
    RawPixels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector {
            values: vec![0.0; FEATURE_LEN],
            mask: vec![false; NUM_LANDMARKS],
        }
    }
}

/// Displacement of each slot from the reference divided by `interocular`.
pub fn feature_vector(current: &LandmarkSet, reference: &LandmarkSet, interocular: f64) -> Result<FeatureVector> {
    if !(interocular > 0.0) || !interocular.is_finite() {
        return Err(Error::invalid(format!("interocular distance must be positive, got {interocular}")));
    }
    if current.points.len() != NUM_LANDMARKS || reference.points.len() != NUM_LANDMARKS {
        return Err(Error::invalid("feature vectors need 21-point sets"));
    }
    let mut fv = FeatureVector::zeros();
    for (i, (c, r)) in current.points.iter().zip(&reference.points).enumerate() {
        if c.valid && r.valid {
            fv.values[2 * i] = (c.x - r.x) / interocular;
            fv.values[2 * i + 1] = (c.y - r.y) / interocular;
            fv.mask[i] = true;
        }
    }
    Ok(fv)
}

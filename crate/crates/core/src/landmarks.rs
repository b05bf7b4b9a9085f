//! Face-box division, minimum-eigenvalue corner maps, good-features
//! selection and the 21-point landmark set.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cascade::{detect_multiscale, Cascade, ScanParams};
use crate::error::{Error, Result};
use crate::imgcore::{sobel, Image, Rect, SobelParams};

pub const NUM_LANDMARKS: usize = 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    LeftEye,
    RightEye,
    Nose,
    Mouth,
    /// Back-filled from the whole face box.
    Face,
}

impl Region {
    pub const FEATURES: [Region; 4] = [Region::LeftEye, Region::RightEye, Region::Nose, Region::Mouth];

    pub fn name(self) -> &'static str {
        match self {
            Region::LeftEye => "left_eye",
            Region::RightEye => "right_eye",
            Region::Nose => "nose",
            Region::Mouth => "mouth",
            Region::Face => "face",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rectangle in face-box fractions: `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl FracRect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        FracRect { x0, y0, x1, y1 }
    }

    fn valid(&self) -> bool {
        let f = |v: f64| (0.0..=1.0).contains(&v);
        f(self.x0) && f(self.x1) && f(self.y0) && f(self.y1) && self.x0 <= self.x1 && self.y0 <= self.y1
    }
}

/// Geometric division of the face box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaceRegions {
    pub left_eye: FracRect,
    pub right_eye: FracRect,
    pub nose: FracRect,
    pub mouth: FracRect,
}

impl Default for FaceRegions {
    fn default() -> Self {
        FaceRegions {
            left_eye: FracRect::new(0.12, 0.48, 0.20, 0.48),
            right_eye: FracRect::new(0.52, 0.88, 0.20, 0.48),
            nose: FracRect::new(0.30, 0.70, 0.42, 0.68),
            mouth: FracRect::new(0.22, 0.78, 0.65, 0.95),
        }
    }
}

impl FaceRegions {
    pub fn get(&self, r: Region) -> FracRect {
        match r {
            Region::LeftEye => self.left_eye,
            Region::RightEye => self.right_eye,
            Region::Nose => self.nose,
            Region::Mouth | Region::Face => self.mouth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if Region::FEATURES.iter().all(|&r| self.get(r).valid()) {
            Ok(())
        } else {
            Err(Error::invalid(format!("face region fractions out of [0, 1]: {self:?}")))
        }
    }
}

/// Pixel rects of the four feature regions, in [`Region::FEATURES`] order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRects(pub [Rect; 4]);

impl RegionRects {
    pub fn get(&self, r: Region) -> Rect {
        match r {
            Region::LeftEye => self.0[0],
            Region::RightEye => self.0[1],
            Region::Nose => self.0[2],
            Region::Mouth | Region::Face => self.0[3],
        }
    }
}

pub fn divide_face(bbox: &Rect, ratios: &FaceRegions) -> RegionRects {
    let map = |f: FracRect| {
        let px = |frac: f64, len: u32| ((frac * len as f64).round() as u32).min(len);
        let (x0, x1) = (px(f.x0, bbox.w), px(f.x1, bbox.w));
        let (y0, y1) = (px(f.y0, bbox.h), px(f.y1, bbox.h));
        Rect::new(bbox.x + x0, bbox.y + y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    };
    RegionRects(Region::FEATURES.map(|r| map(ratios.get(r))))
}

/// Optional per-region cascades used to tighten the geometric regions.
#[derive(Clone, Debug, Default)]
pub struct RegionCascades {
    pub cascades: [Option<Cascade>; 4],
}

/// Replaces each region that has a cascade with that cascade's strongest
/// detection inside it; regions without a hit keep their geometric rect.
pub fn refine_regions(gray: &Image, rects: &RegionRects, rc: &RegionCascades, scan: &ScanParams) -> Result<RegionRects> {
    let mut out = *rects;
    for (i, c) in rc.cascades.iter().enumerate() {
        let Some(c) = c else { continue };
        let r = rects.0[i];
        if r.w < c.base || r.h < c.base {
            continue;
        }
        let crop = gray.crop(&r)?;
        if let Some(d) = detect_multiscale(c, &crop, scan)?.first() {
            out.0[i] = d.rect.translate(r.x, r.y);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CornerParams {
    /// Structure-tensor window side (odd).
    pub block_size: usize,
    pub quality_level: f64,
    pub min_distance: f64,
    /// Corners per region in [`Region::FEATURES`] order; must sum to 21.
    pub quotas: [usize; 4],
}

impl Default for CornerParams {
    fn default() -> Self {
        CornerParams {
            block_size: 3,
            quality_level: 0.01,
            min_distance: 5.0,
            quotas: [5, 5, 3, 8],
        }
    }
}

impl CornerParams {
    pub fn validate(&self) -> Result<()> {
        if self.quotas.iter().sum::<usize>() != NUM_LANDMARKS {
            return Err(Error::invalid(format!(
                "region quotas {:?} must sum to {NUM_LANDMARKS}",
                self.quotas
            )));
        }
        if !(self.quality_level > 0.0 && self.quality_level <= 1.0) || !(self.min_distance >= 0.0) {
            return Err(Error::invalid(format!("bad corner parameters: {self:?}")));
        }
        if self.block_size == 0 || self.block_size % 2 == 0 {
            return Err(Error::invalid("block_size must be odd"));
        }
        Ok(())
    }
}

/// Per-pixel smaller eigenvalue of the structure tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl EigenMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Structure tensor `[a b; b c]` summed over the block, in integers.
/// Pixels of the block outside the image contribute nothing.
pub fn structure_tensor(img: &Image, block_size: usize) -> Result<Vec<[i64; 3]>> {
    if !img.is_gray() {
        return Err(Error::invalid("corner map needs a single channel image"));
    }
    if block_size == 0 || block_size % 2 == 0 {
        return Err(Error::invalid("block_size must be odd"));
    }
    let (w, h) = (img.width(), img.height());
    if w <= block_size.max(3) || h <= block_size.max(3) {
        return Err(Error::invalid(format!(
            "image {w}x{h} too small for block size {block_size}"
        )));
    }
    let gx = sobel(img, SobelParams::DX)?;
    let gy = sobel(img, SobelParams::DY)?;
    let prod: Vec<[i64; 3]> = gx
        .data
        .iter()
        .zip(&gy.data)
        .map(|(&dx, &dy)| {
            let (dx, dy) = (dx as i64, dy as i64);
            [dx * dx, dx * dy, dy * dy]
        })
        .collect();
    // separable box sum: rows then columns
    let r = block_size / 2;
    let mut rows = vec![[0i64; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0i64; 3];
            for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                let p = prod[y * w + xx];
                acc[0] += p[0];
                acc[1] += p[1];
                acc[2] += p[2];
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![[0i64; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0i64; 3];
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                let p = rows[yy * w + x];
                acc[0] += p[0];
                acc[1] += p[1];
                acc[2] += p[2];
            }
            out[y * w + x] = acc;
        }
    }
    Ok(out)
}

/// `(tr - sqrt(tr^2 - 4 det)) / 2`, with the discriminant formed exactly
/// in integers as `(a - c)^2 + 4 b^2`.
#[inline]
pub fn min_eigenvalue(t: [i64; 3]) -> f64 {
    let [a, b, c] = t;
    let tr = (a + c) as f64;
    let disc = ((a - c) * (a - c) + 4 * b * b) as f64;
    ((tr - disc.sqrt()) / 2.0).max(0.0)
}

pub fn min_eigen_map(img: &Image, block_size: usize) -> Result<EigenMap> {
    let t = structure_tensor(img, block_size)?;
    Ok(EigenMap {
        width: img.width(),
        height: img.height(),
        data: t.into_iter().map(min_eigenvalue).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub x: u32,
    pub y: u32,
    pub score: f64,
}

/// Local maxima of the eigenvalue map inside `region` that pass the
/// quality threshold, strongest first (ties row-major).
pub fn corner_candidates(img: &Image, region: &Rect, p: &CornerParams) -> Result<Vec<Corner>> {
    if !img.contains(region) {
        return Err(Error::OutOfBounds(format!("region {region:?} outside frame")));
    }
    if region.is_empty() {
        return Ok(Vec::new());
    }
    // context so that values inside the region match a whole-frame map
    let margin = (p.block_size / 2 + 2) as u32;
    let x0 = region.x.saturating_sub(margin);
    let y0 = region.y.saturating_sub(margin);
    let x1 = (region.right() + margin).min(img.width() as u32);
    let y1 = (region.bottom() + margin).min(img.height() as u32);
    let ctx = Rect::new(x0, y0, x1 - x0, y1 - y0);
    if ctx.w as usize <= p.block_size.max(3) || ctx.h as usize <= p.block_size.max(3) {
        return Ok(Vec::new());
    }
    let map = min_eigen_map(&img.crop(&ctx)?, p.block_size)?;
    let (mw, mh) = (map.width as i64, map.height as i64);
    let mut max_score = 0.0f64;
    let mut cands = Vec::new();
    for y in region.y..region.bottom() {
        for x in region.x..region.right() {
            let (lx, ly) = ((x - x0) as i64, (y - y0) as i64);
            let v = map.get(lx as usize, ly as usize);
            max_score = max_score.max(v);
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (lx + dx, ly + dy);
                    if (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && nx < mw && ny < mh && map.get(nx as usize, ny as usize) > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                cands.push(Corner { x, y, score: v });
            }
        }
    }
    let floor = p.quality_level * max_score;
    cands.retain(|c| c.score >= floor);
    cands.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    Ok(cands)
}

/// Bucketed spatial index for the minimum-distance test.
struct DistanceGrid {
    cell: f64,
    min_d2: f64,
    buckets: std::collections::HashMap<(i64, i64), Vec<(f64, f64)>>,
}

impl DistanceGrid {
    fn new(min_distance: f64) -> Self {
        DistanceGrid {
            cell: min_distance.max(1.0),
            min_d2: min_distance * min_distance,
            buckets: Default::default(),
        }
    }

    fn key(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64)
    }

    fn is_free(&self, x: f64, y: f64) -> bool {
        let (kx, ky) = self.key(x, y);
        for by in ky - 1..=ky + 1 {
            for bx in kx - 1..=kx + 1 {
                if let Some(pts) = self.buckets.get(&(bx, by)) {
                    if pts.iter().any(|&(px, py)| (px - x).powi(2) + (py - y).powi(2) < self.min_d2) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn insert(&mut self, x: f64, y: f64) {
        let k = self.key(x, y);
        self.buckets.entry(k).or_default().push((x, y));
    }
}

/// Greedy pick in candidate order keeping every pair at least
/// `min_distance` apart, also from `taken`.
fn pick_spaced(cands: &[Corner], taken: &[(f64, f64)], min_distance: f64, max_n: usize) -> Vec<Corner> {
    let mut grid = DistanceGrid::new(min_distance);
    for &(x, y) in taken {
        grid.insert(x, y);
    }
    let mut out = Vec::new();
    for c in cands {
        if out.len() >= max_n {
            break;
        }
        let (x, y) = (c.x as f64, c.y as f64);
        if grid.is_free(x, y) {
            grid.insert(x, y);
            out.push(*c);
        }
    }
    out
}

/// Shi-Tomasi good features inside `region`, strongest first.
pub fn good_features(img: &Image, region: &Rect, p: &CornerParams, max_n: usize) -> Result<Vec<Corner>> {
    let cands = corner_candidates(img, region, p)?;
    Ok(pick_spaced(&cands, &[], p.min_distance, max_n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub region: Region,
    pub valid: bool,
}

/// The 21 tracked points, in fixed slots grouped by region quota.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<Landmark>,
}

impl LandmarkSet {
    /// All-invalid set whose slots are tagged by the quotas.
    pub fn empty(quotas: &[usize; 4]) -> Self {
        let mut points = Vec::with_capacity(NUM_LANDMARKS);
        for (r, &q) in Region::FEATURES.iter().zip(quotas) {
            for _ in 0..q {
                points.push(Landmark {
                    x: 0.0,
                    y: 0.0,
                    region: *r,
                    valid: false,
                });
            }
        }
        LandmarkSet { points }
    }

    pub fn valid_count(&self) -> usize {
        self.points.iter().filter(|p| p.valid).count()
    }

    /// Distance between the centroids of the valid left- and right-eye
    /// points, if both eyes have at least one.
    pub fn interocular(&self) -> Option<f64> {
        let centroid = |r: Region| {
            let pts: Vec<_> = self.points.iter().filter(|p| p.valid && p.region == r).collect();
            (!pts.is_empty()).then(|| {
                let n = pts.len() as f64;
                (pts.iter().map(|p| p.x).sum::<f64>() / n, pts.iter().map(|p| p.y).sum::<f64>() / n)
            })
        };
        let (l, r) = (centroid(Region::LeftEye)?, centroid(Region::RightEye)?);
        let d = ((l.0 - r.0).powi(2) + (l.1 - r.1).powi(2)).sqrt();
        (d > 0.0).then_some(d)
    }

    /// CSV rows `frame,point_index,region,x,y,valid`.
    pub fn write_csv(&self, frame: u64, out: &mut impl Write) -> std::io::Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            writeln!(out, "{frame},{i},{},{},{},{}", p.region, p.x, p.y, u8::from(p.valid))?;
        }
        Ok(())
    }
}

/// Fills each region's quota with its good features (row-major within the
/// region), then back-fills shortfalls from the rest of the face box.
pub fn select_21(img: &Image, face: &Rect, regions: &RegionRects, p: &CornerParams) -> Result<LandmarkSet> {
    p.validate()?;
    let gray = img.to_gray();
    let mut set = LandmarkSet::empty(&p.quotas);
    let mut taken: Vec<(f64, f64)> = Vec::new();
    let mut slot = 0;
    let mut shortfalls = Vec::new();
    for (k, region) in Region::FEATURES.iter().enumerate() {
        let quota = p.quotas[k];
        let r = regions.get(*region);
        let cands = corner_candidates(&gray, &r, p)?;
        let mut picked = pick_spaced(&cands, &taken, p.min_distance, quota);
        picked.sort_by(|a, b| a.y.cmp(&b.y).then(a.x.cmp(&b.x)));
        for (i, c) in picked.iter().enumerate() {
            taken.push((c.x as f64, c.y as f64));
            set.points[slot + i] = Landmark {
                x: c.x as f64,
                y: c.y as f64,
                region: *region,
                valid: true,
            };
        }
        if picked.len() < quota {
            shortfalls.push((slot + picked.len(), quota - picked.len()));
        }
        slot += quota;
    }
    if !shortfalls.is_empty() {
        let pool = corner_candidates(&gray, face, p)?;
        for (start, need) in shortfalls {
            let extra = pick_spaced(&pool, &taken, p.min_distance, need);
            for (i, c) in extra.iter().enumerate() {
                taken.push((c.x as f64, c.y as f64));
                set.points[start + i] = Landmark {
                    x: c.x as f64,
                    y: c.y as f64,
                    region: Region::Face,
                    valid: true,
                };
            }
        }
    }
    Ok(set)
}

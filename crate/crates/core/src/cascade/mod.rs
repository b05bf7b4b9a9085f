//! Haar-like rectangle features, boosted stump classifiers and the
//! attentional cascade.
//!
//! Features are defined in a `base x base` window (24 by default) and scaled
//! to the evaluated window; pixel sums come from an [`IntegralImage`] in four
//! lookups per rectangle.

mod adaboost;
mod interleave;
mod io;
mod scan;
mod train;

pub use adaboost::{train_adaboost, AdaBoost, LabeledWindow, RoundReport};
pub use interleave::{interleaved_detect, DetectOutcome, InterleaveState};
pub use io::{load_cascade, parse_cascade, save_cascade, write_cascade};
pub use scan::{
    detect_in, detect_multiscale, group_hits, scale_levels, scan_hits, window_count, Detection,
    ScaleLevel, ScanParams,
};
pub use train::{train_cascade, CascadeTrainParams, CascadeTrainReport, NegativeSource, StageReport};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{integral, integral_squared, Image, IntegralImage, Rect};

pub const DEFAULT_BASE: u32 = 24;

/// Which way the face in a cascade's training set was looking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pose {
    Frontal,
    Profile,
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pose::Frontal => "frontal",
            Pose::Profile => "profile",
        })
    }
}

impl FromStr for Pose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frontal" => Ok(Pose::Frontal),
            "profile" => Ok(Pose::Profile),
            _ => Err(Error::invalid(format!("unknown pose `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    TwoHorizontal,
    TwoVertical,
    ThreeHorizontal,
    ThreeVertical,
    Four,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::TwoHorizontal,
        FeatureKind::TwoVertical,
        FeatureKind::ThreeHorizontal,
        FeatureKind::ThreeVertical,
        FeatureKind::Four,
    ];

    /// Footprint in cells (columns, rows).
    fn cells(self) -> (u32, u32) {
        match self {
            FeatureKind::TwoHorizontal => (2, 1),
            FeatureKind::TwoVertical => (1, 2),
            FeatureKind::ThreeHorizontal => (3, 1),
            FeatureKind::ThreeVertical => (1, 3),
            FeatureKind::Four => (2, 2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::TwoHorizontal => "two_h",
            FeatureKind::TwoVertical => "two_v",
            FeatureKind::ThreeHorizontal => "three_h",
            FeatureKind::ThreeVertical => "three_v",
            FeatureKind::Four => "four",
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedRect {
    pub rect: Rect,
    pub weight: f64,
}

/// A rectangle feature: white rects weigh -1, grey rects are weighted so
/// that the weighted areas cancel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectFeature {
    pub kind: FeatureKind,
    pub rects: Vec<WeightedRect>,
}

impl RectFeature {
    /// Feature of `kind` anchored at `(x, y)` with cells of `cw x ch` pixels.
    pub fn new(kind: FeatureKind, x: u32, y: u32, cw: u32, ch: u32) -> Self {
        let r = |cx: u32, cy: u32, weight: f64| WeightedRect {
            rect: Rect::new(x + cx * cw, y + cy * ch, cw, ch),
            weight,
        };
        let rects = match kind {
            FeatureKind::TwoHorizontal => vec![r(0, 0, -1.0), r(1, 0, 1.0)],
            FeatureKind::TwoVertical => vec![r(0, 0, -1.0), r(0, 1, 1.0)],
            FeatureKind::ThreeHorizontal => vec![r(0, 0, -1.0), r(1, 0, 2.0), r(2, 0, -1.0)],
            FeatureKind::ThreeVertical => vec![r(0, 0, -1.0), r(0, 1, 2.0), r(0, 2, -1.0)],
            FeatureKind::Four => vec![r(0, 0, -1.0), r(1, 0, 1.0), r(0, 1, 1.0), r(1, 1, -1.0)],
        };
        RectFeature { kind, rects }
    }

    /// Sum of weight x area; zero for every feature built by [`RectFeature::new`].
    pub fn weighted_area(&self) -> f64 {
        self.rects.iter().map(|r| r.weight * r.rect.area() as f64).sum()
    }

    pub fn fits(&self, base: u32) -> bool {
        self.rects
            .iter()
            .all(|r| r.rect.right() <= base && r.rect.bottom() <= base)
    }
}

/// Every feature of every kind on a `stride` grid inside the base window,
/// evenly subsampled down to `cap` entries.
pub fn feature_pool(base: u32, stride: u32, cap: usize) -> Vec<RectFeature> {
    let stride = stride.max(1);
    let mut all = Vec::new();
    for kind in FeatureKind::ALL {
        let (nx, ny) = kind.cells();
        for ch in (stride..=base / ny).step_by(stride as usize) {
            for cw in (stride..=base / nx).step_by(stride as usize) {
                for y in (0..=base - ny * ch).step_by(stride as usize) {
                    for x in (0..=base - nx * cw).step_by(stride as usize) {
                        all.push(RectFeature::new(kind, x, y, cw, ch));
                    }
                }
            }
        }
    }
    if all.len() <= cap {
        return all;
    }
    let n = all.len();
    (0..cap).map(|i| all[i * n / cap].clone()).collect()
}

/// Thresholded single-feature classifier `h(x) = [p f(x) < p theta]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakClassifier {
    pub feature: RectFeature,
    pub threshold: f64,
    pub polarity: i8,
}

impl WeakClassifier {
    #[inline]
    pub fn decide(&self, value: f64) -> bool {
        eval_weak(self, value) == 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongClassifier {
    pub weak: Vec<(WeakClassifier, f64)>,
    pub threshold: f64,
}

impl StrongClassifier {
    pub fn alpha_sum(&self) -> f64 {
        self.weak.iter().map(|(_, a)| a).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub base: u32,
    pub pose: Pose,
    pub stages: Vec<StrongClassifier>,
}

impl Cascade {
    pub fn new(pose: Pose) -> Self {
        Cascade {
            base: DEFAULT_BASE,
            pose,
            stages: Vec::new(),
        }
    }
}

/// Integral tables of a gray frame: plain sums and sums of squares.
#[derive(Clone, Debug)]
pub struct Integrals {
    pub sum: IntegralImage,
    pub sq: IntegralImage,
}

impl Integrals {
    pub fn new(gray: &Image) -> Result<Self> {
        Ok(Integrals {
            sum: integral(gray)?,
            sq: integral_squared(gray)?,
        })
    }

    pub fn width(&self) -> usize {
        self.sum.width()
    }

    pub fn height(&self) -> usize {
        self.sum.height()
    }

    /// Square window of side `size` at `(x, y)` for a cascade with base
    /// window `base`.
    pub fn window(&self, x: u32, y: u32, size: u32, base: u32, normalize: bool) -> Result<Window> {
        let rect = Rect::new(x, y, size, size);
        if size == 0 || rect.right() as usize > self.width() || rect.bottom() as usize > self.height() {
            return Err(Error::OutOfBounds(format!(
                "window {rect:?} outside {}x{} frame",
                self.width(),
                self.height()
            )));
        }
        let norm = if normalize {
            self.inv_std(x as usize, y as usize, size as usize)
        } else {
            1.0
        };
        Ok(Window {
            rect,
            scale: size as f64 / base as f64,
            norm,
        })
    }

    /// `1 / sigma` of the window's pixels, with sigma floored at 1.
    #[inline]
    pub(crate) fn inv_std(&self, x: usize, y: usize, size: usize) -> f64 {
        let n = (size * size) as f64;
        let s = self.sum.sum(x, y, x + size, y + size) as f64;
        let q = self.sq.sum(x, y, x + size, y + size) as f64;
        let mean = s / n;
        let var = q / n - mean * mean;
        1.0 / var.max(1.0).sqrt()
    }
}

/// A scan window: its pixel rect, feature scale and normalization factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub rect: Rect,
    pub scale: f64,
    pub norm: f64,
}

/// One feature rectangle projected onto a window: corner offsets relative
/// to the window origin plus its area-corrected weight.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ScaledRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub coef: f64,
}

pub(crate) fn scale_rect(r: &WeightedRect, scale: f64) -> ScaledRect {
    let sx = |v: u32| (v as f64 * scale).round() as u32;
    let (x0, y0) = (sx(r.rect.x), sx(r.rect.y));
    let (x1, y1) = (sx(r.rect.right()), sx(r.rect.bottom()));
    let scaled_area = (x1 - x0) as f64 * (y1 - y0) as f64;
    // rescale so that each rect contributes as if it had its base area;
    // keeps the feature balanced after rounding
    let coef = if scaled_area > 0.0 {
        r.weight * (r.rect.area() as f64 / scaled_area)
    } else {
        0.0
    };
    ScaledRect {
        x0,
        y0,
        x1,
        y1,
        coef,
    }
}

/// Weighted rectangle-sum response of `f` on `w`, times the window's
/// normalization factor.
pub fn eval_feature(f: &RectFeature, ii: &IntegralImage, w: &Window) -> Result<f64> {
    let mut acc = 0.0;
    for r in &f.rects {
        let s = scale_rect(r, w.scale);
        if s.x1 > w.rect.w || s.y1 > w.rect.h {
            return Err(Error::OutOfBounds(format!(
                "feature rect {:?} overflows window {:?}",
                r.rect, w.rect
            )));
        }
        let sum = ii.sum(
            (w.rect.x + s.x0) as usize,
            (w.rect.y + s.y0) as usize,
            (w.rect.x + s.x1) as usize,
            (w.rect.y + s.y1) as usize,
        );
        acc += s.coef * sum as f64;
    }
    Ok(acc * w.norm)
}

/// `1` iff `p * value < p * theta`.
#[inline]
pub fn eval_weak(w: &WeakClassifier, value: f64) -> u8 {
    let p = w.polarity as f64;
    u8::from(p * value < p * w.threshold)
}

/// Strong-classifier decision and its raw score `sum alpha_i h_i`.
pub fn eval_strong(s: &StrongClassifier, ii: &IntegralImage, w: &Window) -> Result<(u8, f64)> {
    let mut score = 0.0;
    for (weak, alpha) in &s.weak {
        let v = eval_feature(&weak.feature, ii, w)?;
        if eval_weak(weak, v) == 1 {
            score += alpha;
        }
    }
    Ok((u8::from(score >= s.threshold), score))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CascadeDecision {
    Accept,
    /// Index of the first stage that rejected.
    Reject(usize),
}

impl CascadeDecision {
    pub fn accepted(self) -> bool {
        self == CascadeDecision::Accept
    }
}

pub fn eval_cascade(c: &Cascade, ii: &IntegralImage, w: &Window) -> Result<CascadeDecision> {
    eval_cascade_with(c, ii, w, |_| {})
}

/// [`eval_cascade`] calling `on_stage(i)` before stage `i` is evaluated.
pub fn eval_cascade_with(
    c: &Cascade,
    ii: &IntegralImage,
    w: &Window,
    mut on_stage: impl FnMut(usize),
) -> Result<CascadeDecision> {
    for (i, stage) in c.stages.iter().enumerate() {
        on_stage(i);
        if eval_strong(stage, ii, w)?.0 == 0 {
            return Ok(CascadeDecision::Reject(i));
        }
    }
    Ok(CascadeDecision::Accept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_feature(f: &RectFeature, img: &Image, w: &Window) -> f64 {
        let mut acc = 0.0;
        for r in &f.rects {
            let s = scale_rect(r, w.scale);
            let mut sum = 0u64;
            for y in s.y0..s.y1 {
                for x in s.x0..s.x1 {
                    sum += img.luma((w.rect.x + x) as usize, (w.rect.y + y) as usize) as u64;
                }
            }
            acc += s.coef * sum as f64;
        }
        acc * w.norm
    }

    #[test]
    fn built_features_balance() {
        for f in feature_pool(24, 2, usize::MAX) {
            assert_eq!(f.weighted_area(), 0.0, "{f:?}");
            assert!(f.fits(24));
        }
    }

    #[test]
    fn pool_cap_respected() {
        let full = feature_pool(24, 2, usize::MAX);
        assert!(full.len() > 1000);
        assert_eq!(feature_pool(24, 2, 1000).len(), 1000);
    }

    #[test]
    fn zero_image_zero_response() {
        let ints = Integrals::new(&Image::filled(30, 30, 1, 0)).unwrap();
        let w = ints.window(3, 2, 24, 24, true).unwrap();
        for f in feature_pool(24, 4, 300) {
            assert_eq!(eval_feature(&f, &ints.sum, &w).unwrap(), 0.0);
        }
    }

    #[test]
    fn half_bright_two_rect() {
        // left half 255 (white rect, weight -1), right half 0
        let img = Image::from_fn(24, 24, |x, _| if x < 12 { 255 } else { 0 });
        let ints = Integrals::new(&img).unwrap();
        let w = ints.window(0, 0, 24, 24, false).unwrap();
        let f = RectFeature::new(FeatureKind::TwoHorizontal, 0, 0, 12, 24);
        assert_eq!(eval_feature(&f, &ints.sum, &w).unwrap(), -255.0 * 12.0 * 24.0);
    }

    #[test]
    fn matches_naive_on_random_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let img = Image::from_fn(90, 70, |_, _| rng.gen());
        let ints = Integrals::new(&img).unwrap();
        let pool = feature_pool(24, 2, 5000);
        for _ in 0..100 {
            let size = rng.gen_range(24..=70);
            let x = rng.gen_range(0..=90 - size);
            let y = rng.gen_range(0..=70 - size);
            let w = ints.window(x, y, size, 24, rng.gen()).unwrap();
            let f = &pool[rng.gen_range(0..pool.len())];
            let got = eval_feature(f, &ints.sum, &w).unwrap();
            let want = naive_feature(f, &img, &w);
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn feature_overflowing_window_is_error() {
        let ints = Integrals::new(&Image::filled(40, 40, 1, 3)).unwrap();
        let w = ints.window(0, 0, 24, 24, false).unwrap();
        let f = RectFeature::new(FeatureKind::TwoHorizontal, 20, 0, 4, 4);
        assert!(matches!(eval_feature(&f, &ints.sum, &w), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn weak_polarity() {
        let mk = |p| WeakClassifier {
            feature: RectFeature::new(FeatureKind::Four, 0, 0, 1, 1),
            threshold: 10.0,
            polarity: p,
        };
        assert_eq!(eval_weak(&mk(1), 5.0), 1);
        assert_eq!(eval_weak(&mk(-1), 5.0), 0);
        // sweep: the decision flips exactly at theta, and theta itself is 0
        for p in [1i8, -1] {
            let w = mk(p);
            for i in -40..=40 {
                let f = 10.0 + i as f64 * 0.25;
                let want = (p as f64) * f < (p as f64) * 10.0;
                assert_eq!(eval_weak(&w, f) == 1, want);
            }
            assert_eq!(eval_weak(&w, 10.0), 0);
        }
    }

    fn constant_weak(fires: bool) -> WeakClassifier {
        // on any window the four-rect response of a flat image is 0
        WeakClassifier {
            feature: RectFeature::new(FeatureKind::Four, 0, 0, 2, 2),
            threshold: if fires { 1.0 } else { -1.0 },
            polarity: 1,
        }
    }

    #[test]
    fn empty_strong_accepts_at_zero() {
        let ints = Integrals::new(&Image::filled(24, 24, 1, 5)).unwrap();
        let w = ints.window(0, 0, 24, 24, true).unwrap();
        let s = StrongClassifier {
            weak: vec![],
            threshold: 0.0,
        };
        assert_eq!(eval_strong(&s, &ints.sum, &w).unwrap(), (1, 0.0));
    }

    #[test]
    fn two_votes_need_both() {
        let ints = Integrals::new(&Image::filled(24, 24, 1, 5)).unwrap();
        let w = ints.window(0, 0, 24, 24, true).unwrap();
        for a in [false, true] {
            for b in [false, true] {
                let s = StrongClassifier {
                    weak: vec![(constant_weak(a), 1.0), (constant_weak(b), 1.0)],
                    threshold: 1.5,
                };
                let (d, score) = eval_strong(&s, &ints.sum, &w).unwrap();
                assert_eq!(d == 1, a && b);
                assert_eq!(score, (a as u8 + b as u8) as f64);
            }
        }
    }

    #[test]
    fn cascade_short_circuits() {
        let ints = Integrals::new(&Image::filled(24, 24, 1, 5)).unwrap();
        let w = ints.window(0, 0, 24, 24, true).unwrap();
        let pass = StrongClassifier {
            weak: vec![(constant_weak(true), 1.0)],
            threshold: 0.5,
        };
        let fail = StrongClassifier {
            weak: vec![(constant_weak(false), 1.0)],
            threshold: 0.5,
        };
        let c = Cascade {
            base: 24,
            pose: Pose::Frontal,
            stages: vec![pass.clone(), fail, pass],
        };
        let mut seen = Vec::new();
        let d = eval_cascade_with(&c, &ints.sum, &w, |i| seen.push(i)).unwrap();
        assert_eq!(d, CascadeDecision::Reject(1));
        assert_eq!(seen.iter().filter(|&&i| i == 2).count(), 0);
        assert!(eval_cascade(&Cascade::new(Pose::Profile), &ints.sum, &w)
            .unwrap()
            .accepted());
    }
}

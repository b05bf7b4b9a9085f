use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synth::{render, SequenceParams, Split, SyntheticSpec};
use super::{Expression, SessionConfig};
use crate::cascade::{
    detect_multiscale, feature_pool, load_cascade, train_cascade, Cascade, CascadeTrainParams,
    CascadeTrainReport, Integrals, LabeledWindow, Pose,
};
use crate::error::{Error, Result};
use crate::imgcore::{Image, Rect};
use crate::skin::skin_fraction;

/// How the built-in detectors are trained from synthetic frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorTrainSpec {
    pub synth: SyntheticSpec,
    pub positive_frames: usize,
    pub windows_per_face: usize,
    /// Relative size jitter of positive windows around the face box.
    pub size_jitter: f64,
    /// Positional jitter as a fraction of the face side.
    pub shift_jitter: f64,
    pub negative_frames: usize,
    /// Windows overlapping a face at this IoU or more are never negatives.
    pub negative_max_iou: f64,
    pub pool_stride: u32,
    pub pool_cap: usize,
    pub cascade: CascadeTrainParams,
}

impl Default for DetectorTrainSpec {
    fn default() -> Self {
        DetectorTrainSpec {
            synth: SyntheticSpec {
                seed: 0x5eed_face,
                ..SyntheticSpec::default()
            },
            positive_frames: 120,
            windows_per_face: 4,
            size_jitter: 0.12,
            shift_jitter: 0.05,
            negative_frames: 40,
            negative_max_iou: 0.35,
            pool_stride: 1,
            pool_cap: 50_000,
            cascade: CascadeTrainParams {
                negatives_per_stage: 500,
                ..CascadeTrainParams::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct Detectors {
    pub frontal: Arc<Cascade>,
    pub profile: Arc<Cascade>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorReports {
    pub frontal: CascadeTrainReport,
    pub profile: CascadeTrainReport,
}

impl Detectors {
    /// Loads the configured cascade files; missing entries fall back to the
    /// built-in synthetic detectors.
    pub fn from_config(c: &SessionConfig) -> Result<Self> {
        let builtin = || builtin_detectors();
        let frontal = match &c.frontal_cascade {
            Some(p) => Arc::new(load_cascade(p)?),
            None => builtin()?.frontal,
        };
        let profile = match &c.profile_cascade {
            Some(p) => Arc::new(load_cascade(p)?),
            None => builtin()?.profile,
        };
        Ok(Detectors { frontal, profile })
    }
}

/// Detectors trained once per process with [`DetectorTrainSpec::default`].
pub fn builtin_detectors() -> Result<Detectors> {
    static CACHE: OnceLock<Detectors> = OnceLock::new();
    if let Some(d) = CACHE.get() {
        return Ok(d.clone());
    }
    let (d, _) = train_detectors(&DetectorTrainSpec::default())?;
    Ok(CACHE.get_or_init(|| d).clone())
}

fn draw_frame(spec: &DetectorTrainSpec, index: u64, profile: bool, rng: &mut ChaCha8Rng) -> (Image, Rect) {
    let class = Expression::ALL[index as usize % 4];
    let params = SequenceParams::draw(&spec.synth, Split::Train, index, class, profile);
    let t = rng.gen_range(0..spec.synth.frames);
    let (img, truth) = render(&spec.synth, &params, t);
    (img.to_gray(), truth.face)
}

fn positives(spec: &DetectorTrainSpec, profile: bool, rng: &mut ChaCha8Rng) -> Result<Vec<LabeledWindow>> {
    let base = spec.cascade.base;
    let mut out = Vec::new();
    for i in 0..spec.positive_frames {
        let (gray, face) = draw_frame(spec, i as u64, profile, rng);
        let side = face.w as f64;
        let m = (side * (spec.size_jitter + spec.shift_jitter) + 2.0).ceil() as u32;
        let x0 = face.x.saturating_sub(m);
        let y0 = face.y.saturating_sub(m);
        let x1 = (face.right() + m).min(gray.width() as u32);
        let y1 = (face.bottom() + m).min(gray.height() as u32);
        let region = Rect::new(x0, y0, x1 - x0, y1 - y0);
        let ints = Arc::new(Integrals::new(&gray.crop(&region)?)?);
        let (cx, cy) = (
            (face.x - x0) as f64 + side / 2.0,
            (face.y - y0) as f64 + side / 2.0,
        );
        for k in 0..spec.windows_per_face {
            let (u, sx, sy) = if k == 0 {
                (1.0, 0.0, 0.0)
            } else {
                (
                    1.0 + rng.gen_range(-spec.size_jitter..=spec.size_jitter),
                    rng.gen_range(-spec.shift_jitter..=spec.shift_jitter) * side,
                    rng.gen_range(-spec.shift_jitter..=spec.shift_jitter) * side,
                )
            };
            let size = (side * u).round().max(base as f64);
            let x = (cx + sx - size / 2.0).round();
            let y = (cy + sy - size / 2.0).round();
            if x < 0.0 || y < 0.0 {
                continue;
            }
            if let Ok(window) = ints.window(x as u32, y as u32, size as u32, base, spec.cascade.normalize) {
                out.push(LabeledWindow {
                    integrals: ints.clone(),
                    window,
                    positive: true,
                });
            }
        }
    }
    Ok(out)
}

/// Trains the frontal and profile cascades from synthetic frames.
pub fn train_detectors(spec: &DetectorTrainSpec) -> Result<(Detectors, DetectorReports)> {
    spec.synth.validate()?;
    let pool = feature_pool(spec.cascade.base, spec.pool_stride, spec.pool_cap);
    let mut cascades = Vec::new();
    let mut reports = Vec::new();
    for (pose, profile) in [(Pose::Frontal, false), (Pose::Profile, true)] {
        let mut rng = rand::SeedableRng::seed_from_u64(spec.cascade.seed ^ profile as u64);
        let pos = positives(spec, profile, &mut rng)?;
        let mut frames = Vec::with_capacity(spec.negative_frames);
        for i in 0..spec.negative_frames {
            // mix both poses so each detector learns to reject the other
            let (gray, face) = draw_frame(spec, 10_000 + i as u64, i % 2 == 1, &mut rng);
            frames.push((Arc::new(Integrals::new(&gray)?), face));
        }
        let base = spec.cascade.base;
        let normalize = spec.cascade.normalize;
        let max_iou = spec.negative_max_iou;
        let mut source = |rng: &mut ChaCha8Rng| -> Option<LabeledWindow> {
            for _ in 0..64 {
                let (ints, face) = &frames[rng.gen_range(0..frames.len())];
                let limit = ints.width().min(ints.height()) as u32;
                let size = rng.gen_range(base..=limit);
                let x = rng.gen_range(0..=ints.width() as u32 - size);
                let y = rng.gen_range(0..=ints.height() as u32 - size);
                if Rect::new(x, y, size, size).iou(face) >= max_iou {
                    continue;
                }
                let window = ints.window(x, y, size, base, normalize).ok()?;
                return Some(LabeledWindow {
                    integrals: ints.clone(),
                    window,
                    positive: false,
                });
            }
            None
        };
        let params = CascadeTrainParams {
            seed: spec.cascade.seed.wrapping_add(profile as u64),
            ..spec.cascade.clone()
        };
        let (c, r) = train_cascade(&pos, &mut source, &pool, &params, pose)?;
        log::info!("{pose} cascade: {} stages ({})", c.stages.len(), r.stop_reason);
        cascades.push(Arc::new(c));
        reports.push(r);
    }
    let profile = cascades.pop().expect("two cascades");
    let frontal = cascades.pop().expect("two cascades");
    let profile_report = reports.pop().expect("two reports");
    let frontal_report = reports.pop().expect("two reports");
    Ok((
        Detectors { frontal, profile },
        DetectorReports {
            frontal: frontal_report,
            profile: profile_report,
        },
    ))
}

/// Trains one cascade from face crops and face-free background images.
/// Each positive contributes its largest centered square; negatives are
/// random windows of the backgrounds.
pub fn train_cascade_from_images(
    positives: &[Image],
    backgrounds: &[Image],
    params: &CascadeTrainParams,
    pool_stride: u32,
    pool_cap: usize,
    pose: Pose,
) -> Result<(Cascade, CascadeTrainReport)> {
    let base = params.base;
    let mut pos = Vec::with_capacity(positives.len());
    for img in positives {
        let side = img.width().min(img.height());
        if side < base as usize {
            return Err(Error::invalid(format!(
                "positive {}x{} is smaller than the {base}px base window",
                img.width(),
                img.height()
            )));
        }
        let ints = Arc::new(Integrals::new(&img.to_gray())?);
        let x = ((img.width() - side) / 2) as u32;
        let y = ((img.height() - side) / 2) as u32;
        pos.push(LabeledWindow {
            window: ints.window(x, y, side as u32, base, params.normalize)?,
            integrals: ints,
            positive: true,
        });
    }
    let frames: Vec<Arc<Integrals>> = backgrounds
        .iter()
        .filter(|b| b.width().min(b.height()) >= base as usize)
        .map(|b| Integrals::new(&b.to_gray()).map(Arc::new))
        .collect::<Result<_>>()?;
    if frames.is_empty() {
        return Err(Error::invalid(format!("no background image is at least {base}px on each side")));
    }
    let normalize = params.normalize;
    let mut source = |rng: &mut ChaCha8Rng| -> Option<LabeledWindow> {
        let ints = &frames[rng.gen_range(0..frames.len())];
        let size = rng.gen_range(base..=ints.width().min(ints.height()) as u32);
        let x = rng.gen_range(0..=ints.width() as u32 - size);
        let y = rng.gen_range(0..=ints.height() as u32 - size);
        Some(LabeledWindow {
            window: ints.window(x, y, size, base, normalize).ok()?,
            integrals: ints.clone(),
            positive: false,
        })
    };
    let pool = feature_pool(base, pool_stride, pool_cap);
    train_cascade(&pos, &mut source, &pool, params, pose)
}

/// A merged detection, the cascade that found it and its skin check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceDetection {
    pub rect: Rect,
    pub neighbors: usize,
    pub pose: Pose,
    /// `None` on grayscale input, where the skin check is skipped.
    pub skin_fraction: Option<f64>,
    pub verified: bool,
}

/// Runs both cascades over the whole frame, frontal detections first.
pub fn detect_faces(img: &Image, config: &SessionConfig, detectors: &Detectors) -> Result<Vec<FaceDetection>> {
    let gray = img.to_gray();
    let mut out = Vec::new();
    for cascade in [&detectors.frontal, &detectors.profile] {
        for d in detect_multiscale(cascade, &gray, &config.scan)? {
            let skin_fraction = if img.is_gray() {
                None
            } else {
                Some(skin_fraction(img, &d.rect, &config.skin)?.fraction)
            };
            out.push(FaceDetection {
                rect: d.rect,
                neighbors: d.neighbors,
                pose: cascade.pose,
                verified: skin_fraction.map_or(true, |f| f >= config.skin.min_skin_fraction),
                skin_fraction,
            });
        }
    }
    Ok(out)
}

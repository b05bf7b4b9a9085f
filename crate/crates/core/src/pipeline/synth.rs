//! Deterministic schematic-face sequences with per-class deformations.
//!
//! A face is a square skin-tone box holding two brows, two eyes, a nose and
//! two lip bars on a textured bluish background. Each class moves some of
//! those parts over the first `ramp_frames` frames and then holds the pose.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sequence::{write_manifest, Frames, LabeledSequence};
use super::Expression;
use crate::error::{Error, Result};
use crate::imgcore::{write_pnm, Image, Rect};

/// Largest deformation, as a fraction of the face side, that keeps every
/// part inside the face box.
pub const MAX_AMPLITUDE: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub classes: Vec<Expression>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub face_min: usize,
    pub face_max: usize,
    /// Peak deformation as a fraction of the face side.
    pub amplitude: f64,
    pub ramp_frames: usize,
    /// Per-pixel uniform noise amplitude in gray levels.
    pub noise: u8,
    /// Largest whole-face drift over a sequence, in pixels per axis.
    pub max_drift: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            classes: Expression::ALL.to_vec(),
            train_per_class: 8,
            test_per_class: 4,
            frames: 40,
            width: 320,
            height: 240,
            face_min: 96,
            face_max: 128,
            amplitude: 0.06,
            ramp_frames: 8,
            noise: 6,
            max_drift: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.classes.is_empty() || self.frames == 0 {
            return bad("need at least one class and one frame".into());
        }
        if self.face_min < 48 || self.face_min > self.face_max {
            return bad(format!("face size range {}..{} is invalid", self.face_min, self.face_max));
        }
        let room = self.width.min(self.height) as f64 - 2.0 * (self.max_drift.ceil() + 2.0);
        if self.face_max as f64 > room {
            return bad(format!(
                "faces up to {} px with drift {} do not fit a {}x{} frame",
                self.face_max, self.max_drift, self.width, self.height
            ));
        }
        if !(0.0..=MAX_AMPLITUDE).contains(&self.amplitude) {
            return bad(format!(
                "amplitude {} moves features outside the face box (max {MAX_AMPLITUDE})",
                self.amplitude
            ));
        }
        if self.max_drift < 0.0 || !self.max_drift.is_finite() {
            return bad("drift must be non-negative".into());
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_per_class,
            Split::Test => self.test_per_class,
        }
    }

    /// The sequences of one split, rendered lazily.
    pub fn sequences(&self, split: Split) -> Result<Vec<LabeledSequence>> {
        self.validate()?;
        let spec = Arc::new(self.clone());
        let mut out = Vec::new();
        for (ci, &class) in self.classes.iter().enumerate() {
            for k in 0..self.count(split) {
                let index = (ci * self.count(split) + k) as u64;
                let params = SequenceParams::draw(self, split, index, class, false);
                out.push(LabeledSequence {
                    label: class.id(),
                    name: sequence_name(index, class),
                    frames: Frames::Synthetic {
                        spec: spec.clone(),
                        params: Box::new(params),
                    },
                });
            }
        }
        Ok(out)
    }
}

fn sequence_name(index: u64, class: Expression) -> String {
    format!("{index:03}_{}", class.name().to_lowercase())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Shade {
    rect: [f64; 4],
    color: [u8; 3],
}

/// Everything random about one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub expression: Expression,
    pub profile: bool,
    pub face: Rect,
    pub drift: (f64, f64),
    pub skin: [u8; 3],
    /// Per-sequence offsets of part positions, as face fractions.
    pub jitter: [f64; 4],
    stream: u64,
    background: [u8; 3],
    shades: Vec<Shade>,
}

impl SequenceParams {
    pub fn draw(spec: &SyntheticSpec, split: Split, index: u64, expression: Expression, profile: bool) -> Self {
        let stream = ((split == Split::Test) as u64) << 40 | (profile as u64) << 39 | index;
        let mut rng = rng_for(spec.seed, stream, u64::MAX);
        let side = rng.gen_range(spec.face_min..=spec.face_max) as u32;
        let margin = spec.max_drift.ceil() as u32 + 2;
        let x = rng.gen_range(margin..=spec.width as u32 - side - margin);
        let y = rng.gen_range(margin..=spec.height as u32 - side - margin);
        let drift = (
            rng.gen_range(-spec.max_drift..=spec.max_drift),
            rng.gen_range(-spec.max_drift..=spec.max_drift),
        );
        let r: f64 = rng.gen_range(185.0..225.0);
        let g = r * rng.gen_range(0.70..0.80);
        let b = g * rng.gen_range(0.75..0.90);
        let skin = [r as u8, g as u8, b as u8];
        let jitter = [(); 4].map(|_| rng.gen_range(-0.015..0.015));
        let background = [rng.gen_range(40..90), rng.gen_range(80..130), rng.gen_range(150..210)];
        let shades = (0..14)
            .map(|_| {
                let (x0, y0) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                let (w, h) = (rng.gen_range(0.05..0.4), rng.gen_range(0.05..0.4));
                let color = match rng.gen_range(0..3) {
                    0 => {
                        let v = rng.gen_range(30..220);
                        [v, v, v]
                    }
                    1 => [rng.gen_range(20..80), rng.gen_range(90..160), rng.gen_range(60..140)],
                    _ => [rng.gen_range(20..100), rng.gen_range(40..140), rng.gen_range(120..240)],
                };
                Shade {
                    rect: [x0, y0, x0 + w, y0 + h],
                    color,
                }
            })
            .collect();
        SequenceParams {
            expression,
            profile,
            face: Rect::new(x, y, side, side),
            drift,
            skin,
            jitter,
            stream,
            background,
            shades,
        }
    }
}

fn rng_for(seed: u64, stream: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ frame.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(stream);
    rng
}

/// A named part and where it was drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub name: String,
    pub rect: Rect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame: usize,
    pub face: Rect,
    /// Deformation in pixels at this frame.
    pub deformation: f64,
    pub parts: Vec<Part>,
}

impl FrameTruth {
    pub fn part(&self, name: &str) -> Option<Rect> {
        self.parts.iter().find(|p| p.name == name).map(|p| p.rect)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceTruth {
    pub expression: Expression,
    pub params: SequenceParams,
    pub frames: Vec<FrameTruth>,
}

/// Parts in face fractions `[x0, y0, x1, y1]` before deformation.
fn layout(profile: bool, j: [f64; 4]) -> Vec<(&'static str, [f64; 4])> {
    if profile {
        vec![
            ("brow", [0.48, 0.20 + j[0], 0.72, 0.27 + j[0]]),
            ("eye", [0.52 + j[1], 0.33, 0.68 + j[1], 0.41]),
            ("nose", [0.80, 0.45 + j[2], 0.96, 0.62 + j[2]]),
            ("upper_lip", [0.55, 0.67 + j[3], 0.80, 0.74 + j[3]]),
            ("lower_lip", [0.55, 0.80 + j[3], 0.80, 0.87 + j[3]]),
        ]
    } else {
        vec![
            ("left_brow", [0.16 + j[1], 0.20 + j[0], 0.42 + j[1], 0.27 + j[0]]),
            ("right_brow", [0.58 - j[1], 0.20 + j[0], 0.84 - j[1], 0.27 + j[0]]),
            ("left_eye", [0.20 + j[1], 0.33, 0.34 + j[1], 0.41]),
            ("right_eye", [0.66 - j[1], 0.33, 0.80 - j[1], 0.41]),
            ("nose", [0.45, 0.47 + j[2], 0.55, 0.62 + j[2]]),
            ("upper_lip", [0.32, 0.67 + j[3], 0.68, 0.74 + j[3]]),
            ("lower_lip", [0.32, 0.80 + j[3], 0.68, 0.87 + j[3]]),
        ]
    }
}

/// Moves parts for `e` at deformation `a` (a face fraction).
fn deform(e: Expression, name: &str, r: [f64; 4], a: f64) -> [f64; 4] {
    let [x0, y0, x1, y1] = r;
    let brow = name.ends_with("brow");
    match (e, name) {
        (Expression::Smile, "upper_lip" | "lower_lip") => [x0 - a, y0 - a / 2.0, x1 + a, y1 - a / 2.0],
        (Expression::Angry, _) if brow => [x0, y0 + 0.8 * a, x1, y1 + 0.8 * a],
        (Expression::Excited, _) if brow => [x0, y0 - 0.8 * a, x1, y1 - 0.8 * a],
        (Expression::Excited, "upper_lip") => [x0, y0 - a / 2.0, x1, y1 - a / 2.0],
        (Expression::Excited, "lower_lip") => [x0, y0 + a, x1, y1 + a],
        _ => r,
    }
}

fn part_color(name: &str, skin: [u8; 3]) -> [u8; 3] {
    let scale = |k: f64| skin.map(|c| (c as f64 * k) as u8);
    match name {
        n if n.ends_with("brow") => [38, 28, 22],
        n if n.ends_with("eye") => [70, 52, 48],
        "nose" => scale(0.55),
        _ => [150, 48, 58],
    }
}

/// Deformation in pixels at frame `t`.
pub fn deformation_at(spec: &SyntheticSpec, params: &SequenceParams, t: usize) -> f64 {
    if params.expression == Expression::Neutral {
        return 0.0;
    }
    let ramp = if spec.ramp_frames == 0 {
        1.0
    } else {
        (t.min(spec.ramp_frames)) as f64 / spec.ramp_frames as f64
    };
    spec.amplitude * ramp * params.face.w as f64
}

/// Renders frame `t` and its ground truth.
pub fn render(spec: &SyntheticSpec, params: &SequenceParams, t: usize) -> (Image, FrameTruth) {
    let (w, h) = (spec.width, spec.height);
    let mut data = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 / w as f64, y as f64 / h as f64);
            let mut c = params.background;
            for s in &params.shades {
                if fx >= s.rect[0] && fx < s.rect[2] && fy >= s.rect[1] && fy < s.rect[3] {
                    c = s.color;
                }
            }
            // faint diagonal weave so no background patch is flat
            let weave = ((x / 3 + y / 5) % 4) as u8 * 6;
            let i = (y * w + x) * 3;
            data[i] = c[0].saturating_add(weave);
            data[i + 1] = c[1].saturating_add(weave);
            data[i + 2] = c[2].saturating_add(weave);
        }
    }
    let progress = if spec.frames > 1 {
        t as f64 / (spec.frames - 1) as f64
    } else {
        0.0
    };
    let dx = (params.drift.0 * progress).round() as i64;
    let dy = (params.drift.1 * progress).round() as i64;
    let f = params.face;
    let face = Rect::new((f.x as i64 + dx) as u32, (f.y as i64 + dy) as u32, f.w, f.h);
    let mut fill = |r: Rect, c: [u8; 3]| {
        for y in r.y..r.bottom() {
            for x in r.x..r.right() {
                let i = (y as usize * w + x as usize) * 3;
                data[i..i + 3].copy_from_slice(&c);
            }
        }
    };
    fill(face, params.skin);
    let a_px = deformation_at(spec, params, t);
    let a = a_px / f.w as f64;
    let side = f.w as f64;
    let mut parts = Vec::new();
    for (name, r) in layout(params.profile, params.jitter) {
        let [x0, y0, x1, y1] = deform(params.expression, name, r, a);
        let px = |v: f64| (v * side).round() as u32;
        let rect = Rect::new(face.x + px(x0), face.y + px(y0), px(x1) - px(x0), px(y1) - px(y0));
        fill(rect, part_color(name, params.skin));
        parts.push(Part {
            name: name.to_string(),
            rect,
        });
    }
    if spec.noise > 0 {
        let mut rng = rng_for(spec.seed, params.stream, t as u64);
        let n = spec.noise as i16;
        for v in data.iter_mut() {
            *v = (*v as i16 + rng.gen_range(-n..=n)).clamp(0, 255) as u8;
        }
    }
    let img = Image::rgb(w, h, data).expect("frame dimensions");
    (
        img,
        FrameTruth {
            frame: t,
            face,
            deformation: a_px,
            parts,
        },
    )
}

pub fn sequence_truth(spec: &SyntheticSpec, params: &SequenceParams) -> SequenceTruth {
    SequenceTruth {
        expression: params.expression,
        params: params.clone(),
        frames: (0..spec.frames).map(|t| render(spec, params, t).1).collect(),
    }
}

/// Paths written by [`generate_synthetic`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSet {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub sequences: usize,
    pub frames: usize,
}

/// Writes `train.tsv`, `test.tsv` and one directory of PPM frames plus a
/// `truth.json` per sequence under `out`.
pub fn generate_synthetic(spec: &SyntheticSpec, out: impl AsRef<Path>) -> Result<SyntheticSet> {
    spec.validate()?;
    let out = out.as_ref();
    let mut total_frames = 0;
    let mut manifests = Vec::new();
    for split in [Split::Train, Split::Test] {
        let split_name = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let mut entries = Vec::new();
        for seq in spec.sequences(split)? {
            let Frames::Synthetic { params, .. } = &seq.frames else {
                unreachable!("synthetic sequences render lazily")
            };
            let rel = PathBuf::from(split_name).join(&seq.name);
            let dir = out.join(&rel);
            std::fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
            let mut truth = Vec::with_capacity(spec.frames);
            for t in 0..spec.frames {
                let (img, ft) = render(spec, params, t);
                write_pnm(dir.join(format!("frame_{t:06}.ppm")), &img)?;
                truth.push(ft);
                total_frames += 1;
            }
            let st = SequenceTruth {
                expression: params.expression,
                params: (**params).clone(),
                frames: truth,
            };
            let tp = dir.join("truth.json");
            let json = serde_json::to_string_pretty(&st).expect("truth serializes");
            std::fs::write(&tp, json).map_err(|e| Error::file(&tp, e))?;
            entries.push((seq.label, rel));
        }
        let mp = out.join(format!("{split_name}.tsv"));
        write_manifest(&mp, &entries)?;
        manifests.push(mp);
    }
    Ok(SyntheticSet {
        train_manifest: manifests[0].clone(),
        test_manifest: manifests[1].clone(),
        sequences: spec.classes.len() * (spec.train_per_class + spec.test_per_class),
        frames: total_frames,
    })
}

use serde::{Deserialize, Serialize};

use super::{scale_rect, Cascade, Integrals};
use crate::error::{Error, Result};
use crate::imgcore::{Image, Rect};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanParams {
    pub scale_start: f64,
    pub scale_factor: f64,
    /// Window step in pixels at scale 1; grows with the scale.
    pub step: f64,
    pub variance_normalization: bool,
    /// Minimum raw hits in a group for it to be reported.
    pub min_neighbors: usize,
    /// IoU at or above which two raw hits belong to the same group.
    pub group_iou: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            scale_start: 1.0,
            scale_factor: 1.25,
            step: 1.0,
            variance_normalization: true,
            min_neighbors: 2,
            group_iou: 0.3,
        }
    }
}

impl ScanParams {
    fn validate(&self) -> Result<()> {
        if !(self.scale_factor > 1.0) || !(self.scale_start > 0.0) || !(self.step > 0.0) {
            return Err(Error::invalid(format!(
                "scan needs scale_factor > 1 and positive start/step, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScaleLevel {
    pub size: u32,
    pub step: u32,
}

/// Window sizes and steps visited on a `width x height` frame.
pub fn scale_levels(width: usize, height: usize, base: u32, p: &ScanParams) -> Result<Vec<ScaleLevel>> {
    p.validate()?;
    let limit = width.min(height) as f64;
    let mut out: Vec<ScaleLevel> = Vec::new();
    let mut s = p.scale_start;
    loop {
        let size = (base as f64 * s).round();
        if size > limit {
            break;
        }
        let size = size as u32;
        if size >= 1 && out.last().map_or(true, |l| l.size != size) {
            let step = (p.step * s).round().max(1.0) as u32;
            out.push(ScaleLevel { size, step });
        }
        s *= p.scale_factor;
    }
    Ok(out)
}

/// Number of windows a scan visits, in closed form.
pub fn window_count(width: usize, height: usize, base: u32, p: &ScanParams) -> Result<usize> {
    Ok(scale_levels(width, height, base, p)?
        .iter()
        .map(|l| {
            let nx = (width - l.size as usize) / l.step as usize + 1;
            let ny = (height - l.size as usize) / l.step as usize + 1;
            nx * ny
        })
        .sum())
}

struct FastRect {
    offs: [usize; 4],
    coef: f64,
}

struct FastWeak {
    rects: std::ops::Range<usize>,
    threshold: f64,
    polarity: f64,
    alpha: f64,
}

struct FastStage {
    weak: Vec<FastWeak>,
    threshold: f64,
}

/// A cascade with every feature projected to one window size, addressed by
/// flat offsets into the integral table.
struct ScaledCascade {
    rects: Vec<FastRect>,
    stages: Vec<FastStage>,
}

impl ScaledCascade {
    fn new(c: &Cascade, size: u32, stride: usize) -> Self {
        let scale = size as f64 / c.base as f64;
        let mut rects = Vec::new();
        let stages = c
            .stages
            .iter()
            .map(|st| FastStage {
                threshold: st.threshold,
                weak: st
                    .weak
                    .iter()
                    .map(|(w, alpha)| {
                        let start = rects.len();
                        for r in &w.feature.rects {
                            let s = scale_rect(r, scale);
                            let (x0, y0, x1, y1) =
                                (s.x0 as usize, s.y0 as usize, s.x1 as usize, s.y1 as usize);
                            rects.push(FastRect {
                                offs: [y0 * stride + x0, y0 * stride + x1, y1 * stride + x0, y1 * stride + x1],
                                coef: s.coef,
                            });
                        }
                        FastWeak {
                            rects: start..rects.len(),
                            threshold: w.threshold,
                            polarity: w.polarity as f64,
                            alpha: *alpha,
                        }
                    })
                    .collect(),
            })
            .collect();
        ScaledCascade { rects, stages }
    }

    #[inline]
    fn accepts(&self, ints: &Integrals, origin: usize, norm: f64) -> bool {
        for st in &self.stages {
            let mut score = 0.0;
            for w in &st.weak {
                let mut acc = 0.0;
                for r in &self.rects[w.rects.clone()] {
                    acc += r.coef * ints.sum.sum_at(origin, &r.offs) as f64;
                }
                let v = acc * norm;
                if w.polarity * v < w.polarity * w.threshold {
                    score += w.alpha;
                }
            }
            if !(score >= st.threshold) {
                return false;
            }
        }
        true
    }
}

/// Every window the cascade accepts, in scan order (scale, then row, then
/// column).
pub fn scan_hits(c: &Cascade, ints: &Integrals, p: &ScanParams) -> Result<Vec<Rect>> {
    let (w, h) = (ints.width(), ints.height());
    let stride = ints.sum.stride();
    let mut hits = Vec::new();
    for level in scale_levels(w, h, c.base, p)? {
        let sc = ScaledCascade::new(c, level.size, stride);
        let size = level.size as usize;
        let step = level.step as usize;
        for y in (0..=h - size).step_by(step) {
            for x in (0..=w - size).step_by(step) {
                let norm = if p.variance_normalization {
                    ints.inv_std(x, y, size)
                } else {
                    1.0
                };
                if sc.accepts(ints, y * stride + x, norm) {
                    hits.push(Rect::new(x as u32, y as u32, level.size, level.size));
                }
            }
        }
    }
    Ok(hits)
}

/// A merged detection and the number of raw hits behind it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub rect: Rect,
    pub neighbors: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups raw hits transitively by IoU, keeps groups with at least
/// `min_neighbors` members and reports each group's mean box, most
/// supported first.
pub fn group_hits(hits: &[Rect], p: &ScanParams) -> Vec<Detection> {
    let n = hits.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if hits[i].iou(&hits[j]) >= p.group_iou {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut sums: Vec<(u64, u64, u64, u64, usize)> = vec![(0, 0, 0, 0, 0); n];
    for (i, r) in hits.iter().enumerate() {
        let g = find(&mut parent, i);
        let e = &mut sums[g];
        e.0 += r.x as u64;
        e.1 += r.y as u64;
        e.2 += r.w as u64;
        e.3 += r.h as u64;
        e.4 += 1;
    }
    let mean = |s: u64, k: usize| ((s as f64) / k as f64).round() as u32;
    let mut out: Vec<Detection> = sums
        .into_iter()
        .filter(|e| e.4 > 0 && e.4 >= p.min_neighbors)
        .map(|(x, y, w, h, k)| Detection {
            rect: Rect::new(mean(x, k), mean(y, k), mean(w, k), mean(h, k)),
            neighbors: k,
        })
        .collect();
    out.sort_by(|a, b| {
        b.neighbors
            .cmp(&a.neighbors)
            .then(a.rect.y.cmp(&b.rect.y))
            .then(a.rect.x.cmp(&b.rect.x))
    });
    out
}

/// Scan plus grouping on precomputed integrals.
pub fn detect_in(c: &Cascade, ints: &Integrals, p: &ScanParams) -> Result<Vec<Detection>> {
    Ok(group_hits(&scan_hits(c, ints, p)?, p))
}

/// Multi-scale detection on a frame; frames smaller than the base window
/// yield no detections.
pub fn detect_multiscale(c: &Cascade, img: &Image, p: &ScanParams) -> Result<Vec<Detection>> {
    p.validate()?;
    if img.width() < c.base as usize || img.height() < c.base as usize {
        return Ok(Vec::new());
    }
    let gray = img.to_gray();
    detect_in(c, &Integrals::new(&gray)?, p)
}

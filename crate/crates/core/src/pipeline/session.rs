use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::detector::Detectors;
use super::SessionConfig;
use crate::cascade::{interleaved_detect, DetectOutcome, Integrals, InterleaveState, Pose};
use crate::error::{Error, Result};
use crate::flow::{feature_vector, track_set, FeatureVector, Normalization, TrackHistory};
use crate::imgcore::{Image, Rect};
use crate::landmarks::{divide_face, refine_regions, select_21, LandmarkSet, RegionCascades};
use crate::skin::skin_fraction;
use crate::svm::{Model, Prediction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSource {
    Frontal,
    Profile,
    Tracked,
    None,
}

impl From<Pose> for FrameSource {
    fn from(p: Pose) -> Self {
        match p {
            Pose::Frontal => FrameSource::Frontal,
            Pose::Profile => FrameSource::Profile,
        }
    }
}

/// Wall time per stage in microseconds. Stages are disjoint intervals of
/// the frame, so their sum never exceeds `total_us`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub prepare_us: u64,
    pub detect_us: u64,
    pub skin_us: u64,
    pub landmarks_us: u64,
    pub track_us: u64,
    pub smooth_us: u64,
    pub predict_us: u64,
    pub total_us: u64,
}

impl Timings {
    pub const STAGES: [&'static str; 7] = ["prepare", "detect", "skin", "landmarks", "track", "smooth", "predict"];

    pub fn stages(&self) -> [u64; 7] {
        [
            self.prepare_us,
            self.detect_us,
            self.skin_us,
            self.landmarks_us,
            self.track_us,
            self.smooth_us,
            self.predict_us,
        ]
    }

    pub fn stage_sum(&self) -> u64 {
        self.stages().iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: u64,
    pub face: Option<Rect>,
    pub source: FrameSource,
    /// Skin share of the accepted detection; absent for gray input or when
    /// nothing was detected.
    pub skin_fraction: Option<f64>,
    pub skin_checked: bool,
    pub landmarks: Option<LandmarkSet>,
    /// True on the frame that captured the neutral reference.
    pub reference_captured: bool,
    /// Present on the last frame of each full smoothing window.
    pub feature: Option<FeatureVector>,
    pub prediction: Option<Prediction>,
    pub timings: Timings,
}

fn us(d: Duration) -> u64 {
    d.as_micros() as u64
}

/// One subject's stream: detection, landmark initialization, tracking and
/// windowed feature extraction, strictly in frame order.
#[derive(Clone)]
pub struct Session {
    config: SessionConfig,
    detectors: Detectors,
    region_cascades: Option<RegionCascades>,
    model: Option<Arc<Model>>,
    interleave: InterleaveState,
    size: Option<(usize, usize)>,
    prev_gray: Option<Image>,
    current: Option<LandmarkSet>,
    history: Option<TrackHistory>,
    frame: u64,
}

impl Session {
    pub fn new(config: SessionConfig, detectors: Detectors) -> Result<Self> {
        config.validate()?;
        let region_cascades = config.region_cascades.load()?;
        Ok(Session {
            config,
            detectors,
            region_cascades,
            model: None,
            interleave: InterleaveState::new(),
            size: None,
            prev_gray: None,
            current: None,
            history: None,
            frame: 0,
        })
    }

    pub fn with_model(mut self, model: Arc<Model>) -> Self {
        self.model = Some(model);
        self
    }

    pub fn set_model(&mut self, model: Option<Arc<Model>>) {
        self.model = model;
    }

    pub fn model(&self) -> Option<&Arc<Model>> {
        self.model.as_ref()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn frames_processed(&self) -> u64 {
        self.frame
    }

    pub fn is_initialized(&self) -> bool {
        self.history.is_some()
    }

    pub fn reference(&self) -> Option<&LandmarkSet> {
        self.history.as_ref().map(|h| &h.reference)
    }

    /// Drops the reference and tracked points; the next verified detection
    /// captures a new reference.
    pub fn reset_reference(&mut self) {
        self.history = None;
        self.current = None;
        self.interleave.tracking_initialized = false;
    }

    fn initialize(&mut self, gray: &Image, face: &Rect) -> Result<Option<LandmarkSet>> {
        let mut regions = divide_face(face, &self.config.regions);
        if let Some(rc) = &self.region_cascades {
            regions = refine_regions(gray, &regions, rc, &self.config.scan)?;
        }
        let set = select_21(gray, face, &regions, &self.config.corners)?;
        match TrackHistory::with_capacity(set.clone(), self.config.smoothing_window) {
            Ok(h) => {
                self.history = Some(h);
                self.interleave.tracking_initialized = true;
                Ok(Some(set))
            }
            // no usable eye points: wait for a better detection
            Err(_) => Ok(None),
        }
    }

    pub fn process_frame(&mut self, frame: &Image) -> Result<FrameResult> {
        let start = Instant::now();
        let dims = (frame.width(), frame.height());
        if let Some(s) = self.size {
            if s != dims {
                return Err(Error::invalid(format!(
                    "frame is {}x{}, session started at {}x{}",
                    dims.0, dims.1, s.0, s.1
                )));
            }
        }
        let mut t = Timings::default();
        let index = self.frame;

        let clock = Instant::now();
        let gray = frame.to_gray();
        let ints = Integrals::new(&gray)?;
        t.prepare_us = us(clock.elapsed());

        let color = !frame.is_gray();
        let mut skin_time = Duration::ZERO;
        let mut accepted_skin = None;
        let clock = Instant::now();
        let skin_params = &self.config.skin;
        let outcome = interleaved_detect(
            &mut self.interleave,
            &self.detectors.frontal,
            &self.detectors.profile,
            &ints,
            &self.config.scan,
            |d| {
                if !color {
                    return true;
                }
                let s = Instant::now();
                let ok = skin_fraction(frame, &d.rect, skin_params)
                    .map(|m| (m.fraction >= skin_params.min_skin_fraction, m.fraction));
                skin_time += s.elapsed();
                match ok {
                    Ok((true, f)) => {
                        accepted_skin = Some(f);
                        true
                    }
                    _ => false,
                }
            },
        )?;
        let detect_total = us(clock.elapsed());
        t.skin_us = us(skin_time);
        t.detect_us = detect_total.saturating_sub(t.skin_us);

        let mut result = FrameResult {
            frame: index,
            face: None,
            source: FrameSource::None,
            skin_fraction: accepted_skin,
            skin_checked: color,
            landmarks: None,
            reference_captured: false,
            feature: None,
            prediction: None,
            timings: t,
        };

        let mut fresh = false;
        match outcome {
            DetectOutcome::Face { detection, pose } => {
                result.face = Some(detection.rect);
                result.source = pose.into();
                if self.history.is_none() {
                    let clock = Instant::now();
                    if let Some(set) = self.initialize(&gray, &detection.rect)? {
                        self.current = Some(set);
                        fresh = true;
                        result.reference_captured = true;
                    }
                    result.timings.landmarks_us = us(clock.elapsed());
                }
            }
            DetectOutcome::FallbackToTracking => result.source = FrameSource::Tracked,
            DetectOutcome::Nothing => {}
        }

        if !fresh {
            if let (Some(cur), Some(prev)) = (&self.current, &self.prev_gray) {
                let clock = Instant::now();
                self.current = Some(track_set(prev, &gray, cur, &self.config.flow)?);
                result.timings.track_us = us(clock.elapsed());
            }
        }

        if let (Some(h), Some(cur)) = (self.history.as_mut(), &self.current) {
            h.push(cur.clone());
            if h.is_full() {
                let clock = Instant::now();
                let smoothed = h.smoothed()?;
                let scale = match self.config.normalization {
                    Normalization::Interocular => h.interocular,
                    Normalization::RawPixels => 1.0,
                };
                let fv = feature_vector(&smoothed, &h.reference, scale)?;
                h.clear();
                result.timings.smooth_us = us(clock.elapsed());
                if let Some(m) = &self.model {
                    let clock = Instant::now();
                    result.prediction = Some(m.predict(&fv.values));
                    result.timings.predict_us = us(clock.elapsed());
                }
                result.feature = Some(fv);
            }
        }
        result.landmarks = self.current.clone();

        self.size = Some(dims);
        self.prev_gray = Some(gray);
        self.frame += 1;
        result.timings.total_us = us(start.elapsed());
        Ok(result)
    }
}

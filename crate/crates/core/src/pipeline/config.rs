use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Expression;
use crate::cascade::{load_cascade, ScanParams};
use crate::error::{Error, Result};
use crate::flow::{FlowParams, Normalization};
use crate::landmarks::{CornerParams, FaceRegions, RegionCascades};
use crate::skin::SkinParams;
use crate::svm::{default_c_grid, default_gamma_grid, SvmParams};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionCascadePaths {
    pub left_eye: Option<PathBuf>,
    pub right_eye: Option<PathBuf>,
    pub nose: Option<PathBuf>,
    pub mouth: Option<PathBuf>,
}

impl RegionCascadePaths {
    pub fn load(&self) -> Result<Option<RegionCascades>> {
        let paths = [&self.left_eye, &self.right_eye, &self.nose, &self.mouth];
        if paths.iter().all(|p| p.is_none()) {
            return Ok(None);
        }
        let mut rc = RegionCascades::default();
        for (slot, p) in rc.cascades.iter_mut().zip(paths) {
            if let Some(p) = p {
                *slot = Some(load_cascade(p)?);
            }
        }
        Ok(Some(rc))
    }
}

/// Everything a trainer or evaluator session needs, loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Trained from the synthetic corpus when absent.
    pub frontal_cascade: Option<PathBuf>,
    pub profile_cascade: Option<PathBuf>,
    /// Optional per-region cascades that tighten the geometric regions.
    pub region_cascades: RegionCascadePaths,
    pub scan: ScanParams,
    pub skin: SkinParams,
    pub regions: FaceRegions,
    pub corners: CornerParams,
    pub flow: FlowParams,
    pub normalization: Normalization,
    pub svm: SvmParams,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub smoothing_window: usize,
    pub labels: Vec<Expression>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            frontal_cascade: None,
            profile_cascade: None,
            region_cascades: RegionCascadePaths::default(),
            scan: ScanParams {
                scale_start: 2.0,
                ..ScanParams::default()
            },
            skin: SkinParams::default(),
            regions: FaceRegions::default(),
            corners: CornerParams::default(),
            flow: FlowParams::default(),
            normalization: Normalization::Interocular,
            svm: SvmParams::default(),
            c_grid: default_c_grid(),
            gamma_grid: default_gamma_grid(),
            folds: 5,
            seed: 1,
            smoothing_window: 10,
            labels: Expression::ALL.to_vec(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.skin.validate()?;
        self.regions.validate()?;
        self.corners.validate()?;
        self.flow.validate()?;
        if self.smoothing_window == 0 {
            return Err(Error::invalid("smoothing_window must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be at least 2"));
        }
        if self.c_grid.is_empty() || self.gamma_grid.is_empty() {
            return Err(Error::invalid("empty parameter grid"));
        }
        if self.labels.is_empty() {
            return Err(Error::invalid("label set is empty"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: SessionConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::parse(line, e.message().to_string())
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Loads a config file; relative cascade paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut c = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let r = &mut c.region_cascades;
        let paths = [
            &mut c.frontal_cascade,
            &mut c.profile_cascade,
            &mut r.left_eye,
            &mut r.right_eye,
            &mut r.nose,
            &mut r.mouth,
        ];
        for p in paths.into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(c)
    }
}

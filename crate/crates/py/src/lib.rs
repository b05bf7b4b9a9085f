//! Python bindings: images, session configs, the per-frame session, SVM
//! models and the train/evaluate/benchmark drivers.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

use visage_core::flow::{track_point as core_track_point, FlowParams};
use visage_core::imgcore::{decode_pnm, encode_pnm, integral, read_pnm, write_pnm};
use visage_core::landmarks::{good_features as core_good_features, CornerParams, NUM_LANDMARKS};
use visage_core::pipeline::synth::{render, SequenceParams, Split, SyntheticSpec};
use visage_core::pipeline::{
    benchmark as core_benchmark, detect_faces, evaluate_session, generate_synthetic as core_generate, read_manifest,
    train_session, ConfusionMatrix, Detectors, Expression, Session, SessionConfig,
};
use visage_core::svm::{
    load_model, save_model, train_multiclass, write_model, Model, Sample, SvmParams,
};
use visage_core::{Error, Image, Rect};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::File { .. } => PyIOError::new_err(e.to_string()),
        Error::EmptyTraining | Error::DegenerateTraining(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Round-trips a serializable value through JSON into Python objects.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn config_or_default(config: Option<&PyConfig>) -> SessionConfig {
    config.map(|c| c.inner.clone()).unwrap_or_default()
}

fn detectors(config: &SessionConfig) -> PyResult<Detectors> {
    Detectors::from_config(config).map_err(to_py_err)
}

/// An 8-bit image with one (gray) or three (RGB) interleaved channels.
#[pyclass(name = "Image", module = "visage", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyImage {
    inner: Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> PyResult<Self> {
        Image::new(width, height, channels, data)
            .map(|inner| PyImage { inner })
            .map_err(to_py_err)
    }

    /// Decodes binary PGM (P5) or PPM (P6) bytes.
    #[staticmethod]
    fn from_pnm(data: &[u8]) -> PyResult<Self> {
        decode_pnm(data).map(|inner| PyImage { inner }).map_err(to_py_err)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        read_pnm(path).map(|inner| PyImage { inner }).map_err(to_py_err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_pnm(path, &self.inner).map_err(to_py_err)
    }

    fn to_pnm<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &encode_pnm(&self.inner))
    }

    fn to_gray(&self) -> PyImage {
        PyImage {
            inner: self.inner.to_gray(),
        }
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    #[getter]
    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.data())
    }

    /// Sum of the gray values inside the rectangle, via the integral image.
    fn rect_sum(&self, x: u32, y: u32, w: u32, h: u32) -> PyResult<u64> {
        let ii = integral(&self.inner.to_gray()).map_err(to_py_err)?;
        ii.rect_sum(&Rect::new(x, y, w, h)).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Image(width={}, height={}, channels={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.channels()
        )
    }
}

/// Pipeline settings; built-in defaults unless given TOML text.
#[pyclass(name = "SessionConfig", module = "visage", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: SessionConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => SessionConfig::from_toml(t).map_err(to_py_err)?,
            None => SessionConfig::default(),
        };
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        SessionConfig::load(path).map(|inner| PyConfig { inner }).map_err(to_py_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn smoothing_window(&self) -> usize {
        self.inner.smoothing_window
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.iter().map(|e| e.name().to_string()).collect()
    }
}

/// One-vs-one RBF SVM with its input scaling.
#[pyclass(name = "Model", module = "visage", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: Arc<Model>,
}

#[pymethods]
impl PyModel {
    /// Fits scaling and trains on `features` (one row per sample).
    #[staticmethod]
    #[pyo3(signature = (features, labels, c=1.0, gamma=None))]
    fn train(py: Python<'_>, features: Vec<Vec<f64>>, labels: Vec<i32>, c: f64, gamma: Option<f64>) -> PyResult<Self> {
        if features.len() != labels.len() {
            return Err(PyValueError::new_err("features and labels differ in length"));
        }
        let samples: Vec<Sample> = features.into_iter().zip(labels).map(|(f, l)| Sample::new(f, l)).collect();
        let mut p = SvmParams {
            c,
            ..SvmParams::default()
        };
        if let Some(g) = gamma {
            p.gamma = g;
        }
        let model = py.detach(|| train_multiclass(&samples, &p)).map_err(to_py_err)?;
        Ok(PyModel { inner: Arc::new(model) })
    }

    /// Reads a libSVM model and its `.range` sidecar when present.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_model(path)
            .map(|m| PyModel { inner: Arc::new(m) })
            .map_err(to_py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&self.inner, path).map_err(to_py_err)
    }

    fn to_libsvm(&self) -> String {
        write_model(&self.inner)
    }

    /// Returns `(label, votes)` with votes in `labels` order.
    fn predict(&self, features: Vec<f64>) -> (i32, Vec<usize>) {
        let p = self.inner.predict(&features);
        (p.label, p.votes)
    }

    fn decision_values(&self, features: Vec<f64>) -> Vec<f64> {
        self.inner.decision_values(&features)
    }

    #[getter]
    fn labels(&self) -> Vec<i32> {
        self.inner.labels.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(labels={:?}, support_vectors={})",
            self.inner.labels,
            self.inner.sv.len()
        )
    }
}

/// Stateful per-frame pipeline: detect, verify, landmarks, track, smooth,
/// predict.
#[pyclass(name = "Session", module = "visage")]
pub struct PySession {
    inner: Session,
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (config=None, model=None))]
    fn new(py: Python<'_>, config: Option<PyRef<'_, PyConfig>>, model: Option<PyRef<'_, PyModel>>) -> PyResult<Self> {
        let config = config_or_default(config.as_deref());
        let det = py.detach(|| detectors(&config))?;
        let mut inner = Session::new(config, det).map_err(to_py_err)?;
        inner.set_model(model.map(|m| m.inner.clone()));
        Ok(PySession { inner })
    }

    /// Processes one frame and returns the frame result as a dict.
    fn process_frame(&mut self, py: Python<'_>, image: PyRef<'_, PyImage>) -> PyResult<Py<PyAny>> {
        let frame = &image.inner;
        let session = &mut self.inner;
        let r = py.detach(|| session.process_frame(frame)).map_err(to_py_err)?;
        to_py(py, &r)
    }

    #[pyo3(signature = (model=None))]
    fn set_model(&mut self, model: Option<PyRef<'_, PyModel>>) {
        self.inner.set_model(model.map(|m| m.inner.clone()));
    }

    fn reset_reference(&mut self) {
        self.inner.reset_reference();
    }

    #[getter]
    fn initialized(&self) -> bool {
        self.inner.is_initialized()
    }

    #[getter]
    fn frames_processed(&self) -> u64 {
        self.inner.frames_processed()
    }
}

/// Renders one synthetic frame; returns `(image, face box as (x, y, w, h))`.
#[pyfunction]
#[pyo3(signature = (expression="neutral", index=0, frame=0, seed=7))]
fn render_synthetic(expression: &str, index: u64, frame: usize, seed: u64) -> PyResult<(PyImage, (u32, u32, u32, u32))> {
    let e: Expression = expression.parse().map_err(to_py_err)?;
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let params = SequenceParams::draw(&spec, Split::Test, index, e, false);
    let (img, truth) = render(&spec, &params, frame);
    let f = truth.face;
    Ok((PyImage { inner: img }, (f.x, f.y, f.w, f.h)))
}

/// Writes a synthetic labeled data set and returns its manifests.
#[pyfunction]
#[pyo3(signature = (out, seed=7, train_per_class=8, test_per_class=4, frames=40))]
fn generate_synthetic(
    py: Python<'_>,
    out: PathBuf,
    seed: u64,
    train_per_class: usize,
    test_per_class: usize,
    frames: usize,
) -> PyResult<Py<PyAny>> {
    let spec = SyntheticSpec {
        seed,
        train_per_class,
        test_per_class,
        frames,
        ..SyntheticSpec::default()
    };
    let set = py.detach(|| core_generate(&spec, &out)).map_err(to_py_err)?;
    to_py(py, &set)
}

/// Trains on a sequence manifest, saves the model and returns the report.
#[pyfunction]
#[pyo3(signature = (manifest, model_path, config=None))]
fn train(py: Python<'_>, manifest: PathBuf, model_path: PathBuf, config: Option<PyRef<'_, PyConfig>>) -> PyResult<Py<PyAny>> {
    let config = config_or_default(config.as_deref());
    let report = py
        .detach(|| -> visage_core::Result<_> {
            let seqs = read_manifest(&manifest)?;
            let report = train_session(&seqs, &config, &Detectors::from_config(&config)?)?;
            save_model(&report.model, &model_path)?;
            Ok(report)
        })
        .map_err(to_py_err)?;
    to_py(
        py,
        &serde_json::json!({
            "best": report.grid.best,
            "training_accuracy": report.training_accuracy,
            "samples": report.samples.len(),
            "empty_sequences": report.empty_sequences,
        }),
    )
}

/// Evaluates a model on a sequence manifest.
#[pyfunction]
#[pyo3(signature = (model, manifest, config=None))]
fn evaluate(
    py: Python<'_>,
    model: PyRef<'_, PyModel>,
    manifest: PathBuf,
    config: Option<PyRef<'_, PyConfig>>,
) -> PyResult<Py<PyAny>> {
    let config = config_or_default(config.as_deref());
    let m = model.inner.clone();
    let report = py
        .detach(|| -> visage_core::Result<_> {
            let seqs = read_manifest(&manifest)?;
            evaluate_session(&m, &seqs, &config, &Detectors::from_config(&config)?)
        })
        .map_err(to_py_err)?;
    to_py(py, &report)
}

/// Times the pipeline over a manifest, or the default synthetic test split.
#[pyfunction]
#[pyo3(signature = (manifest=None, config=None, model=None, max_frames=None))]
fn benchmark(
    py: Python<'_>,
    manifest: Option<PathBuf>,
    config: Option<PyRef<'_, PyConfig>>,
    model: Option<PyRef<'_, PyModel>>,
    max_frames: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let config = config_or_default(config.as_deref());
    let m = model.map(|m| m.inner.clone());
    let report = py
        .detach(|| -> visage_core::Result<_> {
            let seqs = match &manifest {
                Some(p) => read_manifest(p)?,
                None => SyntheticSpec::default().sequences(Split::Test)?,
            };
            core_benchmark(&seqs, &config, &Detectors::from_config(&config)?, m, max_frames)
        })
        .map_err(to_py_err)?;
    to_py(py, &report)
}

/// Face detections from both cascades with their skin checks.
#[pyfunction]
#[pyo3(signature = (image, config=None))]
fn detect(py: Python<'_>, image: PyRef<'_, PyImage>, config: Option<PyRef<'_, PyConfig>>) -> PyResult<Py<PyAny>> {
    let config = config_or_default(config.as_deref());
    let img = &image.inner;
    let found = py
        .detach(|| detect_faces(img, &config, &Detectors::from_config(&config)?))
        .map_err(to_py_err)?;
    to_py(py, &found)
}

/// Shi-Tomasi corners inside a rectangle as `(x, y, score)`, strongest first.
#[pyfunction]
#[pyo3(signature = (image, region, max_n=NUM_LANDMARKS, quality_level=0.01, min_distance=5.0, block_size=3))]
fn good_features(
    image: PyRef<'_, PyImage>,
    region: (u32, u32, u32, u32),
    max_n: usize,
    quality_level: f64,
    min_distance: f64,
    block_size: usize,
) -> PyResult<Vec<(u32, u32, f64)>> {
    let p = CornerParams {
        block_size,
        quality_level,
        min_distance,
        ..CornerParams::default()
    };
    let (x, y, w, h) = region;
    let corners = core_good_features(&image.inner.to_gray(), &Rect::new(x, y, w, h), &p, max_n).map_err(to_py_err)?;
    Ok(corners.into_iter().map(|c| (c.x, c.y, c.score)).collect())
}

/// Block-matching displacement of one point; `None` when it cannot be tracked.
#[pyfunction]
#[pyo3(signature = (prev, next, x, y, radius=6, half_window=4))]
fn track_point(
    prev: PyRef<'_, PyImage>,
    next: PyRef<'_, PyImage>,
    x: i64,
    y: i64,
    radius: i64,
    half_window: usize,
) -> PyResult<Option<(i64, i64, u64)>> {
    let p = FlowParams {
        wx: half_window,
        wy: half_window,
        radius,
        ..FlowParams::default()
    };
    let t = core_track_point(&prev.inner.to_gray(), &next.inner.to_gray(), x, y, &p).map_err(to_py_err)?;
    Ok(t.map(|t| (t.x, t.y, t.error)))
}

/// Per-class and overall rates (percent) of a square confusion matrix.
#[pyfunction]
fn confusion_rates(py: Python<'_>, counts: Vec<Vec<u64>>) -> PyResult<Py<PyAny>> {
    let labels = (0..counts.len() as i32).collect();
    let m = ConfusionMatrix::from_counts(labels, counts).map_err(to_py_err)?;
    to_py(
        py,
        &serde_json::json!({ "class_rates": m.class_rates(), "overall": m.overall() }),
    )
}

#[pymodule]
pub fn visage(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NUM_LANDMARKS", NUM_LANDMARKS)?;
    m.add(
        "EXPRESSIONS",
        Expression::ALL.iter().map(|e| e.name()).collect::<Vec<_>>(),
    )?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(render_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(good_features, m)?)?;
    m.add_function(wrap_pyfunction!(track_point, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_rates, m)?)?;
    Ok(())
}

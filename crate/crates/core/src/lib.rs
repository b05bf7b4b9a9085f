//! Near-real-time facial expression recognition over frame sequences.
//!
//! The processing chain for each frame is:
//!
//! 1. interleaved frontal/profile cascade detection on the integral image
//!    ([`cascade`]), gated by a hue-threshold skin check ([`skin`]);
//! 2. on the first verified detection the face box is divided into eye, nose
//!    and mouth regions and 21 Shi-Tomasi corners are selected
//!    ([`landmarks`]);
//! 3. afterwards the points are followed frame to frame by exhaustive SSD
//!    block matching ([`flow`]);
//! 4. every 10 frames the per-point median is turned into a 42-dimensional
//!    displacement vector and classified by a one-vs-one RBF SVM ([`svm`]).
//!
//! [`pipeline`] wires the stages together and adds the trainer/evaluator
//! sessions, a synthetic sequence generator, confusion-matrix reporting and a
//! throughput benchmark.

pub mod cascade;
pub mod error;
pub mod flow;
pub mod imgcore;
pub mod landmarks;
pub mod pipeline;
pub mod skin;
pub mod svm;

pub use error::{Error, Result};
pub use imgcore::{Image, IntegralImage, Rect};

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detector::Detectors;
use super::sequence::LabeledSequence;
use super::session::Session;
use super::{label_name, SessionConfig};
use crate::error::{Error, Result};
use crate::flow::FeatureVector;
use crate::svm::{grid_search, train_multiclass, GridResult, Model, Sample, SvmParams};

/// Overall rate printed beside the published confusion table, which the
/// table's own counts put at exactly 60%.
pub const REFERENCE_OVERALL: f64 = 59.91;

/// Rows are true classes, columns predicted classes, both in `labels` order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<i32>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<i32>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_counts(labels: Vec<i32>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = labels.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!("confusion counts must be {n}x{n}")));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    fn index(&self, label: i32) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::invalid(format!("label {label} not in the matrix")))
    }

    pub fn add(&mut self, truth: i32, predicted: i32) -> Result<()> {
        let (i, j) = (self.index(truth)?, self.index(predicted)?);
        self.counts[i][j] += 1;
        Ok(())
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Diagonal over row sum, as a percentage; `None` for empty rows.
    pub fn class_rates(&self) -> Vec<Option<f64>> {
        (0..self.labels.len())
            .map(|i| {
                let n = self.row_sum(i);
                (n > 0).then(|| 100.0 * self.counts[i][i] as f64 / n as f64)
            })
            .collect()
    }

    /// Trace over total, as a percentage.
    pub fn overall(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| 100.0 * self.trace() as f64 / n as f64)
    }

    /// Aligned text table: counts per row with the row's rate, then the
    /// overall rate. With `reference`, a footnote compares it to trace/total.
    pub fn format_table(&self, reference: Option<f64>) -> String {
        let names: Vec<String> = self.labels.iter().map(|&l| label_name(l)).collect();
        let w = names.iter().map(|n| n.len()).max().unwrap_or(0).max(8) + 2;
        let mut s = format!("{:w$}", "");
        for n in &names {
            let _ = write!(s, "{n:>w$}");
        }
        let _ = writeln!(s, "{:>w$}", "Over all");
        let rates = self.class_rates();
        for (i, n) in names.iter().enumerate() {
            let _ = write!(s, "{n:w$}");
            for c in &self.counts[i] {
                let _ = write!(s, "{c:>w$}");
            }
            let rate = rates[i].map_or_else(|| "-".to_string(), |r| format!("{r:.2}%"));
            let _ = writeln!(s, "{rate:>w$}");
        }
        let overall = self.overall().map_or_else(|| "-".to_string(), |r| format!("{r:.2}%"));
        let mark = if reference.is_some() { "*" } else { "" };
        let pad = w * (names.len() + 1);
        let _ = writeln!(s, "{:>pad$}{:>w$}", format!("Total{mark}"), overall);
        if let Some(r) = reference {
            let _ = writeln!(
                s,
                "* trace/total = {}/{} = {overall}; the reference report prints {r:.2}%",
                self.trace(),
                self.total()
            );
        }
        s
    }
}

/// Runs a fresh session over `seq` and returns its window feature vectors.
pub fn collect_vectors(seq: &LabeledSequence, config: &SessionConfig, detectors: &Detectors) -> Result<Vec<FeatureVector>> {
    let mut session = Session::new(config.clone(), detectors.clone())?;
    let mut out = Vec::new();
    for frame in seq.frames.iter() {
        if let Some(fv) = session.process_frame(&frame?)?.feature {
            out.push(fv);
        }
    }
    Ok(out)
}

fn all_vectors(sequences: &[LabeledSequence], config: &SessionConfig, detectors: &Detectors) -> Result<Vec<Vec<FeatureVector>>> {
    sequences
        .par_iter()
        .map(|s| collect_vectors(s, config, detectors))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: Model,
    pub grid: GridResult,
    pub samples: Vec<Sample>,
    pub training_accuracy: f64,
    /// Sequences that yielded no feature vector.
    pub empty_sequences: Vec<String>,
}

/// Fits scaling, grid-searches `(C, gamma)` and trains on every window
/// vector of every sequence, labeled with its sequence's label.
pub fn train_samples(samples: Vec<Sample>, config: &SessionConfig) -> Result<(Model, GridResult, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let mut classes: Vec<i32> = samples.iter().map(|s| s.label).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid(format!(
            "training needs at least two classes, vectors only cover {:?}",
            classes
        )));
    }
    let k = config.folds.min(samples.len());
    let grid = grid_search(&samples, &config.c_grid, &config.gamma_grid, k, config.seed, &config.svm)?;
    let params = SvmParams {
        c: grid.best.c,
        gamma: grid.best.gamma,
        ..config.svm.clone()
    };
    let model = train_multiclass(&samples, &params)?;
    let correct = samples
        .iter()
        .filter(|s| model.predict(&s.features).label == s.label)
        .count();
    Ok((model, grid, correct as f64 / samples.len() as f64))
}

pub fn train_session(sequences: &[LabeledSequence], config: &SessionConfig, detectors: &Detectors) -> Result<TrainReport> {
    let mut labels: Vec<i32> = sequences.iter().map(|s| s.label).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::invalid("training needs sequences from at least two classes"));
    }
    let vectors = all_vectors(sequences, config, detectors)?;
    let mut samples = Vec::new();
    let mut empty = Vec::new();
    for (seq, vs) in sequences.iter().zip(vectors) {
        if vs.is_empty() {
            empty.push(seq.name.clone());
        }
        samples.extend(vs.into_iter().map(|v| Sample::new(v.values, seq.label)));
    }
    let (model, grid, training_accuracy) = train_samples(samples.clone(), config)?;
    Ok(TrainReport {
        model,
        grid,
        samples,
        training_accuracy,
        empty_sequences: empty,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceOutcome {
    pub name: String,
    pub label: i32,
    /// Majority vote over the sequence's windows; `None` without windows.
    pub predicted: Option<i32>,
    pub windows: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sequence-level counts; sequences without any window are left out
    /// and listed in `undetected`.
    pub confusion: ConfusionMatrix,
    pub class_rates: Vec<Option<f64>>,
    pub overall: Option<f64>,
    /// Correct sequences over all sequences, undetected ones counted wrong.
    pub sequence_accuracy: f64,
    pub window_confusion: ConfusionMatrix,
    pub undetected: Vec<String>,
    pub sequences: Vec<SequenceOutcome>,
}

impl EvalReport {
    pub fn table(&self) -> String {
        self.confusion.format_table(None)
    }
}

/// Majority label; ties go to the lowest id.
pub fn majority(votes: &[i32]) -> Option<i32> {
    let mut sorted = votes.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(i32, usize)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        if best.map_or(true, |(_, n)| j > n) {
            best = Some((sorted[i], j));
        }
        i += j;
    }
    best.map(|(l, _)| l)
}

pub fn evaluate_session(model: &Model, sequences: &[LabeledSequence], config: &SessionConfig, detectors: &Detectors) -> Result<EvalReport> {
    if sequences.is_empty() {
        return Err(Error::invalid("no sequences to evaluate"));
    }
    let mut labels: Vec<i32> = config.labels.iter().map(|e| e.id()).collect();
    for &l in model.labels.iter().chain(sequences.iter().map(|s| &s.label)) {
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    labels.sort_unstable();
    let vectors = all_vectors(sequences, config, detectors)?;
    let mut confusion = ConfusionMatrix::new(labels.clone());
    let mut window_confusion = ConfusionMatrix::new(labels);
    let mut outcomes = Vec::new();
    let mut undetected = Vec::new();
    let mut correct = 0usize;
    for (seq, vs) in sequences.iter().zip(vectors) {
        let windows: Vec<i32> = vs.iter().map(|v| model.predict(&v.values).label).collect();
        for &w in &windows {
            window_confusion.add(seq.label, w)?;
        }
        let predicted = majority(&windows);
        match predicted {
            Some(p) => {
                confusion.add(seq.label, p)?;
                correct += (p == seq.label) as usize;
            }
            None => undetected.push(seq.name.clone()),
        }
        outcomes.push(SequenceOutcome {
            name: seq.name.clone(),
            label: seq.label,
            predicted,
            windows,
        });
    }
    Ok(EvalReport {
        class_rates: confusion.class_rates(),
        overall: confusion.overall(),
        sequence_accuracy: correct as f64 / sequences.len() as f64,
        confusion,
        window_confusion,
        undetected,
        sequences: outcomes,
    })
}

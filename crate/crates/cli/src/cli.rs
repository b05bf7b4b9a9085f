use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{error::ErrorKind, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use visage_core::cascade::{save_cascade, CascadeTrainParams, CascadeTrainReport, Pose};
use visage_core::imgcore::read_pnm;
use visage_core::pipeline::synth::{Split, SyntheticSpec};
use visage_core::pipeline::{
    benchmark, detect_faces, evaluate_session, generate_synthetic, list_frames, read_manifest,
    train_cascade_from_images, train_detectors, train_session, DetectorTrainSpec, Detectors, Session, SessionConfig,
};
use visage_core::svm::{load_model, save_model};
use visage_core::Image;

use crate::server;

#[derive(Debug, Parser)]
#[command(name = "visage", version, about = "Facial expression recognition from frame sequences")]
pub struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Session config file (TOML); built-in defaults otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train Haar cascades from image folders, or both built-in cascades from synthetic faces.
    TrainCascade(TrainCascadeArgs),
    /// Detect faces in one image.
    Detect(DetectArgs),
    /// Track the 21 landmarks through a directory of frames.
    Track(TrackArgs),
    /// Write a synthetic labeled data set.
    GenSynth(GenSynthArgs),
    /// Train an expression model from a sequence manifest.
    Train(TrainArgs),
    /// Evaluate a model on a sequence manifest.
    Evaluate(EvaluateArgs),
    /// Time the per-frame pipeline.
    Benchmark(BenchmarkArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PoseArg {
    Frontal,
    Profile,
}

impl From<PoseArg> for Pose {
    fn from(p: PoseArg) -> Self {
        match p {
            PoseArg::Frontal => Pose::Frontal,
            PoseArg::Profile => Pose::Profile,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainCascadeArgs {
    /// Output file, or output directory when training from synthetic faces.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of PGM/PPM face crops.
    #[arg(long, requires = "negatives")]
    pub positives: Option<PathBuf>,
    /// Directory of PGM/PPM images without faces.
    #[arg(long, requires = "positives")]
    pub negatives: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "frontal")]
    pub pose: PoseArg,
    /// Seed of the synthetic faces.
    #[arg(long, conflicts_with = "positives")]
    pub synth_seed: Option<u64>,
    #[arg(long)]
    pub max_stages: Option<usize>,
    #[arg(long)]
    pub max_weak_per_stage: Option<usize>,
    #[arg(long)]
    pub min_hit_rate: Option<f64>,
    #[arg(long)]
    pub max_false_alarm: Option<f64>,
    #[arg(long)]
    pub target_false_alarm: Option<f64>,
    #[arg(long)]
    pub negatives_per_stage: Option<usize>,
    #[arg(long)]
    pub features_per_stage: Option<usize>,
    #[arg(long)]
    pub pool_stride: Option<u32>,
    #[arg(long)]
    pub pool_cap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub image: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Directory of `frame_%06d` PGM/PPM files.
    #[arg(long)]
    pub frames: PathBuf,
    /// Write landmark CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Peak deformation as a fraction of the face side.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub noise: Option<u8>,
    #[arg(long)]
    pub max_drift: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the libSVM model; scaling goes to `<model>.range`.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Sequences to time; the default synthetic test split otherwise.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Attach this model so prediction is timed too.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Stop after this many frames.
    #[arg(long)]
    pub max_frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on usage errors, 2 on data errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

type Outcome = Result<(), Box<dyn std::error::Error>>;

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let config = match &cli.config {
        Some(p) => SessionConfig::load(p)?,
        None => SessionConfig::default(),
    };
    match &cli.command {
        Command::TrainCascade(a) => train_cascade_cmd(a, cli.json, out),
        Command::Detect(a) => detect_cmd(a, &config, cli.json, out),
        Command::Track(a) => track_cmd(a, &config, cli.json, out),
        Command::GenSynth(a) => gen_synth_cmd(a, cli.json, out),
        Command::Train(a) => train_cmd(a, &config, cli.json, out),
        Command::Evaluate(a) => evaluate_cmd(a, &config, cli.json, out),
        Command::Benchmark(a) => benchmark_cmd(a, &config, cli.json, out),
        Command::Serve(a) => serve_cmd(a, config, err),
    }
}

fn print_json(out: &mut dyn Write, value: &impl Serialize) -> Outcome {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_images(dir: &Path) -> Result<Vec<Image>, Box<dyn std::error::Error>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|x| x.to_str()), Some("pgm" | "ppm" | "pnm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format!("{}: no PGM/PPM images", dir.display()).into());
    }
    Ok(paths.iter().map(read_pnm).collect::<Result<_, _>>()?)
}

fn cascade_params(a: &TrainCascadeArgs, base: CascadeTrainParams) -> CascadeTrainParams {
    CascadeTrainParams {
        max_stages: a.max_stages.unwrap_or(base.max_stages),
        max_weak_per_stage: a.max_weak_per_stage.unwrap_or(base.max_weak_per_stage),
        min_hit_rate: a.min_hit_rate.unwrap_or(base.min_hit_rate),
        max_false_alarm: a.max_false_alarm.unwrap_or(base.max_false_alarm),
        target_false_alarm: a.target_false_alarm.unwrap_or(base.target_false_alarm),
        negatives_per_stage: a.negatives_per_stage.unwrap_or(base.negatives_per_stage),
        features_per_stage: a.features_per_stage.unwrap_or(base.features_per_stage),
        seed: a.seed.unwrap_or(base.seed),
        ..base
    }
}

fn write_stages(out: &mut dyn Write, name: &str, r: &CascadeTrainReport) -> Outcome {
    writeln!(out, "{name}: {} stages, {}", r.stages.len(), r.stop_reason)?;
    for (i, s) in r.stages.iter().enumerate() {
        writeln!(
            out,
            "  stage {i}: {} weak, hit rate {:.4}, false alarm {:.4}, {} negatives",
            s.weak, s.hit_rate, s.false_alarm, s.negatives
        )?;
    }
    Ok(())
}

fn train_cascade_cmd(a: &TrainCascadeArgs, json: bool, out: &mut dyn Write) -> Outcome {
    if let (Some(pos), Some(neg)) = (&a.positives, &a.negatives) {
        let defaults = DetectorTrainSpec::default();
        let params = cascade_params(a, CascadeTrainParams::default());
        let (cascade, report) = train_cascade_from_images(
            &read_images(pos)?,
            &read_images(neg)?,
            &params,
            a.pool_stride.unwrap_or(defaults.pool_stride),
            a.pool_cap.unwrap_or(defaults.pool_cap),
            a.pose.into(),
        )?;
        save_cascade(&a.out, &cascade)?;
        return if json {
            print_json(out, &json!({ "cascade": a.out, "report": report }))
        } else {
            write_stages(out, &cascade.pose.to_string(), &report)?;
            writeln!(out, "wrote {}", a.out.display())?;
            Ok(())
        };
    }
    let defaults = DetectorTrainSpec::default();
    let spec = DetectorTrainSpec {
        synth: SyntheticSpec {
            seed: a.synth_seed.unwrap_or(defaults.synth.seed),
            ..defaults.synth.clone()
        },
        pool_stride: a.pool_stride.unwrap_or(defaults.pool_stride),
        pool_cap: a.pool_cap.unwrap_or(defaults.pool_cap),
        cascade: cascade_params(a, defaults.cascade.clone()),
        ..defaults
    };
    let (detectors, reports) = train_detectors(&spec)?;
    fs::create_dir_all(&a.out)?;
    let frontal = a.out.join("frontal.cascade");
    let profile = a.out.join("profile.cascade");
    save_cascade(&frontal, &detectors.frontal)?;
    save_cascade(&profile, &detectors.profile)?;
    if json {
        print_json(
            out,
            &json!({ "frontal": frontal, "profile": profile, "reports": reports }),
        )
    } else {
        write_stages(out, "frontal", &reports.frontal)?;
        write_stages(out, "profile", &reports.profile)?;
        writeln!(out, "wrote {} and {}", frontal.display(), profile.display())?;
        Ok(())
    }
}

fn detect_cmd(a: &DetectArgs, config: &SessionConfig, json: bool, out: &mut dyn Write) -> Outcome {
    let img = read_pnm(&a.image)?;
    let found = detect_faces(&img, config, &Detectors::from_config(config)?)?;
    if json {
        return print_json(out, &found);
    }
    for d in &found {
        let skin = d.skin_fraction.map_or_else(|| "-".to_string(), |f| format!("{f:.3}"));
        writeln!(
            out,
            "{} {} {} {} {} neighbors={} skin={skin} verified={}",
            d.pose, d.rect.x, d.rect.y, d.rect.w, d.rect.h, d.neighbors, d.verified
        )?;
    }
    Ok(())
}

fn track_cmd(a: &TrackArgs, config: &SessionConfig, json: bool, out: &mut dyn Write) -> Outcome {
    let frames = list_frames(&a.frames)?;
    let mut session = Session::new(config.clone(), Detectors::from_config(config)?)?;
    let mut results = Vec::with_capacity(frames.len());
    let mut csv: Vec<u8> = Vec::new();
    for path in &frames {
        let r = session.process_frame(&read_pnm(path)?)?;
        if let Some(lm) = &r.landmarks {
            lm.write_csv(r.frame, &mut csv)?;
        }
        results.push(r);
    }
    if let Some(p) = &a.csv {
        fs::write(p, &csv).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    if json {
        print_json(out, &results)
    } else {
        if a.csv.is_none() {
            out.write_all(&csv)?;
        }
        Ok(())
    }
}

fn gen_synth_cmd(a: &GenSynthArgs, json: bool, out: &mut dyn Write) -> Outcome {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        seed: a.seed.unwrap_or(d.seed),
        train_per_class: a.train_per_class.unwrap_or(d.train_per_class),
        test_per_class: a.test_per_class.unwrap_or(d.test_per_class),
        frames: a.frames.unwrap_or(d.frames),
        width: a.width.unwrap_or(d.width),
        height: a.height.unwrap_or(d.height),
        amplitude: a.amplitude.unwrap_or(d.amplitude),
        noise: a.noise.unwrap_or(d.noise),
        max_drift: a.max_drift.unwrap_or(d.max_drift),
        ..d
    };
    let set = generate_synthetic(&spec, &a.out)?;
    if json {
        print_json(out, &set)
    } else {
        writeln!(
            out,
            "wrote {} sequences ({} frames) to {}\ntrain manifest: {}\ntest manifest: {}",
            set.sequences,
            set.frames,
            a.out.display(),
            set.train_manifest.display(),
            set.test_manifest.display()
        )?;
        Ok(())
    }
}

fn train_cmd(a: &TrainArgs, config: &SessionConfig, json: bool, out: &mut dyn Write) -> Outcome {
    let seqs = read_manifest(&a.manifest)?;
    let report = train_session(&seqs, config, &Detectors::from_config(config)?)?;
    save_model(&report.model, &a.model)?;
    if json {
        return print_json(
            out,
            &json!({
                "model": a.model,
                "best": report.grid.best,
                "cells": report.grid.cells,
                "training_accuracy": report.training_accuracy,
                "samples": report.samples.len(),
                "empty_sequences": report.empty_sequences,
            }),
        );
    }
    let best = report.grid.best;
    writeln!(
        out,
        "{} feature vectors from {} sequences\nbest C={} gamma={} (cross-validated {:.2}%)\ntraining accuracy {:.2}%",
        report.samples.len(),
        seqs.len(),
        best.c,
        best.gamma,
        best.accuracy * 100.0,
        report.training_accuracy * 100.0
    )?;
    for name in &report.empty_sequences {
        writeln!(out, "no face found in {name}")?;
    }
    writeln!(out, "wrote {}", a.model.display())?;
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs, config: &SessionConfig, json: bool, out: &mut dyn Write) -> Outcome {
    let model = load_model(&a.model)?;
    let seqs = read_manifest(&a.manifest)?;
    let report = evaluate_session(&model, &seqs, config, &Detectors::from_config(config)?)?;
    if json {
        return print_json(out, &report);
    }
    write!(out, "{}", report.table())?;
    writeln!(out, "sequence accuracy {:.2}%", report.sequence_accuracy * 100.0)?;
    for name in &report.undetected {
        writeln!(out, "no face found in {name}")?;
    }
    Ok(())
}

fn benchmark_cmd(a: &BenchmarkArgs, config: &SessionConfig, json: bool, out: &mut dyn Write) -> Outcome {
    let seqs = match &a.manifest {
        Some(p) => read_manifest(p)?,
        None => SyntheticSpec::default().sequences(Split::Test)?,
    };
    let model = a.model.as_ref().map(load_model).transpose()?.map(Arc::new);
    let report = benchmark(&seqs, config, &Detectors::from_config(config)?, model, a.max_frames)?;
    if json {
        print_json(out, &report)
    } else {
        write!(out, "{}", report.summary())?;
        Ok(())
    }
}

fn serve_cmd(a: &ServeArgs, config: SessionConfig, err: &mut dyn Write) -> Outcome {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse()?;
    let state = server::AppState::new(config)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        writeln!(err, "listening on http://{}", listener.local_addr()?)?;
        axum::serve(listener, server::router(state)).await?;
        Ok(())
    })
}

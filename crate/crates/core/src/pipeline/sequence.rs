use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::label_name;
use super::synth::{render, SequenceParams, SyntheticSpec};
use super::Expression;
use crate::error::{Error, Result};
use crate::imgcore::{read_pnm, Image};

/// Where a sequence's frames come from.
#[derive(Clone, Debug)]
pub enum Frames {
    Files(Vec<PathBuf>),
    Memory(Arc<Vec<Image>>),
    Synthetic {
        spec: Arc<SyntheticSpec>,
        params: Box<SequenceParams>,
    },
}

impl Frames {
    pub fn len(&self) -> usize {
        match self {
            Frames::Files(f) => f.len(),
            Frames::Memory(m) => m.len(),
            Frames::Synthetic { spec, .. } => spec.frames,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Result<Image> {
        match self {
            Frames::Files(f) => read_pnm(&f[i]),
            Frames::Memory(m) => Ok(m[i].clone()),
            Frames::Synthetic { spec, params } => Ok(render(spec, params, i).0),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Image>> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}

#[derive(Clone, Debug)]
pub struct LabeledSequence {
    pub label: i32,
    pub name: String,
    pub frames: Frames,
}

impl LabeledSequence {
    pub fn in_memory(label: i32, name: impl Into<String>, frames: Vec<Image>) -> Self {
        LabeledSequence {
            label,
            name: name.into(),
            frames: Frames::Memory(Arc::new(frames)),
        }
    }
}

fn frame_index(name: &str) -> Option<usize> {
    let stem = name.strip_prefix("frame_")?;
    let (num, ext) = stem.split_once('.')?;
    (num.len() == 6 && matches!(ext, "pgm" | "ppm")).then(|| num.parse().ok())?
}

/// Sorted `frame_NNNNNN.pgm|ppm` files of `dir`; numbering must start at 0
/// with no gaps.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
    let mut frames = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::file(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(i) = frame_index(&name) {
            frames.push((i, entry.path()));
        }
    }
    frames.sort();
    for (expect, (i, p)) in frames.iter().enumerate() {
        if *i != expect {
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("ppm");
            let missing = dir.join(format!("frame_{expect:06}.{ext}"));
            return Err(Error::file(
                missing,
                std::io::Error::new(std::io::ErrorKind::NotFound, "frame missing from sequence"),
            ));
        }
    }
    if frames.is_empty() {
        return Err(Error::file(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no frame_NNNNNN.pgm|ppm files"),
        ));
    }
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

/// Reads a `label<TAB>dir` manifest; directories are relative to the
/// manifest. Labels are expression names or integer ids.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<LabeledSequence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, dir) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected `label<TAB>dir`"))?;
        let label: i32 = match label.trim().parse::<Expression>() {
            Ok(e) => e.id(),
            Err(_) => label
                .trim()
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("unknown label `{label}`")))?,
        };
        let dir = base.join(dir.trim());
        let frames = list_frames(&dir)?;
        out.push(LabeledSequence {
            label,
            name: dir
                .file_name()
                .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
            frames: Frames::Files(frames),
        });
    }
    if out.is_empty() {
        return Err(Error::parse(1, "manifest lists no sequences"));
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[(i32, PathBuf)]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for (label, dir) in entries {
        s.push_str(&format!("{}\t{}\n", label_name(*label), dir.display()));
    }
    std::fs::write(path, s).map_err(|e| Error::file(path, e))
}

//! Line-oriented `.cascade` text format.
//!
//! ```text
//! visage-cascade 1
//! base 24
//! pose frontal
//! stages <n>
//! stage <phi> <weak count>
//! weak <kind> <theta> <polarity> <alpha> <rect count> <x> <y> <w> <h> <weight> ...
//! ```
//!
//! Reals are written in shortest round-trip form so a save/load cycle is
//! bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{Cascade, FeatureKind, Pose, RectFeature, StrongClassifier, WeakClassifier, WeightedRect};
use crate::error::{Error, Result};
use crate::imgcore::Rect;

const MAGIC: &str = "visage-cascade";

pub fn write_cascade(c: &Cascade) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC} 1").unwrap();
    writeln!(out, "base {}", c.base).unwrap();
    writeln!(out, "pose {}", c.pose).unwrap();
    writeln!(out, "stages {}", c.stages.len()).unwrap();
    for st in &c.stages {
        writeln!(out, "stage {:?} {}", st.threshold, st.weak.len()).unwrap();
        for (w, alpha) in &st.weak {
            write!(
                out,
                "weak {} {:?} {} {:?} {}",
                w.feature.kind.name(),
                w.threshold,
                w.polarity,
                alpha,
                w.feature.rects.len()
            )
            .unwrap();
            for r in &w.feature.rects {
                write!(out, " {} {} {} {} {:?}", r.rect.x, r.rect.y, r.rect.w, r.rect.h, r.weight).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self, what: &str) -> Result<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            return Ok(l.split_whitespace().collect());
        }
        Err(Error::parse(self.line + 1, format!("unexpected end of file, expected {what}")))
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let t = self.next_tokens(key)?;
        if t[0] != key {
            return Err(self.err(format!("expected `{key}`, found `{}`", t[0])));
        }
        Ok(t[1..].to_vec())
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, msg)
    }

    fn num<T: FromStr>(&self, tok: Option<&&str>, what: &str) -> Result<T> {
        tok.and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("bad or missing {what}")))
    }
}

pub fn parse_cascade(text: &str) -> Result<Cascade> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let head = lines.next_tokens("header")?;
    if head.first() != Some(&MAGIC) || head.get(1) != Some(&"1") {
        return Err(lines.err("not a version 1 cascade file"));
    }
    let t = lines.keyed("base")?;
    let base: u32 = lines.num(t.first(), "base size")?;
    let t = lines.keyed("pose")?;
    let pose = t
        .first()
        .ok_or_else(|| lines.err("missing pose"))?
        .parse::<Pose>()
        .map_err(|_| lines.err("unknown pose"))?;
    let t = lines.keyed("stages")?;
    let n_stages: usize = lines.num(t.first(), "stage count")?;
    let mut stages = Vec::with_capacity(n_stages.min(1024));
    for _ in 0..n_stages {
        let t = lines.keyed("stage")?;
        let threshold: f64 = lines.num(t.first(), "stage threshold")?;
        let n_weak: usize = lines.num(t.get(1), "weak count")?;
        let mut weak = Vec::with_capacity(n_weak.min(4096));
        for _ in 0..n_weak {
            let t = lines.keyed("weak")?;
            let kind = t
                .first()
                .ok_or_else(|| lines.err("missing feature kind"))?
                .parse::<FeatureKind>()
                .map_err(|_| lines.err("unknown feature kind"))?;
            let theta: f64 = lines.num(t.get(1), "threshold")?;
            let polarity: i8 = lines.num(t.get(2), "polarity")?;
            if polarity != 1 && polarity != -1 {
                return Err(lines.err("polarity must be 1 or -1"));
            }
            let alpha: f64 = lines.num(t.get(3), "alpha")?;
            if !(alpha >= 0.0) {
                return Err(lines.err("alpha must be non-negative"));
            }
            let n_rects: usize = lines.num(t.get(4), "rect count")?;
            if t.len() != 5 + 5 * n_rects {
                return Err(lines.err(format!("expected {n_rects} rects")));
            }
            let mut rects = Vec::with_capacity(n_rects);
            for k in 0..n_rects {
                let f = |j: usize| t.get(5 + 5 * k + j);
                let rect = Rect::new(
                    lines.num(f(0), "rect x")?,
                    lines.num(f(1), "rect y")?,
                    lines.num(f(2), "rect w")?,
                    lines.num(f(3), "rect h")?,
                );
                if rect.right() > base || rect.bottom() > base {
                    return Err(lines.err("rect outside base window"));
                }
                rects.push(WeightedRect {
                    rect,
                    weight: lines.num(f(4), "rect weight")?,
                });
            }
            weak.push((
                WeakClassifier {
                    feature: RectFeature { kind, rects },
                    threshold: theta,
                    polarity,
                },
                alpha,
            ));
        }
        stages.push(StrongClassifier { weak, threshold });
    }
    Ok(Cascade { base, pose, stages })
}

pub fn save_cascade(path: impl AsRef<Path>, c: &Cascade) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_cascade(c)).map_err(|e| Error::file(path, e))
}

pub fn load_cascade(path: impl AsRef<Path>) -> Result<Cascade> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_cascade(&text)
}

#[cfg(test)]
mod tests {
    use super::super::feature_pool;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cascade(seed: u64) -> Cascade {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = feature_pool(24, 2, 3000);
        let mut c = Cascade::new(if seed % 2 == 0 { Pose::Frontal } else { Pose::Profile });
        for _ in 0..rng.gen_range(0..4) {
            let mut st = StrongClassifier { weak: vec![], threshold: rng.gen::<f64>() * 3.0 };
            for _ in 0..rng.gen_range(1..6) {
                st.weak.push((
                    WeakClassifier {
                        feature: pool[rng.gen_range(0..pool.len())].clone(),
                        threshold: rng.gen::<f64>() * 1e3 - 500.0,
                        polarity: if rng.gen() { 1 } else { -1 },
                    },
                    rng.gen::<f64>() / 7.0,
                ));
            }
            c.stages.push(st);
        }
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for seed in 0..20 {
            let c = random_cascade(seed);
            let text = write_cascade(&c);
            let back = parse_cascade(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(write_cascade(&back), text);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let c = (0..).map(random_cascade).find(|c| !c.stages.is_empty()).unwrap();
        let text = write_cascade(&c);
        let broken: Vec<String> = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                let mut t: Vec<&str> = l.split(' ').collect();
                if i == 5 {
                    t[1] = "nine";
                }
                t.join(" ")
            })
            .collect();
        assert!(text.lines().nth(5).unwrap().starts_with("weak "));
        assert!(matches!(parse_cascade(&broken.join("\n")), Err(Error::Parse { line: 6, .. })));
        assert!(matches!(parse_cascade(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_cascade("visage-cascade 1\nbase 24\npose sideways\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}

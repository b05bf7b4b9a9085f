use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Model, Sample, ScalingParams};
use crate::error::{Error, Result};

/// Model text in libSVM's `c_svc`/`rbf` layout.
pub fn write_model(m: &Model) -> String {
    let mut s = String::new();
    let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "svm_type c_svc");
    let _ = writeln!(s, "kernel_type rbf");
    let _ = writeln!(s, "gamma {:?}", m.gamma);
    let _ = writeln!(s, "nr_class {}", m.labels.len());
    let _ = writeln!(s, "total_sv {}", m.sv.len());
    let _ = writeln!(s, "rho {}", join(&mut m.rho.iter().map(|r| format!("{r:?}"))));
    let _ = writeln!(s, "label {}", join(&mut m.labels.iter().map(|l| l.to_string())));
    let _ = writeln!(s, "nr_sv {}", join(&mut m.nr_sv.iter().map(|n| n.to_string())));
    let _ = writeln!(s, "SV");
    for (t, v) in m.sv.iter().enumerate() {
        let mut line: Vec<String> = m.sv_coef.iter().map(|row| format!("{:?}", row[t])).collect();
        line.extend(
            v.iter()
                .enumerate()
                .filter(|(_, &x)| x != 0.0)
                .map(|(d, x)| format!("{}:{x:?}", d + 1)),
        );
        let _ = writeln!(s, "{} ", line.join(" "));
    }
    s
}

fn num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("bad {what} `{tok}`")))
}

/// `idx:val` pairs (1-based, strictly ascending) into a dense row.
fn sparse_row<'a>(line: usize, toks: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    let mut row = Vec::new();
    for tok in toks {
        let (i, v) = tok
            .split_once(':')
            .ok_or_else(|| Error::parse(line, format!("expected index:value, got `{tok}`")))?;
        let i: usize = num(line, i, "feature index")?;
        let v: f64 = num(line, v, "feature value")?;
        if i == 0 || i <= row.len() {
            return Err(Error::parse(line, format!("feature index {i} out of order")));
        }
        row.resize(i, 0.0);
        row[i - 1] = v;
    }
    Ok(row)
}

pub fn parse_model(text: &str) -> Result<Model> {
    let mut gamma = None;
    let mut nr_class = None;
    let mut total_sv = None;
    let mut rho = None;
    let mut labels = None;
    let mut nr_sv = None;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut saw_sv = false;
    let mut last_line = 0;
    for (n, l) in lines.by_ref() {
        last_line = n;
        let mut t = l.split_whitespace();
        let Some(key) = t.next() else {
            return Err(Error::parse(n, "empty header line"));
        };
        let rest: Vec<&str> = t.collect();
        let one = || {
            rest.first()
                .copied()
                .ok_or_else(|| Error::parse(n, format!("`{key}` needs a value")))
        };
        match key {
            "svm_type" => {
                if one()? != "c_svc" {
                    return Err(Error::parse(n, format!("unsupported svm_type `{}`", one()?)));
                }
            }
            "kernel_type" => {
                let k = one()?;
                if k != "rbf" {
                    return Err(Error::UnsupportedKernel(k.to_string()));
                }
            }
            "gamma" => gamma = Some(num::<f64>(n, one()?, "gamma")?),
            "nr_class" => nr_class = Some(num::<usize>(n, one()?, "nr_class")?),
            "total_sv" => total_sv = Some(num::<usize>(n, one()?, "total_sv")?),
            "rho" => rho = Some(rest.iter().map(|r| num::<f64>(n, r, "rho")).collect::<Result<Vec<_>>>()?),
            "label" => labels = Some(rest.iter().map(|r| num::<i32>(n, r, "label")).collect::<Result<Vec<_>>>()?),
            "nr_sv" => nr_sv = Some(rest.iter().map(|r| num::<usize>(n, r, "nr_sv")).collect::<Result<Vec<_>>>()?),
            "SV" => {
                saw_sv = true;
                break;
            }
            other => return Err(Error::parse(n, format!("unknown header field `{other}`"))),
        }
    }
    if !saw_sv {
        return Err(Error::parse(last_line.max(1), "missing `SV` section"));
    }
    let missing = |what: &str| Error::parse(last_line, format!("header lacks `{what}`"));
    let gamma = gamma.ok_or_else(|| missing("gamma"))?;
    let k = nr_class.ok_or_else(|| missing("nr_class"))?;
    let total = total_sv.ok_or_else(|| missing("total_sv"))?;
    let rho = rho.ok_or_else(|| missing("rho"))?;
    let labels = labels.ok_or_else(|| missing("label"))?;
    let nr_sv = nr_sv.ok_or_else(|| missing("nr_sv"))?;
    if labels.len() != k || nr_sv.len() != k || rho.len() != k * k.saturating_sub(1) / 2 {
        return Err(Error::parse(last_line, "header lists disagree with nr_class"));
    }
    if nr_sv.iter().sum::<usize>() != total {
        return Err(Error::parse(last_line, "nr_sv does not sum to total_sv"));
    }
    let rows = k.saturating_sub(1);
    let mut sv = Vec::with_capacity(total);
    let mut sv_coef = vec![Vec::with_capacity(total); rows];
    for (n, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let mut t = l.split_whitespace();
        for row in sv_coef.iter_mut() {
            let tok = t
                .next()
                .ok_or_else(|| Error::parse(n, "missing dual coefficient"))?;
            row.push(num::<f64>(n, tok, "coefficient")?);
        }
        sv.push(sparse_row(n, t)?);
        last_line = n;
    }
    if sv.len() != total {
        return Err(Error::parse(
            last_line + 1,
            format!("expected {total} support vectors, found {}", sv.len()),
        ));
    }
    let mut order = labels.clone();
    order.sort_unstable();
    order.dedup();
    if order != labels {
        return Err(Error::parse(1, "labels must be distinct and ascending"));
    }
    Ok(Model {
        gamma,
        labels,
        nr_sv,
        sv,
        sv_coef,
        rho,
        scaling: None,
    })
}

/// Scaling parameters in svm-scale's range-file layout.
pub fn write_range(s: &ScalingParams) -> String {
    let mut out = String::from("x\n-1 1\n");
    for (d, (lo, hi)) in s.min.iter().zip(&s.max).enumerate() {
        let _ = writeln!(out, "{} {lo:?} {hi:?}", d + 1);
    }
    out
}

pub fn parse_range(text: &str) -> Result<ScalingParams> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, "x")) => {}
        _ => return Err(Error::parse(1, "range file must start with `x`")),
    }
    match lines.next() {
        Some((_, l)) if l.split_whitespace().map(str::parse::<f64>).eq([Ok(-1.0), Ok(1.0)]) => {}
        _ => return Err(Error::parse(2, "only the [-1, 1] target range is supported")),
    }
    let mut min = Vec::new();
    let mut max = Vec::new();
    for (n, l) in lines {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.is_empty() {
            continue;
        }
        if t.len() != 3 {
            return Err(Error::parse(n, "expected `index min max`"));
        }
        let i: usize = num(n, t[0], "index")?;
        if i <= min.len() {
            return Err(Error::parse(n, format!("index {i} out of order")));
        }
        let (lo, hi): (f64, f64) = (num(n, t[1], "min")?, num(n, t[2], "max")?);
        if lo > hi {
            return Err(Error::parse(n, "min exceeds max"));
        }
        // skipped indices are constant dimensions
        min.resize(i - 1, 0.0);
        max.resize(i - 1, 0.0);
        min.push(lo);
        max.push(hi);
    }
    Ok(ScalingParams { min, max })
}

fn range_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".range");
    PathBuf::from(s)
}

/// Writes the model file and, when the model carries scaling, a
/// `<path>.range` sidecar.
pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_model(m)).map_err(|e| Error::file(path, e))?;
    let rp = range_path(path);
    match &m.scaling {
        Some(s) => std::fs::write(&rp, write_range(s)).map_err(|e| Error::file(&rp, e))?,
        None if rp.exists() => std::fs::remove_file(&rp).map_err(|e| Error::file(&rp, e))?,
        None => {}
    }
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut m = parse_model(&text)?;
    let rp = range_path(path);
    if rp.exists() {
        let r = std::fs::read_to_string(&rp).map_err(|e| Error::file(&rp, e))?;
        m.scaling = Some(parse_range(&r)?);
    }
    Ok(m)
}

/// Training data as `label idx:val ...` lines; zeros are omitted.
pub fn write_problem(samples: &[Sample]) -> String {
    let mut s = String::new();
    for x in samples {
        let _ = write!(s, "{}", x.label);
        for (d, v) in x.features.iter().enumerate() {
            if *v != 0.0 {
                let _ = write!(s, " {}:{v:?}", d + 1);
            }
        }
        s.push('\n');
    }
    s
}

/// Parses sparse training data, padding every row to `dim` (or to the largest
/// index seen).
pub fn parse_problem(text: &str, dim: Option<usize>) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let n = i + 1;
        let l = l.split('#').next().unwrap_or("");
        let mut t = l.split_whitespace();
        let Some(label) = t.next() else { continue };
        let label: f64 = num(n, label, "label")?;
        if label.fract() != 0.0 {
            return Err(Error::parse(n, format!("class label {label} is not an integer")));
        }
        let row = sparse_row(n, t)?;
        if let Some(d) = dim {
            if row.len() > d {
                return Err(Error::parse(n, format!("index {} exceeds dimension {d}", row.len())));
            }
        }
        out.push(Sample::new(row, label as i32));
    }
    let width = dim.unwrap_or_else(|| out.iter().map(|s| s.features.len()).max().unwrap_or(0));
    for s in &mut out {
        s.features.resize(width, 0.0);
    }
    Ok(out)
}

pub fn read_problem(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_problem(&text, dim)
}

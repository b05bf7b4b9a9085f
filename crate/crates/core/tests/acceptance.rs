//! Acceptance checks, one line per criterion. Runs as a plain binary so
//! the lines come out in order; exits non-zero if any check fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use visage_core::cascade::{
    eval_cascade, eval_strong, feature_pool, scan_hits, window_count, AdaBoost, Cascade, Integrals, LabeledWindow,
    Pose, RectFeature, ScanParams, StrongClassifier, WeakClassifier, FeatureKind, DEFAULT_BASE,
};
use visage_core::flow::{median_smooth, ssd, track_point, FlowParams};
use visage_core::imgcore::{integral, sobel, SobelParams};
use visage_core::landmarks::{good_features, min_eigenvalue, CornerParams, Landmark, LandmarkSet, Region};
use visage_core::pipeline::synth::{Split, SyntheticSpec};
use visage_core::pipeline::{
    benchmark, builtin_detectors, evaluate_session, train_session, ConfusionMatrix, SessionConfig, REFERENCE_OVERALL,
};
use visage_core::svm::{
    cross_validate, grid_search, kkt_violation, load_model, solve_binary, train_binary, train_multiclass, Model,
    Sample, SvmParams,
};
use visage_core::{Image, Rect};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_gray(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |_, _| rng.gen())
}

fn integral_oracle() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        let img = random_gray(&mut rng, w, h);
        let ii = integral(&img).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let x = rng.gen_range(0..=w);
            let y = rng.gen_range(0..=h);
            let r = Rect::new(x as u32, y as u32, rng.gen_range(0..=w - x) as u32, rng.gen_range(0..=h - y) as u32);
            let mut naive = 0u64;
            for yy in r.y..r.bottom() {
                for xx in r.x..r.right() {
                    naive += img.luma(xx as usize, yy as usize) as u64;
                }
            }
            let got = ii.rect_sum(&r).map_err(|e| e.to_string())?;
            ensure(got == naive, || format!("{r:?} on {w}x{h}: {got} != {naive}"))?;
        }
    }
    let el = t.elapsed();
    ensure(el < Duration::from_secs(10), || format!("took {el:?}"))?;
    Ok(format!("1000 images x 200 rects exact in {:.2?}", el))
}

fn random_stage(rng: &mut ChaCha8Rng, pool: &[RectFeature]) -> StrongClassifier {
    let weak: Vec<(WeakClassifier, f64)> = (0..rng.gen_range(1..8))
        .map(|_| {
            let w = WeakClassifier {
                feature: pool[rng.gen_range(0..pool.len())].clone(),
                threshold: rng.gen_range(-2.0..2.0),
                polarity: if rng.gen() { 1 } else { -1 },
            };
            (w, rng.gen_range(0.1..2.0))
        })
        .collect();
    let total: f64 = weak.iter().map(|(_, a)| a).sum();
    StrongClassifier {
        weak,
        threshold: total * rng.gen_range(0.2..0.8),
    }
}

fn cascade_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pool = feature_pool(DEFAULT_BASE, 2, 5000);
    let mut accepted = 0;
    for _ in 0..1000 {
        let stage = random_stage(&mut rng, &pool);
        let cascade = Cascade {
            base: DEFAULT_BASE,
            pose: Pose::Frontal,
            stages: vec![stage.clone()],
        };
        let img = random_gray(&mut rng, 64, 64);
        let ints = Integrals::new(&img).map_err(|e| e.to_string())?;
        let size = rng.gen_range(24..=64u32);
        let x = rng.gen_range(0..=64 - size);
        let y = rng.gen_range(0..=64 - size);
        let w = ints.window(x, y, size, DEFAULT_BASE, true).map_err(|e| e.to_string())?;
        let strong = eval_strong(&stage, &ints.sum, &w).map_err(|e| e.to_string())?.0 == 1;
        let casc = eval_cascade(&cascade, &ints.sum, &w).map_err(|e| e.to_string())?.accepted();
        ensure(strong == casc, || format!("window {:?}: strong {strong} cascade {casc}", w.rect))?;
        accepted += strong as usize;
    }
    let empty = Cascade::new(Pose::Frontal);
    let img = random_gray(&mut rng, 30, 30);
    let ints = Integrals::new(&img).map_err(|e| e.to_string())?;
    let p = ScanParams::default();
    let hits = scan_hits(&empty, &ints, &p).map_err(|e| e.to_string())?;
    let expected = window_count(30, 30, DEFAULT_BASE, &p).map_err(|e| e.to_string())?;
    ensure(hits.len() == expected, || format!("empty cascade accepted {} of {expected}", hits.len()))?;
    for size in 24..=30u32 {
        for y in 0..=30 - size {
            for x in 0..=30 - size {
                let w = ints.window(x, y, size, DEFAULT_BASE, true).map_err(|e| e.to_string())?;
                let d = eval_cascade(&empty, &ints.sum, &w).map_err(|e| e.to_string())?;
                ensure(d.accepted(), || format!("empty cascade rejected {:?}", w.rect))?;
            }
        }
    }
    Ok(format!("1000 windows agree ({accepted} accepted); empty cascade accepts all {expected} scan windows"))
}

fn adaboost_sanity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let samples: Vec<LabeledWindow> = (0..40)
        .map(|i| {
            let pos = i % 2 == 0;
            let img = Image::from_fn(24, 24, |x, _| {
                let bright = (x < 12) == pos;
                (if bright { 170 } else { 70 }) + rng.gen_range(0..30)
            });
            LabeledWindow::from_image(&img, pos, false).unwrap()
        })
        .collect();
    let pool = vec![RectFeature::new(FeatureKind::TwoHorizontal, 0, 0, 12, 24)];
    let mut ab = AdaBoost::new(&samples, &pool).map_err(|e| e.to_string())?;
    let sum0: f64 = ab.weights().iter().sum();
    ensure((sum0 - 1.0).abs() <= 1e-12, || format!("initial weights sum {sum0}"))?;
    let mut errors = Vec::new();
    for round in 0..5 {
        let r = ab.step().map_err(|e| e.to_string())?;
        ensure(r.error < 0.5, || format!("round {round} error {}", r.error))?;
        let sum: f64 = ab.weights().iter().sum();
        ensure((sum - 1.0).abs() <= 1e-12, || format!("round {round} weights sum {sum}"))?;
        errors.push(r.error);
        if round == 0 {
            let wrong = samples
                .iter()
                .zip(ab.last_outputs())
                .filter(|(s, &o)| s.positive != o)
                .count();
            ensure(wrong == 0, || format!("{wrong} training errors after one round"))?;
        }
    }
    Ok(format!("zero training error at T=1, weighted errors {errors:?}"))
}

/// Independent Shi-Tomasi: replicate-border Sobel, clamped box sum, 3x3
/// strict suppression, quality floor, sort, quadratic greedy spacing.
fn shi_tomasi_oracle(img: &Image, p: &CornerParams, max_n: usize) -> Vec<(u32, u32)> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let px = |x: i64, y: i64| img.luma(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize) as i64;
    let mut gx = vec![0i64; (w * h) as usize];
    let mut gy = vec![0i64; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut sx = 0;
            let mut sy = 0;
            for (ky, row) in SobelParams::DX.kernel().iter().enumerate() {
                for (kx, &c) in row.iter().enumerate() {
                    sx += c as i64 * px(x + kx as i64 - 1, y + ky as i64 - 1);
                }
            }
            for (ky, row) in SobelParams::DY.kernel().iter().enumerate() {
                for (kx, &c) in row.iter().enumerate() {
                    sy += c as i64 * px(x + kx as i64 - 1, y + ky as i64 - 1);
                }
            }
            gx[(y * w + x) as usize] = sx;
            gy[(y * w + x) as usize] = sy;
        }
    }
    let r = (p.block_size / 2) as i64;
    let mut lam = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let (mut a, mut b, mut c) = (0i64, 0i64, 0i64);
            for yy in (y - r).max(0)..=(y + r).min(h - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                    let i = (yy * w + xx) as usize;
                    a += gx[i] * gx[i];
                    b += gx[i] * gy[i];
                    c += gy[i] * gy[i];
                }
            }
            lam[(y * w + x) as usize] = min_eigenvalue([a, b, c]);
        }
    }
    let at = |x: i64, y: i64| lam[(y * w + x) as usize];
    let max = lam.iter().cloned().fold(0.0, f64::max);
    let mut cands = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = at(x, y);
            if v <= 0.0 || v < p.quality_level * max {
                continue;
            }
            let beaten = (-1..=1i64).any(|dy| {
                (-1..=1i64).any(|dx| {
                    let (nx, ny) = (x + dx, y + dy);
                    (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && nx < w && ny < h && at(nx, ny) > v
                })
            });
            if !beaten {
                cands.push((v, y, x));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out: Vec<(u32, u32)> = Vec::new();
    for (_, y, x) in cands {
        if out.len() == max_n {
            break;
        }
        let far = out.iter().all(|&(ox, oy)| {
            let (dx, dy) = (ox as f64 - x as f64, oy as f64 - y as f64);
            dx * dx + dy * dy >= p.min_distance * p.min_distance
        });
        if far {
            out.push((x as u32, y as u32));
        }
    }
    out
}

fn shi_tomasi() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut total = 0;
    for i in 0..50 {
        let img = random_gray(&mut rng, 32, 32);
        let p = CornerParams {
            min_distance: [0.0, 3.0, 5.0][i % 3],
            ..CornerParams::default()
        };
        let max_n = [10, 25, 1000][i % 3];
        let got: Vec<(u32, u32)> = good_features(&img, &Rect::new(0, 0, 32, 32), &p, max_n)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|c| (c.x, c.y))
            .collect();
        let want = shi_tomasi_oracle(&img, &p, max_n);
        ensure(got == want, || format!("image {i}: {} points vs oracle {}", got.len(), want.len()))?;
        total += got.len();
    }
    Ok(format!("50 images identical to the oracle ({total} points)"))
}

fn flow_recovery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let texture = random_gray(&mut rng, 48, 48);
    let p = FlowParams::default();
    let patch = |ox: usize, oy: usize| Image::from_fn(32, 32, |x, y| texture.luma(x + ox, y + oy));
    let i1 = patch(8, 8);
    for dy in -3..=3i64 {
        for dx in -3..=3i64 {
            let i2 = patch((8 - dx) as usize, (8 - dy) as usize);
            let t = track_point(&i1, &i2, 16, 16, &p)
                .map_err(|e| e.to_string())?
                .ok_or("point lost")?;
            ensure((t.dx, t.dy) == (dx, dy), || format!("shift ({dx},{dy}) tracked as ({},{})", t.dx, t.dy))?;
        }
    }
    for case in 0..1000 {
        let (w, h) = (rng.gen_range(12..40), rng.gen_range(12..40));
        let a = random_gray(&mut rng, w, h);
        let b = random_gray(&mut rng, w, h);
        let fp = FlowParams {
            wx: rng.gen_range(0..5),
            wy: rng.gen_range(0..5),
            ..FlowParams::default()
        };
        let (wx, wy) = (fp.wx as i64, fp.wy as i64);
        let (w, h) = (w as i64, h as i64);
        let x = rng.gen_range(wx..w - wx);
        let y = rng.gen_range(wy..h - wy);
        let dx = rng.gen_range(wx - x..w - wx - x);
        let dy = rng.gen_range(wy - y..h - wy - y);
        let mut naive = 0u64;
        for j in -wy..=wy {
            for i in -wx..=wx {
                let d = a.luma((x + i) as usize, (y + j) as usize) as i64
                    - b.luma((x + dx + i) as usize, (y + dy + j) as usize) as i64;
                naive += (d * d) as u64;
            }
        }
        let got = ssd(&a, &b, x, y, dx, dy, &fp).map_err(|e| e.to_string())?;
        ensure(got == naive, || format!("case {case}: {got} != {naive}"))?;
    }
    Ok("all 49 shifts exact; 1000 ssd cases exact".into())
}

fn sobel_check() -> Check {
    let flat = Image::filled(16, 12, 1, 93);
    for p in [SobelParams::DX, SobelParams::DY] {
        let g = sobel(&flat, p).map_err(|e| e.to_string())?;
        ensure(g.data.iter().all(|&v| v == 0), || "constant image has a gradient".into())?;
    }
    let ramp = Image::from_fn(20, 10, |x, _| x as u8);
    let g = sobel(&ramp, SobelParams::DX).map_err(|e| e.to_string())?;
    for y in 1..9 {
        for x in 1..19 {
            ensure(g.get(x, y) == 8, || format!("ramp gradient {} at ({x},{y})", g.get(x, y)))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..200 {
        let (w, h) = (rng.gen_range(3..40), rng.gen_range(3..40));
        let img = random_gray(&mut rng, w, h);
        for p in [SobelParams::DX, SobelParams::DY] {
            let g = sobel(&img, p).map_err(|e| e.to_string())?;
            let k = p.kernel();
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let mut acc = 0;
                    for (ky, row) in k.iter().enumerate() {
                        for (kx, &c) in row.iter().enumerate() {
                            acc += c * img.luma(x + kx - 1, y + ky - 1) as i32;
                        }
                    }
                    ensure(g.get(x, y) == acc, || format!("({x},{y}) {} != {acc}", g.get(x, y)))?;
                }
            }
        }
    }
    Ok("flat 0, ramp 8, 200 random images match direct convolution".into())
}

fn blobs(per_class: usize, classes: i32, spread: f64, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..classes)
        .flat_map(|c| (0..per_class).map(move |_| c))
        .map(|c| {
            let center = [(c % 2) as f64 * 4.0, (c / 2) as f64 * 4.0, 1.0];
            Sample::new(center.iter().map(|m| m + rng.gen_range(-spread..spread)).collect(), c)
        })
        .collect()
}

/// Decision values from the one-vs-one dual expansion, written out longhand.
fn dual_expansion(m: &Model, x: &[f64]) -> Vec<f64> {
    let x = match &m.scaling {
        Some(s) => s.apply(x),
        None => x.to_vec(),
    };
    let k = |s: &[f64]| {
        let d: f64 = s.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
        (-m.gamma * d).exp()
    };
    let mut start = vec![0];
    for n in &m.nr_sv {
        start.push(start.last().unwrap() + n);
    }
    let n = m.labels.len();
    let mut out = Vec::new();
    let mut pair = 0;
    for i in 0..n {
        for j in i + 1..n {
            let mut sum = 0.0;
            for t in start[i]..start[i + 1] {
                sum += m.sv_coef[j - 1][t] * k(&m.sv[t]);
            }
            for t in start[j]..start[j + 1] {
                sum += m.sv_coef[i][t] * k(&m.sv[t]);
            }
            out.push(sum - m.rho[pair]);
            pair += 1;
        }
    }
    out
}

fn svm_check() -> Check {
    let mut worst = 0.0f64;
    let mut models = 0;
    let mut kkt = |x: &[Vec<f64>], y: &[i8], p: &SvmParams| -> std::result::Result<(), String> {
        let s = solve_binary(x, y, p).map_err(|e| e.to_string())?;
        let (v, bal) = kkt_violation(x, y, &s, p);
        ensure(v <= p.tol && bal < 1e-9, || format!("KKT violation {v}, balance {bal}"))?;
        worst = worst.max(v);
        models += 1;
        Ok(())
    };
    let xor_x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let xor_y = vec![1i8, 1, -1, -1];
    let xp = SvmParams::new(10.0, 1.0);
    kkt(&xor_x, &xor_y, &xp)?;
    let xm = train_binary(&xor_x, &xor_y, &xp).map_err(|e| e.to_string())?;
    for (x, &y) in xor_x.iter().zip(&xor_y) {
        ensure((xm.decision(x) > 0.0) == (y > 0), || "XOR point misclassified".into())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..30 {
        let n = rng.gen_range(10..60);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut y: Vec<i8> = x.iter().map(|v| if v[0] + 0.3 * v[1] > 0.0 { 1 } else { -1 }).collect();
        y[0] = 1;
        y[1] = -1;
        for v in y.iter_mut().skip(2) {
            if rng.gen_bool(0.1) {
                *v = -*v;
            }
        }
        let p = SvmParams::new([0.1, 1.0, 10.0, 100.0][trial % 4], [0.1, 1.0, 4.0][trial % 3]);
        kkt(&x, &y, &p)?;
    }
    let data = blobs(15, 4, 1.5, 18);
    for i in 0..4 {
        for j in i + 1..4 {
            let pair: Vec<&Sample> = data.iter().filter(|s| s.label == i || s.label == j).collect();
            let x: Vec<Vec<f64>> = pair.iter().map(|s| s.features.clone()).collect();
            let y: Vec<i8> = pair.iter().map(|s| if s.label == i { 1 } else { -1 }).collect();
            kkt(&x, &y, &SvmParams::new(2.0, 0.5))?;
        }
    }

    let model = train_multiclass(&data, &SvmParams::new(4.0, 0.5)).map_err(|e| e.to_string())?;
    let mut max_dev = 0.0f64;
    for _ in 0..200 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..6.0)).collect();
        let a = model.decision_values(&x);
        let b = dual_expansion(&model, &x);
        for (u, v) in a.iter().zip(&b) {
            max_dev = max_dev.max((u - v).abs());
        }
    }
    ensure(max_dev <= 1e-9, || format!("decision values deviate by {max_dev}"))?;

    let small = blobs(6, 3, 2.5, 19);
    let (cs, gs) = ([0.25, 1.0, 4.0, 16.0], [0.1, 0.5, 2.0]);
    let base = SvmParams::default();
    let grid = grid_search(&small, &cs, &gs, 3, 5, &base).map_err(|e| e.to_string())?;
    let mut best: Option<(f64, f64, f64)> = None;
    let mut cells = Vec::new();
    for &c in &cs {
        for &g in &gs {
            let acc = cross_validate(&small, &SvmParams { c, gamma: g, ..base.clone() }, 3, 5).map_err(|e| e.to_string())?;
            cells.push((c, g, acc));
            if best.map_or(true, |b| acc > b.2) {
                best = Some((c, g, acc));
            }
        }
    }
    let best = best.unwrap();
    ensure(
        (grid.best.c, grid.best.gamma, grid.best.accuracy) == best,
        || format!("grid best {:?} vs enumeration {best:?}", grid.best),
    )?;
    let got: Vec<(f64, f64, f64)> = grid.cells.iter().map(|c| (c.c, c.gamma, c.accuracy)).collect();
    ensure(got == cells, || "grid cells differ from enumeration".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("blobs.model");
    visage_core::svm::save_model(&model, &path).map_err(|e| e.to_string())?;
    let loaded = load_model(&path).map_err(|e| e.to_string())?;
    let mut same = 0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..6.0)).collect();
        same += (model.predict(&x).label == loaded.predict(&x).label) as usize;
    }
    ensure(same == 100, || format!("{same}/100 predictions preserved"))?;
    Ok(format!(
        "{models} solutions within KKT tol (worst {worst:.2e}); XOR 100%; dual deviation {max_dev:.1e}; grid matches enumeration; 100/100 after reload"
    ))
}

fn landmark_set(coords: &[(f64, f64)]) -> LandmarkSet {
    LandmarkSet {
        points: coords
            .iter()
            .map(|&(x, y)| Landmark {
                x,
                y,
                region: Region::Mouth,
                valid: true,
            })
            .collect(),
    }
}

fn median_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..500 {
        let history: Vec<Vec<(f64, f64)>> = (0..10)
            .map(|_| (0..21).map(|_| (rng.gen_range(0.0..320.0), rng.gen_range(0.0..240.0))).collect())
            .collect();
        let sets: Vec<LandmarkSet> = history.iter().map(|h| landmark_set(h)).collect();
        let got = median_smooth(&sets).map_err(|e| e.to_string())?;
        for i in 0..21 {
            let mut xs: Vec<f64> = history.iter().map(|h| h[i].0).collect();
            let mut ys: Vec<f64> = history.iter().map(|h| h[i].1).collect();
            xs.sort_by(f64::total_cmp);
            ys.sort_by(f64::total_cmp);
            let (mx, my) = ((xs[4] + xs[5]) / 2.0, (ys[4] + ys[5]) / 2.0);
            let pt = got.points[i];
            ensure(pt.valid && pt.x == mx && pt.y == my, || format!("case {case} point {i}"))?;
        }
    }
    let mut history: Vec<LandmarkSet> = (0..10).map(|_| landmark_set(&[(50.0, 60.0); 21])).collect();
    history[4].points[3].x = 250.0;
    history[4].points[3].y = 5.0;
    let got = median_smooth(&history).map_err(|e| e.to_string())?;
    ensure(got.points[3].x == 50.0 && got.points[3].y == 60.0, || "outlier leaked through".into())?;
    Ok("500 histories match the sorting oracle; outlier rejected".into())
}

fn table_arithmetic() -> Check {
    let m = ConfusionMatrix::from_counts(
        vec![0, 1, 2, 3],
        vec![vec![15, 3, 12, 0], vec![5, 18, 5, 2], vec![10, 5, 13, 2], vec![0, 4, 0, 26]],
    )
    .map_err(|e| e.to_string())?;
    let rates: Vec<f64> = m.class_rates().into_iter().map(|r| r.unwrap_or(f64::NAN)).collect();
    for (got, want) in rates.iter().zip([50.0, 60.0, 43.33, 86.67]) {
        ensure((got - want).abs() <= 0.05, || format!("class rate {got} vs {want}"))?;
    }
    let overall = m.overall().unwrap_or(f64::NAN);
    ensure((overall - 60.0).abs() <= 0.05, || format!("overall {overall}"))?;
    let table = m.format_table(Some(REFERENCE_OVERALL));
    ensure(table.contains("59.91"), || "table lacks the printed-overall footnote".into())?;
    Ok(format!(
        "rates {:.2}/{:.2}/{:.2}/{:.2}, overall {overall:.2}, footnote cites {REFERENCE_OVERALL}",
        rates[0], rates[1], rates[2], rates[3]
    ))
}

fn run_seed(seed: u64) -> std::result::Result<f64, String> {
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let config = SessionConfig::default();
    let detectors = builtin_detectors().map_err(|e| e.to_string())?;
    let train = spec.sequences(Split::Train).map_err(|e| e.to_string())?;
    let test = spec.sequences(Split::Test).map_err(|e| e.to_string())?;
    let report = train_session(&train, &config, &detectors).map_err(|e| e.to_string())?;
    let eval = evaluate_session(&report.model, &test, &config, &detectors).map_err(|e| e.to_string())?;
    Ok(eval.sequence_accuracy)
}

fn end_to_end() -> Check {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec::default();
    let set = visage_core::pipeline::generate_synthetic(&spec, dir.path()).map_err(|e| e.to_string())?;
    let config = SessionConfig::default();
    let detectors = builtin_detectors().map_err(|e| e.to_string())?;
    let train = visage_core::pipeline::read_manifest(&set.train_manifest).map_err(|e| e.to_string())?;
    let test = visage_core::pipeline::read_manifest(&set.test_manifest).map_err(|e| e.to_string())?;
    let report = train_session(&train, &config, &detectors).map_err(|e| e.to_string())?;
    let eval = evaluate_session(&report.model, &test, &config, &detectors).map_err(|e| e.to_string())?;
    let seed7 = eval.sequence_accuracy;
    let seeds: Vec<u64> = (1..=10).collect();
    let accs: Vec<f64> = seeds
        .par_iter()
        .map(|&s| if s == spec.seed { Ok(seed7) } else { run_seed(s) })
        .collect::<std::result::Result<_, _>>()?;
    let el = t.elapsed();
    let above = accs.iter().filter(|&&a| a > 0.25).count();
    let detail = format!(
        "seed 7 held-out {:.2}%, seeds 1-10 {:?}, {above}/10 above chance, {:.0?}",
        seed7 * 100.0,
        accs.iter().map(|a| (a * 1000.0).round() / 10.0).collect::<Vec<_>>(),
        el
    );
    ensure(seed7 >= 0.9 && above == 10 && el < Duration::from_secs(300), || detail.clone())?;
    Ok(detail)
}

fn throughput() -> Check {
    let spec = SyntheticSpec::default();
    let config = SessionConfig::default();
    let detectors = builtin_detectors().map_err(|e| e.to_string())?;
    let train: Vec<_> = spec.sequences(Split::Train).map_err(|e| e.to_string())?.into_iter().step_by(4).collect();
    let model = train_session(&train, &config, &detectors).map_err(|e| e.to_string())?.model;
    let test = spec.sequences(Split::Test).map_err(|e| e.to_string())?;
    let report = benchmark(&test, &config, &detectors, Some(Arc::new(model)), None).map_err(|e| e.to_string())?;
    let detail = format!(
        "{:.1} ms per 10 frames over {} frames at {}x{}, {} accounting violations",
        report.ms_per_10_frames, report.frames, report.width, report.height, report.accounting_violations
    );
    ensure(report.ms_per_10_frames <= 150.0 && report.accounting_violations == 0, || detail.clone())?;
    Ok(detail)
}

fn main() {
    // keep libtest's arguments from tripping anything
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks: [(&str, fn() -> Check); 11] = [
        ("integral image oracle", integral_oracle),
        ("cascade equivalence", cascade_equivalence),
        ("adaboost sanity", adaboost_sanity),
        ("shi-tomasi oracle", shi_tomasi),
        ("flow recovery", flow_recovery),
        ("sobel", sobel_check),
        ("svm", svm_check),
        ("median smoothing", median_check),
        ("table arithmetic", table_arithmetic),
        ("end-to-end synthetic", end_to_end),
        ("throughput", throughput),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}

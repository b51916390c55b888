//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach stdout; exits nonzero on any failure.
//!
//! Criteria 7-9 train the full desk-scale pipeline (several minutes).

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use facesynth::datasets::commands::{self, AblationRow, RunOptions};
use facesynth::datasets::PipelineConfig;
use facesynth::denoise::{cfg_eps, generate, AnalyticGaussian, BlendConfig, BlendMode, Counting, Denoiser, Generator, GeneratorShape, Selection, StepDraws, TrainBatch};
use facesynth::metrics::{eir, LabeledEmbeddingSet};
use facesynth::nn::Parameters;
use facesynth::rng::{domain, substream, StreamKey};
use facesynth::schedule::DiffusionSchedule;
use facesynth::stylemodel::{make_basis, rasterize, render_with_irradiance, Block, StyleAttributes};
use facesynth::stylesampler::{sample_attributes, sample_class, SamplingStrategy};
use facesynth::worldgen::true_prior;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn within_time(o: Outcome, elapsed: Duration, limit: Option<Duration>) -> Outcome {
    match limit {
        Some(l) if elapsed > l => outcome(false, format!("{}; took {:.1?} > {:.0?}", o.detail, elapsed, l)),
        _ => o,
    }
}

/// Forward/inverse exactness in f64, plus the same checks reported for f32.
fn schedule_exactness() -> Outcome {
    let s = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let mut rng = substream(1, 0, 0, 0);
    let (mut recover, mut invert, mut recover32, mut invert32) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-3);
    for _ in 0..10_000 {
        let t = rng.random_range(1..=1000);
        let z0 = Array1::from_shape_fn(4, |_| normal(&mut rng));
        let eps = Array1::from_shape_fn(4, |_| normal(&mut rng));
        let zt = s.forward_sample(z0.view(), t, eps.view()).unwrap();
        let ab = s.alpha_bar(t);
        let back = (&zt - &(&eps * (1.0 - ab).sqrt())) / ab.sqrt();
        let z1 = s.forward_sample(z0.view(), 1, eps.view()).unwrap();
        let inv = s.reverse_step(z1.view(), 1, eps.view(), Array1::zeros(4).view()).unwrap();
        let (z0f, epsf) = (z0.mapv(|v| v as f32), eps.mapv(|v| v as f32));
        let z1f = s.forward_sample(z0f.view(), 1, epsf.view()).unwrap();
        let invf = s.reverse_step(z1f.view(), 1, epsf.view(), Array1::<f32>::zeros(4).view()).unwrap();
        let ztf = s.forward_sample(z0f.view(), t, epsf.view()).unwrap();
        for i in 0..4 {
            recover = recover.max(rel(back[i], z0[i]));
            invert = invert.max(rel(inv[i], z0[i]));
            invert32 = invert32.max(rel(invf[i] as f64, z0f[i] as f64));
            let b32 = (ztf[i] as f64 - (1.0 - ab).sqrt() * epsf[i] as f64) / ab.sqrt();
            recover32 = recover32.max(rel(b32, z0f[i] as f64));
        }
    }
    outcome(
        recover <= 1e-6 && invert <= 1e-6 && invert32 <= 1e-6,
        format!(
            "10^4 cases, f64 max rel err: z0 recovery {recover:.1e}, t=1 inversion {invert:.1e} (tol 1e-6); \
             f32: t=1 inversion {invert32:.1e}, z0 recovery {recover32:.1e} (informational, amplified by 1/sqrt(abar))"
        ),
    )
}

fn analytic_sampling() -> Outcome {
    let s = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let blend = BlendConfig { mode: BlendMode::NoBlending, t0: 500, w: 0.0 };
    let keys: Vec<StreamKey> = (0..10_000).map(|i| StreamKey::new(2, domain::GENERATE, i, 0)).collect();
    let d = AnalyticGaussian::new(Array1::zeros(1), Array2::eye(1), s.clone()).unwrap();
    let (z, _) = generate(&d, &s, &(), &blend, &keys).unwrap();
    let mut v: Vec<f64> = z.iter().map(|&x| x as f64).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let std = Normal::new(0.0, 1.0).unwrap();
    let ks = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = std.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let m = 0.37;
    let point = AnalyticGaussian::new(Array1::from(vec![m]), Array2::zeros((1, 1)), s.clone()).unwrap();
    let (zp, _) = generate(&point, &s, &(), &blend, &keys).unwrap();
    let worst = zp.iter().map(|&x| (x as f64 - m).abs()).fold(0.0, f64::max);
    outcome(ks < 0.02 && worst < 1e-3, format!("KS statistic {ks:.4} (< 0.02); point mass max |z - m| {worst:.1e} (< 1e-3)"))
}

fn probe_generator(seed: u64, h: usize) -> Generator<f32> {
    let shape = GeneratorShape { latent_dim: 8, map_height: h, map_width: h, hidden: vec![24], encoder_channels: (3, 3), id_dim: 7, style_dim: 6 };
    Generator::new(&shape, &mut substream(seed, domain::TRAIN_INIT, 0, 0))
}

fn cfg_identity() -> Outcome {
    let g = probe_generator(3, 16);
    let mut rng = substream(3, 0, 1, 0);
    let mut mismatches = 0;
    for probe in 0..1000 {
        let rows = 1 + probe % 4;
        let z = Array2::from_shape_fn((rows, 8), |_| normal(&mut rng) as f32);
        let c_id = Array2::from_shape_fn((rows, 7), |_| normal(&mut rng) as f32);
        let maps = Array2::from_shape_fn((rows, 9 * 16 * 16), |_| rng.random_range(0.0f32..1.0));
        let styles = g.encode_styles(&maps);
        let prepared = g.prepare(rows, Some(c_id.view()), Some(styles.view())).unwrap();
        let t = rng.random_range(1..=1000);
        let blend = BlendConfig { mode: BlendMode::ALL[probe % 4], t0: rng.random_range(0..=1000), w: 0.0 };
        let (guided, _) = cfg_eps(&g, &z, t, &blend, &prepared).unwrap();
        let cond = g.eps(&z, t, Selection::FULL, &prepared).unwrap();
        if guided.iter().zip(&cond).any(|(a, b)| a.to_bits() != b.to_bits()) {
            mismatches += 1;
        }
    }
    let s = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let d = Counting::new(AnalyticGaussian::new(Array1::zeros(2), Array2::eye(2), s.clone()).unwrap());
    let mut bad_counts = Vec::new();
    for t0 in [0, 1, 250, 500, 999, 1000] {
        d.reset();
        let blend = BlendConfig { mode: BlendMode::Blending, t0, w: 0.5 };
        let (_, trace) = generate(&d, &s, &(), &blend, &[StreamKey::new(3, domain::GENERATE, t0 as u64, 0)]).unwrap();
        let counted = (d.calls(Selection::STYLE_EMPTY), d.calls(Selection::ID_EMPTY));
        if counted != (1000 - t0, t0) || (trace.style_branch, trace.identity_branch) != counted {
            bad_counts.push(t0);
        }
    }
    outcome(
        mismatches == 0 && bad_counts.is_empty(),
        format!("w=0 bitwise mismatches {mismatches}/1000; Blending branch counts wrong for t0 in {bad_counts:?}"),
    )
}

fn gradient_check() -> Outcome {
    let shape = GeneratorShape { latent_dim: 6, map_height: 16, map_width: 16, hidden: vec![10, 10], encoder_channels: (3, 3), id_dim: 5, style_dim: 4 };
    let mut g = Generator::<f64>::new(&shape, &mut substream(4, domain::TRAIN_INIT, 0, 0));
    let mut rng = substream(4, 0, 1, 0);
    let n = 6;
    let batch = TrainBatch {
        z0: Array2::from_shape_fn((n, 6), |_| normal(&mut rng) * 0.5),
        c_id: Array2::from_shape_fn((n, 5), |_| normal(&mut rng) * 0.5),
        maps: Array2::from_shape_fn((n, 9 * 16 * 16), |_| rng.random_range(0.0..1.0)),
    };
    let schedule = DiffusionSchedule::linear(100, 1e-4, 0.02).unwrap();
    let draws = StepDraws {
        t: (0..n).map(|_| rng.random_range(1..=100)).collect(),
        eps: Array2::from_shape_fn((n, 6), |_| normal(&mut rng)),
        drop_id: vec![true, false, false, true, false, false],
        drop_sty: vec![false, true, false, true, false, false],
    };
    let (_, grad) = g.loss_and_grad(&schedule, &batch, &draws).unwrap();
    let flat = grad.flatten();
    let total = g.parameter_count();
    let mlp = g.mlp.parameter_count();
    let enc = total - mlp - g.id_dim() - g.style_dim();
    let ranges = [(0, mlp, 10), (mlp, mlp + enc, 12), (mlp + enc, mlp + enc + 5, 5), (mlp + enc + 5, total, 4)];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (lo, hi, count) in ranges {
        for _ in 0..count {
            let idx = rng.random_range(lo..hi);
            let orig = *g.scalar_mut(idx).unwrap();
            let h = 1e-6;
            *g.scalar_mut(idx).unwrap() = orig + h;
            let up = g.loss_and_grad(&schedule, &batch, &draws).unwrap().0;
            *g.scalar_mut(idx).unwrap() = orig - h;
            let down = g.loss_and_grad(&schedule, &batch, &draws).unwrap().0;
            *g.scalar_mut(idx).unwrap() = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - flat[idx]).abs() / fd.abs().max(flat[idx].abs()).max(1e-6));
            checked += 1;
        }
    }
    outcome(
        worst <= 1e-4,
        format!("{checked} parameters (10 mlp, 12 style encoder, 5 identity empty, 4 style empty), max rel err {worst:.1e} (tol 1e-4)"),
    )
}

fn mixture_marginal() -> Outcome {
    let prior = true_prior(3);
    let (m, n) = (2000u64, 20u64);
    let d = prior.dim();
    let mut sum = Array1::<f64>::zeros(d);
    let mut rows = Vec::with_capacity((m * n) as usize);
    for c in 0..m {
        let class = sample_class(&prior, SamplingStrategy::SubjectAware { rho: 0.5 }, c, m as usize, &mut substream(5, domain::CLASS_STYLE, c, 0)).unwrap();
        for j in 0..n {
            let p = Array1::from(sample_attributes(&class, &mut substream(5, domain::IMAGE_STYLE, c, j)).into_vec());
            sum += &p;
            rows.push(p);
        }
    }
    let mean = sum / rows.len() as f64;
    let mut x = Array2::zeros((rows.len(), d));
    for (mut r, p) in x.rows_mut().into_iter().zip(&rows) {
        r.assign(&(p - &mean));
    }
    let cov = x.t().dot(&x) / (rows.len() - 1) as f64;
    let sigma = prior.sigma();
    let fro = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let live: Vec<usize> = (0..d).filter(|&j| sigma[[j, j]] > 0.0).collect();
    let fixed_ok = (0..d).filter(|j| !live.contains(j)).all(|j| (mean[j] - prior.mu()[j]).abs() < 1e-12);
    let mean_err = (live.iter().map(|&j| ((mean[j] - prior.mu()[j]) / sigma[[j, j]].sqrt()).powi(2)).sum::<f64>() / live.len() as f64).sqrt();
    let cov_err = fro(&(&cov - sigma)) / fro(sigma);
    outcome(
        fixed_ok && mean_err < 0.02 && cov_err < 0.05,
        format!("2000x20 draws: mean error {:.2}% of per-coordinate scale (rms, tol 2%), covariance {:.2}% Frobenius (tol 5%)", mean_err * 100.0, cov_err * 100.0),
    )
}

fn eir_oracle(real: &[(Vec<f32>, u64)], synth: &[(Vec<f32>, u64)], k: usize) -> Option<f64> {
    let dist = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt();
    let mut classes: Vec<u64> = synth.iter().map(|s| s.1).filter(|c| real.iter().any(|r| r.1 == *c)).collect();
    classes.sort();
    classes.dedup();
    if classes.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &c in &classes {
        let s: Vec<&Vec<f32>> = synth.iter().filter(|p| p.1 == c).map(|p| &p.0).collect();
        if s.len() <= k {
            return None;
        }
        let radii: Vec<f64> = (0..s.len())
            .map(|j| {
                let mut d: Vec<f64> = (0..s.len()).filter(|&o| o != j).map(|o| dist(s[j], s[o])).collect();
                d.sort_by(f64::total_cmp);
                d[k - 1]
            })
            .collect();
        let r: Vec<&Vec<f32>> = real.iter().filter(|p| p.1 == c).map(|p| &p.0).collect();
        total += r.iter().filter(|x| s.iter().zip(&radii).any(|(y, &rad)| dist(x, y) < rad)).count() as f64 / r.len() as f64;
    }
    Some(total / classes.len() as f64)
}

fn to_set(points: &[(Vec<f32>, u64)]) -> LabeledEmbeddingSet {
    let d = points[0].0.len();
    let flat: Vec<f32> = points.iter().flat_map(|p| p.0.iter().copied()).collect();
    LabeledEmbeddingSet::new(Array2::from_shape_vec((points.len(), d), flat).unwrap(), points.iter().map(|p| p.1).collect()).unwrap()
}

fn eir_correctness() -> Outcome {
    let mut rng = substream(6, domain::METRICS, 0, 0);
    let mut disagreements = 0;
    let mut evaluated = 0;
    for _ in 0..100 {
        let dim = rng.random_range(1..4);
        let k = rng.random_range(1..4);
        let draw = |rng: &mut facesynth::rng::Stream| {
            let n = rng.random_range(2..=50);
            (0..n)
                .map(|_| ((0..dim).map(|_| rng.random_range(-3i8..4) as f32 * 0.5).collect::<Vec<_>>(), rng.random_range(0..3u64)))
                .collect::<Vec<_>>()
        };
        let (real, synth) = (draw(&mut rng), draw(&mut rng));
        let ours = eir(&to_set(&real), &to_set(&synth), k).ok().map(|r| r.value);
        let oracle = eir_oracle(&real, &synth, k);
        evaluated += oracle.is_some() as usize;
        if ours != oracle {
            disagreements += 1;
        }
    }
    let mut self_cover_ok = true;
    for trial in 0..20u64 {
        let pts: Vec<(Vec<f32>, u64)> = (0..30).map(|i| (vec![i as f32, (trial as f32 + 1.0) * (i % 7) as f32], i % 3)).collect();
        self_cover_ok &= eir(&to_set(&pts), &to_set(&pts), 2).unwrap().value == 1.0;
    }
    let hand = eir(&to_set(&[(vec![0.0], 0), (vec![10.0], 0)]), &to_set(&[(vec![0.1], 0), (vec![0.2], 0), (vec![9.0], 0)]), 1).unwrap().value;
    outcome(
        disagreements == 0 && self_cover_ok && hand == 0.5,
        format!("brute force: {disagreements} disagreements in 100 trials ({evaluated} with a defined value, rest rejected by both); eir(X,X)=1: {self_cover_ok}; 1-D example {hand}"),
    )
}

fn renderer_properties() -> Outcome {
    let basis = make_basis(7, 32, 32).unwrap();
    let prior = true_prior(11);
    let mut rng = substream(11, domain::WORLD_PRIOR, 1, 0);
    let (mut normal_dev, mut background_bad, mut dc_dev, mut lin_dev) = (0.0f64, 0usize, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let p = StyleAttributes::from_vec(prior.sample(&mut rng).to_vec()).unwrap();
        let (maps, irr) = render_with_irradiance(&basis, &p);
        let fg = rasterize(&basis, &p).foreground;
        let all = maps.concat();
        for y in 0..32 {
            for x in 0..32 {
                if fg[y * 32 + x] {
                    let n = maps.normal_at(y, x);
                    normal_dev = normal_dev.max(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs());
                } else if all.slice(ndarray::s![.., y, x]).iter().any(|&v| v != 0.0) {
                    background_bad += 1;
                }
            }
        }
        let mut doubled = p.clone();
        doubled.block_mut(Block::Illumination).iter_mut().for_each(|v| *v *= 2.0);
        let (_, irr2) = render_with_irradiance(&basis, &doubled);
        for (a, b) in irr.iter().zip(&irr2) {
            lin_dev = lin_dev.max((b - 2.0 * a).abs() / a.abs().max(1e-9).max(1.0));
        }
        let mut dc = p.clone();
        let l = dc.block_mut(Block::Illumination);
        let levels = [l[0], l[1], l[2]];
        l.iter_mut().skip(3).for_each(|v| *v = 0.0);
        let (maps_dc, irr_dc) = render_with_irradiance(&basis, &dc);
        let fg_dc = rasterize(&basis, &dc).foreground;
        for c in 0..3 {
            let factor = levels[c] * std::f64::consts::PI * facesynth::stylemodel::sh::Y00;
            for y in 0..32 {
                for x in 0..32 {
                    let a = maps_dc.albedo[[c, y, x]] as f64;
                    if fg_dc[y * 32 + x] {
                        dc_dev = dc_dev.max((irr_dc[[c, y, x]] - factor).abs());
                        dc_dev = dc_dev.max((maps_dc.lambertian[[c, y, x]] as f64 - (a * factor).clamp(0.0, 1.0)).abs());
                    }
                }
            }
        }
    }
    outcome(
        normal_dev <= 1e-3 && background_bad == 0 && dc_dev <= 1e-6 && lin_dev <= 1e-12,
        format!(
            "1000 draws: max | |n| - 1 | {normal_dev:.1e} (tol 1e-3), nonzero background pixels {background_bad}, \
             DC proportionality dev {dc_dev:.1e}, SH linearity dev {lin_dev:.1e}"
        ),
    )
}

struct FullRun {
    rows: Vec<AblationRow>,
    elapsed: Duration,
}

fn full_pipeline(out: &Path) -> facesynth::Result<FullRun> {
    let start = Instant::now();
    let opts = RunOptions::new(PipelineConfig::default(), out);
    commands::cmd_world(&opts)?;
    commands::cmd_fit(&opts)?;
    commands::cmd_train(&opts)?;
    let rows = commands::cmd_ablate(&opts)?;
    println!("{}", commands::ablation_table(&rows));
    Ok(FullRun { rows, elapsed: start.elapsed() })
}

fn row<'a>(rows: &'a [AblationRow], group: &str, strategy: &str, mode: BlendMode) -> &'a AblationRow {
    rows.iter()
        .find(|r| r.group == group && r.strategy.starts_with(strategy) && r.blend.mode == mode)
        .unwrap_or_else(|| panic!("no ablation row {group}/{strategy}/{mode:?}"))
}

fn strategy_ordering(run: &FullRun) -> Outcome {
    let get = |s: &str| row(&run.rows, "strategy", s, BlendMode::Blending);
    let (rep, unc, sa, uni) = (get("replicated"), get("uncontrolled"), get("subject_aware"), get("uniform"));
    let eir_ok = rep.eir < unc.eir && unc.eir < sa.eir && sa.eir < uni.eir;
    let intra_ok = uni.intra_mean < sa.intra_mean && sa.intra_mean < rep.intra_mean;
    outcome(
        eir_ok && intra_ok,
        format!(
            "eIR replicated {:.3} < uncontrolled {:.3} < subject_aware {:.3} < uniform {:.3}: {eir_ok}; \
             intra uniform {:.3} < subject_aware {:.3} < replicated {:.3}: {intra_ok}; pipeline {:.0?}",
            rep.eir, unc.eir, sa.eir, uni.eir, uni.intra_mean, sa.intra_mean, rep.intra_mean, run.elapsed
        ),
    )
}

fn blending_directions(run: &FullRun) -> Outcome {
    let get = |m: BlendMode| row(&run.rows, "blend", "subject_aware", m);
    let base = get(BlendMode::NoBlending);
    let sign = |r: &AblationRow| (r.intra_mean - base.intra_mean, r.eir - base.eir);
    let checks = [
        ("identity_only", get(BlendMode::IdentityOnly), (true, false)),
        ("style_only", get(BlendMode::StyleOnly), (false, true)),
        ("blending", get(BlendMode::Blending), (true, true)),
    ];
    let mut pass = true;
    let mut parts = vec![format!("no_blending intra {:.3} eIR {:.3}", base.intra_mean, base.eir)];
    for (name, r, (intra_up, eir_up)) in checks {
        let (di, de) = sign(r);
        let ok_i = (di > 0.0) == intra_up && di != 0.0;
        let ok_e = (de > 0.0) == eir_up && de != 0.0;
        pass &= ok_i && ok_e;
        parts.push(format!(
            "{name} intra {di:+.3} (want {}) {} eIR {de:+.3} (want {}) {}",
            if intra_up { "+" } else { "-" },
            if ok_i { "ok" } else { "WRONG" },
            if eir_up { "+" } else { "-" },
            if ok_e { "ok" } else { "WRONG" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn privacy_ordering(run: &FullRun) -> Outcome {
    let r = row(&run.rows, "strategy", "subject_aware", BlendMode::Blending);
    outcome(
        r.privacy_inter_mean < r.intra_mean && r.privacy_inter_mean < r.world_intra_mean,
        format!("generated-vs-world {:.3} < generated intra {:.3} and world intra {:.3}", r.privacy_inter_mean, r.intra_mean, r.world_intra_mean),
    )
}

fn files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Outcome {
    let mut cfg = common::tiny_config();
    cfg.volumes.images_per_subject = 5;
    cfg.volumes.n_subjects = 3;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (dir, workers) in dirs.iter().zip([1, 8]) {
        let opts = RunOptions { config: cfg.clone(), out: dir.path().to_path_buf(), workers: Some(workers) };
        commands::cmd_world(&opts).unwrap();
        commands::cmd_fit(&opts).unwrap();
        commands::cmd_train(&opts).unwrap();
        commands::cmd_generate(&opts).unwrap();
        commands::cmd_analyze(&opts).unwrap();
    }
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    let rel = |p: &Path, root: &Path| p.strip_prefix(root).unwrap().to_path_buf();
    let names_a: Vec<_> = a.iter().map(|p| rel(p, dirs[0].path())).collect();
    let names_b: Vec<_> = b.iter().map(|p| rel(p, dirs[1].path())).collect();
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| std::fs::read(x).unwrap() != std::fs::read(y).unwrap())
        .map(|(x, _)| rel(x, dirs[0].path()).display().to_string())
        .collect();
    let has = |ext: &str| names_a.iter().filter(|n| n.to_string_lossy().ends_with(ext)).count();
    outcome(
        names_a == names_b && differing.is_empty(),
        format!(
            "1 vs 8 workers: {} files compared ({} manifests, {} tensors, {} metric CSVs), differing {:?}",
            names_a.len(),
            has("manifest.json"),
            has(".mft"),
            has(".csv"),
            differing
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut run = |id: usize, name: &'static str, limit: Option<Duration>, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let el = start.elapsed();
        let o = within_time(o, el, limit);
        println!("criterion {id:>2} {} {name}: {} [{:.1?}]", if o.pass { "PASS" } else { "FAIL" }, o.detail, el);
        results.push((id, name, o, el));
    };
    run(1, "schedule exactness", Some(Duration::from_secs(5)), &schedule_exactness);
    run(2, "analytic-oracle sampling", Some(Duration::from_secs(60)), &analytic_sampling);
    run(3, "cfg identity and branch counts", None, &cfg_identity);
    run(4, "gradient correctness", None, &gradient_check);
    run(5, "mixture-marginal constraint", Some(Duration::from_secs(120)), &mixture_marginal);
    run(6, "eIR correctness", None, &eir_correctness);
    let dir = tempfile::tempdir().unwrap();
    let full = full_pipeline(dir.path());
    let limit = Some(Duration::from_secs(30 * 60));
    match &full {
        Ok(f) => {
            run(7, "strategy ordering", None, &|| within_time(strategy_ordering(f), f.elapsed, limit));
            run(8, "blending effect directions", None, &|| blending_directions(f));
            run(9, "privacy ordering", None, &|| privacy_ordering(f));
        }
        Err(e) => {
            for (id, name) in [(7, "strategy ordering"), (8, "blending effect directions"), (9, "privacy ordering")] {
                run(id, name, None, &|| outcome(false, format!("pipeline failed: {e}")));
            }
        }
    }
    run(10, "reproducibility across workers", None, &reproducibility);
    run(11, "renderer properties", None, &renderer_properties);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("\nacceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}

use facesynth::datasets::config::{PipelineConfig, StrategyKind};
use facesynth::datasets::TensorFile;
use facesynth::denoise::{cfg_eps, BlendConfig, BlendMode, Denoiser, Generator, GeneratorShape, Selection};
use facesynth::identity::{cosine_similarity, filter_embeddings, IdentityEmbedding};
use facesynth::metrics::{eir, frequency_variance, LabeledEmbeddingSet};
use facesynth::rng::substream;
use facesynth::schedule::DiffusionSchedule;
use facesynth::stylesampler::{apply_shape_replacement, sample_class, SamplingStrategy};
use facesynth::worldgen::true_prior;
use ndarray::{Array1, Array2, Array3, ArrayD, IxDyn};
use proptest::prelude::*;

/// Straightforward k-NN coverage with sorted Euclidean distances.
fn eir_oracle(real: &[(Vec<f32>, u64)], synth: &[(Vec<f32>, u64)], k: usize) -> f64 {
    let dist = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt();
    let mut classes: Vec<u64> = synth.iter().map(|s| s.1).filter(|c| real.iter().any(|r| r.1 == *c)).collect();
    classes.sort();
    classes.dedup();
    let mut total = 0.0;
    for &c in &classes {
        let s: Vec<&Vec<f32>> = synth.iter().filter(|p| p.1 == c).map(|p| &p.0).collect();
        let radii: Vec<f64> = (0..s.len())
            .map(|j| {
                let mut d: Vec<f64> = (0..s.len()).filter(|&o| o != j).map(|o| dist(s[j], s[o])).collect();
                d.sort_by(f64::total_cmp);
                d[k - 1]
            })
            .collect();
        let r: Vec<&Vec<f32>> = real.iter().filter(|p| p.1 == c).map(|p| &p.0).collect();
        let covered = r.iter().filter(|x| s.iter().zip(&radii).any(|(y, &rad)| dist(x, y) < rad)).count();
        total += covered as f64 / r.len() as f64;
    }
    total / classes.len() as f64
}

fn to_set(points: &[(Vec<f32>, u64)]) -> LabeledEmbeddingSet {
    let d = points[0].0.len();
    let flat: Vec<f32> = points.iter().flat_map(|p| p.0.iter().copied()).collect();
    LabeledEmbeddingSet::new(Array2::from_shape_vec((points.len(), d), flat).unwrap(), points.iter().map(|p| p.1).collect()).unwrap()
}

/// Points on a coarse grid so that ties in distance actually occur.
fn labelled_points(max: usize, classes: u64) -> impl Strategy<Value = Vec<(Vec<f32>, u64)>> {
    (1usize..4).prop_flat_map(move |d| proptest::collection::vec((proptest::collection::vec((-4i8..5).prop_map(|v| v as f32 * 0.5), d), 0..classes), 1..max))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn eir_matches_brute_force(real in labelled_points(25, 3), synth in labelled_points(25, 3), k in 1usize..3) {
        let s = to_set(&synth);
        let r = to_set(&real);
        let counts = s.classes();
        let shared = counts.keys().any(|c| r.classes().contains_key(c));
        let enough = counts.iter().filter(|(c, _)| r.classes().contains_key(c)).all(|(_, v)| v.len() > k);
        prop_assume!(real[0].0.len() == synth[0].0.len());
        match eir(&r, &s, k) {
            Ok(rep) => {
                prop_assert!(shared && enough);
                prop_assert_eq!(rep.value, eir_oracle(&real, &synth, k));
            }
            Err(_) => prop_assert!(!shared || !enough),
        }
    }

    #[test]
    fn alpha_bar_strictly_decreases(steps in 2usize..2000, start in 1e-5f64..0.01, span in 1e-4f64..0.3) {
        let s = DiffusionSchedule::linear(steps, start, start + span).unwrap();
        prop_assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        prop_assert!((s.alpha_bar(1) - (1.0 - start)).abs() < 1e-15);
    }

    #[test]
    fn first_reverse_step_inverts_forward(z0 in proptest::collection::vec(-3.0f32..3.0, 1..16), seed in any::<u64>()) {
        let s = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let z0 = Array1::from(z0);
        let eps = Array1::from_shape_fn(z0.len(), |i| ((seed.wrapping_add(i as u64) % 1000) as f32 / 250.0) - 2.0);
        let zt = s.forward_sample(z0.view(), 1, eps.view()).unwrap();
        let back = s.reverse_step(zt.view(), 1, eps.view(), Array1::zeros(z0.len()).view()).unwrap();
        for (a, b) in back.iter().zip(&z0) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn tensor_files_round_trip_bitwise(dims in proptest::collection::vec(0usize..5, 0..4), bits in any::<u64>()) {
        let n: usize = dims.iter().product();
        let vals: Vec<f32> = (0..n).map(|i| f32::from_bits((bits.rotate_left(i as u32) ^ i as u64) as u32)).collect();
        let t = TensorFile::f32(ArrayD::from_shape_vec(IxDyn(&dims), vals.clone()).unwrap());
        let back = TensorFile::from_bytes(&t.to_bytes()).unwrap().into_f32().unwrap();
        prop_assert_eq!(back.shape(), &dims[..]);
        prop_assert!(back.iter().zip(&vals).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), rho in 0.0f64..=1.0, t0 in 0usize..1000, w in 0.0f64..4.0, kind in 0usize..4, mode in 0usize..4, lr in 1e-6f64..1e-2) {
        let mut cfg = PipelineConfig::default();
        cfg.seed = seed;
        cfg.sampler.rho = rho;
        cfg.sampler.strategy = [StrategyKind::Uncontrolled, StrategyKind::Replicated, StrategyKind::Uniform, StrategyKind::SubjectAware][kind];
        cfg.blend = BlendConfig { mode: BlendMode::ALL[mode], t0, w };
        cfg.training.lr = lr;
        prop_assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn greedy_filter_output_is_pairwise_dissimilar(vecs in proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 6), 1..30), tau in 0.05f64..1.0) {
        let embs: Vec<IdentityEmbedding> = vecs
            .iter()
            .filter(|v| v.iter().map(|x| x * x).sum::<f32>() > 1e-3)
            .map(|v| {
                let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
                IdentityEmbedding::from_vector(Array1::from(v.iter().map(|x| x / n).collect::<Vec<_>>())).unwrap()
            })
            .collect();
        prop_assume!(!embs.is_empty());
        let kept = filter_embeddings(&embs, &vec![1.0; embs.len()], tau, 0.0).unwrap();
        prop_assert!(!kept.is_empty());
        for (a, &i) in kept.iter().enumerate() {
            for &j in &kept[a + 1..] {
                prop_assert!(cosine_similarity(&embs[i], &embs[j]) < tau);
            }
        }
    }

    #[test]
    fn shape_replacement_is_idempotent_and_isolated(seed in any::<u64>(), level in -2.0f64..2.0) {
        let prior = true_prior(0);
        let class = sample_class(&prior, SamplingStrategy::SubjectAware { rho: 0.5 }, 0, 10, &mut substream(seed, 0, 0, 0)).unwrap();
        let shape = vec![level; 100];
        let once = apply_shape_replacement(&class, &shape).unwrap();
        prop_assert_eq!(&apply_shape_replacement(&once, &shape).unwrap(), &once);
        prop_assert!(once.mu.iter().take(100).all(|&v| v == level));
        prop_assert_eq!(once.mu.slice(ndarray::s![100..]), class.mu.slice(ndarray::s![100..]));
        let own = class.mu.slice(ndarray::s![..100]).to_vec();
        prop_assert_eq!(apply_shape_replacement(&class, &own).unwrap(), class);
    }

    #[test]
    fn frequency_profile_is_shift_invariant(seed in any::<u64>(), dy in 0usize..16, dx in 0usize..16) {
        let imgs: Vec<Array3<f32>> = (0..4u64)
            .map(|i| Array3::from_shape_fn((3, 16, 16), |(c, y, x)| ((seed ^ (i * 977 + (c * 256 + y * 16 + x) as u64 * 2654435761)) % 1000) as f32 / 1000.0))
            .collect();
        let shifted: Vec<Array3<f32>> = imgs.iter().map(|im| Array3::from_shape_fn((3, 16, 16), |(c, y, x)| im[[c, (y + dy) % 16, (x + dx) % 16]])).collect();
        let a = frequency_variance(&imgs.iter().map(|v| v.view()).collect::<Vec<_>>(), 6).unwrap();
        let b = frequency_variance(&shifted.iter().map(|v| v.view()).collect::<Vec<_>>(), 6).unwrap();
        for (x, y) in a.band_variance.iter().zip(&b.band_variance) {
            prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-3));
        }
    }
}

fn probe_model() -> Generator<f32> {
    let shape = GeneratorShape { latent_dim: 8, map_height: 16, map_width: 16, hidden: vec![16], encoder_channels: (2, 2), id_dim: 6, style_dim: 5 };
    Generator::new(&shape, &mut substream(77, 0, 0, 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_weight_guidance_is_the_conditional_prediction(seed in any::<u64>(), t in 1usize..1000, mode in 0usize..4, t0 in 0usize..1000) {
        let g = probe_model();
        let mut rng = substream(seed, 1, 0, 0);
        let mut draw = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || rand::Rng::random_range(&mut rng, -1.0f32..1.0));
        let z = draw(3, 8);
        let c_id = draw(3, 6);
        let maps = draw(3, 9 * 16 * 16);
        let styles = g.encode_styles(&maps);
        let prepared = g.prepare(3, Some(c_id.view()), Some(styles.view())).unwrap();
        let blend = BlendConfig { mode: BlendMode::ALL[mode], t0, w: 0.0 };
        let (guided, branch) = cfg_eps(&g, &z, t, &blend, &prepared).unwrap();
        let cond = g.eps(&z, t, Selection::FULL, &prepared).unwrap();
        prop_assert!(branch.is_none());
        prop_assert!(guided.iter().zip(&cond).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

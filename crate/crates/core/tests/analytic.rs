use facesynth::denoise::{generate, AnalyticGaussian, BlendConfig, BlendMode};
use facesynth::rng::{domain, StreamKey};
use facesynth::schedule::DiffusionSchedule;
use ndarray::{Array1, Array2};
use statrs::distribution::{ContinuousCDF, Normal};

/// Standard-normal data pushed through the full reverse chain: sample mean and
/// variance of 10^4 draws agree with N(0, 1) at the 1% significance level.
#[test]
fn reverse_chain_reproduces_standard_normal_moments() {
    let s = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let d = AnalyticGaussian::new(Array1::zeros(1), Array2::eye(1), s.clone()).unwrap();
    let blend = BlendConfig { mode: BlendMode::NoBlending, t0: 500, w: 0.0 };
    let keys: Vec<StreamKey> = (0..10_000).map(|i| StreamKey::new(41, domain::GENERATE, i, 0)).collect();
    let (z, _) = generate(&d, &s, &(), &blend, &keys).unwrap();
    let v: Vec<f64> = z.iter().map(|&x| x as f64).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let crit = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.995);
    // Var of the sample variance of a normal is 2/(n-1).
    assert!(mean.abs() < crit / n.sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < crit * (2.0 / (n - 1.0)).sqrt(), "variance {var}");
}

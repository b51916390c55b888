//! Dataset analysis: identity consistency, manifold coverage (eIR), style
//! attribute spread, radial frequency-band variance and cross-dataset
//! overlap.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView3, ArrayView4, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::codec::average_pool;
use crate::error::{Error, Result};
use crate::identity::IdentityEmbedding;
use crate::rng::{domain, substream};
use crate::stylemodel::{Block, StyleAttributes};

pub const HIST_BINS: usize = 40;
pub const DEFAULT_BANDS: usize = 8;
/// Cross-set pair count above which the mean similarity is estimated on a
/// subset of rows.
pub const MAX_PAIRS: usize = 10_000_000;
/// Patch size of [`style_features`].
pub const STYLE_PATCH: usize = 4;

/// Row vectors with one class id each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddingSet {
    vectors: Array2<f32>,
    labels: Vec<u64>,
}

impl LabeledEmbeddingSet {
    pub fn new(vectors: Array2<f32>, labels: Vec<u64>) -> Result<Self> {
        if vectors.nrows() != labels.len() {
            return Err(Error::shape("labeled set", &[labels.len()], &[vectors.nrows()]));
        }
        Ok(Self { vectors, labels })
    }

    pub fn from_embeddings(embeddings: &[IdentityEmbedding], labels: Vec<u64>) -> Result<Self> {
        let dim = embeddings.first().map_or(0, |e| e.len());
        let mut vectors = Array2::zeros((embeddings.len(), dim));
        for (mut row, e) in vectors.rows_mut().into_iter().zip(embeddings) {
            if e.len() != dim {
                return Err(Error::shape("labeled set", &[dim], &[e.len()]));
            }
            row.assign(e.as_array());
        }
        Self::new(vectors, labels)
    }

    pub fn vectors(&self) -> &Array2<f32> {
        &self.vectors
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Member indices per class, classes in ascending id order.
    pub fn classes(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut map: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.labels.iter().enumerate() {
            map.entry(c).or_default().push(i);
        }
        map
    }

    /// Rows scaled to unit length (zero rows stay zero), in f64.
    fn unit_rows(&self) -> Array2<f64> {
        let mut m = self.vectors.mapv(f64::from);
        for mut row in m.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
            }
        }
        m
    }
}

/// Fixed-bin histogram of cosine similarities over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn cosine() -> Self {
        Self {
            edges: (0..=HIST_BINS).map(|i| -1.0 + 2.0 * i as f64 / HIST_BINS as f64).collect(),
            counts: vec![0; HIST_BINS],
        }
    }

    fn add(&mut self, v: f64) {
        let b = (((v + 1.0) / 2.0) * HIST_BINS as f64).floor();
        self.counts[(b.max(0.0) as usize).min(HIST_BINS - 1)] += 1;
    }

    fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub intra_mean: f64,
    pub inter_mean: f64,
    pub intra_pairs: u64,
    pub inter_pairs: u64,
    pub intra_hist: Histogram,
    pub inter_hist: Histogram,
}

#[derive(Default)]
struct PairAccumulator {
    intra_sum: f64,
    inter_sum: f64,
    intra_n: u64,
    inter_n: u64,
    intra_hist: Option<Histogram>,
    inter_hist: Option<Histogram>,
}

/// Cosine similarity over all within-class and all cross-class pairs.
pub fn similarity_stats(set: &LabeledEmbeddingSet) -> Result<SimilarityStats> {
    let classes = set.classes();
    if classes.len() < 2 {
        return Err(Error::Degenerate("similarity statistics need at least two classes".into()));
    }
    if classes.values().all(|m| m.len() < 2) {
        return Err(Error::Degenerate("similarity statistics need a class with two members".into()));
    }
    let unit = set.unit_rows();
    let n = set.len();
    const BLOCK: usize = 128;
    // Each block of rows is reduced independently, then blocks are merged
    // in order, so the sums do not depend on the thread count.
    let partials: Vec<PairAccumulator> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            let gram = unit.slice(ndarray::s![lo..hi, ..]).dot(&unit.t());
            let mut acc = PairAccumulator {
                intra_hist: Some(Histogram::cosine()),
                inter_hist: Some(Histogram::cosine()),
                ..Default::default()
            };
            for i in lo..hi {
                for j in (i + 1)..n {
                    let c = gram[[i - lo, j]];
                    if set.labels[i] == set.labels[j] {
                        acc.intra_sum += c;
                        acc.intra_n += 1;
                        acc.intra_hist.as_mut().unwrap().add(c);
                    } else {
                        acc.inter_sum += c;
                        acc.inter_n += 1;
                        acc.inter_hist.as_mut().unwrap().add(c);
                    }
                }
            }
            acc
        })
        .collect();
    let mut intra_hist = Histogram::cosine();
    let mut inter_hist = Histogram::cosine();
    let (mut intra_sum, mut inter_sum, mut intra_n, mut inter_n) = (0.0, 0.0, 0, 0);
    for p in &partials {
        intra_sum += p.intra_sum;
        inter_sum += p.inter_sum;
        intra_n += p.intra_n;
        inter_n += p.inter_n;
        intra_hist.merge(p.intra_hist.as_ref().unwrap());
        inter_hist.merge(p.inter_hist.as_ref().unwrap());
    }
    Ok(SimilarityStats {
        intra_mean: intra_sum / intra_n as f64,
        inter_mean: inter_sum / inter_n as f64,
        intra_pairs: intra_n,
        inter_pairs: inter_n,
        intra_hist,
        inter_hist,
    })
}

fn sq_dist(a: ndarray::ArrayView1<f32>, b: ndarray::ArrayView1<f32>) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// Per-channel patch means, flattened: the coarse layout and colour of each
/// image. eIR measures style coverage in this space; unlike the identity
/// embedding it keeps pose, shape and lighting.
pub fn style_features(images: ArrayView4<f32>, patch: usize) -> Result<Array2<f32>> {
    let (n, c, h, w) = images.dim();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::InvalidParameter(format!("style patch {patch} does not tile {h}x{w}")));
    }
    let d = c * (h / patch) * (w / patch);
    let rows: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| average_pool(images.index_axis(Axis(0), i), patch).iter().copied().collect())
        .collect();
    Ok(Array2::from_shape_vec((n, d), rows.concat()).expect("rows have equal length"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EirReport {
    pub value: f64,
    pub k: usize,
    /// `(class id, covered fraction of that class's real points)`.
    pub per_class: Vec<(u64, f64)>,
}

/// Extended improved recall: for every class present in both sets, the
/// fraction of real points that fall strictly inside some synthetic
/// point's k-NN ball (radius to its k-th nearest same-class synthetic
/// neighbour, itself excluded); averaged over classes.
pub fn eir(real: &LabeledEmbeddingSet, synth: &LabeledEmbeddingSet, k: usize) -> Result<EirReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("eIR needs k >= 1".into()));
    }
    if real.dim() != synth.dim() {
        return Err(Error::shape("eIR embedding width", &[real.dim()], &[synth.dim()]));
    }
    let real_classes = real.classes();
    let synth_classes = synth.classes();
    let shared: Vec<(u64, &Vec<usize>, &Vec<usize>)> = synth_classes
        .iter()
        .filter_map(|(c, s)| real_classes.get(c).map(|r| (*c, r, s)))
        .collect();
    if shared.is_empty() {
        return Err(Error::Degenerate("real and synthetic sets share no class id".into()));
    }
    let small: Vec<String> = shared
        .iter()
        .filter(|(_, _, s)| s.len() <= k)
        .map(|(c, _, s)| format!("class {c} has {} synthetic members", s.len()))
        .collect();
    if !small.is_empty() {
        return Err(Error::Degenerate(format!("eIR with k = {k}: {}", small.join("; "))));
    }

    let per_class: Vec<(u64, f64)> = shared
        .par_iter()
        .map(|&(c, r_idx, s_idx)| {
            let radii: Vec<f64> = s_idx
                .iter()
                .map(|&j| {
                    let mut d: Vec<f64> = s_idx
                        .iter()
                        .filter(|&&o| o != j)
                        .map(|&o| sq_dist(synth.vectors.row(j), synth.vectors.row(o)))
                        .collect();
                    *d.select_nth_unstable_by(k - 1, f64::total_cmp).1
                })
                .collect();
            let covered = r_idx
                .iter()
                .filter(|&&i| {
                    let x = real.vectors.row(i);
                    s_idx.iter().zip(&radii).any(|(&j, &r)| sq_dist(x, synth.vectors.row(j)) < r)
                })
                .count();
            (c, covered as f64 / r_idx.len() as f64)
        })
        .collect();
    let value = per_class.iter().map(|p| p.1).sum::<f64>() / per_class.len() as f64;
    Ok(EirReport { value, k, per_class })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVariance {
    pub block: Block,
    /// Mean over classes (with two or more members) of the within-class
    /// variance, averaged over the block's coordinates.
    pub intra: f64,
    pub dataset: f64,
}

/// Unbiased variance about a shifted mean, so identical values give an
/// exact zero.
fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else { return 0.0 };
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let shift = values.clone().map(|v| v - first).sum::<f64>() / n as f64;
    values.map(|v| (v - first - shift).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Per-block attribute variance, within classes and over the whole set.
pub fn attribute_variance(attrs: &[StyleAttributes], labels: &[u64]) -> Result<Vec<BlockVariance>> {
    if attrs.is_empty() {
        return Err(Error::EmptyInput("attribute variance of an empty set"));
    }
    if attrs.len() != labels.len() {
        return Err(Error::shape("attribute labels", &[attrs.len()], &[labels.len()]));
    }
    let mut classes: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        classes.entry(c).or_default().push(i);
    }
    let groups: Vec<&Vec<usize>> = classes.values().filter(|m| m.len() >= 2).collect();
    Ok(Block::ALL
        .into_iter()
        .map(|block| {
            let range = block.range();
            let width = range.len() as f64;
            let coord_var = |members: &[usize], d: usize| variance(members.iter().map(move |&i| attrs[i].as_slice()[d]));
            let all: Vec<usize> = (0..attrs.len()).collect();
            let dataset = range.clone().map(|d| coord_var(&all, d)).sum::<f64>() / width;
            let intra = if groups.is_empty() {
                0.0
            } else {
                groups
                    .iter()
                    .map(|m| range.clone().map(|d| coord_var(m, d)).sum::<f64>() / width)
                    .sum::<f64>()
                    / groups.len() as f64
            };
            BlockVariance { block, intra, dataset }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    /// `B + 1` normalized radial frequencies from 0 to `sqrt(2) / 2`.
    pub band_edges: Vec<f64>,
    pub band_variance: Vec<f64>,
    /// Spectrum samples falling in each band.
    pub band_pixels: Vec<usize>,
}

/// Band index of every centred-spectrum sample, row-major over `(H, W)`.
fn band_map(height: usize, width: usize, bands: usize) -> Vec<usize> {
    let r_max = 0.5 * std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let fy = (y as f64 - (height / 2) as f64) / height as f64;
        for x in 0..width {
            let fx = (x as f64 - (width / 2) as f64) / width as f64;
            let r = (fx * fx + fy * fy).sqrt();
            out.push(((r / r_max * bands as f64) as usize).min(bands - 1));
        }
    }
    out
}

/// Centred magnitude spectrum of the channel-mean grey image.
pub fn magnitude_spectrum(image: ArrayView3<f32>) -> Array2<f64> {
    let (_, h, w) = image.dim();
    let grey = image.mapv(f64::from).mean_axis(Axis(0)).expect("at least one channel");
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut buf: Vec<Complex<f64>> = grey.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in buf.chunks_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    // fftshift: frequency (0, 0) moves to (h / 2, w / 2).
    Array2::from_shape_fn((h, w), |(y, x)| buf[((y + h - h / 2) % h) * w + (x + w - w / 2) % w].norm())
}

/// Mean spectrum magnitude in each of `bands` equal-width radial bands.
pub fn band_means(image: ArrayView3<f32>, bands: usize) -> Vec<f64> {
    let spec = magnitude_spectrum(image);
    let (h, w) = spec.dim();
    let map = band_map(h, w, bands);
    let mut sums = vec![0.0; bands];
    let mut counts = vec![0usize; bands];
    for (&b, &m) in map.iter().zip(spec.iter()) {
        sums[b] += m;
        counts[b] += 1;
    }
    sums.iter().zip(&counts).map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
}

/// Across-image variance of each band's mean spectrum magnitude.
pub fn frequency_variance(images: &[ArrayView3<f32>], bands: usize) -> Result<FrequencyProfile> {
    if bands < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bands, got {bands}")));
    }
    let Some(first) = images.first() else {
        return Err(Error::EmptyInput("frequency variance of an empty set"));
    };
    let dim = first.dim();
    if let Some(bad) = images.iter().find(|im| im.dim() != dim) {
        let (c, h, w) = bad.dim();
        return Err(Error::shape("frequency variance image", &[dim.0, dim.1, dim.2], &[c, h, w]));
    }
    let per_image: Vec<Vec<f64>> = images.par_iter().map(|im| band_means(*im, bands)).collect();
    let r_max = 0.5 * std::f64::consts::SQRT_2;
    let mut band_pixels = vec![0; bands];
    for b in band_map(dim.1, dim.2, bands) {
        band_pixels[b] += 1;
    }
    Ok(FrequencyProfile {
        band_edges: (0..=bands).map(|i| r_max * i as f64 / bands as f64).collect(),
        band_variance: (0..bands).map(|b| variance(per_image.iter().map(|m| m[b]))).collect(),
        band_pixels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyOverlap {
    /// Mean cosine similarity over synthetic x training pairs.
    pub inter_mean: f64,
    /// True when `inter_mean` was estimated on a subset of synthetic rows.
    pub subsampled: bool,
    pub per_item_max_sim: Vec<f64>,
    /// Index into the training set of each synthetic item's nearest match.
    pub nearest_index: Vec<usize>,
    pub nearest_ids: Vec<u64>,
}

pub fn privacy_overlap(synth: &LabeledEmbeddingSet, train: &LabeledEmbeddingSet) -> Result<PrivacyOverlap> {
    if synth.is_empty() || train.is_empty() {
        return Err(Error::EmptyInput("privacy overlap needs two nonempty sets"));
    }
    if synth.dim() != train.dim() {
        return Err(Error::shape("privacy overlap embedding width", &[train.dim()], &[synth.dim()]));
    }
    let a = synth.unit_rows();
    let b = train.unit_rows();
    let (na, nb) = (a.nrows(), b.nrows());
    let subsampled = na.saturating_mul(nb) > MAX_PAIRS;
    let mut in_mean = vec![true; na];
    if subsampled {
        let keep = (MAX_PAIRS / nb).max(1);
        in_mean = vec![false; na];
        for i in sample(&mut substream(0, domain::METRICS, na as u64, nb as u64), na, keep) {
            in_mean[i] = true;
        }
    }
    const BLOCK: usize = 128;
    let rows: Vec<(f64, u64, Vec<(f64, usize)>)> = (0..na.div_ceil(BLOCK))
        .into_par_iter()
        .map(|blk| {
            let lo = blk * BLOCK;
            let hi = (lo + BLOCK).min(na);
            let gram = a.slice(ndarray::s![lo..hi, ..]).dot(&b.t());
            let mut sum = 0.0;
            let mut count = 0u64;
            let mut best = Vec::with_capacity(hi - lo);
            for (r, row) in gram.rows().into_iter().enumerate() {
                if in_mean[lo + r] {
                    sum += row.sum();
                    count += nb as u64;
                }
                let (arg, max) = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
                best.push((max, arg));
            }
            (sum, count, best)
        })
        .collect();
    let total: f64 = rows.iter().map(|r| r.0).sum();
    let count: u64 = rows.iter().map(|r| r.1).sum();
    let best: Vec<(f64, usize)> = rows.into_iter().flat_map(|r| r.2).collect();
    Ok(PrivacyOverlap {
        inter_mean: total / count as f64,
        subsampled,
        per_item_max_sim: best.iter().map(|b| b.0).collect(),
        nearest_index: best.iter().map(|b| b.1).collect(),
        nearest_ids: best.iter().map(|b| train.labels[b.1]).collect(),
    })
}

/// One flat metric row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub params: String,
    pub value: f64,
}

impl MetricRecord {
    pub fn new(metric: impl Into<String>, params: impl Into<String>, value: f64) -> Self {
        Self { metric: metric.into(), params: params.into(), value }
    }
}

pub fn similarity_records(prefix: &str, s: &SimilarityStats) -> Vec<MetricRecord> {
    let mut out = vec![
        MetricRecord::new(format!("{prefix}intra_mean"), "", s.intra_mean),
        MetricRecord::new(format!("{prefix}inter_mean"), "", s.inter_mean),
    ];
    for (name, h) in [("intra_hist", &s.intra_hist), ("inter_hist", &s.inter_hist)] {
        for (i, &c) in h.counts.iter().enumerate() {
            let params = format!("bin={i};lo={:.3};hi={:.3}", h.edges[i], h.edges[i + 1]);
            out.push(MetricRecord::new(format!("{prefix}{name}"), params, c as f64));
        }
    }
    out
}

pub fn frequency_records(prefix: &str, p: &FrequencyProfile) -> Vec<MetricRecord> {
    p.band_variance
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let params = format!("band={i};lo={:.4};hi={:.4}", p.band_edges[i], p.band_edges[i + 1]);
            MetricRecord::new(format!("{prefix}frequency_variance"), params, v)
        })
        .collect()
}

pub fn attribute_records(prefix: &str, v: &[BlockVariance]) -> Vec<MetricRecord> {
    v.iter()
        .flat_map(|b| {
            [
                MetricRecord::new(format!("{prefix}attribute_variance_intra"), format!("block={}", b.block.name()), b.intra),
                MetricRecord::new(format!("{prefix}attribute_variance_dataset"), format!("block={}", b.block.name()), b.dataset),
            ]
        })
        .collect()
}

/// Writes `metric,params,value` CSV and a JSON array mirror.
pub fn write_reports(records: &[MetricRecord], csv_path: &Path, json_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    std::fs::write(json_path, serde_json::to_vec_pretty(records)?)?;
    Ok(())
}

pub fn read_csv_report(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn set(rows: &[&[f32]], labels: &[u64]) -> LabeledEmbeddingSet {
        let d = rows[0].len();
        let v = Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]);
        LabeledEmbeddingSet::new(v, labels.to_vec()).unwrap()
    }

    #[test]
    fn identical_vectors_have_unit_similarity() {
        let s = similarity_stats(&set(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]], &[0, 0, 1, 1])).unwrap();
        assert!((s.intra_mean - 1.0).abs() < 1e-12 && (s.inter_mean - 1.0).abs() < 1e-12);
        assert_eq!((s.intra_pairs, s.inter_pairs), (2, 4));
        assert_eq!(s.intra_hist.total() + s.inter_hist.total(), 6);
    }

    #[test]
    fn orthogonal_classes() {
        let s = similarity_stats(&set(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 3.0], &[0.0, 3.0]], &[0, 0, 1, 1])).unwrap();
        assert_eq!((s.intra_mean, s.inter_mean), (1.0, 0.0));
    }

    #[test]
    fn single_class_is_degenerate() {
        assert!(similarity_stats(&set(&[&[1.0], &[1.0]], &[0, 0])).is_err());
    }

    #[test]
    fn hand_enumerated_one_dimensional_eir() {
        let real = set(&[&[0.0], &[10.0]], &[0, 0]);
        let synth = set(&[&[0.1], &[0.2], &[9.0]], &[0, 0, 0]);
        assert_eq!(eir(&real, &synth, 1).unwrap().value, 0.5);
    }

    #[test]
    fn too_small_class_names_offenders() {
        let real = set(&[&[0.0], &[1.0]], &[0, 1]);
        let synth = set(&[&[0.0], &[0.5], &[1.0]], &[0, 0, 1]);
        let err = eir(&real, &synth, 1).unwrap_err().to_string();
        assert!(err.contains("class 1"), "{err}");
        assert!(!err.contains("class 0"), "{err}");
    }

    #[test]
    fn eir_self_cover() {
        let x = set(&[&[0.0, 1.0], &[2.0, 0.5], &[3.0, -1.0], &[5.0, 5.0]], &[7, 7, 7, 7]);
        for k in 1..4 {
            assert_eq!(eir(&x, &x, k).unwrap().value, 1.0);
        }
    }

    #[test]
    fn replicated_style_has_zero_intra_variance() {
        let a = StyleAttributes::from_vec((0..236).map(|i| (i as f64 * 0.37).sin() / 3.0).collect()).unwrap();
        let b = StyleAttributes::from_vec((0..236).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
        let attrs = vec![a.clone(), a.clone(), a, b.clone(), b.clone(), b];
        let v = attribute_variance(&attrs, &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!(v.iter().all(|b| b.intra == 0.0));
        assert!(v.iter().all(|b| b.dataset > 0.0));
    }

    #[test]
    fn constant_images_only_vary_in_dc_band() {
        let imgs: Vec<Array3<f32>> = [0.1f32, 0.5, 0.9].iter().map(|&v| Array3::from_elem((3, 16, 16), v)).collect();
        let views: Vec<_> = imgs.iter().map(|a| a.view()).collect();
        let p = frequency_variance(&views, 8).unwrap();
        assert!(p.band_variance[0] > 0.0);
        assert!(p.band_variance[1..].iter().all(|&v| v < 1e-20), "{:?}", p.band_variance);
    }

    #[test]
    fn band_energy_adds_up() {
        let img = Array3::from_shape_fn((3, 16, 12), |(c, y, x)| ((c * 7 + y * 3 + x * x) as f32 * 0.1).sin());
        let spec = magnitude_spectrum(img.view());
        let means = band_means(img.view(), 8);
        let p = frequency_variance(&[img.view()], 8).unwrap();
        let total: f64 = means.iter().zip(&p.band_pixels).map(|(m, &c)| m * c as f64).sum();
        assert!((total - spec.sum()).abs() <= 1e-6 * spec.sum());
    }

    #[test]
    fn spectrum_of_constant_is_centred() {
        let spec = magnitude_spectrum(Array3::from_elem((1, 8, 8), 1.0f32).view());
        assert!((spec[[4, 4]] - 64.0).abs() < 1e-9);
        assert!((spec.sum() - 64.0).abs() < 1e-9);
    }

    #[test]
    fn privacy_self_match_and_orthogonal_sets() {
        let a = set(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], &[0, 1]);
        let p = privacy_overlap(&a, &a).unwrap();
        assert_eq!(p.per_item_max_sim, vec![1.0, 1.0]);
        assert_eq!(p.nearest_ids, vec![0, 1]);
        let b = set(&[&[0.0, 0.0, 1.0]], &[5]);
        assert_eq!(privacy_overlap(&a, &b).unwrap().inter_mean, 0.0);
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![MetricRecord::new("eir", "k=3", 0.25), MetricRecord::new("intra_mean", "", -0.5)];
        let (c, j) = (dir.path().join("m.csv"), dir.path().join("m.json"));
        write_reports(&recs, &c, &j).unwrap();
        assert_eq!(read_csv_report(&c).unwrap(), recs);
        let text = std::fs::read_to_string(&c).unwrap();
        assert!(text.starts_with("metric,params,value\n"));
    }
}

//! Product quantization of a dense weight matrix: column-wise subspaces,
//! per-subspace k-means codebooks, and compression-rate accounting.

use std::collections::BTreeSet;

use rand::Rng as _;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::tensor::linalg::gemm_nt;
use crate::tensor::{ByteReader, Tensor};
use crate::trainer::{self, TrainConfig};
use crate::zoo::{bias_key, ModelGraph};
use crate::{par, rng};

const PQ_MAGIC: &[u8; 4] = b"PQCB";
const PQ_VERSION: u16 = 1;
/// Bits per original weight.
pub const FLOAT_BITS: u32 = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct PqConfig {
    pub num_subspaces: usize,
    pub num_centroids: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub seed: u64,
}

impl PqConfig {
    pub fn new(num_subspaces: usize, num_centroids: usize, seed: u64) -> Self {
        PqConfig {
            num_subspaces,
            num_centroids,
            kmeans_max_iter: 100,
            kmeans_tol: 1e-8,
            seed,
        }
    }

    fn check(&self, m: usize, n: usize) -> Result<()> {
        let (p, k) = (self.num_subspaces, self.num_centroids);
        if p == 0 || k == 0 {
            return Err(Error::Config("P and K_s must be positive".into()));
        }
        if !n.is_multiple_of(p) {
            return Err(Error::Config(format!("{n} columns are not divisible by P = {p}")));
        }
        if m <= k {
            return Err(Error::Config(format!("need more rows than centroids, got M = {m}, K_s = {k}")));
        }
        if k > u16::MAX as usize {
            return Err(Error::Config(format!("K_s = {k} exceeds {}", u16::MAX)));
        }
        if p > u16::MAX as usize {
            return Err(Error::Config(format!("P = {p} exceeds {}", u16::MAX)));
        }
        Ok(())
    }
}

/// `C_Q = bMN / (bK_sN + ⌈log₂K_s⌉MP)`.
pub fn compression_rate(b: u32, m: usize, n: usize, ks: usize, p: usize) -> f64 {
    let b = f64::from(b);
    let (m, n, ks, p) = (m as f64, n as f64, ks as f64, p as f64);
    b * m * n / (b * ks * n + ks.log2().ceil() * m * p)
}

/// Same as [`compression_rate`] with the fractional `log₂K_s`.
pub fn compression_rate_fractional(b: u32, m: usize, n: usize, ks: usize, p: usize) -> f64 {
    let b = f64::from(b);
    let (m, n, ks, p) = (m as f64, n as f64, ks as f64, p as f64);
    b * m * n / (b * ks * n + ks.log2() * m * p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    /// `[k, d]` row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub distortion: f64,
    /// Distortion after initialization and after every iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distortion(points: &[f64], d: usize, centroids: &[f64], assign: &[usize]) -> f64 {
    points
        .chunks(d)
        .zip(assign)
        .map(|(x, &a)| sq_dist(x, &centroids[a * d..(a + 1) * d]))
        .sum()
}

const ASSIGN_BLOCK: usize = 256;

/// Nearest centroid per point, ties to the lowest index. Distances come
/// from `|x|² − 2x·c + |c|²` via GEMM; candidates within rounding of the
/// minimum are re-ranked with exact distances.
fn assign(points: &[f64], d: usize, centroids: &[f64], k: usize) -> Vec<usize> {
    let n = points.len() / d;
    let cnorm: Vec<f64> = centroids.chunks(d).map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut out = vec![0usize; n];
    par::for_each_chunk_mut(&mut out, ASSIGN_BLOCK, |blk, out| {
        let start = blk * ASSIGN_BLOCK;
        let rows = out.len();
        let xs = &points[start * d..(start + rows) * d];
        let mut dot = vec![0.0; rows * k];
        gemm_nt(rows, d, k, xs, centroids, &mut dot, 0.0);
        for (r, slot) in out.iter_mut().enumerate() {
            let x = &xs[r * d..(r + 1) * d];
            let xn: f64 = x.iter().map(|v| v * v).sum();
            let approx: Vec<f64> = (0..k).map(|j| xn - 2.0 * dot[r * k + j] + cnorm[j]).collect();
            let best = approx.iter().cloned().fold(f64::INFINITY, f64::min);
            let slack = 1e-9 * (xn + cnorm.iter().cloned().fold(0.0, f64::max)) + 1e-300;
            let mut pick = (f64::INFINITY, 0);
            for j in 0..k {
                if approx[j] <= best + slack {
                    let e = sq_dist(x, &centroids[j * d..(j + 1) * d]);
                    if e < pick.0 {
                        pick = (e, j);
                    }
                }
            }
            *slot = pick.1;
        }
    });
    out
}

/// Lloyd iterations from a k-means++ start. Empty clusters are refilled
/// with the point currently farthest from its centroid.
pub fn kmeans(points: &[f64], d: usize, k: usize, max_iter: usize, tol: f64, seed: u64) -> Result<KMeans> {
    if d == 0 || points.is_empty() || !points.len().is_multiple_of(d) {
        return Err(Error::dim(format!("{} values do not form points of dimension {d}", points.len())));
    }
    let n = points.len() / d;
    if k == 0 || k > n {
        return Err(Error::param(format!("cannot seed {k} centroids from {n} points")));
    }
    let mut r = rng::stream(seed, &[0xC1u64]);
    let mut centroids = Vec::with_capacity(k * d);
    let mut chosen = vec![false; n];
    let first = r.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(&points[first * d..(first + 1) * d]);
    let mut d2: Vec<f64> = points.chunks(d).map(|x| sq_dist(x, &centroids[..d])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = r.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if t < w {
                        break;
                    }
                    t -= w;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[next] = true;
        let c = &points[next * d..(next + 1) * d];
        centroids.extend_from_slice(c);
        for (x, w) in points.chunks(d).zip(d2.iter_mut()) {
            *w = w.min(sq_dist(x, c));
        }
    }

    let mut assignments = assign(points, d, &centroids, k);
    let mut current = distortion(points, d, &centroids, &assignments);
    let mut history = vec![current];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        // Update step: running means, exact when all members coincide.
        let mut means = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (x, &a) in points.chunks(d).zip(&assignments) {
            counts[a] += 1;
            let c = counts[a] as f64;
            means[a * d..(a + 1) * d].iter_mut().zip(x).for_each(|(m, v)| *m += (v - *m) / c);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j * d..(j + 1) * d].copy_from_slice(&means[j * d..(j + 1) * d]);
            }
        }
        // Repair empty clusters.
        for j in 0..k {
            if counts[j] == 0 {
                let far = points
                    .chunks(d)
                    .zip(&assignments)
                    .enumerate()
                    .map(|(i, (x, &a))| (sq_dist(x, &centroids[a * d..(a + 1) * d]), i))
                    .fold((-1.0, 0), |best, cur| if cur.0 > best.0 { cur } else { best })
                    .1;
                counts[assignments[far]] -= 1;
                let src = points[far * d..(far + 1) * d].to_vec();
                centroids[j * d..(j + 1) * d].copy_from_slice(&src);
                assignments[far] = j;
                counts[j] = 1;
            }
        }
        let next = assign(points, d, &centroids, k);
        let changed = next != assignments;
        assignments = next;
        let new = distortion(points, d, &centroids, &assignments);
        history.push(new);
        let improvement = current - new;
        current = new;
        if !changed || improvement <= tol * current.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        distortion: current,
        history,
        iterations,
    })
}

/// Per-subspace centroid tables plus the code matrix that replace one
/// weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PqCodebook {
    rows: usize,
    cols: usize,
    subspaces: usize,
    num_centroids: usize,
    /// `[P, K_s, d]`.
    centroids: Vec<f64>,
    /// `[M, P]`.
    codes: Vec<u16>,
}

impl PqCodebook {
    pub fn new(
        rows: usize,
        cols: usize,
        subspaces: usize,
        num_centroids: usize,
        centroids: Vec<f64>,
        codes: Vec<u16>,
    ) -> Result<Self> {
        if rows == 0 || subspaces == 0 || num_centroids == 0 || !cols.is_multiple_of(subspaces) || cols == 0 {
            return Err(Error::format(format!(
                "invalid codebook geometry M={rows} N={cols} P={subspaces} K_s={num_centroids}"
            )));
        }
        if centroids.len() != num_centroids * cols || codes.len() != rows * subspaces {
            return Err(Error::format("codebook storage does not match its geometry"));
        }
        if let Some(&c) = codes.iter().find(|&&c| c as usize >= num_centroids) {
            return Err(Error::format(format!("code {c} is not below K_s = {num_centroids}")));
        }
        Ok(PqCodebook {
            rows,
            cols,
            subspaces,
            num_centroids,
            centroids,
            codes,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn subspaces(&self) -> usize {
        self.subspaces
    }

    pub fn num_centroids(&self) -> usize {
        self.num_centroids
    }

    pub fn sub_dim(&self) -> usize {
        self.cols / self.subspaces
    }

    pub fn bit_width(&self) -> u32 {
        (self.num_centroids as f64).log2().ceil() as u32
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    /// Centroid `j` of subspace `i`.
    pub fn centroid(&self, i: usize, j: usize) -> &[f64] {
        let d = self.sub_dim();
        let at = (i * self.num_centroids + j) * d;
        &self.centroids[at..at + d]
    }

    pub fn centroid_count(&self) -> usize {
        self.centroids.len()
    }

    fn code_width(&self) -> usize {
        if self.num_centroids <= 256 {
            1
        } else {
            2
        }
    }

    pub fn code_bytes(&self) -> usize {
        self.codes.len() * self.code_width()
    }

    /// Dense `[M, N]` approximation.
    pub fn reconstruct(&self) -> Vec<f64> {
        let d = self.sub_dim();
        let mut w = vec![0.0; self.rows * self.cols];
        for (z, row) in w.chunks_mut(self.cols).enumerate() {
            for i in 0..self.subspaces {
                let c = self.codes[z * self.subspaces + i] as usize;
                row[i * d..(i + 1) * d].copy_from_slice(self.centroid(i, c));
            }
        }
        w
    }

    /// `PQCB` blob: magic, u16 version, u32 M, u32 N, u16 P, u16 K_s,
    /// centroids f64 (P×K_s×d), codes u8 when K_s ≤ 256 else u16, all LE.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + 8 * self.centroids.len() + self.code_bytes());
        out.extend_from_slice(PQ_MAGIC);
        out.extend_from_slice(&PQ_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&(self.subspaces as u16).to_le_bytes());
        out.extend_from_slice(&(self.num_centroids as u16).to_le_bytes());
        for c in &self.centroids {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for &c in &self.codes {
            if self.code_width() == 1 {
                out.push(c as u8);
            } else {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != PQ_MAGIC {
            return Err(Error::format("bad codebook magic"));
        }
        let version = r.u16()?;
        if version != PQ_VERSION {
            return Err(Error::format(format!("unsupported PQCB version {version}")));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let p = r.u16()? as usize;
        let ks = r.u16()? as usize;
        let width = if ks <= 256 { 1 } else { 2 };
        let expected = 8 * ks * cols + width * rows * p;
        if r.remaining() != expected {
            return Err(Error::format(format!(
                "PQCB payload is {} bytes, expected {expected}",
                r.remaining()
            )));
        }
        let centroids = (0..ks * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let codes = (0..rows * p)
            .map(|_| if width == 1 { r.u8().map(u16::from) } else { r.u16() })
            .collect::<Result<Vec<_>>>()?;
        PqCodebook::new(rows, cols, p, ks, centroids, codes)
    }
}

/// Quantizes `w` (`[M, N]`, row-major) and returns the codebook with the
/// per-subspace k-means distortions.
pub fn quantize_detailed(w: &[f64], m: usize, n: usize, cfg: &PqConfig) -> Result<(PqCodebook, Vec<f64>)> {
    if w.len() != m * n {
        return Err(Error::dim(format!("{} weights for a {m}x{n} matrix", w.len())));
    }
    cfg.check(m, n)?;
    let (p, k) = (cfg.num_subspaces, cfg.num_centroids);
    let d = n / p;
    let runs = par::map_range(p, |i| {
        let mut sub = Vec::with_capacity(m * d);
        for row in w.chunks(n) {
            sub.extend_from_slice(&row[i * d..(i + 1) * d]);
        }
        kmeans(&sub, d, k, cfg.kmeans_max_iter, cfg.kmeans_tol, rng::derive(cfg.seed, &[i as u64]))
    });
    let mut centroids = Vec::with_capacity(p * k * d);
    let mut codes = vec![0u16; m * p];
    let mut distortions = Vec::with_capacity(p);
    for (i, run) in runs.into_iter().enumerate() {
        let run = run?;
        centroids.extend_from_slice(&run.centroids);
        for (z, &a) in run.assignments.iter().enumerate() {
            codes[z * p + i] = a as u16;
        }
        distortions.push(run.distortion);
    }
    Ok((PqCodebook::new(m, n, p, k, centroids, codes)?, distortions))
}

pub fn quantize(w: &Tensor, cfg: &PqConfig) -> Result<PqCodebook> {
    let [m, n] = w.shape() else {
        return Err(Error::dim(format!("quantize expects a matrix, got {:?}", w.shape())));
    };
    Ok(quantize_detailed(w.data(), *m, *n, cfg)?.0)
}

pub fn reconstruction_mse(w: &[f64], cb: &PqCodebook) -> f64 {
    let r = cb.reconstruct();
    w.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / w.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantReport {
    pub layer: String,
    pub rows: usize,
    pub cols: usize,
    pub subspaces: usize,
    pub num_centroids: usize,
    pub c_q: f64,
    /// Equals `c_q` when K_s is a power of two.
    pub c_q_fractional: f64,
    pub bytes_original: u64,
    pub bytes_codebook: u64,
    pub bytes_codes: u64,
    pub reconstruction_mse: f64,
}

impl QuantReport {
    pub fn new(layer: &str, w: &[f64], cb: &PqCodebook) -> Self {
        let (m, n, p, k) = (cb.rows(), cb.cols(), cb.subspaces(), cb.num_centroids());
        let code_bits = (m * p) as u64 * u64::from(cb.bit_width());
        QuantReport {
            layer: layer.into(),
            rows: m,
            cols: n,
            subspaces: p,
            num_centroids: k,
            c_q: compression_rate(FLOAT_BITS, m, n, k, p),
            c_q_fractional: compression_rate_fractional(FLOAT_BITS, m, n, k, p),
            bytes_original: (m * n * 8) as u64,
            bytes_codebook: (k * n * 8) as u64,
            bytes_codes: code_bits.div_ceil(8),
            reconstruction_mse: reconstruction_mse(w, cb),
        }
    }
}

/// Replaces `layer`'s weight with a PQ codebook; the bias is untouched.
pub fn quantize_model(m: &ModelGraph, layer: &str, cfg: &PqConfig) -> Result<(ModelGraph, QuantReport)> {
    let (rows, cols) = m
        .layer(layer)
        .and_then(|l| l.dense_dims())
        .ok_or_else(|| Error::param(format!("{layer:?} is not a dense layer")))?;
    let w = m.dense_weight(layer)?;
    let (cb, _) = quantize_detailed(&w, rows, cols, cfg)?;
    let report = QuantReport::new(layer, &w, &cb);
    let mut out = m.to_pq_layer(layer, cb)?;
    out.provenance.record(
        "quantize",
        [
            ("layer", layer.to_string()),
            ("subspaces", cfg.num_subspaces.to_string()),
            ("centroids", cfg.num_centroids.to_string()),
            ("seed", cfg.seed.to_string()),
        ],
    );
    Ok((out, report))
}

/// Retrains every layer except the PQ-backed ones on a stratified
/// `fraction` of the training split.
pub fn retrain_quantized(
    m: &ModelGraph,
    d: &Dataset,
    fraction: f64,
    cfg: &TrainConfig,
) -> Result<trainer::TrainOutcome> {
    if m.pq_layers().is_empty() {
        return Err(Error::param("model has no product-quantized layer"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param(format!("retraining fraction {fraction} outside (0, 1]")));
    }
    let (sub, _) = d.subset(fraction, cfg.seed)?;
    let mut cfg = cfg.clone();
    let pq: BTreeSet<String> = m.pq_layers().keys().cloned().collect();
    cfg.frozen.extend(pq.iter().cloned());
    let mut out = trainer::train(m, &sub, &cfg)?;
    debug_assert!(pq.iter().all(|l| out.model.param(&bias_key(l)) == m.param(&bias_key(l))));
    out.model.provenance.record(
        "retrain",
        [
            ("fraction", fraction.to_string()),
            ("epochs", cfg.epochs.to_string()),
            ("seed", cfg.seed.to_string()),
        ],
    );
    Ok(out)
}

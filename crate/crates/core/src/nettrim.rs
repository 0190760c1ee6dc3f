//! Net-Trim: re-fits one dense ReLU layer with the sparsest (L1-minimal)
//! weights whose outputs stay within ε of the original responses.
//!
//! The ReLU consistency constraint is convexified by splitting the output
//! entries into the positive set Ω⁺ (outputs must stay within a Frobenius
//! ball of the originals) and the zero set Ω⁰ (pre-activations must stay
//! non-positive). The resulting problem is solved by linearized ADMM on
//! `(U, Z, Λ)` with the coupling `Z = UᵀX`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::datagen::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::linalg::{frobenius, gemm_nt, gemm_tn, spectral_norm};
use crate::tensor::{SparseMatrix, Tape, Tensor};
use crate::zoo::{bias_key, count_params, ForwardOptions, ModelGraph};
use crate::{par, rng};

/// Layer inputs and outputs with samples as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationPair {
    /// `[d_in, N]`.
    pub x: Tensor,
    /// `[d_out, N]`, non-negative.
    pub y: Tensor,
    /// Weights that produced `y`, `[d_in, d_out]`; used as the warm start.
    pub w_orig: Option<Tensor>,
    /// Trailing rows of `x` (and of the weights) that carry no L1 penalty.
    /// One when a bias is folded in as a constant-1 row.
    pub free_rows: usize,
}

impl ActivationPair {
    pub fn new(x: Tensor, y: Tensor, w_orig: Option<Tensor>, free_rows: usize) -> Result<Self> {
        let ([d_in, n], [d_out, ny]) = (x.shape(), y.shape()) else {
            return Err(Error::dim("activation matrices must be rank 2"));
        };
        if n != ny {
            return Err(Error::dim(format!("X has {n} samples but Y has {ny}")));
        }
        if let Some(w) = &w_orig {
            if w.shape() != [*d_in, *d_out] {
                return Err(Error::dim(format!(
                    "warm start {:?} does not match [{d_in}, {d_out}]",
                    w.shape()
                )));
            }
        }
        if free_rows > *d_in {
            return Err(Error::param("more free rows than input rows"));
        }
        if y.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::param("Y must be finite and non-negative"));
        }
        Ok(ActivationPair {
            x,
            y,
            w_orig,
            free_rows,
        })
    }

    pub fn d_in(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.y.shape()[0]
    }

    pub fn samples(&self) -> usize {
        self.x.shape()[1]
    }

    /// `Y > 0`, row-major like `y`.
    pub fn positive_mask(&self) -> Vec<bool> {
        self.y.data().iter().map(|&v| v > 0.0).collect()
    }

    /// `‖max(WᵀX, 0) − Y‖_F` for a `[d_in, d_out]` weight buffer.
    pub fn residual(&self, w: &[f64]) -> f64 {
        let (d_in, d_out, n) = (self.d_in(), self.d_out(), self.samples());
        let mut a = vec![0.0; d_out * n];
        gemm_tn(d_out, d_in, n, w, self.x.data(), &mut a, 0.0);
        relu_residual(&a, self.y.data())
    }

    /// L1 norm over the penalized rows of a `[d_in, d_out]` buffer.
    pub fn penalized_l1(&self, w: &[f64]) -> f64 {
        let rows = self.d_in() - self.free_rows;
        w[..rows * self.d_out()].iter().map(|v| v.abs()).sum()
    }
}

fn relu_residual(a: &[f64], y: &[f64]) -> f64 {
    a.iter()
        .zip(y)
        .map(|(&v, &t)| {
            let e = v.max(0.0) - t;
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// Gathers `(X, Y)` at the model's first FC layer from `n_samples` random
/// training frames. The bias is folded in as a final constant-1 row of `X`.
pub fn collect_activations(m: &ModelGraph, d: &Dataset, n_samples: usize, seed: u64) -> Result<ActivationPair> {
    let train = d.indices(Split::Train);
    if n_samples == 0 || n_samples > train.len() {
        return Err(Error::param(format!(
            "requested {n_samples} samples from a training split of {}",
            train.len()
        )));
    }
    let fc = m.first_fc().to_string();
    let (d_in, d_out) = m
        .layer(&fc)
        .and_then(|l| l.dense_dims())
        .ok_or_else(|| Error::param(format!("first FC layer {fc:?} missing")))?;
    let mut idx = train.to_vec();
    idx.shuffle(&mut rng::stream(seed, &[0xAC7]));
    idx.truncate(n_samples);
    idx.sort_unstable();

    const BATCH: usize = 128;
    let chunks: Vec<&[usize]> = idx.chunks(BATCH).collect();
    let parts = par::map_range(chunks.len(), |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let x = tape.constant(d.batch(chunks[i], m.input_shape()));
        let fwd = m.forward(&mut tape, x, &ForwardOptions::eval())?;
        let (xi, yi) = (fwd.fc_input.expect("first FC ran"), fwd.fc_pre.expect("first FC ran"));
        Ok((tape.value(xi).data().to_vec(), tape.value(yi).data().to_vec()))
    });
    let n = idx.len();
    let mut x = vec![0.0; (d_in + 1) * n];
    let mut y = vec![0.0; d_out * n];
    let mut col = 0;
    for part in parts {
        let (xs, ys) = part?;
        let rows = xs.len() / d_in;
        for r in 0..rows {
            for k in 0..d_in {
                x[k * n + col + r] = xs[r * d_in + k];
            }
            x[d_in * n + col + r] = 1.0;
            for j in 0..d_out {
                y[j * n + col + r] = ys[r * d_out + j].max(0.0);
            }
        }
        col += rows;
    }
    let mut w = m.dense_weight(&fc)?;
    w.extend_from_slice(m.param(&bias_key(&fc)).expect("dense layers carry a bias").data());
    ActivationPair::new(
        Tensor::new(vec![d_in + 1, n], x)?,
        Tensor::new(vec![d_out, n], y)?,
        Some(Tensor::new(vec![d_in + 1, d_out], w)?),
        1,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetTrimConfig {
    /// ε as a fraction of `‖Y‖_F`.
    pub epsilon_rel: f64,
    /// Absolute ε; overrides `epsilon_rel` when set.
    pub epsilon_abs: Option<f64>,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Rebalance ρ from the primal/dual residual ratio.
    pub adaptive_rho: bool,
    pub max_iter: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Entries below this fraction of `max|Ŵ|` become exact zeros.
    pub zero_threshold: f64,
    /// Iterates whose residual is within `(1 + slack)·ε` count as feasible.
    pub feasibility_slack: f64,
}

impl Default for NetTrimConfig {
    fn default() -> Self {
        NetTrimConfig {
            epsilon_rel: 0.02,
            epsilon_abs: None,
            rho: 1.0,
            adaptive_rho: true,
            max_iter: 500,
            tol_primal: 1e-4,
            tol_dual: 1e-4,
            zero_threshold: 1e-6,
            feasibility_slack: 0.05,
        }
    }
}

impl NetTrimConfig {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let eps_ok = match self.epsilon_abs {
            Some(e) => e > 0.0,
            None => self.epsilon_rel > 0.0,
        };
        if !eps_ok
            || !(self.rho > 0.0)
            || self.max_iter == 0
            || !(self.tol_primal > 0.0 && self.tol_dual > 0.0)
            || !(self.zero_threshold >= 0.0 && self.feasibility_slack >= 0.0)
        {
            return Err(Error::Config(format!("invalid Net-Trim configuration {self:?}")));
        }
        Ok(())
    }

    pub fn epsilon_for(&self, y: &Tensor) -> f64 {
        self.epsilon_abs.unwrap_or(self.epsilon_rel * frobenius(y.data()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrimResult {
    /// `[d_in, d_out]` with exact zeros.
    pub w: Vec<f64>,
    pub epsilon_used: f64,
    /// `‖max(ŴᵀX, 0) − Y‖_F` of the returned weights.
    pub constraint_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power-iteration count for `σ_max(X)`.
const POWER_ITERS: usize = 20;
/// Head-room on the power-iteration estimate, which approaches from below.
const SIGMA_SAFETY: f64 = 1.01;
const RHO_EVERY: usize = 10;
const RHO_RATIO: f64 = 10.0;
const RHO_STEP: f64 = 2.0;
/// ρ is frozen after this many iterations; endless rebalancing can cycle.
const RHO_FREEZE: usize = 250;

/// Euclidean projection onto `{Z : ‖(Z−Y)|Ω⁺‖_F ≤ ε, Z|Ω⁰ ≤ 0}`.
fn project(z: &mut [f64], y: &[f64], eps: f64) {
    let mut norm2 = 0.0;
    for (v, &t) in z.iter_mut().zip(y) {
        if t > 0.0 {
            norm2 += (*v - t) * (*v - t);
        } else {
            *v = v.min(0.0);
        }
    }
    let norm = norm2.sqrt();
    if norm > eps {
        let s = eps / norm;
        for (v, &t) in z.iter_mut().zip(y) {
            if t > 0.0 {
                *v = t + (*v - t) * s;
            }
        }
    }
}

/// Solves `min ‖U‖₁ s.t. ‖max(UᵀX,0) − Y‖_F ≤ ε` by linearized ADMM.
/// Returns the converged iterate, or, when `max_iter` runs out first, the
/// sparsest iterate seen whose residual is within the feasibility slack.
pub fn trim(pair: &ActivationPair, cfg: &NetTrimConfig) -> Result<TrimResult> {
    cfg.validate()?;
    let (d_in, d_out, n) = (pair.d_in(), pair.d_out(), pair.samples());
    let eps = cfg.epsilon_for(&pair.y);
    let penal = (d_in - pair.free_rows) * d_out;
    let y_norm = frobenius(pair.y.data());
    let zeros = vec![0.0; d_in * d_out];
    if y_norm <= eps {
        return Ok(TrimResult {
            constraint_residual: y_norm,
            w: zeros,
            epsilon_used: eps,
            iterations: 0,
            converged: true,
        });
    }

    // Normalize so that σ_max(X̃) ≈ 1 and Ỹ has unit RMS; U = (c/s)·V.
    let s = spectral_norm(pair.x.data(), d_in, n, POWER_ITERS) * SIGMA_SAFETY;
    let c = y_norm / ((d_out * n) as f64).sqrt();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Numerical("input activations are all zero".into()));
    }
    let x: Vec<f64> = pair.x.data().iter().map(|v| v / s).collect();
    let y: Vec<f64> = pair.y.data().iter().map(|v| v / c).collect();
    let eps_n = eps / c;
    let accept = eps_n * (1.0 + cfg.feasibility_slack);
    let y_n = frobenius(&y);

    let mut v: Vec<f64> = match &pair.w_orig {
        Some(w) => w.data().iter().map(|u| u * s / c).collect(),
        None => vec![0.0; d_in * d_out],
    };
    let mut a = vec![0.0; d_out * n];
    gemm_tn(d_out, d_in, n, &v, &x, &mut a, 0.0);
    let mut z = a.clone();
    project(&mut z, &y, eps_n);
    let mut lam = vec![0.0; d_out * n];
    let l1 = |v: &[f64]| v[..penal].iter().map(|u| u.abs()).sum::<f64>();

    let mut best: Option<(f64, Vec<f64>)> = None;
    if relu_residual(&a, &y) <= accept {
        best = Some((l1(&v), v.clone()));
    }

    let mut rho = cfg.rho;
    let mut r = vec![0.0; d_out * n];
    let mut g = vec![0.0; d_in * d_out];
    let mut z_prev = z.clone();
    let mut iterations = 0;
    let mut converged = false;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    while iterations < cfg.max_iter {
        iterations += 1;
        let mu = rho * SIGMA_SAFETY;
        // U-step: gradient of (ρ/2)‖VᵀX − Z + Λ‖² then soft threshold.
        for ((ri, ai), (zi, li)) in r.iter_mut().zip(&a).zip(z.iter().zip(&lam)) {
            *ri = ai - zi + li;
        }
        gemm_nt(d_in, n, d_out, &x, &r, &mut g, 0.0);
        let step = rho / mu;
        let thresh = 1.0 / mu;
        let mut change = 0.0;
        for (k, (vi, gi)) in v.iter_mut().zip(&g).enumerate() {
            let t = *vi - step * gi;
            let new = if k < penal {
                t.signum() * (t.abs() - thresh).max(0.0)
            } else {
                t
            };
            change += (new - *vi) * (new - *vi);
            *vi = new;
        }
        gemm_tn(d_out, d_in, n, &v, &x, &mut a, 0.0);

        // Z-step and dual update.
        z_prev.copy_from_slice(&z);
        for ((zi, ai), li) in z.iter_mut().zip(&a).zip(&lam) {
            *zi = ai + li;
        }
        project(&mut z, &y, eps_n);
        let mut pr2 = 0.0;
        for ((li, ai), zi) in lam.iter_mut().zip(&a).zip(&z) {
            let d = ai - zi;
            *li += d;
            pr2 += d * d;
        }
        primal = pr2.sqrt() / y_n;
        dual = change.sqrt() / frobenius(&v).max(1e-300);

        if relu_residual(&a, &y) <= accept {
            let val = l1(&v);
            if best.as_ref().is_none_or(|(b, _)| val < *b) {
                best = Some((val, v.clone()));
            }
        }
        if primal < cfg.tol_primal && dual < cfg.tol_dual {
            converged = true;
            // The converged point is the answer when it is acceptable;
            // earlier cheaper iterates only exploit the slack.
            if relu_residual(&a, &y) <= accept {
                best = Some((l1(&v), v.clone()));
            }
            break;
        }
        if cfg.adaptive_rho && iterations <= RHO_FREEZE && iterations % RHO_EVERY == 0 {
            let rp = pr2.sqrt();
            let rd = rho * z.iter().zip(&z_prev).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            let factor = if rp > RHO_RATIO * rd {
                RHO_STEP
            } else if rd > RHO_RATIO * rp {
                1.0 / RHO_STEP
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                lam.iter_mut().for_each(|l| *l /= factor);
            }
        }
    }

    let Some((_, v)) = best else {
        return Err(Error::NoConvergence {
            iterations,
            primal,
            dual,
        });
    };
    let mut w: Vec<f64> = v.iter().map(|u| u * c / s).collect();
    let max = w[..penal].iter().fold(0.0f64, |m, u| m.max(u.abs()));
    let cut = cfg.zero_threshold * max;
    for u in &mut w[..penal] {
        if u.abs() < cut {
            *u = 0.0;
        }
    }
    Ok(TrimResult {
        constraint_residual: pair.residual(&w),
        w,
        epsilon_used: eps,
        iterations,
        converged,
    })
}

/// Pruning statistics for one layer, bias excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneReport {
    pub network: String,
    pub layer: String,
    /// Total weights.
    pub n_t: u64,
    /// Nonzero weights before pruning.
    pub n_b: u64,
    /// Nonzero weights after pruning.
    pub n_a: u64,
    pub p_e: f64,
    pub epsilon_used: f64,
    pub constraint_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Total model parameters before and after.
    pub params_before: u64,
    pub params_after: u64,
}

impl PruneReport {
    pub const CSV_HEADER: &'static str =
        "network,n_T,n_b,n_a,p_e,epsilon,residual,iterations";

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.network, self.n_t, self.n_b, self.n_a, self.p_e, self.epsilon_used, self.constraint_residual, self.iterations
        )
        .unwrap();
        s
    }

    pub fn csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

pub fn sparsity(n_a: u64, n_t: u64) -> f64 {
    1.0 - n_a as f64 / n_t as f64
}

/// Collects activations, trims the first FC layer and swaps in the CSR
/// result.
pub fn prune_model(
    m: &ModelGraph,
    d: &Dataset,
    n_samples: usize,
    seed: u64,
    cfg: &NetTrimConfig,
) -> Result<(ModelGraph, PruneReport)> {
    cfg.validate()?;
    let fc = m.first_fc().to_string();
    let pair = collect_activations(m, d, n_samples, seed)?;
    let res = trim(&pair, cfg)?;
    let (d_in, d_out) = (pair.d_in() - 1, pair.d_out());
    let original = m.dense_weight(&fc)?;
    let sparse = SparseMatrix::from_dense(d_in, d_out, &res.w[..d_in * d_out])?;
    let mut out = m.to_sparse_layer(&fc, sparse)?;
    let bias = Tensor::new(vec![d_out], res.w[d_in * d_out..].to_vec())?;
    *out.param_mut(&bias_key(&fc)).expect("bias kept") = bias;
    out.provenance.record(
        "prune",
        [
            ("layer", fc.clone()),
            ("epsilon", res.epsilon_used.to_string()),
            ("samples", n_samples.to_string()),
            ("seed", seed.to_string()),
        ],
    );
    let n_t = (d_in * d_out) as u64;
    let n_a = out.sparse_layers()[&fc].nnz() as u64;
    let report = PruneReport {
        network: m.arch.id().into(),
        layer: fc,
        n_t,
        n_b: original.iter().filter(|&&v| v != 0.0).count() as u64,
        n_a,
        p_e: sparsity(n_a, n_t),
        epsilon_used: res.epsilon_used,
        constraint_residual: res.constraint_residual,
        iterations: res.iterations,
        converged: res.converged,
        params_before: count_params(m).total,
        params_after: count_params(&out).total,
    };
    Ok((out, report))
}

//! Shared test oracles.
#![allow(dead_code)]

pub mod grad;

use edgeamc::nettrim::ActivationPair;
use edgeamc::rng;
use edgeamc::tensor::Tensor;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random Net-Trim instance with `Y = relu(WᵀX)`, no bias rows, and every
/// pre-activation at least 0.05 away from zero.
pub fn toy_pair(d_in: usize, d_out: usize, n: usize, seed: u64) -> ActivationPair {
    let mut r = rng::stream(seed, &[0x70F]);
    loop {
        let mut normal = |len: usize| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(&mut r)).collect() };
        let x = normal(d_in * n);
        let w = normal(d_in * d_out);
        let mut pre = vec![0.0; d_out * n];
        for k in 0..d_out {
            for j in 0..n {
                pre[k * n + j] = (0..d_in).map(|i| w[i * d_out + k] * x[i * n + j]).sum();
            }
        }
        let positives = pre.iter().filter(|&&v| v > 0.0).count();
        if pre.iter().any(|v| v.abs() < 0.05) || positives == 0 {
            continue;
        }
        let y = pre.iter().map(|&v| v.max(0.0)).collect();
        return ActivationPair::new(
            Tensor::new(vec![d_in, n], x).unwrap(),
            Tensor::new(vec![d_out, n], y).unwrap(),
            Some(Tensor::new(vec![d_in, d_out], w).unwrap()),
            0,
        )
        .unwrap();
    }
}

/// A random shape within the toy limits (d_in ≤ 4, d_out ≤ 2, N ≤ 6).
pub fn toy_shape(seed: u64) -> (usize, usize, usize) {
    let mut r = rng::stream(seed, &[0x5A9E]);
    (r.random_range(2..=4), r.random_range(1..=2), r.random_range(3..=6))
}

/// Exact minimizer of `‖U‖₁` over the convexified Net-Trim set
/// `{ ‖(UᵀX − Y)|Ω⁺‖_F ≤ ε, (UᵀX)|Ω⁰ ≤ 0 }`, by a log-barrier
/// interior-point method on `(u, t)` with `−t ≤ u ≤ t`. Returns `(U, ‖U‖₁)`
/// with duality gap below 1e-10. Starts from the original weights, which
/// are strictly feasible by construction of [`toy_pair`].
pub fn convex_oracle(pair: &ActivationPair, eps: f64) -> (Vec<f64>, f64) {
    let (d_in, d_out, n) = (pair.d_in(), pair.d_out(), pair.samples());
    let nv = d_in * d_out;
    let x = pair.x.data();
    let y = pair.y.data();
    let row = |k: usize, j: usize| -> DVector<f64> {
        let mut a = DVector::zeros(nv);
        for i in 0..d_in {
            a[i * d_out + k] = x[i * n + j];
        }
        a
    };
    let mut a_rows = Vec::new();
    let mut targets = Vec::new();
    let mut b_rows = Vec::new();
    for k in 0..d_out {
        for j in 0..n {
            if y[k * n + j] > 0.0 {
                a_rows.push(row(k, j).transpose());
                targets.push(y[k * n + j]);
            } else {
                b_rows.push(row(k, j));
            }
        }
    }
    let a = DMatrix::from_rows(&a_rows);
    let target = DVector::from_vec(targets);
    let eps2 = eps * eps;

    let barrier = |v: &DVector<f64>, tau: f64| -> Option<f64> {
        let (u, t) = (v.rows(0, nv), v.rows(nv, nv));
        let mut f = tau * t.sum();
        for i in 0..nv {
            let (s1, s2) = (t[i] - u[i], t[i] + u[i]);
            if s1 <= 0.0 || s2 <= 0.0 {
                return None;
            }
            f -= s1.ln() + s2.ln();
        }
        for b in &b_rows {
            let h = -b.dot(&u);
            if h <= 0.0 {
                return None;
            }
            f -= h.ln();
        }
        let r = &a * u - &target;
        let q = eps2 - r.norm_squared();
        if q <= 0.0 {
            return None;
        }
        Some(f - q.ln())
    };

    let w0 = pair.w_orig.as_ref().expect("toy pairs carry weights").data();
    let mut v = DVector::zeros(2 * nv);
    for i in 0..nv {
        v[i] = w0[i];
        v[nv + i] = w0[i].abs() + 1.0;
    }
    let constraints = (2 * nv + b_rows.len() + 1) as f64;
    let mut tau = 1.0;
    while constraints / tau > 1e-11 {
        for _ in 0..200 {
            let (u, t) = (v.rows(0, nv).into_owned(), v.rows(nv, nv).into_owned());
            let mut g = DVector::zeros(2 * nv);
            let mut h = DMatrix::zeros(2 * nv, 2 * nv);
            for i in 0..nv {
                let (s1, s2) = (t[i] - u[i], t[i] + u[i]);
                g[i] = 1.0 / s1 - 1.0 / s2;
                g[nv + i] = tau - 1.0 / s1 - 1.0 / s2;
                let (p1, p2) = (1.0 / (s1 * s1), 1.0 / (s2 * s2));
                h[(i, i)] = p1 + p2;
                h[(nv + i, nv + i)] = p1 + p2;
                h[(i, nv + i)] = p2 - p1;
                h[(nv + i, i)] = p2 - p1;
            }
            let mut huu = DMatrix::zeros(nv, nv);
            let mut gu = DVector::zeros(nv);
            for b in &b_rows {
                let hh = -b.dot(&u);
                gu += b / hh;
                huu += b * b.transpose() / (hh * hh);
            }
            let r = &a * &u - &target;
            let q = eps2 - r.norm_squared();
            let atr = a.transpose() * &r;
            gu += &atr * (2.0 / q);
            huu += a.transpose() * &a * (2.0 / q) + &atr * atr.transpose() * (4.0 / (q * q));
            for i in 0..nv {
                g[i] += gu[i];
                for j in 0..nv {
                    h[(i, j)] += huu[(i, j)];
                }
            }
            let step = h.clone().lu().solve(&(-&g)).expect("barrier Hessian is positive definite");
            let decrement = -g.dot(&step);
            if decrement / 2.0 < 1e-13 {
                break;
            }
            let f0 = barrier(&v, tau).unwrap();
            let mut alpha = 1.0;
            loop {
                let cand = &v + &step * alpha;
                if let Some(f) = barrier(&cand, tau) {
                    if f <= f0 - 0.25 * alpha * decrement {
                        v = cand;
                        break;
                    }
                }
                alpha *= 0.5;
                assert!(alpha > 1e-20, "line search failed");
            }
        }
        tau *= 10.0;
    }
    let u: Vec<f64> = v.rows(0, nv).iter().copied().collect();
    let l1 = u.iter().map(|x| x.abs()).sum();
    (u, l1)
}

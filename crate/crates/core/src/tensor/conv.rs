//! Stride-1 zero-padded 2-D cross-correlation via im2col + GEMM.

use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use crate::par;

/// Samples per partial weight-gradient accumulator. Fixed so that the
/// reduction order is independent of how many threads run.
const GRAD_GROUP: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub ph: usize,
    pub pw: usize,
}

impl ConvGeom {
    pub fn oh(&self) -> usize {
        self.h + 2 * self.ph + 1 - self.kh
    }

    pub fn ow(&self) -> usize {
        self.w + 2 * self.pw + 1 - self.kw
    }

    /// Output positions per channel.
    pub fn l(&self) -> usize {
        self.oh() * self.ow()
    }

    /// Rows of the unfolded patch matrix.
    pub fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.o * self.l()
    }
}

/// Output columns `xo` whose input column `xo + kj - pw` lies inside the
/// row, as a half-open range.
fn valid_cols(g: &ConvGeom, kj: usize) -> (usize, usize) {
    let lo = g.pw.saturating_sub(kj).min(g.ow());
    let hi = (g.w + g.pw).saturating_sub(kj).min(g.ow()).max(lo);
    (lo, hi)
}

fn im2col(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let (oh, ow) = (g.oh(), g.ow());
    let l = oh * ow;
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * l..(row + 1) * l];
                let (lo, hi) = valid_cols(g, kj);
                for y in 0..oh {
                    let iy = (y + ki) as isize - g.ph as isize;
                    let d = &mut dst[y * ow..(y + 1) * ow];
                    if iy < 0 || iy >= g.h as isize {
                        d.fill(0.0);
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..][..g.w];
                    d[..lo].fill(0.0);
                    d[hi..].fill(0.0);
                    if hi > lo {
                        let s0 = lo + kj - g.pw;
                        d[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    }
                }
            }
        }
    }
}

fn col2im_add(col: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (oh, ow) = (g.oh(), g.ow());
    let l = oh * ow;
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * l..(row + 1) * l];
                let (lo, hi) = valid_cols(g, kj);
                if hi <= lo {
                    continue;
                }
                let s0 = lo + kj - g.pw;
                for y in 0..oh {
                    let iy = (y + ki) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * g.h + iy as usize) * g.w..][s0..s0 + (hi - lo)];
                    for (d, &v) in dst.iter_mut().zip(&src[y * ow + lo..y * ow + hi]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn forward(
    x: &[f64],
    kernels: &[f64],
    bias: Option<&[f64]>,
    g: &ConvGeom,
    batch: usize,
) -> Vec<f64> {
    let (l, ckk) = (g.l(), g.ckk());
    let mut out = vec![0.0; batch * g.out_len()];
    par::for_each_chunk_mut(&mut out, g.out_len(), |b, ob| {
        let mut col = vec![0.0; ckk * l];
        im2col(&x[b * g.in_len()..(b + 1) * g.in_len()], g, &mut col);
        gemm_nn(g.o, ckk, l, kernels, &col, ob, 0.0);
        if let Some(bias) = bias {
            for (row, &bv) in ob.chunks_mut(l).zip(bias) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    });
    out
}

/// Kernel gradient summed over the batch.
pub(crate) fn kernel_grad(x: &[f64], dout: &[f64], g: &ConvGeom, batch: usize) -> Vec<f64> {
    let (l, ckk) = (g.l(), g.ckk());
    let groups = batch.div_ceil(GRAD_GROUP);
    let partials = par::map_range(groups, |gi| {
        let mut acc = vec![0.0; g.o * ckk];
        let mut col = vec![0.0; ckk * l];
        for b in gi * GRAD_GROUP..((gi + 1) * GRAD_GROUP).min(batch) {
            im2col(&x[b * g.in_len()..(b + 1) * g.in_len()], g, &mut col);
            let db = &dout[b * g.out_len()..(b + 1) * g.out_len()];
            gemm_nt(g.o, l, ckk, db, &col, &mut acc, 1.0);
        }
        acc
    });
    let mut total = vec![0.0; g.o * ckk];
    for p in partials {
        total.iter_mut().zip(p).for_each(|(t, v)| *t += v);
    }
    total
}

pub(crate) fn bias_grad(dout: &[f64], g: &ConvGeom, batch: usize) -> Vec<f64> {
    let l = g.l();
    let mut db = vec![0.0; g.o];
    for b in 0..batch {
        let ob = &dout[b * g.out_len()..(b + 1) * g.out_len()];
        for (acc, row) in db.iter_mut().zip(ob.chunks(l)) {
            *acc += row.iter().sum::<f64>();
        }
    }
    db
}

pub(crate) fn input_grad(kernels: &[f64], dout: &[f64], g: &ConvGeom, batch: usize) -> Vec<f64> {
    let (l, ckk) = (g.l(), g.ckk());
    let mut dx = vec![0.0; batch * g.in_len()];
    par::for_each_chunk_mut(&mut dx, g.in_len(), |b, dxb| {
        let mut dcol = vec![0.0; ckk * l];
        let db = &dout[b * g.out_len()..(b + 1) * g.out_len()];
        gemm_tn(ckk, g.o, l, kernels, db, &mut dcol, 0.0);
        col2im_add(&dcol, g, dxb);
    });
    dx
}

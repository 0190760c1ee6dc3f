use crate::error::{Error, Result};
use crate::par;

use super::ByteReader;

const CSR_MAGIC: &[u8; 4] = b"CSRW";
const CSR_VERSION: u16 = 1;

/// Compressed-sparse-row matrix. For a layer weight the rows index layer
/// inputs and the columns index layer outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<u64>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<u64>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Packs every entry that is not exactly zero.
    pub fn from_dense(rows: usize, cols: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != rows * cols {
            return Err(Error::dim(format!(
                "dense buffer of {} for a {rows}x{cols} matrix",
                dense.len()
            )));
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in dense.chunks(cols) {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j as u32);
                    values.push(v);
                }
            }
            row_ptr.push(values.len() as u64);
        }
        SparseMatrix::new(rows, cols, row_ptr, col_idx, values)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::format(m));
        if self.row_ptr.len() != self.rows + 1 || self.row_ptr.first() != Some(&0) {
            return bad("row_ptr must have rows+1 entries starting at 0".into());
        }
        let nnz = *self.row_ptr.last().unwrap() as usize;
        if nnz != self.col_idx.len() || nnz != self.values.len() {
            return bad(format!(
                "row_ptr ends at {nnz} but {} indices / {} values",
                self.col_idx.len(),
                self.values.len()
            ));
        }
        for w in self.row_ptr.windows(2) {
            if w[0] > w[1] {
                return bad("row_ptr is not monotone".into());
            }
            let cols = &self.col_idx[w[0] as usize..w[1] as usize];
            if cols.windows(2).any(|c| c[0] >= c[1]) {
                return bad("column indices not strictly increasing within a row".into());
            }
            if cols.last().is_some_and(|&c| c as usize >= self.cols) {
                return bad("column index out of range".into());
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[u64] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (s, e) = (self.row_ptr[i] as usize, self.row_ptr[i + 1] as usize);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            let (idx, vals) = self.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                out[i * self.cols + j as usize] = v;
            }
        }
        out
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// `y = x·W` for a batch `x` of shape `[batch, rows]`; returns `[batch, cols]`.
    pub fn left_mul(&self, x: &[f64], batch: usize) -> Vec<f64> {
        assert_eq!(x.len(), batch * self.rows);
        let mut y = vec![0.0; batch * self.cols];
        par::for_each_chunk_mut(&mut y, self.cols, |b, yb| {
            let xb = &x[b * self.rows..(b + 1) * self.rows];
            for (i, &xi) in xb.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let (idx, vals) = self.row(i);
                for (&j, &v) in idx.iter().zip(vals) {
                    yb[j as usize] += xi * v;
                }
            }
        });
        y
    }

    /// `dx = g·Wᵀ` for `g` of shape `[batch, cols]`; returns `[batch, rows]`.
    pub fn left_mul_transposed(&self, g: &[f64], batch: usize) -> Vec<f64> {
        assert_eq!(g.len(), batch * self.cols);
        let mut dx = vec![0.0; batch * self.rows];
        par::for_each_chunk_mut(&mut dx, self.rows, |b, dxb| {
            let gb = &g[b * self.cols..(b + 1) * self.cols];
            for (i, out) in dxb.iter_mut().enumerate() {
                let (idx, vals) = self.row(i);
                *out = idx.iter().zip(vals).map(|(&j, &v)| v * gb[j as usize]).sum();
            }
        });
        dx
    }

    /// `CSRW` blob: magic, u16 version, u32 rows, u32 cols, u64 nnz,
    /// (rows+1)×u64 row_ptr, nnz×u32 col_idx, nnz×f64 values, all LE.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22 + 8 * (self.rows + 1) + 12 * self.nnz());
        out.extend_from_slice(CSR_MAGIC);
        out.extend_from_slice(&CSR_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&(self.nnz() as u64).to_le_bytes());
        for p in &self.row_ptr {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for c in &self.col_idx {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != CSR_MAGIC {
            return Err(Error::format("bad sparse-matrix magic"));
        }
        let version = r.u16()?;
        if version != CSR_VERSION {
            return Err(Error::format(format!("unsupported CSRW version {version}")));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let nnz = r.u64()? as usize;
        let expected = 8 * (rows + 1) + 12 * nnz;
        if r.remaining() != expected {
            return Err(Error::format(format!(
                "CSRW payload is {} bytes, expected {expected}",
                r.remaining()
            )));
        }
        let row_ptr = (0..=rows).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let col_idx = (0..nnz).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let values = (0..nnz).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        SparseMatrix::new(rows, cols, row_ptr, col_idx, values)
    }
}

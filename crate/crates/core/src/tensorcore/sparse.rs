use std::sync::Arc;

use rayon::prelude::*;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Work (nnz x dense width) below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= rows || *c >= cols) {
            return Err(Error::shape(
                "CsrMatrix::from_triplets",
                format!("entry ({r},{c}) outside {rows}x{cols}"),
            ));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Assembles from raw CSR arrays, validating ordering and bounds.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1
            || indptr[rows] != indices.len()
            || indices.len() != values.len()
        {
            return Err(Error::shape(
                "CsrMatrix::from_parts",
                "inconsistent array lengths",
            ));
        }
        for r in 0..rows {
            if indptr[r] > indptr[r + 1] {
                return Err(Error::shape("CsrMatrix::from_parts", "indptr not monotone"));
            }
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.last().is_some_and(|&c| c >= cols) {
                return Err(Error::shape(
                    "CsrMatrix::from_parts",
                    format!("row {r} has unsorted or out-of-range columns"),
                ));
            }
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column ids and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |i| vals[i])
    }

    /// Same sparsity pattern with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.nnz());
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// Largest `|A[r][c] - A[c][r]|` over stored entries; `None` if not square.
    pub fn asymmetry(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        Some(worst)
    }

    /// `self * dense`. Rows are computed independently, so the result does
    /// not depend on the number of worker threads.
    pub fn matmul_dense(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != dense.rows() {
            return Err(Error::shape(
                "spmm",
                format!(
                    "{}x{} sparse times {}x{} dense",
                    self.rows,
                    self.cols,
                    dense.rows(),
                    dense.cols()
                ),
            ));
        }
        let width = dense.cols();
        let mut out = DenseMatrix::zeros(self.rows, width);
        if width == 0 {
            return Ok(out);
        }
        let kernel = |(r, dst): (usize, &mut [f64])| {
            let (cols, vals) = self.row(r);
            let mut pairs_c = cols.chunks_exact(2);
            let mut pairs_v = vals.chunks_exact(2);
            for (c, v) in (&mut pairs_c).zip(&mut pairs_v) {
                let (a, b) = (v[0], v[1]);
                let (s1, s2) = (&dense.row(c[0])[..width], &dense.row(c[1])[..width]);
                for i in 0..width {
                    dst[i] += a * s1[i] + b * s2[i];
                }
            }
            for (&c, &v) in pairs_c.remainder().iter().zip(pairs_v.remainder()) {
                for (d, s) in dst.iter_mut().zip(dense.row(c)) {
                    *d += v * s;
                }
            }
        };
        if self.nnz() * width < PAR_THRESHOLD {
            out.data_mut()
                .chunks_mut(width)
                .enumerate()
                .for_each(kernel);
        } else {
            out.data_mut()
                .par_chunks_mut(width)
                .enumerate()
                .for_each(kernel);
        }
        Ok(out)
    }
}

/// A sparse operator paired with its adjoint, so both products run row-parallel.
#[derive(Debug, Clone)]
pub struct SparseLinear {
    forward: Arc<CsrMatrix>,
    adjoint: Arc<CsrMatrix>,
    /// Slot in `forward` of each stored adjoint entry; lets a reweighted
    /// copy skip the transpose.
    adjoint_slots: Option<Arc<Vec<usize>>>,
}

impl SparseLinear {
    pub fn new(m: CsrMatrix) -> Self {
        let slots = m
            .with_values((0..m.nnz()).map(|k| k as f64).collect())
            .transpose();
        let adjoint_slots: Vec<usize> = slots.values().iter().map(|&k| k as usize).collect();
        let adjoint = slots.with_values(adjoint_slots.iter().map(|&k| m.values()[k]).collect());
        Self {
            forward: Arc::new(m),
            adjoint: Arc::new(adjoint),
            adjoint_slots: Some(Arc::new(adjoint_slots)),
        }
    }

    /// For operators known to be symmetric; the adjoint shares storage.
    pub fn symmetric(m: CsrMatrix) -> Self {
        debug_assert!(m.asymmetry().is_some_and(|a| a < 1e-9));
        let forward = Arc::new(m);
        Self {
            adjoint: Arc::clone(&forward),
            forward,
            adjoint_slots: None,
        }
    }

    /// Same sparsity pattern with new stored values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        let Some(slots) = &self.adjoint_slots else {
            return Self::new(self.forward.with_values(values));
        };
        let adjoint = self
            .adjoint
            .with_values(slots.iter().map(|&k| values[k]).collect());
        Self {
            forward: Arc::new(self.forward.with_values(values)),
            adjoint: Arc::new(adjoint),
            adjoint_slots: Some(Arc::clone(slots)),
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.forward
    }

    pub fn adjoint(&self) -> &CsrMatrix {
        &self.adjoint
    }
}

//! Compressed sparse row matrices and a sparse Cholesky factorization with a
//! minimum-degree fill-reducing ordering.
//!
//! The symbolic analysis (ordering, elimination tree, column counts) depends
//! only on the sparsity pattern and is shared between every numeric
//! factorization of matrices with that pattern.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Sparse matrix in compressed sparse row format. Column indices within a row
/// are sorted and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|e| e.0);
            for &(c, v) in &row {
                if indices.len() > indptr[r] && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { n_rows, n_cols, indptr, indices, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self {
            n_rows: d.len(),
            n_cols: d.len(),
            indptr: (0..=d.len()).collect(),
            indices: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterates over the stored `(col, value)` entries of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.n_cols, self.n_rows, &t)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self + s * other`, pattern is the union of both.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, s * v)));
        Self::from_triplets(self.n_rows, self.n_cols, &t)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n_cols, other.n_rows);
        let mut t = Vec::new();
        for r in 0..self.n_rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.n_rows, other.n_cols, &t)
    }

    /// Block-diagonal concatenation.
    pub fn block_diag(blocks: &[&CsrMatrix]) -> Self {
        let n_rows = blocks.iter().map(|b| b.n_rows).sum();
        let n_cols = blocks.iter().map(|b| b.n_cols).sum();
        let mut t = Vec::new();
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            t.extend(b.triplets().into_iter().map(|(r, c, v)| (r + r0, c + c0, v)));
            r0 += b.n_rows;
            c0 += b.n_cols;
        }
        Self::from_triplets(n_rows, n_cols, &t)
    }

    /// Maximum absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        self.add_scaled(&t, -1.0).values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] += v;
        }
        d
    }

    /// True when both matrices have identical row pointers and column indices.
    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows && self.n_cols == other.n_cols && self.indptr == other.indptr && self.indices == other.indices
    }

    /// Re-expresses this matrix on a (super-)pattern, filling missing entries
    /// with zeros. Panics if an entry of `self` is absent from `pattern`.
    pub fn on_pattern(&self, pattern: &Self) -> Self {
        let mut out = pattern.clone();
        out.values.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.n_rows {
            let span = out.indptr[r]..out.indptr[r + 1];
            for (c, v) in self.row(r) {
                let k = out.indices[span.clone()].binary_search(&c).expect("entry outside target pattern");
                out.values[span.start + k] = v;
            }
        }
        out
    }
}

/// Greedy minimum-degree ordering on the explicit elimination graph of a
/// structurally symmetric matrix. Ties are broken by the smaller index, so the
/// result is deterministic.
pub fn minimum_degree_ordering(pattern: &CsrMatrix) -> Vec<usize> {
    let n = pattern.n_rows();
    let mut adj: Vec<Vec<usize>> = (0..n).map(|r| pattern.row(r).map(|(c, _)| c).filter(|&c| c != r).collect()).collect();
    // symmetrize in case only one triangle is stored
    for r in 0..n {
        for k in 0..adj[r].len() {
            let c = adj[r][k];
            if adj[c].binary_search(&r).is_err() {
                let pos = adj[c].binary_search(&r).unwrap_err();
                adj[c].insert(pos, r);
            }
        }
    }
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            // adj[u] <- (adj[u] ∪ nbrs) \ {u, v}
            merged.clear();
            let (a, b) = (&adj[u], &nbrs);
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let next = match (a.get(i), b.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        y
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    order
}

/// Pattern-only part of a Cholesky factorization `P A Pᵀ = L Lᵀ`.
#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    parent: Vec<Option<usize>>,
    /// Column pointers of L (CSC, diagonal entry first in every column).
    l_colptr: Vec<usize>,
    /// Upper triangle of the permuted matrix in CSC form (rows ≤ column).
    c_colptr: Vec<usize>,
    c_rows: Vec<usize>,
    /// For every stored entry of `c`, the position in the source CSR values.
    c_source: Vec<usize>,
    source_indptr: Vec<usize>,
    source_indices: Vec<usize>,
}

impl SymbolicCholesky {
    /// Analyzes a structurally symmetric pattern (both triangles stored).
    pub fn analyze(pattern: &CsrMatrix) -> Result<Arc<Self>> {
        let perm = minimum_degree_ordering(pattern);
        Self::with_ordering(pattern, perm)
    }

    pub fn with_ordering(pattern: &CsrMatrix, perm: Vec<usize>) -> Result<Arc<Self>> {
        let n = pattern.n_rows();
        if pattern.n_cols() != n {
            return Err(Error::Dimension(format!("Cholesky needs a square matrix, got {}x{}", n, pattern.n_cols())));
        }
        let mut inv_perm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv_perm[p] = k;
        }
        // permuted upper triangle, column-wise: entry (i, j) with i ≤ j
        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for r in 0..n {
            for k in pattern.indptr[r]..pattern.indptr[r + 1] {
                let (pi, pj) = (inv_perm[r], inv_perm[pattern.indices[k]]);
                if pi <= pj {
                    cols[pj].push((pi, k));
                }
            }
        }
        let mut c_colptr = vec![0];
        let mut c_rows = Vec::new();
        let mut c_source = Vec::new();
        for col in &mut cols {
            col.sort_unstable();
            for &(i, k) in col.iter() {
                c_rows.push(i);
                c_source.push(k);
            }
            c_colptr.push(c_rows.len());
        }
        // elimination tree (Liu's algorithm with path compression)
        let mut parent = vec![None; n];
        let mut ancestor: Vec<Option<usize>> = vec![None; n];
        for k in 0..n {
            for &i0 in &c_rows[c_colptr[k]..c_colptr[k + 1]] {
                let mut i = i0;
                while i < k {
                    let next = ancestor[i];
                    ancestor[i] = Some(k);
                    match next {
                        None => {
                            parent[i] = Some(k);
                            break;
                        }
                        Some(a) => i = a,
                    }
                }
            }
        }
        // column counts by walking the row subtrees
        let mut counts = vec![1usize; n];
        let mut mark = vec![usize::MAX; n];
        for k in 0..n {
            mark[k] = k;
            for &i0 in &c_rows[c_colptr[k]..c_colptr[k + 1]] {
                let mut i = i0;
                while i < k && mark[i] != k {
                    counts[i] += 1;
                    mark[i] = k;
                    i = parent[i].expect("etree parent exists below k");
                }
            }
        }
        let mut l_colptr = vec![0; n + 1];
        for j in 0..n {
            l_colptr[j + 1] = l_colptr[j] + counts[j];
        }
        Ok(Arc::new(Self {
            n,
            perm,
            inv_perm,
            parent,
            l_colptr,
            c_colptr,
            c_rows,
            c_source,
            source_indptr: pattern.indptr.clone(),
            source_indices: pattern.indices.clone(),
        }))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.l_colptr[self.n]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    fn matches(&self, a: &CsrMatrix) -> bool {
        a.indptr == self.source_indptr && a.indices == self.source_indices
    }
}

/// Numeric Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    symbolic: Arc<SymbolicCholesky>,
    l_rows: Vec<usize>,
    l_vals: Vec<f64>,
}

impl CholeskyFactor {
    /// Up-looking numeric factorization. `a` must have exactly the pattern the
    /// symbolic analysis was computed from.
    pub fn factor(symbolic: &Arc<SymbolicCholesky>, a: &CsrMatrix) -> Result<Self> {
        let s = symbolic.as_ref();
        if !s.matches(a) {
            return Err(Error::Dimension("matrix pattern differs from symbolic analysis".into()));
        }
        let n = s.n;
        let nnz = s.nnz_l();
        let mut l_rows = vec![0usize; nnz];
        let mut l_vals = vec![0.0; nnz];
        let mut next: Vec<usize> = s.l_colptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut stack = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        let mut path = Vec::with_capacity(n);
        for k in 0..n {
            // nonzero pattern of row k of L: reach of the column in the etree
            let mut top = n;
            flag[k] = k;
            for p in s.c_colptr[k]..s.c_colptr[k + 1] {
                let i0 = s.c_rows[p];
                x[i0] += a.values[s.c_source[p]];
                if i0 == k {
                    continue;
                }
                path.clear();
                let mut i = i0;
                while flag[i] != k {
                    path.push(i);
                    flag[i] = k;
                    i = s.parent[i].expect("etree parent exists");
                }
                for &v in path.iter().rev() {
                    top -= 1;
                    stack[top] = v;
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..n] {
                let lki = x[i] / l_vals[s.l_colptr[i]];
                x[i] = 0.0;
                for p in s.l_colptr[i] + 1..next[i] {
                    x[l_rows[p]] -= l_vals[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                l_rows[p] = k;
                l_vals[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: k, value: d });
            }
            let p = next[k];
            next[k] += 1;
            l_rows[p] = k;
            l_vals[p] = d.sqrt();
        }
        Ok(Self { symbolic: Arc::clone(symbolic), l_rows, l_vals })
    }

    /// Convenience: analyze and factor in one step.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let sym = SymbolicCholesky::analyze(a)?;
        Self::factor(&sym, a)
    }

    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn log_det(&self) -> f64 {
        let s = &self.symbolic;
        2.0 * (0..s.n).map(|j| self.l_vals[s.l_colptr[j]].ln()).sum::<f64>()
    }

    // L y = b in permuted coordinates
    fn forward(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for j in 0..s.n {
            let start = s.l_colptr[j];
            y[j] /= self.l_vals[start];
            let yj = y[j];
            // column j lists rows in increasing order after the diagonal
            for p in start + 1..s.l_colptr[j + 1] {
                y[self.l_rows[p]] -= self.l_vals[p] * yj;
            }
        }
    }

    // Lᵀ x = y in permuted coordinates
    fn backward(&self, x: &mut [f64]) {
        let s = &self.symbolic;
        for j in (0..s.n).rev() {
            let start = s.l_colptr[j];
            let mut v = x[j];
            for p in start + 1..s.l_colptr[j + 1] {
                v -= self.l_vals[p] * x[self.l_rows[p]];
            }
            x[j] = v / self.l_vals[start];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        assert_eq!(b.len(), s.n);
        let mut y: Vec<f64> = s.perm.iter().map(|&p| b[p]).collect();
        self.forward(&mut y);
        self.backward(&mut y);
        let mut x = vec![0.0; s.n];
        for (k, &p) in s.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Returns `Pᵀ L⁻ᵀ z`, which has covariance `A⁻¹` when `z` is standard normal.
    pub fn sample_transform(&self, z: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        assert_eq!(z.len(), s.n);
        let mut y = z.to_vec();
        self.backward(&mut y);
        let mut x = vec![0.0; s.n];
        for (k, &p) in s.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// `bᵀ A⁻¹ b` computed as `‖L⁻¹ P b‖²`.
    pub fn inv_quad_form(&self, b: &[f64]) -> f64 {
        let s = &self.symbolic;
        let mut y: Vec<f64> = s.perm.iter().map(|&p| b[p]).collect();
        self.forward(&mut y);
        y.iter().map(|v| v * v).sum()
    }

    /// Maps a vector into permuted coordinates and applies `L⁻¹`.
    pub fn whiten(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let mut y: Vec<f64> = s.perm.iter().map(|&p| b[p]).collect();
        self.forward(&mut y);
        y
    }

    /// Position of an original index after permutation.
    pub fn permuted_index(&self, i: usize) -> usize {
        self.symbolic.inv_perm[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_2d(k: usize, shift: f64) -> CsrMatrix {
        let idx = |i: usize, j: usize| i * k + j;
        let mut t = Vec::new();
        for i in 0..k {
            for j in 0..k {
                t.push((idx(i, j), idx(i, j), 4.0 + shift));
                if i + 1 < k {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                    t.push((idx(i + 1, j), idx(i, j), -1.0));
                }
                if j + 1 < k {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                    t.push((idx(i, j + 1), idx(i, j), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(k * k, k * k, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn ordering_is_a_permutation() {
        let a = laplacian_2d(7, 0.1);
        let mut p = minimum_degree_ordering(&a);
        p.sort_unstable();
        assert_eq!(p, (0..49).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_matches_dense() {
        let a = laplacian_2d(6, 0.3);
        let f = CholeskyFactor::new(&a).unwrap();
        let dense = a.to_dense();
        let chol = dense.clone().cholesky().unwrap();
        let ld: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        assert!((f.log_det() - ld).abs() < 1e-10);
        let b: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = f.solve(&b);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
        let q = f.inv_quad_form(&b);
        let direct: f64 = b.iter().zip(&x).map(|(u, v)| u * v).sum();
        assert!((q - direct).abs() < 1e-10);
    }

    #[test]
    fn refactor_reuses_symbolic() {
        let a = laplacian_2d(5, 0.0);
        let sym = SymbolicCholesky::analyze(&a).unwrap();
        let b = a.scale(2.5);
        let fa = CholeskyFactor::factor(&sym, &a).unwrap();
        let fb = CholeskyFactor::factor(&sym, &b).unwrap();
        assert!((fb.log_det() - fa.log_det() - 25.0 * 2.5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(CholeskyFactor::new(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn sample_transform_has_inverse_covariance() {
        // Pᵀ L⁻ᵀ applied to unit vectors gives columns whose Gram matrix is A⁻¹
        let a = laplacian_2d(4, 0.5);
        let f = CholeskyFactor::new(&a).unwrap();
        let n = 16;
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                f.sample_transform(&e)
            })
            .collect();
        let inv = a.to_dense().try_inverse().unwrap();
        for i in 0..n {
            for j in 0..n {
                let g: f64 = cols.iter().map(|c| c[i] * c[j]).sum();
                assert!((g - inv[(i, j)]).abs() < 1e-10);
            }
        }
    }
}

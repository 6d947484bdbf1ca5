//! Sparse and dense linear algebra used by the assembly and solver layers:
//! CSR storage with a shareable pattern, an up-looking sparse LDLᵀ
//! factorization with reverse Cuthill-McKee ordering, preconditioned conjugate
//! gradients, deterministic (thread-count independent) reductions, and
//! symmetric eigendecomposition helpers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type DMat = DMatrix<f64>;
pub type DVec = DVector<f64>;

/// Sparsity structure of a square CSR matrix, shared between all matrices
/// assembled on the same mesh connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrPattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl CsrPattern {
    /// Builds a pattern from per-row column lists (sorted and deduplicated here).
    pub fn from_rows(n: usize, mut rows: Vec<Vec<usize>>) -> Self {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        CsrPattern { n, row_ptr, col_idx }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Index into the value array for entry (i, j), if present.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| lo + k)
    }
}

/// Square sparse matrix in CSR form; symmetric matrices store both triangles.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub pattern: Arc<CsrPattern>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let nnz = pattern.nnz();
        CsrMatrix { pattern, values: vec![0.0; nnz] }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn from_dense(a: &DMat) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| a[(i, j)] != 0.0).collect())
            .collect();
        let pattern = Arc::new(CsrPattern::from_rows(n, rows));
        let mut m = CsrMatrix::zeros(pattern);
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] != 0.0 {
                    let s = m.pattern.slot(i, j).unwrap();
                    m.values[s] = a[(i, j)];
                }
            }
        }
        m
    }

    pub fn to_dense(&self) -> DMat {
        let n = self.n();
        let mut a = DMat::zeros(n, n);
        for i in 0..n {
            for (k, &j) in self.pattern.row(i).iter().enumerate() {
                a[(i, j)] = self.values[self.pattern.row_ptr[i] + k];
            }
        }
        a
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for (i, out) in y.iter_mut().enumerate() {
            let lo = self.pattern.row_ptr[i];
            let hi = self.pattern.row_ptr[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.pattern.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &DVec) -> DVec {
        let mut y = DVec::zeros(self.n());
        self.matvec_into(x.as_slice(), y.as_mut_slice());
        y
    }

    /// y += w * A x, used to apply weighted sums of matrices without forming them.
    pub fn matvec_add_scaled(&self, x: &[f64], w: f64, y: &mut [f64]) {
        for (i, out) in y.iter_mut().enumerate() {
            let lo = self.pattern.row_ptr[i];
            let hi = self.pattern.row_ptr[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.pattern.col_idx[k]];
            }
            *out += w * acc;
        }
    }

    pub fn quad_form(&self, x: &DVec, y: &DVec) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for i in 0..n {
            let lo = self.pattern.row_ptr[i];
            let hi = self.pattern.row_ptr[i + 1];
            let mut row = 0.0;
            for k in lo..hi {
                row += self.values[k] * y[self.pattern.col_idx[k]];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.pattern.slot(i, i).map_or(0.0, |s| self.values[s]))
            .collect()
    }

    /// Restriction to the rows/columns in `keep` (kept order defines new ids).
    pub fn restrict(&self, keep: &[usize]) -> CsrMatrix {
        let mut new_id = vec![usize::MAX; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            new_id[old] = new;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(keep.len());
        for &old_i in keep {
            let lo = self.pattern.row_ptr[old_i];
            let row: Vec<(usize, f64)> = self
                .pattern
                .row(old_i)
                .iter()
                .enumerate()
                .filter(|&(_, &j)| new_id[j] != usize::MAX)
                .map(|(k, &j)| (new_id[j], self.values[lo + k]))
                .collect();
            rows.push(row);
        }
        let pattern = Arc::new(CsrPattern::from_rows(
            keep.len(),
            rows.iter().map(|r| r.iter().map(|&(j, _)| j).collect()).collect(),
        ));
        let mut m = CsrMatrix::zeros(pattern);
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                let s = m.pattern.slot(i, j).unwrap();
                m.values[s] = v;
            }
        }
        m
    }

    /// Restricts several matrices sharing this matrix's pattern to the same
    /// index set, producing outputs that share one new pattern (so a single
    /// symbolic factorization serves them all).
    pub fn restrict_all(mats: &[CsrMatrix], keep: &[usize]) -> Vec<CsrMatrix> {
        assert!(!mats.is_empty());
        let base = &mats[0].pattern;
        for m in mats {
            assert!(
                Arc::ptr_eq(&m.pattern, base) || m.pattern.as_ref() == base.as_ref(),
                "restrict_all requires a shared pattern"
            );
        }
        let mut new_id = vec![usize::MAX; base.n];
        for (new, &old) in keep.iter().enumerate() {
            new_id[old] = new;
        }
        // kept slots (old value index) per new row, plus the new pattern
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(keep.len());
        let mut slots: Vec<usize> = Vec::new();
        for &old_i in keep {
            let lo = base.row_ptr[old_i];
            let mut row = Vec::new();
            for (k, &j) in base.row(old_i).iter().enumerate() {
                if new_id[j] != usize::MAX {
                    row.push(new_id[j]);
                    slots.push(lo + k);
                }
            }
            rows.push(row);
        }
        let pattern = Arc::new(CsrPattern::from_rows(keep.len(), rows));
        mats.iter()
            .map(|m| {
                let values: Vec<f64> = slots.iter().map(|&s| m.values[s]).collect();
                CsrMatrix { pattern: Arc::clone(&pattern), values }
            })
            .collect()
    }

    /// Weighted sum Σ w_i A_i of structurally identical matrices.
    pub fn weighted_sum(mats: &[CsrMatrix], weights: &[f64]) -> CsrMatrix {
        assert_eq!(mats.len(), weights.len());
        assert!(!mats.is_empty());
        let mut out = CsrMatrix::zeros(mats[0].pattern.clone());
        for (m, &w) in mats.iter().zip(weights) {
            debug_assert_eq!(m.pattern.as_ref(), out.pattern.as_ref());
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += w * v;
            }
        }
        out
    }
}

/// Reverse Cuthill-McKee ordering of a symmetric pattern; returns `perm` with
/// `perm[new] = old`.
pub fn rcm_order(pattern: &CsrPattern) -> Vec<usize> {
    let n = pattern.n;
    let degree = |v: usize| pattern.row(v).len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    loop {
        // lowest-degree unvisited seed
        let seed = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| degree(v));
        let Some(seed) = seed else { break };
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> =
                pattern.row(v).iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree(u), u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Symbolic sparse LDLᵀ: fill-reducing permutation, elimination tree and
/// column counts, computed once per sparsity pattern and reused across
/// numeric refactorizations.
#[derive(Debug)]
pub struct LdlSymbolic {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// iperm[old] = new
    iperm: Vec<usize>,
    parent: Vec<isize>,
    l_colptr: Vec<usize>,
}

impl LdlSymbolic {
    pub fn new(pattern: &CsrPattern) -> Arc<Self> {
        Self::with_perm(pattern, rcm_order(pattern))
    }

    pub fn with_perm(pattern: &CsrPattern, perm: Vec<usize>) -> Arc<Self> {
        let n = pattern.n;
        assert_eq!(perm.len(), n);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut parent = vec![-1isize; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for k in 0..n {
            flag[k] = k;
            let old_k = perm[k];
            for &old_j in pattern.row(old_k) {
                let mut i = iperm[old_j];
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == -1 {
                        parent[i] = k as isize;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i] as usize;
                }
            }
        }
        let mut l_colptr = Vec::with_capacity(n + 1);
        l_colptr.push(0);
        for k in 0..n {
            l_colptr.push(l_colptr[k] + lnz[k]);
        }
        Arc::new(LdlSymbolic { n, perm, iperm, parent, l_colptr })
    }

    pub fn factor(self: &Arc<Self>, a: &CsrMatrix) -> Result<LdlNumeric> {
        let mut num = LdlNumeric::empty(self.clone());
        num.refactor(a)?;
        Ok(num)
    }
}

/// Numeric LDLᵀ factor; `refactor` reuses all allocations for repeated
/// factorizations with an unchanged pattern.
#[derive(Debug)]
pub struct LdlNumeric {
    sym: Arc<LdlSymbolic>,
    l_rowidx: Vec<usize>,
    l_values: Vec<f64>,
    d: Vec<f64>,
    // workspaces
    y: Vec<f64>,
    pattern_stack: Vec<usize>,
    flag: Vec<usize>,
    lnz_used: Vec<usize>,
}

impl LdlNumeric {
    fn empty(sym: Arc<LdlSymbolic>) -> Self {
        let n = sym.n;
        let nnz = sym.l_colptr[n];
        LdlNumeric {
            sym,
            l_rowidx: vec![0; nnz],
            l_values: vec![0.0; nnz],
            d: vec![0.0; n],
            y: vec![0.0; n],
            pattern_stack: vec![0; n],
            flag: vec![usize::MAX; n],
            lnz_used: vec![0; n],
        }
    }

    /// Up-looking numeric factorization of the (symmetric, positive definite)
    /// matrix `a`, which must have the pattern the symbolic stage was built on.
    pub fn refactor(&mut self, a: &CsrMatrix) -> Result<()> {
        let n = self.sym.n;
        let sym = self.sym.clone();
        self.flag.iter_mut().for_each(|f| *f = usize::MAX);
        self.lnz_used.iter_mut().for_each(|c| *c = 0);
        for k in 0..n {
            let old_k = sym.perm[k];
            self.flag[k] = k;
            let mut top = n;
            let lo = a.pattern.row_ptr[old_k];
            for (off, &old_j) in a.pattern.row(old_k).iter().enumerate() {
                let i = sym.iperm[old_j];
                if i > k {
                    continue;
                }
                self.y[i] += a.values[lo + off];
                // record the elimination-tree path from i up to the first
                // node already visited this step, then push it reversed so
                // the stack region [top..n) stays in topological order
                let mut len = 0;
                let mut node = i;
                while self.flag[node] != k {
                    self.pattern_stack[len] = node;
                    len += 1;
                    self.flag[node] = k;
                    node = sym.parent[node] as usize;
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    self.pattern_stack[top] = self.pattern_stack[len];
                }
            }
            let mut dk = self.y[k];
            self.y[k] = 0.0;
            for s in top..n {
                let i = self.pattern_stack[s];
                let yi = self.y[i];
                self.y[i] = 0.0;
                let p0 = sym.l_colptr[i];
                let p1 = p0 + self.lnz_used[i];
                for p in p0..p1 {
                    self.y[self.l_rowidx[p]] -= self.l_values[p] * yi;
                }
                let lki = yi / self.d[i];
                dk -= lki * yi;
                self.l_rowidx[p1] = k;
                self.l_values[p1] = lki;
                self.lnz_used[i] += 1;
            }
            if !(dk > 0.0) {
                // leave the workspace clean for a later refactor attempt
                self.y.iter_mut().for_each(|v| *v = 0.0);
                return Err(Error::solver(format!(
                    "matrix is not positive definite (pivot {dk:e} at elimination step {k})"
                )));
            }
            self.d[k] = dk;
        }
        Ok(())
    }

    pub fn solve(&self, b: &DVec) -> DVec {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.sym.n;
        let mut z = vec![0.0; n];
        for k in 0..n {
            z[k] = b[self.sym.perm[k]];
        }
        // L z' = z (unit lower triangular, stored by column)
        for k in 0..n {
            let zk = z[k];
            let p0 = self.sym.l_colptr[k];
            let p1 = self.sym.l_colptr[k + 1];
            for p in p0..p1 {
                z[self.l_rowidx[p]] -= self.l_values[p] * zk;
            }
        }
        for (zk, dk) in z.iter_mut().zip(&self.d) {
            *zk /= dk;
        }
        // Lᵀ x = z
        for k in (0..n).rev() {
            let p0 = self.sym.l_colptr[k];
            let p1 = self.sym.l_colptr[k + 1];
            let mut acc = z[k];
            for p in p0..p1 {
                acc -= self.l_values[p] * z[self.l_rowidx[p]];
            }
            z[k] = acc;
        }
        for k in 0..n {
            b[self.sym.perm[k]] = z[k];
        }
    }
}

/// Preconditioned conjugate gradients for an abstract SPD operator.
/// Returns the solution and the iteration count.
pub fn cg_solve(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::solver(format!(
                "conjugate gradients hit a non-positive curvature direction (pᵀAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_r <= rel_tol * norm_b {
            return Ok((x, it + 1));
        }
        precond(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::solver(format!(
        "conjugate gradients did not reach relative tolerance {rel_tol:e} in {max_iter} iterations"
    )))
}

const SUM_CHUNK: usize = 1024;

/// Chunked sequential summation: a fixed association order that is independent
/// of thread count, so every statistic in the crate is bit-reproducible.
pub fn det_sum(xs: &[f64]) -> f64 {
    if xs.len() <= SUM_CHUNK {
        return xs.iter().sum();
    }
    xs.chunks(SUM_CHUNK).map(|c| c.iter().sum::<f64>()).sum()
}

pub fn det_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    det_sum(xs) / xs.len() as f64
}

/// Mean of `f(i)` over accepted indices with the deterministic association.
pub fn det_mean_map(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let vals: Vec<f64> = (0..n).map(f).collect();
    det_mean(&vals)
}

/// Symmetric eigendecomposition sorted by descending eigenvalue.
pub fn sym_eigen_desc(a: &DMat) -> (Vec<f64>, DMat) {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMat::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &eig.eigenvectors.column(old));
    }
    (values, vectors)
}

/// Leading eigenpairs of a large symmetric PSD matrix by blocked subspace
/// iteration with Rayleigh-Ritz projection. `want(values)` reports how many
/// leading pairs the caller needs (it may inspect the current Ritz values);
/// the block grows until that many converge.
pub fn subspace_eigs(
    a: &DMat,
    want: impl Fn(&[f64]) -> usize,
    seed: u64,
) -> Result<(Vec<f64>, DMat)> {
    use rand::prelude::*;
    let n = a.nrows();
    let mut block = 32.min(n);
    loop {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = DMat::from_fn(n, block, |_, _| rng.random::<f64>() - 0.5);
        let mut prev: Option<Vec<f64>> = None;
        let mut ritz = Vec::new();
        let mut converged = false;
        for _ in 0..300 {
            let qr = v.qr();
            let q = qr.q();
            let aq = a * &q;
            let t = q.transpose() * &aq;
            let (vals, vecs) = sym_eigen_desc(&t);
            v = &aq * &vecs; // next iterate: A Q W (power step included)
            ritz = vals;
            let k = want(&ritz).min(block);
            if let Some(p) = &prev {
                let ok = (0..k).all(|i| {
                    let denom = ritz[0].max(1e-300);
                    (ritz[i] - p[i]).abs() <= 1e-10 * denom
                });
                if ok && k + 4 <= block {
                    converged = true;
                    // one final orthonormalization pass for clean vectors
                    let qr = (a * q.columns(0, block).into_owned()).qr();
                    let q = qr.q();
                    let t = q.transpose() * (a * &q);
                    let (vals, vecs) = sym_eigen_desc(&t);
                    let full = &q * &vecs;
                    ritz = vals;
                    v = full;
                    break;
                }
            }
            prev = Some(ritz.clone());
        }
        let k = want(&ritz).min(block);
        if converged && k + 4 <= block {
            let vectors = v.columns(0, k).into_owned();
            ritz.truncate(k);
            return Ok((ritz, vectors));
        }
        if block >= n {
            return Err(Error::field(
                "iterative eigensolver failed to converge on the covariance matrix",
            ));
        }
        block = (block * 2).min(n);
    }
}

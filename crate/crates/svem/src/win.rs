//! Weakly intrusive iterative solver.
//!
//! The solution is built as a low-rank separated series `u(θ) ≈ Σ_k λ_k(θ)
//! d_k` with orthonormal deterministic vectors `d_k` and scalar random
//! coefficients `λ_k` represented by their sample values. Each term is found
//! by an alternating iteration: a deterministic solve for `d_k` with the
//! current `λ_k` samples fixed, then a closed-form sample-wise update of
//! `λ_k` with `d_k` fixed. All sample-dependent quantities stay scalar
//! vectors — per-sample matrices are never formed — so the cost per term is
//! insensitive to the number of random inputs. A final reduced-order
//! recalculation solves one k×k system per sample, replacing the
//! iteration-history coefficients with their Galerkin-optimal values.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{det_mean, det_mean_map, sym_eigen_desc, CsrMatrix, DMat, DVec, LdlSymbolic};
use crate::random_field::SampleBatch;
use crate::svee::SeparatedSystem;

/// Initialization of the λ sample vector for each new term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaInit {
    /// All-ones start (the default; the iteration is insensitive to it).
    Ones,
    /// Standard-normal start from a seeded generator, for robustness checks.
    Seeded(u64),
}

/// Options for the weakly intrusive iteration.
#[derive(Debug, Clone)]
pub struct WinOptions {
    /// Inner (alternating) tolerance on `2 − 2 d_newᵀd_old`.
    pub eps_d: f64,
    /// Outer tolerance on the spectral energy ratio of the newest term.
    pub eps_u: f64,
    /// Inner iteration cap per term (failure detector, not a tuning knob).
    pub max_inner: usize,
    /// Cap on retained terms.
    pub max_terms: usize,
    pub init: LambdaInit,
}

impl Default for WinOptions {
    fn default() -> Self {
        WinOptions {
            eps_d: 1e-3,
            eps_u: 1e-6,
            max_inner: 50,
            max_terms: 50,
            init: LambdaInit::Ones,
        }
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    /// Term index (1-based).
    pub term: usize,
    /// Outer error after committing this term.
    pub eps_u: f64,
    /// Inner iterations the term needed.
    pub inner_iterations: usize,
    /// Wall time spent on the term, in seconds.
    pub seconds: f64,
}

/// Converged separated expansion on the free DoFs.
#[derive(Debug, Clone)]
pub struct WinSolution {
    /// Orthonormal deterministic vectors, one per retained term.
    d: Vec<DVec>,
    /// Recalculated coefficient samples, accepted rows × terms.
    lambda: DMat,
    /// Original batch indices of the accepted rows of `lambda`.
    accepted: Vec<usize>,
    trace: Vec<TraceRow>,
}

impl WinSolution {
    /// Number of retained terms k.
    pub fn n_terms(&self) -> usize {
        self.d.len()
    }

    /// Orthonormal term vectors d₁..d_k (free DoFs).
    pub fn vectors(&self) -> &[DVec] {
        &self.d
    }

    /// Coefficient samples: row per accepted sample, column per term.
    pub fn lambda(&self) -> &DMat {
        &self.lambda
    }

    pub fn accepted_indices(&self) -> &[usize] {
        &self.accepted
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// Solution sample for the `row`-th accepted sample: `Σ_i λ[row,i] d_i`.
    pub fn evaluate_accepted(&self, row: usize) -> DVec {
        let mut u = DVec::zeros(self.d[0].len());
        for (i, d) in self.d.iter().enumerate() {
            u.axpy(self.lambda[(row, i)], d, 1.0);
        }
        u
    }

    /// Sample mean of the expansion over the accepted rows.
    pub fn mean(&self) -> DVec {
        let n_acc = self.lambda.nrows();
        let mut u = DVec::zeros(self.d[0].len());
        for (i, d) in self.d.iter().enumerate() {
            let col: Vec<f64> = (0..n_acc).map(|s| self.lambda[(s, i)]).collect();
            u.axpy(det_mean(&col), d, 1.0);
        }
        u
    }
}

/// Inner iteration error between two normalized direction vectors:
/// `‖d_new − d_old‖² = 2 − 2 d_newᵀd_old ∈ [0, 4]`.
pub fn inner_error(d_new: &DVec, d_old: &DVec) -> f64 {
    2.0 - 2.0 * d_new.dot(d_old)
}

/// Outer error of the newest term: the coefficient sample matrix's
/// autocorrelation `Ê{ΛΛᵀ}` is eigendecomposed and the smallest (k-th,
/// descending) eigenvalue is compared against the total spectral energy.
pub fn outer_error(lambda_cols: &[Vec<f64>]) -> Result<f64> {
    let k = lambda_cols.len();
    assert!(k >= 1);
    let mut c = DMat::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = det_mean_map(lambda_cols[a].len(), |s| {
                lambda_cols[a][s] * lambda_cols[b][s]
            });
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    let (vals, _) = sym_eigen_desc(&c);
    let trace: f64 = vals.iter().sum();
    let z_k = vals[k - 1].max(0.0);
    let eps = if trace > 0.0 { z_k / trace } else { f64::NAN };
    if !eps.is_finite() {
        return Err(Error::solver(
            "coefficient autocorrelation produced a non-finite outer error",
        ));
    }
    Ok(eps)
}

/// Per-sample input tables extracted once from a batch: stiffness
/// coefficients `ξ_i` (including the constant ξ₀ ≡ 1) and load coefficients,
/// accepted rows only.
struct SampleTables {
    /// `xi[i][s]`, i = 0..=m.
    xi: Vec<Vec<f64>>,
    /// One coefficient vector per stochastic force column, aligned with
    /// `SeparatedSystem::f_cols_free`.
    eta: Vec<Vec<f64>>,
    accepted: Vec<usize>,
}

impl SampleTables {
    fn build(system: &SeparatedSystem, batch: &SampleBatch) -> Result<Self> {
        if batch.n_field() != system.m() {
            return Err(Error::solver(format!(
                "sample batch has {} field coefficients but the system has {} stiffness modes",
                batch.n_field(),
                system.m()
            )));
        }
        let accepted = batch.accepted_indices();
        if accepted.is_empty() {
            return Err(Error::solver("no accepted samples in the batch"));
        }
        let m = system.m();
        let xi = (0..=m)
            .map(|i| accepted.iter().map(|&s| batch.stiffness_coeffs(s)[i]).collect())
            .collect();
        let eta = system
            .f_cols_free()
            .iter()
            .map(|&(q, _)| accepted.iter().map(|&s| batch.extra(s, q)).collect())
            .collect();
        Ok(SampleTables { xi, eta, accepted })
    }

    fn n_acc(&self) -> usize {
        self.accepted.len()
    }
}

/// Runs the double-loop iteration and the final recalculation.
pub fn solve_win(
    system: &SeparatedSystem,
    batch: &SampleBatch,
    opts: &WinOptions,
) -> Result<WinSolution> {
    if !(opts.eps_d > 0.0) || !(opts.eps_u > 0.0) {
        return Err(Error::config("iteration tolerances must be positive"));
    }
    let tables = SampleTables::build(system, batch)?;
    let n_acc = tables.n_acc();
    let m = system.m();
    let k_free = system.k_free();
    let f0 = system.f0_free();
    let f_cols = system.f_cols_free();
    let n = system.n_free();
    if n == 0 {
        return Err(Error::solver("no free DoFs: everything is constrained"));
    }
    let force_scale = f0.norm() + f_cols.iter().map(|(_, c)| c.norm()).sum::<f64>();
    if force_scale == 0.0 {
        return Err(Error::solver("all loads are zero — the solution is identically zero"));
    }

    let symbolic = LdlSymbolic::new(&k_free[0].pattern);
    let mut d_list: Vec<DVec> = Vec::new();
    // kd[j][i] = K_i d_j, cached when term j is committed
    let mut kd: Vec<Vec<DVec>> = Vec::new();
    // iteration-history coefficient samples per committed term
    let mut lam_hist: Vec<Vec<f64>> = Vec::new();
    let mut trace: Vec<TraceRow> = Vec::new();

    // dense accepted-sample coefficient matrices for the per-sample update
    let xi_mat = DMat::from_fn(n_acc, m + 1, |s, i| tables.xi[i][s]);
    let eta_mat = DMat::from_fn(n_acc, f_cols.len(), |s, q| tables.eta[q][s]);
    // per-sample scratch, reused across iterations
    let mut lam2 = vec![0.0; n_acc];
    let mut prod = vec![0.0; n_acc];
    let mut hist_w = vec![0.0; n_acc];
    let mut num = vec![0.0; n_acc];
    let mut den = DVec::zeros(n_acc);
    let mut shift = DVec::zeros(n_acc);

    'outer: for term in 1..=opts.max_terms {
        let started = Instant::now();
        let mut coupling = DMat::zeros(n_acc, kd.len());
        let mut lam: Vec<f64> = match opts.init {
            LambdaInit::Ones => vec![1.0; n_acc],
            LambdaInit::Seeded(seed) => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed ^ term as u64);
                (0..n_acc).map(|_| StandardNormal.sample(&mut rng)).collect()
            }
        };
        let mut d_prev: Option<DVec> = None;
        let mut d_cur = DVec::zeros(n);
        let mut inner_iterations = 0;

        for _ in 0..opts.max_inner {
            inner_iterations += 1;

            // deterministic reduced matrix: Σ_i Ê{ξ_i λ²} K_i
            for (p, &l) in lam2.iter_mut().zip(&lam) {
                *p = l * l;
            }
            let weights: Vec<f64> = tables
                .xi
                .iter()
                .map(|xi_i| {
                    for ((p, &x), &l2) in prod.iter_mut().zip(xi_i).zip(&lam2) {
                        *p = x * l2;
                    }
                    det_mean(&prod)
                })
                .collect();
            let k_win = CsrMatrix::weighted_sum(k_free, &weights);

            // reduced right-hand side: Ê{λ F} − Σ_j Σ_i Ê{ξ_i λ_j λ} K_i d_j
            let mut rhs = f0 * det_mean(&lam);
            for ((_, col), eta) in f_cols.iter().zip(&tables.eta) {
                for ((p, &e), &l) in prod.iter_mut().zip(eta).zip(&lam) {
                    *p = e * l;
                }
                rhs.axpy(det_mean(&prod), col, 1.0);
            }
            for (lam_j, kd_j) in lam_hist.iter().zip(&kd) {
                for ((w, &lj), &l) in hist_w.iter_mut().zip(lam_j).zip(&lam) {
                    *w = lj * l;
                }
                for (xi_i, kd_ji) in tables.xi.iter().zip(kd_j) {
                    for ((p, &x), &w) in prod.iter_mut().zip(xi_i).zip(&hist_w) {
                        *p = x * w;
                    }
                    rhs.axpy(-det_mean(&prod), kd_ji, 1.0);
                }
            }

            // the remaining load carries no energy: the expansion is complete
            if inner_iterations == 1 && rhs.norm() <= 1e-12 * force_scale {
                break 'outer;
            }

            let factor = symbolic.factor(&k_win).map_err(|_| {
                Error::solver(format!(
                    "the λ²-weighted reduced matrix for term {term} is not positive \
                     definite — the weighted material lost coercivity"
                ))
            })?;
            let mut d_raw = factor.solve(&rhs);

            // orthonormalize against the committed terms
            let raw_norm = d_raw.norm();
            for d_j in &d_list {
                let c = d_j.dot(&d_raw);
                d_raw.axpy(-c, d_j, 1.0);
            }
            let orth_norm = d_raw.norm();
            if orth_norm <= 1e-10 * raw_norm {
                // new direction is linearly dependent on the committed ones
                break 'outer;
            }
            d_cur = d_raw / orth_norm;

            // sample-wise coefficient update:
            // λ(θ̂) = dᵀF_k(θ̂) / Σ_i ξ_i(θ̂)(dᵀK_i d)
            let a = DVec::from_iterator(
                m + 1,
                k_free.iter().map(|ki| ki.quad_form(&d_cur, &d_cur)),
            );
            let f0d = d_cur.dot(f0);
            let fqd = DVec::from_iterator(
                f_cols.len(),
                f_cols.iter().map(|(_, col)| d_cur.dot(col)),
            );
            // b[(i, j)] = dᵀ(K_i d_j)
            let b = DMat::from_fn(m + 1, kd.len(), |i, j| d_cur.dot(&kd[j][i]));
            // coupling[(s, j)] = Σ_i ξ_i(θ̂_s) b_ij, den = Σ_i ξ_i(θ̂_s) a_i
            xi_mat.mul_to(&b, &mut coupling);
            xi_mat.mul_to(&a, &mut den);
            num.fill(f0d);
            if !f_cols.is_empty() {
                eta_mat.mul_to(&fqd, &mut shift);
                for (n, &v) in num.iter_mut().zip(shift.iter()) {
                    *n += v;
                }
            }
            for (j, lam_j) in lam_hist.iter().enumerate() {
                let col = coupling.column(j);
                for ((n, &lj), &c) in num.iter_mut().zip(lam_j).zip(col.iter()) {
                    *n -= lj * c;
                }
            }
            if let Some(s) = (0..n_acc).find(|&s| !(den[s] > 0.0)) {
                return Err(Error::solver(format!(
                    "non-positive stiffness quadratic form ({:e}) at sample {} — \
                     the per-sample matrix is not positive definite",
                    den[s],
                    tables.accepted[s]
                )));
            }
            for ((l, &n), &d) in lam.iter_mut().zip(&num).zip(den.iter()) {
                *l = n / d;
            }

            if let Some(prev) = &d_prev {
                if inner_error(&d_cur, prev) < opts.eps_d {
                    break;
                }
            }
            d_prev = Some(d_cur.clone());
        }

        // commit the term
        kd.push(k_free.iter().map(|ki| ki.matvec(&d_cur)).collect());
        d_list.push(d_cur.clone());
        lam_hist.push(lam);

        let eps_u = outer_error(&lam_hist)?;
        trace.push(TraceRow {
            term,
            eps_u,
            inner_iterations,
            seconds: started.elapsed().as_secs_f64(),
        });
        if eps_u < opts.eps_u {
            break;
        }
    }

    if d_list.is_empty() {
        return Err(Error::solver(
            "the load vector is numerically zero over the sample set — nothing to expand",
        ));
    }

    let lambda = recalculate(&d_list, &kd, f0, f_cols, &tables)?;
    Ok(WinSolution { d: d_list, lambda, accepted: tables.accepted, trace })
}

/// Reduced-order recalculation: per accepted sample, solves the k×k Galerkin
/// system `[DᵀK(θ̂)D] Λ = DᵀF(θ̂)` built from precomputed tables.
fn recalculate(
    d_list: &[DVec],
    kd: &[Vec<DVec>],
    f0: &DVec,
    f_cols: &[(usize, DVec)],
    tables: &SampleTables,
) -> Result<DMat> {
    let k = d_list.len();
    let n_acc = tables.n_acc();
    let n_modes = tables.xi.len();
    // g[i][(a, b)] = d_aᵀ K_i d_b
    let g: Vec<DMat> = (0..n_modes)
        .map(|i| {
            let mut gi = DMat::zeros(k, k);
            for a in 0..k {
                for b in 0..k {
                    gi[(a, b)] = d_list[a].dot(&kd[b][i]);
                }
            }
            gi
        })
        .collect();
    let r0: Vec<f64> = d_list.iter().map(|d| d.dot(f0)).collect();
    let rq: Vec<Vec<f64>> = f_cols
        .iter()
        .map(|(_, col)| d_list.iter().map(|d| d.dot(col)).collect())
        .collect();

    let rows: Vec<Result<Vec<f64>>> = (0..n_acc)
        .into_par_iter()
        .map(|s| {
            let mut m = DMat::zeros(k, k);
            for (xi_i, gi) in tables.xi.iter().zip(&g) {
                let x = xi_i[s];
                for (dst, &src) in m.iter_mut().zip(gi.iter()) {
                    *dst += x * src;
                }
            }
            let mut rhs = DVec::from_column_slice(&r0);
            for (rq_q, eta) in rq.iter().zip(&tables.eta) {
                for a in 0..k {
                    rhs[a] += eta[s] * rq_q[a];
                }
            }
            let chol = m.cholesky().ok_or_else(|| {
                Error::solver(format!(
                    "reduced matrix is not positive definite at sample {}",
                    tables.accepted[s]
                ))
            })?;
            Ok(chol.solve(&rhs).as_slice().to_vec())
        })
        .collect();
    let mut lambda = DMat::zeros(n_acc, k);
    for (s, row) in rows.into_iter().enumerate() {
        for (a, v) in row?.into_iter().enumerate() {
            lambda[(s, a)] = v;
        }
    }
    Ok(lambda)
}

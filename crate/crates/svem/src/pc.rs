//! Polynomial-chaos stochastic Galerkin solver.
//!
//! The solution is expanded as `u(θ) = Σ_{i=1}^k d_i Γ_i(θ)` over an
//! orthonormal polynomial basis in all random inputs jointly (field
//! coefficients first, then extra load inputs). Galerkin projection of the
//! separated system produces one coupled block system
//! `Σ_l E[ξ_l Γ_j Γ_i] K_l d_i = E[Γ_j F]`, solved directly when small and by
//! conjugate gradients with a block-Jacobi preconditioner otherwise.
//! Expectations of polynomial integrands are evaluated exactly with Gauss
//! quadrature.

use crate::error::{Error, Result};
use crate::linalg::{cg_solve, CsrMatrix, DMat, DVec, LdlSymbolic};
use crate::random_field::{Distribution, SampleBatch};
use crate::svee::SeparatedSystem;

/// Univariate orthonormal polynomial family (with its probability measure).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Probabilists' Hermite, orthonormal under the standard normal.
    Hermite,
    /// Shifted Legendre, orthonormal under the uniform measure on [0, 1].
    Legendre01,
}

impl From<Distribution> for Family {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::Gaussian => Family::Hermite,
            Distribution::Uniform01 => Family::Legendre01,
        }
    }
}

impl Family {
    /// Values `p_0(x) .. p_max_deg(x)` of the orthonormal polynomials.
    pub fn eval_all(&self, max_deg: usize, x: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(max_deg + 1);
        match self {
            Family::Hermite => {
                p.push(1.0);
                if max_deg >= 1 {
                    p.push(x);
                }
                for n in 1..max_deg {
                    let next =
                        (x * p[n] - (n as f64).sqrt() * p[n - 1]) / ((n + 1) as f64).sqrt();
                    p.push(next);
                }
            }
            Family::Legendre01 => {
                // standard Legendre in t = 2x−1, then normalize by √(2n+1)
                let t = 2.0 * x - 1.0;
                let mut legendre = Vec::with_capacity(max_deg + 1);
                legendre.push(1.0);
                if max_deg >= 1 {
                    legendre.push(t);
                }
                for n in 1..max_deg {
                    let nf = n as f64;
                    let next =
                        ((2.0 * nf + 1.0) * t * legendre[n] - nf * legendre[n - 1]) / (nf + 1.0);
                    legendre.push(next);
                }
                for (n, v) in legendre.into_iter().enumerate() {
                    p.push((2.0 * n as f64 + 1.0).sqrt() * v);
                }
            }
        }
        p
    }

    /// Gauss rule with `n` points for this family's measure: exact for
    /// polynomials up to degree `2n−1`, weights sum to 1.
    pub fn gauss_rule(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        assert!(n >= 1);
        // Golub-Welsch: eigen-decompose the Jacobi matrix of the three-term
        // recurrence; nodes are eigenvalues, weights are squared first
        // eigenvector components.
        let mut jac = DMat::zeros(n, n);
        for i in 1..n {
            let b = match self {
                Family::Hermite => (i as f64).sqrt(),
                Family::Legendre01 => {
                    let k = i as f64;
                    k / (4.0 * k * k - 1.0).sqrt()
                }
            };
            jac[(i - 1, i)] = b;
            jac[(i, i - 1)] = b;
        }
        let eig = jac.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (mut nodes, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if *self == Family::Legendre01 {
            for x in &mut nodes {
                *x = (*x + 1.0) / 2.0;
            }
        }
        (nodes, weights)
    }
}

/// Orthonormal polynomial basis over all random inputs.
#[derive(Debug, Clone)]
pub struct PcBasis {
    families: Vec<Family>,
    order: usize,
    /// Multi-indices, lexicographic, zero first; `indices[i][d]` is the
    /// degree in dimension `d` of basis function `i`.
    indices: Vec<Vec<usize>>,
}

/// Number of multivariate basis polynomials of total degree ≤ r in m
/// dimensions: `(m+r)! / (m! r!)`. Errors if the count exceeds `cap`.
pub fn basis_count(m: usize, r: usize, cap: usize) -> Result<usize> {
    let mut k: usize = 1;
    for i in 1..=r {
        k = k
            .checked_mul(m + i)
            .ok_or_else(|| Error::config("polynomial basis count overflows"))?
            / i;
        if k > cap {
            return Err(Error::config(format!(
                "polynomial basis count exceeds the cap ({k} > {cap}) — \
                 reduce the order or the number of random inputs"
            )));
        }
    }
    Ok(k)
}

fn lex_indices(m: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; m];
    fn rec(d: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if d == current.len() {
            out.push(current.clone());
            return;
        }
        for deg in 0..=left {
            current[d] = deg;
            rec(d + 1, left - deg, current, out);
        }
        current[d] = 0;
    }
    rec(0, r, &mut current, &mut out);
    out
}

impl PcBasis {
    /// A basis over zero dimensions degenerates to the single constant
    /// polynomial, which keeps fully deterministic problems representable.
    pub fn new(families: Vec<Family>, order: usize, cap: usize) -> Result<Self> {
        let m = families.len();
        let k = basis_count(m, order, cap)?;
        let indices = lex_indices(m, order);
        debug_assert_eq!(indices.len(), k);
        Ok(PcBasis { families, order, indices })
    }

    /// Basis dimensions m (random inputs).
    pub fn dims(&self) -> usize {
        self.families.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Basis size k.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    /// Values of all k basis polynomials at one point of the joint input
    /// space (`point.len() == dims`).
    pub fn eval_point(&self, point: &[f64]) -> Vec<f64> {
        assert_eq!(point.len(), self.dims());
        let uni: Vec<Vec<f64>> = self
            .families
            .iter()
            .zip(point)
            .map(|(fam, &x)| fam.eval_all(self.order, x))
            .collect();
        self.indices
            .iter()
            .map(|alpha| alpha.iter().zip(&uni).map(|(&deg, p)| p[deg]).product())
            .collect()
    }

    /// Expectation tables `(c_v)_ij = E[x_v Γ_i Γ_j]` for one input dimension
    /// `v`, plus `c₀ = E[Γ_i Γ_j] = I` for `v = None`.
    ///
    /// The product measure factorizes the expectation into univariate
    /// integrals `∫ x^s p_a p_b dμ_d` (s ∈ {0,1}), evaluated exactly by a
    /// Gauss rule with `order+1` points.
    pub fn expectation_table(&self, var: Option<usize>) -> DMat {
        let k = self.len();
        let r = self.order;
        // univariate moment tables per dimension: plain[a][b] = ∫ p_a p_b,
        // weighted[a][b] = ∫ x p_a p_b
        let tables: Vec<(DMat, DMat)> = self
            .families
            .iter()
            .map(|fam| {
                let (nodes, weights) = fam.gauss_rule(r + 1);
                let mut plain = DMat::zeros(r + 1, r + 1);
                let mut weighted = DMat::zeros(r + 1, r + 1);
                for (&x, &w) in nodes.iter().zip(&weights) {
                    let p = fam.eval_all(r, x);
                    for a in 0..=r {
                        for b in 0..=r {
                            plain[(a, b)] += w * p[a] * p[b];
                            weighted[(a, b)] += w * x * p[a] * p[b];
                        }
                    }
                }
                (plain, weighted)
            })
            .collect();
        let mut c = DMat::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let mut v = 1.0;
                for (d, (plain, weighted)) in tables.iter().enumerate() {
                    let (a, b) = (self.indices[i][d], self.indices[j][d]);
                    v *= if var == Some(d) { weighted[(a, b)] } else { plain[(a, b)] };
                    if v == 0.0 {
                        break;
                    }
                }
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        c
    }

    /// Basis values at every accepted sample row of a batch: `Λ[s][i] =
    /// Γ_i(θ̂_s)`, rows in accepted order.
    pub fn eval_batch(&self, batch: &SampleBatch) -> DMat {
        let accepted = batch.accepted_indices();
        let k = self.len();
        let mut lambda = DMat::zeros(accepted.len(), k);
        for (row, &s) in accepted.iter().enumerate() {
            let vals = self.eval_point(&batch.row(s)[1..]);
            for i in 0..k {
                lambda[(row, i)] = vals[i];
            }
        }
        lambda
    }

    /// Builds the joint basis matching a sample batch: one dimension per
    /// field coefficient (from the field distribution) followed by one per
    /// extra input.
    pub fn for_batch(batch: &SampleBatch, order: usize, cap: usize) -> Result<Self> {
        let mut families = vec![Family::from(batch.field_distribution()); batch.n_field()];
        families.extend(batch.extras().iter().map(|e| Family::from(e.distribution)));
        PcBasis::new(families, order, cap)
    }
}

/// Options for the polynomial-chaos Galerkin solve.
#[derive(Debug, Clone)]
pub struct PcOptions {
    /// Total polynomial order r.
    pub order: usize,
    /// Cap on the basis size k (guards combinatorial explosion).
    pub max_basis: usize,
    /// Solve the coupled system densely when its total size `n_free·k` is at
    /// most this; otherwise use preconditioned conjugate gradients.
    pub direct_limit: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for PcOptions {
    fn default() -> Self {
        PcOptions {
            order: 2,
            max_basis: 100_000,
            direct_limit: 1000,
            cg_tol: 1e-10,
            cg_max_iter: 20_000,
        }
    }
}

/// Polynomial-chaos solution: one deterministic coefficient vector per basis
/// polynomial, on the free DoFs.
#[derive(Debug, Clone)]
pub struct PcSolution {
    pub basis: PcBasis,
    /// `d_i`, i = 0..k-1 (index 0 pairs with Γ₀ ≡ 1).
    pub coeffs: Vec<DVec>,
    /// CG iterations used (0 for the direct path).
    pub iterations: usize,
}

impl PcSolution {
    /// Evaluates the expansion at one joint input point (sample row without
    /// the leading constant).
    pub fn evaluate(&self, point: &[f64]) -> DVec {
        let gamma = self.basis.eval_point(point);
        let n = self.coeffs[0].len();
        let mut u = DVec::zeros(n);
        for (d, &g) in self.coeffs.iter().zip(&gamma) {
            u.axpy(g, d, 1.0);
        }
        u
    }

    /// Closed-form mean of the expansion (the Γ₀ coefficient).
    pub fn mean(&self) -> DVec {
        self.coeffs[0].clone()
    }

    /// Closed-form pointwise variance `Σ_{i≥1} d_i²` (orthonormal basis).
    pub fn variance(&self) -> DVec {
        let n = self.coeffs[0].len();
        let mut v = DVec::zeros(n);
        for d in &self.coeffs[1..] {
            v += d.component_mul(d);
        }
        v
    }
}

/// Assembles and solves the stochastic Galerkin system for the given
/// separated system and sample batch (the batch fixes the input dimensions
/// and distributions; its rows are not otherwise used by the solve).
pub fn solve_pc(
    system: &SeparatedSystem,
    batch: &SampleBatch,
    opts: &PcOptions,
) -> Result<PcSolution> {
    if batch.n_field() != system.m() {
        return Err(Error::solver(format!(
            "sample batch has {} field coefficients but the system has {} stiffness modes",
            batch.n_field(),
            system.m()
        )));
    }
    let basis = PcBasis::for_batch(batch, opts.order, opts.max_basis)?;
    let k = basis.len();
    let n = system.n_free();
    if n == 0 {
        return Err(Error::solver("no free DoFs: everything is constrained"));
    }

    // expectation tables: c_l for stiffness (l = 0 is the identity), and the
    // first rows of the extra-input tables for the force pairing
    let m = system.m();
    let mut c_stiff: Vec<DMat> = Vec::with_capacity(m + 1);
    c_stiff.push(DMat::identity(k, k));
    for l in 0..m {
        c_stiff.push(basis.expectation_table(Some(l)));
    }

    // rhs blocks: E[Γ_j F] = δ_{j0} F₀ + Σ_q E[x_{m+q} Γ_j] F_q
    let mut rhs = DVec::zeros(n * k);
    rhs.rows_mut(0, n).copy_from(system.f0_free());
    for (extra, col) in system.f_cols_free() {
        let table = basis.expectation_table(Some(m + extra));
        for j in 0..k {
            let w = table[(0, j)];
            if w != 0.0 {
                let mut block = rhs.rows_mut(j * n, n);
                block.axpy(w, col, 1.0);
            }
        }
    }

    let k_free = system.k_free();
    let apply = |x: &[f64], y: &mut [f64]| {
        y.fill(0.0);
        // t_{l,j} = Σ_i (c_l)_{ij} x_i, then y_j += K_l t_{l,j}
        let mut t = vec![0.0; n];
        for (l, c) in c_stiff.iter().enumerate() {
            for j in 0..k {
                t.fill(0.0);
                let mut any = false;
                for i in 0..k {
                    let w = c[(i, j)];
                    if w != 0.0 {
                        any = true;
                        for (tv, &xv) in t.iter_mut().zip(&x[i * n..(i + 1) * n]) {
                            *tv += w * xv;
                        }
                    }
                }
                if any {
                    k_free[l].matvec_add_scaled(&t, 1.0, &mut y[j * n..(j + 1) * n]);
                }
            }
        }
    };

    let (solution, iterations) = if n * k <= opts.direct_limit {
        // dense assembly of the coupled system
        let mut big = DMat::zeros(n * k, n * k);
        let dense: Vec<DMat> = k_free.iter().map(|kk| kk.to_dense()).collect();
        for (c, kd) in c_stiff.iter().zip(&dense) {
            for i in 0..k {
                for j in 0..k {
                    let w = c[(i, j)];
                    if w != 0.0 {
                        let mut block = big.view_mut((j * n, i * n), (n, n));
                        for (dst, &src) in block.iter_mut().zip(kd.iter()) {
                            *dst += w * src;
                        }
                    }
                }
            }
        }
        let sol = big
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::solver("coupled polynomial-chaos system is singular"))?;
        (sol.as_slice().to_vec(), 0)
    } else {
        // block-Jacobi preconditioner: factor the diagonal blocks
        // Σ_l (c_l)_{jj} K_l with one shared symbolic factorization
        let symbolic = LdlSymbolic::new(&k_free[0].pattern);
        let mut factors = Vec::with_capacity(k);
        for j in 0..k {
            let weights: Vec<f64> = c_stiff.iter().map(|c| c[(j, j)]).collect();
            let kjj = CsrMatrix::weighted_sum(k_free, &weights);
            factors.push(symbolic.factor(&kjj).map_err(|_| {
                Error::solver("a diagonal block of the polynomial-chaos system is not SPD")
            })?);
        }
        let precond = |r: &[f64], z: &mut [f64]| {
            z.copy_from_slice(r);
            for (factor, block) in factors.iter().zip(z.chunks_mut(n)) {
                factor.solve_in_place(block);
            }
        };
        cg_solve(apply, precond, rhs.as_slice(), opts.cg_tol, opts.cg_max_iter)?
    };

    let coeffs: Vec<DVec> = (0..k)
        .map(|i| DVec::from_column_slice(&solution[i * n..(i + 1) * n]))
        .collect();
    Ok(PcSolution { basis, coeffs, iterations })
}

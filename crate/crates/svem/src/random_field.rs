//! Karhunen-Loève representation of an uncertain Young's modulus field and
//! reproducible sampling of its random coefficients.
//!
//! The field is `E(x, θ) = E₀ + Σ_{i=1}^m ξ_i(θ) √κ_i E_i(x)` where `(κ_i,
//! E_i)` are eigenpairs of the covariance matrix collocated at the mesh
//! vertices, `ξ_i` are iid standard Gaussian or iid uniform-on-[0,1]
//! coefficients, and `m` is chosen from the eigenvalue decay. Samples whose
//! realized field is not positive everywhere are masked out.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{subspace_eigs, sym_eigen_desc, DMat, DVec};
use crate::mesh::{Point, PolyMesh};

/// Any sample whose realized field dips to or below this value anywhere is
/// rejected.
pub const POSITIVITY_FLOOR: f64 = 1e-3;

/// Covariance kernels of the modulus field.
#[derive(Debug, Clone, Copy)]
pub enum Kernel {
    /// 2D separable first-order autoregressive kernel:
    /// `σ² (1+|Δx|/l_x)(1+|Δy|/l_y) e^{−|Δx|/l_x − |Δy|/l_y}`.
    Separable2d { sigma: f64, lx: f64, ly: f64 },
    /// 3D exponential kernel: `σ² e^{−|Δx|/l_x − |Δy|/l_y − |Δz|/l_z}`.
    Exponential3d { sigma: f64, lx: f64, ly: f64, lz: f64 },
}

impl Kernel {
    pub fn sigma(&self) -> f64 {
        match self {
            Kernel::Separable2d { sigma, .. } | Kernel::Exponential3d { sigma, .. } => *sigma,
        }
    }

    pub fn eval(&self, p: Point, q: Point) -> f64 {
        match *self {
            Kernel::Separable2d { sigma, lx, ly } => {
                let rx = (p.x - q.x).abs() / lx;
                let ry = (p.y - q.y).abs() / ly;
                sigma * sigma * (1.0 + rx) * (1.0 + ry) * (-rx - ry).exp()
            }
            Kernel::Exponential3d { sigma, lx, ly, lz } => {
                let r = (p.x - q.x).abs() / lx + (p.y - q.y).abs() / ly + (p.z - q.z).abs() / lz;
                sigma * sigma * (-r).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (sigma, lens): (f64, Vec<f64>) = match *self {
            Kernel::Separable2d { sigma, lx, ly } => (sigma, vec![lx, ly]),
            Kernel::Exponential3d { sigma, lx, ly, lz } => (sigma, vec![lx, ly, lz]),
        };
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::field(format!("kernel sigma must be non-negative, got {sigma}")));
        }
        if lens.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::field(format!(
                "kernel correlation lengths must be positive, got {lens:?}"
            )));
        }
        Ok(())
    }
}

/// Distribution of the iid random coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// Standard normal.
    Gaussian,
    /// Uniform on [0, 1].
    Uniform01,
}

impl Distribution {
    /// E[ξ] for one coefficient.
    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Gaussian => 0.0,
            Distribution::Uniform01 => 0.5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Uniform01 => "uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Distribution::Gaussian),
            "uniform" => Ok(Distribution::Uniform01),
            _ => Err(Error::config(format!(
                "unknown distribution '{s}' (expected gaussian or uniform)"
            ))),
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Distribution::Gaussian => rng.sample(rand_distr::StandardNormal),
            Distribution::Uniform01 => rng.random(),
        }
    }
}

/// Options for building a [`KlExpansion`].
#[derive(Debug, Clone)]
pub struct KlOptions {
    /// Eigenvalue-decay truncation tolerance.
    pub tol: f64,
    /// Weight the covariance matrix by lumped vertex measures before the
    /// eigendecomposition instead of plain collocation.
    pub weighted: bool,
    /// Largest vertex count solved with a dense eigendecomposition; larger
    /// problems use blocked subspace iteration.
    pub dense_limit: usize,
    pub distribution: Distribution,
}

impl Default for KlOptions {
    fn default() -> Self {
        KlOptions {
            tol: 1e-3,
            weighted: false,
            dense_limit: 5000,
            distribution: Distribution::Gaussian,
        }
    }
}

/// Truncated Karhunen-Loève expansion of the modulus field at mesh vertices.
#[derive(Debug, Clone)]
pub struct KlExpansion {
    mean: f64,
    eigenvalues: Vec<f64>,
    /// Unit eigenvectors, one vertex vector per retained mode.
    modes: Vec<DVec>,
    distribution: Distribution,
    /// Trace of the covariance matrix (sum of all eigenvalues), kept for
    /// reporting how much variance the truncation retains.
    spectrum_trace: f64,
}

/// Dense covariance matrix collocated at points: entry (a,b) = kernel(x_a, x_b).
pub fn covariance_matrix(points: &[Point], kernel: &Kernel) -> DMat {
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| kernel.eval(points[i], points[j])).collect())
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Eigenpairs of a symmetric covariance matrix, truncated by eigenvalue
/// decay: `m` is the smallest count with `κ_m / Σ_{i=1}^m κ_i < tol`; zero
/// modes never count, and if no prefix of the positive spectrum satisfies the
/// rule the full positive rank is kept.
///
/// Negative eigenvalues within `1e-12 κ₁` of zero are clipped; larger
/// negative values are an error (non-PSD covariance discretization).
pub fn kl_solve(cov: &DMat, tol: f64) -> Result<(Vec<f64>, Vec<DVec>)> {
    if !(0.0..1.0).contains(&tol) || tol <= 0.0 {
        return Err(Error::config(format!("truncation tolerance must be in (0,1), got {tol}")));
    }
    let (vals, vecs) = sym_eigen_desc(cov);
    truncate_spectrum(&vals, tol, |i| vecs.column(i).into_owned())
}

fn truncate_spectrum(
    vals: &[f64],
    tol: f64,
    mut vector: impl FnMut(usize) -> DVec,
) -> Result<(Vec<f64>, Vec<DVec>)> {
    let kappa1 = vals.first().copied().unwrap_or(0.0).max(0.0);
    let clip = 1e-12 * kappa1;
    if let Some(&worst) = vals.last() {
        if worst < -clip.max(f64::MIN_POSITIVE) {
            return Err(Error::field(format!(
                "covariance matrix is not positive semidefinite (eigenvalue {worst:e})"
            )));
        }
    }
    let positive: Vec<f64> = vals.iter().copied().take_while(|&v| v > clip).collect();
    let mut m = positive.len();
    let mut partial = 0.0;
    for (i, &k) in positive.iter().enumerate() {
        partial += k;
        if k / partial < tol {
            m = i + 1;
            break;
        }
    }
    let kept = positive[..m].to_vec();
    let mut modes = Vec::with_capacity(m);
    for i in 0..m {
        let mut v = vector(i);
        // deterministic sign: the entry of largest magnitude is positive
        let lead = v.iter().enumerate().fold((0usize, 0.0f64), |acc, (j, &x)| {
            if x.abs() > acc.1.abs() {
                (j, x)
            } else {
                acc
            }
        });
        if lead.1 < 0.0 {
            v.neg_mut();
        }
        modes.push(v);
    }
    Ok((kept, modes))
}

impl KlExpansion {
    /// Builds the expansion on a mesh: assembles the vertex covariance
    /// matrix, solves the eigenproblem (dense or iterative by size) and
    /// truncates by eigenvalue decay.
    pub fn build(mesh: &PolyMesh, kernel: &Kernel, mean: f64, opts: &KlOptions) -> Result<Self> {
        kernel.validate()?;
        if !(mean > 0.0) {
            return Err(Error::field(format!("mean modulus must be positive, got {mean}")));
        }
        let mut cov = covariance_matrix(mesh.vertices(), kernel);
        let weights = if opts.weighted {
            let w = mesh.vertex_weights();
            let sqrt_w: Vec<f64> = w.iter().map(|&x| x.sqrt()).collect();
            for i in 0..cov.nrows() {
                for j in 0..cov.ncols() {
                    cov[(i, j)] *= sqrt_w[i] * sqrt_w[j];
                }
            }
            Some(sqrt_w)
        } else {
            None
        };
        let trace = cov.trace();
        let (eigenvalues, mut modes) = if mesh.n_vertices() <= opts.dense_limit {
            kl_solve(&cov, opts.tol)?
        } else {
            let tol = opts.tol;
            let (vals, vecs) = subspace_eigs(
                &cov,
                |ritz| {
                    let kappa1 = ritz.first().copied().unwrap_or(0.0).max(0.0);
                    let clip = 1e-12 * kappa1;
                    let positive: Vec<f64> =
                        ritz.iter().copied().take_while(|&v| v > clip).collect();
                    let mut m = positive.len().max(1);
                    let mut partial = 0.0;
                    for (i, &k) in positive.iter().enumerate() {
                        partial += k;
                        if k / partial < tol {
                            m = i + 1;
                            break;
                        }
                    }
                    m
                },
                0x5eed,
            )?;
            truncate_spectrum(&vals, tol, |i| vecs.column(i).into_owned())?
        };
        if let Some(sqrt_w) = weights {
            // transform eigenvectors back to nodal values; they are then
            // orthonormal under the lumped-measure inner product
            for v in &mut modes {
                for (x, sw) in v.iter_mut().zip(&sqrt_w) {
                    *x /= *sw;
                }
            }
        }
        Ok(KlExpansion {
            mean,
            eigenvalues,
            modes,
            distribution: opts.distribution,
            spectrum_trace: trace,
        })
    }

    /// Number of retained modes.
    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &[DVec] {
        &self.modes
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution
    }

    /// Fraction of the covariance trace captured by the retained modes.
    pub fn captured_variance_fraction(&self) -> f64 {
        if self.spectrum_trace <= 0.0 {
            return 1.0;
        }
        self.eigenvalues.iter().sum::<f64>() / self.spectrum_trace
    }

    pub fn n_vertices(&self) -> usize {
        self.modes.first().map_or(0, |v| v.len())
    }

    /// `√κ_i E_i`, the coefficient field of ξ_i in the expansion.
    pub fn scaled_mode(&self, i: usize) -> DVec {
        self.eigenvalues[i].sqrt() * &self.modes[i]
    }

    /// Realized vertex field `E₀ + Σ ξ_i √κ_i E_i`.
    pub fn vertex_field(&self, xi: &[f64]) -> DVec {
        assert_eq!(xi.len(), self.m(), "coefficient count must match m");
        let n = self.n_vertices();
        let mut field = DVector::from_element(n.max(1), self.mean);
        for (i, &x) in xi.iter().enumerate() {
            field.axpy(x * self.eigenvalues[i].sqrt(), &self.modes[i], 1.0);
        }
        field
    }

    /// Smallest vertex value of the realized field (used by the positivity
    /// filter without materializing the field).
    fn min_vertex_value(&self, xi: &[f64]) -> f64 {
        if self.modes.is_empty() {
            return self.mean;
        }
        let n = self.n_vertices();
        let scales: Vec<f64> = self.eigenvalues.iter().map(|k| k.sqrt()).collect();
        (0..n)
            .map(|v| {
                self.mean
                    + xi.iter()
                        .zip(&scales)
                        .zip(&self.modes)
                        .map(|((&x, &s), mode)| x * s * mode[v])
                        .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean of the realized field over the coefficient distribution:
    /// `E₀ + E[ξ] Σ √κ_i E_i`. Differs from the constant `E₀` only for the
    /// uniform variant (E[ξ] = 1/2).
    pub fn effective_mean_field(&self) -> DVec {
        let shift = self.distribution.mean();
        let mut field = DVector::from_element(self.n_vertices().max(1), self.mean);
        if shift != 0.0 {
            for i in 0..self.m() {
                field.axpy(shift * self.eigenvalues[i].sqrt(), &self.modes[i], 1.0);
            }
        }
        field
    }

    /// Writes the expansion as a plain-text artifact (eigenvalues + vertex
    /// table) that [`KlExpansion::load`] reads back exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "# kl expansion artifact").unwrap();
        writeln!(out, "distribution {}", self.distribution.name()).unwrap();
        writeln!(out, "mean {:.17e}", self.mean).unwrap();
        writeln!(out, "trace {:.17e}", self.spectrum_trace).unwrap();
        writeln!(out, "m {}", self.m()).unwrap();
        writeln!(out, "vertices {}", self.n_vertices()).unwrap();
        write!(out, "eigenvalues").unwrap();
        for k in &self.eigenvalues {
            write!(out, " {k:.17e}").unwrap();
        }
        writeln!(out).unwrap();
        for v in 0..self.n_vertices() {
            write!(out, "row").unwrap();
            for mode in &self.modes {
                write!(out, " {:.17e}", mode[v]).unwrap();
            }
            writeln!(out).unwrap();
        }
        std::fs::write(path.as_ref(), out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::field(format!("cannot read {}: {e}", path.as_ref().display())))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let mut next_kv = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::field(format!("expansion artifact: missing '{key}'")))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| Error::field(format!("expansion artifact: bad line '{line}'")))?;
            if k != key {
                return Err(Error::field(format!(
                    "expansion artifact: expected '{key}', found '{k}'"
                )));
            }
            Ok(v.to_string())
        };
        let distribution = Distribution::parse(&next_kv("distribution")?)?;
        let parse_f = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::field(format!("expansion artifact: bad number '{s}'")))
        };
        let mean = parse_f(&next_kv("mean")?)?;
        let spectrum_trace = parse_f(&next_kv("trace")?)?;
        let m: usize = next_kv("m")?
            .trim()
            .parse()
            .map_err(|_| Error::field("expansion artifact: bad mode count"))?;
        let n_v: usize = next_kv("vertices")?
            .trim()
            .parse()
            .map_err(|_| Error::field("expansion artifact: bad vertex count"))?;
        let eig_line = next_kv("eigenvalues")?;
        let eigenvalues: Vec<f64> =
            eig_line.split_whitespace().map(parse_f).collect::<Result<_>>()?;
        if eigenvalues.len() != m {
            return Err(Error::field(format!(
                "expansion artifact: expected {m} eigenvalues, found {}",
                eigenvalues.len()
            )));
        }
        let mut modes = vec![DVector::zeros(n_v); m];
        let mut rows = 0;
        for (v, line) in lines.by_ref().take(n_v).enumerate() {
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.first() != Some(&"row") || vals.len() != m + 1 {
                return Err(Error::field(format!("expansion artifact: bad row line '{line}'")));
            }
            for (i, tok) in vals[1..].iter().enumerate() {
                modes[i][v] = parse_f(tok)?;
            }
            rows += 1;
        }
        if rows != n_v {
            return Err(Error::field(format!("expansion artifact: expected {n_v} rows")));
        }
        Ok(KlExpansion { mean, eigenvalues, modes, distribution, spectrum_trace })
    }
}

/// How a vertex field is reduced to one value per element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementReduction {
    /// Arithmetic mean of the element's vertex values.
    VertexMean,
    /// Value at the element vertex nearest to its centroid.
    CentroidNearestVertex,
}

/// Reduces a vertex field to per-element values.
pub fn element_values(mesh: &PolyMesh, vertex_values: &DVec, reduction: ElementReduction) -> Vec<f64> {
    mesh.elements()
        .iter()
        .map(|elem| match reduction {
            ElementReduction::VertexMean => {
                elem.vertex_ids().iter().map(|&v| vertex_values[v]).sum::<f64>()
                    / elem.n_vertices() as f64
            }
            ElementReduction::CentroidNearestVertex => {
                let c = elem.centroid();
                let nearest = elem
                    .vertex_ids()
                    .iter()
                    .min_by(|&&a, &&b| {
                        let da = (mesh.vertex(a) - c).norm_squared();
                        let db = (mesh.vertex(b) - c).norm_squared();
                        da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                    })
                    .unwrap();
                vertex_values[*nearest]
            }
        })
        .collect()
}

/// Extra scalar random input alongside the field coefficients (e.g. a load
/// factor), identified by name.
#[derive(Debug, Clone)]
pub struct ExtraInput {
    pub name: String,
    pub distribution: Distribution,
}

/// A reproducible batch of coefficient samples. Row layout:
/// `[ξ₀ ≡ 1, ξ_1 .. ξ_m, η_1 .. η_q]` — the leading constant keeps stiffness
/// evaluation `K(θ) = Σ_{i=0}^m ξ_i K_i` uniform. Rejected rows stay in the
/// batch but are masked; every expectation downstream averages over accepted
/// rows only.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    seed: u64,
    n_field: usize,
    field_distribution: Distribution,
    extras: Vec<ExtraInput>,
    data: Vec<f64>,
    mask: Vec<bool>,
    n_cols: usize,
}

impl SampleBatch {
    /// Draws `n_s` rows with the given seed and applies the positivity
    /// filter. Per row, the field coefficients are drawn first, then each
    /// extra input in order.
    pub fn draw(
        expansion: &KlExpansion,
        extras: &[ExtraInput],
        n_s: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_s == 0 {
            return Err(Error::config("sample count must be positive"));
        }
        let m = expansion.m();
        let n_cols = 1 + m + extras.len();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut data = vec![0.0; n_s * n_cols];
        for row in data.chunks_exact_mut(n_cols) {
            row[0] = 1.0;
            for x in &mut row[1..=m] {
                *x = expansion.distribution.draw(&mut rng);
            }
            for (x, extra) in row[m + 1..].iter_mut().zip(extras) {
                *x = extra.distribution.draw(&mut rng);
            }
        }
        let mask: Vec<bool> = data
            .par_chunks_exact(n_cols)
            .map(|row| expansion.min_vertex_value(&row[1..=m]) > POSITIVITY_FLOOR)
            .collect();
        let accepted = mask.iter().filter(|&&a| a).count();
        if (accepted as f64) < 0.5 * n_s as f64 {
            return Err(Error::field(format!(
                "positivity filter accepted only {accepted} of {n_s} samples; \
                 the field configuration makes non-positive moduli too likely"
            )));
        }
        Ok(SampleBatch {
            seed,
            n_field: m,
            field_distribution: expansion.distribution,
            extras: extras.to_vec(),
            data,
            mask,
            n_cols,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total rows drawn, including rejected ones.
    pub fn n_samples(&self) -> usize {
        self.mask.len()
    }

    pub fn n_accepted(&self) -> usize {
        self.mask.iter().filter(|&&a| a).count()
    }

    /// Field coefficient count m (row length is 1 + m + extras).
    pub fn n_field(&self) -> usize {
        self.n_field
    }

    /// Distribution shared by all field coefficients ξ_1..ξ_m.
    pub fn field_distribution(&self) -> Distribution {
        self.field_distribution
    }

    pub fn extras(&self) -> &[ExtraInput] {
        &self.extras
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_accepted(&self, i: usize) -> bool {
        self.mask[i]
    }

    /// Full sample row `[1, ξ_1..ξ_m, η..]`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Stiffness coefficients `[ξ₀ ≡ 1, ξ_1 .. ξ_m]` of row `i`.
    pub fn stiffness_coeffs(&self, i: usize) -> &[f64] {
        &self.row(i)[..=self.n_field]
    }

    /// Extra-input value of row `i` for extra `q`.
    pub fn extra(&self, i: usize, q: usize) -> f64 {
        self.row(i)[1 + self.n_field + q]
    }

    /// Indices of accepted rows, ascending.
    pub fn accepted_indices(&self) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.mask[i]).collect()
    }

    /// Column `j` of the full layout, accepted rows only.
    pub fn accepted_column(&self, j: usize) -> Vec<f64> {
        (0..self.n_samples()).filter(|&i| self.mask[i]).map(|i| self.row(i)[j]).collect()
    }
}

//! Post-processing: moment fields, kernel-density estimates, and PDF error
//! curves.
//!
//! All solvers in this crate produce (or can be viewed as) a separated
//! solution `u(θ̂_s) = Σ_i c_i(θ̂_s) d_i` — deterministic vectors with scalar
//! coefficient samples. Moments are therefore computed from the coefficient
//! sample covariance and never require materializing the per-sample solution
//! matrix. Every reduction uses the crate's fixed-order summation, and all
//! variances are biased (normalized by the sample count).

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{det_mean, det_mean_map, DVec};
use crate::mc::McSolution;
use crate::mesh::PolyMesh;
use crate::pc::PcSolution;
use crate::random_field::SampleBatch;
use crate::vem::DofPartition;
use crate::win::WinSolution;

/// Mean and standard-deviation fields on the full DoF vector (constrained
/// DoFs carry zeros).
#[derive(Debug, Clone)]
pub struct FieldStatistics {
    pub mean: DVec,
    pub std: DVec,
}

impl FieldStatistics {
    /// Scatters free-DoF moment vectors into full-DoF fields.
    pub fn from_free(partition: &DofPartition, mean_free: &DVec, std_free: &DVec) -> Self {
        let zeros = DVec::zeros(partition.full_to_free.len());
        FieldStatistics {
            mean: partition.expand(mean_free, &zeros),
            std: partition.expand(std_free, &zeros),
        }
    }

    /// Writes one CSV row per vertex: coordinates, then the mean and
    /// standard deviation of every displacement component.
    pub fn write_csv(&self, mesh: &PolyMesh, out: &mut impl Write) -> std::io::Result<()> {
        let dim = mesh.dim();
        let coord_names = &["x", "y", "z"][..dim];
        write!(out, "{}", coord_names.join(","))?;
        for c in coord_names {
            write!(out, ",mean_{c}")?;
        }
        for c in coord_names {
            write!(out, ",std_{c}")?;
        }
        writeln!(out)?;
        for v in 0..mesh.n_vertices() {
            let p = mesh.vertex(v);
            for (c, _) in coord_names.iter().enumerate() {
                if c > 0 {
                    write!(out, ",")?;
                }
                write!(out, "{:.12e}", p[c])?;
            }
            for c in 0..dim {
                write!(out, ",{:.12e}", self.mean[mesh.dof(v, c)])?;
            }
            for c in 0..dim {
                write!(out, ",{:.12e}", self.std[mesh.dof(v, c)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Moments of a separated representation: `mean = Σ_i Ê{c_i} d_i` and
/// `var = Σ_ij Cov(c_i, c_j) d_i ∘ d_j`, matching the sample statistics of
/// the evaluated solution to round-off.
///
/// `coeffs[i]` holds the samples of coefficient i; all must share a length.
pub fn separated_statistics(vectors: &[DVec], coeffs: &[Vec<f64>]) -> (DVec, DVec) {
    assert_eq!(vectors.len(), coeffs.len());
    assert!(!vectors.is_empty());
    let n = vectors[0].len();
    let n_s = coeffs[0].len();
    let k = vectors.len();

    let means: Vec<f64> = coeffs.iter().map(|c| det_mean(c)).collect();
    let mut mean = DVec::zeros(n);
    for (d, &m) in vectors.iter().zip(&means) {
        mean.axpy(m, d, 1.0);
    }

    // biased coefficient covariance, then var = Σ_ij C_ij d_i ∘ d_j
    let mut var = DVec::zeros(n);
    for i in 0..k {
        for j in i..k {
            let c_ij = det_mean_map(n_s, |s| {
                (coeffs[i][s] - means[i]) * (coeffs[j][s] - means[j])
            });
            let w = if i == j { c_ij } else { 2.0 * c_ij };
            if w != 0.0 {
                for p in 0..n {
                    var[p] += w * vectors[i][p] * vectors[j][p];
                }
            }
        }
    }
    let std = var.map(|v| v.max(0.0).sqrt());
    (mean, std)
}

/// Free-DoF moments of a weakly-intrusive solution from its recalculated
/// coefficient samples.
pub fn win_statistics(sol: &WinSolution) -> (DVec, DVec) {
    let k = sol.n_terms();
    let n_acc = sol.lambda().nrows();
    let coeffs: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..n_acc).map(|s| sol.lambda()[(s, i)]).collect())
        .collect();
    separated_statistics(sol.vectors(), &coeffs)
}

/// Free-DoF moments of a polynomial-chaos solution evaluated at the batch's
/// accepted samples (sample statistics, matching the other solvers' moment
/// convention rather than the basis's closed-form moments).
pub fn pc_statistics(sol: &PcSolution, batch: &SampleBatch) -> (DVec, DVec) {
    let lambda = sol.basis.eval_batch(batch);
    let coeffs: Vec<Vec<f64>> = (0..sol.basis.len())
        .map(|i| (0..lambda.nrows()).map(|s| lambda[(s, i)]).collect())
        .collect();
    separated_statistics(&sol.coeffs, &coeffs)
}

/// Free-DoF moments already accumulated by the Monte Carlo run.
pub fn mc_statistics(sol: &McSolution) -> (DVec, DVec) {
    (sol.mean_free().clone(), sol.std_free().clone())
}

/// Kernel-density estimate of a scalar sample set.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    /// Uniform evaluation grid (a single point when degenerate).
    pub grid: Vec<f64>,
    /// Density values on the grid (empty when degenerate).
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// Set when the samples have zero variance; the distribution is a point
    /// mass at `grid[0]` and no density curve exists.
    pub degenerate: bool,
}

impl DensityEstimate {
    /// Trapezoid integral of the density over the grid.
    pub fn mass(&self) -> f64 {
        if self.grid.len() < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for w in 0..self.grid.len() - 1 {
            acc += 0.5
                * (self.density[w] + self.density[w + 1])
                * (self.grid[w + 1] - self.grid[w]);
        }
        acc
    }

    /// Linear interpolation of the density at `x` (zero outside the grid).
    pub fn interpolate(&self, x: f64) -> f64 {
        let grid = &self.grid;
        if self.degenerate || grid.len() < 2 || x < grid[0] || x > *grid.last().unwrap() {
            return 0.0;
        }
        let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
        let idx = (((x - grid[0]) / h) as usize).min(grid.len() - 2);
        let t = (x - grid[idx]) / h;
        self.density[idx] * (1.0 - t) + self.density[idx + 1] * t
    }

    /// Writes the curve as CSV rows `value,density`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "value,density")?;
        if self.degenerate {
            writeln!(out, "{:.12e},inf", self.grid[0])?;
            return Ok(());
        }
        for (x, d) in self.grid.iter().zip(&self.density) {
            writeln!(out, "{x:.12e},{d:.12e}")?;
        }
        Ok(())
    }
}

/// Number of evaluation points of a density grid.
pub const KDE_GRID_POINTS: usize = 512;

/// Gaussian-kernel density estimate with the Silverman rule-of-thumb
/// bandwidth `1.06 σ̂ n^{−1/5}`, evaluated on a uniform grid spanning the
/// sample mean ± 5 standard deviations.
pub fn kde_pdf(samples: &[f64], n_grid: usize) -> Result<DensityEstimate> {
    let n = samples.len();
    if n < 100 {
        return Err(Error::config(format!(
            "density estimation needs at least 100 samples, got {n}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("density estimation requires finite samples"));
    }
    let mean = det_mean(samples);
    let var = det_mean_map(n, |s| (samples[s] - mean) * (samples[s] - mean));
    let sigma = var.max(0.0).sqrt();
    if sigma == 0.0 {
        return Ok(DensityEstimate {
            grid: vec![mean],
            density: Vec::new(),
            bandwidth: 0.0,
            degenerate: true,
        });
    }
    let h = 1.06 * sigma * (n as f64).powf(-0.2);
    let lo = mean - 5.0 * sigma;
    let hi = mean + 5.0 * sigma;
    let step = (hi - lo) / (n_grid - 1) as f64;
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * n as f64);
    let grid: Vec<f64> = (0..n_grid).map(|g| lo + g as f64 * step).collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            norm * det_mean_map(n, |s| {
                let t = (x - samples[s]) / h;
                (-0.5 * t * t).exp()
            }) * n as f64
        })
        .collect();
    Ok(DensityEstimate { grid, density, bandwidth: h, degenerate: false })
}

/// Pointwise absolute difference of two density curves on a shared grid
/// covering both supports.
#[derive(Debug, Clone)]
pub struct PdfErrorCurve {
    pub grid: Vec<f64>,
    pub error: Vec<f64>,
}

impl PdfErrorCurve {
    pub fn max_error(&self) -> f64 {
        self.error.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn pdf_abs_error(a: &DensityEstimate, b: &DensityEstimate) -> Result<PdfErrorCurve> {
    if a.degenerate || b.degenerate {
        return Err(Error::config(
            "cannot compare degenerate (zero-variance) density estimates",
        ));
    }
    let lo = a.grid[0].min(b.grid[0]);
    let hi = a.grid.last().unwrap().max(*b.grid.last().unwrap());
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..KDE_GRID_POINTS).map(|g| lo + g as f64 * step).collect();
    let error = grid
        .iter()
        .map(|&x| (a.interpolate(x) - b.interpolate(x)).abs())
        .collect();
    Ok(PdfErrorCurve { grid, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution as _, StandardNormal};

    #[test]
    fn constant_coefficient_gives_zero_spread() {
        let d = DVec::from_column_slice(&[1.0, -2.0, 0.5]);
        let coeffs = vec![vec![3.0; 40]];
        let (mean, std) = separated_statistics(std::slice::from_ref(&d), &coeffs);
        assert!((mean - d * 3.0).norm() <= 1e-14);
        assert!(std.norm() <= 1e-14);
    }

    #[test]
    fn uncorrelated_unit_variance_coefficients_sum_squares() {
        // Walsh-like columns: exactly zero-mean, unit-variance, uncorrelated
        let c1 = vec![1.0, 1.0, -1.0, -1.0];
        let c2 = vec![1.0, -1.0, 1.0, -1.0];
        let d1 = DVec::from_column_slice(&[2.0, 0.0]);
        let d2 = DVec::from_column_slice(&[0.0, 3.0]);
        let (mean, std) = separated_statistics(&[d1, d2], &[c1, c2]);
        assert!(mean.norm() <= 1e-14);
        assert!((std[0] - 2.0).abs() <= 1e-14);
        assert!((std[1] - 3.0).abs() <= 1e-14);
    }

    #[test]
    fn separated_statistics_match_brute_force_samples() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 7;
        let k = 3;
        let n_s = 200;
        let vectors: Vec<DVec> = (0..k)
            .map(|_| DVec::from_fn(n, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let coeffs: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n_s).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let (mean, std) = separated_statistics(&vectors, &coeffs);
        // brute force: evaluate all samples, then per-DoF biased moments
        for p in 0..n {
            let samples: Vec<f64> = (0..n_s)
                .map(|s| (0..k).map(|i| coeffs[i][s] * vectors[i][p]).sum())
                .collect();
            let m = det_mean(&samples);
            let v = det_mean_map(n_s, |s| (samples[s] - m) * (samples[s] - m));
            assert!((mean[p] - m).abs() <= 1e-12 * m.abs().max(1.0));
            assert!((std[p] - v.sqrt()).abs() <= 1e-12 * v.sqrt().max(1.0));
        }
    }

    #[test]
    fn kde_matches_the_normal_density() {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let samples: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let kde = kde_pdf(&samples, KDE_GRID_POINTS).unwrap();
        assert!(!kde.degenerate);
        let at_zero = kde.interpolate(0.0);
        let want = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!(
            (at_zero - want).abs() <= 0.05 * want,
            "kde(0) = {at_zero}, want ≈ {want}"
        );
        let mass = kde.mass();
        assert!((0.98..=1.02).contains(&mass), "mass {mass}");
    }

    #[test]
    fn identical_samples_give_zero_error_curve() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = kde_pdf(&samples, KDE_GRID_POINTS).unwrap();
        let b = kde_pdf(&samples, KDE_GRID_POINTS).unwrap();
        let err = pdf_abs_error(&a, &b).unwrap();
        assert_eq!(err.max_error(), 0.0);
    }

    #[test]
    fn constant_samples_are_flagged_degenerate() {
        let samples = vec![2.5; 200];
        let kde = kde_pdf(&samples, KDE_GRID_POINTS).unwrap();
        assert!(kde.degenerate);
        assert_eq!(kde.grid, vec![2.5]);
        let other = kde_pdf(&vec![1.0; 200], KDE_GRID_POINTS).unwrap();
        assert!(pdf_abs_error(&kde, &other).is_err());
    }

    #[test]
    fn too_few_samples_are_rejected() {
        assert!(kde_pdf(&[1.0; 99], KDE_GRID_POINTS).is_err());
    }

    #[test]
    fn field_statistics_zero_out_constrained_dofs() {
        use crate::vem::DofPartition;
        let partition = DofPartition::from_mask(&[true, false, true, false]);
        let mean_free = DVec::from_column_slice(&[1.0, 2.0]);
        let std_free = DVec::from_column_slice(&[0.1, 0.2]);
        let fs = FieldStatistics::from_free(&partition, &mean_free, &std_free);
        assert_eq!(fs.mean.as_slice(), &[0.0, 1.0, 0.0, 2.0]);
        assert_eq!(fs.std.as_slice(), &[0.0, 0.1, 0.0, 0.2]);
    }

    #[test]
    fn csv_output_has_one_row_per_vertex() {
        let path = format!("{}/fixtures/patch16.pmesh", env!("CARGO_MANIFEST_DIR"));
        let mesh = PolyMesh::load(path).unwrap();
        let n = mesh.n_dofs();
        let fs = FieldStatistics { mean: DVec::zeros(n), std: DVec::zeros(n) };
        let mut buf = Vec::new();
        fs.write_csv(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), mesh.n_vertices() + 1);
        assert_eq!(lines[0], "x,y,mean_x,mean_y,std_x,std_y");
    }
}

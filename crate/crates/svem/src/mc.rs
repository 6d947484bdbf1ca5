//! Monte Carlo reference solver.
//!
//! Every accepted sample gets its own full-order solve: the stiffness
//! realization `K(θ̂) = Σ ξ_i K_i` reuses one symbolic factorization (the
//! sparsity pattern is shared by all modes) and only the numeric LDLᵀ
//! factorization is redone per sample. Samples are processed in fixed-size
//! chunks — parallel within a chunk, accumulated in index order — so the
//! statistics are bit-identical for any worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{DVec, LdlSymbolic};
use crate::random_field::SampleBatch;
use crate::svee::SeparatedSystem;

/// Sample storage policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMode {
    /// Keep every solution sample (needed for per-DoF reprocessing).
    Full,
    /// Keep only running accumulators and the probe-DoF histories.
    Streaming,
}

#[derive(Debug, Clone)]
pub struct McOptions {
    pub mode: McMode,
    /// Relative residual each per-sample solve must reach (one step of
    /// iterative refinement is attempted before the sample is dropped).
    pub residual_tol: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { mode: McMode::Streaming, residual_tol: 1e-10 }
    }
}

/// Fixed accumulation chunk: parallelism never changes the reduction order.
const CHUNK: usize = 256;

/// Monte Carlo output: moment accumulators over the solved samples, probe
/// histories, and (in full mode) the samples themselves. All vectors live on
/// the free DoFs.
#[derive(Debug, Clone)]
pub struct McSolution {
    mean: DVec,
    std: DVec,
    samples: Option<Vec<DVec>>,
    /// Original batch indices of the solved samples, in accepted order.
    solved: Vec<usize>,
    /// Original batch indices of samples whose solve failed the residual
    /// check (recorded and skipped).
    failures: Vec<usize>,
    /// Full-DoF probe indices.
    probes: Vec<usize>,
    /// One history per probe, aligned with `solved`.
    probe_samples: Vec<Vec<f64>>,
}

impl McSolution {
    /// Sample mean over the solved samples (free DoFs).
    pub fn mean_free(&self) -> &DVec {
        &self.mean
    }

    /// Sample standard deviation over the solved samples (free DoFs),
    /// normalized by the solved count.
    pub fn std_free(&self) -> &DVec {
        &self.std
    }

    /// Solution samples in full mode, `None` in streaming mode.
    pub fn samples(&self) -> Option<&[DVec]> {
        self.samples.as_deref()
    }

    pub fn solved_indices(&self) -> &[usize] {
        &self.solved
    }

    pub fn n_solved(&self) -> usize {
        self.solved.len()
    }

    pub fn failures(&self) -> &[usize] {
        &self.failures
    }

    pub fn probes(&self) -> &[usize] {
        &self.probes
    }

    pub fn probe_samples(&self) -> &[Vec<f64>] {
        &self.probe_samples
    }
}

/// Solves the system once per accepted sample.
///
/// `probes` are full-DoF indices (`vertex·dim + component`) whose sample
/// histories are retained in both modes; they must be free DoFs.
pub fn run_mcs(
    system: &SeparatedSystem,
    batch: &SampleBatch,
    probes: &[usize],
    opts: &McOptions,
) -> Result<McSolution> {
    let accepted = batch.accepted_indices();
    if accepted.is_empty() {
        return Err(Error::solver("no accepted samples in the batch"));
    }
    if batch.n_field() != system.m() {
        return Err(Error::solver(format!(
            "sample batch has {} field coefficients but the system has {} stiffness modes",
            batch.n_field(),
            system.m()
        )));
    }
    let n = system.n_free();
    let partition = system.partition();
    let probe_free: Vec<usize> = probes
        .iter()
        .map(|&p| {
            partition.full_to_free.get(p).copied().flatten().ok_or_else(|| {
                Error::config(format!("probe DoF {p} is constrained or out of range"))
            })
        })
        .collect::<Result<_>>()?;

    let k_free = system.k_free();
    let symbolic = LdlSymbolic::new(&k_free[0].pattern);

    // Welford accumulators: numerically stable (exactly zero variance for
    // identical samples) and updated strictly in accepted order, so the
    // result never depends on the worker count.
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut solved = Vec::with_capacity(accepted.len());
    let mut failures = Vec::new();
    let mut stored: Vec<DVec> = Vec::new();
    let mut probe_samples: Vec<Vec<f64>> = vec![Vec::new(); probes.len()];

    for chunk in accepted.chunks(CHUNK) {
        let solutions: Vec<Option<DVec>> = chunk
            .par_iter()
            .map(|&s| {
                let k = system.k_free_with(batch.stiffness_coeffs(s));
                let f = system.f_free_at(batch, s).expect("accepted sample");
                let factor = match symbolic.factor(&k) {
                    Ok(fac) => fac,
                    Err(_) => return None,
                };
                let mut u = factor.solve(&f);
                let f_norm = f.norm();
                if f_norm > 0.0 {
                    let mut residual = &f - k.matvec(&u);
                    if residual.norm() > opts.residual_tol * f_norm {
                        // one step of iterative refinement
                        u += factor.solve(&residual);
                        residual = &f - k.matvec(&u);
                        if residual.norm() > opts.residual_tol * f_norm {
                            return None;
                        }
                    }
                }
                Some(u)
            })
            .collect();
        for (&s, maybe_u) in chunk.iter().zip(solutions) {
            let Some(u) = maybe_u else {
                failures.push(s);
                continue;
            };
            let count = (solved.len() + 1) as f64;
            for i in 0..n {
                let delta = u[i] - mean[i];
                mean[i] += delta / count;
                m2[i] += delta * (u[i] - mean[i]);
            }
            for (hist, &p) in probe_samples.iter_mut().zip(&probe_free) {
                hist.push(u[p]);
            }
            solved.push(s);
            if opts.mode == McMode::Full {
                stored.push(u);
            }
        }
    }

    if solved.is_empty() {
        return Err(Error::solver(format!(
            "every per-sample solve failed the residual check ({} samples)",
            accepted.len()
        )));
    }
    let count = solved.len() as f64;
    let mean = DVec::from_column_slice(&mean);
    let std = DVec::from_iterator(n, m2.iter().map(|&v| (v / count).max(0.0).sqrt()));
    Ok(McSolution {
        mean,
        std,
        samples: (opts.mode == McMode::Full).then_some(stored),
        solved,
        failures,
        probes: probes.to_vec(),
        probe_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::PolyMesh;
    use crate::random_field::{
        Distribution, ElementReduction, ExtraInput, Kernel, KlExpansion, KlOptions, SampleBatch,
    };
    use crate::svee::{AffineCoeff, LoadSpec, PointLoad, SeparatedSystem};

    fn build_case(sigma: f64, n_s: usize) -> (PolyMesh, SeparatedSystem, SampleBatch) {
        let path = format!("{}/fixtures/voronoi50.pmesh", env!("CARGO_MANIFEST_DIR"));
        let mesh = PolyMesh::load(path).unwrap();
        let kernel = Kernel::Separable2d { sigma, lx: 1.0, ly: 1.0 };
        let kl = KlExpansion::build(&mesh, &kernel, 100.0, &KlOptions::default()).unwrap();
        let extras =
            vec![ExtraInput { name: "load".into(), distribution: Distribution::Gaussian }];
        let loads = LoadSpec {
            point_loads: vec![PointLoad {
                set: "tip".into(),
                component: 1,
                coeff: AffineCoeff { base: -1000.0, random: Some((0, -100.0)) },
            }],
            ..LoadSpec::default()
        };
        let sys = SeparatedSystem::assemble(
            &mesh,
            &kl,
            0.3,
            ElementReduction::VertexMean,
            &loads,
            &["left".into()],
            &extras,
        )
        .unwrap();
        let batch = SampleBatch::draw(&kl, &extras, n_s, 41).unwrap();
        (mesh, sys, batch)
    }

    #[test]
    fn deterministic_system_has_zero_variance() {
        let path = format!("{}/fixtures/voronoi50.pmesh", env!("CARGO_MANIFEST_DIR"));
        let mesh = PolyMesh::load(path).unwrap();
        let kernel = Kernel::Separable2d { sigma: 0.0, lx: 1.0, ly: 1.0 };
        let kl = KlExpansion::build(&mesh, &kernel, 100.0, &KlOptions::default()).unwrap();
        let loads = LoadSpec {
            point_loads: vec![PointLoad {
                set: "tip".into(),
                component: 1,
                coeff: AffineCoeff::constant(-1000.0),
            }],
            ..LoadSpec::default()
        };
        let sys = SeparatedSystem::assemble(
            &mesh,
            &kl,
            0.3,
            ElementReduction::VertexMean,
            &loads,
            &["left".into()],
            &[],
        )
        .unwrap();
        let batch = SampleBatch::draw(&kl, &[], 64, 5).unwrap();
        let mc = run_mcs(&sys, &batch, &[], &McOptions::default()).unwrap();
        assert_eq!(mc.n_solved(), 64);
        assert!(mc.std_free().iter().all(|&s| s <= 1e-10));
    }

    #[test]
    fn per_sample_solutions_match_dense_oracle() {
        let (_, sys, batch) = build_case(20.0, 2);
        let opts = McOptions { mode: McMode::Full, ..McOptions::default() };
        let mc = run_mcs(&sys, &batch, &[], &opts).unwrap();
        let samples = mc.samples().unwrap();
        for (u, &s) in samples.iter().zip(mc.solved_indices()) {
            let k_dense = sys.k_free_with(batch.stiffness_coeffs(s)).to_dense();
            let f = sys.f_free_at(&batch, s).unwrap();
            let oracle = k_dense.lu().solve(&f).unwrap();
            assert!(
                (u - &oracle).norm() <= 1e-10 * oracle.norm(),
                "sample {s} deviates from the dense solve"
            );
        }
    }

    #[test]
    fn residuals_meet_the_tolerance() {
        let (_, sys, batch) = build_case(20.0, 16);
        let opts = McOptions { mode: McMode::Full, ..McOptions::default() };
        let mc = run_mcs(&sys, &batch, &[], &opts).unwrap();
        assert!(mc.failures().is_empty());
        for (u, &s) in mc.samples().unwrap().iter().zip(mc.solved_indices()) {
            let k = sys.k_free_with(batch.stiffness_coeffs(s));
            let f = sys.f_free_at(&batch, s).unwrap();
            let r = (&f - k.matvec(u)).norm();
            assert!(r <= 1e-10 * f.norm(), "residual {r:e} at sample {s}");
        }
    }

    #[test]
    fn streaming_and_full_modes_agree() {
        let (_, sys, batch) = build_case(20.0, 300);
        let full = run_mcs(
            &sys,
            &batch,
            &[],
            &McOptions { mode: McMode::Full, ..McOptions::default() },
        )
        .unwrap();
        let streaming = run_mcs(&sys, &batch, &[], &McOptions::default()).unwrap();
        assert!(streaming.samples().is_none());
        assert!((full.mean_free() - streaming.mean_free()).norm() <= 1e-12);
        assert!((full.std_free() - streaming.std_free()).norm() <= 1e-12);
    }

    #[test]
    fn results_are_independent_of_worker_count() {
        let (_, sys, batch) = build_case(20.0, 300);
        let default_run = run_mcs(&sys, &batch, &[], &McOptions::default()).unwrap();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_mcs(&sys, &batch, &[], &McOptions::default()).unwrap());
        assert_eq!(default_run.mean_free(), single.mean_free());
        assert_eq!(default_run.std_free(), single.std_free());
    }

    #[test]
    fn probe_histories_track_the_samples() {
        let (mesh, sys, batch) = build_case(20.0, 50);
        // probe the vertical displacement of the loaded tip vertex
        let tip = mesh.vertex_set("tip").unwrap()[0];
        let probe = mesh.dof(tip, 1);
        let opts = McOptions { mode: McMode::Full, ..McOptions::default() };
        let mc = run_mcs(&sys, &batch, &[probe], &opts).unwrap();
        let p_free = sys.partition().full_to_free[probe].unwrap();
        for (i, u) in mc.samples().unwrap().iter().enumerate() {
            assert_eq!(mc.probe_samples()[0][i], u[p_free]);
        }
        // probing a constrained DoF is rejected
        let fixed = mesh.vertex_set("left").unwrap()[0];
        assert!(run_mcs(&sys, &batch, &[mesh.dof(fixed, 0)], &opts).is_err());
    }
}

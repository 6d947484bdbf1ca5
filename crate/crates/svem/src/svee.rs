//! Separated (affine) form of the stochastic elasticity system.
//!
//! Stiffness: `K(θ) = Σ_{i=0}^m ξ_i(θ) K_i` with `ξ₀ ≡ 1`; `K₀` carries the
//! mean modulus and `K_i` the i-th scaled field mode. Load:
//! `F(θ) = F₀ + Σ_j η_j(θ) F_j` where each column is tagged with the extra
//! input that multiplies it. All `K_i` share one sparsity pattern, so
//! evaluating a realization is a fused scalar-weighted sum.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DVec};
use crate::mesh::{Point, PolyMesh};
use crate::random_field::{element_values, ElementReduction, ExtraInput, KlExpansion, SampleBatch};
use crate::vem::{body_force_vector, traction_vector, DofPartition, StiffnessAssembler};

/// Affine scalar coefficient `base + scale·η` of a load.
#[derive(Debug, Clone, Copy)]
pub struct AffineCoeff {
    pub base: f64,
    /// Optional random part: (extra-input index, multiplier).
    pub random: Option<(usize, f64)>,
}

impl AffineCoeff {
    pub fn constant(base: f64) -> Self {
        AffineCoeff { base, random: None }
    }
}

/// Constant-direction load with an affine random magnitude:
/// `coeff(θ) · direction`.
#[derive(Debug, Clone)]
pub struct VectorLoad {
    pub direction: [f64; 3],
    pub coeff: AffineCoeff,
}

/// Point load applied to one displacement component of every vertex in a set.
#[derive(Debug, Clone)]
pub struct PointLoad {
    pub set: String,
    pub component: usize,
    pub coeff: AffineCoeff,
}

/// Declarative load model: an optional body force, tractions over named face
/// sets, and point loads at named vertex sets.
#[derive(Debug, Clone, Default)]
pub struct LoadSpec {
    pub body: Option<VectorLoad>,
    pub tractions: Vec<(String, VectorLoad)>,
    pub point_loads: Vec<PointLoad>,
}

/// The assembled separated system, on the full DoF set and restricted to the
/// free DoFs.
#[derive(Debug)]
pub struct SeparatedSystem {
    k_full: Vec<CsrMatrix>,
    k_free: Vec<CsrMatrix>,
    f0_full: DVec,
    f_cols_full: Vec<(usize, DVec)>,
    f0_free: DVec,
    f_cols_free: Vec<(usize, DVec)>,
    partition: DofPartition,
    n_extra: usize,
}

impl SeparatedSystem {
    /// Assembles stiffness modes from the field expansion and load columns
    /// from the load spec, then restricts everything to the free DoFs left by
    /// the Dirichlet sets.
    pub fn assemble(
        mesh: &PolyMesh,
        expansion: &KlExpansion,
        poisson: f64,
        reduction: ElementReduction,
        loads: &LoadSpec,
        dirichlet_sets: &[String],
        extras: &[ExtraInput],
    ) -> Result<Self> {
        if expansion.n_vertices() != 0 && expansion.n_vertices() != mesh.n_vertices() {
            return Err(Error::solver(format!(
                "field expansion has {} vertices but the mesh has {}",
                expansion.n_vertices(),
                mesh.n_vertices()
            )));
        }
        let assembler = StiffnessAssembler::new(mesh, poisson)?;
        let mut k_full = Vec::with_capacity(expansion.m() + 1);
        k_full.push(assembler.assemble(&vec![expansion.mean(); mesh.n_elements()]));
        for i in 0..expansion.m() {
            let vals = element_values(mesh, &expansion.scaled_mode(i), reduction);
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::solver(format!("mode {i} yields non-finite element values")));
            }
            k_full.push(assembler.assemble(&vals));
        }

        let n_dofs = mesh.n_dofs();
        let mut f0_full = DVector::zeros(n_dofs);
        let mut f_cols_full: Vec<(usize, DVec)> = Vec::new();
        let add_affine = |coeff: &AffineCoeff,
                              shape: &dyn Fn(f64) -> DVec,
                              f0: &mut DVec,
                              cols: &mut Vec<(usize, DVec)>|
         -> Result<()> {
            if coeff.base != 0.0 {
                *f0 += shape(coeff.base);
            }
            if let Some((extra, scale)) = coeff.random {
                if extra >= extras.len() {
                    return Err(Error::config(format!(
                        "load references extra input {extra} but only {} are declared",
                        extras.len()
                    )));
                }
                cols.push((extra, shape(scale)));
            }
            Ok(())
        };

        if let Some(body) = &loads.body {
            let dir = Point::new(body.direction[0], body.direction[1], body.direction[2]);
            let shape = |s: f64| body_force_vector(mesh, |_| s * dir);
            add_affine(&body.coeff, &shape, &mut f0_full, &mut f_cols_full)?;
        }
        for (set, traction) in &loads.tractions {
            let faces = mesh.face_set(set)?.to_vec();
            let dir = Point::new(traction.direction[0], traction.direction[1], traction.direction[2]);
            let shape = |s: f64| traction_vector(mesh, &faces, |_| s * dir);
            add_affine(&traction.coeff, &shape, &mut f0_full, &mut f_cols_full)?;
        }
        for load in &loads.point_loads {
            if load.component >= mesh.dim() {
                return Err(Error::config(format!(
                    "point load component {} out of range for dim {}",
                    load.component,
                    mesh.dim()
                )));
            }
            let verts = mesh.vertex_set(&load.set)?.to_vec();
            let dim = mesh.dim();
            let comp = load.component;
            let shape = |s: f64| {
                let mut f = DVector::zeros(n_dofs);
                for &v in &verts {
                    f[v * dim + comp] += s;
                }
                f
            };
            add_affine(&load.coeff, &shape, &mut f0_full, &mut f_cols_full)?;
        }

        let partition = DofPartition::from_vertex_sets(mesh, dirichlet_sets)?;
        let k_free = CsrMatrix::restrict_all(&k_full, &partition.free);
        let f0_free = partition.restrict(&f0_full);
        let f_cols_free =
            f_cols_full.iter().map(|(e, c)| (*e, partition.restrict(c))).collect();
        Ok(SeparatedSystem {
            k_full,
            k_free,
            f0_full,
            f_cols_full,
            f0_free,
            f_cols_free,
            partition,
            n_extra: extras.len(),
        })
    }

    /// Number of stochastic stiffness modes (the constant `K₀` excluded).
    pub fn m(&self) -> usize {
        self.k_full.len() - 1
    }

    pub fn n_extra(&self) -> usize {
        self.n_extra
    }

    /// Full-DoF stiffness modes `K₀..K_m`.
    pub fn k_full(&self) -> &[CsrMatrix] {
        &self.k_full
    }

    /// Free-DoF stiffness modes `K₀..K_m` (shared pattern).
    pub fn k_free(&self) -> &[CsrMatrix] {
        &self.k_free
    }

    pub fn f0_free(&self) -> &DVec {
        &self.f0_free
    }

    /// Free-DoF force columns as (extra-input index, column) pairs.
    pub fn f_cols_free(&self) -> &[(usize, DVec)] {
        &self.f_cols_free
    }

    pub fn partition(&self) -> &DofPartition {
        &self.partition
    }

    pub fn n_free(&self) -> usize {
        self.partition.free.len()
    }

    fn check_accepted(batch: &SampleBatch, sample: usize) -> Result<()> {
        if !batch.is_accepted(sample) {
            return Err(Error::solver(format!(
                "sample {sample} was rejected by the positivity filter"
            )));
        }
        Ok(())
    }

    /// Full stiffness realization `Σ ξ_i K_i` at an accepted sample.
    pub fn k_at(&self, batch: &SampleBatch, sample: usize) -> Result<CsrMatrix> {
        Self::check_accepted(batch, sample)?;
        Ok(CsrMatrix::weighted_sum(&self.k_full, batch.stiffness_coeffs(sample)))
    }

    /// Free-DoF stiffness realization from a coefficient row `[1, ξ..]`.
    pub fn k_free_with(&self, coeffs: &[f64]) -> CsrMatrix {
        CsrMatrix::weighted_sum(&self.k_free, coeffs)
    }

    /// Full load realization `F₀ + Σ η_j F_j` at an accepted sample.
    pub fn f_at(&self, batch: &SampleBatch, sample: usize) -> Result<DVec> {
        Self::check_accepted(batch, sample)?;
        let mut f = self.f0_full.clone();
        for (extra, col) in &self.f_cols_full {
            f.axpy(batch.extra(sample, *extra), col, 1.0);
        }
        Ok(f)
    }

    /// Free-DoF load realization at an accepted sample.
    pub fn f_free_at(&self, batch: &SampleBatch, sample: usize) -> Result<DVec> {
        Self::check_accepted(batch, sample)?;
        let mut f = self.f0_free.clone();
        for (extra, col) in &self.f_cols_free {
            f.axpy(batch.extra(sample, *extra), col, 1.0);
        }
        Ok(f)
    }

    /// Scatters a free-DoF solution back to the full DoF vector (zeros on
    /// constrained DoFs).
    pub fn expand(&self, free_values: &DVec) -> DVec {
        self.partition.expand(free_values, &DVector::zeros(self.partition.full_to_free.len()))
    }
}

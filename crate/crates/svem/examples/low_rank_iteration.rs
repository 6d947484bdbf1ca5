//! Weakly intrusive iterative solver: builds the solution as a short sum of
//! rank-one terms `u(θ) ≈ Σ λ_i(θ) d_i`.
//!
//! Each term alternates a deterministic reduced solve for the spatial vector
//! `d_i` with closed-form per-sample updates of the scalar weights `λ_i`; a
//! final reduced-order recalculation restores Galerkin optimality per sample.
//! The number of retained terms tracks the solution's spectral content, not
//! the number of random inputs — raising the input dimension from 8 to 56
//! grows the expansion far more slowly than a polynomial basis would grow.
//!
//! Run with: `cargo run --example low_rank_iteration`

use std::time::Instant;
use svem::mesh::PolyMesh;
use svem::random_field::{Distribution, ExtraInput, KlExpansion, KlOptions, Kernel, SampleBatch};
use svem::svee::{AffineCoeff, LoadSpec, PointLoad, SeparatedSystem};
use svem::win::{solve_win, WinOptions};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name)
}

fn main() -> svem::Result<()> {
    let mesh = PolyMesh::load(fixture("voronoi50.pmesh"))?;
    let extras = vec![ExtraInput { name: "force".into(), distribution: Distribution::Gaussian }];
    let loads = LoadSpec {
        body: None,
        tractions: vec![],
        point_loads: vec![PointLoad {
            set: "tip".into(),
            component: 1,
            coeff: AffineCoeff { base: -1000.0, random: Some((0, -100.0)) },
        }],
    };

    for (label, frac) in [("long correlation", 1.0), ("short correlation", 0.125)] {
        let kernel = Kernel::Separable2d { sigma: 10.0, lx: frac, ly: frac };
        let kl = KlExpansion::build(&mesh, &kernel, 100.0, &KlOptions::default())?;
        let system = SeparatedSystem::assemble(
            &mesh,
            &kl,
            0.3,
            svem::random_field::ElementReduction::VertexMean,
            &loads,
            &["left".into()],
            &extras,
        )?;
        let batch = SampleBatch::draw(&kl, &extras, 10_000, 7)?;

        let t = Instant::now();
        let sol = solve_win(&system, &batch, &WinOptions::default())?;
        let elapsed = t.elapsed().as_secs_f64();

        println!("{label}: {} random inputs -> {} terms in {:.2}s", system.m() + 1, sol.n_terms(), elapsed);
        println!("  {:>4} {:>12} {:>7}", "term", "energy left", "inner");
        for row in sol.trace() {
            println!("  {:>4} {:>12.3e} {:>7}", row.term, row.eps_u, row.inner_iterations);
        }

        // The spatial vectors are orthonormalized as the expansion grows.
        let worst = (0..sol.n_terms())
            .flat_map(|i| (0..sol.n_terms()).map(move |j| (i, j)))
            .map(|(i, j)| {
                let dot = sol.vectors()[i].dot(&sol.vectors()[j]);
                (dot - if i == j { 1.0 } else { 0.0 }).abs()
            })
            .fold(0.0f64, f64::max);
        println!("  orthonormality of spatial vectors: max |DᵀD − I| = {worst:.2e}\n");
    }
    Ok(())
}

//! Cross-validation of the three propagation strategies on one shared
//! sample batch.
//!
//! The polynomial-chaos solve, the low-rank iteration, and plain Monte Carlo
//! all consume the same problem and the same 10 000 input samples, so their
//! mean fields, standard-deviation fields, and probe-DoF densities must
//! agree. The example reports each solver's walltime and its deviation from
//! the Monte Carlo reference.
//!
//! Run with: `cargo run --example solver_comparison`

use std::time::Instant;
use svem::linalg::{DMat, DVec};
use svem::mc::{run_mcs, McMode, McOptions};
use svem::mesh::PolyMesh;
use svem::pc::{solve_pc, PcOptions};
use svem::random_field::{Distribution, ExtraInput, KlExpansion, KlOptions, Kernel, SampleBatch};
use svem::stats::{kde_pdf, mc_statistics, pc_statistics, pdf_abs_error, win_statistics};
use svem::svee::{AffineCoeff, LoadSpec, PointLoad, SeparatedSystem};
use svem::win::{solve_win, WinOptions};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name)
}

fn rel_l2(a: &DVec, reference: &DVec) -> f64 {
    let denom = reference.norm();
    if denom == 0.0 {
        (a - reference).norm()
    } else {
        (a - reference).norm() / denom
    }
}

fn main() -> svem::Result<()> {
    let mesh = PolyMesh::load(fixture("voronoi50.pmesh"))?;
    let kernel = Kernel::Separable2d { sigma: 10.0, lx: 1.0, ly: 1.0 };
    let kl = KlExpansion::build(&mesh, &kernel, 100.0, &KlOptions::default())?;
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
    let system = SeparatedSystem::assemble(
        &mesh,
        &kl,
        0.3,
        svem::random_field::ElementReduction::VertexMean,
        &loads,
        &["left".into()],
        &extras,
    )?;
    let batch = SampleBatch::draw(&kl, &extras, 10_000, 2718)?;
    let tip_dof = mesh.vertex_set("tip")?[0] * 2 + 1;
    let tip_free = system.partition().free.iter().position(|&d| d == tip_dof).unwrap();
    println!(
        "{} random inputs, {} free DoFs, {} samples\n",
        system.m() + 1,
        system.n_free(),
        batch.n_accepted()
    );

    // Monte Carlo reference with the tip history for a density estimate.
    let t = Instant::now();
    let mc = run_mcs(&system, &batch, &[tip_dof], &McOptions { mode: McMode::Streaming, residual_tol: 1e-10 })?;
    let mc_time = t.elapsed().as_secs_f64();
    let (mc_mean, mc_std) = mc_statistics(&mc);
    let mc_pdf = kde_pdf(&mc.probe_samples()[0], 512)?;

    // Polynomial chaos, order 2: probe history by evaluating the basis at
    // every accepted sample.
    let t = Instant::now();
    let pc = solve_pc(&system, &batch, &PcOptions { order: 2, ..PcOptions::default() })?;
    let pc_time = t.elapsed().as_secs_f64();
    let (pc_mean, pc_std) = pc_statistics(&pc, &batch);
    let gamma = pc.basis.eval_batch(&batch);
    let weights = DMat::from_fn(pc.coeffs.len(), 1, |i, _| pc.coeffs[i][tip_free]);
    let pc_history: Vec<f64> = (&gamma * &weights).column(0).iter().copied().collect();
    let pc_pdf = kde_pdf(&pc_history, 512)?;

    // Low-rank iteration: per-sample weights are already part of the result.
    let t = Instant::now();
    let win = solve_win(&system, &batch, &WinOptions::default())?;
    let win_time = t.elapsed().as_secs_f64();
    let (win_mean, win_std) = win_statistics(&win);
    let win_history: Vec<f64> = (0..win.accepted_indices().len())
        .map(|row| {
            (0..win.n_terms()).map(|i| win.lambda()[(row, i)] * win.vectors()[i][tip_free]).sum()
        })
        .collect();
    let win_pdf = kde_pdf(&win_history, 512)?;

    let peak = mc_pdf.density.iter().fold(0.0f64, |a, &b| a.max(b));
    println!(
        "{:<22} {:>9} {:>12} {:>12} {:>14}",
        "solver", "time", "mean err", "std err", "pdf err/peak"
    );
    println!("{:<22} {:>8.2}s {:>12} {:>12} {:>14}", "monte carlo (ref)", mc_time, "-", "-", "-");
    for (name, time, mean, std, pdf) in [
        ("polynomial chaos r=2", pc_time, pc_mean, pc_std, pc_pdf),
        (
            &format!("low-rank ({} terms)", win.n_terms()) as &str,
            win_time,
            win_mean,
            win_std,
            win_pdf,
        ),
    ] {
        let pdf_err = pdf_abs_error(&pdf, &mc_pdf)?.max_error();
        println!(
            "{:<22} {:>8.2}s {:>11.2e} {:>11.2e} {:>13.2}%",
            name,
            time,
            rel_l2(&mean, &mc_mean),
            rel_l2(&std, &mc_std),
            100.0 * pdf_err / peak
        );
    }
    Ok(())
}

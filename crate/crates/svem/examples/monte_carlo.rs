//! Monte Carlo reference solver: one factorized sparse solve per sample,
//! chunk-parallel, with bitwise-reproducible statistics.
//!
//! Samples are processed in fixed-size chunks whose partial moments are
//! combined in a fixed order, so the mean and standard deviation come out
//! identical no matter how many worker threads run — demonstrated here by
//! running the same batch on one thread and on all cores and comparing the
//! results bit for bit.
//!
//! Run with: `cargo run --example monte_carlo`

use std::time::Instant;
use svem::mc::{run_mcs, McMode, McOptions};
use svem::mesh::PolyMesh;
use svem::random_field::{Distribution, ExtraInput, KlExpansion, KlOptions, Kernel, SampleBatch};
use svem::svee::{AffineCoeff, LoadSpec, PointLoad, SeparatedSystem};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name)
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
    let batch = SampleBatch::draw(&kl, &extras, 10_000, 7)?;
    let tip_dof = mesh.vertex_set("tip")?[0] * 2 + 1;
    let opts = McOptions { mode: McMode::Streaming, residual_tol: 1e-10 };

    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let sol_1 = single.install(|| run_mcs(&system, &batch, &[tip_dof], &opts))?;
    let t1 = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let sol_n = run_mcs(&system, &batch, &[tip_dof], &opts)?;
    let tn = t.elapsed().as_secs_f64();

    println!(
        "solved {} samples ({} drawn, {} rejected by the positivity filter, {} solver failures)",
        sol_n.n_solved(),
        batch.n_samples(),
        batch.n_samples() - batch.n_accepted(),
        sol_n.failures().len()
    );
    let threads = rayon::current_num_threads();
    if threads > 1 {
        println!("1 thread: {t1:.2}s, {threads} threads: {tn:.2}s ({:.1}x speedup)", t1 / tn);
    } else {
        println!("single-core machine: both runs took {t1:.2}s / {tn:.2}s");
    }

    let identical = sol_1
        .mean_free()
        .iter()
        .zip(sol_n.mean_free().iter())
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && sol_1
            .std_free()
            .iter()
            .zip(sol_n.std_free().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("moments identical bit-for-bit across thread counts: {identical}");

    let history = &sol_n.probe_samples()[0];
    let mean = history.iter().sum::<f64>() / history.len() as f64;
    println!("\ntip deflection over {} samples:", history.len());
    println!("  mean {mean:.4e}");
    let (lo, hi) = history.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    println!("  range [{lo:.4e}, {hi:.4e}]");
    Ok(())
}

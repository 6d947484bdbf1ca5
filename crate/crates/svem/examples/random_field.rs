//! Modeling an uncertain material modulus as a truncated Karhunen-Loève
//! random field on the mesh vertices.
//!
//! Builds the covariance eigendecomposition for two correlation lengths,
//! shows how the truncation count reacts, draws a sample batch (with the
//! positivity filter that drops samples whose modulus dips near zero), maps
//! one realization to per-element values, and round-trips the expansion
//! through its on-disk format.
//!
//! Run with: `cargo run --example random_field`

use svem::mesh::PolyMesh;
use svem::random_field::{
    element_values, ElementReduction, KlExpansion, KlOptions, Kernel, SampleBatch,
};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name)
}

fn main() -> svem::Result<()> {
    let mesh = PolyMesh::load(fixture("voronoi50.pmesh"))?;
    let (lo, hi) = mesh.bbox();
    println!(
        "mesh: {} vertices on [{:.2},{:.2}] × [{:.2},{:.2}]\n",
        mesh.n_vertices(),
        lo.x,
        hi.x,
        lo.y,
        hi.y
    );

    // Mean 100, 10% coefficient of variation; correlation lengths set to the
    // domain extents first, then to an eighth of them.
    let mean = 100.0;
    let opts = KlOptions::default();
    for (label, frac) in [("domain-length correlation", 1.0), ("1/8-length correlation", 0.125)] {
        let kernel = Kernel::Separable2d {
            sigma: 10.0,
            lx: frac * (hi.x - lo.x),
            ly: frac * (hi.y - lo.y),
        };
        let kl = KlExpansion::build(&mesh, &kernel, mean, &opts)?;
        let evs = kl.eigenvalues();
        let shown = evs.len().min(4);
        println!(
            "{label}: m = {} modes at tolerance {:.0e} ({:.2}% of the field variance)",
            kl.m(),
            opts.tol,
            100.0 * kl.captured_variance_fraction()
        );
        println!(
            "  leading eigenvalues: {:?} ...",
            evs[..shown].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }

    // Sampling: 2000 standard-normal coefficient vectors, positivity-filtered.
    let kernel = Kernel::Separable2d { sigma: 10.0, lx: hi.x - lo.x, ly: hi.y - lo.y };
    let kl = KlExpansion::build(&mesh, &kernel, mean, &opts)?;
    let batch = SampleBatch::draw(&kl, &[], 2000, 42)?;
    println!(
        "\nsample batch: {} of {} samples accepted (modulus stays positive everywhere)",
        batch.n_accepted(),
        batch.n_samples()
    );

    // One realization: vertex values -> per-element moduli for assembly.
    let first = batch.accepted_indices()[0];
    let coeffs = &batch.row(first)[1..=kl.m()]; // skip the constant column
    let vertex_field = kl.vertex_field(coeffs);
    let element_field = element_values(&mesh, &vertex_field, ElementReduction::VertexMean);
    let (vmin, vmax) = vertex_field.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    println!("realization #{first}: vertex modulus in [{vmin:.2}, {vmax:.2}]");
    println!(
        "  element means (first 5): {:?}",
        element_field[..5].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
    );

    // The expansion serializes to a plain text format.
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("kl_expansion.txt");
    kl.save(&path)?;
    let reloaded = KlExpansion::load(&path)?;
    println!(
        "\nsave/load round-trip: {} modes, eigenvalues preserved exactly: {}",
        reloaded.m(),
        reloaded.eigenvalues() == kl.eigenvalues()
    );
    Ok(())
}

//! The declarative front end: a TOML run configuration drives mesh loading,
//! field construction, solving, and artifact output — the same path the
//! `svem` binary exposes as `mesh-info`, `kl`, `solve`, and `compare`.
//!
//! The example writes a config, runs the low-rank solver and a Monte Carlo
//! reference from it, compares the two output directories, and lists every
//! file the pipeline produced.
//!
//! Run with: `cargo run --example run_pipeline`

use std::fs;
use std::path::Path;
use svem::config::RunConfig;
use svem::pipeline::{mesh_info, run_compare, run_kl, run_solve};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name)
}

fn config_text(mesh: &str, out: &Path, method: &str) -> String {
    format!(
        r#"
mesh = "{mesh}"
seed = 99
output = "{}"

[material]
model = "plane-stress"
young = 100.0
poisson = 0.3

[field]
sigma = 10.0
correlation = [1.0, 1.0]

[boundary]
dirichlet = ["left"]

[[extra]]
name = "force"
distribution = "gaussian"

[[load.point]]
set = "tip"
component = 1
value = -1000.0
random_input = "force"
random_scale = -100.0

[solver]
method = "{method}"
samples = 2000

[[probe]]
name = "tip_y"
set = "tip"
component = 1
"#,
        out.display()
    )
}

fn list_tree(dir: &Path, indent: usize) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            println!("{:indent$}{name}/", "");
            list_tree(&path, indent + 2)?;
        } else {
            println!("{:indent$}{name} ({} bytes)", "", fs::metadata(&path)?.len());
        }
    }
    Ok(())
}

fn main() -> svem::Result<()> {
    let mesh = fixture("voronoi50.pmesh");
    println!("== mesh-info ==\n{}", mesh_info(Path::new(&mesh))?);

    let work = tempfile::tempdir()?;
    let mut dirs = Vec::new();
    for method in ["win", "mcs"] {
        let out = work.path().join(method);
        let run = RunConfig::parse(&config_text(&mesh, &out, method))?.resolve()?;

        let kl = run_kl(&run)?;
        let solve = run_solve(&run)?;
        println!(
            "== solve [{method}] == {} field modes ({:.2}% variance), {} of {} samples, {}",
            kl.n_modes,
            100.0 * kl.captured,
            solve.n_accepted,
            solve.n_samples,
            solve.detail
        );
        dirs.push(out);
    }

    let cmp_dir = work.path().join("compare");
    let report = run_compare(&dirs[0], &dirs[1], Some(&cmp_dir))?;
    println!("\n== compare win vs mcs ==");
    println!("mean field relative L2: {:.3e}", report.mean_rel_l2);
    println!("std field relative L2:  {:.3e}", report.std_rel_l2);
    for probe in &report.probes {
        println!(
            "probe '{}': max density error {:.3e} (reference peak {:.3e})",
            probe.name, probe.max_abs_error, probe.reference_peak
        );
    }

    println!("\n== artifacts ==");
    list_tree(work.path(), 0)?;
    Ok(())
}

//! End-to-end analysis pipelines behind the command-line interface.
//!
//! Each entry point takes validated inputs, runs one stage (inspect, expand,
//! solve, compare) and writes its artifacts as CSV/plain-text files. All
//! numeric output uses fixed-precision scientific notation so that a rerun
//! with the same configuration and seed reproduces the files byte for byte
//! (the wall-time column of `trace.csv` is the one documented exception).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{ResolvedRun, SolverMethod};
use crate::error::{Error, Result};
use crate::linalg::{DMat, DVec};
use crate::mesh::PolyMesh;
use crate::random_field::{KlExpansion, SampleBatch};
use crate::stats::{self, FieldStatistics, KDE_GRID_POINTS};
use crate::svee::SeparatedSystem;
use crate::{mc, pc, win};

/// Minimum history length for a kernel density estimate; shorter probe
/// histories skip the `pdf/` artifact instead of failing the run.
const MIN_PDF_SAMPLES: usize = 100;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Human-readable mesh summary: dimensions, entity counts, named sets.
pub fn mesh_info(path: &Path) -> Result<String> {
    let mesh = PolyMesh::load(path)?;
    let mut s = String::new();
    let dim = mesh.dim();
    let (lo, hi) = mesh.bbox();
    let n_elem = mesh.n_elements();
    let (mut v_min, mut v_max) = (usize::MAX, 0usize);
    let mut measure = 0.0;
    for e in mesh.elements() {
        v_min = v_min.min(e.n_vertices());
        v_max = v_max.max(e.n_vertices());
        measure += e.measure();
    }
    s += &format!("mesh: {}\n", path.display());
    s += &format!("dimension: {dim}\n");
    s += &format!(
        "vertices: {} ({} displacement DoFs)\n",
        mesh.n_vertices(),
        dim * mesh.n_vertices()
    );
    s += &format!("elements: {n_elem} ({v_min}–{v_max} vertices each)\n");
    s += &format!("total measure: {measure:.6}\n");
    let corner = |p: crate::mesh::Point| {
        (0..dim).map(|i| format!("{:.6}", p[i])).collect::<Vec<_>>().join(", ")
    };
    s += &format!("bounding box: [{}] to [{}]\n", corner(lo), corner(hi));
    let mut vsets: Vec<&str> = mesh.vertex_set_names().collect();
    vsets.sort_unstable();
    s += &format!("vertex sets: {}\n", vsets.len());
    for name in vsets {
        s += &format!("  {name}: {} vertices\n", mesh.vertex_set(name)?.len());
    }
    let mut fsets: Vec<&str> = mesh.face_set_names().collect();
    fsets.sort_unstable();
    s += &format!("face sets: {}\n", fsets.len());
    for name in fsets {
        s += &format!("  {name}: {} faces\n", mesh.face_set(name)?.len());
    }
    Ok(s)
}

/// Outcome of the field-expansion stage.
pub struct KlReport {
    pub n_modes: usize,
    pub captured: f64,
    pub out_dir: PathBuf,
}

/// Builds the truncated field expansion and saves it with its spectrum.
///
/// Artifacts: `kl_expansion.txt` (reloadable expansion) and `spectrum.csv`
/// (`mode,eigenvalue` rows).
pub fn run_kl(run: &ResolvedRun) -> Result<KlReport> {
    let out = run.config.output.clone();
    let kl = KlExpansion::build(
        &run.mesh,
        &run.kernel,
        run.config.material.young,
        &run.config.kl_options(),
    )?;
    fs::create_dir_all(&out)?;
    kl.save(out.join("kl_expansion.txt"))?;
    let mut f = create(&out.join("spectrum.csv"))?;
    writeln!(f, "mode,eigenvalue")?;
    for (i, ev) in kl.eigenvalues().iter().enumerate() {
        writeln!(f, "{},{:.12e}", i + 1, ev)?;
    }
    Ok(KlReport {
        n_modes: kl.m(),
        captured: kl.captured_variance_fraction(),
        out_dir: out,
    })
}

/// Outcome of a solve run.
pub struct SolveReport {
    pub solver: &'static str,
    pub n_modes: usize,
    pub n_samples: usize,
    pub n_accepted: usize,
    /// Solver-specific one-line summary.
    pub detail: String,
    pub out_dir: PathBuf,
}

/// One probe's sampled response history: (original sample index, value).
struct ProbeHistory {
    name: String,
    values: Vec<(usize, f64)>,
}

/// Evaluates per-sample probe values from a separated representation:
/// `value[s] = Σ_i weights[(s, i)] · vectors[i][dof]`.
fn separated_probe_history(
    name: &str,
    weights: &DMat,
    vectors: &[DVec],
    free_dof: usize,
    sample_ids: &[usize],
) -> ProbeHistory {
    let values = sample_ids
        .iter()
        .enumerate()
        .map(|(s, &orig)| {
            let v: f64 =
                vectors.iter().enumerate().map(|(i, d)| weights[(s, i)] * d[free_dof]).sum();
            (orig, v)
        })
        .collect();
    ProbeHistory { name: name.to_string(), values }
}

/// Runs the configured solver end to end and writes all artifacts into the
/// configured output directory:
///
/// * `stats.csv` — per-vertex mean and standard deviation of displacement,
/// * `probes/<name>.csv` — per-sample response histories,
/// * `pdf/<name>.csv` — kernel density estimates of those histories,
/// * `trace.csv` — per-term convergence trace (iterative solver),
/// * `run_manifest` — the effective configuration echoed back.
pub fn run_solve(run: &ResolvedRun) -> Result<SolveReport> {
    let cfg = &run.config;
    let out = cfg.output.clone();
    let kl = KlExpansion::build(&run.mesh, &run.kernel, cfg.material.young, &cfg.kl_options())?;
    let system = SeparatedSystem::assemble(
        &run.mesh,
        &kl,
        cfg.material.poisson,
        cfg.field.reduction.into(),
        &run.loads,
        &cfg.boundary.dirichlet,
        &run.extras,
    )?;
    let batch = SampleBatch::draw(&kl, &run.extras, cfg.solver.samples, cfg.seed)?;
    let accepted = batch.accepted_indices();

    // Probe DoFs restricted to the free set; constrained probes are
    // configuration errors.
    let partition = system.partition();
    let mut probe_free = Vec::with_capacity(run.probes.len());
    for (name, dof) in &run.probes {
        let free = partition.full_to_free.get(*dof).copied().flatten().ok_or_else(|| {
            Error::config(format!(
                "probe '{name}' sits on a constrained DoF — it would be identically zero"
            ))
        })?;
        probe_free.push((name.clone(), free));
    }

    let mut trace_rows: Vec<win::TraceRow> = Vec::new();
    let (mean_free, std_free, histories, detail) = match cfg.solver.method {
        SolverMethod::Pc => {
            let sol = pc::solve_pc(&system, &batch, &cfg.pc_options())?;
            let (mean, std) = stats::pc_statistics(&sol, &batch);
            let weights = sol.basis.eval_batch(&batch);
            let histories = probe_free
                .iter()
                .map(|(name, p)| {
                    separated_probe_history(name, &weights, &sol.coeffs, *p, &accepted)
                })
                .collect();
            let detail = format!(
                "chaos basis size {}, {} solver iterations",
                sol.basis.len(),
                sol.iterations
            );
            (mean, std, histories, detail)
        }
        SolverMethod::Win => {
            let sol = win::solve_win(&system, &batch, &cfg.win_options())?;
            let (mean, std) = stats::win_statistics(&sol);
            let histories = probe_free
                .iter()
                .map(|(name, p)| {
                    separated_probe_history(
                        name,
                        sol.lambda(),
                        sol.vectors(),
                        *p,
                        sol.accepted_indices(),
                    )
                })
                .collect();
            trace_rows = sol.trace().to_vec();
            let detail = format!("{} separated terms", sol.n_terms());
            (mean, std, histories, detail)
        }
        SolverMethod::Mcs => {
            let probe_dofs: Vec<usize> = run.probes.iter().map(|(_, dof)| *dof).collect();
            let sol = mc::run_mcs(&system, &batch, &probe_dofs, &cfg.mc_options())?;
            let (mean, std) = stats::mc_statistics(&sol);
            let histories = run
                .probes
                .iter()
                .zip(sol.probe_samples())
                .map(|((name, _), vals)| ProbeHistory {
                    name: name.clone(),
                    values: sol.solved_indices().iter().copied().zip(vals.iter().copied()).collect(),
                })
                .collect();
            let detail = format!(
                "{} of {} accepted samples solved ({} residual failures)",
                sol.n_solved(),
                accepted.len(),
                sol.failures().len()
            );
            (mean, std, histories, detail)
        }
    };
    let histories: Vec<ProbeHistory> = histories;

    // stats.csv
    let field = FieldStatistics::from_free(partition, &mean_free, &std_free);
    let mut f = create(&out.join("stats.csv"))?;
    field.write_csv(&run.mesh, &mut f)?;

    // probes/<name>.csv and pdf/<name>.csv
    for h in &histories {
        let mut f = create(&out.join("probes").join(format!("{}.csv", h.name)))?;
        writeln!(f, "sample,value")?;
        for (orig, v) in &h.values {
            writeln!(f, "{orig},{v:.12e}")?;
        }
        if h.values.len() >= MIN_PDF_SAMPLES {
            let samples: Vec<f64> = h.values.iter().map(|&(_, v)| v).collect();
            let density = stats::kde_pdf(&samples, KDE_GRID_POINTS)?;
            let mut f = create(&out.join("pdf").join(format!("{}.csv", h.name)))?;
            density.write_csv(&mut f)?;
        }
    }

    // trace.csv — populated by the iterative solver, header-only otherwise.
    let mut f = create(&out.join("trace.csv"))?;
    writeln!(f, "term,eps_u,inner_iterations,seconds")?;
    for row in &trace_rows {
        writeln!(f, "{},{:.6e},{},{:.6e}", row.term, row.eps_u, row.inner_iterations, row.seconds)?;
    }

    write_manifest(&out, cfg)?;

    Ok(SolveReport {
        solver: cfg.solver.method.name(),
        n_modes: kl.m(),
        n_samples: cfg.solver.samples,
        n_accepted: accepted.len(),
        detail,
        out_dir: out,
    })
}

fn write_manifest(out: &Path, cfg: &crate::config::RunConfig) -> Result<()> {
    let body = toml::to_string(cfg)
        .map_err(|e| Error::config(format!("cannot serialize configuration: {e}")))?;
    let mut f = create(&out.join("run_manifest"))?;
    writeln!(f, "# svem {} run manifest", env!("CARGO_PKG_VERSION"))?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// One probe's cross-run density comparison.
pub struct ProbeComparison {
    pub name: String,
    /// Max pointwise |pdf_a − pdf_b| over the shared grid.
    pub max_abs_error: f64,
    /// Peak of the reference (second run) density, for normalization.
    pub reference_peak: f64,
}

/// Outcome of comparing two solve-run output directories.
pub struct CompareReport {
    /// ‖mean_a − mean_b‖ / ‖mean_b‖ over all vertex statistics.
    pub mean_rel_l2: f64,
    pub std_rel_l2: f64,
    pub probes: Vec<ProbeComparison>,
    /// Probes present in both runs whose densities could not be compared
    /// (too few samples or zero spread).
    pub skipped: Vec<String>,
}

fn read_stats_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::config(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let mean_cols: Vec<usize> =
        cols.iter().enumerate().filter(|(_, c)| c.starts_with("mean_")).map(|(i, _)| i).collect();
    let std_cols: Vec<usize> =
        cols.iter().enumerate().filter(|(_, c)| c.starts_with("std_")).map(|(i, _)| i).collect();
    if mean_cols.is_empty() || std_cols.is_empty() {
        return Err(Error::config(format!(
            "{} has no mean_*/std_* columns — not a stats.csv",
            path.display()
        )));
    }
    let (mut means, mut stds) = (Vec::new(), Vec::new());
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    Error::config(format!("{}:{}: bad numeric field", path.display(), ln + 2))
                })
        };
        for &i in &mean_cols {
            means.push(parse(i)?);
        }
        for &i in &std_cols {
            stds.push(parse(i)?);
        }
    }
    Ok((means, stds))
}

fn read_probe_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .skip(1)
        .map(|line| {
            line.split(',')
                .nth(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::config(format!("{}: bad row '{line}'", path.display())))
        })
        .collect()
}

/// Relative L2 distance with the second argument as reference; falls back to
/// the absolute distance when the reference is identically zero.
fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

fn probe_names(dir: &Path) -> Vec<String> {
    let mut names = Vec::new();
    if let Ok(entries) = fs::read_dir(dir.join("probes")) {
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "csv") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    names.push(stem.to_string());
                }
            }
        }
    }
    names.sort_unstable();
    names
}

/// Compares two solve-run directories: relative L2 distance of the vertex
/// mean/std fields plus pointwise density errors for every probe present in
/// both runs (the second directory is the reference). With `out` set, writes
/// `compare.csv` and `pdf_error/<probe>.csv`.
pub fn run_compare(dir_a: &Path, dir_b: &Path, out: Option<&Path>) -> Result<CompareReport> {
    let (mean_a, std_a) = read_stats_csv(&dir_a.join("stats.csv"))?;
    let (mean_b, std_b) = read_stats_csv(&dir_b.join("stats.csv"))?;
    if mean_a.len() != mean_b.len() {
        return Err(Error::config(format!(
            "runs have different stats sizes ({} vs {}) — different meshes?",
            mean_a.len(),
            mean_b.len()
        )));
    }
    let mean_rel_l2 = rel_l2(&mean_a, &mean_b);
    let std_rel_l2 = rel_l2(&std_a, &std_b);

    let names_b = probe_names(dir_b);
    let mut probes = Vec::new();
    let mut skipped = Vec::new();
    let mut curves = Vec::new();
    for name in probe_names(dir_a) {
        if !names_b.contains(&name) {
            continue;
        }
        let file = format!("{name}.csv");
        let sa = read_probe_csv(&dir_a.join("probes").join(&file))?;
        let sb = read_probe_csv(&dir_b.join("probes").join(&file))?;
        let comparable = stats::kde_pdf(&sa, KDE_GRID_POINTS).and_then(|da| {
            let db = stats::kde_pdf(&sb, KDE_GRID_POINTS)?;
            let curve = stats::pdf_abs_error(&da, &db)?;
            Ok((da, db, curve))
        });
        match comparable {
            Ok((_, db, curve)) => {
                let peak = db.density.iter().cloned().fold(0.0, f64::max);
                probes.push(ProbeComparison {
                    name: name.clone(),
                    max_abs_error: curve.max_error(),
                    reference_peak: peak,
                });
                curves.push((name, curve));
            }
            Err(_) => skipped.push(name),
        }
    }

    if let Some(out) = out {
        let mut f = create(&out.join("compare.csv"))?;
        writeln!(f, "quantity,value")?;
        writeln!(f, "mean_rel_l2,{mean_rel_l2:.12e}")?;
        writeln!(f, "std_rel_l2,{std_rel_l2:.12e}")?;
        for p in &probes {
            writeln!(f, "pdf_max_error_{},{:.12e}", p.name, p.max_abs_error)?;
            writeln!(f, "pdf_ref_peak_{},{:.12e}", p.name, p.reference_peak)?;
        }
        for (name, curve) in &curves {
            let mut f = create(&out.join("pdf_error").join(format!("{name}.csv")))?;
            writeln!(f, "value,abs_error")?;
            for (x, e) in curve.grid.iter().zip(&curve.error) {
                writeln!(f, "{x:.12e},{e:.12e}")?;
            }
        }
    }

    Ok(CompareReport { mean_rel_l2, std_rel_l2, probes, skipped })
}

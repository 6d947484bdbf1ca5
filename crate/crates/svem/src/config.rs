//! Declarative run configuration (TOML).
//!
//! One file describes a complete stochastic analysis: mesh, material, random
//! field, loads, boundary conditions, solver, and probes. All randomness
//! flows from the single `seed` key, so a configuration reproduces its
//! outputs exactly. `RunConfig::resolve` loads the mesh and cross-checks
//! every reference (set names, random-input names, dimensions) up front with
//! actionable messages.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::PolyMesh;
use crate::random_field::{Distribution, ElementReduction, ExtraInput, Kernel, KlOptions};
use crate::svee::{AffineCoeff, LoadSpec, PointLoad, VectorLoad};
use crate::vem::Material;
use crate::{mc, pc, win};

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_tolerance() -> f64 {
    1e-3
}

/// Top-level run configuration, one solver per invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mesh file path, relative to the configuration file.
    pub mesh: PathBuf,
    /// Master seed for sample generation.
    pub seed: u64,
    /// Output directory (overridable on the command line).
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub material: MaterialConfig,
    pub field: FieldConfig,
    pub boundary: BoundaryConfig,
    /// Additional scalar random inputs (load factors etc.).
    #[serde(default)]
    pub extra: Vec<ExtraConfig>,
    #[serde(default)]
    pub load: LoadConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub probe: Vec<ProbeConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaterialModel {
    #[serde(rename = "plane-stress")]
    PlaneStress,
    #[serde(rename = "isotropic-3d")]
    Isotropic3d,
}

impl MaterialModel {
    pub fn dim(&self) -> usize {
        match self {
            MaterialModel::PlaneStress => 2,
            MaterialModel::Isotropic3d => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub model: MaterialModel,
    /// Mean Young's modulus E₀.
    pub young: f64,
    pub poisson: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionConfig {
    Gaussian,
    Uniform01,
}

impl From<DistributionConfig> for Distribution {
    fn from(d: DistributionConfig) -> Self {
        match d {
            DistributionConfig::Gaussian => Distribution::Gaussian,
            DistributionConfig::Uniform01 => Distribution::Uniform01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionConfig {
    VertexMean,
    CentroidNearestVertex,
}

impl From<ReductionConfig> for ElementReduction {
    fn from(r: ReductionConfig) -> Self {
        match r {
            ReductionConfig::VertexMean => ElementReduction::VertexMean,
            ReductionConfig::CentroidNearestVertex => ElementReduction::CentroidNearestVertex,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// Marginal standard deviation of the modulus field.
    pub sigma: f64,
    /// Correlation lengths, one per axis.
    pub correlation: Vec<f64>,
    /// Interpret `correlation` as fractions of the mesh bounding-box extent.
    #[serde(default)]
    pub fraction: bool,
    /// Eigenvalue-decay truncation tolerance.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "FieldConfig::default_distribution")]
    pub distribution: DistributionConfig,
    #[serde(default = "FieldConfig::default_reduction")]
    pub reduction: ReductionConfig,
    /// Weight the covariance by lumped vertex measures.
    #[serde(default)]
    pub weighted: bool,
}

impl FieldConfig {
    fn default_distribution() -> DistributionConfig {
        DistributionConfig::Gaussian
    }
    fn default_reduction() -> ReductionConfig {
        ReductionConfig::VertexMean
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Vertex sets whose displacements are fixed to zero.
    pub dirichlet: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraConfig {
    pub name: String,
    pub distribution: DistributionConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    #[serde(default)]
    pub point: Vec<PointLoadConfig>,
    #[serde(default)]
    pub traction: Vec<TractionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodyConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLoadConfig {
    /// Vertex set receiving the load.
    pub set: String,
    /// Displacement component (0-based).
    pub component: usize,
    /// Deterministic load value.
    pub value: f64,
    /// Name of the extra random input scaling the load, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_input: Option<String>,
    /// Multiplier applied to the random input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionConfig {
    /// Face set the traction acts on.
    pub set: String,
    /// Traction direction (length = mesh dimension).
    pub direction: Vec<f64>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub direction: Vec<f64>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Pc,
    Win,
    Mcs,
}

impl SolverMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SolverMethod::Pc => "pc",
            SolverMethod::Win => "win",
            SolverMethod::Mcs => "mcs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McModeConfig {
    Full,
    Streaming,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Monte Carlo sample count n_s (also sizes the sample batches the
    /// spectral solvers are evaluated on).
    #[serde(default = "SolverConfig::default_samples")]
    pub samples: usize,
    /// Polynomial order r (polynomial-chaos solver).
    #[serde(default = "SolverConfig::default_order")]
    pub order: usize,
    /// Inner tolerance of the iterative solver.
    #[serde(default = "SolverConfig::default_eps_d")]
    pub eps_d: f64,
    /// Outer tolerance of the iterative solver.
    #[serde(default = "SolverConfig::default_eps_u")]
    pub eps_u: f64,
    #[serde(default = "SolverConfig::default_max_inner")]
    pub max_inner: usize,
    #[serde(default = "SolverConfig::default_max_terms")]
    pub max_terms: usize,
    /// Monte Carlo sample storage policy.
    #[serde(default = "SolverConfig::default_mode")]
    pub mode: McModeConfig,
    /// Dense-direct size threshold of the polynomial-chaos solver.
    #[serde(default = "SolverConfig::default_direct_limit")]
    pub direct_limit: usize,
}

impl SolverConfig {
    fn default_samples() -> usize {
        10_000
    }
    fn default_order() -> usize {
        2
    }
    fn default_eps_d() -> f64 {
        1e-3
    }
    fn default_eps_u() -> f64 {
        1e-6
    }
    fn default_max_inner() -> usize {
        50
    }
    fn default_max_terms() -> usize {
        50
    }
    fn default_mode() -> McModeConfig {
        McModeConfig::Streaming
    }
    fn default_direct_limit() -> usize {
        1000
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Probe name used for artifact files and cross-run alignment.
    pub name: String,
    /// Single-vertex set the probe sits on.
    pub set: String,
    /// Displacement component (0-based).
    pub component: usize,
}

/// A validated configuration with the mesh loaded and every reference
/// resolved to solver-level objects.
#[derive(Debug)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub mesh: PolyMesh,
    pub kernel: Kernel,
    pub extras: Vec<ExtraInput>,
    pub loads: LoadSpec,
    /// Probe name → full DoF index.
    pub probes: Vec<(String, usize)>,
}

impl RunConfig {
    /// Parses a configuration file; the mesh path is re-rooted at the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            if config.mesh.is_relative() {
                config.mesh = dir.join(&config.mesh);
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Loads the mesh and validates every cross-reference.
    pub fn resolve(self) -> Result<ResolvedRun> {
        let mesh = PolyMesh::load(&self.mesh)?;
        let dim = mesh.dim();
        if self.material.model.dim() != dim {
            return Err(Error::config(format!(
                "material model {:?} expects a {}D mesh but {} is {}D",
                self.material.model,
                self.material.model.dim(),
                self.mesh.display(),
                dim
            )));
        }
        // validates the modulus/Poisson ranges
        Material::new(self.material.young, self.material.poisson, dim)?;

        if self.field.correlation.len() != dim {
            return Err(Error::config(format!(
                "field.correlation needs {dim} lengths for a {dim}D mesh, got {}",
                self.field.correlation.len()
            )));
        }
        if !(self.field.tolerance > 0.0) {
            return Err(Error::config("field.tolerance must be positive"));
        }
        let kernel = self.kernel(&mesh)?;

        if self.boundary.dirichlet.is_empty() {
            return Err(Error::config(
                "boundary.dirichlet must name at least one vertex set",
            ));
        }
        for name in &self.boundary.dirichlet {
            mesh.vertex_set(name)?;
        }

        let mut extras = Vec::with_capacity(self.extra.len());
        for e in &self.extra {
            if extras.iter().any(|x: &ExtraInput| x.name == e.name) {
                return Err(Error::config(format!("duplicate random input '{}'", e.name)));
            }
            extras.push(ExtraInput { name: e.name.clone(), distribution: e.distribution.into() });
        }

        let loads = self.load_spec(&mesh, &extras)?;
        if loads.body.is_none() && loads.tractions.is_empty() && loads.point_loads.is_empty() {
            return Err(Error::config("no loads configured — the solution would be zero"));
        }

        if !(self.solver.samples >= 1) {
            return Err(Error::config("solver.samples must be at least 1"));
        }
        if !(self.solver.eps_d > 0.0) || !(self.solver.eps_u > 0.0) {
            return Err(Error::config("solver tolerances must be positive"));
        }

        let mut probes = Vec::with_capacity(self.probe.len());
        for p in &self.probe {
            if probes.iter().any(|(n, _)| n == &p.name) {
                return Err(Error::config(format!("duplicate probe name '{}'", p.name)));
            }
            let verts = mesh.vertex_set(&p.set)?;
            if verts.len() != 1 {
                return Err(Error::config(format!(
                    "probe '{}' needs a single-vertex set; '{}' has {} vertices",
                    p.name,
                    p.set,
                    verts.len()
                )));
            }
            if p.component >= dim {
                return Err(Error::config(format!(
                    "probe '{}' component {} out of range for a {dim}D mesh",
                    p.name, p.component
                )));
            }
            probes.push((p.name.clone(), mesh.dof(verts[0], p.component)));
        }

        Ok(ResolvedRun { mesh, kernel, extras, loads, probes, config: self })
    }

    fn kernel(&self, mesh: &PolyMesh) -> Result<Kernel> {
        let mut lens = self.field.correlation.clone();
        if self.field.fraction {
            let (lo, hi) = mesh.bbox();
            for (i, l) in lens.iter_mut().enumerate() {
                *l *= hi[i] - lo[i];
            }
        }
        let sigma = self.field.sigma;
        Ok(match mesh.dim() {
            2 => Kernel::Separable2d { sigma, lx: lens[0], ly: lens[1] },
            _ => Kernel::Exponential3d { sigma, lx: lens[0], ly: lens[1], lz: lens[2] },
        })
    }

    pub fn kl_options(&self) -> KlOptions {
        KlOptions {
            tol: self.field.tolerance,
            weighted: self.field.weighted,
            distribution: self.field.distribution.into(),
            ..KlOptions::default()
        }
    }

    pub fn pc_options(&self) -> pc::PcOptions {
        pc::PcOptions {
            order: self.solver.order,
            direct_limit: self.solver.direct_limit,
            ..pc::PcOptions::default()
        }
    }

    pub fn win_options(&self) -> win::WinOptions {
        win::WinOptions {
            eps_d: self.solver.eps_d,
            eps_u: self.solver.eps_u,
            max_inner: self.solver.max_inner,
            max_terms: self.solver.max_terms,
            init: win::LambdaInit::Ones,
        }
    }

    pub fn mc_options(&self) -> mc::McOptions {
        mc::McOptions {
            mode: match self.solver.mode {
                McModeConfig::Full => mc::McMode::Full,
                McModeConfig::Streaming => mc::McMode::Streaming,
            },
            ..mc::McOptions::default()
        }
    }

    fn affine(
        value: f64,
        random_input: &Option<String>,
        random_scale: Option<f64>,
        extras: &[ExtraInput],
        what: &str,
    ) -> Result<AffineCoeff> {
        match (random_input, random_scale) {
            (None, None) => Ok(AffineCoeff::constant(value)),
            (Some(name), Some(scale)) => {
                let idx = extras.iter().position(|e| &e.name == name).ok_or_else(|| {
                    Error::config(format!(
                        "{what} references unknown random input '{name}' — declare it \
                         under [[extra]]"
                    ))
                })?;
                Ok(AffineCoeff { base: value, random: Some((idx, scale)) })
            }
            (Some(_), None) => Err(Error::config(format!(
                "{what} sets random_input without random_scale"
            ))),
            (None, Some(_)) => Err(Error::config(format!(
                "{what} sets random_scale without random_input"
            ))),
        }
    }

    fn direction(dir: &[f64], dim: usize, what: &str) -> Result<[f64; 3]> {
        if dir.len() != dim {
            return Err(Error::config(format!(
                "{what} direction needs {dim} components, got {}",
                dir.len()
            )));
        }
        let mut d = [0.0; 3];
        d[..dim].copy_from_slice(dir);
        Ok(d)
    }

    fn load_spec(&self, mesh: &PolyMesh, extras: &[ExtraInput]) -> Result<LoadSpec> {
        let dim = mesh.dim();
        let mut spec = LoadSpec::default();
        if let Some(body) = &self.load.body {
            spec.body = Some(VectorLoad {
                direction: Self::direction(&body.direction, dim, "body load")?,
                coeff: Self::affine(
                    body.value,
                    &body.random_input,
                    body.random_scale,
                    extras,
                    "body load",
                )?,
            });
        }
        for t in &self.load.traction {
            mesh.face_set(&t.set)?;
            spec.tractions.push((
                t.set.clone(),
                VectorLoad {
                    direction: Self::direction(&t.direction, dim, "traction")?,
                    coeff: Self::affine(
                        t.value,
                        &t.random_input,
                        t.random_scale,
                        extras,
                        "traction",
                    )?,
                },
            ));
        }
        for p in &self.load.point {
            mesh.vertex_set(&p.set)?;
            if p.component >= dim {
                return Err(Error::config(format!(
                    "point load on '{}': component {} out of range for a {dim}D mesh",
                    p.set, p.component
                )));
            }
            spec.point_loads.push(PointLoad {
                set: p.set.clone(),
                component: p.component,
                coeff: Self::affine(
                    p.value,
                    &p.random_input,
                    p.random_scale,
                    extras,
                    "point load",
                )?,
            });
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> String {
        format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
    }

    fn minimal_toml() -> String {
        format!(
            r#"
mesh = "{}"
seed = 7

[material]
model = "plane-stress"
young = 100.0
poisson = 0.3

[field]
sigma = 20.0
correlation = [1.0, 1.0]

[boundary]
dirichlet = ["left"]

[[extra]]
name = "load"
distribution = "gaussian"

[[load.point]]
set = "tip"
component = 1
value = -1000.0
random_input = "load"
random_scale = -100.0

[solver]
method = "win"
samples = 200

[[probe]]
name = "tip_y"
set = "tip"
component = 1
"#,
            fixture("voronoi50.pmesh")
        )
    }

    #[test]
    fn minimal_config_resolves() {
        let run = RunConfig::parse(&minimal_toml()).unwrap().resolve().unwrap();
        assert_eq!(run.mesh.dim(), 2);
        assert_eq!(run.extras.len(), 1);
        assert_eq!(run.loads.point_loads.len(), 1);
        assert_eq!(run.loads.point_loads[0].coeff.random, Some((0, -100.0)));
        assert_eq!(run.probes.len(), 1);
        assert_eq!(run.config.solver.method.name(), "win");
        // defaults
        assert_eq!(run.config.solver.eps_d, 1e-3);
        assert_eq!(run.config.solver.eps_u, 1e-6);
        assert_eq!(run.config.field.tolerance, 1e-3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = minimal_toml().replace("seed = 7", "seed = 7\nbogus = 1");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "unhelpful message: {err}");
    }

    #[test]
    fn unknown_random_input_is_caught() {
        let text = minimal_toml().replace("random_input = \"load\"", "random_input = \"typo\"");
        let err = RunConfig::parse(&text).unwrap().resolve().unwrap_err().to_string();
        assert!(err.contains("typo") && err.contains("[[extra]]"), "{err}");
    }

    #[test]
    fn wrong_dimension_material_is_caught() {
        let text = minimal_toml().replace("plane-stress", "isotropic-3d");
        let err = RunConfig::parse(&text).unwrap().resolve().unwrap_err().to_string();
        assert!(err.contains("3D") && err.contains("2D"), "{err}");
    }

    #[test]
    fn missing_set_is_caught() {
        let text = minimal_toml().replace("dirichlet = [\"left\"]", "dirichlet = [\"nope\"]");
        let err = RunConfig::parse(&text).unwrap().resolve().unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");
    }

    #[test]
    fn fractional_correlation_lengths_scale_with_the_bbox() {
        let text = minimal_toml().replace(
            "correlation = [1.0, 1.0]",
            "correlation = [0.5, 0.25]\nfraction = true",
        );
        let run = RunConfig::parse(&text).unwrap().resolve().unwrap();
        // voronoi50 tessellates the unit square
        match run.kernel {
            Kernel::Separable2d { lx, ly, .. } => {
                assert!((lx - 0.5).abs() < 1e-12);
                assert!((ly - 0.25).abs() < 1e-12);
            }
            _ => panic!("wrong kernel"),
        }
    }

    #[test]
    fn zero_loads_are_rejected() {
        let mut text = minimal_toml();
        text = text.replace(
            r#"[[load.point]]
set = "tip"
component = 1
value = -1000.0
random_input = "load"
random_scale = -100.0
"#,
            "",
        );
        let err = RunConfig::parse(&text).unwrap().resolve().unwrap_err().to_string();
        assert!(err.contains("load"), "{err}");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = RunConfig::parse(&minimal_toml()).unwrap();
        let echoed = toml::to_string(&config).unwrap();
        let again = RunConfig::parse(&echoed).unwrap();
        assert_eq!(toml::to_string(&again).unwrap(), echoed);
    }
}

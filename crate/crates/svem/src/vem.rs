//! Low-order virtual element operators for linear elasticity on polygonal and
//! polyhedral cells, plus global assembly of stiffness and load vectors.
//!
//! For each element the construction needs only the boundary integrals of the
//! vertex basis functions: `A_i = (1/|e|) ∮ φ_i n dS`. From these it builds
//! the strain projector `B`, the nodal affine projector `S`, the consistency
//! stiffness `|e| Bᵀ G B` and the rank-completing stabilization
//! `γ (I−S)ᵀ(I−S)` with `γ = tr(G)/2`. All element matrices are linear in the
//! Young's modulus, so the global assembler caches unit-modulus element
//! matrices once and rescales them per Young's-modulus mode or per sample.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, CsrPattern, DMat, DVec};
use crate::mesh::{ElementTopo, Point, PolyMesh};

/// Isotropic material parameters. 2D uses the plane-stress law.
#[derive(Debug, Clone, Copy)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
}

impl Material {
    pub fn new(young: f64, poisson: f64, dim: usize) -> Result<Self> {
        if !(young > 0.0) {
            return Err(Error::config(format!("Young's modulus must be positive, got {young}")));
        }
        let nu_max = if dim == 2 { 1.0 } else { 0.5 };
        if !(0.0..nu_max).contains(&poisson) {
            return Err(Error::config(format!(
                "Poisson ratio must lie in [0, {nu_max}) for dim={dim}, got {poisson}"
            )));
        }
        Ok(Material { young, poisson })
    }
}

/// Number of independent strain components in Voigt notation.
pub fn n_strain(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Elasticity matrix `G` in Voigt notation with engineering shear strains.
///
/// 2D (plane stress), strain order `(εxx, εyy, γxy)`; 3D strain order
/// `(εxx, εyy, εzz, γxy, γyz, γxz)`.
pub fn elasticity_matrix(dim: usize, young: f64, poisson: f64) -> DMat {
    let nu = poisson;
    match dim {
        2 => {
            let c = young / (1.0 - nu * nu);
            DMatrix::from_row_slice(
                3,
                3,
                &[c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0],
            )
        }
        3 => {
            let c = young / ((1.0 + nu) * (1.0 - 2.0 * nu));
            let d = c * (1.0 - nu);
            let o = c * nu;
            let s = c * (1.0 - 2.0 * nu) / 2.0;
            let mut g = DMatrix::zeros(6, 6);
            for i in 0..3 {
                for j in 0..3 {
                    g[(i, j)] = if i == j { d } else { o };
                }
                g[(3 + i, 3 + i)] = s;
            }
            g
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Boundary-integrated basis gradients `A_i = (1/|e|) ∮ φ_i n dS`, one per
/// local vertex (in `element.vertex_ids()` order).
///
/// 2D: each edge contributes half its length times its outward normal to both
/// endpoints. 3D: each face is fanned about its vertex average, where every
/// basis function of the face takes the value `1/n_face`; a triangle with
/// vertex values `(c, a, b)` contributes `(c+a+b)/3` times its area vector.
pub fn projector_gradients(mesh: &PolyMesh, e: usize) -> Vec<Point> {
    let elem = mesh.element(e);
    let n = elem.n_vertices();
    let mut grads = vec![Point::zeros(); n];
    match elem.topo() {
        ElementTopo::Polygon(loop_) => {
            let k = loop_.len();
            for f in 0..k {
                let fg = mesh.face_geometry(e, f);
                let w = (fg.measure / 2.0) * fg.normal;
                grads[f] += w;
                grads[(f + 1) % k] += w;
            }
        }
        ElementTopo::Polyhedron(faces) => {
            for face in faces {
                let nf = face.len();
                let apex: Point =
                    face.iter().map(|&v| mesh.vertex(v)).sum::<Point>() / nf as f64;
                let locals: Vec<usize> =
                    face.iter().map(|&v| elem.local_index(v).unwrap()).collect();
                for k in 0..nf {
                    let a = mesh.vertex(face[k]);
                    let b = mesh.vertex(face[(k + 1) % nf]);
                    let av = 0.5 * (a - apex).cross(&(b - apex));
                    // apex value 1/nf is shared by every face vertex
                    let apex_share = av / (3.0 * nf as f64);
                    for &loc in &locals {
                        grads[loc] += apex_share;
                    }
                    grads[locals[k]] += av / 3.0;
                    grads[locals[(k + 1) % nf]] += av / 3.0;
                }
            }
        }
    }
    let a = elem.measure();
    for g in &mut grads {
        *g /= a;
    }
    grads
}

/// All element-level operators for one cell at a given material.
#[derive(Debug, Clone)]
pub struct ElementOperators {
    /// `A_i`, one per local vertex.
    pub grads: Vec<Point>,
    /// Affine nodal projector, `(n·dim) × (n·dim)`.
    pub s: DMat,
    /// Projected strain operator, `n_strain × (n·dim)`.
    pub b: DMat,
    /// Consistency stiffness `|e| Bᵀ G B`.
    pub consistency: DMat,
    /// Stabilization `γ (I−S)ᵀ(I−S)`, `γ = tr(G)/2`.
    pub stability: DMat,
    /// Full element stiffness (consistency + stability).
    pub stiffness: DMat,
}

impl ElementOperators {
    pub fn build(mesh: &PolyMesh, e: usize, material: &Material) -> Self {
        let dim = mesh.dim();
        let elem = mesh.element(e);
        let n = elem.n_vertices();
        let area = elem.measure();
        let grads = projector_gradients(mesh, e);
        let centroid = elem.centroid();

        // S blocks: h_ij = (x_i − x̄)ᵀ A_j + 1/n, replicated over components
        let mut s = DMatrix::zeros(n * dim, n * dim);
        for i in 0..n {
            let xi = mesh.vertex(elem.vertex_ids()[i]) - centroid;
            for j in 0..n {
                let h = xi.dot(&grads[j]) + 1.0 / n as f64;
                for c in 0..dim {
                    s[(i * dim + c, j * dim + c)] = h;
                }
            }
        }

        let mut b = DMatrix::zeros(n_strain(dim), n * dim);
        for (j, a) in grads.iter().enumerate() {
            let col = j * dim;
            if dim == 2 {
                b[(0, col)] = a.x;
                b[(1, col + 1)] = a.y;
                b[(2, col)] = a.y;
                b[(2, col + 1)] = a.x;
            } else {
                b[(0, col)] = a.x;
                b[(1, col + 1)] = a.y;
                b[(2, col + 2)] = a.z;
                b[(3, col)] = a.y;
                b[(3, col + 1)] = a.x;
                b[(4, col + 1)] = a.z;
                b[(4, col + 2)] = a.y;
                b[(5, col)] = a.z;
                b[(5, col + 2)] = a.x;
            }
        }

        let g = elasticity_matrix(dim, material.young, material.poisson);
        let consistency = area * b.transpose() * &g * &b;
        let gamma = g.trace() / 2.0;
        let eye = DMatrix::identity(n * dim, n * dim);
        let i_minus_s = &eye - &s;
        let stability = gamma * i_minus_s.transpose() * &i_minus_s;
        let stiffness = &consistency + &stability;
        ElementOperators { grads, s, b, consistency, stability, stiffness }
    }
}

/// Global DoF indices of element `e`, component-major per vertex.
fn element_dofs(mesh: &PolyMesh, e: usize) -> Vec<usize> {
    let dim = mesh.dim();
    mesh.element(e)
        .vertex_ids()
        .iter()
        .flat_map(|&v| (0..dim).map(move |c| v * dim + c))
        .collect()
}

/// Caches unit-modulus element stiffness matrices and the global sparsity
/// pattern; assembles `Σ_e scale_e · k_e` for any per-element scaling in one
/// pass. Because every element matrix is linear in the Young's modulus, the
/// same cache serves all stiffness modes and all per-sample assemblies.
pub struct StiffnessAssembler {
    pattern: Arc<CsrPattern>,
    dofs: Vec<Vec<usize>>,
    unit_matrices: Vec<DMat>,
}

impl StiffnessAssembler {
    pub fn new(mesh: &PolyMesh, poisson: f64) -> Result<Self> {
        let material = Material::new(1.0, poisson, mesh.dim())?;
        let n_dofs = mesh.n_dofs();
        let dofs: Vec<Vec<usize>> = (0..mesh.n_elements()).map(|e| element_dofs(mesh, e)).collect();

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_dofs];
        for ed in &dofs {
            for &r in ed {
                rows[r].extend_from_slice(ed);
            }
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        let pattern = Arc::new(CsrPattern::from_rows(n_dofs, rows));

        let unit_matrices: Vec<DMat> = (0..mesh.n_elements())
            .into_par_iter()
            .map(|e| ElementOperators::build(mesh, e, &material).stiffness)
            .collect();

        Ok(StiffnessAssembler { pattern, dofs, unit_matrices })
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn unit_matrices(&self) -> &[DMat] {
        &self.unit_matrices
    }

    /// Assembles the global stiffness with Young's modulus `scale[e]` on
    /// element `e`.
    pub fn assemble(&self, scale: &[f64]) -> CsrMatrix {
        assert_eq!(scale.len(), self.unit_matrices.len());
        let mut k = CsrMatrix::zeros(Arc::clone(&self.pattern));
        for ((ed, ke), &s) in self.dofs.iter().zip(&self.unit_matrices).zip(scale) {
            for (i, &gi) in ed.iter().enumerate() {
                for (j, &gj) in ed.iter().enumerate() {
                    let slot = self.pattern.slot(gi, gj).expect("entry inside pattern");
                    k.values[slot] += s * ke[(i, j)];
                }
            }
        }
        k
    }
}

/// One-point quadrature body-force vector: element `e` adds
/// `(|e|/n²) Σ_j f(x_j)` to every one of its `n` vertices.
pub fn body_force_vector(mesh: &PolyMesh, f: impl Fn(Point) -> Point) -> DVec {
    let dim = mesh.dim();
    let mut out = DVector::zeros(mesh.n_dofs());
    for elem in mesh.elements() {
        let n = elem.n_vertices() as f64;
        let sum: Point = elem.vertex_ids().iter().map(|&v| f(mesh.vertex(v))).sum();
        let w = elem.measure() / (n * n);
        for &v in elem.vertex_ids() {
            for c in 0..dim {
                out[v * dim + c] += w * sum[c];
            }
        }
    }
    out
}

/// One-point quadrature traction vector over a named face set: face `(e,f)`
/// with measure `b` and `n` vertices adds `(b/n²) Σ_j g(x_j)` to every one of
/// its vertices.
pub fn traction_vector(
    mesh: &PolyMesh,
    faces: &[(usize, usize)],
    g: impl Fn(Point) -> Point,
) -> DVec {
    let dim = mesh.dim();
    let mut out = DVector::zeros(mesh.n_dofs());
    for &(e, f) in faces {
        let verts = mesh.element(e).face_vertices(f);
        let n = verts.len() as f64;
        let sum: Point = verts.iter().map(|&v| g(mesh.vertex(v))).sum();
        let w = mesh.face_geometry(e, f).measure / (n * n);
        for &v in &verts {
            for c in 0..dim {
                out[v * dim + c] += w * sum[c];
            }
        }
    }
    out
}

/// Split of the global DoFs into free and constrained (Dirichlet) sets.
#[derive(Debug, Clone)]
pub struct DofPartition {
    /// Free DoF indices, ascending.
    pub free: Vec<usize>,
    /// For each full DoF, its index among the free DoFs (None if constrained).
    pub full_to_free: Vec<Option<usize>>,
}

impl DofPartition {
    /// Constrains all components of every vertex in the named vertex sets.
    pub fn from_vertex_sets(mesh: &PolyMesh, set_names: &[String]) -> Result<Self> {
        let dim = mesh.dim();
        let mut constrained = vec![false; mesh.n_dofs()];
        for name in set_names {
            for &v in mesh.vertex_set(name)? {
                for c in 0..dim {
                    constrained[v * dim + c] = true;
                }
            }
        }
        Ok(Self::from_mask(&constrained))
    }

    pub fn from_mask(constrained: &[bool]) -> Self {
        let mut free = Vec::new();
        let mut full_to_free = vec![None; constrained.len()];
        for (i, &c) in constrained.iter().enumerate() {
            if !c {
                full_to_free[i] = Some(free.len());
                free.push(i);
            }
        }
        DofPartition { free, full_to_free }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Gathers the free entries of a full-length vector.
    pub fn restrict(&self, full: &DVec) -> DVec {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| full[i]))
    }

    /// Scatters free values into a full-length vector whose constrained
    /// entries come from `prescribed`.
    pub fn expand(&self, free_values: &DVec, prescribed: &DVec) -> DVec {
        let mut full = prescribed.clone();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = free_values[k];
        }
        full
    }
}

/// Reduces `K u = F` to the free DoFs with prescribed values moved to the
/// right-hand side: returns `(K_ff, F_f − (K u_c)_f)` where `u_c` equals
/// `prescribed` on constrained DoFs and zero on free DoFs (free entries of
/// `prescribed` are ignored).
pub fn reduce_system(
    k: &CsrMatrix,
    f: &DVec,
    partition: &DofPartition,
    prescribed: &DVec,
) -> (CsrMatrix, DVec) {
    let mut bc = prescribed.clone();
    for &i in &partition.free {
        bc[i] = 0.0;
    }
    let lift = k.matvec(&bc);
    let rhs = DVector::from_iterator(
        partition.free.len(),
        partition.free.iter().map(|&i| f[i] - lift[i]),
    );
    (k.restrict(&partition.free), rhs)
}

/// A basis of the rigid-body displacement modes (3 in 2D, 6 in 3D), as
/// full-length nodal vectors about the mesh vertex average.
pub fn rigid_modes(mesh: &PolyMesh) -> Vec<DVec> {
    let dim = mesh.dim();
    let n_v = mesh.n_vertices();
    let center: Point = mesh.vertices().iter().sum::<Point>() / n_v as f64;
    let mut modes = Vec::new();
    for c in 0..dim {
        let mut m = DVector::zeros(mesh.n_dofs());
        for v in 0..n_v {
            m[v * dim + c] = 1.0;
        }
        modes.push(m);
    }
    let rotations: &[[usize; 2]] = if dim == 2 { &[[0, 1]] } else { &[[0, 1], [1, 2], [2, 0]] };
    for &[a, b] in rotations {
        let mut m = DVector::zeros(mesh.n_dofs());
        for v in 0..n_v {
            let r = mesh.vertex(v) - center;
            m[v * dim + a] = -r[b];
            m[v * dim + b] = r[a];
        }
        modes.push(m);
    }
    modes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen_desc;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn unit_square() -> PolyMesh {
        PolyMesh::parse("2 4 1\nv 0 0\nv 1 0\nv 1 1\nv 0 1\ne 0 1 2 3\n").unwrap()
    }

    fn unit_cube() -> PolyMesh {
        let mut s = String::from("3 8 1\n");
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..2 {
                    s += &format!("v {i} {j} {k}\n");
                }
            }
        }
        s += "e 6\nf 0 2 3 1\nf 4 5 7 6\nf 0 1 5 4\nf 2 6 7 3\nf 0 4 6 2\nf 1 3 7 5\n";
        PolyMesh::parse(&s).unwrap()
    }

    #[test]
    fn unit_square_projector_gradient() {
        let mesh = unit_square();
        let grads = projector_gradients(&mesh, 0);
        assert_relative_eq!(grads[0], Point::new(-0.5, -0.5, 0.0), epsilon = 1e-15);
        assert_relative_eq!(grads[1], Point::new(0.5, -0.5, 0.0), epsilon = 1e-15);
        assert_relative_eq!(grads[2], Point::new(0.5, 0.5, 0.0), epsilon = 1e-15);
        assert_relative_eq!(grads[3], Point::new(-0.5, 0.5, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn unit_cube_projector_gradient() {
        let mesh = unit_cube();
        let grads = projector_gradients(&mesh, 0);
        // local order follows first face (0 2 3 1): locals 0..4 = verts 0,2,3,1
        let corner = mesh.element(0).local_index(0).unwrap();
        assert_relative_eq!(grads[corner], Point::new(-0.25, -0.25, -0.25), epsilon = 1e-14);
        let opposite = mesh.element(0).local_index(7).unwrap();
        assert_relative_eq!(grads[opposite], Point::new(0.25, 0.25, 0.25), epsilon = 1e-14);
    }

    /// Σ_j A_j = 0 and Σ_j A_j x_jᵀ = I: constants and linears are
    /// differentiated exactly.
    fn check_gradient_identities(mesh: &PolyMesh, e: usize, tol: f64) {
        let grads = projector_gradients(mesh, e);
        let elem = mesh.element(e);
        let sum: Point = grads.iter().sum();
        assert!(sum.norm() <= tol, "Σ A_j = {sum:?}");
        let mut m = nalgebra::Matrix3::<f64>::zeros();
        for (j, &v) in elem.vertex_ids().iter().enumerate() {
            m += grads[j] * mesh.vertex(v).transpose();
        }
        let dim = mesh.dim();
        for r in 0..dim {
            for c in 0..dim {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((m[(r, c)] - want).abs() <= tol, "A·Xᵀ = {m}");
            }
        }
    }

    #[test]
    fn gradient_identities_on_fixture_meshes() {
        for name in ["patch16.pmesh", "voronoi50.pmesh", "cube8.pmesh", "hex216.pmesh"] {
            let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
            let mesh = PolyMesh::load(&path).unwrap();
            for e in 0..mesh.n_elements() {
                check_gradient_identities(&mesh, e, 1e-12);
            }
        }
    }

    #[test]
    fn unit_square_projector_matrix_row() {
        let mesh = unit_square();
        let mat = Material::new(1.0, 0.3, 2).unwrap();
        let ops = ElementOperators::build(&mesh, 0, &mat);
        // h row for vertex 0: [3/4, 1/4, -1/4, 1/4]
        let expect = [0.75, 0.25, -0.25, 0.25];
        for (j, &h) in expect.iter().enumerate() {
            assert_relative_eq!(ops.s[(0, j * 2)], h, epsilon = 1e-14);
            assert_relative_eq!(ops.s[(1, j * 2 + 1)], h, epsilon = 1e-14);
            assert_relative_eq!(ops.s[(0, j * 2 + 1)], 0.0);
        }
    }

    #[test]
    fn projector_reproduces_affine_nodal_fields() {
        let path = format!("{}/fixtures/voronoi50.pmesh", env!("CARGO_MANIFEST_DIR"));
        let mesh = PolyMesh::load(&path).unwrap();
        let mat = Material::new(7.0, 0.25, 2).unwrap();
        for e in 0..mesh.n_elements() {
            let ops = ElementOperators::build(&mesh, e, &mat);
            let elem = mesh.element(e);
            let n = elem.n_vertices();
            // u(x,y) = (1 + 2x − y, −3 + x + 4y)
            let mut u = DVector::zeros(2 * n);
            for (i, &v) in elem.vertex_ids().iter().enumerate() {
                let p = mesh.vertex(v);
                u[2 * i] = 1.0 + 2.0 * p.x - p.y;
                u[2 * i + 1] = -3.0 + p.x + 4.0 * p.y;
            }
            let su = &ops.s * &u;
            assert_relative_eq!(su, u, epsilon = 1e-12);
            // projected strain of the affine field: (εxx, εyy, γxy) = (2, 4, 0)
            let strain = &ops.b * &u;
            assert_relative_eq!(strain[0], 2.0, epsilon = 1e-12);
            assert_relative_eq!(strain[1], 4.0, epsilon = 1e-12);
            assert_relative_eq!(strain[2], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_square_consistency_entry() {
        let mesh = unit_square();
        let mat = Material::new(1.0, 0.0, 2).unwrap();
        let ops = ElementOperators::build(&mesh, 0, &mat);
        // with G = diag(1,1,1/2): (BᵀGB)_00 = (1/4) + (1/8) = 3/8
        assert_relative_eq!(ops.consistency[(0, 0)], 0.375, epsilon = 1e-14);
        assert_relative_eq!(
            ops.stiffness.clone(),
            ops.stiffness.transpose(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn element_stiffness_kernel_is_rigid_modes() {
        for (mesh, expect) in [(unit_square(), 3usize), (unit_cube(), 6)] {
            let mat = Material::new(3.0, 0.3, mesh.dim()).unwrap();
            let ops = ElementOperators::build(&mesh, 0, &mat);
            let (vals, _) = sym_eigen_desc(&ops.stiffness);
            let lmax = vals[0];
            let near_zero = vals.iter().filter(|&&v| v.abs() <= 1e-12 * lmax).count();
            assert_eq!(near_zero, expect, "eigenvalues {vals:?}");
            // rigid modes restricted to the element lie in the kernel
            let dim = mesh.dim();
            for mode in rigid_modes(&mesh) {
                let ids = mesh.element(0).vertex_ids();
                let mut local = DVector::zeros(dim * ids.len());
                for (i, &v) in ids.iter().enumerate() {
                    for c in 0..dim {
                        local[i * dim + c] = mode[v * dim + c];
                    }
                }
                let r = &ops.stiffness * &local;
                assert!(r.norm() <= 1e-12 * lmax * local.norm());
            }
        }
    }

    #[test]
    fn stiffness_scales_linearly_in_young() {
        let mesh = unit_cube();
        let a = ElementOperators::build(&mesh, 0, &Material::new(1.0, 0.2, 3).unwrap());
        let b = ElementOperators::build(&mesh, 0, &Material::new(7.5, 0.2, 3).unwrap());
        assert_relative_eq!(7.5 * &a.stiffness, b.stiffness, epsilon = 1e-12);
    }

    #[test]
    fn elasticity_matrices_match_closed_forms() {
        let g2 = elasticity_matrix(2, 1.0, 0.3);
        assert_relative_eq!(g2[(0, 0)], 1.0 / 0.91, epsilon = 1e-14);
        assert_relative_eq!(g2[(0, 1)], 0.3 / 0.91, epsilon = 1e-14);
        assert_relative_eq!(g2[(2, 2)], 1.0 / 2.6, epsilon = 1e-14); // E/(2(1+ν))
        let g3 = elasticity_matrix(3, 1.0, 0.25);
        assert_relative_eq!(g3[(0, 0)], 1.2, epsilon = 1e-14);
        assert_relative_eq!(g3[(0, 1)], 0.4, epsilon = 1e-14);
        assert_relative_eq!(g3[(3, 3)], 0.4, epsilon = 1e-14);
        assert_relative_eq!(g3[(3, 4)], 0.0);
    }

    #[test]
    fn assembler_matches_dense_scatter() {
        let path = format!("{}/fixtures/patch16.pmesh", env!("CARGO_MANIFEST_DIR"));
        let mesh = PolyMesh::load(&path).unwrap();
        let asm = StiffnessAssembler::new(&mesh, 0.3).unwrap();
        let scale: Vec<f64> = (0..mesh.n_elements()).map(|e| 1.0 + 0.1 * e as f64).collect();
        let k = asm.assemble(&scale);
        // dense reference
        let n = mesh.n_dofs();
        let mut dense = DMatrix::zeros(n, n);
        for (e, &young) in scale.iter().enumerate() {
            let ops = ElementOperators::build(&mesh, e, &Material::new(young, 0.3, 2).unwrap());
            let dofs = element_dofs(&mesh, e);
            for (i, &gi) in dofs.iter().enumerate() {
                for (j, &gj) in dofs.iter().enumerate() {
                    dense[(gi, gj)] += ops.stiffness[(i, j)];
                }
            }
        }
        let kd = k.to_dense();
        assert_relative_eq!(kd, dense, epsilon = 1e-10);
        // global kernel: exactly the 3 rigid modes
        for mode in rigid_modes(&mesh) {
            let r = k.matvec(&mode);
            assert!(r.norm() <= 1e-10 * mode.norm());
        }
    }

    #[test]
    fn body_force_one_point_rule() {
        let mesh = unit_square();
        // constant load: every vertex gets (|e|/n) f = (0, -1/4)
        let f = body_force_vector(&mesh, |_| Point::new(0.0, -1.0, 0.0));
        for v in 0..4 {
            assert_relative_eq!(f[2 * v], 0.0);
            assert_relative_eq!(f[2 * v + 1], -0.25, epsilon = 1e-15);
        }
        // f = (x, 0): Σ_j f(x_j) = (2, 0), every vertex gets (1/16)(2,0)
        let f = body_force_vector(&mesh, |p| Point::new(p.x, 0.0, 0.0));
        for v in 0..4 {
            assert_relative_eq!(f[2 * v], 0.125, epsilon = 1e-15);
        }
    }

    #[test]
    fn traction_one_point_rule() {
        let mesh = PolyMesh::parse(
            "2 4 1\nv 0 0\nv 1 0\nv 1 1\nv 0 1\ne 0 1 2 3\nset right neumann (0,1)\n",
        )
        .unwrap();
        let g = traction_vector(&mesh, mesh.face_set("right").unwrap(), |_| {
            Point::new(1000.0, 0.0, 0.0)
        });
        // edge (1,2), length 1, 2 vertices: each gets (1/4)·2000 = 500
        assert_relative_eq!(g[2], 500.0, epsilon = 1e-12);
        assert_relative_eq!(g[4], 500.0, epsilon = 1e-12);
        assert_relative_eq!(g[0], 0.0);
        assert_relative_eq!(g.sum(), 1000.0, epsilon = 1e-12);
    }

    #[test]
    fn dof_partition_basics() {
        let mesh = PolyMesh::parse(
            "2 4 1\nv 0 0\nv 1 0\nv 1 1\nv 0 1\ne 0 1 2 3\nset left dirichlet 0 3\n",
        )
        .unwrap();
        let part = DofPartition::from_vertex_sets(&mesh, &["left".into()]).unwrap();
        assert_eq!(part.free, vec![2, 3, 4, 5]);
        assert_eq!(part.full_to_free[0], None);
        assert_eq!(part.full_to_free[2], Some(0));
        let full = DVector::from_vec(vec![9.0, 8.0, 1.0, 2.0, 3.0, 4.0, 7.0, 6.0]);
        let restricted = part.restrict(&full);
        assert_eq!(restricted.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let back = part.expand(&restricted, &DVector::zeros(8));
        assert_eq!(back.as_slice(), &[0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 0.0, 0.0]);
    }

    /// Affine Dirichlet data on the boundary of a polygonal patch is
    /// reproduced exactly at interior vertices (zero body force).
    #[test]
    fn patch_test_on_voronoi_mesh() {
        let path = format!("{}/fixtures/patch16.pmesh", env!("CARGO_MANIFEST_DIR"));
        let mesh = PolyMesh::load(&path).unwrap();
        let part = DofPartition::from_vertex_sets(&mesh, &["boundary".into()]).unwrap();
        assert!(part.n_free() > 0, "patch mesh must have interior vertices");

        let asm = StiffnessAssembler::new(&mesh, 0.3).unwrap();
        let k = asm.assemble(&vec![2.5; mesh.n_elements()]);
        let f = DVector::zeros(mesh.n_dofs());
        // u(x,y) = (0.1 + 2x + 0.5y, −0.2 + 0.3x − y)
        let exact = |p: Point| [0.1 + 2.0 * p.x + 0.5 * p.y, -0.2 + 0.3 * p.x - p.y];
        let mut presc = DVector::zeros(mesh.n_dofs());
        for v in 0..mesh.n_vertices() {
            let u = exact(mesh.vertex(v));
            presc[2 * v] = u[0];
            presc[2 * v + 1] = u[1];
        }
        let (kff, rhs) = reduce_system(&k, &f, &part, &presc);
        let sol = kff.to_dense().lu().solve(&rhs).unwrap();
        let full = part.expand(&sol, &presc);
        for v in 0..mesh.n_vertices() {
            let u = exact(mesh.vertex(v));
            assert_relative_eq!(full[2 * v], u[0], epsilon = 1e-11);
            assert_relative_eq!(full[2 * v + 1], u[1], epsilon = 1e-11);
        }
    }

    proptest! {
        /// On random convex polygons the gradient identities and the affine
        /// reproduction property hold to rounding.
        #[test]
        fn random_polygon_operators_are_consistent(seed in 0u64..150) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 3 + (rng.random::<u32>() % 9) as usize;
            let mut angles: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            angles.dedup_by(|a, b| (*a - *b).abs() < 1e-2);
            prop_assume!(angles.len() >= 3);
            let verts: Vec<[f64; 3]> = angles.iter()
                .map(|&t| {
                    let r = 0.5 + rng.random::<f64>();
                    [2.0 + r * t.cos(), -1.0 + r * t.sin(), 0.0]
                })
                .collect();
            let k = verts.len();
            let mesh = PolyMesh::new(
                2,
                verts,
                vec![ElementTopo::Polygon((0..k).collect())],
                BTreeMap::new(),
                BTreeMap::new(),
            ).unwrap();
            check_gradient_identities(&mesh, 0, 1e-12);
            let ops = ElementOperators::build(&mesh, 0, &Material::new(2.0, 0.3, 2).unwrap());
            let mut u = DVector::zeros(2 * k);
            for (i, &v) in mesh.element(0).vertex_ids().iter().enumerate() {
                let p = mesh.vertex(v);
                u[2 * i] = 0.5 - p.x + 3.0 * p.y;
                u[2 * i + 1] = 2.0 * p.x + p.y;
            }
            let su = &ops.s * &u;
            prop_assert!((su - &u).norm() <= 1e-11 * u.norm());
            let strain = &ops.b * &u;
            prop_assert!((strain[0] - (-1.0)).abs() <= 1e-11);
            prop_assert!((strain[1] - 1.0).abs() <= 1e-11);
            prop_assert!((strain[2] - 5.0).abs() <= 1e-11);
        }

        /// Element stiffness is PSD with kernel dimension exactly 3 on random
        /// polygons.
        #[test]
        fn random_polygon_stiffness_psd(seed in 0u64..60) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 4 + (rng.random::<u32>() % 6) as usize;
            let mut angles: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            angles.dedup_by(|a, b| (*a - *b).abs() < 1e-2);
            prop_assume!(angles.len() >= 4);
            let verts: Vec<[f64; 3]> = angles.iter()
                .map(|&t| [t.cos() * (1.0 + 0.3 * rng.random::<f64>()), t.sin(), 0.0])
                .collect();
            let k = verts.len();
            let mesh = PolyMesh::new(2, verts, vec![ElementTopo::Polygon((0..k).collect())],
                BTreeMap::new(), BTreeMap::new()).unwrap();
            let ops = ElementOperators::build(&mesh, 0, &Material::new(1.0, 0.25, 2).unwrap());
            let (vals, _) = sym_eigen_desc(&ops.stiffness);
            let lmax = vals[0];
            prop_assert!(vals.iter().all(|&v| v >= -1e-12 * lmax));
            let zero = vals.iter().filter(|&&v| v.abs() <= 1e-11 * lmax).count();
            prop_assert_eq!(zero, 3);
        }
    }
}

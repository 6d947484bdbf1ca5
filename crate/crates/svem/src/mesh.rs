//! Polygonal (2D) and polyhedral (3D) mesh storage, the text mesh format, and
//! the geometric quantities the element operators are built from.
//!
//! Mesh file grammar (whitespace separated, `#` starts a comment line):
//!
//! ```text
//! <dim> <n_vertices> <n_elements>
//! v <x> <y> [<z>]                     one line per vertex
//! e <i0> <i1> ... <ik>                2D: CCW vertex loop (reoriented if CW)
//! e <n_faces>                         3D: element header, followed by
//! f <i0> <i1> ...                     one outward vertex loop per face
//! set <name> dirichlet <v0> <v1> ...  named vertex set
//! set <name> neumann (<e>,<f>) ...    named (element, local face) set
//! ```
//!
//! All indices are 0-based. Vertex sets drive constraints and point loads;
//! face sets drive tractions. 2D local face `f` is the edge from loop vertex
//! `f` to `f+1`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Relative tolerance for degenerate-measure detection.
const DEGENERATE_REL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub enum ElementTopo {
    /// CCW vertex loop.
    Polygon(Vec<usize>),
    /// Outward-oriented vertex loops, one per face.
    Polyhedron(Vec<Vec<usize>>),
}

/// One mesh element with its cached bulk geometry.
#[derive(Debug, Clone)]
pub struct Element {
    topo: ElementTopo,
    vertex_ids: Vec<usize>,
    measure: f64,
    centroid: Point,
}

impl Element {
    /// Unique vertex ids in local (first-occurrence) order; this order defines
    /// the element's local DoF numbering.
    pub fn vertex_ids(&self) -> &[usize] {
        &self.vertex_ids
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_ids.len()
    }

    /// Area (2D) or volume (3D).
    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// Arithmetic mean of the element's vertices (the centering point of the
    /// projector construction, not the mass centroid).
    pub fn centroid(&self) -> Point {
        self.centroid
    }

    pub fn topo(&self) -> &ElementTopo {
        &self.topo
    }

    /// Number of local faces (2D: edges of the loop).
    pub fn n_faces(&self) -> usize {
        match &self.topo {
            ElementTopo::Polygon(loop_) => loop_.len(),
            ElementTopo::Polyhedron(faces) => faces.len(),
        }
    }

    /// Vertex ids of local face `f` in traversal order.
    pub fn face_vertices(&self, f: usize) -> Vec<usize> {
        match &self.topo {
            ElementTopo::Polygon(loop_) => {
                vec![loop_[f], loop_[(f + 1) % loop_.len()]]
            }
            ElementTopo::Polyhedron(faces) => faces[f].clone(),
        }
    }

    /// Local index (into `vertex_ids`) of a global vertex id.
    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.vertex_ids.iter().position(|&v| v == global)
    }
}

/// Measure, unit outward normal and centroid of an element face.
#[derive(Debug, Clone)]
pub struct FaceGeometry {
    pub measure: f64,
    pub normal: Point,
    pub centroid: Point,
}

#[derive(Debug, Clone)]
pub struct PolyMesh {
    dim: usize,
    vertices: Vec<Point>,
    elements: Vec<Element>,
    vertex_sets: BTreeMap<String, Vec<usize>>,
    face_sets: BTreeMap<String, Vec<(usize, usize)>>,
}

impl PolyMesh {
    /// Builds and validates a mesh from raw topology.
    pub fn new(
        dim: usize,
        vertices: Vec<[f64; 3]>,
        topos: Vec<ElementTopo>,
        vertex_sets: BTreeMap<String, Vec<usize>>,
        face_sets: BTreeMap<String, Vec<(usize, usize)>>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::mesh(format!("unsupported dimension {dim}")));
        }
        if topos.is_empty() {
            return Err(Error::mesh("mesh has no elements"));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::mesh(format!("vertex {i} has non-finite coordinates")));
            }
        }
        let points: Vec<Point> = vertices.iter().map(|v| Point::new(v[0], v[1], v[2])).collect();
        let scale = bbox_diagonal(&points).max(f64::MIN_POSITIVE);
        let mut elements = Vec::with_capacity(topos.len());
        for (e, topo) in topos.into_iter().enumerate() {
            let elem = match topo {
                ElementTopo::Polygon(loop_) => {
                    if dim != 2 {
                        return Err(Error::mesh(format!("element {e}: polygon in a 3D mesh")));
                    }
                    build_polygon(e, loop_, &points, scale)?
                }
                ElementTopo::Polyhedron(faces) => {
                    if dim != 3 {
                        return Err(Error::mesh(format!("element {e}: polyhedron in a 2D mesh")));
                    }
                    build_polyhedron(e, faces, &points, scale)?
                }
            };
            elements.push(elem);
        }
        for (name, ids) in &vertex_sets {
            for &v in ids {
                if v >= points.len() {
                    return Err(Error::mesh(format!(
                        "vertex set '{name}' references vertex {v} out of range"
                    )));
                }
            }
        }
        for (name, pairs) in &face_sets {
            for &(e, f) in pairs {
                if e >= elements.len() {
                    return Err(Error::mesh(format!(
                        "face set '{name}' references element {e} out of range"
                    )));
                }
                if f >= elements[e].n_faces() {
                    return Err(Error::mesh(format!(
                        "face set '{name}' references face {f} of element {e} (has {})",
                        elements[e].n_faces()
                    )));
                }
            }
        }
        Ok(PolyMesh { dim, vertices: points, elements, vertex_sets, face_sets })
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_mesh(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::mesh(format!("cannot read {}: {e}", path.display())))?;
        parse_mesh(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Total number of displacement DoFs (`dim` per vertex).
    pub fn n_dofs(&self) -> usize {
        self.dim * self.vertices.len()
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn element(&self, e: usize) -> &Element {
        &self.elements[e]
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn vertex_set(&self, name: &str) -> Result<&[usize]> {
        self.vertex_sets
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::mesh(format!("no vertex set named '{name}'")))
    }

    pub fn face_set(&self, name: &str) -> Result<&[(usize, usize)]> {
        self.face_sets
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::mesh(format!("no face set named '{name}'")))
    }

    pub fn vertex_set_names(&self) -> impl Iterator<Item = &str> {
        self.vertex_sets.keys().map(|s| s.as_str())
    }

    pub fn face_set_names(&self) -> impl Iterator<Item = &str> {
        self.face_sets.keys().map(|s| s.as_str())
    }

    /// DoF index of (vertex, component).
    pub fn dof(&self, vertex: usize, component: usize) -> usize {
        debug_assert!(component < self.dim);
        vertex * self.dim + component
    }

    /// Measure, outward unit normal and centroid of local face `f` of element `e`.
    pub fn face_geometry(&self, e: usize, f: usize) -> FaceGeometry {
        let elem = &self.elements[e];
        match &elem.topo {
            ElementTopo::Polygon(loop_) => {
                let a = self.vertices[loop_[f]];
                let b = self.vertices[loop_[(f + 1) % loop_.len()]];
                let t = b - a;
                let len = t.norm();
                FaceGeometry {
                    measure: len,
                    normal: Point::new(t.y / len, -t.x / len, 0.0),
                    centroid: (a + b) / 2.0,
                }
            }
            ElementTopo::Polyhedron(faces) => {
                let (area, area_vec, centroid) = face_fan_geometry(&faces[f], &self.vertices);
                FaceGeometry { measure: area, normal: area_vec / area_vec.norm(), centroid }
            }
        }
    }

    /// Axis-aligned bounding box of all vertices as (min, max) corners.
    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Per-vertex lumped measure: each element spreads its measure evenly
    /// over its vertices. Sums to the total mesh measure.
    pub fn vertex_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_vertices()];
        for elem in &self.elements {
            let share = elem.measure() / elem.n_vertices() as f64;
            for &v in elem.vertex_ids() {
                w[v] += share;
            }
        }
        w
    }

    pub fn info(&self) -> MeshInfo {
        MeshInfo {
            dim: self.dim,
            n_vertices: self.n_vertices(),
            n_elements: self.n_elements(),
            n_dofs: self.n_dofs(),
            total_measure: self.elements.iter().map(|e| e.measure).sum(),
            vertex_sets: self.vertex_sets.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
            face_sets: self.face_sets.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
        }
    }
}

/// Mesh summary for reporting.
#[derive(Debug, Clone)]
pub struct MeshInfo {
    pub dim: usize,
    pub n_vertices: usize,
    pub n_elements: usize,
    pub n_dofs: usize,
    pub total_measure: f64,
    pub vertex_sets: Vec<(String, usize)>,
    pub face_sets: Vec<(String, usize)>,
}

impl fmt::Display for MeshInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "dim={} vertices={} elements={} dofs={} measure={:.12}",
            self.dim, self.n_vertices, self.n_elements, self.n_dofs, self.total_measure
        )?;
        for (name, n) in &self.vertex_sets {
            writeln!(f, "vertex set {name}: {n} vertices")?;
        }
        for (name, n) in &self.face_sets {
            writeln!(f, "face set {name}: {n} faces")?;
        }
        Ok(())
    }
}

fn bbox_diagonal(points: &[Point]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

fn check_loop(e: usize, loop_: &[usize], n_vertices: usize, what: &str) -> Result<()> {
    if loop_.len() < 3 {
        return Err(Error::mesh(format!("element {e}: {what} has fewer than 3 vertices")));
    }
    for &v in loop_ {
        if v >= n_vertices {
            return Err(Error::mesh(format!(
                "element {e}: {what} references vertex {v} out of range"
            )));
        }
    }
    let mut sorted: Vec<usize> = loop_.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::mesh(format!("element {e}: repeated vertex in {what}")));
    }
    Ok(())
}

fn build_polygon(e: usize, mut loop_: Vec<usize>, points: &[Point], scale: f64) -> Result<Element> {
    check_loop(e, &loop_, points.len(), "polygon loop")?;
    let signed_area = |ids: &[usize]| -> f64 {
        let n = ids.len();
        let mut a2 = 0.0;
        for k in 0..n {
            let p = points[ids[k]];
            let q = points[ids[(k + 1) % n]];
            a2 += p.x * q.y - q.x * p.y;
        }
        a2 / 2.0
    };
    let mut area = signed_area(&loop_);
    if area < 0.0 {
        loop_.reverse();
        area = -area;
    }
    if area <= DEGENERATE_REL * scale * scale {
        return Err(Error::mesh(format!("element {e}: degenerate polygon (area {area:e})")));
    }
    let centroid = loop_.iter().map(|&v| points[v]).sum::<Point>() / loop_.len() as f64;
    Ok(Element { vertex_ids: loop_.clone(), topo: ElementTopo::Polygon(loop_), measure: area, centroid })
}

/// Fan triangulation of a (possibly non-planar) face about the vertex-average
/// point. Returns (Σ triangle areas, Σ triangle area vectors, area-weighted
/// centroid). The same fan is used everywhere so surface integrals close
/// exactly.
pub(crate) fn face_fan_geometry(face: &[usize], points: &[Point]) -> (f64, Point, Point) {
    let n = face.len();
    let apex: Point = face.iter().map(|&v| points[v]).sum::<Point>() / n as f64;
    let mut area = 0.0;
    let mut area_vec = Point::zeros();
    let mut centroid = Point::zeros();
    for k in 0..n {
        let a = points[face[k]];
        let b = points[face[(k + 1) % n]];
        let av = 0.5 * (a - apex).cross(&(b - apex));
        let t_area = av.norm();
        area += t_area;
        area_vec += av;
        centroid += t_area * (apex + a + b) / 3.0;
    }
    (area, area_vec, centroid / area)
}

fn build_polyhedron(
    e: usize,
    mut faces: Vec<Vec<usize>>,
    points: &[Point],
    scale: f64,
) -> Result<Element> {
    if faces.len() < 4 {
        return Err(Error::mesh(format!("element {e}: polyhedron needs at least 4 faces")));
    }
    for face in &faces {
        check_loop(e, face, points.len(), "face loop")?;
    }
    orient_faces(e, &mut faces)?;
    // signed volume from the fan triangulation: V = (1/3) Σ x_t · (n A)_t
    let volume = |faces: &[Vec<usize>]| -> f64 {
        let mut v = 0.0;
        for face in faces {
            let n = face.len();
            let apex: Point = face.iter().map(|&i| points[i]).sum::<Point>() / n as f64;
            for k in 0..n {
                let a = points[face[k]];
                let b = points[face[(k + 1) % n]];
                let av = 0.5 * (a - apex).cross(&(b - apex));
                v += (apex + a + b).dot(&av) / 9.0;
            }
        }
        v
    };
    let mut vol = volume(&faces);
    if vol < 0.0 {
        for face in faces.iter_mut() {
            face.reverse();
        }
        vol = -vol;
    }
    if vol <= DEGENERATE_REL * scale * scale * scale {
        return Err(Error::mesh(format!("element {e}: degenerate polyhedron (volume {vol:e})")));
    }
    let mut vertex_ids = Vec::new();
    for face in &faces {
        for &v in face {
            if !vertex_ids.contains(&v) {
                vertex_ids.push(v);
            }
        }
    }
    let centroid =
        vertex_ids.iter().map(|&v| points[v]).sum::<Point>() / vertex_ids.len() as f64;
    Ok(Element { topo: ElementTopo::Polyhedron(faces), vertex_ids, measure: vol, centroid })
}

/// Makes all face loops consistently oriented (each shared edge traversed in
/// opposite directions by its two faces) and verifies the surface is closed.
fn orient_faces(e: usize, faces: &mut [Vec<usize>]) -> Result<()> {
    use std::collections::HashMap;
    let nf = faces.len();
    // undirected edge -> incidences (face, directed as (a<b)?)
    let mut edges: HashMap<(usize, usize), Vec<(usize, bool)>> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        let n = face.len();
        for k in 0..n {
            let a = face[k];
            let b = face[(k + 1) % n];
            let key = (a.min(b), a.max(b));
            edges.entry(key).or_default().push((f, a < b));
        }
    }
    for ((a, b), inc) in &edges {
        if inc.len() != 2 {
            return Err(Error::mesh(format!(
                "element {e}: face surface is not closed (edge {a}-{b} bounds {} faces)",
                inc.len()
            )));
        }
    }
    // BFS: flip faces so adjacent faces traverse shared edges oppositely
    let mut state = vec![0u8; nf]; // 0 unknown, 1 keep, 2 flip
    let mut queue = std::collections::VecDeque::new();
    state[0] = 1;
    queue.push_back(0usize);
    let mut visited = 1;
    while let Some(f) = queue.pop_front() {
        let flipped = state[f] == 2;
        let n = faces[f].len();
        for k in 0..n {
            let (mut a, mut b) = (faces[f][k], faces[f][(k + 1) % n]);
            if flipped {
                std::mem::swap(&mut a, &mut b);
            }
            let key = (a.min(b), a.max(b));
            let inc = &edges[&key];
            let (other, other_dir) = if inc[0].0 == f && (inc[0].1 == (a < b) || inc[1].0 == f) {
                // ambiguous when both incidences are on face f (impossible after
                // repeated-vertex checks) — pick the partner entry
                if inc[0].0 == f { inc[1] } else { inc[0] }
            } else if inc[0].0 == f {
                inc[1]
            } else {
                inc[0]
            };
            // this face traverses the edge with direction (a < b)
            let my_dir = a < b;
            // consistent orientation: partner must traverse opposite
            let partner_needs_flip = other_dir == my_dir;
            let want = if partner_needs_flip { 2 } else { 1 };
            // partner's stored direction is pre-flip; account for its state
            match state[other] {
                0 => {
                    state[other] = want;
                    visited += 1;
                    queue.push_back(other);
                }
                s => {
                    if s != want {
                        return Err(Error::mesh(format!(
                            "element {e}: face surface is not orientable"
                        )));
                    }
                }
            }
        }
    }
    if visited != nf {
        return Err(Error::mesh(format!(
            "element {e}: face surface is disconnected ({visited} of {nf} faces reachable)"
        )));
    }
    for (f, face) in faces.iter_mut().enumerate() {
        if state[f] == 2 {
            face.reverse();
        }
    }
    Ok(())
}

fn parse_mesh(text: &str) -> Result<PolyMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) =
        lines.next().ok_or_else(|| Error::mesh("empty mesh file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 {
        return Err(Error::mesh(format!(
            "line {hline}: header must be '<dim> <n_vertices> <n_elements>'"
        )));
    }
    let parse_usize = |line: usize, tok: &str, what: &str| -> Result<usize> {
        tok.parse()
            .map_err(|_| Error::mesh(format!("line {line}: invalid {what} '{tok}'")))
    };
    let dim = parse_usize(hline, head[0], "dimension")?;
    let n_v = parse_usize(hline, head[1], "vertex count")?;
    let n_e = parse_usize(hline, head[2], "element count")?;
    if dim != 2 && dim != 3 {
        return Err(Error::mesh(format!("line {hline}: unsupported dimension {dim}")));
    }

    let mut vertices = Vec::with_capacity(n_v);
    for _ in 0..n_v {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::mesh(format!("expected {n_v} vertex lines")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.first() != Some(&"v") || toks.len() != dim + 1 {
            return Err(Error::mesh(format!(
                "line {ln}: expected 'v' and {dim} coordinates"
            )));
        }
        let mut p = [0.0f64; 3];
        for (k, tok) in toks[1..].iter().enumerate() {
            p[k] = tok
                .parse()
                .map_err(|_| Error::mesh(format!("line {ln}: invalid coordinate '{tok}'")))?;
        }
        vertices.push(p);
    }

    let mut topos = Vec::with_capacity(n_e);
    for _ in 0..n_e {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::mesh(format!("expected {n_e} element records")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.first() != Some(&"e") || toks.len() < 2 {
            return Err(Error::mesh(format!("line {ln}: expected an 'e' element line")));
        }
        if dim == 2 {
            let loop_: Result<Vec<usize>> = toks[1..]
                .iter()
                .map(|t| parse_usize(ln, t, "vertex index"))
                .collect();
            topos.push(ElementTopo::Polygon(loop_?));
        } else {
            if toks.len() != 2 {
                return Err(Error::mesh(format!(
                    "line {ln}: 3D element line must be 'e <n_faces>'"
                )));
            }
            let n_faces = parse_usize(ln, toks[1], "face count")?;
            let mut faces = Vec::with_capacity(n_faces);
            for _ in 0..n_faces {
                let (fl, fline) = lines
                    .next()
                    .ok_or_else(|| Error::mesh(format!("line {ln}: missing face lines")))?;
                let ftoks: Vec<&str> = fline.split_whitespace().collect();
                if ftoks.first() != Some(&"f") || ftoks.len() < 4 {
                    return Err(Error::mesh(format!(
                        "line {fl}: expected an 'f' line with at least 3 vertex indices"
                    )));
                }
                let face: Result<Vec<usize>> = ftoks[1..]
                    .iter()
                    .map(|t| parse_usize(fl, t, "vertex index"))
                    .collect();
                faces.push(face?);
            }
            topos.push(ElementTopo::Polyhedron(faces));
        }
    }

    let mut vertex_sets = BTreeMap::new();
    let mut face_sets = BTreeMap::new();
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.first() != Some(&"set") || toks.len() < 3 {
            return Err(Error::mesh(format!("line {ln}: expected a 'set' line, got '{line}'")));
        }
        let name = toks[1].to_string();
        match toks[2] {
            "dirichlet" => {
                let ids: Result<Vec<usize>> = toks[3..]
                    .iter()
                    .map(|t| parse_usize(ln, t, "vertex index"))
                    .collect();
                if vertex_sets.insert(name.clone(), ids?).is_some() {
                    return Err(Error::mesh(format!("line {ln}: duplicate vertex set '{name}'")));
                }
            }
            "neumann" => {
                let mut pairs = Vec::new();
                for tok in &toks[3..] {
                    let inner = tok.trim_start_matches('(').trim_end_matches(')');
                    let (a, b) = inner.split_once(',').ok_or_else(|| {
                        Error::mesh(format!("line {ln}: expected '(element,face)', got '{tok}'"))
                    })?;
                    pairs.push((
                        parse_usize(ln, a, "element index")?,
                        parse_usize(ln, b, "face index")?,
                    ));
                }
                if face_sets.insert(name.clone(), pairs).is_some() {
                    return Err(Error::mesh(format!("line {ln}: duplicate face set '{name}'")));
                }
            }
            kind => {
                return Err(Error::mesh(format!(
                    "line {ln}: unknown set kind '{kind}' (expected dirichlet or neumann)"
                )))
            }
        }
    }

    PolyMesh::new(dim, vertices, topos, vertex_sets, face_sets)
}

#!/usr/bin/env python3
"""Generate the polygonal/polyhedral mesh fixtures committed under crates/svem/fixtures.

2D meshes are centroidal Voronoi tessellations of the unit square (scipy Voronoi
with boundary mirroring, Lloyd relaxation).  3D meshes are jittered structured
hexahedral grids of the unit cube.  Run from the repository root:

    python3 tools/make_fixtures.py
"""
import numpy as np
from scipy.spatial import Voronoi

OUT = "crates/svem/fixtures"
TOL = 1e-9


def mirrored_voronoi_cells(seeds):
    """Exact Voronoi cells of `seeds` clipped to the unit square via mirroring."""
    n = len(seeds)
    mirrors = [seeds.copy() for _ in range(4)]
    mirrors[0][:, 0] = -mirrors[0][:, 0]          # across x=0
    mirrors[1][:, 0] = 2.0 - mirrors[1][:, 0]     # across x=1
    mirrors[2][:, 1] = -mirrors[2][:, 1]          # across y=0
    mirrors[3][:, 1] = 2.0 - mirrors[3][:, 1]     # across y=1
    allpts = np.vstack([seeds] + mirrors)
    vor = Voronoi(allpts)
    cells = []
    for i in range(n):
        region = vor.regions[vor.point_region[i]]
        assert -1 not in region, "unbounded cell despite mirroring"
        poly = vor.vertices[region]
        # enforce CCW
        x, y = poly[:, 0], poly[:, 1]
        area2 = np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
        if area2 < 0:
            poly = poly[::-1]
        cells.append(poly)
    return cells


def polygon_centroid(poly):
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


def lloyd(seeds, iters):
    for _ in range(iters):
        cells = mirrored_voronoi_cells(seeds)
        seeds = np.array([polygon_centroid(c) for c in cells])
        seeds = np.clip(seeds, 1e-6, 1.0 - 1e-6)
    return seeds


def weld_2d(cells):
    """Snap near-boundary coordinates, weld shared vertices, index cells."""
    verts = []
    index = {}
    loops = []
    for poly in cells:
        loop = []
        for p in poly:
            q = [0.0 if abs(c) < TOL else 1.0 if abs(c - 1.0) < TOL else c for c in p]
            key = (round(q[0], 10), round(q[1], 10))
            if key not in index:
                index[key] = len(verts)
                verts.append(q)
            loop.append(index[key])
        # drop accidental consecutive duplicates
        dedup = [v for k, v in enumerate(loop) if v != loop[(k - 1) % len(loop)]]
        loops.append(dedup)
    return np.array(verts), loops


def write_mesh2d(path, verts, loops, vertex_sets, face_sets, comment):
    with open(path, "w") as f:
        f.write(f"# {comment}\n")
        f.write(f"2 {len(verts)} {len(loops)}\n")
        for v in verts:
            f.write(f"v {v[0]:.12g} {v[1]:.12g}\n")
        for loop in loops:
            f.write("e " + " ".join(map(str, loop)) + "\n")
        for name, ids in vertex_sets.items():
            f.write(f"set {name} dirichlet " + " ".join(map(str, sorted(ids))) + "\n")
        for name, pairs in face_sets.items():
            f.write(f"set {name} neumann " + " ".join(f"({e},{k})" for e, k in sorted(pairs)) + "\n")


def boundary_vertices(verts):
    out = set()
    for i, (x, y) in enumerate(verts):
        if min(x, 1 - x, y, 1 - y) < TOL:
            out.add(i)
    return out


def edge_on(verts, a, b, axis, value):
    return abs(verts[a][axis] - value) < TOL and abs(verts[b][axis] - value) < TOL


def make_voronoi(n, seed, lloyd_iters, path, sets="patch"):
    rng = np.random.default_rng(seed)
    seeds = rng.random((n, 2))
    seeds = lloyd(seeds, lloyd_iters)
    cells = mirrored_voronoi_cells(seeds)
    verts, loops = weld_2d(cells)
    vsets = {"boundary": boundary_vertices(verts)}
    fsets = {}
    if sets == "loaded":
        vsets["left"] = {i for i, v in enumerate(verts) if abs(v[0]) < TOL}
        # single vertex nearest (1, 0.5) for the point load
        d = [(abs(v[0] - 1.0) + abs(v[1] - 0.5), i) for i, v in enumerate(verts)]
        tip = min((di, i) for di, i in d if abs(verts[i][0] - 1.0) < TOL)[1]
        vsets["tip"] = {tip}
        right = []
        for e, loop in enumerate(loops):
            for k in range(len(loop)):
                a, b = loop[k], loop[(k + 1) % len(loop)]
                if edge_on(verts, a, b, 0, 1.0):
                    right.append((e, k))
        fsets["right"] = right
    write_mesh2d(path, verts, loops, vsets, fsets,
                 f"{n}-cell centroidal Voronoi tessellation of the unit square")
    print(f"{path}: {len(verts)} vertices, {len(loops)} cells")


HEX_FACES = [  # local corner ids (di,dj,dk) -> di*4+dj*2+dk, outward loops
    [0, 1, 3, 2],  # -x
    [4, 6, 7, 5],  # +x
    [0, 4, 5, 1],  # -y
    [2, 3, 7, 6],  # +y
    [0, 2, 6, 4],  # -z
    [1, 5, 7, 3],  # +z
]


def make_hex(nc, seed, jitter, path):
    rng = np.random.default_rng(seed)
    h = 1.0 / nc
    nv1 = nc + 1
    coords = np.zeros((nv1, nv1, nv1, 3))
    for i in range(nv1):
        for j in range(nv1):
            for k in range(nv1):
                p = np.array([i * h, j * h, k * h])
                for ax, t in enumerate((i, j, k)):
                    if 0 < t < nc:
                        p[ax] += jitter * h * (rng.random() * 2 - 1)
                coords[i, j, k] = p
    vid = lambda i, j, k: (i * nv1 + j) * nv1 + k
    verts = coords.reshape(-1, 3)
    elems = []
    for i in range(nc):
        for j in range(nc):
            for k in range(nc):
                corner = [vid(i + di, j + dj, k + dk)
                          for di in (0, 1) for dj in (0, 1) for dk in (0, 1)]
                faces = [[corner[c] for c in loop] for loop in HEX_FACES]
                elems.append(faces)
    xmin = {vid(0, j, k) for j in range(nv1) for k in range(nv1)}
    bnd = {vid(i, j, k) for i in range(nv1) for j in range(nv1) for k in range(nv1)
           if i in (0, nc) or j in (0, nc) or k in (0, nc)}
    xmax_faces = []
    for e in range(len(elems)):
        i = e // (nc * nc)
        if i == nc - 1:
            xmax_faces.append((e, 1))  # +x face index in HEX_FACES
    with open(path, "w") as f:
        f.write(f"# {nc}x{nc}x{nc} jittered hexahedral mesh of the unit cube\n")
        f.write(f"3 {len(verts)} {len(elems)}\n")
        for v in verts:
            f.write(f"v {v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
        for faces in elems:
            f.write(f"e {len(faces)}\n")
            for loop in faces:
                f.write("f " + " ".join(map(str, loop)) + "\n")
        f.write("set boundary dirichlet " + " ".join(map(str, sorted(bnd))) + "\n")
        f.write("set xmin dirichlet " + " ".join(map(str, sorted(xmin))) + "\n")
        f.write("set xmax neumann " + " ".join(f"({e},{k})" for e, k in xmax_faces) + "\n")
    print(f"{path}: {len(verts)} vertices, {len(elems)} cells")


if __name__ == "__main__":
    make_voronoi(16, seed=3, lloyd_iters=60, path=f"{OUT}/patch16.pmesh")
    make_voronoi(50, seed=7, lloyd_iters=60, path=f"{OUT}/voronoi50.pmesh", sets="loaded")
    make_hex(2, seed=11, jitter=0.15, path=f"{OUT}/cube8.pmesh")
    make_hex(6, seed=13, jitter=0.15, path=f"{OUT}/hex216.pmesh")

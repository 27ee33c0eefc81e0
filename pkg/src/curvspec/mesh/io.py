"""Triangle mesh ingestion, validation and builders."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..types import MeshError


@dataclass(frozen=True, eq=False)
class Topology:
    """Connectivity of a closed, oriented, connected triangle mesh.

    ``face_edges[f, i]`` is the edge opposite corner ``i`` of face ``f``,
    i.e. the edge joining ``faces[f, i+1]`` and ``faces[f, i+2]``.
    """

    faces: np.ndarray
    edges: np.ndarray
    face_edges: np.ndarray
    n_vertices: int

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + len(self.faces)

    @cached_property
    def rings(self) -> list:
        """Per vertex, the incident faces ordered as a fan ``[(face, corner), ...]``."""
        outgoing = [dict() for _ in range(self.n_vertices)]
        for f, tri in enumerate(self.faces):
            for i in range(3):
                v, a, b = tri[i], tri[(i + 1) % 3], tri[(i + 2) % 3]
                outgoing[v][int(a)] = (f, i, int(b))
        rings = []
        for v, fan in enumerate(outgoing):
            start = min(fan)
            order, a = [], start
            for _ in range(len(fan)):
                f, i, b = fan[a]
                order.append((f, i))
                a = b
                if a == start:
                    break
            if len(order) != len(fan) or a != start:
                raise MeshError(f"vertex {v} is not manifold (its faces do not form a single fan)")
            rings.append(order)
        return rings


def build_topology(faces, n_vertices: int) -> Topology:
    """Validate connectivity and derive the edge structure.

    Raises
    ------
    MeshError
        For out-of-range indices, repeated corners, boundary or non-manifold
        edges, inconsistent orientation, unreferenced vertices or several
        connected components.
    """
    F = np.asarray(faces, dtype=np.int64)
    if F.ndim != 2 or F.shape[1] != 3 or len(F) == 0:
        raise MeshError("faces must be a non-empty list of triangles")
    if F.min() < 0 or F.max() >= n_vertices:
        raise MeshError("face refers to a vertex index out of range")
    bad = np.flatnonzero((F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 2] == F[:, 0]))
    if bad.size:
        raise MeshError(f"face {bad[0]} repeats a vertex")
    unused = np.setdiff1d(np.arange(n_vertices), F.ravel())
    if unused.size:
        raise MeshError(f"vertex {unused[0]} is not used by any face")

    a = F[:, [1, 2, 0]].ravel()
    b = F[:, [2, 0, 1]].ravel()
    directed = a * n_vertices + b
    _, dcount = np.unique(directed, return_counts=True)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keys = lo * n_vertices + hi
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    if np.any(counts == 1):
        k = uniq[counts == 1][0]
        raise MeshError(f"boundary edge ({k // n_vertices}, {k % n_vertices}); the mesh must be closed")
    if np.any(counts > 2):
        k = uniq[counts > 2][0]
        raise MeshError(f"non-manifold edge ({k // n_vertices}, {k % n_vertices}) has {counts[counts > 2][0]} faces")
    if np.any(dcount > 1):
        raise MeshError("faces are not consistently oriented")

    edges = np.stack([uniq // n_vertices, uniq % n_vertices], axis=1)
    graph = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_vertices, n_vertices))
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp != 1:
        raise MeshError(f"mesh has {ncomp} connected components")
    topo = Topology(F, edges, inverse.reshape(len(F), 3), n_vertices)
    topo.rings  # noqa: B018  validates vertex manifoldness
    return topo


def edge_lengths_from_positions(vertices, edges) -> np.ndarray:
    V = np.asarray(vertices, dtype=float)
    return np.linalg.norm(V[edges[:, 0]] - V[edges[:, 1]], axis=1)


def _read_text(source) -> str:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        return Path(source).read_text()
    return str(source)


def read_off(source) -> tuple:
    """Parse an OFF file (path or text) into ``(vertices, faces)``."""
    tokens = []
    for line in _read_text(source).splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    if not tokens or tokens[0][0] != "OFF":
        raise MeshError("missing OFF header")
    head = tokens[0][1:] or tokens[1]
    body = tokens[1:] if tokens[0][1:] else tokens[2:]
    nv, nf = int(head[0]), int(head[1])
    if len(body) < nv + nf:
        raise MeshError("OFF file is truncated")
    V = np.array([[float(x) for x in row[:3]] for row in body[:nv]])
    faces = []
    for row in body[nv : nv + nf]:
        k = int(row[0])
        if k != 3:
            raise MeshError(f"only triangles are supported, found a {k}-gon")
        faces.append([int(x) for x in row[1:4]])
    return V, np.array(faces, dtype=np.int64)


def read_obj(source) -> tuple:
    """Parse the ``v``/``f`` records of an OBJ file (path or text)."""
    V, faces = [], []
    for line in _read_text(source).splitlines():
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "v":
            V.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise MeshError(f"only triangles are supported, found a {len(parts) - 1}-gon")
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            faces.append([i - 1 if i > 0 else len(V) + i for i in idx])
    if not V or not faces:
        raise MeshError("OBJ file has no vertices or no faces")
    return np.array(V, dtype=float), np.array(faces, dtype=np.int64)


def read_mesh(path) -> tuple:
    suffix = Path(path).suffix.lower()
    if suffix == ".off":
        return read_off(Path(path))
    if suffix == ".obj":
        return read_obj(Path(path))
    raise MeshError(f"unsupported mesh format {suffix!r}")


def read_vertex_csv(source, n_vertices: int) -> np.ndarray:
    """Per-vertex values from ``vertex_index,value`` rows; every vertex must appear once."""
    values = np.full(n_vertices, np.nan)
    for row in csv.reader(io.StringIO(_read_text(source))):
        if not row or row[0].strip().startswith("#"):
            continue
        try:
            i, val = int(row[0]), float(row[1])
        except ValueError:
            if row[0].strip() == "vertex_index":
                continue
            raise MeshError(f"malformed vertex row {row!r}") from None
        if not 0 <= i < n_vertices:
            raise MeshError(f"vertex index {i} out of range")
        if not np.isnan(values[i]):
            raise MeshError(f"vertex {i} listed twice")
        values[i] = val
    missing = np.flatnonzero(np.isnan(values))
    if missing.size:
        raise MeshError(f"no value for vertex {missing[0]} ({missing.size} missing)")
    return values


def icosphere(level: int, radius: float = 1.0) -> tuple:
    """Vertices and faces of a subdivided icosahedron projected to a sphere."""
    t = (1 + math.sqrt(5)) / 2
    V = [
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ]
    F = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in V]
    for _ in range(level):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                cache[key] = len(verts)
                verts.append(p / np.linalg.norm(p))
            return cache[key]

        new = []
        for a, b, c in F:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        F = new
    return radius * np.array(verts), np.array(F, dtype=np.int64)


def flat_torus(nx: int, ny: int, lx: float = 2 * math.pi, ly: float = 2 * math.pi) -> tuple:
    """Regular triangulation of a flat torus.

    Returns ``(vertices, faces, base_lengths)``. The vertices embed the torus
    in R^3 for display only; the flat metric is carried by the lengths, whose
    order matches the edge list of :func:`build_topology` on these faces.
    """
    if nx < 3 or ny < 3:
        raise ValueError("a torus triangulation needs at least 3x3 vertices")
    idx = lambda i, j: (i % nx) * ny + (j % ny)  # noqa: E731
    faces = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            faces += [[a, b, c], [a, c, d]]
    faces = np.array(faces, dtype=np.int64)
    u = 2 * math.pi * np.repeat(np.arange(nx), ny) / nx
    v = 2 * math.pi * np.tile(np.arange(ny), nx) / ny
    vertices = np.stack([(2 + np.cos(v)) * np.cos(u), (2 + np.cos(v)) * np.sin(u), np.sin(v)], axis=1)
    topo = build_topology(faces, nx * ny)
    hx, hy = lx / nx, ly / ny
    # chart displacement of each edge, taking the shortest periodic representative
    i0, j0 = topo.edges[:, 0] // ny, topo.edges[:, 0] % ny
    i1, j1 = topo.edges[:, 1] // ny, topo.edges[:, 1] % ny
    di = (i1 - i0 + nx // 2) % nx - nx // 2
    dj = (j1 - j0 + ny // 2) % ny - ny // 2
    lengths = np.hypot(di * hx, dj * hy)
    return vertices, faces, lengths

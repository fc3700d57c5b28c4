"""Conforming triangular meshes of the unit square and the L-shaped domain.

Triangles are stored counterclockwise.  Local edge ``i`` of a triangle joins
its vertices ``i`` and ``(i + 1) % 3``.  Global edges are stored with sorted
vertex indices and keep a list of their (one or two) adjacent triangles.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np


class EdgeTag(enum.IntEnum):
    INTERIOR = 0
    INFLOW = 1
    OUTFLOW = 2


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray      # (nV, 2)
    triangles: np.ndarray     # (nT, 3), counterclockwise
    edges: np.ndarray         # (nE, 2), v0 < v1
    edge_tris: np.ndarray     # (nE, 2), second entry -1 on the boundary
    tri_edges: np.ndarray     # (nT, 3), global edge of each local edge
    tri_normals: np.ndarray   # (nT, 3, 2), outward unit normal per local edge
    edge_lengths: np.ndarray  # (nE,)
    diameters: np.ndarray     # (nT,), longest edge
    edge_tags: np.ndarray     # (nE,), EdgeTag values
    regions: np.ndarray       # (nT,)
    domain: str = "square"

    @classmethod
    def from_triangles(cls, vertices, triangles, domain: str = "square",
                       regions=None) -> "Mesh":
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (nT, 3)")
        nT = len(triangles)

        p = vertices[triangles]
        signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        if np.any(np.abs(signed) <= 1e-14 * np.max(np.abs(signed), initial=1.0)):
            raise MeshError("degenerate triangle")
        flip = signed < 0
        if np.any(flip):
            triangles = triangles.copy()
            triangles[flip] = triangles[flip][:, [0, 2, 1]]
            p = vertices[triangles]

        local = np.stack([triangles, np.roll(triangles, -1, axis=1)], axis=2)  # (nT,3,2)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                           return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge")
        tri_edges = inverse.reshape(nT, 3)

        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(nT), 3)
        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        edge_tris[sorted_edges[first], 0] = owner[order][first]
        edge_tris[sorted_edges[~first], 1] = owner[order][~first]

        tangent = p[:, [1, 2, 0]] - p
        lengths = np.linalg.norm(tangent, axis=2)
        normals = np.stack([tangent[..., 1], -tangent[..., 0]], axis=2) / lengths[..., None]
        edge_vec = vertices[edges[:, 1]] - vertices[edges[:, 0]]

        tags = np.where(edge_tris[:, 1] < 0, EdgeTag.OUTFLOW, EdgeTag.INTERIOR).astype(np.int8)
        if regions is None:
            regions = np.zeros(nT, dtype=np.int64)
        return cls(vertices=vertices, triangles=triangles, edges=edges,
                   edge_tris=edge_tris, tri_edges=tri_edges, tri_normals=normals,
                   edge_lengths=np.linalg.norm(edge_vec, axis=1),
                   diameters=lengths.max(axis=1), edge_tags=tags,
                   regions=np.asarray(regions, dtype=np.int64), domain=domain)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def edge_midpoints(self) -> np.ndarray:
        return self.vertices[self.edges].mean(axis=1)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_tris[:, 1] < 0)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_tris[:, 1] >= 0)

    def local_edge_index(self, e: int, t: int) -> int:
        """Position of global edge ``e`` in the edge list of triangle ``t``."""
        return int(np.flatnonzero(self.tri_edges[t] == e)[0])

    def edge_normal(self, e: int, t: int) -> np.ndarray:
        return self.tri_normals[t, self.local_edge_index(e, t)]

    def with_regions(self, predicate: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Mesh":
        """Tag every triangle with ``predicate(x, y)`` evaluated at its centroid."""
        c = self.centroids
        regions = np.asarray(predicate(c[:, 0], c[:, 1]), dtype=np.int64)
        return dataclasses.replace(self, regions=np.broadcast_to(regions, (self.n_triangles,)).copy())


def _grid_triangles(nx: int, ny: int) -> np.ndarray:
    """Two triangles per cell of an (nx x ny) vertex-lattice, split along the
    diagonal from upper-left to lower-right."""
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    row = nx + 1
    a = i + row * j
    b = a + 1
    c = a + 1 + row
    d = a + row
    lower = np.stack([a, b, d], axis=1)
    upper = np.stack([b, c, d], axis=1)
    return np.stack([lower, upper], axis=1).reshape(-1, 3)


def _grid_vertices(nx: int, ny: int, hx: float, hy: float) -> np.ndarray:
    x, y = np.meshgrid(np.arange(nx + 1) * hx, np.arange(ny + 1) * hy, indexing="xy")
    return np.stack([x.ravel(), y.ravel()], axis=1)


def build_structured_square(n: int) -> Mesh:
    """Uniform n x n grid of the unit square, each cell cut into two right triangles."""
    if n < 1:
        raise MeshError("n must be >= 1")
    return Mesh.from_triangles(_grid_vertices(n, n, 1.0 / n, 1.0 / n),
                               _grid_triangles(n, n), domain="square")


def build_lshape(n: int) -> Mesh:
    """L-shaped domain made of three half-unit squares, each an n x n block."""
    if n < 1:
        raise MeshError("n must be >= 1")
    m = 2 * n
    verts = _grid_vertices(m, m, 1.0 / m, 1.0 / m)
    tris = _grid_triangles(m, m)
    cell = np.repeat(np.arange(m * m), 2)
    ci, cj = cell // m, cell % m  # _grid_triangles orders cells with i slowest
    keep = ~((ci >= n) & (cj < n))
    tris = tris[keep]
    used, tris = np.unique(tris, return_inverse=True)
    return Mesh.from_triangles(verts[used], tris.reshape(-1, 3), domain="lshape")


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: split every triangle into four via its edge midpoints."""
    nV = mesh.n_vertices
    mids = mesh.edge_midpoints
    verts = np.vstack([mesh.vertices, mids])
    t = mesh.triangles
    m = nV + mesh.tri_edges  # m[:, i] is the midpoint of local edge (i, i+1)
    children = np.stack([
        np.stack([t[:, 0], m[:, 0], m[:, 2]], axis=1),
        np.stack([m[:, 0], t[:, 1], m[:, 1]], axis=1),
        np.stack([m[:, 2], m[:, 1], t[:, 2]], axis=1),
        np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
    ], axis=1).reshape(-1, 3)
    fine = Mesh.from_triangles(verts, children, domain=mesh.domain,
                               regions=np.repeat(mesh.regions, 4))

    # children of a boundary edge inherit its tag
    tags = fine.edge_tags.copy()
    parent = mesh.boundary_edges
    lookup = {tuple(e): k for k, e in enumerate(fine.edges)}
    for e in parent:
        v0, v1 = mesh.edges[e]
        mid = nV + e
        for a, b in ((v0, mid), (mid, v1)):
            tags[lookup[(min(a, b), max(a, b))]] = mesh.edge_tags[e]
    return dataclasses.replace(fine, edge_tags=tags)


def boundary_beta_dot_n(mesh: Mesh, beta, points: np.ndarray | None = None) -> np.ndarray:
    """beta . n at boundary-edge midpoints (or given points, shape (nB, 2)),
    with beta taken from the adjacent triangle's region."""
    be = mesh.boundary_edges
    t = mesh.edge_tris[be, 0]
    if points is None:
        points = mesh.edge_midpoints[be]
    normals = np.array([mesh.edge_normal(e, tt) for e, tt in zip(be, t)]).reshape(-1, 2)
    if callable(beta):
        b = np.asarray(beta(points[:, 0], points[:, 1], mesh.regions[t]), dtype=float)
        b = np.broadcast_to(b, (len(be), 2))
    else:
        b = np.broadcast_to(np.asarray(beta, dtype=float), (len(be), 2))
    return np.einsum("ij,ij->i", b, normals)


def classify_boundary(mesh: Mesh, beta) -> Mesh:
    """Tag boundary edges as inflow (beta.n < 0 at the midpoint) or outflow.

    ``beta`` is either a constant 2-vector or a callable ``beta(x, y, region)``
    returning an array of shape (..., 2).
    """
    tags = mesh.edge_tags.copy()
    be = mesh.boundary_edges
    bn = boundary_beta_dot_n(mesh, beta)
    tags[be] = np.where(bn < 0, EdgeTag.INFLOW, EdgeTag.OUTFLOW)
    return dataclasses.replace(mesh, edge_tags=tags)


def write_mesh_csv(mesh: Mesh, directory) -> None:
    """Dump vertices.csv, triangles.csv and edges.csv into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "vertices.csv", "w") as fh:
        fh.write("id,x,y\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i},{x:.16e},{y:.16e}\n")
    with open(out / "triangles.csv", "w") as fh:
        fh.write("id,v0,v1,v2,region\n")
        for i, (tri, r) in enumerate(zip(mesh.triangles, mesh.regions)):
            fh.write(f"{i},{tri[0]},{tri[1]},{tri[2]},{r}\n")
    with open(out / "edges.csv", "w") as fh:
        fh.write("id,v0,v1,t0,t1,tag\n")
        for i, (e, et, tag) in enumerate(zip(mesh.edges, mesh.edge_tris, mesh.edge_tags)):
            fh.write(f"{i},{e[0]},{e[1]},{et[0]},{et[1]},{EdgeTag(tag).name.lower()}\n")

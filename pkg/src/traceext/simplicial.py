"""Finite homogeneous simplicial complexes with their intrinsic metric.

Every simplex is realized as an equilateral simplex of side 1.  Distances are
shortest paths in a refinement graph: each top simplex is subdivided with
``n`` intervals per edge, and every pair of lattice nodes inside a common
simplex is joined by a straight segment.  In barycentric coordinates ``b`` the
Euclidean length of a segment of the unit simplex is ``sqrt(sum(db**2) / 2)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import dijkstra

DEFAULT_SUBDIVISION = 16


class ComplexError(ValueError):
    pass


def simplex_volume(d: int) -> float:
    """Measure of the equilateral ``d``-simplex of side 1 (counting measure for d = 0)."""
    return math.sqrt(d + 1) / (math.factorial(d) * 2 ** (d / 2))


def _compositions(n: int, parts: int) -> np.ndarray:
    out = [c for c in itertools.product(range(n + 1), repeat=parts - 1) if sum(c) <= n]
    return np.array([(n - sum(c),) + c for c in out], dtype=int).reshape(-1, parts)


def _kuhn_cells(n: int, d: int) -> np.ndarray:
    """Subdivision of the ``d``-simplex into ``n**d`` lattice simplices.

    Returned as an array (cells, d + 1, d + 1) of integer barycentric counts.
    """
    if d == 0:
        return np.array([[[n]]], dtype=int)
    cells = []
    for z in itertools.product(range(n), repeat=d):
        for perm in itertools.permutations(range(d)):
            verts = [np.array(z)]
            for ax in perm:
                v = verts[-1].copy()
                v[ax] += 1
                verts.append(v)
            # inside iff n >= x_1 >= ... >= x_d >= 0 at every vertex
            if all(v[0] <= n and all(v[k] >= v[k + 1] for k in range(d - 1)) for v in verts):
                counts = []
                for v in verts:
                    c = np.empty(d + 1, dtype=int)
                    c[0] = n - v[0]
                    for k in range(1, d):
                        c[k] = v[k - 1] - v[k]
                    c[d] = v[d - 1]
                    counts.append(c)
                cells.append(counts)
    return np.array(cells, dtype=int)


@dataclass(frozen=True)
class ComplexPoint:
    """A point of the complex: a top simplex index plus barycentric weights."""

    simplex: int
    bary: tuple[float, ...]


@dataclass
class SimplicialComplex:
    simplices: np.ndarray
    n_vertices: int
    coords: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.simplices, dtype=int)
        if s.ndim != 2 or s.shape[0] == 0:
            raise ComplexError("need a nonempty list of top simplices of equal dimension")
        s = np.sort(s, axis=1)
        if np.any(s[:, 1:] == s[:, :-1]):
            raise ComplexError("simplex with repeated vertex")
        if s.min() < 0 or s.max() >= self.n_vertices:
            raise ComplexError("vertex index out of range")
        self.simplices = s
        self._refinements: dict[int, Refinement] = {}

    @classmethod
    def from_simplices(cls, simplices: Sequence[Sequence[int]], coords=None):
        sizes = {len(t) for t in simplices}
        if len(sizes) != 1:
            raise ComplexError("complex is not homogeneous: top simplices of different dimensions")
        arr = np.array(simplices, dtype=int)
        nv = int(arr.max()) + 1
        if coords is not None:
            coords = np.asarray(coords, dtype=float)
            nv = max(nv, coords.shape[0])
        return cls(arr, nv, coords)

    @property
    def dim(self) -> int:
        return self.simplices.shape[1] - 1

    @property
    def measure(self) -> float:
        return len(self.simplices) * simplex_volume(self.dim)

    def refinement(self, n: int = DEFAULT_SUBDIVISION) -> "Refinement":
        if n not in self._refinements:
            self._refinements[n] = Refinement(self, n)
        return self._refinements[n]

    def simplices_containing(self, face: Sequence[int]) -> np.ndarray:
        face = set(int(v) for v in face)
        return np.array([i for i, s in enumerate(self.simplices) if face.issubset(s)], dtype=int)

    def check_point(self, pt: ComplexPoint) -> np.ndarray:
        if not 0 <= pt.simplex < len(self.simplices):
            raise ComplexError(f"simplex index {pt.simplex} out of range")
        b = np.asarray(pt.bary, dtype=float)
        if b.shape != (self.dim + 1,) or np.any(b < -1e-12) or abs(b.sum() - 1.0) > 1e-9:
            raise ComplexError("point is not on the complex (bad barycentric coordinates)")
        return b

    def vertex_point(self, v: int) -> ComplexPoint:
        idx = self.simplices_containing([v])
        if idx.size == 0:
            raise ComplexError(f"vertex {v} is not used by any simplex")
        s = int(idx[0])
        b = tuple(1.0 if int(w) == v else 0.0 for w in self.simplices[s])
        return ComplexPoint(s, b)


@dataclass
class Subcomplex:
    """Codimension-one homogeneous subcomplex given by its top faces."""

    parent: SimplicialComplex
    faces: np.ndarray = field(default=None)

    def __post_init__(self):
        f = np.asarray(self.faces, dtype=int)
        if f.ndim != 2 or f.shape[0] == 0:
            raise ComplexError("empty subcomplex")
        if f.shape[1] != self.parent.dim:
            raise ComplexError(
                f"subcomplex must have dimension {self.parent.dim - 1}, got {f.shape[1] - 1}"
            )
        f = np.sort(f, axis=1)
        for face in f:
            if self.parent.simplices_containing(face).size == 0:
                raise ComplexError(f"{face.tolist()} is not a face of the complex")
        self.faces = f

    @property
    def dim(self) -> int:
        return self.faces.shape[1] - 1

    @property
    def vertices(self) -> np.ndarray:
        return np.unique(self.faces)


def load_complex(path) -> tuple[SimplicialComplex, Subcomplex]:
    """Read ``{vertices, simplices, sigma0}`` JSON; ``sigma0`` lists the faces of the subcomplex."""
    with open(path) as fh:
        data = json.load(fh)
    cx = SimplicialComplex.from_simplices(data["simplices"], data.get("vertices"))
    return cx, Subcomplex(cx, np.array(data["sigma0"], dtype=int))


def dump_complex(path, cx: SimplicialComplex, sub: Subcomplex) -> None:
    data = {
        "vertices": [] if cx.coords is None else np.asarray(cx.coords).tolist(),
        "simplices": cx.simplices.tolist(),
        "sigma0": sub.faces.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True)


class Refinement:
    """Edge-subdivided lattice of a complex with its shortest-path graph."""

    def __init__(self, cx: SimplicialComplex, n: int):
        if n < 1:
            raise ComplexError("subdivision must be >= 1")
        self.cx = cx
        self.n = n
        d = cx.dim
        self.lattice = _compositions(n, d + 1)  # (L, d+1) counts
        keys: dict[tuple, int] = {}
        node_ids = np.empty((len(cx.simplices), len(self.lattice)), dtype=int)
        for si, simp in enumerate(cx.simplices):
            for li, counts in enumerate(self.lattice):
                key = tuple((int(v), int(c)) for v, c in zip(simp, counts) if c)
                node_ids[si, li] = keys.setdefault(key, len(keys))
        self.keys = keys
        self.node_ids = node_ids
        self.n_nodes = len(keys)

        # complete graph inside every simplex
        a, b = np.triu_indices(len(self.lattice), k=1)
        diff = (self.lattice[a] - self.lattice[b]).astype(float)
        w = np.sqrt(0.5 * np.sum(diff**2, axis=1)) / n
        rows = node_ids[:, a].ravel()
        cols = node_ids[:, b].ravel()
        ww = np.tile(w, len(cx.simplices))
        # pairs on shared faces appear more than once; keep one copy
        self.graph = _min_duplicates(rows, cols, ww, self.n_nodes)

        # top refinement cells
        kc = _kuhn_cells(n, d)  # (C, d+1 vertices, d+1 counts)
        self.cell_counts = kc
        lat_index = {tuple(c): i for i, c in enumerate(self.lattice)}
        kc_local = np.array([[lat_index[tuple(v)] for v in cell] for cell in kc], dtype=int)
        self.cell_nodes = node_ids[:, kc_local].reshape(-1, d + 1)  # (S*C, d+1)
        self.cell_simplex = np.repeat(np.arange(len(cx.simplices)), len(kc))
        self.cell_measure = simplex_volume(d) / n**d
        # offset from each cell vertex to the cell barycenter
        bc = kc.mean(axis=1, keepdims=True)
        off = np.sqrt(0.5 * np.sum((kc - bc) ** 2, axis=2)) / n  # (C, d+1)
        self.cell_offsets = np.tile(off, (len(cx.simplices), 1))

    @property
    def n_cells(self) -> int:
        return self.cell_nodes.shape[0]

    def cell_barycenters(self) -> list[ComplexPoint]:
        kc = self.cell_counts
        bc = kc.mean(axis=1) / self.n
        return [ComplexPoint(int(s), tuple(bc[i % len(kc)])) for i, s in enumerate(self.cell_simplex)]

    def cell_distances(self, node_dist: np.ndarray) -> np.ndarray:
        return np.min(node_dist[self.cell_nodes] + self.cell_offsets, axis=1)

    @cached_property
    def _sub_cache(self) -> dict:
        return {}

    def subcomplex_cells(self, sub: Subcomplex):
        """(node ids, offsets, measure) of the refinement cells of a subcomplex."""
        key = sub.faces.tobytes()
        if key in self._sub_cache:
            return self._sub_cache[key]
        d0 = sub.dim
        kc = _kuhn_cells(self.n, d0)
        nodes = []
        for face in sub.faces:
            for cell in kc:
                ids = []
                for counts in cell:
                    k = tuple((int(v), int(c)) for v, c in zip(face, counts) if c)
                    ids.append(self.keys[k])
                nodes.append(ids)
        nodes = np.array(nodes, dtype=int)
        bc = kc.mean(axis=1, keepdims=True)
        off = np.sqrt(0.5 * np.sum((kc - bc) ** 2, axis=2)) / self.n
        offsets = np.tile(off, (len(sub.faces), 1))
        measure = 1.0 if d0 == 0 else simplex_volume(d0) / self.n**d0
        out = (nodes, offsets, measure)
        self._sub_cache[key] = out
        return out

    def subcomplex_nodes(self, sub: Subcomplex) -> np.ndarray:
        nodes, _, _ = self.subcomplex_cells(sub)
        return np.unique(nodes)

    def point_links(self, pt: ComplexPoint) -> tuple[np.ndarray, np.ndarray]:
        """Graph nodes reachable by a straight segment from ``pt`` and their lengths."""
        b = self.cx.check_point(pt)
        simp = self.cx.simplices[pt.simplex]
        support = [int(v) for v, w in zip(simp, b) if w > 1e-14]
        ids, lens = [], []
        for si in self.cx.simplices_containing(support):
            s = self.cx.simplices[si]
            # barycentric coordinates of pt in simplex si
            bb = np.zeros(len(s))
            for v, w in zip(simp, b):
                if w > 1e-14:
                    bb[int(np.nonzero(s == v)[0][0])] = w
            diff = self.lattice / self.n - bb[None, :]
            ids.append(self.node_ids[si])
            lens.append(np.sqrt(0.5 * np.sum(diff**2, axis=1)))
        return np.concatenate(ids), np.concatenate(lens)

    def distances_from_point(self, pt: ComplexPoint) -> np.ndarray:
        ids, lens = self.point_links(pt)
        # shortest path from an auxiliary source node
        n = self.n_nodes
        rows = np.concatenate([self.graph.tocoo().row, np.full(len(ids), n)])
        cols = np.concatenate([self.graph.tocoo().col, ids])
        w = np.concatenate([self.graph.tocoo().data, np.maximum(lens, 1e-300)])
        g = _min_duplicates(rows, cols, w, n + 1)
        return dijkstra(g, directed=False, indices=n)[:n]

    def node_distances(self, sources) -> np.ndarray:
        return dijkstra(self.graph, directed=False, indices=sources)


def _min_duplicates(rows, cols, w, size) -> csr_matrix:
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    order = np.lexsort((w, hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    keep = np.ones(len(lo), dtype=bool)
    keep[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    return coo_matrix((w[keep], (lo[keep], hi[keep])), shape=(size, size)).tocsr()


def geodesic_distance(cx: SimplicialComplex, x: ComplexPoint, y: ComplexPoint,
                      n: int = DEFAULT_SUBDIVISION) -> float:
    """Intrinsic distance, approximated on the refinement graph (error <= 2/n)."""
    ref = cx.refinement(n)
    dist = ref.distances_from_point(x)
    ids, lens = ref.point_links(y)
    best = float(np.min(dist[ids] + lens))
    bx = cx.check_point(x)
    by = cx.check_point(y)
    if x.simplex == y.simplex:
        best = min(best, math.sqrt(0.5 * float(np.sum((bx - by) ** 2))))
    return best


def d0(cx: SimplicialComplex, sub: Subcomplex, y: ComplexPoint, n: int = DEFAULT_SUBDIVISION) -> float:
    """Distance from ``y`` to the subcomplex."""
    if sub is None or len(sub.faces) == 0:
        raise ComplexError("empty subcomplex")
    ref = cx.refinement(n)
    dist = d0_nodes(cx, sub, n)
    ids, lens = ref.point_links(y)
    return float(np.min(dist[ids] + lens))


def d0_nodes(cx: SimplicialComplex, sub: Subcomplex, n: int = DEFAULT_SUBDIVISION) -> np.ndarray:
    ref = cx.refinement(n)
    src = ref.subcomplex_nodes(sub)
    return dijkstra(ref.graph, directed=False, indices=src, min_only=True)


def default_delta_grid(diam: float) -> np.ndarray:
    k = np.arange(0, 12 * 4 + 1)
    return diam * 2.0 ** (-12.0) * 2.0 ** (k / 4.0)


def _graph_vertex_distances(cx: SimplicialComplex) -> np.ndarray:
    e = cx.simplices
    g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(cx.n_vertices,) * 2).tocsr()
    return dijkstra(g, directed=False)


def _gamma_graph(cx, sub, lam, delta_grid):
    """Exact evaluation for 1-dimensional complexes with counting measure on vertices.

    Between breakpoints the quotient is ``a / delta + b``, hence monotone, so
    its sup is attained at a breakpoint (as a left limit where the counting
    measure jumps) or in the ``delta -> 0`` limit.
    """
    D = _graph_vertex_distances(cx)
    u, v = cx.simplices[:, 0], cx.simplices[:, 1]
    deg = np.bincount(cx.simplices.ravel(), minlength=cx.n_vertices)
    z_set = sub.vertices
    diam = float(np.max(D[np.isfinite(D)])) + 1.0
    grid = default_delta_grid(diam) if delta_grid is None else np.asarray(delta_grid, float)
    best = 0.0
    for z in z_set:
        # limit delta -> 0: ball of radius lam*delta covers lam*delta of every incident edge
        best = max(best, lam * float(deg[z]))
        du, dv = D[z, u], D[z, v]
        radii = np.concatenate([du, dv, du + 1, dv + 1, 0.5 * (1 + du + dv)])
        breaks = np.concatenate([radii / lam, D[z, z_set]])
        breaks = breaks[np.isfinite(breaks) & (breaks > 0)]
        for delta in np.concatenate([grid, breaks]):
            r = lam * delta
            a = np.clip(r - D[z, u], 0.0, 1.0)
            b = np.clip(r - D[z, v], 0.0, 1.0)
            num = float(np.sum(np.minimum(1.0, a + b)))
            den = float(np.count_nonzero(D[z, z_set] < delta))
            if den > 0:
                best = max(best, num / (delta * den))
    return best


def gamma(cx: SimplicialComplex, sub: Subcomplex, lam: float, delta_grid=None,
          n: int = DEFAULT_SUBDIVISION, max_z: int = 64) -> float:
    """Upper codimension-one regularity ratio of ``sub`` inside ``cx``.

    Max over sampled ``z`` in the subcomplex and ``delta`` in the grid of
    ``|B(z, lam*delta)| / (delta * |sub ∩ B(z, delta)|)``.  One-dimensional
    complexes are evaluated exactly (including the ``delta -> 0`` limit);
    higher dimensions sum refinement-cell measures by barycenter distance.
    """
    if lam <= 1:
        raise ComplexError("lambda must be > 1")
    if sub is None or len(sub.faces) == 0:
        raise ComplexError("empty subcomplex")
    if cx.dim == 1:
        return _gamma_graph(cx, sub, lam, delta_grid)

    ref = cx.refinement(n)
    z_nodes = ref.subcomplex_nodes(sub)
    if len(z_nodes) > max_z:
        z_nodes = z_nodes[np.linspace(0, len(z_nodes) - 1, max_z).round().astype(int)]
    dist = ref.node_distances(z_nodes)
    if delta_grid is None:
        diam = float(np.max(dist[np.isfinite(dist)]))
        grid = default_delta_grid(diam)
    else:
        grid = np.asarray(delta_grid, dtype=float)
    sub_nodes, sub_off, sub_mu = ref.subcomplex_cells(sub)
    best = 0.0
    for row in dist:
        cd = np.sort(ref.cell_distances(row))
        sd = np.sort(np.min(row[sub_nodes] + sub_off, axis=1))
        num = np.searchsorted(cd, lam * grid, side="left") * ref.cell_measure
        den = np.searchsorted(sd, grid, side="left") * sub_mu
        ok = den > 0
        if np.any(ok):
            best = max(best, float(np.max(num[ok] / (grid[ok] * den[ok]))))
    return best


@dataclass
class PLMap:
    """Piecewise-affine map of a complex into ``R^m`` given by vertex images."""

    cx: SimplicialComplex
    images: np.ndarray
    sub: Subcomplex | None = None
    boundary_flag: bool = True
    upper_flag: bool = True

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        if self.images.shape[0] < self.cx.n_vertices:
            raise ComplexError("need one image point per vertex")
        if self.upper_flag and np.any(self.images[:, -1] < 0):
            raise ComplexError("image leaves the closed upper half-space")
        if self.boundary_flag and self.sub is not None:
            if np.any(self.images[self.sub.vertices, -1] != 0):
                raise ComplexError("subcomplex is not mapped into the boundary hyperplane")

    def __call__(self, pt: ComplexPoint) -> np.ndarray:
        b = self.cx.check_point(pt)
        return b @ self.images[self.cx.simplices[pt.simplex]]

    def evaluate(self, simplex_idx: np.ndarray, bary: np.ndarray) -> np.ndarray:
        verts = self.cx.simplices[simplex_idx]  # (k, d+1)
        return np.einsum("kd,kdm->km", bary, self.images[verts])


def _equilateral_edges(d: int) -> np.ndarray:
    e = np.eye(d + 1) / math.sqrt(2.0)
    return (e[1:] - e[0]).T  # (d+1, d) edge vectors of a unit simplex


def lipschitz_constant(sigma: PLMap) -> float:
    """Max operator norm of the affine differential over all simplices."""
    d = sigma.cx.dim
    if d == 0:
        return 0.0
    A = _equilateral_edges(d)
    _, R = np.linalg.qr(A)
    Rinv = np.linalg.inv(R)
    best = 0.0
    for simp in sigma.cx.simplices:
        P = sigma.images[simp]
        B = (P[1:] - P[0]).T  # (m, d)
        best = max(best, float(np.linalg.norm(B @ Rinv, 2)))
    return best


def cubical_skeleton_complex(m: int, ell: int, j: int) -> tuple[SimplicialComplex, Subcomplex]:
    """Unit cubical complex of ``ell``-cells of the clipped cubication inside ``[-j, j]^m``.

    Squares are split along one diagonal; the subcomplex is the boundary-trace
    skeleton of dimension ``ell - 1``.
    """
    from .cubical import Cubication, enumerate_skeleton

    if ell not in (1, 2):
        raise ComplexError("only 1- and 2-dimensional cubical complexes are supported")
    cub = Cubication(1.0, m, ((-(j - 1), j - 1),) * (m - 1) + ((0, j - 1),))
    cells = enumerate_skeleton(cub, ell, "plus")
    index: dict[tuple, int] = {}

    def vid(x):
        return index.setdefault(tuple(np.round(2 * x).astype(int)), len(index))

    simplices = []
    for c in cells:
        vs = c.vertices()
        if ell == 1:
            simplices.append([vid(vs[0]), vid(vs[1])])
        else:
            a, b, cc, dd = (vid(v) for v in vs)  # (00, 01, 10, 11)
            simplices.append([a, b, dd])
            simplices.append([a, cc, dd])
    faces = []
    for c in enumerate_skeleton(cub, ell - 1, "zero"):
        lo, hi = c.bounds()
        lo[-1] = hi[-1] = 0.0
        if ell == 1:
            faces.append([vid(lo)])
        else:
            faces.append([vid(lo), vid(hi)])
    coords = np.zeros((len(index), m))
    for key, i in index.items():
        coords[i] = np.array(key) / 2.0
    cx = SimplicialComplex.from_simplices(simplices, coords)
    return cx, Subcomplex(cx, np.array(faces))


def random_graph_complex(rng) -> tuple[SimplicialComplex, Subcomplex]:
    """Connected 1-dimensional complex (random tree plus a few extra edges) with random vertices as ``sub``."""
    nv = int(rng.integers(3, 7))
    edges = set()
    for v in range(1, nv):
        edges.add((int(rng.integers(0, v)), v))
    for _ in range(int(rng.integers(0, 3))):
        a, b = sorted(int(i) for i in rng.choice(nv, size=2, replace=False))
        edges.add((a, b))
    cx = SimplicialComplex.from_simplices(sorted(edges))
    k = int(rng.integers(1, nv))
    sub = Subcomplex(cx, [[int(v)] for v in sorted(rng.choice(nv, size=k, replace=False))])
    return cx, sub


def gamma_brute_force(cx: SimplicialComplex, sub: Subcomplex, lam: float, samples: int = 20000,
                      n_delta: int = 3000) -> float:
    """Dense edge sampling and a log-spaced radius scan for 1-dimensional complexes."""
    if cx.dim != 1 or sub.dim != 0:
        raise ComplexError("brute force scan needs a graph with a vertex subcomplex")
    D = _graph_vertex_distances(cx)
    t = (np.arange(samples) + 0.5) / samples
    deltas = np.geomspace(1e-2, cx.n_vertices + 1.0, n_delta)
    z_set = sub.vertices
    best = 0.0
    for z in z_set:
        pd = np.concatenate([np.minimum(D[z, a] + t, D[z, b] + 1 - t) for a, b in cx.simplices])
        pd.sort()
        num = np.searchsorted(pd, lam * deltas) / samples
        zd = np.sort(D[z, z_set])
        den = np.searchsorted(zd, deltas, side="left")
        best = max(best, float(np.max(num / (deltas * den))))
    return best

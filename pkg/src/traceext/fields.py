"""Sphere-valued maps sampled on cubical skeletons, grids and complexes.

Energies use the per-cell tangential gradient: central differences at
interior samples, one-sided differences at cell boundaries (including the
``x_m = 0`` edge of clipped half-cells), with trapezoid quadrature weights.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .cubical import PRIMAL_CLIPPED, CubicalCell, cell_lattice
from .simplicial import Refinement, SimplicialComplex

SINGULAR_RADIUS = 1e-9


class SingularProjection(ValueError):
    pass


class UndersampledLoop(ValueError):
    pass


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class Sphere:
    """Unit sphere ``S^{nu-1}`` in ``R^nu``."""

    nu: int = 2
    tube_radius: float = 0.5

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nu:
            raise FieldError(f"expected {self.nu} components, got {x.shape[-1]}")
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(r <= SINGULAR_RADIUS):
            raise SingularProjection("point too close to the origin")
        # rows already on the sphere up to rounding are returned untouched,
        # which makes projection exactly idempotent
        return np.where(np.abs(r - 1.0) <= 4 * np.finfo(float).eps, x, x / r)

    def distance_to(self, x) -> np.ndarray:
        return np.abs(np.linalg.norm(np.asarray(x, dtype=float), axis=-1) - 1.0)


def project_to_target(x, target: Sphere | None = None) -> np.ndarray:
    target = target or Sphere(np.asarray(x).shape[-1])
    return target.project(x)


@dataclass
class EnergyReport:
    p: float
    value: float
    step: float
    cells: int
    family: str

    def to_dict(self) -> dict:
        return asdict(self)


def _stencil_1d(length: int, h: float) -> sparse.csr_matrix:
    if length < 2:
        raise FieldError("need at least 2 samples per cell axis")
    rows, cols, vals = [0, 0], [0, 1], [-1.0, 1.0]
    for i in range(1, length - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5, 0.5]
    rows += [length - 1, length - 1]
    cols += [length - 2, length - 1]
    vals += [-1.0, 1.0]
    return sparse.csr_matrix((np.array(vals) / h, (rows, cols)), shape=(length, length))


def _trapezoid_1d(length: int, h: float) -> np.ndarray:
    w = np.full(length, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = sparse.kron(out, m, format="csr")
    return sparse.csr_matrix(out)


@dataclass
class SkeletonLattice:
    """Shared sample nodes on a union of equal-dimensional cubical cells."""

    cells: list
    n: int
    nodes: np.ndarray
    cell_nodes: list  # per cell: array of node ids with the lattice shape
    shapes: list

    @classmethod
    def build(cls, cells: Sequence[CubicalCell], n: int) -> "SkeletonLattice":
        if not cells:
            raise FieldError("no cells")
        dims = {c.dim for c in cells}
        if len(dims) != 1:
            raise FieldError("cells must share one dimension")
        kappa = cells[0].kappa
        shift = np.asarray(cells[0].shift)
        scale = 2 * n / kappa
        index: dict[tuple, int] = {}
        coords = []
        cell_nodes, shapes = [], []
        for c in cells:
            pts, shape = cell_lattice(c, n)
            keys = np.round((pts - shift) * scale).astype(np.int64)
            ids = np.empty(len(pts), dtype=np.int64)
            for i, k in enumerate(map(tuple, keys)):
                j = index.get(k)
                if j is None:
                    j = index[k] = len(coords)
                    coords.append(pts[i])
                ids[i] = j
            cell_nodes.append(ids.reshape(shape) if shape else ids)
            shapes.append(shape)
        return cls(list(cells), n, np.array(coords), cell_nodes, shapes)

    @property
    def dim(self) -> int:
        return self.cells[0].dim

    @property
    def step(self) -> float:
        return self.cells[0].kappa / self.n

    @cached_property
    def operator(self) -> tuple[sparse.csr_matrix, np.ndarray]:
        """Stacked derivative matrix (dim * R, N) and quadrature weights (R,)."""
        ell = self.dim
        h = self.step
        if ell == 0:
            return sparse.csr_matrix((0, len(self.nodes))), np.zeros(0)
        groups: dict[tuple, list[int]] = {}
        for i, s in enumerate(self.shapes):
            groups.setdefault(s, []).append(i)
        blocks = [[] for _ in range(ell)]
        weights = []
        row0 = 0
        for shape, members in sorted(groups.items()):
            size = int(np.prod(shape))
            ids = np.stack([self.cell_nodes[i].ravel() for i in members])  # (g, size)
            g = len(members)
            eyes = [sparse.identity(k, format="csr") for k in shape]
            for a in range(ell):
                mats = list(eyes)
                mats[a] = _stencil_1d(shape[a], h)
                loc = _kron_all(mats).tocoo()
                r = (np.arange(g)[:, None] * size + loc.row[None, :]).ravel() + row0
                c = ids[:, loc.col].ravel()
                v = np.tile(loc.data, g)
                blocks[a].append((r, c, v))
            w = _trapezoid_1d(shape[0], h)
            for k in shape[1:]:
                w = np.multiply.outer(w, _trapezoid_1d(k, h))
            weights.append(np.tile(w.ravel(), g))
            row0 += g * size
        R = row0
        mats = []
        for a in range(ell):
            r = np.concatenate([b[0] for b in blocks[a]])
            c = np.concatenate([b[1] for b in blocks[a]])
            v = np.concatenate([b[2] for b in blocks[a]])
            mats.append(sparse.csr_matrix((v, (r, c)), shape=(R, len(self.nodes))))
        return sparse.vstack(mats, format="csr"), np.concatenate(weights)

    @cached_property
    def row_points(self) -> np.ndarray:
        """Coordinates of the quadrature rows, in the order used by ``operator``."""
        groups: dict[tuple, list[int]] = {}
        for i, s in enumerate(self.shapes):
            groups.setdefault(s, []).append(i)
        ids = [self.cell_nodes[i].ravel() for _, members in sorted(groups.items()) for i in members]
        return self.nodes[np.concatenate(ids)] if ids else np.zeros((0, self.nodes.shape[1]))

    def energy_in_box(self, values: np.ndarray, p: float, lo, hi) -> float:
        """Energy of the part of the skeleton inside the closed box ``[lo, hi]``."""
        if self.dim == 0:
            return 0.0
        q, _ = self.energy_density(values)
        _, w = self.operator
        pts = self.row_points
        tol = 1e-9 * self.step
        inside = np.all((pts >= np.asarray(lo) - tol) & (pts <= np.asarray(hi) + tol), axis=1)
        return float(np.sum((w * q ** (p / 2))[inside]))

    def energy_density(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Squared gradient norm per quadrature row, and the stacked derivatives."""
        G, w = self.operator
        D = (G @ values).reshape(self.dim, len(w), -1)
        return np.sum(D**2, axis=(0, 2)), D

    @cached_property
    def _lookup(self):
        if self.n % 2:
            raise FieldError("point evaluation needs an even number of intervals per cell")
        kappa = self.cells[0].kappa
        shift = np.asarray(self.cells[0].shift)
        ints = np.round((self.nodes - shift) * self.n / kappa).astype(np.int64)
        lo = ints.min(axis=0)
        span = ints.max(axis=0) - lo + 3
        stride = np.cumprod(np.concatenate([[1], span[:-1]]))
        codes = (ints - lo) @ stride
        order = np.argsort(codes)
        return lo, span, stride, codes[order], order

    def interpolate(self, values: np.ndarray, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Multilinear interpolation of node values at points of the skeleton."""
        lo, span, stride, codes, order = self._lookup
        kappa = self.cells[0].kappa
        shift = np.asarray(self.cells[0].shift)
        z = (np.asarray(points, dtype=float) - shift) * self.n / kappa
        base = np.floor(z + tol)
        frac = z - base
        frac[frac < tol] = 0.0
        base = base.astype(np.int64)
        moving = frac > 0
        out = np.zeros((len(z), values.shape[1]))
        k_max = int(moving.sum(axis=1).max()) if len(z) else 0
        if k_max > self.dim:
            raise FieldError("point is not on the skeleton")
        m = z.shape[1]
        # enumerate corners over all axes; non-moving axes contribute weight 0 for bit 1
        for bits in np.ndindex(*(2,) * m):
            b = np.array(bits)
            if np.any(b & ~np.any(moving, axis=0)):
                continue
            w = np.prod(np.where(b, frac, np.where(moving, 1 - frac, 1.0)), axis=1)
            w[np.any(b & ~moving, axis=1)] = 0.0
            use = w > 0
            if not np.any(use):
                continue
            c = base[use] + b
            code = (c - lo) @ stride
            pos = np.searchsorted(codes, code)
            pos = np.minimum(pos, len(codes) - 1)
            if np.any(codes[pos] != code) or np.any(c < lo) or np.any(c - lo >= span):
                raise FieldError("point is not on the skeleton")
            out[use] += w[use, None] * values[order[pos]]
        return out

    def energy(self, values: np.ndarray, p: float) -> float:
        if self.dim == 0:
            return 0.0
        q, _ = self.energy_density(values)
        _, w = self.operator
        return float(np.sum(w * q ** (p / 2)))

    def energy_and_gradient(self, values: np.ndarray, p: float) -> tuple[float, np.ndarray]:
        G, w = self.operator
        q, D = self.energy_density(values)
        e = float(np.sum(w * q ** (p / 2)))
        safe = np.where(q > 0, q, 1.0)
        factor = np.where(q > 0, p * w * safe ** (p / 2 - 1), 0.0)
        grad = G.T @ (factor[None, :, None] * D).reshape(G.shape[0], -1)
        return e, np.asarray(grad)


@dataclass
class SkeletonMap:
    """Sphere-valued samples on the shared lattice of a cubical skeleton."""

    lattice: SkeletonLattice
    values: np.ndarray
    target: Sphere = field(default_factory=Sphere)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.lattice.nodes), self.target.nu):
            raise FieldError("values must have one target vector per node")
        self.values = self.target.project(v)

    @classmethod
    def from_function(cls, cells, n: int, func: Callable, target: Sphere | None = None):
        lat = SkeletonLattice.build(cells, n)
        target = target or Sphere()
        return cls(lat, func(lat.nodes), target)

    def energy(self, p: float) -> EnergyReport:
        return energy_p(self, p)

    def evaluate(self, points) -> np.ndarray:
        return self.target.project(self.lattice.interpolate(self.values, np.atleast_2d(points)))


def energy_p(u, p: float) -> EnergyReport:
    """Discrete p-energy of a skeleton map, grid map, or complex map."""
    if p <= 1:
        raise FieldError("p must exceed 1")
    if isinstance(u, SkeletonMap):
        lat = u.lattice
        fam = "clipped" if any(c.kind == PRIMAL_CLIPPED for c in lat.cells) else lat.cells[0].kind
        return EnergyReport(p, lat.energy(u.values, p), lat.step, len(lat.cells), f"skeleton_{lat.dim}:{fam}")
    if isinstance(u, GridMap):
        return EnergyReport(p, u.energy(p), u.step, int(np.count_nonzero(u.weights)), f"grid_{u.dim}")
    if isinstance(u, ComplexMap):
        return EnergyReport(p, u.energy(p), 1.0, len(u.cx.simplices), f"complex_{u.cx.dim}")
    raise FieldError(f"unsupported domain {type(u).__name__}")


@dataclass
class GridMap:
    """Samples on a regular grid; ``weights`` are per-sample coverage fractions."""

    origin: np.ndarray
    step: float
    values: np.ndarray  # shape (*grid, nu)
    weights: np.ndarray | None = None
    target: Sphere | None = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.target is not None:
            self.values = self.target.project(self.values)
        if self.weights is None:
            self.weights = np.ones(self.values.shape[:-1])
        if any(k < 2 for k in self.values.shape[:-1]):
            raise FieldError("need at least 2 samples per grid axis")

    @classmethod
    def from_function(cls, func, lo, hi, step, target=None, weights=None, centered=True):
        """Sample on a grid of pitch ``step`` over the box ``[lo, hi]``.

        With ``centered`` the samples are pixel centers, otherwise lattice
        points including the box corners.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        counts = np.round((hi - lo) / step).astype(int)
        if centered:
            axes = [lo[i] + (np.arange(counts[i]) + 0.5) * step for i in range(len(lo))]
        else:
            axes = [lo[i] + np.arange(counts[i] + 1) * step for i in range(len(lo))]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        values = func(mesh.reshape(-1, len(lo))).reshape(mesh.shape[:-1] + (-1,))
        if callable(weights):
            weights = weights(mesh)
        return cls(np.array([a[0] for a in axes]), step, values, weights, target)

    @property
    def dim(self) -> int:
        return self.values.ndim - 1

    @property
    def points(self) -> np.ndarray:
        axes = [self.origin[i] + np.arange(k) * self.step for i, k in enumerate(self.values.shape[:-1])]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)

    def energy_density(self, p: float) -> np.ndarray:
        """Weighted ``|DU|^p`` per sample, central differences inside."""
        q = np.zeros(self.values.shape[:-1])
        for a in range(self.dim):
            g = np.gradient(self.values, self.step, axis=a, edge_order=1)
            q += np.sum(g**2, axis=-1)
        return self.weights * q ** (p / 2)

    def energy(self, p: float) -> float:
        return float(np.sum(self.energy_density(p).ravel()) * self.step**self.dim)


def annulus_coverage(mesh: np.ndarray, step: float, r_in: float, r_out: float, sub: int = 8) -> np.ndarray:
    """Area fraction of each pixel (centered at ``mesh``) inside ``r_in < |x| < r_out``."""
    off = ((np.arange(sub) + 0.5) / sub - 0.5) * step
    frac = np.zeros(mesh.shape[:-1])
    for dx in off:
        for dy in off:
            r = np.hypot(mesh[..., 0] + dx, mesh[..., 1] + dy)
            frac += (r > r_in) & (r < r_out)
    return frac / sub**2


def vortex_annulus_map(kappa: float, refine: int = 8) -> GridMap:
    """``x / |x|`` on the annulus ``kappa < |x| < 1`` with pixel pitch ``kappa / refine``."""
    step = kappa / refine
    half = math.ceil(1.0 / step) * step
    return GridMap.from_function(
        lambda x: x, [-half, -half], [half, half], step, Sphere(2),
        weights=lambda mesh: annulus_coverage(mesh, step, kappa, 1.0),
    )


@dataclass
class ComplexMap:
    """Vertex values on a simplicial complex, affine on each simplex."""

    cx: SimplicialComplex
    values: np.ndarray

    def energy(self, p: float) -> float:
        from .simplicial import _equilateral_edges, simplex_volume

        d = self.cx.dim
        A = _equilateral_edges(d)
        _, R = np.linalg.qr(A)
        Rinv = np.linalg.inv(R)
        V = np.asarray(self.values, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        tot = []
        for s in self.cx.simplices:
            B = (V[s[1:]] - V[s[0]]).T
            tot.append(np.linalg.norm(B @ Rinv) ** p)
        return float(np.sum(tot) * simplex_volume(d))


@dataclass
class GagliardoReport:
    value: float
    refined: float | None
    relative_change: float | None
    nonintegrable_warning: bool
    step: float

    def to_dict(self) -> dict:
        return asdict(self)


def gagliardo_sum(points: np.ndarray, values: np.ndarray, step: float, s: float, p: float,
                  weights: np.ndarray | None = None, chunk: int = 512) -> float:
    """Midpoint double sum of ``|u(x)-u(y)|^p / |x-y|^(k+sp)`` over pairs at distance >= step."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    k = points.shape[1]
    w = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=float).ravel()
    band = step * (1 - 1e-9)
    partial = []
    for i0 in range(0, len(points), chunk):
        sl = slice(i0, i0 + chunk)
        dx = np.linalg.norm(points[sl, None, :] - points[None, :, :], axis=-1)
        du = np.linalg.norm(values[sl, None, :] - values[None, :, :], axis=-1)
        keep = dx >= band
        r = np.where(keep, dx, 1.0)
        term = np.where(keep, du**p / r ** (k + s * p), 0.0) * w[sl, None] * w[None, :]
        partial.append(np.sum(term, axis=1))
    return float(np.sum(np.concatenate(partial)) * step ** (2 * k))


def gagliardo_grid(values: np.ndarray, weights: np.ndarray, step: float, s: float, p: float) -> float:
    """Same double sum as ``gagliardo_sum`` for samples on a regular grid.

    Pairs are grouped by their lattice offset, so the kernel is evaluated once
    per offset; only the diagonal falls inside the excluded band.
    """
    shape = values.shape[:-1]
    k = len(shape)
    w = np.asarray(weights, dtype=float)
    partial = []
    for d in itertools.product(*(range(-(n - 1), n) for n in shape)):
        # one representative of each +-d pair: first nonzero component positive
        nz = [c for c in d if c]
        if not nz or nz[0] < 0:
            continue
        src = tuple(slice(max(0, -c), n - max(0, c)) for c, n in zip(d, shape))
        dst = tuple(slice(max(0, c), n - max(0, -c)) for c, n in zip(d, shape))
        du2 = np.sum((values[dst] - values[src]) ** 2, axis=-1)
        ww = w[dst] * w[src]
        kern = (step * math.sqrt(sum(c * c for c in d))) ** (-(k + s * p))
        partial.append(kern * np.sum(ww * du2 ** (p / 2)))
    return float(2 * np.sum(partial) * step ** (2 * k))


def gagliardo_seminorm(func: Callable, lo, hi, step: float, s: float, p: float,
                       weight_fn: Callable | None = None, refine: bool = True) -> GagliardoReport:
    """Gagliardo seminorm ``[u]^p`` of ``func`` on a boundary box, with a step-halving check.

    ``func`` maps points (N, k) of the boundary window to values (N, nu).
    """
    if not 0 < s < 1:
        raise FieldError("s must lie in (0, 1)")
    if p < 1:
        raise FieldError("p must be >= 1")
    k = len(lo)

    def run(h):
        g = GridMap.from_function(func, lo, hi, h, weights=weight_fn)
        return gagliardo_grid(g.values, g.weights, h, s, p)

    value = run(step)
    refined = rel = None
    if refine:
        refined = run(step / 2)
        rel = abs(refined - value) / max(abs(refined), 1e-300)
    return GagliardoReport(value, refined, rel, s * p >= k, step)


@dataclass
class BMOReport:
    value: float
    tail: float
    center: int
    rho: float


def _double_average(u: np.ndarray) -> float:
    """Mean of ``|u_i - u_j|`` over all ordered pairs of equal-weight samples."""
    k = len(u)
    if k < 2:
        return 0.0
    if u.shape[1] == 1:
        x = np.sort(u[:, 0])
        coef = 2 * np.arange(k) - k + 1
        return float(2 * np.sum(coef * x) / k**2)
    tot = []
    for i0 in range(0, k, 256):
        tot.append(np.sum(np.linalg.norm(u[i0:i0 + 256, None, :] - u[None, :, :], axis=-1)))
    return float(np.sum(tot) / k**2)


def bmo_seminorm(ref: Refinement, cell_values: np.ndarray, rho_grid: Sequence[float],
                 centers: Sequence[int] | None = None, max_centers: int = 128) -> BMOReport:
    """BMO seminorm of values given per refinement cell.

    Max over centers (refinement nodes) and radii of the double average of
    ``|u(x)-u(y)|`` over the ball; ``tail`` is the same max at the smallest radius.
    """
    u = np.asarray(cell_values, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if len(u) != ref.n_cells:
        raise FieldError("need one value per refinement cell")
    rho = np.sort(np.asarray(rho_grid, dtype=float))
    if centers is None:
        centers = np.arange(ref.n_nodes)
        if len(centers) > max_centers:
            centers = centers[np.linspace(0, len(centers) - 1, max_centers).round().astype(int)]
    best, tail, arg = 0.0, 0.0, (int(centers[0]), float(rho[0]))
    for c in centers:
        dist = ref.cell_distances(ref.node_distances(int(c)))
        for r in rho:
            val = _double_average(u[dist < r])
            if val > best:
                best, arg = val, (int(c), float(r))
            if r == rho[0]:
                tail = max(tail, val)
    return BMOReport(best, tail, arg[0], arg[1])


def winding_number(samples) -> int:
    """Degree of a closed loop of S^1 samples (the loop closes from last to first)."""
    u = np.asarray(samples, dtype=float)
    theta = np.arctan2(u[:, 1], u[:, 0])
    inc = np.diff(np.concatenate([theta, theta[:1]]))
    inc = (inc + np.pi) % (2 * np.pi) - np.pi
    if np.any(np.abs(inc) >= np.pi - 0.1):
        raise UndersampledLoop("angle increment too large; sample the loop more finely")
    return int(round(float(np.sum(inc)) / (2 * np.pi)))


def save_samples(path, coords: np.ndarray, values: np.ndarray, descriptor: dict) -> tuple[Path, Path]:
    """Write samples as CSV (coordinates then value columns) with a JSON sidecar."""
    path = Path(path)
    coords = np.asarray(coords, dtype=float)
    values = np.asarray(values, dtype=float)
    k, nu = coords.shape[1], values.shape[1]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{i + 1}" for i in range(k)] + [f"u{i + 1}" for i in range(nu)])
        for x, v in zip(coords, values):
            wr.writerow([repr(float(t)) for t in x] + [repr(float(t)) for t in v])
    side = path.with_suffix(".json")
    meta = dict(descriptor, coord_dim=k, value_dim=nu, samples=len(coords))
    side.write_text(json.dumps(meta, sort_keys=True, indent=1))
    return path, side


def load_samples(path) -> tuple[np.ndarray, np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    k = meta["coord_dim"]
    return data[:, :k], data[:, k:], meta

"""Homogeneous retractions onto cubical skeletons and the extensions they induce.

On an ``ell``-cell ``Q`` of the cubication with center ``x_Q`` the retraction
is ``x_Q + (kappa/2) (x - x_Q) / |x - x_Q|_inf``, which lands on the relative
boundary of ``Q``.  Composing from ``m`` down to ``ell + 1`` retracts the
half-space minus the dual skeleton onto the ``ell``-skeleton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .cubical import Cubication, enumerate_skeleton
from .fields import (
    EnergyReport,
    FieldError,
    GridMap,
    SkeletonLattice,
    SkeletonMap,
    Sphere,
)

FACE_TOL = 1e-9
SINGULAR_DENSITY = 1e-6


class SingularPoint(ValueError):
    def __init__(self, msg, stage=None):
        super().__init__(msg)
        self.stage = stage


class NotOnSkeleton(ValueError):
    pass


class NonIntegrableHomogeneous(ValueError):
    pass


class GridAlignment(RuntimeError):
    pass


def chain_constant(ell: int, p: float) -> float:
    """Per-dimension constant ``2 ell^(p/2) / (ell - p)`` (multiply by kappa)."""
    if p >= ell:
        raise NonIntegrableHomogeneous(f"p = {p} >= ell = {ell}")
    return 2 * ell ** (p / 2) / (ell - p)


def pyramid_constant(ell: int, p: float) -> float:
    if p >= ell:
        raise NonIntegrableHomogeneous(f"p = {p} >= ell = {ell}")
    return ell ** (p / 2) / (ell - p)


def extension_constant(m: int, p: float) -> float:
    """Product of the chain constants for ``ell = floor(p) + 1, ..., m``."""
    return math.prod(chain_constant(ell, p) for ell in range(int(math.floor(p)) + 1, m + 1))


def _retract_stage(X: np.ndarray, kappa: float, ell: int, eps: float):
    """One retraction stage on unshifted points; returns (Y, singular mask)."""
    m = X.shape[1]
    t = X / kappa
    on_face = np.abs(t - np.floor(t) - 0.5) <= FACE_TOL
    nfixed = on_face.sum(axis=1)
    if np.any(nfixed < m - ell):
        raise NotOnSkeleton(f"points are not on the {ell}-skeleton")
    act = nfixed == m - ell
    center = np.where(on_face, X, kappa * np.round(t))
    d = np.where(on_face, 0.0, X - center)
    dinf = np.max(np.abs(d), axis=1)
    singular = act & (dinf <= eps)
    go = act & ~singular
    Y = X.copy()
    if np.any(go):
        dg, cg, ng = d[go], center[go], dinf[go][:, None]
        y = cg + 0.5 * kappa * dg / ng
        # snap the sup-norm axes exactly onto the face
        top = np.abs(dg) >= ng * (1 - 1e-12)
        y = np.where(top, cg + np.sign(dg) * 0.5 * kappa, y)
        Y[go] = y
    return Y, singular


def _shift_vector(shift, m):
    if shift is None:
        return np.zeros(m)
    s = np.asarray(shift, dtype=float)
    if s.size == m - 1:
        s = np.append(s, 0.0)
    if s[-1] != 0:
        raise ValueError("shift must have vanishing last coordinate")
    return s


def retract_many(X, kappa: float, ell_from: int, ell_target: int, shift=None, eps=None):
    """Composite retraction from the ``ell_from``-skeleton down to ``ell_target``.

    Returns the retracted points and the stage index (or -1) at which each
    point hit the singular set; singular points are left where they were.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[1]
    if not 0 <= ell_target < m:
        raise ValueError("need 0 <= ell_target < m")
    if np.any(X[:, -1] < 0):
        raise ValueError("points must lie in the closed upper half-space")
    eps = kappa * 1e-9 if eps is None else eps
    s = _shift_vector(shift, m)
    Y = X - s
    stage = np.full(len(X), -1)
    for ell in range(ell_from, ell_target, -1):
        alive = stage < 0
        Ya, sing = _retract_stage(Y[alive], kappa, ell, eps)
        Y[alive] = Ya
        idx = np.nonzero(alive)[0][sing]
        stage[idx] = ell
    return Y + s, stage


def retract_once(x, kappa: float, ell: int, shift=None, eps=None) -> np.ndarray:
    """Retract a point of an ``ell``-cell onto the cell's relative boundary."""
    Y, stage = retract_many(x, kappa, ell, ell - 1, shift, eps)
    if np.any(stage >= 0):
        raise SingularPoint("point at the center of its cell", stage=ell)
    return Y[0] if np.ndim(x) == 1 else Y


def retract_to_skeleton(x, kappa: float, ell_target: int, shift=None, eps=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    Y, stage = retract_many(x, kappa, m, ell_target, shift, eps)
    if np.any(stage >= 0):
        raise SingularPoint(f"point on the dual skeleton (stage {int(stage.max())})", stage=int(stage.max()))
    return Y[0] if x.ndim == 1 else Y


def trapezoid_weights(shape) -> np.ndarray:
    w = np.ones(shape)
    for a, k in enumerate(shape):
        edge = [slice(None)] * len(shape)
        for i in (0, k - 1):
            edge[a] = i
            w[tuple(edge)] *= 0.5
    return w


@dataclass
class InequalityCheck:
    lhs: float
    rhs: float
    constant: float
    slack: float

    @property
    def margin(self) -> float:
        return self.rhs * (1 + self.slack) - self.lhs

    @property
    def ok(self) -> bool:
        return self.margin >= 0

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "constant": self.constant,
                "slack": self.slack, "margin": self.margin, "ok": self.ok}


def pyramid_extend(f: GridMap, kappa: float, p: float, n: int = 32, sub: int = 4, slack: float = 0.05):
    """Extend ``f`` on ``[-kappa, kappa]^(ell-1)`` to the pyramid by ``g(x', t) = f(kappa x' / t)``.

    ``f`` must be sampled on a lattice including the box corners.  Returns the
    pyramid samples (pixel-centered grid of step ``kappa / n`` over
    ``[-kappa, kappa]^(ell-1) x [0, kappa]`` with pyramid coverage weights) and
    the inequality check against ``ell^(p/2) kappa / (ell - p)`` times the energy of ``f``.
    """
    ell = f.dim + 1
    if p >= ell:
        raise NonIntegrableHomogeneous(f"p = {p} >= ell = {ell}")
    axes = [f.origin[i] + np.arange(k) * f.step for i, k in enumerate(f.values.shape[:-1])]
    interp = RegularGridInterpolator(axes, f.values, bounds_error=False, fill_value=None)
    step = kappa / n

    def g_func(pts):
        t = pts[:, -1:]
        y = np.clip(kappa * pts[:, :-1] / t, -kappa, kappa)
        return interp(y)

    def coverage(mesh):
        off = ((np.arange(sub) + 0.5) / sub - 0.5) * step
        frac = np.zeros(mesh.shape[:-1])
        for d in np.ndindex(*(sub,) * ell):
            q = mesh + off[list(d)]
            frac += np.max(np.abs(q[..., :-1]), axis=-1) < q[..., -1]
        return frac / sub**ell

    lo = [-kappa] * (ell - 1) + [0.0]
    hi = [kappa] * ell
    g = GridMap.from_function(g_func, lo, hi, step, f.target, weights=coverage)
    f_energy = GridMap(f.origin, f.step, f.values, trapezoid_weights(f.values.shape[:-1])).energy(p)
    c = pyramid_constant(ell, p) * kappa
    check = InequalityCheck(g.energy(p), c * f_energy, c, slack)
    return g, check


def _jittered_retract(nodes, kappa, ell_from, ell_target, shift, eps):
    Y, stage = retract_many(nodes, kappa, ell_from, ell_target, shift, eps)
    bad = stage >= 0
    if np.any(bad):
        # move the offending samples once, by twice the singular tolerance,
        # along the free axes of their cell so they stay on the skeleton
        m = nodes.shape[1]
        t = (nodes[bad] - _shift_vector(shift, m)) / kappa
        free = np.abs(t - np.floor(t) - 0.5) > FACE_TOL
        Yj, stage_j = retract_many(nodes[bad] + 2 * eps * free, kappa, ell_from, ell_target, shift, eps)
        if np.any(stage_j >= 0):
            raise SingularPoint("sample remains singular after jitter", stage=int(stage_j.max()))
        Y[bad] = Yj
    return Y, int(bad.sum())


def extend_one_dimension(V: SkeletonMap, cells, p: float, n: int | None = None,
                         eps: float | None = None, slack: float = 0.05):
    """Extend ``V`` from the (ell-1)-skeleton to the given ell-cells by ``V o P``."""
    ell = V.lattice.dim + 1
    if p >= ell:
        raise NonIntegrableHomogeneous(f"p = {p} >= ell = {ell}")
    if any(c.dim != ell for c in cells):
        raise ValueError(f"cells must be {ell}-dimensional")
    n = V.lattice.n if n is None else n
    kappa = cells[0].kappa
    eps = kappa * 1e-9 if eps is None else eps
    lat = SkeletonLattice.build(cells, n)
    Y, _ = _jittered_retract(lat.nodes, kappa, ell, ell - 1, cells[0].shift, eps)
    out = SkeletonMap(lat, V.evaluate(Y), V.target)
    c = chain_constant(ell, p) * kappa
    check = InequalityCheck(lat.energy(out.values, p), c * V.lattice.energy(V.values, p), c, slack)
    return out, check


@dataclass
class HomogeneousExtension:
    """``U(x) = V(P(x - h) + h)`` for ``V`` on the floor(p)-skeleton."""

    V: SkeletonMap
    p: float
    eps: float | None = None

    @property
    def kappa(self) -> float:
        return self.V.lattice.cells[0].kappa

    @property
    def shift(self):
        return self.V.lattice.cells[0].shift

    def evaluate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Values and a mask of samples on the singular set (their values are undefined)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ell = self.V.lattice.dim
        Y, stage = retract_many(pts, self.kappa, pts.shape[1], ell, self.shift, self.eps)
        sing = stage >= 0
        vals = np.zeros((len(pts), self.V.target.nu))
        if np.any(~sing):
            vals[~sing] = self.V.evaluate(Y[~sing])
        return vals, sing


def homogeneous_extension(V: SkeletonMap, p: float, cub: Cubication, n: int | None = None,
                          slack: float = 0.05):
    """Sample the homogeneous extension of ``V`` on a grid over the window box.

    The grid has step ``kappa / n`` and includes the box faces.  If more than
    1e-6 of the samples hit the singular set, the grid is shifted by a third
    of a step along the horizontal axes and sampled again once.
    """
    m = cub.m
    ell = V.lattice.dim
    if not 1 < p < m:
        raise ValueError("need 1 < p < m")
    if ell != int(math.floor(p)):
        raise ValueError("V must live on the floor(p)-skeleton")
    n = V.lattice.n if n is None else n
    ext = HomogeneousExtension(V, p)
    step = cub.kappa / n
    lo, hi = cub.region()
    lo[-1] = max(lo[-1], 0.0)
    counts = np.round((hi - lo) / step).astype(int) + 1
    realigned = False
    for attempt in range(2):
        origin = lo.copy()
        if attempt:
            # shifted samples stay inside the box: one fewer per horizontal axis
            origin[:-1] += step / 3
            counts[:-1] -= 1
            realigned = True
        axes = [origin[i] + np.arange(counts[i]) * step for i in range(m)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
        vals, sing = ext.evaluate(mesh)
        frac = float(np.mean(sing))
        if frac <= SINGULAR_DENSITY:
            break
    else:
        raise GridAlignment(f"singular fraction {frac:.3g} after realignment")
    if np.any(sing):
        vals[sing], sing2 = ext.evaluate(mesh[sing] + step / 7)
        if np.any(sing2):
            raise SingularPoint("sample remains singular after jitter")
    shape = tuple(counts)
    weights = trapezoid_weights(shape) if not realigned else np.ones(shape)
    U = GridMap(origin, step, vals.reshape(shape + (-1,)), weights)
    e_u = U.energy(p)
    e_v = V.lattice.energy(V.values, p)
    c = extension_constant(m, p) * cub.kappa ** (m - ell)
    report = EnergyReport(p, e_u, step, int(np.prod(counts)), f"grid_{m}")
    return U, report, InequalityCheck(e_u, c * e_v, c, slack), ext


@dataclass
class MinimizerConfig:
    p: float = 2.0
    max_iter: int = 2000
    shrink: float = 0.5
    armijo: float = 1e-4
    init: str = "boundary_average"
    seed: int = 0
    tol: float = 1e-8
    gtol: float = 1e-10

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if self.init not in ("boundary_average", "random"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if not (self.tol > 0 and self.gtol > 0 and 0 < self.shrink < 1 and 0 < self.armijo < 1):
            raise ValueError("tolerances must be positive")


@dataclass
class MinimizerResult:
    V: SkeletonMap
    report: EnergyReport
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    grad_norm: float = 0.0


def boundary_average_init(nodes, pinned, values, target: Sphere, power: float = 4.0, k: int = 16):
    """Inverse-distance weighted average of the ``k`` nearest pinned values, projected to the target.

    Samples whose average nearly cancels take the value of the nearest pinned sample.
    """
    P = nodes[pinned]
    B = values[pinned]
    out = values.copy()
    free = np.nonzero(~pinned)[0]
    if len(free) == 0:
        return out
    k = min(k, len(P))
    d, idx = cKDTree(P).query(nodes[free], k=k)
    d = d.reshape(len(free), k)
    idx = idx.reshape(len(free), k)
    w = 1.0 / np.maximum(d, 1e-300) ** power
    avg = np.einsum("fk,fkv->fv", w, B[idx]) / w.sum(axis=1, keepdims=True)
    r = np.linalg.norm(avg, axis=1)
    ok = r > 1e-3
    out[free] = np.where(ok[:, None], avg / np.where(ok, r, 1.0)[:, None], B[idx[:, 0]])
    return out


def minimize_pinned(lat: SkeletonLattice, values: np.ndarray, pinned: np.ndarray, cfg: MinimizerConfig,
                    target: Sphere | None = None) -> MinimizerResult:
    """Projected gradient descent of the discrete p-energy with pinned samples."""
    target = target or Sphere(values.shape[1])
    p = cfg.p
    U = target.project(np.asarray(values, dtype=float))
    pinned = np.asarray(pinned, dtype=bool)
    if cfg.init == "boundary_average" and np.any(pinned):
        U = boundary_average_init(lat.nodes, pinned, U, target)
    elif cfg.init == "random":
        rng = np.random.Generator(np.random.Philox(cfg.seed))
        R = target.project(rng.normal(size=U.shape))
        U = np.where(pinned[:, None], U, R)

    def tangent(U, G):
        T = G - np.sum(G * U, axis=1, keepdims=True) * U
        T[pinned] = 0.0
        return T

    E, G = lat.energy_and_gradient(U, p)
    history = [E]
    T = tangent(U, G)
    gnorm2 = float(np.sum(T * T))
    it = 0
    converged = E == 0.0 or gnorm2 <= cfg.gtol**2
    alpha = None
    prev = None
    while not converged and it < cfg.max_iter:
        if alpha is None:
            alpha = 0.1 * E / gnorm2
        elif prev is not None:
            s, y = prev
            sy = float(np.sum(s * y))
            alpha = float(np.sum(s * s)) / sy if sy > 0 else alpha * 2
        accepted = False
        for _ in range(60):
            Un = target.project(U - alpha * T)
            En = lat.energy(Un, p)
            if En <= E - cfg.armijo * alpha * gnorm2:
                accepted = True
                break
            alpha *= cfg.shrink
        it += 1
        if not accepted:
            break
        En, Gn = lat.energy_and_gradient(Un, p)
        Tn = tangent(Un, Gn)
        prev = (Un - U, Tn - T)
        rel = (E - En) / max(E, 1e-300)
        U, E, G, T = Un, En, Gn, Tn
        gnorm2 = float(np.sum(T * T))
        history.append(E)
        if rel < cfg.tol or gnorm2 <= cfg.gtol**2:
            converged = True
    V = SkeletonMap(lat, U, target)
    fam = f"skeleton_{lat.dim}"
    return MinimizerResult(V, EnergyReport(p, E, lat.step, len(lat.cells), fam), it, converged,
                           history, math.sqrt(gnorm2))


def minimize_extension(boundary, cub: Cubication, cfg: MinimizerConfig, n: int = 4,
                       target: Sphere | None = None) -> MinimizerResult:
    """Minimize the p-energy on the floor(p)-skeleton of the window with boundary data pinned.

    ``boundary`` is either a ``SkeletonMap`` on the boundary-trace skeleton or
    a callable evaluated at the samples on ``x_m = 0``.
    """
    p = cfg.p
    if not 1 < p < cub.m:
        raise ValueError("need 1 < p < m")
    ell = int(math.floor(p))
    cells = enumerate_skeleton(cub, ell, "plus")
    lat = SkeletonLattice.build(cells, n)
    target = target or (boundary.target if isinstance(boundary, SkeletonMap) else Sphere())
    pinned = lat.nodes[:, -1] == 0.0
    values = np.zeros((len(lat.nodes), target.nu))
    values[:, 0] = 1.0
    if isinstance(boundary, SkeletonMap):
        values[pinned] = boundary.evaluate(lat.nodes[pinned])
    else:
        values[pinned] = target.project(boundary(lat.nodes[pinned]))
    return minimize_pinned(lat, values, pinned, cfg, target)

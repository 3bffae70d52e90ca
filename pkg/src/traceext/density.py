"""Maximal functions, boundary energy densities and shift/translation selection."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, special
from scipy.signal import fftconvolve

from .simplicial import PLMap, SimplicialComplex, Subcomplex, d0_nodes, gamma, lipschitz_constant, simplex_volume
from .simplicial import _kuhn_cells

KERNELS = ("trace_kernel", "qual_kernel")


class HypothesisViolated(ValueError):
    pass


class PeriodicityError(ValueError):
    pass


def default_gamma(p: float) -> float:
    return min(1.0, (p - 1) / 2)


def check_gamma(gam: float, p: float) -> None:
    if not (0 < gam <= 1 and gam < p - 1):
        raise ValueError(f"gamma = {gam} outside (0, 1] with gamma < p - 1 = {p - 1}")


# ---------------------------------------------------------------------------
# maximal function


def dyadic_radii(step: float, diameter: float) -> np.ndarray:
    k = max(0, math.ceil(math.log2(diameter / step)))
    return step * 2.0 ** np.arange(k + 1)


def _ball_mask(radius: float, step: float, m: int) -> np.ndarray:
    r = int(math.floor(radius / step * (1 + 1e-12)))
    ax = np.arange(-r, r + 1) * step
    mesh = np.meshgrid(*([ax] * m), indexing="ij")
    d2 = sum(g**2 for g in mesh)
    return (d2 <= (radius * (1 + 1e-12)) ** 2).astype(float)


def maximal_function(field_values, step: float, radii) -> np.ndarray:
    """Max over ``radii`` of the average over in-window nodes within each ball.

    ``field_values`` are samples on a regular grid of pitch ``step`` covering
    the window; only nodes of the window count, so balls are clipped to the
    half-space and to the window.
    """
    f = np.asarray(field_values, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise ValueError("empty radius list")
    ones = np.ones_like(f)
    out = np.full(f.shape, -np.inf)
    for r in np.unique(radii):
        ball = _ball_mask(r, step, f.ndim)
        if ball.size == 1:
            avg = f
        else:
            sums = fftconvolve(f, ball, mode="same")
            counts = np.rint(fftconvolve(ones, ball, mode="same"))
            avg = np.maximum(sums, 0.0) / counts if np.all(f >= 0) else sums / counts
        out = np.maximum(out, avg)
    return out


# ---------------------------------------------------------------------------
# boundary density


def kernel_mass(m: int, kernel: str = "trace_kernel", gam: float | None = None) -> float:
    """Integral of the kernel over the boundary hyperplane (independent of the point)."""
    if kernel == "trace_kernel":
        return math.pi ** (m / 2) / special.gamma(m / 2)
    if kernel == "qual_kernel":
        k = m - 1
        return math.pi ** (k / 2) * special.gamma(gam / 2) / special.gamma((k + gam) / 2)
    raise ValueError(f"unknown kernel {kernel!r}")


def kernel_values(xp, xm, kernel: str = "trace_kernel", gam: float | None = None, m: int | None = None):
    """Kernel at horizontal offset ``xp`` (shape (..., m-1)) and height ``xm``."""
    xp = np.asarray(xp, dtype=float)
    m = xp.shape[-1] + 1 if m is None else m
    r2 = np.sum(xp**2, axis=-1) + xm**2
    if kernel == "trace_kernel":
        return xm / r2 ** (m / 2)
    if kernel == "qual_kernel":
        return xm**gam / r2 ** ((m - 1 + gam) / 2)
    raise ValueError(f"unknown kernel {kernel!r}")


def kernel_mass_quadrature(point, kernel: str = "trace_kernel", gam: float | None = None) -> float:
    """Numerical boundary integral of the kernel seen from an interior ``point``."""
    point = np.asarray(point, dtype=float)
    m = point.size
    xm = point[-1]
    if xm <= 0:
        raise ValueError("point must be interior")
    if m == 2:
        f = lambda y: float(kernel_values(np.array([point[0] - y]), xm, kernel, gam, 2))
        a, _ = integrate.quad(f, -np.inf, point[0], limit=200, epsabs=1e-12, epsrel=1e-12)
        b, _ = integrate.quad(f, point[0], np.inf, limit=200, epsabs=1e-12, epsrel=1e-12)
        return a + b
    # radial reduction around the foot point
    sphere = 2 * math.pi ** ((m - 1) / 2) / special.gamma((m - 1) / 2)
    f = lambda r: r ** (m - 2) * float(kernel_values(np.array([r] + [0.0] * (m - 2)), xm, kernel, gam, m))
    val, _ = integrate.quad(f, 0, np.inf, limit=200, epsabs=1e-12, epsrel=1e-12)
    return sphere * val


@dataclass
class MassCheck:
    lhs: float
    rhs: float
    constant: float
    slack: float = 0.05

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1 + self.slack)


@dataclass
class DensityField:
    """Samples of ``w`` on boundary nodes ``origin + step * k``."""

    origin: np.ndarray
    step: float
    values: np.ndarray
    kernel: str
    gamma: float | None = None
    mass_check: MassCheck | None = None

    @property
    def points(self) -> np.ndarray:
        axes = [self.origin[i] + np.arange(k) * self.step for i, k in enumerate(self.values.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))

    def total(self, null_fraction: float = 0.0) -> float:
        """Riemann sum of ``w``, ignoring the largest ``null_fraction`` of nodes."""
        v = np.sort(self.values.ravel())
        keep = len(v) - int(math.floor(null_fraction * len(v)))
        return float(np.sum(v[:keep]) * self.step ** self.values.ndim)

    def summable(self, null_fraction: float = 0.0) -> bool:
        return bool(np.isfinite(self.total(null_fraction)))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# kernel={self.kernel} gamma={self.gamma} step={self.step!r}\n")
            w = csv.writer(fh)
            dim = self.values.ndim
            w.writerow([f"y{i + 1}" for i in range(dim)] + ["w"])
            for pt, val in zip(self.points, self.values.ravel()):
                w.writerow([repr(float(c)) for c in pt] + [repr(float(val))])
        return path

    @classmethod
    def from_csv(cls, path) -> "DensityField":
        with Path(path).open() as fh:
            header = fh.readline()[2:].split()
            meta = dict(item.split("=", 1) for item in header)
            rows = list(csv.reader(fh))[1:]
        data = np.array([[float(c) for c in r] for r in rows])
        pts, vals = data[:, :-1], data[:, -1]
        step = float(meta["step"])
        origin = pts.min(axis=0)
        shape = tuple(np.rint((pts.max(axis=0) - origin) / step).astype(int) + 1)
        gam = None if meta["gamma"] == "None" else float(meta["gamma"])
        return cls(origin, step, vals.reshape(shape), meta["kernel"], gam)


def extension_density(W, origin, step: float, kernel: str = "trace_kernel", gam: float | None = None,
                      p: float | None = None, slack: float = 0.05) -> DensityField:
    """Boundary density ``w(y) = sum_x W(x) K(x, y) step^m`` for cell-centered samples ``W``.

    ``W`` has shape ``(n_1, ..., n_m)`` with sample ``i`` at ``origin + step * i``
    (heights must be positive).  Boundary nodes share the horizontal positions
    of the samples.
    """
    W = np.asarray(W, dtype=float)
    origin = np.asarray(origin, dtype=float)
    m = W.ndim
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    if kernel == "qual_kernel":
        if gam is None:
            if p is None:
                raise ValueError("qual_kernel needs gamma or p")
            gam = default_gamma(p)
        if p is not None:
            check_gamma(gam, p)
        elif not 0 < gam <= 1:
            raise ValueError(f"gamma = {gam} outside (0, 1]")
    if np.any(W < 0):
        raise ValueError("W must be nonnegative")
    heights = origin[-1] + np.arange(W.shape[-1]) * step
    if heights[0] <= 0:
        raise ValueError("samples must lie strictly inside the half-space")

    hshape = W.shape[:-1]
    infinite = ~np.isfinite(W)
    Wf = np.where(infinite, 0.0, W)
    offs = [np.arange(-(k - 1), k) * step for k in hshape]
    mesh = np.stack(np.meshgrid(*offs, indexing="ij"), axis=-1)
    w = np.zeros(hshape)
    for k, t in enumerate(heights):
        layer = Wf[..., k]
        if not np.any(layer):
            continue
        K = kernel_values(mesh, t, kernel, gam, m)
        w += fftconvolve(layer, K, mode="same")
    w = np.maximum(w, 0.0) * step**m
    if np.any(infinite):
        w[:] = np.inf
    mass = kernel_mass(m, kernel, gam)
    chk = MassCheck(float(np.sum(w) * step ** (m - 1)), mass * float(np.sum(W) * step**m), mass, slack)
    return DensityField(origin[:-1].copy(), step, w, kernel, gam, chk)


def grid_field(func, lo, hi, step: float):
    """Cell-centered samples of a scalar function on the box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    counts = np.rint((hi - lo) / step).astype(int)
    axes = [lo[i] + (np.arange(counts[i]) + 0.5) * step for i in range(len(lo))]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = np.asarray(func(mesh.reshape(-1, len(lo))), dtype=float).reshape(mesh.shape[:-1])
    return vals, np.array([a[0] for a in axes]), mesh


# ---------------------------------------------------------------------------
# cap averaging


def cap_volume(m: int, eta: float, rho: float = 1.0) -> float:
    """Volume of ``{|x| < rho, x_m > eta rho}``."""
    k = m - 1
    vk = math.pi ** (k / 2) / special.gamma(k / 2 + 1)
    val, _ = integrate.quad(lambda t: vk * (1 - t * t) ** (k / 2), eta, 1.0, epsabs=1e-14, epsrel=1e-13)
    return val * rho**m


@dataclass
class CapSampler:
    eta: float
    rho: float
    n_samples: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")

    @classmethod
    def defaults(cls, lam: float, lip: float, n_samples: int = 2000, seed: int = 0) -> "CapSampler":
        eta = (lam + 1) / (2 * lam)
        denom = eta * lam - 1
        # a constant map has Lipschitz constant 0; any radius works then
        rho = 2 * lip / denom if lip > 0 else 1.0
        return cls(eta, rho, n_samples, seed)

    def sample(self, m: int) -> np.ndarray:
        """Uniform samples of the solid cap by rejection from its bounding box."""
        rng = np.random.Generator(np.random.Philox(self.seed))
        out = []
        have = 0
        while have < self.n_samples:
            batch = max(64, 2 * (self.n_samples - have))
            x = rng.uniform(-self.rho, self.rho, size=(batch, m))
            x[:, -1] = rng.uniform(self.eta * self.rho, self.rho, size=batch)
            ok = np.linalg.norm(x, axis=1) < self.rho
            out.append(x[ok])
            have += int(ok.sum())
        return np.concatenate(out)[: self.n_samples]


def _sigma_quadrature(sigma: PLMap, sub: Subcomplex, n: int):
    """(images, d0, measure) at refinement-cell barycenters of the complex."""
    cx = sigma.cx
    ref = cx.refinement(n)
    kc = ref.cell_counts
    bc = kc.mean(axis=1) / n
    bary = np.tile(bc, (len(cx.simplices), 1))
    pts = sigma.evaluate(ref.cell_simplex, bary)
    dist = ref.cell_distances(d0_nodes(cx, sub, n))
    return pts, dist, ref.cell_measure


def _sub_quadrature(sigma: PLMap, sub: Subcomplex, n: int):
    """(images, measure) at refinement-cell barycenters of the subcomplex."""
    d = sub.dim
    if d == 0:
        return sigma.images[sub.faces[:, 0]], 1.0
    kc = _kuhn_cells(n, d)
    bc = kc.mean(axis=1) / n
    imgs = sigma.images[sub.faces]  # (F, d+1, m)
    pts = np.einsum("cd,fdm->fcm", bc, imgs).reshape(-1, imgs.shape[-1])
    return pts, simplex_volume(d) / n**d


def check_shift_hypothesis(lam: float, eta: float, rho: float, lip: float) -> None:
    if not lam > 1 / eta:
        raise HypothesisViolated(f"lambda = {lam} <= 1/eta = {1 / eta}")
    if not lip < (eta * lam - 1) * rho:
        raise HypothesisViolated(f"|sigma|_Lip = {lip} >= (eta*lambda - 1)*rho = {(eta * lam - 1) * rho}")


@dataclass
class ShiftResult:
    xi: np.ndarray
    value: float
    mean: float
    std_error: float
    samples: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


def good_shift(W, sigma: PLMap, sub: Subcomplex, lam: float, cap: CapSampler, n: int = 8,
               chunk: int = 1 << 18) -> ShiftResult:
    """Sample ``xi`` in the cap and keep the one minimising ``int_Sigma W(sigma + d0 xi)``.

    ``W`` is a vectorised nonnegative function on the closed half-space.
    """
    lip = lipschitz_constant(sigma)
    check_shift_hypothesis(lam, cap.eta, cap.rho, lip)
    pts, dist, mu = _sigma_quadrature(sigma, sub, n)
    m = pts.shape[1]
    xis = cap.sample(m)
    vals = np.empty(len(xis))
    per = max(1, chunk // len(pts))
    for i0 in range(0, len(xis), per):
        xb = xis[i0:i0 + per]
        q = pts[None, :, :] + dist[None, :, None] * xb[:, None, :]
        f = np.asarray(W(q.reshape(-1, m)), dtype=float).reshape(len(xb), len(pts))
        vals[i0:i0 + per] = np.sum(f, axis=1) * mu
    best = int(np.argmin(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    return ShiftResult(xis[best], float(vals[best]), float(np.mean(vals)), se, xis, vals)


def integration_bound_factor(m: int, eta: float, lam: float, rho: float, lip: float) -> float:
    a = eta * lam - 1
    return a**m * (rho + lip) ** (2 * m) / (eta**m * (a * rho - lip) ** (m + 1))


def boundary_kernel_integral(W, sigma: PLMap, sub: Subcomplex, support, step: float, n: int = 8,
                             chunk: int = 1 << 20) -> float:
    """``int_{Sigma_0} int W(x) x_m / |x - sigma(z)|^m dx dz`` by midpoint sums.

    ``W`` must vanish outside the box ``support = (lo, hi)``.
    """
    lo, hi = (np.asarray(s, dtype=float) for s in support)
    vals, _, mesh = grid_field(W, lo, hi, step)
    m = len(lo)
    X = mesh.reshape(-1, m)[vals.ravel() > 0]
    F = vals.ravel()[vals.ravel() > 0]
    zs, mu = _sub_quadrature(sigma, sub, n)
    total = 0.0
    per = max(1, chunk // max(1, len(X)))
    for i0 in range(0, len(zs), per):
        z = zs[i0:i0 + per]
        d = np.linalg.norm(X[None, :, :] - z[:, None, :], axis=-1)
        total += float(np.sum(F[None, :] * X[None, :, -1] / d**m))
    return total * mu * step**m


@dataclass
class IntegrationCheck:
    lhs: float
    std_error: float
    rhs: float
    gamma: float
    factor: float

    @property
    def ok(self) -> bool:
        # the cap integral is estimated as volume * sample mean
        return self.lhs - 3 * self.std_error <= self.rhs

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "std_error": self.std_error, "rhs": self.rhs,
                "gamma": self.gamma, "factor": self.factor, "ok": self.ok}


def integration_check(W, sigma: PLMap, sub: Subcomplex, lam: float, cap: CapSampler, support,
                      step: float, n: int = 8, gamma_value: float | None = None) -> IntegrationCheck:
    """Compare the cap integral of ``int_Sigma W(sigma_xi)`` with its kernel bound."""
    res = good_shift(W, sigma, sub, lam, cap, n)
    m = sigma.images.shape[1]
    vol = cap_volume(m, cap.eta, cap.rho)
    lip = lipschitz_constant(sigma)
    g = gamma(sigma.cx, sub, lam) if gamma_value is None else gamma_value
    fac = integration_bound_factor(m, cap.eta, lam, cap.rho, lip)
    rhs = fac * g * boundary_kernel_integral(W, sigma, sub, support, step, n)
    return IntegrationCheck(vol * res.mean, vol * res.std_error, rhs, g, fac)


# ---------------------------------------------------------------------------
# good translation


def check_periodic(psi, kappa: float, dim: int, samples: int = 256, seed: int = 0, tol: float = 1e-9) -> None:
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.uniform(-2 * kappa, 2 * kappa, size=(samples, dim))
    k = rng.integers(-3, 4, size=(samples, dim)) * kappa
    err = np.max(np.abs(np.asarray(psi(x + k)) - np.asarray(psi(x))))
    if not err <= tol:
        raise PeriodicityError(f"displacement field is not kappa-periodic (error {err:.3g})")


def _lattice(lo, hi, step):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    counts = np.rint((hi - lo) / step).astype(int)
    axes = [lo[i] + (np.arange(counts[i]) + 0.5) * step for i in range(len(lo))]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


def _lp_diff(f, x, z, p, dv):
    a = np.asarray(f(x), dtype=float)
    b = np.asarray(f(x - z), dtype=float)
    d = np.abs(a - b)
    if d.ndim > 1:
        d = np.linalg.norm(d, axis=-1)
    return float(np.sum(d**p) * dv)


@dataclass
class TranslationResult:
    h: np.ndarray
    value: float
    mean: float
    bound: float
    slack: float = 0.05
    values: np.ndarray = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.mean <= self.bound * (1 + self.slack) + 1e-300

    def to_dict(self) -> dict:
        return {"h": [float(c) for c in self.h], "value": self.value, "mean": self.mean,
                "bound": self.bound, "slack": self.slack, "ok": self.ok}


def good_translation(f, psi, kappa: float, window, p: float, step: float, n_h: int = 8,
                     n_z: int = 16, slack: float = 0.05) -> TranslationResult:
    """Scan ``h`` over a lattice of ``[0, kappa)^dim`` for ``J(h) = int_A |f(x) - f(x - psi(x - h))|^p``.

    ``f`` and ``psi`` are vectorised callables on ``R^dim``; ``window`` is the
    box ``(lo, hi)`` integrated with cell-centered samples of pitch ``step``.
    The bound compares the lattice mean of ``J`` with the sup over translations
    ``|z| <= ||psi||_inf`` of ``int_A |f - f(. - z)|^p``; the sup is taken over
    a grid of the ball together with every displacement value the scan used.
    """
    lo, hi = (np.atleast_1d(np.asarray(s, dtype=float)) for s in window)
    dim = len(lo)
    check_periodic(psi, kappa, dim)
    X = _lattice(lo, hi, step)
    dv = step**dim
    hs = np.stack(np.meshgrid(*([np.arange(n_h) * kappa / n_h] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    J = np.empty(len(hs))
    disp = []
    for i, h in enumerate(hs):
        z = np.asarray(psi(X - h), dtype=float).reshape(len(X), dim)
        disp.append(z)
        J[i] = _lp_diff(f, X, z, p, dv)
    disp = np.concatenate(disp)
    radius = float(np.max(np.linalg.norm(disp, axis=1))) if len(disp) else 0.0
    # sup over a grid of the ball and over the displacements actually used
    ax = np.linspace(-radius, radius, n_z + 1)
    zs = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    zs = zs[np.linalg.norm(zs, axis=1) <= radius * (1 + 1e-12)]
    zs = np.unique(np.concatenate([zs, np.round(disp, 12)]), axis=0)
    bound = max((_lp_diff(f, X, z[None, :], p, dv) for z in zs), default=0.0)
    best = int(np.argmin(J))
    return TranslationResult(hs[best], float(J[best]), float(np.mean(J)), float(bound), slack, J)

"""Shift/scale scans, reconstruction from a scan, verification suites and reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cubical import Cubication, enumerate_skeleton
from .density import (
    CapSampler,
    good_translation,
    integration_check,
    kernel_mass_quadrature,
)
from .extension import (
    MinimizerConfig,
    chain_constant,
    extend_one_dimension,
    extension_constant,
    homogeneous_extension,
    minimize_extension,
    pyramid_extend,
    retract_many,
)
from .fields import GridMap, SkeletonMap, Sphere, load_samples
from .simplicial import (
    PLMap,
    SimplicialComplex,
    Subcomplex,
    gamma,
    gamma_brute_force,
    lipschitz_constant,
    random_graph_complex,
)

SUITES = ("pyramid", "chain", "integration_lemma", "translation_lemma", "kernel_mass", "gamma_oracle")
BOUNDARY_KINDS = ("constant", "linear", "vortex", "file")


class ConfigError(ValueError):
    pass


class NoAdmissibleShift(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str = "scan"
    m: int = 3
    p: float = 2.5
    lam: float = 2.0
    theta: float = 1.0
    kappas: list = field(default_factory=lambda: [0.25, 0.125])
    half_width: float = 0.5
    height: float = 0.25
    n: int = 4
    h_per_axis: int = 4
    seed: int = 0
    out: str = "out"
    boundary: dict = field(default_factory=lambda: {"kind": "constant"})
    max_iter: int = 500
    tol: float = 1e-6
    init: str = "boundary_average"

    def __post_init__(self):
        self.kappas = [float(k) for k in self.kappas]
        if self.m < 2:
            raise ConfigError("m must be at least 2")
        if not 1 < self.p < self.m:
            raise ConfigError(f"need 1 < p < m, got p = {self.p}, m = {self.m}")
        if not self.lam > 1:
            raise ConfigError("lambda must exceed 1")
        if not self.kappas or any(k <= 0 for k in self.kappas):
            raise ConfigError("kappa list must be nonempty and positive")
        if any(b >= a for a, b in zip(self.kappas, self.kappas[1:])):
            raise ConfigError("kappa list must be strictly decreasing")
        if self.n < 2 or self.n % 2:
            raise ConfigError("n must be even and at least 2")
        if self.h_per_axis < 1:
            raise ConfigError("h_per_axis must be positive")
        if not (self.half_width > 0 and self.height > 0 and self.theta > 0):
            raise ConfigError("window sizes and theta must be positive")
        kind = self.boundary.get("kind")
        if kind not in BOUNDARY_KINDS:
            raise ConfigError(f"unknown boundary kind {kind!r}")
        if kind == "vortex" and self.m != 3:
            raise ConfigError("the vortex datum needs m = 3")
        if kind == "file" and "path" not in self.boundary:
            raise ConfigError("file boundary needs a path")
        if self.init not in ("boundary_average", "random"):
            raise ConfigError(f"unknown init mode {self.init!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def ell(self) -> int:
        return int(math.floor(self.p))

    def box(self):
        lo = np.array([-self.half_width] * (self.m - 1) + [0.0])
        hi = np.array([self.half_width] * (self.m - 1) + [self.height])
        return lo, hi

    def shifts(self, kappa: float) -> np.ndarray:
        k = self.h_per_axis
        axis = np.arange(k) * kappa / k
        mesh = np.meshgrid(*([axis] * (self.m - 1)), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)


def boundary_map(cfg: ExperimentConfig):
    """Vectorised S^1-valued boundary datum; takes points of R^m and reads the horizontal part."""
    datum = cfg.boundary
    kind = datum["kind"]
    if kind == "constant":
        v = np.asarray(datum.get("value", [1.0, 0.0]), dtype=float)
        v = v / np.linalg.norm(v)
        return lambda x: np.tile(v, (len(x), 1))
    if kind == "linear":
        k = float(datum.get("frequency", 1.0))

        def linear(x):
            t = 2 * np.pi * k * np.asarray(x)[:, 0]
            return np.c_[np.cos(t), np.sin(t)]

        return linear
    if kind == "vortex":
        d = int(datum.get("degree", 1))

        def vortex(x):
            y = np.asarray(x)[:, :2]
            th = np.arctan2(y[:, 1], y[:, 0])
            out = np.c_[np.cos(d * th), np.sin(d * th)]
            # the datum is defined everywhere: pick a value at the singular point
            out[np.all(y == 0, axis=1)] = [1.0, 0.0]
            return out

        return vortex
    coords, values, _ = load_samples(datum["path"])
    return _interpolated_boundary(coords, values)


def _interpolated_boundary(coords, values):
    from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

    target = Sphere(values.shape[1])
    if coords.shape[1] == 1:
        order = np.argsort(coords[:, 0])
        xs, vs = coords[order, 0], values[order]

        def f1(x):
            t = np.asarray(x)[:, 0]
            return target.project(np.stack([np.interp(t, xs, vs[:, j]) for j in range(vs.shape[1])], axis=1))

        return f1
    lin = LinearNDInterpolator(coords, values)
    near = NearestNDInterpolator(coords, values)

    def fn(x):
        q = np.asarray(x)[:, : coords.shape[1]]
        v = lin(q)
        bad = np.any(np.isnan(v), axis=1)
        if np.any(bad):
            v[bad] = near(q[bad])
        return target.project(v)

    return fn


# ---------------------------------------------------------------------------
# condition (iii) scan


@dataclass
class ScanResult:
    config: dict
    rows: list
    theta: float

    @property
    def kappas(self) -> list:
        return sorted({r["kappa"] for r in self.rows}, reverse=True)

    def fractions(self, theta: float | None = None) -> dict:
        theta = self.theta if theta is None else theta
        out = {}
        for k in self.kappas:
            e = [r["normalized_energy"] for r in self.rows if r["kappa"] == k]
            out[k] = sum(v <= theta for v in e) / len(e)
        return out

    def liminf(self, theta: float | None = None) -> float:
        fr = self.fractions(theta)
        smallest = sorted(fr)[:3]
        return min(fr[k] for k in smallest) if smallest else 0.0

    def mean_energy(self, kappa: float) -> float:
        e = [r["normalized_energy"] for r in self.rows if r["kappa"] == kappa]
        return float(np.mean(e))

    def to_dict(self) -> dict:
        fr = self.fractions()
        return {
            "config": self.config,
            "theta": self.theta,
            "rows": self.rows,
            "admissible_fraction": [{"kappa": k, "fraction": fr[k]} for k in self.kappas],
            "liminf_fraction": self.liminf(),
        }

    def csv_header(self) -> list:
        m = self.config["m"]
        return (["scenario", "seed", "kappa", "h_index"] + [f"h{i + 1}" for i in range(m - 1)]
                + ["energy", "box_energy", "normalized_energy", "admissible", "iterations", "converged",
                   "grad_norm"])

    def csv_rows(self) -> list:
        out = []
        for r in self.rows:
            out.append([self.config["scenario"], self.config["seed"], r["kappa"], r["h_index"], *r["h"],
                        r["energy"], r["box_energy"], r["normalized_energy"], int(r["normalized_energy"] <= self.theta),
                        r["iterations"], int(r["converged"]), r["grad_norm"]])
        return out


def _minimizer_config(cfg: ExperimentConfig) -> MinimizerConfig:
    return MinimizerConfig(p=cfg.p, max_iter=cfg.max_iter, tol=cfg.tol, init=cfg.init, seed=cfg.seed)


def solve_shift(u, cfg: ExperimentConfig, kappa: float, h):
    cub = Cubication.around(kappa, cfg.m, cfg.half_width, cfg.height, shift=tuple(h))
    res = minimize_extension(u, cub, _minimizer_config(cfg), n=cfg.n, target=Sphere(2))
    lo, hi = cfg.box()
    box = res.V.lattice.energy_in_box(res.V.values, cfg.p, lo, hi)
    return cub, res, box


def condition_iii_scan(u, cfg: ExperimentConfig) -> ScanResult:
    """Minimal normalized skeleton energies over the shift lattice for every kappa.

    The normalized energy is ``kappa^(m - floor(p))`` times the energy of the
    minimizer on the part of the skeleton inside the fixed box
    ``[-half_width, half_width]^(m-1) x [0, height]``.
    """
    rows = []
    for kappa in cfg.kappas:
        for i, h in enumerate(cfg.shifts(kappa)):
            _, res, box = solve_shift(u, cfg, kappa, h)
            rows.append({
                "kappa": kappa,
                "h_index": i,
                "h": [float(c) for c in h],
                "energy": res.report.value,
                "box_energy": box,
                "normalized_energy": kappa ** (cfg.m - cfg.ell) * box,
                "iterations": res.iterations,
                "converged": bool(res.converged),
                "grad_norm": res.grad_norm,
            })
    return ScanResult(cfg.to_dict(), rows, cfg.theta)


# ---------------------------------------------------------------------------
# reconstruction


def boundary_displacement(kappa: float, m: int, ell: int):
    """``psi(x') = x' - P(x', 0)'`` for the composite retraction onto the ell-skeleton.

    Points of the boundary dual skeleton (measure zero) get displacement 0.
    """

    def psi(xp):
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        X = np.c_[xp, np.zeros(len(xp))]
        Y, stage = retract_many(X, kappa, m, ell)
        d = xp - Y[:, :-1]
        d[stage >= 0] = 0.0
        return d

    return psi


@dataclass
class ReconstructionRow:
    kappa: float
    h: list
    scan_energy: float
    energy_u: float
    bound: float
    ok: bool
    trace_error_quarter: float
    trace_error_eighth: float
    translation_value: float
    singular_fraction: float


@dataclass
class ReconstructionReport:
    config: dict
    rows: list

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def to_dict(self) -> dict:
        return {"config": self.config, "ok": self.ok, "rows": [asdict(r) for r in self.rows]}

    def csv_header(self) -> list:
        m = self.config["m"]
        return (["scenario", "seed", "kappa"] + [f"h{i + 1}" for i in range(m - 1)]
                + ["scan_energy", "energy_U", "bound", "ok", "trace_error_quarter", "trace_error_eighth",
                   "translation_value", "singular_fraction"])

    def csv_rows(self) -> list:
        return [[self.config["scenario"], self.config["seed"], r.kappa, *r.h, r.scan_energy, r.energy_u, r.bound,
                 int(r.ok), r.trace_error_quarter, r.trace_error_eighth, r.translation_value, r.singular_fraction]
                for r in self.rows]


def trace_error(ext, u, cfg: ExperimentConfig, kappa: float, depth: float) -> tuple[float, float]:
    """L^p distance between ``u`` and the extension on the slice ``x_m = depth`` over the box."""
    m = cfg.m
    step = kappa / (2 * cfg.n)
    lo, hi = cfg.box()
    k = int(round(2 * cfg.half_width / step))
    ax = -cfg.half_width + (np.arange(k) + 0.5) * step
    mesh = np.stack(np.meshgrid(*([ax] * (m - 1)), indexing="ij"), axis=-1).reshape(-1, m - 1)
    pts = np.c_[mesh, np.full(len(mesh), depth)]
    vals, sing = ext.evaluate(pts)
    ref = u(np.c_[mesh, np.zeros(len(mesh))])
    d = np.linalg.norm(vals - ref, axis=1)[~sing]
    err = float((np.sum(d**cfg.p) * step ** (m - 1)) ** (1 / cfg.p))
    return err, float(np.mean(sing))


def reconstruct_from_scan(u, scan: ScanResult, cfg: ExperimentConfig, all_kappas: bool = True) -> ReconstructionReport:
    """Build the homogeneous extension from an admissible shift chosen by the translation scan.

    The smallest kappa must have an admissible shift; larger kappas without
    one are skipped.
    """
    rows = []
    lo, hi = cfg.box()
    kappas = scan.kappas if all_kappas else scan.kappas[-1:]
    smallest = min(scan.kappas)
    for kappa in kappas:
        cand = [r for r in scan.rows if r["kappa"] == kappa and r["normalized_energy"] <= scan.theta]
        if not cand:
            if kappa == smallest:
                raise NoAdmissibleShift(f"no admissible shift at kappa = {kappa} for theta = {scan.theta}")
            continue
        psi = boundary_displacement(kappa, cfg.m, cfg.ell)
        f = lambda xp: u(np.c_[xp, np.zeros(len(xp))])
        tr = good_translation(f, psi, kappa, (lo[:-1], hi[:-1]), cfg.p, kappa / (2 * cfg.n), n_h=cfg.h_per_axis)
        allowed = {r["h_index"] for r in cand}
        order = np.argsort(tr.values, kind="stable")
        pick = next(int(i) for i in order if int(i) in allowed)
        row = next(r for r in cand if r["h_index"] == pick)
        h = np.asarray(row["h"])
        cub, res, _ = solve_shift(u, cfg, kappa, h)
        U, _, _, ext = homogeneous_extension(res.V, cfg.p, cub, n=cfg.n)
        pts = U.points
        inside = np.all((pts >= lo - 1e-12) & (pts <= hi + 1e-12), axis=1).reshape(U.weights.shape)
        e_u = GridMap(U.origin, U.step, U.values, U.weights * inside).energy(cfg.p)
        bound = extension_constant(cfg.m, cfg.p) * scan.theta
        e1, s1 = trace_error(ext, u, cfg, kappa, kappa / 4)
        e2, s2 = trace_error(ext, u, cfg, kappa, kappa / 8)
        rows.append(ReconstructionRow(kappa, [float(c) for c in h], row["normalized_energy"], e_u, bound,
                                      bool(e_u <= bound), e1, e2, float(tr.values[pick]), max(s1, s2)))
    return ReconstructionReport(scan.config, rows)


# ---------------------------------------------------------------------------
# verification suites


@dataclass
class SuiteReport:
    name: str
    seed: int
    instances: list

    @property
    def passed(self) -> bool:
        return all(i["ok"] for i in self.instances)

    @property
    def config(self) -> dict:
        return {"scenario": f"verify_{self.name}", "seed": self.seed, "suite": self.name}

    def to_dict(self) -> dict:
        return {"config": self.config, "passed": self.passed, "instances": self.instances}

    def csv_header(self) -> list:
        return ["suite", "seed", "instance", "lhs", "rhs", "margin", "ok", "detail"]

    def csv_rows(self) -> list:
        return [[self.name, self.seed, i["instance"], i["lhs"], i["rhs"], i["margin"], int(i["ok"]), i["detail"]]
                for i in self.instances]


def _instance(k, lhs, rhs, margin, detail):
    return {"instance": k, "lhs": float(lhs), "rhs": float(rhs), "margin": float(margin),
            "ok": bool(margin >= 0), "detail": detail}


def _phase_profile(rng, dim):
    a = rng.normal(size=dim)
    b = rng.normal(size=dim)
    c = rng.uniform(0.5, 2.0)

    def f(x):
        t = x @ a + c * np.sin(x @ b)
        return np.c_[np.cos(t), np.sin(t)]

    return f


def _suite_pyramid(rng, count):
    cases = [(2, 1.2), (2, 1.5), (3, 1.2), (3, 1.5), (3, 2.5)]
    out = []
    for k in range(count):
        ell, p = cases[k % len(cases)]
        kappa = float(rng.uniform(0.5, 2.0))
        prof = _phase_profile(rng, ell - 1)
        step = kappa / (32 if ell == 2 else 16)
        f = GridMap.from_function(lambda y: prof(y / kappa), [-kappa] * (ell - 1), [kappa] * (ell - 1), step,
                                  Sphere(2), centered=False)
        _, chk = pyramid_extend(f, kappa, p, n=32 if ell == 2 else 16)
        out.append(_instance(k, chk.lhs, chk.rhs, chk.margin, f"ell={ell} p={p} kappa={kappa:.4f}"))
    return out


def _suite_chain(rng, count):
    out = []
    for k in range(count):
        p = (1.2, 1.5)[k % 2]
        kappa = float(rng.uniform(0.5, 2.0))
        layer = int(rng.integers(0, 2))  # clipped boundary square or a full square
        cub = Cubication(kappa, 2, ((0, 0), (layer, layer)))
        prof = _phase_profile(rng, 2)
        V = SkeletonMap.from_function(enumerate_skeleton(cub, 1, "plus"), 16, lambda x: prof(x / kappa))
        _, chk = extend_one_dimension(V, enumerate_skeleton(cub, 2, "plus"), p)
        out.append(_instance(k, chk.lhs, chk.rhs, chk.margin, f"p={p} kappa={kappa:.4f} layer={layer}"))
    return out


def random_integration_setup(rng):
    """A triangle or two triangles with one boundary edge mapped to the boundary hyperplane."""
    two = bool(rng.integers(0, 2))
    simplices = [[0, 1, 2], [1, 2, 3]] if two else [[0, 1, 2]]
    cx = SimplicialComplex.from_simplices(simplices)
    sub = Subcomplex(cx, np.array([[0, 1]]))
    base = rng.uniform(-0.5, 0.5)
    width = rng.uniform(0.5, 1.5)
    imgs = [[base, 0.0], [base + width, 0.0]]
    for _ in range(cx.n_vertices - 2):
        imgs.append([rng.uniform(-0.5, 1.5), rng.uniform(0.2, 1.2)])
    sigma = PLMap(cx, np.array(imgs), sub)
    center = np.array([rng.uniform(-0.5, 1.5), rng.uniform(0.2, 1.5)])
    width_w = rng.uniform(0.05, 0.3)
    lo = np.array([center[0] - 4 * math.sqrt(width_w), 0.0])
    hi = np.array([center[0] + 4 * math.sqrt(width_w), center[1] + 4 * math.sqrt(width_w)])

    def W(x):
        x = np.asarray(x)
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        return np.exp(-np.sum((x - center) ** 2, axis=1) / width_w) * inside

    return cx, sub, sigma, W, (lo, hi)


def _suite_integration(rng, count, n_xi=2000):
    out = []
    for k in range(count):
        cx, sub, sigma, W, support = random_integration_setup(rng)
        lam = float(rng.uniform(2.0, 4.0))
        cap = CapSampler.defaults(lam, lipschitz_constant(sigma), n_xi, seed=int(rng.integers(0, 2**31)))
        chk = integration_check(W, sigma, sub, lam, cap, support, step=0.02)
        margin = chk.rhs - (chk.lhs - 3 * chk.std_error)
        out.append(_instance(k, chk.lhs, chk.rhs, margin,
                             f"simplices={len(cx.simplices)} lam={lam:.3f} se={chk.std_error:.3g} gamma={chk.gamma:.4g}"))
    return out


def random_translation_setup(rng):
    dim = 1 + int(rng.integers(0, 2))
    kappa = float(rng.choice([0.125, 0.25, 0.5]))
    amp = float(rng.uniform(0.02, 0.2))
    a = rng.normal(size=dim)
    ph = rng.uniform(0, 2 * np.pi, size=dim)
    prof = _phase_profile(rng, dim)

    def psi(x):
        x = np.atleast_2d(x)
        return amp * np.sin(2 * np.pi * x / kappa + ph) * np.sign(a)

    return dim, kappa, prof, psi


def _suite_translation(rng, count):
    out = []
    for k in range(count):
        dim, kappa, f, psi = random_translation_setup(rng)
        p = float(rng.uniform(1.2, 3.0))
        step = kappa / 16 if dim == 1 else kappa / 8
        r = good_translation(f, psi, kappa, ([0.0] * dim, [1.0] * dim), p, step, n_h=8 if dim == 1 else 4)
        margin = r.bound * (1 + r.slack) - r.mean
        out.append(_instance(k, r.mean, r.bound, margin, f"dim={dim} kappa={kappa} p={p:.3f}"))
    return out


def _suite_kernel_mass(rng, count):
    out = []
    for k in range(count):
        pt = (float(rng.uniform(-5, 5)), float(np.exp(rng.uniform(-4, 3))))
        err = abs(kernel_mass_quadrature(pt) - math.pi)
        out.append(_instance(k, err, 1e-3, 1e-3 - err, f"point=({pt[0]:.4f}, {pt[1]:.4f})"))
    return out


def _suite_gamma(rng, count):
    out = []
    seg = SimplicialComplex.from_simplices([[0, 1]])
    star = SimplicialComplex.from_simplices([[0, 1], [0, 2]])
    for k in range(count):
        lam = float(rng.choice([1.5, 2.0, 4.0]))
        if k % 4 == 0:
            val = gamma(seg, Subcomplex(seg, [[0]]), lam)
            out.append(_instance(k, abs(val - lam), 1e-12, 1e-12 - abs(val - lam), f"segment lam={lam} gamma={val}"))
        elif k % 4 == 1:
            val = gamma(star, Subcomplex(star, [[0]]), lam)
            out.append(_instance(k, abs(val - 2 * lam), 1e-12, 1e-12 - abs(val - 2 * lam), f"star lam={lam} gamma={val}"))
        else:
            cx, sub = random_graph_complex(rng)
            val = gamma(cx, sub, lam)
            ref = gamma_brute_force(cx, sub, lam)
            rel = abs(val - ref) / ref
            out.append(_instance(k, rel, 0.02, 0.02 - rel, f"graph lam={lam} gamma={val:.6g} brute={ref:.6g}"))
    return out


def verify_suite(name: str, seed: int = 0, count: int = 20) -> SuiteReport:
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}")
    rng = np.random.Generator(np.random.Philox(seed))
    runner = {
        "pyramid": _suite_pyramid,
        "chain": _suite_chain,
        "integration_lemma": _suite_integration,
        "translation_lemma": _suite_translation,
        "kernel_mass": _suite_kernel_mass,
        "gamma_oracle": _suite_gamma,
    }[name]
    return SuiteReport(name, seed, runner(rng, count))


# ---------------------------------------------------------------------------
# reports


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report_name(results) -> str:
    cfg = results.config
    return f"{cfg['scenario']}_{cfg['seed']}"


def emit_report(results, fmt: str = "json", out_dir="out") -> Path:
    """Write ``<scenario>_<seed>.<fmt>``; the JSON form echoes the full config."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{report_name(results)}.{fmt}"
        if fmt == "json":
            text = json.dumps(_clean(results.to_dict()), sort_keys=True, indent=2) + "\n"
        else:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(results.csv_header())
            for row in results.csv_rows():
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
            text = buf.getvalue()
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# small tabular reports (energy, density, gamma)


@dataclass
class TableReport:
    config: dict
    header: list
    rows: list
    extra: dict = field(default_factory=dict)
    ok: bool = True

    def to_dict(self) -> dict:
        out = {"config": self.config, "ok": self.ok, "rows": [dict(zip(self.header, r)) for r in self.rows]}
        out.update(self.extra)
        return out

    def csv_header(self) -> list:
        return list(self.header)

    def csv_rows(self) -> list:
        return [list(r) for r in self.rows]


def energy_table(u, cfg: ExperimentConfig) -> TableReport:
    """p-energy of ``u`` on the boundary face of the box and of its vertically constant extension."""
    lo, hi = cfg.box()
    rows = []
    for kappa in cfg.kappas:
        step = kappa / (2 * cfg.n)
        ext = GridMap.from_function(u, lo, hi, step, Sphere(2))
        face = GridMap.from_function(lambda y: u(np.c_[y, np.zeros(len(y))]), lo[:-1], hi[:-1], step, Sphere(2))
        rows.append([kappa, step, ext.energy(cfg.p), face.energy(cfg.p)])
    return TableReport(cfg.to_dict(), ["kappa", "step", "extension_energy", "boundary_energy"], rows)


def density_table(u, cfg: ExperimentConfig, kernel: str = "trace_kernel", out_dir=None) -> TableReport:
    """Extension energy density of the homogeneous extension at the smallest kappa and zero shift.

    With ``out_dir`` the density samples are also written as
    ``<scenario>_<seed>_density.csv``.
    """
    from .density import extension_density

    kappa = cfg.kappas[-1]
    cub, res, _ = solve_shift(u, cfg, kappa, np.zeros(cfg.m - 1))
    U, _, _, _ = homogeneous_extension(res.V, cfg.p, cub, n=cfg.n)
    # the density needs samples strictly above the boundary: drop the x_m = 0 layer
    origin = U.origin.copy()
    origin[-1] += U.step
    fld = extension_density(U.energy_density(cfg.p)[..., 1:], origin, U.step, kernel, p=cfg.p)
    extra = {}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        extra["density_file"] = str(fld.to_csv(Path(out_dir) / f"{cfg.scenario}_{cfg.seed}_density.csv"))
    row = [kappa, kernel, fld.gamma, fld.total(), fld.mass_check.lhs, fld.mass_check.rhs, int(fld.mass_check.ok)]
    header = ["kappa", "kernel", "gamma", "total", "mass_lhs", "mass_rhs", "mass_ok"]
    return TableReport(cfg.to_dict(), header, [row], extra, ok=bool(fld.mass_check.ok))


def gamma_table(path, lams, seed: int = 0) -> TableReport:
    from .simplicial import load_complex

    cx, sub = load_complex(path)
    rows = [[float(lam), gamma(cx, sub, float(lam))] for lam in lams]
    cfg = {"scenario": "gamma", "seed": seed, "complex": str(path), "lam": [float(x) for x in lams]}
    return TableReport(cfg, ["lam", "gamma"], rows)

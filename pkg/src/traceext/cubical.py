"""Canonical cubication of the closed half-space and its dual lattice.

Cells are stored combinatorially.  The ``anchor`` of a cell is its center
measured in units of ``kappa / 2`` (so every anchor is an integer vector):

* primal cells are faces of ``[-kappa/2, kappa/2]^m + kappa k``; their anchor
  is even on free axes and odd on fixed axes;
* dual cells are faces of ``[0, kappa]^m + kappa k``; their anchor is odd on
  free axes and even on fixed axes.

A primal cell whose last axis is free with anchor 0 straddles ``x_m = 0`` and
is stored unclipped with ``kind == "primal_clipped_half"``.  Boundary-trace
cells are the ``x_m = 0`` slices of such cells; they keep the anchor of the
parent face (last coordinate 0) and drop the last axis from ``free_axes``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

PRIMAL_FULL = "primal_full"
PRIMAL_CLIPPED = "primal_clipped_half"
BOUNDARY_TRACE = "boundary_trace"
DUAL = "dual"

FAMILIES = ("plus", "zero", "dual")


class CubicationError(ValueError):
    pass


@dataclass(frozen=True)
class Cubication:
    """A window of the cubication of size ``kappa`` in ``R^m``.

    ``window`` holds one inclusive ``(lo, hi)`` range of cube indices per axis;
    the window region is the union of the primal cubes it indexes.
    """

    kappa: float
    m: int
    window: tuple[tuple[int, int], ...]
    shift: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.kappa > 0:
            raise CubicationError(f"kappa must be positive, got {self.kappa}")
        if self.m < 2:
            raise CubicationError(f"ambient dimension must be >= 2, got {self.m}")
        window = tuple((int(lo), int(hi)) for lo, hi in self.window)
        if len(window) != self.m:
            raise CubicationError("window needs one index range per axis")
        if any(hi < lo for lo, hi in window):
            raise CubicationError("empty window")
        object.__setattr__(self, "window", window)
        shift = tuple(float(s) for s in self.shift) if self.shift else (0.0,) * self.m
        if len(shift) == self.m - 1:
            shift = shift + (0.0,)
        if len(shift) != self.m:
            raise CubicationError("shift must have m or m-1 components")
        if shift[-1] != 0.0:
            raise CubicationError("shift must have vanishing last coordinate")
        object.__setattr__(self, "shift", shift)

    @classmethod
    def around(cls, kappa, m, half_width, height, shift=()):
        """Smallest symmetric window covering ``[-half_width, half_width]^(m-1) x [0, height]``."""
        n = max(0, math.ceil(half_width / kappa - 0.5 - 1e-9))
        layers = max(1, math.ceil(height / kappa + 0.5 - 1e-9))
        return cls(kappa, m, ((-n, n),) * (m - 1) + ((0, layers - 1),), shift)

    @property
    def shift_array(self) -> np.ndarray:
        return np.asarray(self.shift, dtype=float)

    def region(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of the (shifted) window box."""
        lo = np.array([w[0] - 0.5 for w in self.window]) * self.kappa + self.shift_array
        hi = np.array([w[1] + 0.5 for w in self.window]) * self.kappa + self.shift_array
        return lo, hi

    def cubes(self) -> Iterator[tuple[int, ...]]:
        yield from itertools.product(*(range(lo, hi + 1) for lo, hi in self.window))

    def with_shift(self, shift) -> "Cubication":
        return Cubication(self.kappa, self.m, self.window, tuple(shift))


@dataclass(frozen=True)
class CubicalCell:
    dim: int
    anchor: tuple[int, ...]
    free_axes: tuple[int, ...]
    kind: str
    kappa: float
    shift: tuple[float, ...]

    # identity is purely combinatorial
    def key(self) -> tuple:
        return (self.dim, self.anchor, self.free_axes, self.kind)

    def __eq__(self, other):
        if not isinstance(other, CubicalCell):
            return NotImplemented
        return self.key() == other.key() and self.kappa == other.kappa and self.shift == other.shift

    def __hash__(self):
        return hash(self.key())

    @property
    def m(self) -> int:
        return len(self.anchor)

    @property
    def is_primal(self) -> bool:
        return self.kind in (PRIMAL_FULL, PRIMAL_CLIPPED)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis closed extent of the (clipped) cell."""
        a = np.asarray(self.anchor, dtype=float)
        lo = a.copy()
        hi = a.copy()
        for i in self.free_axes:
            lo[i] -= 1.0
            hi[i] += 1.0
        if self.kind == PRIMAL_CLIPPED:
            lo[-1] = 0.0
        half = 0.5 * self.kappa
        s = np.asarray(self.shift)
        return lo * half + s, hi * half + s

    def vertices(self) -> np.ndarray:
        lo, hi = self.bounds()
        corners = []
        for choice in itertools.product((0, 1), repeat=self.dim):
            x = lo.copy()
            for bit, ax in zip(choice, self.free_axes):
                x[ax] = hi[ax] if bit else lo[ax]
            corners.append(x)
        return np.array(corners)

    def contains(self, x, tol: float = 1e-12) -> bool:
        lo, hi = self.bounds()
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    def faces(self) -> list["CubicalCell"]:
        """Codimension-one faces of the unclipped primal or dual cell."""
        out = []
        kind = DUAL if self.kind == DUAL else PRIMAL_FULL
        for ax in self.free_axes:
            rest = tuple(a for a in self.free_axes if a != ax)
            for sign in (-1, 1):
                anchor = list(self.anchor)
                anchor[ax] += sign
                k = kind
                if kind == PRIMAL_FULL and (self.m - 1) in rest and anchor[-1] == 0:
                    k = PRIMAL_CLIPPED
                out.append(CubicalCell(self.dim - 1, tuple(anchor), rest, k, self.kappa, self.shift))
        return out

    def to_record(self) -> dict:
        return {
            "dim": self.dim,
            "anchor": list(self.anchor),
            "free_axes": list(self.free_axes),
            "kind": self.kind,
            "kappa": self.kappa,
            "shift": list(self.shift),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CubicalCell":
        return cls(
            int(rec["dim"]),
            tuple(int(a) for a in rec["anchor"]),
            tuple(int(a) for a in rec["free_axes"]),
            str(rec["kind"]),
            float(rec["kappa"]),
            tuple(float(s) for s in rec["shift"]),
        )


def cells_to_json(cells: Sequence[CubicalCell]) -> str:
    return json.dumps([c.to_record() for c in cells], sort_keys=True)


def _axis_values(lo: int, hi: int, parity: int) -> range:
    # integers in [lo, hi] with the given parity
    start = lo if (lo - parity) % 2 == 0 else lo + 1
    return range(start, hi + 1, 2)


def enumerate_skeleton(cub: Cubication, ell: int, family: str) -> list[CubicalCell]:
    """All cells of one skeleton family meeting the window.

    Primal and boundary cells are the faces of window cubes (cells contained
    in the closed window box).  Dual cells are those whose closure meets the
    open window box.  The output order is deterministic.
    """
    m = cub.m
    if family not in FAMILIES:
        raise CubicationError(f"unknown family {family!r}")
    top = m - 1 if family == "zero" else m
    if not 0 <= ell <= top:
        raise CubicationError(f"dimension {ell} out of range for family {family!r}")

    # doubled-coordinate bounds of the closed window box
    lo2 = [2 * lo - 1 for lo, _ in cub.window]
    hi2 = [2 * hi + 1 for _, hi in cub.window]
    out: list[CubicalCell] = []

    if family == "zero":
        if not lo2[-1] <= 0 <= hi2[-1]:
            return out
        for free in itertools.combinations(range(m - 1), ell):
            ranges = []
            for i in range(m - 1):
                parity = 0 if i in free else 1
                ranges.append(_axis_values(lo2[i] + (parity == 0), hi2[i] - (parity == 0), parity))
            for a in itertools.product(*ranges):
                out.append(CubicalCell(ell, tuple(a) + (0,), free, BOUNDARY_TRACE, cub.kappa, cub.shift))
        return out

    dual = family == "dual"
    for free in itertools.combinations(range(m), ell):
        ranges = []
        for i in range(m):
            is_free = i in free
            if dual:
                parity = 1 if is_free else 0
                lo, hi = (lo2[i], hi2[i]) if is_free else (lo2[i] + 1, hi2[i] - 1)
            else:
                parity = 0 if is_free else 1
                lo, hi = (lo2[i] + 1, hi2[i] - 1) if is_free else (lo2[i], hi2[i])
            if not dual and i == m - 1:
                lo = max(lo, 0 if is_free else 1)
            ranges.append(_axis_values(lo, hi, parity))
        for a in itertools.product(*ranges):
            if dual:
                kind = DUAL
            elif (m - 1) in free and a[-1] == 0:
                kind = PRIMAL_CLIPPED
            else:
                kind = PRIMAL_FULL
            out.append(CubicalCell(ell, tuple(a), free, kind, cub.kappa, cub.shift))
    return out


def cell_center(cell: CubicalCell) -> np.ndarray:
    """Center ``x_Q`` of the unclipped primal face (on ``x_m = 0`` when clipped)."""
    if not cell.is_primal:
        raise CubicationError(f"cell_center needs a primal cell, got {cell.kind}")
    return 0.5 * cell.kappa * np.asarray(cell.anchor, dtype=float) + np.asarray(cell.shift)


def cell_measure(cell: CubicalCell) -> float:
    vol = cell.kappa ** cell.dim
    return 0.5 * vol if cell.kind == PRIMAL_CLIPPED else vol


def cell_lattice(cell: CubicalCell, n: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Sample lattice of step ``kappa / n`` on the cell, boundary included.

    Returns the points (C-ordered over the free axes) and the lattice shape.
    Clipped half-cells get ``n // 2`` intervals along the last axis.
    """
    if n < 1:
        raise CubicationError("need at least one interval per cell axis")
    lo, hi = cell.bounds()
    axes_pts = []
    shape = []
    for ax in cell.free_axes:
        k = n
        if cell.kind == PRIMAL_CLIPPED and ax == cell.m - 1:
            if n % 2:
                raise CubicationError("clipped cells need an even number of intervals")
            k = n // 2
        axes_pts.append(np.linspace(lo[ax], hi[ax], k + 1))
        shape.append(k + 1)
    base = lo.copy()
    if cell.dim == 0:
        return base[None, :], ()
    grids = np.meshgrid(*axes_pts, indexing="ij")
    pts = np.repeat(base[None, :], grids[0].size, axis=0)
    for g, ax in zip(grids, cell.free_axes):
        pts[:, ax] = g.ravel()
    return pts, tuple(shape)


def in_dual_skeleton(x, kappa: float, ell: int, shift=None, tol: float = 1e-12) -> bool:
    """Whether ``x`` lies on the union of ``ell``-faces of the dual lattice."""
    x = np.asarray(x, dtype=float)
    if shift is not None:
        x = x - np.asarray(shift, dtype=float)
    t = x / kappa
    on_plane = np.abs(t - np.round(t)) <= tol
    # need m - ell coordinates on dual hyperplanes (integers in units of kappa)
    return int(on_plane.sum()) >= x.size - ell

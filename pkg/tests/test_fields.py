import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from traceext.cubical import Cubication, enumerate_skeleton
from traceext.fields import (
    ComplexMap,
    GridMap,
    SingularProjection,
    SkeletonLattice,
    SkeletonMap,
    Sphere,
    UndersampledLoop,
    annulus_coverage,
    bmo_seminorm,
    energy_p,
    gagliardo_grid,
    gagliardo_seminorm,
    gagliardo_sum,
    load_samples,
    project_to_target,
    save_samples,
    vortex_annulus_map,
    winding_number,
)
from traceext.simplicial import SimplicialComplex

S1 = Sphere(2)


def rotation(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def test_projection_examples():
    assert np.allclose(project_to_target([2.0, 0.0], S1), [1.0, 0.0])
    with pytest.raises(SingularProjection):
        project_to_target([0.0, 0.0], S1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-6))
def test_projection_idempotent(x):
    T = Sphere(3)
    y = T.project(x)
    assert abs(np.linalg.norm(y) - 1) <= 1e-12
    assert np.allclose(T.project(y), y, atol=1e-12, rtol=0)


def single_edge_cells():
    # the top edge of the unit square at height 1/2 is a full unit 1-cell
    cub = Cubication(1.0, 2, ((0, 0), (0, 0)))
    return [c for c in enumerate_skeleton(cub, 1, "plus") if c.kind == "primal_full"]


def test_identity_on_unit_edge():
    lat = SkeletonLattice.build(single_edge_cells(), 16)
    u = lat.nodes[:, :1]
    assert abs(lat.energy(u, 2.0) - 1.0) <= 1e-10


def test_constant_map_has_zero_energy():
    cub = Cubication(0.5, 3, ((0, 1), (0, 1), (0, 1)))
    cells = enumerate_skeleton(cub, 2, "plus")
    u = SkeletonMap.from_function(cells, 4, lambda x: np.tile([0.6, 0.8], (len(x), 1)))
    assert energy_p(u, 1.5).value == 0.0


def test_energy_requires_two_samples():
    with pytest.raises(ValueError):
        SkeletonLattice.build(single_edge_cells(), 0)
    with pytest.raises(ValueError):
        GridMap(np.zeros(2), 0.1, np.ones((1, 5, 2)))


@pytest.mark.parametrize("kappa", [0.25, 0.125, 0.0625])
def test_vortex_energy(kappa):
    e = vortex_annulus_map(kappa).energy(2.0)
    exact = 2 * math.pi * math.log(1 / kappa)
    assert abs(e - exact) <= 0.02 * exact


def phase_map(x):
    t = 2 * math.pi * (x[:, 0] + 0.3 * x[:, 1] - 0.2 * x[:, -1] ** 2)
    return np.c_[np.cos(t), np.sin(t)]


def test_energy_rotation_invariance():
    cub = Cubication(0.5, 3, ((0, 1), (0, 1), (0, 1)))
    cells = enumerate_skeleton(cub, 2, "plus")
    u = SkeletonMap.from_function(cells, 6, phase_map)
    v = SkeletonMap(u.lattice, u.values @ rotation(0.7).T)
    assert abs(energy_p(u, 2.5).value - energy_p(v, 2.5).value) < 1e-12 * max(1, energy_p(u, 2.5).value)


@pytest.mark.parametrize("ell", [1, 2, 3])
@pytest.mark.parametrize("scale", [0.5, 2.0])
def test_energy_dilation(ell, scale):
    p = 1.7
    base = Cubication(1.0, 3, ((0, 1), (0, 1), (0, 1)))
    big = Cubication(scale, 3, base.window)
    a = SkeletonMap.from_function(enumerate_skeleton(base, ell, "plus"), 8, phase_map)
    b = SkeletonMap.from_function(enumerate_skeleton(big, ell, "plus"), 8, lambda x: phase_map(x / scale))
    ratio = energy_p(b, p).value / energy_p(a, p).value
    assert abs(ratio - scale ** (ell - p)) <= 0.01 * scale ** (ell - p)


def test_energy_additive_over_cells():
    cub = Cubication(1.0, 2, ((0, 1), (0, 1)))
    cells = enumerate_skeleton(cub, 2, "plus")
    whole = energy_p(SkeletonMap.from_function(cells, 8, phase_map), 2.0).value
    parts = sum(energy_p(SkeletonMap.from_function([c], 8, phase_map), 2.0).value for c in cells)
    assert math.isclose(whole, parts, rel_tol=1e-12)


def test_energy_gradient_matches_finite_differences():
    cub = Cubication(1.0, 2, ((0, 0), (0, 0)))
    lat = SkeletonLattice.build(enumerate_skeleton(cub, 2, "plus"), 4)
    rng = np.random.default_rng(1)
    U = rng.normal(size=(len(lat.nodes), 2))
    e, g = lat.energy_and_gradient(U, 1.8)
    dU = rng.normal(size=U.shape)
    t = 1e-6
    fd = (lat.energy(U + t * dU, 1.8) - lat.energy(U - t * dU, 1.8)) / (2 * t)
    assert math.isclose(fd, float(np.sum(g * dU)), rel_tol=1e-5)


def test_complex_map_energy():
    seg = SimplicialComplex.from_simplices([[0, 1]])
    assert math.isclose(ComplexMap(seg, np.array([0.0, 1.0])).energy(2.0), 1.0)
    assert ComplexMap(seg, np.array([[1.0, 0.0], [1.0, 0.0]])).energy(3.0) == 0.0


def test_gagliardo_constant_and_identity():
    r = gagliardo_seminorm(lambda x: np.ones((len(x), 2)), [0.0], [1.0], 1 / 32, 0.5, 2.0)
    assert r.value == 0.0
    r = gagliardo_seminorm(lambda x: x, [0.0], [1.0], 1 / 64, 0.5, 2.0)
    assert abs(r.value - 1.0) <= 0.02


def test_gagliardo_grid_matches_pairwise_sum():
    rng = np.random.default_rng(0)
    g = GridMap.from_function(lambda x: np.c_[np.sin(3 * x[:, 0]), x[:, 1] ** 2], [0, 0], [1, 0.5], 1 / 16,
                              weights=lambda m: rng.uniform(size=m.shape[:-1]))
    a = gagliardo_grid(g.values, g.weights, g.step, 0.4, 2.5)
    b = gagliardo_sum(g.points, g.values.reshape(-1, 2), g.step, 0.4, 2.5, g.weights)
    assert math.isclose(a, b, rel_tol=1e-12)


def test_gagliardo_translation_invariance():
    f = lambda x: np.c_[np.cos(4 * x[:, 0] * x[:, 1]), np.sin(4 * x[:, 0] * x[:, 1])]
    a = GridMap.from_function(f, [0, 0], [1, 1], 1 / 8)
    shifted = GridMap(a.origin + 3.7, a.step, a.values, a.weights)
    pa = gagliardo_sum(a.points, a.values.reshape(-1, 2), a.step, 0.5, 2.0)
    pb = gagliardo_sum(shifted.points, shifted.values.reshape(-1, 2), shifted.step, 0.5, 2.0)
    assert math.isclose(pa, pb, rel_tol=1e-12)
    # on a grid every summand depends only on the offset, so equality is exact
    assert gagliardo_grid(a.values, a.weights, a.step, 0.5, 2.0) == gagliardo_grid(shifted.values, shifted.weights, shifted.step, 0.5, 2.0)


def test_gagliardo_warning_flag():
    r = gagliardo_seminorm(lambda x: x, [0.0], [1.0], 1 / 16, 0.5, 2.0, refine=False)
    assert r.nonintegrable_warning
    r = gagliardo_seminorm(lambda x: x, [0.0], [1.0], 1 / 16, 0.4, 2.0, refine=False)
    assert not r.nonintegrable_warning


@pytest.mark.slow
def test_gagliardo_vortex_stable_under_refinement():
    p = 2.5
    vort = lambda x: x / np.linalg.norm(x, axis=1, keepdims=True)
    h = 1 / 64
    cov = lambda mesh: annulus_coverage(mesh, mesh[1, 0, 0] - mesh[0, 0, 0], 0.0, 1.0)
    r = gagliardo_seminorm(vort, [-1, -1], [1, 1], h, 1 - 1 / p, p, weight_fn=cov)
    assert np.isfinite(r.value) and not r.nonintegrable_warning
    assert r.relative_change <= 0.05


def segment_cells(n):
    cx = SimplicialComplex.from_simplices([[0, 1]])
    ref = cx.refinement(n)
    mids = np.array([b.bary[1] for b in ref.cell_barycenters()])
    return ref, mids


def test_bmo_constant_and_scaling():
    ref, mids = segment_cells(32)
    rho = [0.05, 0.1, 0.2, 0.4, 0.8]
    assert bmo_seminorm(ref, np.ones_like(mids), rho).value == 0.0
    u = np.c_[np.cos(3 * mids), np.sin(3 * mids)]
    a = bmo_seminorm(ref, u, rho).value
    b = bmo_seminorm(ref, -2.5 * u, rho).value
    assert abs(b - 2.5 * a) <= 1e-12 * b


def test_bmo_step_matches_formula():
    ref, mids = segment_cells(64)
    a = 0.37
    u = (mids >= a).astype(float)
    rho = np.geomspace(0.02, 1.0, 12)
    rep = bmo_seminorm(ref, u, rho)

    # exact double average over an interval (c - r, c + r) ∩ [0, 1]: 2 t (1 - t)
    best = 0.0
    for c in np.linspace(0, 1, ref.n_nodes):
        for r in rho:
            lo, hi = max(0.0, c - r), min(1.0, c + r)
            t = max(0.0, hi - max(lo, a)) / (hi - lo)
            best = max(best, 2 * t * (1 - t))
    assert abs(rep.value - best) <= 0.03 * best
    assert rep.tail <= rep.value


def test_winding_examples():
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    assert winding_number(np.c_[np.cos(th), np.sin(th)]) == 1
    assert winding_number(np.tile([1.0, 0.0], (64, 1))) == 0
    assert winding_number(np.c_[np.cos(2 * th), np.sin(2 * th)]) == 2
    assert winding_number(np.c_[np.cos(-th), np.sin(-th)]) == -1
    th4 = np.linspace(0, 2 * np.pi, 4, endpoint=False)
    with pytest.raises(UndersampledLoop):
        winding_number(np.c_[np.cos(2 * th4), np.sin(2 * th4)])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 63), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_winding_stable(start, deg, seed):
    th = np.linspace(0, 2 * np.pi, 96, endpoint=False)
    u = np.c_[np.cos(deg * th), np.sin(deg * th)]
    noise = np.random.default_rng(seed).uniform(-1, 1, size=u.shape)
    noise *= 0.049 / np.linalg.norm(noise, axis=1, keepdims=True)
    assert winding_number(np.roll(u + noise, start, axis=0)) == deg


def test_sample_roundtrip(tmp_path):
    x = np.random.default_rng(0).normal(size=(10, 3))
    v = S1.project(np.random.default_rng(1).normal(size=(10, 2)))
    save_samples(tmp_path / "u.csv", x, v, {"domain": "grid"})
    x2, v2, meta = load_samples(tmp_path / "u.csv")
    assert np.array_equal(x, x2) and np.array_equal(v, v2)
    assert meta["domain"] == "grid" and meta["value_dim"] == 2

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from traceext.density import (
    CapSampler,
    DensityField,
    HypothesisViolated,
    PeriodicityError,
    cap_volume,
    default_gamma,
    dyadic_radii,
    extension_density,
    good_shift,
    good_translation,
    grid_field,
    integration_check,
    kernel_mass,
    kernel_mass_quadrature,
    kernel_values,
    maximal_function,
)
from traceext.simplicial import PLMap, SimplicialComplex, Subcomplex, lipschitz_constant


@pytest.mark.parametrize("point", [(0.0, 1.0), (0.3, 0.01), (-5.0, 2.0), (1.0, 10.0), (2.0, 0.5)])
def test_trace_kernel_mass_is_pi(point):
    assert abs(kernel_mass_quadrature(point) - math.pi) <= 1e-3


@pytest.mark.parametrize("m", [2, 3, 4])
def test_kernel_mass_closed_forms(m):
    assert math.isclose(kernel_mass_quadrature([0.2] * (m - 1) + [0.7]), kernel_mass(m), rel_tol=1e-8)
    g = 0.4
    assert math.isclose(kernel_mass_quadrature([0.0] * (m - 1) + [1.3], "qual_kernel", g),
                        kernel_mass(m, "qual_kernel", g), rel_tol=1e-7)


def test_maximal_constant_and_validation():
    f = np.full((20, 12), 2.5)
    M = maximal_function(f, 0.1, dyadic_radii(0.1, 2.0))
    assert np.allclose(M, 2.5, rtol=1e-12)
    with pytest.raises(ValueError):
        maximal_function(f, 0.1, [])


def test_maximal_single_spike():
    n, st_ = 121, 0.05
    f = np.zeros((n, n))
    c = n // 2
    f[c, c] = 1.0
    M = maximal_function(f, st_, np.arange(1, 41) * st_)
    for d in (0.3, 0.6, 0.9):
        k = int(round(d / st_))
        oracle = st_**2 / (math.pi * d**2)
        assert abs(M[c + k, c] - oracle) <= 0.1 * oracle


def test_maximal_dominates_and_is_homogeneous():
    rng = np.random.default_rng(0)
    f = rng.uniform(size=(16, 16, 8))
    radii = [0.05, 0.2, 0.4]
    M = maximal_function(f, 0.1, radii)
    assert np.all(M >= f)
    assert np.allclose(maximal_function(3.0 * f, 0.1, radii), 3.0 * M, rtol=1e-12)
    more = maximal_function(f, 0.1, radii + [0.8])
    assert np.all(more >= M)


def test_density_zero_and_gamma_checks():
    fld = extension_density(np.zeros((8, 4)), [0.05, 0.05], 0.1)
    assert np.all(fld.values == 0)
    with pytest.raises(ValueError):
        extension_density(np.ones((8, 4)), [0.05, 0.05], 0.1, "qual_kernel", gam=0.8, p=1.5)
    with pytest.raises(ValueError):
        extension_density(np.ones((8, 4)), [0.05, 0.05], 0.1, "qual_kernel", gam=1.2)
    assert default_gamma(1.5) == 0.25 and default_gamma(4.0) == 1.0


@pytest.mark.parametrize("kernel", ["trace_kernel", "qual_kernel"])
def test_density_matches_direct_sum(kernel):
    step = 1 / 16
    W = np.zeros((32, 16))
    W[10, 3] = 1.0
    origin = [-1 + step / 2, step / 2]
    fld = extension_density(W, origin, step, kernel, p=2.0)
    x = np.array([origin[0] + 10 * step, origin[1] + 3 * step])
    ys = fld.points
    for j in (0, 25, 31):
        direct = kernel_values(x[None, :1] - ys[j], x[1], kernel, fld.gamma) * step**2
        assert abs(fld.values.ravel()[j] - direct[0]) <= 0.05 * direct[0]
    assert fld.mass_check.ok


def test_density_mass_bound_and_infinite_values():
    W, origin, _ = grid_field(lambda x: np.exp(-np.sum(x**2, axis=1)), [-2, -2, 0], [2, 2, 1], 0.125)
    fld = extension_density(W, origin, 0.125)
    assert fld.mass_check.ok and fld.summable()
    W[3, 3, 3] = np.inf
    fld = extension_density(W, origin, 0.125)
    assert np.all(np.isinf(fld.values)) and not fld.summable()
    assert fld.summable(null_fraction=1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_density_monotone(seed):
    rng = np.random.default_rng(seed)
    W1 = rng.uniform(size=(12, 6))
    W2 = W1 + rng.uniform(size=W1.shape)
    a = extension_density(W1, [0.05, 0.05], 0.1).values
    b = extension_density(W2, [0.05, 0.05], 0.1).values
    assert np.all(b >= a * (1 - 1e-12))


def test_density_csv_roundtrip(tmp_path):
    fld = extension_density(np.random.default_rng(1).uniform(size=(5, 4, 3)), [0.1, 0.1, 0.1], 0.2,
                            "qual_kernel", p=2.5)
    back = DensityField.from_csv(fld.to_csv(tmp_path / "w.csv"))
    assert back.kernel == "qual_kernel" and back.gamma == fld.gamma
    assert np.array_equal(back.values, fld.values)
    assert np.allclose(back.origin, fld.origin)


def test_cap_sampler():
    cap = CapSampler(0.6, 2.0, 500, seed=3)
    x = cap.sample(3)
    assert x.shape == (500, 3)
    assert np.all(np.linalg.norm(x, axis=1) < 2.0) and np.all(x[:, -1] > 1.2)
    assert np.array_equal(x, CapSampler(0.6, 2.0, 500, seed=3).sample(3))
    with pytest.raises(ValueError):
        CapSampler(1.0, 1.0)


@pytest.mark.parametrize("m,eta", [(2, 0.3), (3, 0.5)])
def test_cap_volume(m, eta):
    exact = math.acos(eta) - eta * math.sqrt(1 - eta**2) if m == 2 else math.pi * (1 - eta) ** 2 * (2 + eta) / 3
    assert math.isclose(cap_volume(m, eta), exact, rel_tol=1e-10)
    assert math.isclose(cap_volume(m, eta, 2.0), 2**m * exact, rel_tol=1e-10)


def triangle_setup(images=((0, 0), (1, 0), (0.3, 0.8))):
    cx = SimplicialComplex.from_simplices([[0, 1, 2]])
    sub = Subcomplex(cx, np.array([[0, 1]]))
    return cx, sub, PLMap(cx, np.array(images, dtype=float), sub)


def test_good_shift_constant_integrands():
    cx, sub, sig = triangle_setup()
    cap = CapSampler.defaults(3.0, lipschitz_constant(sig), 50)
    r = good_shift(lambda x: np.zeros(len(x)), sig, sub, 3.0, cap)
    assert r.value == 0.0
    r = good_shift(lambda x: np.ones(len(x)), sig, sub, 3.0, cap)
    assert math.isclose(r.value, cx.measure, rel_tol=1e-12)
    assert r.value <= r.mean


def test_good_shift_hypothesis():
    cx, sub, sig = triangle_setup()
    with pytest.raises(HypothesisViolated):
        good_shift(lambda x: np.ones(len(x)), sig, sub, 1.2, CapSampler(0.5, 1.0, 10))
    with pytest.raises(HypothesisViolated):
        good_shift(lambda x: np.ones(len(x)), sig, sub, 3.0, CapSampler(0.6, 0.1, 10))


def test_integration_bound_on_triangle():
    cx, sub, sig = triangle_setup()
    lam = 3.0
    cap = CapSampler.defaults(lam, lipschitz_constant(sig), 2000, seed=1)
    W = lambda x: np.exp(-np.sum((x - [0.5, 0.6]) ** 2, axis=1) / 0.1) * (np.abs(x[:, 0] - 0.5) < 2) * (x[:, 1] < 2.5)
    chk = integration_check(W, sig, sub, lam, cap, ([-1.5, 0.0], [2.5, 2.6]), 0.02)
    assert chk.ok, chk.to_dict()
    res = good_shift(W, sig, sub, lam, cap)
    assert res.value <= res.mean


def sawtooth(x):
    return 0.1 * (2 * ((x / 0.25) % 1) - 1)


def test_good_translation_example():
    r = good_translation(lambda x: np.sin(2 * np.pi * x[:, 0]), sawtooth, 0.25, ([0.0], [1.0]), 2.0,
                         1 / 256, n_h=64)
    assert r.ok and r.value <= r.mean + 1e-15
    assert len(r.values) == 64


def test_good_translation_trivial_cases():
    f = lambda x: np.sin(2 * np.pi * x[:, 0])
    r = good_translation(f, lambda x: np.zeros_like(x), 0.25, ([0.0], [1.0]), 2.0, 1 / 64)
    assert r.value == 0.0 and r.mean == 0.0
    r = good_translation(lambda x: np.ones(len(x)), sawtooth, 0.25, ([0.0], [1.0]), 2.0, 1 / 64)
    assert r.value == 0.0 and r.ok


def test_good_translation_two_dimensional():
    f = lambda x: np.c_[np.cos(3 * x[:, 0] + x[:, 1]), np.sin(3 * x[:, 0] + x[:, 1])]
    psi = lambda x: 0.05 * np.c_[np.sin(2 * np.pi * x[:, 0] / 0.5), np.cos(2 * np.pi * x[:, 1] / 0.5)]
    r = good_translation(f, psi, 0.5, ([0.0, 0.0], [1.0, 1.0]), 1.5, 1 / 16, n_h=4)
    assert r.ok, r.to_dict()


def test_good_translation_rejects_aperiodic():
    with pytest.raises(PeriodicityError):
        good_translation(lambda x: x[:, 0], lambda x: 0.1 * x, 0.25, ([0.0], [1.0]), 2.0, 1 / 64)

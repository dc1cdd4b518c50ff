import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncgeo.moyal import (
    GridMismatch,
    PhaseFunction,
    PhaseGrid,
    classical_heat_trace,
    compactness_profile,
    nc_heat_trace,
    torus_dixmier,
    twisted_product,
    weyl_flow_mc,
    weyl_trace,
)

G256 = PhaseGrid(1, 12.0, 256)
G128 = PhaseGrid(1, 12.0, 128)


def gauss(grid, **kw):
    return PhaseFunction.gaussian(grid, **kw)


def test_grid_and_fourier_convention():
    f = gauss(G256)
    assert f.roundtrip_error() <= 1e-13
    assert f.boundary_mass() <= 1e-12
    # (2 pi)^-1 int exp(-|x|^2/2) exp(-i k.x) dx = exp(-|k|^2/2)
    K1, K2 = G256.mesh(fourier=True)
    assert np.allclose(f.fourier, np.exp(-(K1**2 + K2**2) / 2), atol=1e-12)


def test_weyl_trace():
    assert weyl_trace(gauss(G256)) == pytest.approx(1.0, abs=1e-12)
    odd = PhaseFunction.from_callable(lambda x, y: x * np.exp(-(x**2 + y**2) / 2), G256)
    assert abs(weyl_trace(odd)) <= 1e-14
    f, g = gauss(G128, center=(1, 0)), gauss(G128, width=0.7)
    assert weyl_trace(f.scale(2) + g) == pytest.approx(2 * weyl_trace(f) + weyl_trace(g))


def test_text_roundtrip_and_mismatch():
    f = gauss(PhaseGrid(1, 6.0, 16), center=(0.3, -0.2), momentum=(0.5, 0))
    back = PhaseFunction.from_text(f.to_text())
    assert np.array_equal(back.values, f.values)
    with pytest.raises(GridMismatch):
        f + gauss(PhaseGrid(1, 6.0, 32))


def test_untwisted_mode_is_pointwise():
    f, g = gauss(G128, center=(0.5, 0)), gauss(G128, width=1.3, center=(0, -0.4))
    h = twisted_product(f, g, twisted=False)
    assert np.allclose(h.values, 2 * math.pi * f.values * g.values, atol=1e-12)


def brute_twisted(f, g):
    """Direct quadrature of the twisted convolution on the dual grid."""
    k, dk, n = f.grid.k, f.grid.dk, f.grid.n
    F, Gh = f.fourier, g.fourier
    H = np.zeros((n, n), dtype=complex)
    idx = {round(v / dk): i for i, v in enumerate(k)}
    for a in range(n):
        for b in range(n):
            acc = 0j
            for c in range(n):
                for d in range(n):
                    ia = idx.get(round((k[a] - k[c]) / dk))
                    ib = idx.get(round((k[b] - k[d]) / dk))
                    if ia is None or ib is None:
                        continue
                    acc += F[ia, ib] * Gh[c, d] * np.exp(0.5j * (k[a] * k[d] - k[b] * k[c]))
            H[a, b] = acc * dk * dk
    return H


def test_twisted_matches_brute_force():
    grid = PhaseGrid(1, 8.0, 16)
    f, g = gauss(grid, width=1.2, center=(0.3, 0)), gauss(grid, width=1.5, momentum=(0, 0.4))
    assert np.allclose(twisted_product(f, g).fourier, brute_twisted(f, g), atol=1e-12)


def test_twisted_gaussian_trace():
    f = gauss(G128)
    p = twisted_product(f, f)
    assert weyl_trace(p) == pytest.approx(f.norm2() ** 2, rel=1e-10)


def test_trace_of_commutator():
    rng = np.random.default_rng(0)
    for _ in range(2):
        c1, c2 = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        f = gauss(G128, center=c1, width=rng.uniform(0.8, 1.5))
        g = gauss(G128, center=c2, momentum=rng.uniform(-1, 1, 2))
        comm = twisted_product(f, g) - twisted_product(g, f)
        assert abs(weyl_trace(comm)) <= 1e-8
        assert np.max(np.abs(comm.values)) > 1e-3


def test_associativity():
    f = gauss(G128, center=(0.5, 0))
    g = gauss(G128, width=1.3, momentum=(0.3, 0))
    h = gauss(G128, center=(0, -0.5), width=0.9)
    lhs = twisted_product(twisted_product(f, g), h)
    rhs = twisted_product(f, twisted_product(g, h))
    assert (lhs - rhs).norm2() <= 1e-6


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.7, 1.5))
def test_positivity_faithful(c1, c2, w):
    f = gauss(G128, center=(c1, c2), width=w, momentum=(c2, 0))
    v = weyl_trace(twisted_product(f, f.natural()))
    assert abs(v.imag) <= 1e-10
    assert v.real == pytest.approx(f.norm2() ** 2, rel=1e-8)


def test_classical_trace():
    f = gauss(G256)
    r = classical_heat_trace(f, 0.1)
    assert r.value == pytest.approx(20 * math.pi, rel=1e-10)
    vals = [t * classical_heat_trace(f, t).value for t in (0.05, 0.1, 0.2)]
    assert max(vals) - min(vals) <= 1e-8
    g = gauss(G256, center=(1, 1))
    assert classical_heat_trace(f.scale(2) + g, 0.1).value == pytest.approx(
        2 * r.value + classical_heat_trace(g, 0.1).value)
    with pytest.raises(ValueError):
        classical_heat_trace(f, 0.0)


def test_nc_matches_classical():
    f = gauss(G256)
    for t in (0.05, 0.1, 0.2):
        a, b = classical_heat_trace(f, t), nc_heat_trace(f, t)
        assert abs(a.value - b.value) <= max(a.error + b.error, 1e-10 * abs(a.value))
        assert t * b.value == pytest.approx(f.integral().real, rel=1e-6)


def test_odd_function_zero_trace():
    odd = PhaseFunction.from_callable(lambda x, y: y * np.exp(-(x**2 + y**2) / 2), G256)
    assert abs(nc_heat_trace(odd, 0.1).value) <= 1e-12


def test_four_dimensional_phase_space():
    grid = PhaseGrid(2, 8.0, 32)
    f = gauss(grid)
    fhat0 = f.fourier[(16,) * 4].real
    t = 1.0
    r = classical_heat_trace(f, t)
    assert r.value == pytest.approx(t**-2 * (2 * math.pi) ** 2 * fhat0, rel=1e-8)
    nc = nc_heat_trace(f, t)
    assert nc.value == pytest.approx(r.value, rel=1e-6)
    # at small t the dual grid truncates the heat Gaussian and the error bar says so
    short = nc_heat_trace(f, 0.2)
    assert abs(short.value - classical_heat_trace(f, 0.2).value) <= short.error


def test_compactness_decay():
    sv = compactness_profile(gauss(G256))
    assert sv[0] == 1.0
    assert np.all(np.diff(sv) <= 1e-12)
    assert sv[200] < 1e-6
    with pytest.raises(ValueError):
        compactness_profile(gauss(G256), points=24)


def test_torus_dixmier_constant_and_bump():
    r = torus_dixmier(lambda x, y: np.ones_like(x), eps=1.0)
    assert r.value == pytest.approx(math.pi, rel=0.1) and r.count >= 100_000
    w = 0.5

    def bump(x, y):
        return (2 * math.pi) ** 2 / (2 * math.pi * w**2) * np.exp(-(x**2 + y**2) / (2 * w**2))

    b = torus_dixmier(bump, eps=1.0)
    assert b.value == pytest.approx(math.pi, rel=0.1)
    two = torus_dixmier(lambda x, y: 2 * bump(x, y) + 1, eps=1.0)
    assert two.value == pytest.approx(2 * b.value + r.value, rel=1e-9)
    with pytest.raises(ValueError):
        torus_dixmier(bump, cutoff=50)


def test_weyl_flow_single_mode_and_t0():
    grid = PhaseGrid(1, 12.0, 64)
    f = gauss(grid)
    est = weyl_flow_mc(f, 0.5, 20_000, seed=3, points=16)
    key = min(est.target, key=lambda k: (k[0] - 1) ** 2 + (k[1] - 1) ** 2)
    kk = key[0] ** 2 + key[1] ** 2
    assert est.target[key] == pytest.approx(f.fourier[32 + round(key[0] / grid.dk), 32 + round(key[1] / grid.dk)]
                                            * math.exp(-0.25 * kk))
    assert est.within(4.5)
    e0 = weyl_flow_mc(f, 0.0, 10, seed=3)
    assert e0.mean == e0.target

import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncgeo.torus import (
    DerivationSpec,
    ThetaMismatch,
    TorusElement,
    adjoint,
    canonical_derivation,
    derivation_commutator,
    from_bytes,
    from_text,
    generator_action,
    inner_derivation,
    mul,
    parse_element,
    to_bytes,
    to_text,
    torus_action,
    trace_tau,
)

TH = 0.37


def clock_shift(a: TorusElement, q: int) -> np.ndarray:
    """Image of ``a`` under the q x q clock-and-shift representation (theta = p/q)."""
    lam = cmath.exp(2j * math.pi * a.theta)
    C = np.diag([lam**k for k in range(q)])
    S = np.roll(np.eye(q), 1, axis=0)
    out = np.zeros((q, q), dtype=complex)
    for (m, n), c in a.coeffs.items():
        out += c * np.linalg.matrix_power(C, m % q) @ np.linalg.matrix_power(S, n % q)
    return out


elements = st.builds(
    lambda seed, radius: TorusElement.random(TH, np.random.default_rng(seed), radius=radius),
    st.integers(0, 2**32 - 1),
    st.integers(0, 2),
)


def test_clock_shift_relation():
    U, V = TorusElement.monomial(0.2, 1, 0), TorusElement.monomial(0.2, 0, 1)
    lam = cmath.exp(0.4j * math.pi)
    assert np.allclose(clock_shift(U, 5) @ clock_shift(V, 5), lam * clock_shift(V, 5) @ clock_shift(U, 5))


def test_mul_normal_ordered():
    uv = mul(TorusElement.monomial(TH, 1, 0), TorusElement.monomial(TH, 0, 1))
    assert uv.coeffs == {(1, 1): 1.0}


def test_mul_vu_against_oracle():
    th = 2 / 7
    vu = mul(TorusElement.monomial(th, 0, 1), TorusElement.monomial(th, 1, 0))
    assert vu[(1, 1)] == pytest.approx(cmath.exp(-2j * math.pi * th))
    lhs = clock_shift(vu, 7)
    rhs = clock_shift(TorusElement.monomial(th, 0, 1), 7) @ clock_shift(TorusElement.monomial(th, 1, 0), 7)
    assert np.allclose(lhs, rhs)


def test_group_commutator_trace():
    th = 3 / 11
    uv = TorusElement.monomial(th, 1, 1)
    x = mul(uv, TorusElement.monomial(th, -1, -1))
    y = mul(mul(mul(TorusElement.monomial(th, 1, 0), TorusElement.monomial(th, 0, 1)),
                TorusElement.monomial(th, -1, 0)), TorusElement.monomial(th, 0, -1))
    assert x.support == [(0, 0)]
    assert x[(0, 0)] == pytest.approx(cmath.exp(2j * math.pi * th))
    assert trace_tau(y) == pytest.approx(cmath.exp(2j * math.pi * th))
    assert np.allclose(clock_shift(y, 11), cmath.exp(2j * math.pi * th) * np.eye(11))


@pytest.mark.parametrize("seed", range(5))
def test_mul_matches_clock_shift_random(seed):
    rng = np.random.default_rng(seed)
    th, q = 3 / 13, 13
    a, b = TorusElement.random(th, rng, 2), TorusElement.random(th, rng, 2)
    assert np.allclose(clock_shift(mul(a, b), q), clock_shift(a, q) @ clock_shift(b, q), atol=1e-12)
    assert np.allclose(clock_shift(adjoint(a), q), clock_shift(a, q).conj().T, atol=1e-12)


def test_adjoint_examples():
    U = TorusElement.monomial(TH, 1, 0)
    assert adjoint(U).coeffs == {(-1, 0): 1.0}
    x = adjoint(TorusElement.monomial(0.25, 1, 1, 1j))
    assert x[(-1, -1)] == pytest.approx(-1.0)


@given(elements, elements, elements)
def test_algebra_laws(a, b, c):
    assert mul(mul(a, b), c).allclose(mul(a, mul(b, c)), atol=1e-10)
    assert adjoint(adjoint(a)).allclose(a)
    assert adjoint(mul(a, b)).allclose(mul(adjoint(b), adjoint(a)), atol=1e-10)
    assert abs(trace_tau(mul(a, b) - mul(b, a))) < 1e-10


@given(elements)
def test_trace_positive(a):
    v = trace_tau(mul(adjoint(a), a))
    assert abs(v.imag) < 1e-10 and v.real >= -1e-12
    assert v.real == pytest.approx(a.norm2() ** 2)


def test_trace_basics():
    assert trace_tau(TorusElement.one(TH)) == 1
    assert trace_tau(TorusElement.monomial(TH, 2, -1)) == 0


def test_canonical_derivations():
    assert canonical_derivation(1, TorusElement.monomial(TH, 2, 3))[(2, 3)] == 2
    assert canonical_derivation(2, TorusElement.monomial(TH, 1, 0)).support == []


@given(elements, elements)
def test_leibniz(a, b):
    for j in (1, 2):
        lhs = canonical_derivation(j, mul(a, b))
        rhs = mul(canonical_derivation(j, a), b) + mul(a, canonical_derivation(j, b))
        assert lhs.allclose(rhs, atol=1e-10)


def test_inner_derivation_examples():
    lam = cmath.exp(2j * math.pi * TH)
    U = TorusElement.monomial(TH, 1, 0)
    for m, n in [(0, 1), (2, -3), (-1, 4)]:
        out = inner_derivation(U, TorusElement.monomial(TH, m, n))
        assert out.support == [(m + 1, n)]
        assert out[(m + 1, n)] == pytest.approx(1 - lam ** (-n))
    r = parse_element("U+U^-1", TH)
    out = inner_derivation(r, TorusElement.monomial(TH, 0, 1))
    assert out[(1, 1)] == pytest.approx(1 - 1 / lam)
    assert out[(-1, 1)] == pytest.approx(1 - lam)
    assert inner_derivation(r, mul(r, r)).max_abs() < 1e-14


def test_torus_action():
    a = TorusElement.random(TH, np.random.default_rng(1))
    assert torus_action(1, 1, a).allclose(a)
    z = torus_action(cmath.exp(0.3j), cmath.exp(-1.1j), a)
    assert trace_tau(z) == pytest.approx(trace_tau(a))
    U = TorusElement.monomial(TH, 1, 0)
    h = 1e-5
    fd = (torus_action(cmath.exp(1j * h), 1, U) - torus_action(cmath.exp(-1j * h), 1, U)).scale(1 / (2 * h))
    assert fd.allclose(generator_action(1, U), atol=1e-9)
    assert generator_action(1, U).allclose(U.scale(1j))
    with pytest.raises(ValueError):
        torus_action(2.0, 1, a)


def test_derivation_commutators():
    d1, d2 = DerivationSpec.canonical(1, TH), DerivationSpec.canonical(2, TH)
    assert derivation_commutator(d1, d2).is_zero()
    V = TorusElement.monomial(TH, 0, 1)
    c = derivation_commutator(d1, DerivationSpec.inner(V))
    x = TorusElement.random(TH, np.random.default_rng(4))
    assert c(x).allclose(inner_derivation(canonical_derivation(1, V), x))
    U = TorusElement.monomial(TH, 1, 0)
    c = derivation_commutator(d1 + DerivationSpec.inner(U), d2 + DerivationSpec.inner(V))
    target = DerivationSpec.inner(mul(U, V) - mul(V, U))
    for y in (U, V, x):
        assert c(y).allclose(target(y), atol=1e-12)
    lam = cmath.exp(2j * math.pi * TH)
    assert (mul(U, V) - mul(V, U))[(1, 1)] == pytest.approx(1 - 1 / lam)


@given(elements)
def test_text_and_bytes_roundtrip(a):
    assert from_text(to_text(a)) == a
    assert from_bytes(to_bytes(a)) == a


def test_text_format():
    a = parse_element("2*U^2V - 0.5i*V^-1", TH)
    lines = to_text(a).splitlines()
    assert lines[0].startswith("theta=")
    assert [tuple(map(int, ln.split()[:2])) for ln in lines[1:]] == [(0, -1), (2, 1)]


def test_theta_mismatch():
    with pytest.raises(ThetaMismatch):
        mul(TorusElement.one(0.1), TorusElement.one(0.2))


def test_parse_element():
    r = parse_element("U+U^-1", TH)
    assert r.coeffs == {(-1, 0): 1.0, (1, 0): 1.0}
    assert parse_element("0", TH).support == []
    x = parse_element("VU", TH)
    assert x[(1, 1)] == pytest.approx(cmath.exp(-2j * math.pi * TH))
    with pytest.raises(ValueError):
        parse_element("W", TH)

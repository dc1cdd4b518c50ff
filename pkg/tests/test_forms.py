import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncgeo.forms import (
    ConnectionSpec,
    NotInvertible,
    UniversalOneForm,
    condition_number,
    covariant_derivative,
    curvature_two_form,
    delta_lift,
    forms_from_text,
    forms_to_text,
    invert_element,
    invertibility_threshold,
    j1_constraint_residuals,
    junk_probe,
    perturbed_deltas,
    pi_one,
    pi_two,
    random_j1_element,
    unitary_j1_element,
)
from ncgeo.operators import BasisWindow
from ncgeo.torus import (
    DerivationSpec,
    TorusElement,
    adjoint,
    canonical_derivation,
    derivation_commutator,
    inner_derivation,
    mul,
    real_part,
)

TH = 0.37
U = TorusElement.monomial(TH, 1, 0)
Ui = TorusElement.monomial(TH, -1, 0)
V = TorusElement.monomial(TH, 0, 1)
ZERO = TorusElement.zero(TH)
ONE = TorusElement.one(TH)
X = UniversalOneForm.of((Ui, U), (U, Ui))
W32 = BasisWindow(32)

seeds = st.integers(0, 2**32 - 1)


def test_pi_one_delta_u():
    p = pi_one(UniversalOneForm.of((ONE, U)), ZERO)
    assert p.omega1.allclose(U.scale(1j)) and p.omega2.max_abs() == 0


@pytest.mark.parametrize("m", [1, 2, 3])
def test_x_in_kernel_and_scalar(m):
    r = TorusElement.monomial(TH, m, 0)
    p = pi_one(X, r)
    assert p.omega1.max_abs() == 0 and p.omega2.max_abs() == 0
    q = pi_two(delta_lift(X), r)
    assert abs(abs(q.scalar[(0, 0)]) - 2) <= 1e-12
    assert q.scalar.support == [(0, 0)]
    assert q.gamma12.max_abs() <= 1e-12


def test_zero_form():
    q = pi_two(delta_lift(UniversalOneForm()), U)
    assert q.scalar.max_abs() == 0 and q.gamma12.max_abs() == 0


def test_delta_lift_convention():
    assert delta_lift(UniversalOneForm.of((U, V))).terms == ((ONE, U, V),)
    assert delta_lift(X).terms == ((ONE, Ui, U), (ONE, U, Ui))


@given(seeds)
def test_right_module(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (TorusElement.random(TH, rng, 1) for _ in range(3))
    r = TorusElement.random(TH, rng, 1)
    w = UniversalOneForm.of((a, b))
    lhs = pi_one(w.right_mul(c), r)
    rhs = pi_one(w, r).right_mul(c)
    assert lhs.omega1.allclose(rhs.omega1, atol=1e-10)
    assert lhs.omega2.allclose(rhs.omega2, atol=1e-10)


@given(seeds)
def test_lift_linear(seed):
    rng = np.random.default_rng(seed)
    r = TorusElement.random(TH, rng, 1)
    w1, w2 = (UniversalOneForm.of((TorusElement.random(TH, rng, 1), TorusElement.random(TH, rng, 1))) for _ in range(2))
    c = complex(rng.normal(), rng.normal())
    lhs = pi_two(delta_lift(w1.scale(c) + w2), r)
    a, b = pi_two(delta_lift(w1), r), pi_two(delta_lift(w2), r)
    assert lhs.scalar.allclose(a.scalar.scale(c) + b.scalar, atol=1e-9)
    assert lhs.gamma12.allclose(a.gamma12.scale(c) + b.gamma12, atol=1e-9)


def test_forms_text_roundtrip():
    rng = np.random.default_rng(0)
    w = random_j1_element(TH, rng)
    back = forms_from_text(forms_to_text(w))
    assert back == w
    two = delta_lift(w)
    assert forms_from_text(forms_to_text(two)) == two


@given(seeds)
def test_free_j1_has_no_gamma(seed):
    w = random_j1_element(TH, np.random.default_rng(seed))
    p = pi_one(w, ZERO)
    assert p.is_zero(1e-10)
    assert pi_two(delta_lift(w), ZERO).gamma12.max_abs() <= 1e-10
    assert max(j1_constraint_residuals(w, ZERO)) <= 1e-10


def test_unitary_kernel_elements():
    for m, n in [(1, 0), (2, -1), (0, 3)]:
        assert pi_one(unitary_j1_element(m, n, TH), ZERO).is_zero(1e-12)
    assert pi_one(unitary_j1_element(2, 0, TH), U).is_zero(1e-12)


def test_gamma_equals_commutator_sum():
    # for w in the kernel: gamma12 of pi(delta w) = sum a_i [delta_1, delta_2](b_i) = -i m sum a_i [r_1, b_i]
    pr = junk_probe(U, 3, W32)
    D1, D2 = perturbed_deltas(U)
    comm = derivation_commutator(D1, D2)
    s = TorusElement.zero(TH)
    t = TorusElement.zero(TH)
    for a, b in pr.form.terms:
        s = s + mul(a, comm(b))
        t = t + mul(a, inner_derivation(real_part(U), b))
    g = pi_two(delta_lift(pr.form), U).gamma12
    assert g.allclose(s, atol=1e-12)
    assert g.allclose(t.scale(-1j), atol=1e-12)


def test_inversion():
    x = ONE.scale(2) + U.scale(0.5)
    y = invert_element(x)
    assert (mul(x, y) - ONE).max_abs() <= 1e-12
    # |2 + e^{i phi}/2| ranges over [3/2, 5/2]; finite Toeplitz sections approach 5/3 from below
    c16, c32 = condition_number(x, BasisWindow(16)), condition_number(x, BasisWindow(32))
    assert c16 < c32 <= 5 / 3 and c32 == pytest.approx(5 / 3, rel=1e-3)
    D1, D2 = perturbed_deltas(U)
    with pytest.raises(NotInvertible):
        invert_element(D2(V))


def test_threshold_and_probe():
    assert invertibility_threshold(U, W32) == 2
    with pytest.raises(ValueError):
        junk_probe(U, 1, W32, n0=2)
    pr = junk_probe(U, 3, W32)
    assert pi_one(pr.form, U).is_zero(1e-10)
    assert pi_two(delta_lift(pr.form), U).gamma12.norm2() > 0.1


def test_second_component_decays():
    n0 = 2
    s2 = junk_probe(U, n0 + 2, W32, n0=n0).second.norm2()
    s8 = junk_probe(U, n0 + 8, W32, n0=n0).second.norm2()
    assert s8 < s2


def random_conn(rng):
    return ConnectionSpec.random(TH, rng, radius=1)


def random_sa_traceless(rng):
    x = TorusElement.random(TH, rng, 1)
    s = (x + adjoint(x)).scale(0.5)
    return s - ONE.scale(s[(0, 0)])


def test_covariant_directions():
    rng = np.random.default_rng(1)
    conn, xi = random_conn(rng), TorusElement.random(TH, rng, 1)
    d1 = DerivationSpec.canonical(1, TH)
    assert covariant_derivative(conn, xi, d1).allclose(conn.nabla(1, xi))
    r = random_sa_traceless(rng)
    assert covariant_derivative(conn, xi, DerivationSpec.inner(r)).allclose(-mul(xi, r))


def test_covariant_leibniz():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        conn = random_conn(rng)
        xi, a = TorusElement.random(TH, rng, 1), TorusElement.random(TH, rng, 1)
        r = random_sa_traceless(rng)
        c1, c2 = rng.normal(size=2)
        dirn = DerivationSpec(c1, c2, r)
        lhs = covariant_derivative(conn, mul(xi, a), dirn)
        rhs = mul(covariant_derivative(conn, xi, dirn), a) + mul(xi, dirn(a))
        worst = max(worst, (lhs - rhs).max_abs())
    assert worst <= 1e-12


def test_curvature_properties():
    rng = np.random.default_rng(3)
    d1, d2 = DerivationSpec.canonical(1, TH), DerivationSpec.canonical(2, TH)
    xi = TorusElement.random(TH, rng, 1)
    flat = ConnectionSpec(ZERO, ZERO)
    assert curvature_two_form(flat, d1, d2, xi).max_abs() == 0
    conn = random_conn(rng)
    a = curvature_two_form(conn, d1, d2, xi)
    b = curvature_two_form(conn, d2, d1, xi)
    assert a.allclose(-b, atol=1e-12)
    r1, r2 = random_sa_traceless(rng), random_sa_traceless(rng)
    p = curvature_two_form(conn, DerivationSpec.perturbed(1, r1), DerivationSpec.perturbed(2, r2), xi)
    assert (a - p).norm2() <= 1e-12


def test_curvature_of_abelian_connection():
    # omega_j scalar multiples of 1: R(d1, d2) vanishes since the connection is flat
    conn = ConnectionSpec(ONE.scale(0.3j), ONE.scale(-1.2j))
    xi = TorusElement.random(TH, np.random.default_rng(4), 1)
    d1, d2 = DerivationSpec.canonical(1, TH), DerivationSpec.canonical(2, TH)
    assert curvature_two_form(conn, d1, d2, xi).max_abs() <= 1e-14
    assert canonical_derivation(1, xi).support == [k for k in xi.support if k[0] != 0]

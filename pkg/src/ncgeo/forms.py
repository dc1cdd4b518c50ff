"""Universal forms over the torus algebra, their Dirac images, and connections.

With ``D = [[0, d1 + i d2 + d_r], [d1 - i d2 + d_{r*}, 0]]`` the commutator
``[D, a]`` is off-diagonal with blocks ``delta_1 a + i delta_2 a`` (top) and
``delta_1 a - i delta_2 a`` (bottom), where ``delta_j = d_j + [r_j, .]``,
``r_1 = Re r`` and ``r_2 = Im r``.  Writing it as ``omega_1 g1 + omega_2 g2``
with ``g1 = [[0, -i], [-i, 0]]`` and ``g2 = [[0, 1], [-1, 0]]`` gives
``omega_j = i delta_j(a)``.  Products of two such images are block diagonal
and split over ``{1, g12}`` with ``g12 = g1 g2 = diag(i, -i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .operators import BasisWindow, OperatorMatrix, left_multiplication
from .torus import (
    DerivationSpec,
    TorusElement,
    adjoint,
    canonical_derivation,
    derivation_commutator,
    from_text,
    imag_part,
    inner_derivation,
    mul,
    real_part,
    to_text,
)

INVERSE_TOL = 1e-12
COND_LIMIT = 1e6


class NotInvertible(ArithmeticError):
    pass


# -- universal forms ----------------------------------------------------------

@dataclass(frozen=True)
class UniversalOneForm:
    """``sum a_i delta(b_i)``; the order of ``a_i`` and ``b_i`` is never changed."""

    terms: tuple = ()

    @classmethod
    def of(cls, *pairs) -> "UniversalOneForm":
        return cls(tuple((a, b) for a, b in pairs))

    def __add__(self, other: "UniversalOneForm") -> "UniversalOneForm":
        return UniversalOneForm(self.terms + other.terms)

    def scale(self, c: complex) -> "UniversalOneForm":
        return UniversalOneForm(tuple((a.scale(c), b) for a, b in self.terms))

    def left_mul(self, c: TorusElement) -> "UniversalOneForm":
        return UniversalOneForm(tuple((mul(c, a), b) for a, b in self.terms))

    def right_mul(self, c: TorusElement) -> "UniversalOneForm":
        # a delta(b) c = a delta(bc) - a b delta(c)
        out = []
        for a, b in self.terms:
            out.append((a, mul(b, c)))
            out.append((-mul(a, b), c))
        return UniversalOneForm(tuple(out))


@dataclass(frozen=True)
class UniversalTwoForm:
    """``sum a_i delta(b_i) delta(c_i)``."""

    terms: tuple = ()

    def __add__(self, other: "UniversalTwoForm") -> "UniversalTwoForm":
        return UniversalTwoForm(self.terms + other.terms)

    def scale(self, c: complex) -> "UniversalTwoForm":
        return UniversalTwoForm(tuple((a.scale(c), b, d) for a, b, d in self.terms))


def delta_lift(w: UniversalOneForm) -> UniversalTwoForm:
    """``delta(sum a delta b) = sum 1 delta(a) delta(b)``."""
    return UniversalTwoForm(tuple((TorusElement.one(a.theta), a, b) for a, b in w.terms))


def forms_to_text(w) -> str:
    """Arity-tagged record: ``form arity=<k> terms=<n>`` then element blocks separated by ``--``."""
    arity = 1 if isinstance(w, UniversalOneForm) else 2
    parts = [f"form arity={arity} terms={len(w.terms)}"]
    for term in w.terms:
        for x in term:
            parts.append(to_text(x).rstrip("\n"))
            parts.append("--")
    return "\n".join(parts) + "\n"


def forms_from_text(text: str):
    lines = text.strip("\n").split("\n")
    head = dict(tok.split("=") for tok in lines[0].split()[1:])
    arity, count = int(head["arity"]), int(head["terms"])
    blocks, cur = [], []
    for ln in lines[1:]:
        if ln == "--":
            blocks.append(from_text("\n".join(cur)))
            cur = []
        else:
            cur.append(ln)
    width = arity + 1
    if len(blocks) != width * count:
        raise ValueError("form record has the wrong number of elements")
    terms = tuple(tuple(blocks[i * width : (i + 1) * width]) for i in range(count))
    return UniversalOneForm(terms) if arity == 1 else UniversalTwoForm(terms)


# -- Dirac images -------------------------------------------------------------

def perturbed_deltas(r: TorusElement):
    """``(delta_1, delta_2)`` as DerivationSpecs for the perturbation ``d_r``."""
    return DerivationSpec.perturbed(1, real_part(r)), DerivationSpec.perturbed(2, imag_part(r))


@dataclass(frozen=True)
class PiOneImage:
    omega1: TorusElement
    omega2: TorusElement

    def right_mul(self, c: TorusElement) -> "PiOneImage":
        return PiOneImage(mul(self.omega1, c), mul(self.omega2, c))

    def blocks(self) -> tuple[TorusElement, TorusElement]:
        """(top-right, bottom-left) blocks of ``omega1 g1 + omega2 g2``."""
        return self.omega1.scale(-1j) + self.omega2, self.omega1.scale(-1j) - self.omega2

    def __mul__(self, other: "PiOneImage") -> "PiTwoImage":
        up1, lo1 = self.blocks()
        up2, lo2 = other.blocks()
        return PiTwoImage.from_diagonal(mul(up1, lo2), mul(lo1, up2))

    def is_zero(self, tol: float = 1e-12) -> bool:
        return self.omega1.max_abs() <= tol and self.omega2.max_abs() <= tol


@dataclass(frozen=True)
class PiTwoImage:
    scalar: TorusElement
    gamma12: TorusElement

    @classmethod
    def from_diagonal(cls, top: TorusElement, bottom: TorusElement) -> "PiTwoImage":
        # diag(top, bottom) = s + g diag(i, -i)
        return cls((top + bottom).scale(0.5), (top - bottom).scale(-0.5j))

    def __add__(self, other: "PiTwoImage") -> "PiTwoImage":
        return PiTwoImage(self.scalar + other.scalar, self.gamma12 + other.gamma12)

    def left_mul(self, a: TorusElement) -> "PiTwoImage":
        return PiTwoImage(mul(a, self.scalar), mul(a, self.gamma12))


def pi_one(w: UniversalOneForm, r: TorusElement) -> PiOneImage:
    """``pi(sum a delta b) = sum a [D, b]`` in the ``(g1, g2)`` components."""
    theta = r.theta
    D1, D2 = perturbed_deltas(r)
    o1, o2 = TorusElement.zero(theta), TorusElement.zero(theta)
    for a, b in w.terms:
        o1 = o1 + mul(a, D1(b))
        o2 = o2 + mul(a, D2(b))
    return PiOneImage(o1.scale(1j), o2.scale(1j))


def pi_two(w: UniversalTwoForm, r: TorusElement) -> PiTwoImage:
    """``sum a [D, b][D, c]`` by block multiplication."""
    theta = r.theta
    zero = TorusElement.zero(theta)
    out = PiTwoImage(zero, zero)
    for a, b, c in w.terms:
        one = TorusElement.one(theta)
        pb = pi_one(UniversalOneForm(((one, b),)), r)
        pc = pi_one(UniversalOneForm(((one, c),)), r)
        out = out + (pb * pc).left_mul(a)
    return out


def j1_constraint_residuals(w: UniversalOneForm, r: TorusElement) -> tuple[float, float]:
    """Residuals of ``sum delta_k(a) delta_j(b) = -sum a delta_k(delta_j(b))`` for (k, j) = (1, 2), (2, 1).

    Both follow from differentiating ``sum a delta_j(b) = 0``.
    """
    D1, D2 = perturbed_deltas(r)
    theta = r.theta
    res = []
    for Dk, Dj in ((D1, D2), (D2, D1)):
        acc = TorusElement.zero(theta)
        for a, b in w.terms:
            acc = acc + mul(Dk(a), Dj(b)) + mul(a, Dk(Dj(b)))
        res.append(acc.max_abs())
    return res[0], res[1]


def unitary_j1_element(x_m: int, x_n: int, theta: float) -> UniversalOneForm:
    """``x* delta x - m U* delta U - n V* delta V`` for ``x = U^m V^n``.

    Lies in the kernel of ``pi`` for ``r = 0`` and for every ``r`` that is a
    function of ``U`` alone when ``x_n = 0``.
    """
    x = TorusElement.monomial(theta, x_m, x_n)
    U = TorusElement.monomial(theta, 1, 0)
    V = TorusElement.monomial(theta, 0, 1)
    return UniversalOneForm.of(
        (adjoint(x), x),
        (adjoint(U).scale(-x_m), U),
        (adjoint(V).scale(-x_n), V),
    )


def random_j1_element(theta: float, rng: np.random.Generator, radius: int = 1) -> UniversalOneForm:
    """``a w c`` with ``w`` a unitary kernel element and random ``a``, ``c`` (kernel of ``pi`` at r = 0)."""
    m, n = (int(v) for v in rng.integers(-3, 4, size=2))
    w = unitary_j1_element(m, n, theta)
    a = TorusElement.random(theta, rng, radius=radius)
    c = TorusElement.random(theta, rng, radius=radius)
    return w.left_mul(a).right_mul(c)


# -- inversion ----------------------------------------------------------------

def _hermitian_square_matrix(x: TorusElement, window: BasisWindow):
    return left_multiplication(mul(x, adjoint(x)), window).entries


def condition_number(x: TorusElement, window: BasisWindow) -> float:
    """Condition of left multiplication by ``x``, via the spectrum of ``x x*`` on a window."""
    M = _hermitian_square_matrix(x, window)
    vals = OperatorMatrix(window, 0.5 * (M + M.getH()), hermitian=True).spectrum.values
    if vals[0] <= 0:
        return np.inf
    return float(np.sqrt(vals[-1] / vals[0]))


def invert_element(x: TorusElement, N: int = 8, max_N: int = 64, tol: float = INVERSE_TOL) -> TorusElement:
    """``x^-1 = x* (x x*)^-1`` with ``(x x*)^-1 1`` solved on a window.

    The window doubles until ``|x x^-1 - 1|_2 <= tol`` and ``|x^-1 x - 1|_2 <= tol``.
    """
    theta = x.theta
    one = TorusElement.one(theta)
    while N <= max_N:
        window = BasisWindow(N)
        M = _hermitian_square_matrix(x, window).tocsc()
        y = spla.spsolve(M, window.vector(one))
        inv = mul(adjoint(x), window.element(np.asarray(y), theta, prune=1e-17))
        if (mul(x, inv) - one).norm2() <= tol and (mul(inv, x) - one).norm2() <= tol:
            return inv
        N *= 2
    raise NotInvertible(f"no inverse within window N={max_N}")


def invertibility_threshold(r: TorusElement, window: BasisWindow, l_max: int = 64) -> int:
    """Smallest ``l >= 1`` with ``delta_2(V^l)`` condition number below the limit and a verified inverse."""
    _, D2 = perturbed_deltas(r)
    for l in range(1, l_max + 1):
        x = D2(TorusElement.monomial(r.theta, 0, l))
        if condition_number(x, window) >= COND_LIMIT:
            continue
        try:
            invert_element(x)
        except NotInvertible:
            continue
        return l
    raise NotInvertible(f"delta_2(V^l) badly conditioned for every l <= {l_max}")


@dataclass
class JunkProbe:
    """Kernel element built from ``V^{n0}``, ``V^l`` and ``U`` with its two commutator pieces."""

    n0: int
    l: int
    form: UniversalOneForm
    first: TorusElement
    second: TorusElement
    extra: dict = field(default_factory=dict)


def junk_probe(r: TorusElement, l: int, window: BasisWindow, n0: int | None = None) -> JunkProbe:
    """Probe for ``r = U^m``.

    ``w = delta(V^{n0}) + a2 delta(V^l) + a3 delta(U)`` with
    ``a2 = -delta_2(V^{n0}) delta_2(V^l)^-1`` and
    ``a3 = -(delta_1(V^{n0}) + a2 delta_1(V^l)) U^-1`` lies in the kernel of
    ``pi``.  Returned pieces are ``[r_1, V^{n0}]`` and
    ``delta_2(V^{n0}) delta_2(V^l)^-1 [r_1, V^l]``.
    """
    theta = r.theta
    if n0 is None:
        n0 = invertibility_threshold(r, window)
    if l < n0:
        raise ValueError(f"l={l} below the invertibility threshold n0={n0}")
    D1, D2 = perturbed_deltas(r)
    r1 = real_part(r)
    one = TorusElement.one(theta)
    U = TorusElement.monomial(theta, 1, 0)
    b1 = TorusElement.monomial(theta, 0, n0)
    b2 = TorusElement.monomial(theta, 0, l)
    ratio = mul(D2(b1), invert_element(D2(b2)))
    a2 = -ratio
    a3 = -mul(D1(b1) + mul(a2, D1(b2)), adjoint(U))
    form = UniversalOneForm.of((one, b1), (a2, b2), (a3, U))
    first = inner_derivation(r1, b1)
    second = mul(ratio, inner_derivation(r1, b2))
    return JunkProbe(n0=n0, l=l, form=form, first=first, second=second)


# -- connections --------------------------------------------------------------

@dataclass(frozen=True)
class ConnectionSpec:
    """``nabla_j xi = d_j(xi) + omega_j xi`` on the free rank-one right module."""

    omega1: TorusElement
    omega2: TorusElement

    def nabla(self, j: int, xi: TorusElement) -> TorusElement:
        om = self.omega1 if j == 1 else self.omega2
        return canonical_derivation(j, xi) + mul(om, xi)

    @classmethod
    def random(cls, theta: float, rng: np.random.Generator, radius: int = 2) -> "ConnectionSpec":
        return cls(TorusElement.random(theta, rng, radius), TorusElement.random(theta, rng, radius))


def covariant_derivative(conn: ConnectionSpec, xi: TorusElement, direction: DerivationSpec) -> TorusElement:
    """``c1 nabla_1 xi + c2 nabla_2 xi - xi r`` for ``direction = c1 d1 + c2 d2 + [r, .]``."""
    out = TorusElement.zero(xi.theta) - mul(xi, direction.r)
    if direction.c1:
        out = out + conn.nabla(1, xi).scale(direction.c1)
    if direction.c2:
        out = out + conn.nabla(2, xi).scale(direction.c2)
    return out


def curvature_two_form(conn: ConnectionSpec, da: DerivationSpec, db: DerivationSpec, xi: TorusElement) -> TorusElement:
    """``R(a, b) xi = c_[a,b] nabla xi - [c_a nabla, c_b nabla] xi``."""
    comm = derivation_commutator(da, db)
    ab = covariant_derivative(conn, covariant_derivative(conn, xi, db), da)
    ba = covariant_derivative(conn, covariant_derivative(conn, xi, da), db)
    return covariant_derivative(conn, xi, comm) - (ab - ba)


__all__ = [
    "UniversalOneForm",
    "UniversalTwoForm",
    "PiOneImage",
    "PiTwoImage",
    "ConnectionSpec",
    "JunkProbe",
    "NotInvertible",
    "delta_lift",
    "pi_one",
    "pi_two",
    "perturbed_deltas",
    "j1_constraint_residuals",
    "unitary_j1_element",
    "random_j1_element",
    "condition_number",
    "invert_element",
    "invertibility_threshold",
    "junk_probe",
    "covariant_derivative",
    "curvature_two_form",
    "forms_to_text",
    "forms_from_text",
]

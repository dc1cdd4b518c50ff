"""Smooth noncommutative torus: finitely supported Fourier series in U, V.

Elements are sums ``sum a_mn U^m V^n`` kept in normal order (all U's to the
left of all V's) over a fixed deformation parameter ``theta``, with
``UV = lam VU`` and ``lam = exp(2 pi i theta)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

DEFAULT_PRUNE = 1e-15
THETA_TOL = 1e-15


class ThetaMismatch(ValueError):
    """Raised when two operands live in algebras with different theta."""


def lam_power(theta: float, k) -> complex | np.ndarray:
    """``lam**k`` with the exponent reduced mod 1 before exponentiating."""
    frac = np.mod(np.asarray(k, dtype=float) * theta, 1.0)
    out = np.exp(2j * np.pi * frac)
    return complex(out) if out.ndim == 0 else out


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta!r}")
    return theta


@dataclass(frozen=True, eq=False)
class TorusElement:
    """An element ``sum a_mn U^m V^n`` of the smooth torus algebra.

    ``coeffs`` maps lattice points ``(m, n)`` to complex amplitudes.  The
    constructor prunes amplitudes whose modulus is below ``prune``.
    """

    theta: float
    coeffs: Mapping[tuple[int, int], complex] = field(default_factory=dict)
    prune: float = DEFAULT_PRUNE

    def __post_init__(self):
        object.__setattr__(self, "theta", _check_theta(self.theta))
        clean = {}
        for (m, n), c in self.coeffs.items():
            c = complex(c)
            if abs(c) > self.prune:
                clean[(int(m), int(n))] = c
        object.__setattr__(self, "coeffs", clean)

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, theta: float) -> "TorusElement":
        return cls(theta, {})

    @classmethod
    def one(cls, theta: float) -> "TorusElement":
        return cls(theta, {(0, 0): 1.0})

    @classmethod
    def monomial(cls, theta: float, m: int, n: int, c: complex = 1.0) -> "TorusElement":
        return cls(theta, {(m, n): c})

    @classmethod
    def from_arrays(cls, theta, ms, ns, values, prune=DEFAULT_PRUNE) -> "TorusElement":
        acc: dict[tuple[int, int], complex] = {}
        for m, n, v in zip(np.asarray(ms).tolist(), np.asarray(ns).tolist(), np.asarray(values).tolist()):
            acc[(m, n)] = acc.get((m, n), 0.0) + v
        return cls(theta, acc, prune)

    @classmethod
    def random(cls, theta: float, rng: np.random.Generator, radius: int = 2, density: float = 1.0) -> "TorusElement":
        """Random element with Gaussian amplitudes on the box ``|m|,|n| <= radius``."""
        coeffs = {}
        for m in range(-radius, radius + 1):
            for n in range(-radius, radius + 1):
                if density >= 1.0 or rng.random() < density:
                    coeffs[(m, n)] = complex(rng.normal(), rng.normal())
        return cls(theta, coeffs)

    # -- views ------------------------------------------------------------
    @property
    def lam(self) -> complex:
        return lam_power(self.theta, 1)

    @property
    def support(self) -> list[tuple[int, int]]:
        return sorted(self.coeffs)

    def arrays(self):
        keys = self.support
        if not keys:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0, complex)
        ms = np.array([k[0] for k in keys])
        ns = np.array([k[1] for k in keys])
        vals = np.array([self.coeffs[k] for k in keys], dtype=complex)
        return ms, ns, vals

    def __getitem__(self, key) -> complex:
        return self.coeffs.get(tuple(key), 0j)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __repr__(self) -> str:
        terms = ", ".join(f"{k}: {v:.6g}" for k, v in sorted(self.coeffs.items())[:8])
        more = " ..." if len(self.coeffs) > 8 else ""
        return f"TorusElement(theta={self.theta}, {{{terms}{more}}})"

    # -- linear structure -------------------------------------------------
    def _same(self, other: "TorusElement"):
        if not isinstance(other, TorusElement):
            raise TypeError(f"expected TorusElement, got {type(other).__name__}")
        if abs(self.theta - other.theta) > THETA_TOL:
            raise ThetaMismatch(f"theta mismatch: {self.theta} vs {other.theta}")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = TorusElement(self.theta, {(0, 0): other})
        self._same(other)
        acc = dict(self.coeffs)
        for k, v in other.coeffs.items():
            acc[k] = acc.get(k, 0j) + v
        return TorusElement(self.theta, acc, self.prune)

    __radd__ = __add__

    def __neg__(self):
        return TorusElement(self.theta, {k: -v for k, v in self.coeffs.items()}, self.prune)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c: complex) -> "TorusElement":
        return TorusElement(self.theta, {k: c * v for k, v in self.coeffs.items()}, self.prune)

    def __mul__(self, other):
        if isinstance(other, TorusElement):
            return mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __eq__(self, other):
        if not isinstance(other, TorusElement):
            return NotImplemented
        return abs(self.theta - other.theta) <= THETA_TOL and self.coeffs == other.coeffs

    __hash__ = None

    def norm2(self) -> float:
        """L2(tau) norm; the monomials are orthonormal."""
        return math.sqrt(sum(abs(v) ** 2 for v in self.coeffs.values()))

    def max_abs(self) -> float:
        return max((abs(v) for v in self.coeffs.values()), default=0.0)

    def allclose(self, other: "TorusElement", atol: float = 1e-12) -> bool:
        return (self - other).max_abs() <= atol

    # convenience
    def adjoint(self) -> "TorusElement":
        return adjoint(self)

    def trace(self) -> complex:
        return trace_tau(self)


def mul(a: TorusElement, b: TorusElement) -> TorusElement:
    """Product in normal order: ``(U^a V^b)(U^m V^n) = lam^(-bm) U^(a+m) V^(b+n)``."""
    a._same(b)
    if not a.coeffs or not b.coeffs:
        return TorusElement.zero(a.theta)
    am, an, av = a.arrays()
    bm, bn, bv = b.arrays()
    phase = lam_power(a.theta, -np.multiply.outer(an, bm))
    amp = np.multiply.outer(av, bv) * phase
    ms = np.add.outer(am, bm).ravel()
    ns = np.add.outer(an, bn).ravel()
    amp = amp.ravel()
    # aggregate duplicate lattice points
    keys = np.stack([ms, ns], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    out = np.zeros(len(uniq), dtype=complex)
    np.add.at(out, inv.ravel(), amp)
    return TorusElement(
        a.theta,
        {(int(m), int(n)): v for (m, n), v in zip(uniq.tolist(), out.tolist())},
        min(a.prune, b.prune),
    )


def adjoint(a: TorusElement) -> TorusElement:
    """``(c U^m V^n)^* = conj(c) lam^(-mn) U^-m V^-n``."""
    out = {}
    for (m, n), c in a.coeffs.items():
        out[(-m, -n)] = c.conjugate() * lam_power(a.theta, -m * n)
    return TorusElement(a.theta, out, a.prune)


def trace_tau(a: TorusElement) -> complex:
    return a.coeffs.get((0, 0), 0j)


def inner(a: TorusElement, b: TorusElement) -> complex:
    """``tau(a^* b)``, computed directly from amplitudes."""
    a._same(b)
    return sum(v.conjugate() * b.coeffs.get(k, 0j) for k, v in a.coeffs.items())


def canonical_derivation(j: int, a: TorusElement) -> TorusElement:
    """``d_1`` multiplies ``U^m V^n`` by m, ``d_2`` by n."""
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    return TorusElement(a.theta, {k: (k[j - 1]) * v for k, v in a.coeffs.items()}, a.prune)


def inner_derivation(r: TorusElement, a: TorusElement) -> TorusElement:
    """Commutator ``[r, a]``."""
    return mul(r, a) - mul(a, r)


def torus_action(z1: complex, z2: complex, a: TorusElement, tol: float = 1e-12) -> TorusElement:
    if abs(abs(z1) - 1.0) > tol or abs(abs(z2) - 1.0) > tol:
        raise ValueError("torus action requires unimodular arguments")
    return TorusElement(
        a.theta, {(m, n): v * z1**m * z2**n for (m, n), v in a.coeffs.items()}, a.prune
    )


def generator_action(j: int, a: TorusElement) -> TorusElement:
    """Infinitesimal generator of the torus action, fixed as ``i d_j``."""
    return canonical_derivation(j, a).scale(1j)


def is_self_adjoint(a: TorusElement, tol: float = 1e-12) -> bool:
    return (a - adjoint(a)).max_abs() <= tol


def real_part(a: TorusElement) -> TorusElement:
    return (a + adjoint(a)).scale(0.5)


def imag_part(a: TorusElement) -> TorusElement:
    return (a - adjoint(a)).scale(-0.5j)


@dataclass(frozen=True, eq=False)
class DerivationSpec:
    """The derivation ``c1 d_1 + c2 d_2 + [r, .]``.

    The constant amplitude of ``r`` acts trivially; it is stripped from ``r``
    and kept in ``r0`` so that the original element can be rebuilt.
    """

    c1: complex
    c2: complex
    r: TorusElement
    r0: complex = 0j

    def __post_init__(self):
        const = self.r.coeffs.get((0, 0), 0j)
        if const != 0:
            stripped = {k: v for k, v in self.r.coeffs.items() if k != (0, 0)}
            object.__setattr__(self, "r", TorusElement(self.r.theta, stripped, self.r.prune))
            object.__setattr__(self, "r0", complex(self.r0) + const)
        object.__setattr__(self, "c1", complex(self.c1))
        object.__setattr__(self, "c2", complex(self.c2))

    @property
    def theta(self) -> float:
        return self.r.theta

    @classmethod
    def canonical(cls, j: int, theta: float) -> "DerivationSpec":
        return cls(1.0 if j == 1 else 0.0, 1.0 if j == 2 else 0.0, TorusElement.zero(theta))

    @classmethod
    def inner(cls, r: TorusElement) -> "DerivationSpec":
        return cls(0.0, 0.0, r)

    @classmethod
    def perturbed(cls, j: int, r: TorusElement) -> "DerivationSpec":
        """``d_j + [r, .]``."""
        return cls(1.0 if j == 1 else 0.0, 1.0 if j == 2 else 0.0, r)

    def full_r(self) -> TorusElement:
        return self.r + self.r0 if self.r0 else self.r

    def coordinates(self) -> dict:
        """Coordinates in the basis ``{d_1, d_2, delta_mn}``; ``delta_mn = [U^m V^n, .]``."""
        out = {"d1": self.c1, "d2": self.c2}
        out.update({k: v for k, v in self.r.coeffs.items()})
        return out

    def __call__(self, a: TorusElement) -> TorusElement:
        out = inner_derivation(self.r, a)
        if self.c1:
            out = out + canonical_derivation(1, a).scale(self.c1)
        if self.c2:
            out = out + canonical_derivation(2, a).scale(self.c2)
        return out

    def __add__(self, other: "DerivationSpec") -> "DerivationSpec":
        return DerivationSpec(self.c1 + other.c1, self.c2 + other.c2, self.r + other.r, self.r0 + other.r0)

    def scale(self, c: complex) -> "DerivationSpec":
        return DerivationSpec(c * self.c1, c * self.c2, self.r.scale(c), c * self.r0)

    def is_zero(self, tol: float = 1e-12) -> bool:
        return abs(self.c1) <= tol and abs(self.c2) <= tol and self.r.max_abs() <= tol


def derivation_commutator(p: DerivationSpec, q: DerivationSpec) -> DerivationSpec:
    """``[p, q]`` as a derivation.

    Canonical parts commute, ``[d_j, [s, .]] = [d_j(s), .]`` and
    ``[[r, .], [s, .]] = [[r, s], .]``, so the result is always inner.
    """
    if abs(p.theta - q.theta) > THETA_TOL:
        raise ThetaMismatch(f"theta mismatch: {p.theta} vs {q.theta}")
    r = inner_derivation(p.r, q.r)
    for c, s, j in ((p.c1, q.r, 1), (p.c2, q.r, 2)):
        if c:
            r = r + canonical_derivation(j, s).scale(c)
    for c, s, j in ((q.c1, p.r, 1), (q.c2, p.r, 2)):
        if c:
            r = r - canonical_derivation(j, s).scale(c)
    return DerivationSpec(0.0, 0.0, r)


# -- serialization ----------------------------------------------------------

def to_text(a: TorusElement) -> str:
    lines = [f"theta={float(a.theta)!r}"]
    for (m, n) in a.support:
        c = a.coeffs[(m, n)]
        lines.append(f"{m} {n} {float(c.real)!r} {float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> TorusElement:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("theta="):
        raise ValueError("missing 'theta=' header line")
    theta = float(lines[0].split("=", 1)[1])
    coeffs = {}
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 4:
            raise ValueError(f"malformed entry line: {ln!r}")
        m, n = int(parts[0]), int(parts[1])
        coeffs[(m, n)] = complex(float(parts[2]), float(parts[3]))
    # no pruning on read: the text form is the ground truth
    return TorusElement(theta, coeffs, prune=0.0)


_BIN_MAGIC = b"NCT1"
_BIN_DTYPE = np.dtype([("m", "<i8"), ("n", "<i8"), ("re", "<f8"), ("im", "<f8")])


def to_bytes(a: TorusElement) -> bytes:
    rec = np.zeros(len(a), dtype=_BIN_DTYPE)
    for i, (m, n) in enumerate(a.support):
        c = a.coeffs[(m, n)]
        rec[i] = (m, n, c.real, c.imag)
    header = _BIN_MAGIC + np.array([a.theta], "<f8").tobytes() + np.array([len(a)], "<i8").tobytes()
    return header + rec.tobytes()


def from_bytes(data: bytes) -> TorusElement:
    if data[:4] != _BIN_MAGIC:
        raise ValueError("not a serialized TorusElement")
    theta = float(np.frombuffer(data[4:12], "<f8")[0])
    count = int(np.frombuffer(data[12:20], "<i8")[0])
    rec = np.frombuffer(data[20:], dtype=_BIN_DTYPE, count=count)
    coeffs = {(int(r["m"]), int(r["n"])): complex(r["re"], r["im"]) for r in rec}
    return TorusElement(theta, coeffs, prune=0.0)


# -- expression grammar -----------------------------------------------------

def parse_element(expr: str, theta: float) -> TorusElement:
    """Parse literals such as ``U+U^-1``, ``2*U^2V - 0.5i*V^-1`` or ``0``.

    A term is an optional scalar (real, ``i``, ``2i``, ``(1+2j)``) followed by
    an optional ``*`` and a word in ``U^k``/``V^k`` factors multiplied left to
    right with the algebra product.
    """
    s = expr.replace(" ", "")
    if not s:
        raise ValueError("empty element expression")
    terms: list[tuple[int, str]] = []
    sign, buf, depth = 1, "", 0
    for i, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch in "+-" and depth == 0 and buf and not buf.endswith("^") and not buf.endswith("e"):
            terms.append((sign, buf))
            sign, buf = (1 if ch == "+" else -1), ""
        elif ch in "+-" and depth == 0 and not buf:
            sign *= 1 if ch == "+" else -1
        else:
            buf += ch
    if buf:
        terms.append((sign, buf))
    out = TorusElement.zero(theta)
    for sgn, term in terms:
        out = out + _parse_term(term, theta).scale(sgn)
    return out


def _parse_term(term: str, theta: float) -> TorusElement:
    i = 0
    coef: complex = 1.0
    if term.startswith("("):
        j = term.index(")")
        coef = complex(term[1:j].replace("i", "j"))
        i = j + 1
    else:
        j = 0
        while j < len(term) and (term[j].isdigit() or term[j] in ".eE"):
            j += 1
        num = term[:j]
        if j < len(term) and term[j] in "ij" and (j + 1 == len(term) or term[j + 1] in "*UV"):
            coef = complex(0, float(num) if num else 1.0)
            j += 1
        elif num:
            coef = float(num)
        i = j
    if i < len(term) and term[i] == "*":
        i += 1
    word = TorusElement.one(theta)
    while i < len(term):
        g = term[i]
        if g not in "UV":
            raise ValueError(f"unexpected symbol {g!r} in term {term!r}")
        i += 1
        k = 1
        if i < len(term) and term[i] == "^":
            j = i + 1
            if j < len(term) and term[j] in "+-":
                j += 1
            while j < len(term) and term[j].isdigit():
                j += 1
            k = int(term[i + 1 : j])
            i = j
        factor = TorusElement.monomial(theta, k, 0) if g == "U" else TorusElement.monomial(theta, 0, k)
        word = mul(word, factor)
        if i < len(term) and term[i] == "*":
            i += 1
    return word.scale(coef)


def parse_elements(exprs: Iterable[str], theta: float) -> list[TorusElement]:
    return [parse_element(e, theta) for e in exprs]

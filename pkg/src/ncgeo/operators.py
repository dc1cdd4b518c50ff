"""Truncated matrix realizations on L2(tau).

Operators act on the window ``{U^m V^n : |m|, |n| <= N}`` ordered
lexicographically.  Images that leave the window are dropped.  Hermitian
spectra are computed block by block over the connected components of the
sparsity graph, which keeps the inner-derivation perturbations used in the
experiments (shifts along one lattice axis) cheap even at large N.
"""

from __future__ import annotations

import functools
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .torus import TorusElement, DerivationSpec, adjoint, is_self_adjoint, lam_power

HERMITIAN_RTOL = 1e-12
KERNEL_TOL = 1e-10


class OutOfWindow(ValueError):
    pass


@dataclass(frozen=True)
class BasisWindow:
    N: int

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("window cutoff must be nonnegative")

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def dim(self) -> int:
        return self.side**2

    def index(self, m: int, n: int) -> int:
        if abs(m) > self.N or abs(n) > self.N:
            raise OutOfWindow(f"({m}, {n}) outside window N={self.N}")
        return (m + self.N) * self.side + (n + self.N)

    def label(self, i: int) -> tuple[int, int]:
        q, r = divmod(int(i), self.side)
        return q - self.N, r - self.N

    @functools.cached_property
    def ms(self) -> np.ndarray:
        return np.repeat(np.arange(-self.N, self.N + 1), self.side)

    @functools.cached_property
    def ns(self) -> np.ndarray:
        return np.tile(np.arange(-self.N, self.N + 1), self.side)

    def contains(self, a: TorusElement) -> bool:
        return all(abs(m) <= self.N and abs(n) <= self.N for m, n in a.coeffs)

    def vector(self, a: TorusElement) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        for (m, n), c in a.coeffs.items():
            v[self.index(m, n)] = c
        return v

    def element(self, v: np.ndarray, theta: float, prune: float = 1e-15) -> TorusElement:
        nz = np.flatnonzero(np.abs(v) > prune)
        return TorusElement(theta, {self.label(i): complex(v[i]) for i in nz}, prune)


@dataclass(frozen=True)
class SpectralBlock:
    index: np.ndarray
    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class Spectrum:
    """Eigenpairs of a Hermitian matrix, stored per decoupled block."""

    dim: int
    blocks: tuple[SpectralBlock, ...]

    @functools.cached_property
    def values(self) -> np.ndarray:
        return np.sort(np.concatenate([b.values for b in self.blocks]))

    @property
    def vectors(self) -> np.ndarray:
        """Dense eigenvector matrix, columns ordered as ``values``."""
        vals = np.concatenate([b.values for b in self.blocks])
        Q = np.zeros((self.dim, self.dim), dtype=complex)
        col = 0
        for b in self.blocks:
            k = len(b.values)
            Q[np.ix_(b.index, np.arange(col, col + k))] = b.vectors
            col += k
        return Q[:, np.argsort(vals, kind="stable")]

    def apply(self, fn, x: np.ndarray) -> np.ndarray:
        """``f(M) x`` for a scalar function ``fn`` of the eigenvalues."""
        out = np.zeros_like(x, dtype=complex)
        for b in self.blocks:
            coef = b.vectors.conj().T @ x[b.index]
            out[b.index] = b.vectors @ (fn(b.values) * coef)
        return out

    def trace(self, fn, weight=None) -> complex:
        """``Tr(W f(M))`` where ``W`` is an optional (sparse or dense) matrix.

        Only the diagonal blocks of ``W`` contribute since ``f(M)`` is block
        diagonal.
        """
        if weight is None:
            return complex(sum(np.sum(fn(b.values)) for b in self.blocks))
        W = sp.csr_matrix(weight)
        total = 0j
        for b in self.blocks:
            Wb = W[b.index][:, b.index].toarray()
            diag = np.einsum("ik,ij,jk->k", b.vectors.conj(), Wb, b.vectors)
            total += np.sum(fn(b.values) * diag)
        return complex(total)

    def diagonal_weights(self, weight) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues with the matching ``<q_k, W q_k>``, both sorted by eigenvalue."""
        W = sp.csr_matrix(weight)
        vals, ws = [], []
        for b in self.blocks:
            Wb = W[b.index][:, b.index].toarray()
            ws.append(np.einsum("ik,ij,jk->k", b.vectors.conj(), Wb, b.vectors))
            vals.append(b.values)
        vals = np.concatenate(vals)
        ws = np.concatenate(ws)
        order = np.argsort(vals, kind="stable")
        return vals[order], ws[order]

    def residual(self, M) -> float:
        """Max-norm reconstruction residual relative to ``max|M|``."""
        A = M.toarray() if sp.issparse(M) else np.asarray(M)
        R = np.zeros_like(A, dtype=complex)
        for b in self.blocks:
            R[np.ix_(b.index, b.index)] = (b.vectors * b.values) @ b.vectors.conj().T
        scale = max(np.max(np.abs(A)), 1.0)
        return float(np.max(np.abs(A - R)) / scale)


class OperatorMatrix:
    """Complex matrix of an operator on a basis window."""

    def __init__(self, window: BasisWindow, entries, hermitian: bool = False):
        self.window = window
        self.entries = sp.csr_matrix(entries, dtype=complex)
        if self.entries.shape[0] != self.entries.shape[1]:
            raise ValueError("operator matrix must be square")
        self.hermitian = bool(hermitian)
        if self.hermitian and not self.is_hermitian():
            raise ValueError("matrix flagged Hermitian but M != M^dagger")
        self._lock = threading.Lock()
        self._spectrum: Spectrum | None = None

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dense(self) -> np.ndarray:
        return self.entries.toarray()

    def is_hermitian(self) -> bool:
        scale = max(abs(self.entries).max(), 1e-300) if self.entries.nnz else 1.0
        diff = self.entries - self.entries.getH()
        return (abs(diff).max() if diff.nnz else 0.0) <= HERMITIAN_RTOL * scale

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.window, self.entries + other.entries, self.hermitian and other.hermitian)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.window, self.entries - other.entries, self.hermitian and other.hermitian)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.window, self.entries @ other.entries)

    def scale(self, c: complex) -> "OperatorMatrix":
        herm = self.hermitian and complex(c).imag == 0
        return OperatorMatrix(self.window, self.entries * c, herm)

    def H(self) -> "OperatorMatrix":
        return OperatorMatrix(self.window, self.entries.getH(), self.hermitian)

    def apply(self, x: TorusElement) -> TorusElement:
        if not self.window.contains(x):
            raise OutOfWindow("element support leaves the window")
        return self.window.element(self.entries @ self.window.vector(x), x.theta)

    @property
    def spectrum(self) -> Spectrum:
        # read-mostly cache; the lock only guards the first insert
        if self._spectrum is None:
            with self._lock:
                if self._spectrum is None:
                    self._spectrum = _block_eigh(self.entries)
        return self._spectrum

    def to_coo_text(self) -> str:
        coo = self.entries.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"dim={self.dim} hermitian={int(self.hermitian)}"]
        for k in order:
            v = coo.data[k]
            lines.append(f"{coo.row[k]} {coo.col[k]} {float(v.real)!r} {float(v.imag)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_coo_text(cls, text: str, window: BasisWindow | None = None) -> "OperatorMatrix":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        head = dict(tok.split("=") for tok in lines[0].split())
        dim = int(head["dim"])
        rows, cols, vals = [], [], []
        for ln in lines[1:]:
            r, c, re, im = ln.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re), float(im)))
        M = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
        if window is None:
            side = int(round(np.sqrt(dim)))
            window = BasisWindow((side - 1) // 2)
        return cls(window, M, bool(int(head["hermitian"])))


def _components(M: sp.spmatrix) -> list[np.ndarray]:
    pattern = (abs(M) + abs(M.T)).tocsr()
    ncomp, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    return np.split(order, bounds)


def _block_eigh(M: sp.spmatrix) -> Spectrum:
    blocks = []
    for idx in _components(M):
        if len(idx) == 1:
            i = idx[0]
            blocks.append(SpectralBlock(idx, np.array([M[i, i].real]), np.ones((1, 1), dtype=complex)))
            continue
        A = M[idx][:, idx].toarray()
        A = 0.5 * (A + A.conj().T)
        w, Q = scipy.linalg.eigh(A)
        blocks.append(SpectralBlock(idx, w, Q))
    return Spectrum(M.shape[0], tuple(blocks))


def eig_hermitian(M: OperatorMatrix) -> Spectrum:
    if not M.hermitian:
        raise ValueError("eig_hermitian requires a matrix flagged Hermitian")
    return M.spectrum


# -- builders ---------------------------------------------------------------

def _inner_matrix(r: TorusElement, window: BasisWindow) -> sp.csr_matrix:
    """Matrix of ``[r, .]``: column (m,n) -> row (m+a, n+b) with r_ab(lam^-bm - lam^-an)."""
    N = window.N
    ms, ns = window.ms, window.ns
    rows, cols, vals = [], [], []
    for (a, b), c in r.coeffs.items():
        tm, tn = ms + a, ns + b
        ok = (np.abs(tm) <= N) & (np.abs(tn) <= N)
        src = np.flatnonzero(ok)
        coef = c * (lam_power(r.theta, -b * ms[src]) - lam_power(r.theta, -a * ns[src]))
        rows.append((tm[src] + N) * window.side + (tn[src] + N))
        cols.append(src)
        vals.append(coef)
    if not rows:
        return sp.csr_matrix((window.dim, window.dim), dtype=complex)
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(window.dim, window.dim),
        dtype=complex,
    )
    M.eliminate_zeros()
    return M


def left_multiplication(x: TorusElement, window: BasisWindow) -> OperatorMatrix:
    """Matrix of ``y -> x y`` truncated to the window."""
    N = window.N
    ms, ns = window.ms, window.ns
    rows, cols, vals = [], [], []
    for (a, b), c in x.coeffs.items():
        tm, tn = ms + a, ns + b
        ok = (np.abs(tm) <= N) & (np.abs(tn) <= N)
        src = np.flatnonzero(ok)
        rows.append((tm[src] + N) * window.side + (tn[src] + N))
        cols.append(src)
        vals.append(c * lam_power(x.theta, -b * ms[src]))
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(window.dim, window.dim),
        dtype=complex,
    ) if rows else sp.csr_matrix((window.dim, window.dim), dtype=complex)
    return OperatorMatrix(window, M)


def canonical_matrix(j: int, window: BasisWindow) -> OperatorMatrix:
    diag = window.ms if j == 1 else window.ns
    return OperatorMatrix(window, sp.diags(diag.astype(complex)), hermitian=True)


def build_derivation_matrix(spec: DerivationSpec, window: BasisWindow) -> OperatorMatrix:
    M = _inner_matrix(spec.r, window)
    if spec.c1:
        M = M + spec.c1 * sp.diags(window.ms.astype(complex))
    if spec.c2:
        M = M + spec.c2 * sp.diags(window.ns.astype(complex))
    herm = (
        complex(spec.c1).imag == 0
        and complex(spec.c2).imag == 0
        and is_self_adjoint(spec.r)
    )
    return OperatorMatrix(window, M, hermitian=herm)


def delta_matrices(r1: TorusElement, r2: TorusElement, window: BasisWindow):
    """Hermitian matrices of ``d_j + [r_j, .]`` on the window."""
    return (
        build_derivation_matrix(DerivationSpec.perturbed(1, r1), window),
        build_derivation_matrix(DerivationSpec.perturbed(2, r2), window),
    )


def build_lindbladian(r1: TorusElement, r2: TorusElement, window: BasisWindow) -> OperatorMatrix:
    """``L = -1/2 (delta_1^2 + delta_2^2)``, squaring the truncated deltas."""
    for r in (r1, r2):
        if not is_self_adjoint(r):
            raise ValueError("perturbing elements must be self-adjoint")
    D1, D2 = delta_matrices(r1, r2, window)
    L = -0.5 * (D1.entries @ D1.entries + D2.entries @ D2.entries)
    L = 0.5 * (L + L.getH())
    return OperatorMatrix(window, L, hermitian=True)


def lindbladian_split(r1: TorusElement, r2: TorusElement, window: BasisWindow):
    """``(L0, B, A)`` with ``B = -1/2 sum(d_rj^2 + d_{d_j(r_j)})`` and ``A = -sum d_rj d_j``."""
    from .torus import canonical_derivation

    d = [canonical_matrix(1, window).entries, canonical_matrix(2, window).entries]
    L0 = -0.5 * (d[0] @ d[0] + d[1] @ d[1])
    B = sp.csr_matrix((window.dim, window.dim), dtype=complex)
    A = sp.csr_matrix((window.dim, window.dim), dtype=complex)
    for j, r in ((1, r1), (2, r2)):
        R = _inner_matrix(r, window)
        B = B - 0.5 * (R @ R + _inner_matrix(canonical_derivation(j, r), window))
        A = A - R @ d[j - 1]
    return (
        OperatorMatrix(window, L0, hermitian=True),
        OperatorMatrix(window, B),
        OperatorMatrix(window, A),
    )


@dataclass
class DiracBlock:
    """``D`` on ``H (+) H`` as four window blocks, with grading ``diag(I, -I)``."""

    window: BasisWindow
    upper: sp.csr_matrix  # top-right block
    lower: sp.csr_matrix  # bottom-left block
    _full: OperatorMatrix | None = field(default=None, repr=False)

    @property
    def blocks(self):
        z = sp.csr_matrix((self.window.dim, self.window.dim), dtype=complex)
        return ((z, self.upper), (self.lower, z))

    @property
    def matrix(self) -> OperatorMatrix:
        if self._full is None:
            full = sp.bmat(self.blocks, format="csr")
            self._full = OperatorMatrix(BasisWindow(self.window.N), full, hermitian=True)
        return self._full

    @property
    def grading(self) -> sp.csr_matrix:
        n = self.window.dim
        return sp.diags(np.concatenate([np.ones(n), -np.ones(n)]).astype(complex)).tocsr()

    def square(self) -> OperatorMatrix:
        S = self.matrix.entries @ self.matrix.entries
        S = 0.5 * (S + S.getH())
        return OperatorMatrix(self.window, S, hermitian=True)


def build_dirac(r: TorusElement, window: BasisWindow) -> DiracBlock:
    """``D = [[0, d1 + i d2 + d_r], [d1 - i d2 + d_{r*}, 0]]``."""
    d1 = canonical_matrix(1, window).entries
    d2 = canonical_matrix(2, window).entries
    upper = d1 + 1j * d2 + _inner_matrix(r, window)
    lower = d1 - 1j * d2 + _inner_matrix(adjoint(r), window)
    return DiracBlock(window, sp.csr_matrix(upper), sp.csr_matrix(lower))


def dirac_square_blocks(r: TorusElement, window: BasisWindow):
    """Diagonal blocks ``(L1, L2)`` with ``D^2 = -2 diag(L1, L2)``, assembled term by term."""
    d1 = canonical_matrix(1, window).entries
    d2 = canonical_matrix(2, window).entries
    R = _inner_matrix(r, window)
    Rs = _inner_matrix(adjoint(r), window)
    L0 = -0.5 * (d1 @ d1 + d2 @ d2)
    L1 = L0 - 0.5 * (R @ Rs + d1 @ Rs + R @ d1 + 1j * (d2 @ Rs - R @ d2))
    L2 = L0 - 0.5 * (Rs @ R + d1 @ R + Rs @ d1 + 1j * (Rs @ d2 - d2 @ R))
    return OperatorMatrix(window, L1), OperatorMatrix(window, L2)


# -- semigroups -------------------------------------------------------------

def _check_negative(L: OperatorMatrix, tol: float = 1e-9):
    if not L.hermitian:
        raise ValueError("generator must be Hermitian")
    if L.spectrum.values[-1] > tol * max(1.0, abs(L.spectrum.values[0])):
        raise ValueError("generator must be negative semidefinite")


def heat_trace(L: OperatorMatrix, t: float) -> float:
    """``Tr exp(tL)`` from the cached spectrum."""
    if t <= 0:
        raise ValueError("t must be positive")
    _check_negative(L)
    vals = L.spectrum.values
    # ascending values; summing from the smallest terms keeps the order fixed
    return float(np.sum(np.exp(t * vals)))


def heat_apply(L: OperatorMatrix, t: float, x: TorusElement) -> TorusElement:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not L.window.contains(x):
        raise OutOfWindow("element support leaves the window")
    if t == 0:
        return x
    v = L.window.vector(x)
    return L.window.element(L.spectrum.apply(lambda lam: np.exp(t * lam), v), x.theta)


def resolvent_difference_trace_norm(
    r1: TorusElement, r2: TorusElement, z: complex, windows, min_distance: float = 1e-6
) -> list[float]:
    """Trace norm of ``(L - z)^-1 - (L0 - z)^-1`` for each window cutoff."""
    out = []
    zero = TorusElement.zero(r1.theta)
    for N in windows:
        w = BasisWindow(int(N))
        L = build_lindbladian(r1, r2, w)
        L0 = build_lindbladian(zero, zero, w)
        for op in (L, L0):
            if np.min(np.abs(op.spectrum.values - z)) < min_distance:
                raise ValueError(f"z={z} too close to the spectrum at N={N}")
        pattern = abs(L.entries) + abs(L0.entries)
        total = 0.0
        for idx in _components(sp.csr_matrix(pattern)):
            Ab = L.entries[idx][:, idx].toarray()
            Bb = L0.entries[idx][:, idx].toarray()
            I = np.eye(len(idx))
            diff = np.linalg.inv(Ab - z * I) - np.linalg.inv(Bb - z * I)
            total += float(np.sum(np.linalg.svd(diff, compute_uv=False)))
        out.append(total)
    return out

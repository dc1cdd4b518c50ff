"""Weyl/Moyal algebra on phase space ``R^{2d}`` sampled on a finite grid.

Fourier convention: ``f^(k) = (2 pi)^{-d} int exp(-i k.x) f(x) dx`` over
``R^{2d}`` (unitary).  The trace is ``tau(b(f)) = f^(0)`` and
``b(f) b(g) = b(f # g)`` with the twisted convolution

    (f # g)^(x) = int f^(x - y) g^(y) exp((i/2) p(x, y)) dy,
    p(x, y) = x1 y2 - x2 y1.

Grids are symmetric boxes ``[-L, L)`` with ``n`` points per axis; the dual
grid has spacing ``pi / L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .dilation import complex_stats, gaussian_block, MCEstimate

DEFAULT_L = 12.0
DEFAULT_POINTS = 256


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PhaseGrid:
    d: int = 1
    L: float = DEFAULT_L
    n: int = DEFAULT_POINTS

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.n < 4 or self.n % 2:
            raise ValueError("points per axis must be even and >= 4")

    @property
    def dims(self) -> int:
        return 2 * self.d

    @property
    def dx(self) -> float:
        return 2 * self.L / self.n

    @property
    def dk(self) -> float:
        return math.pi / self.L

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n)

    @property
    def k(self) -> np.ndarray:
        return self.dk * np.arange(-self.n // 2, self.n // 2)

    def mesh(self, fourier: bool = False):
        axis = self.k if fourier else self.x
        return np.meshgrid(*([axis] * self.dims), indexing="ij")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dims


def _to_fourier(values: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    axes = tuple(range(grid.dims))
    F = np.fft.fftshift(np.fft.fftn(values, axes=axes), axes=axes)
    # grid starts at -L: phase exp(i k L) = (-1)^j per axis
    sign = (-1.0) ** np.arange(-grid.n // 2, grid.n // 2)
    for ax in axes:
        shape = [1] * grid.dims
        shape[ax] = grid.n
        F = F * sign.reshape(shape)
    return F * (grid.dx ** grid.dims) / (2 * math.pi) ** grid.d


def _from_fourier(F: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    axes = tuple(range(grid.dims))
    sign = (-1.0) ** np.arange(-grid.n // 2, grid.n // 2)
    G = F.copy()
    for ax in axes:
        shape = [1] * grid.dims
        shape[ax] = grid.n
        G = G * sign.reshape(shape)
    v = np.fft.ifftn(np.fft.ifftshift(G, axes=axes), axes=axes)
    return v * (2 * math.pi) ** grid.d / (grid.dx ** grid.dims)


class PhaseFunction:
    """Samples of ``f`` on a phase-space grid with its Fourier transform cached."""

    def __init__(self, grid: PhaseGrid, values: np.ndarray | None = None, fourier: np.ndarray | None = None):
        if (values is None) == (fourier is None):
            raise ValueError("give exactly one of values or fourier")
        self.grid = grid
        if values is not None:
            self._values = np.asarray(values, dtype=complex)
            self._fourier = None
            shape = self._values.shape
        else:
            self._fourier = np.asarray(fourier, dtype=complex)
            self._values = None
            shape = self._fourier.shape
        if shape != grid.shape:
            raise GridMismatch(f"samples have shape {shape}, grid expects {grid.shape}")

    @classmethod
    def from_callable(cls, fn, grid: PhaseGrid) -> "PhaseFunction":
        return cls(grid, values=fn(*grid.mesh()))

    @classmethod
    def gaussian(cls, grid: PhaseGrid, center=None, width: float = 1.0, amplitude: complex = 1.0,
                 momentum=None) -> "PhaseFunction":
        """``A exp(-|x - c|^2 / (2 w^2) + i q.x)``."""
        X = grid.mesh()
        c = np.zeros(grid.dims) if center is None else np.asarray(center, float)
        q = np.zeros(grid.dims) if momentum is None else np.asarray(momentum, float)
        r2 = sum((Xi - ci) ** 2 for Xi, ci in zip(X, c))
        phase = sum(Xi * qi for Xi, qi in zip(X, q))
        return cls(grid, values=amplitude * np.exp(-r2 / (2 * width**2) + 1j * phase))

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = _from_fourier(self._fourier, self.grid)
        return self._values

    @property
    def fourier(self) -> np.ndarray:
        if self._fourier is None:
            self._fourier = _to_fourier(self._values, self.grid)
        return self._fourier

    def _check(self, other: "PhaseFunction"):
        if self.grid != other.grid:
            raise GridMismatch("phase functions live on different grids")

    def __add__(self, other):
        self._check(other)
        return PhaseFunction(self.grid, values=self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return PhaseFunction(self.grid, values=self.values - other.values)

    def scale(self, c: complex) -> "PhaseFunction":
        return PhaseFunction(self.grid, values=c * self.values)

    def integral(self) -> complex:
        return complex(np.sum(self.values) * self.grid.dx ** self.grid.dims)

    def norm2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dx ** self.grid.dims))

    def roundtrip_error(self) -> float:
        back = _from_fourier(_to_fourier(self.values, self.grid), self.grid)
        return float(np.max(np.abs(back - self.values)) / max(np.max(np.abs(self.values)), 1e-300))

    def boundary_mass(self, width: int = 2) -> float:
        """Relative L1 mass within ``width`` cells of the box boundary."""
        v = np.abs(self.values)
        inner = v[(slice(width, -width),) * self.grid.dims]
        total = v.sum()
        return float((total - inner.sum()) / total) if total else 0.0

    def natural(self) -> "PhaseFunction":
        """Involution with ``b(f)* = b(f^nat)``: ``(f^nat)^(x) = conj(f^(-x))``, i.e. ``conj(f)``."""
        return PhaseFunction(self.grid, values=np.conj(self.values))

    def to_text(self) -> str:
        g = self.grid
        lines = [f"d={g.d} L={float(g.L)!r} n={g.n}"]
        for c in self.values.ravel(order="C"):
            lines.append(f"{float(c.real)!r} {float(c.imag)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PhaseFunction":
        lines = text.strip().splitlines()
        head = dict(tok.split("=") for tok in lines[0].split())
        grid = PhaseGrid(int(head["d"]), float(head["L"]), int(head["n"]))
        vals = np.array([complex(float(a), float(b)) for a, b in (ln.split() for ln in lines[1:])])
        return cls(grid, values=vals.reshape(grid.shape))


def twisted_product(f: PhaseFunction, g: PhaseFunction, twisted: bool = True) -> PhaseFunction:
    """``f # g`` by quadrature of the twisted convolution on the dual grid.

    The symplectic phase splits as ``exp((i/2) x1 y2) exp(-(i/2) x2 y1)``:
    for each output row ``x1`` the ``y2`` sum is a 1-D convolution and the
    ``y1`` sum a phased reduction.  ``twisted=False`` drops the phase and
    returns the plain convolution, whose position form is ``(2 pi)^d f g``.
    """
    f._check(g)
    grid = f.grid
    if grid.d != 1:
        raise NotImplementedError("twisted product implemented for phase space R^2")
    n, k, dk = grid.n, grid.k, grid.dk
    F, G = f.fourier, g.fourier
    Fp = np.zeros((3 * n, n), dtype=complex)
    Fp[n : 2 * n] = F
    jy = np.arange(n)
    H = np.empty((n, n), dtype=complex)
    back = np.exp(-0.5j * np.outer(k, k)) if twisted else None  # [y1, x2]
    for iz in range(n):
        rows = Fp[iz - jy + n + n // 2]  # F at (x1 - y1, .)
        Gt = G * np.exp(0.5j * k[iz] * k)[None, :] if twisted else G
        conv = fftconvolve(rows, Gt, mode="full", axes=1)[:, n // 2 : n // 2 + n] * dk
        H[iz] = np.sum(conv * back, axis=0) * dk if twisted else conv.sum(axis=0) * dk
    return PhaseFunction(grid, fourier=H)


def weyl_trace(f: PhaseFunction) -> complex:
    """``tau(b(f)) = f^(0) = (2 pi)^{-d} int f``."""
    return f.integral() / (2 * math.pi) ** f.grid.d


@dataclass(frozen=True)
class KernelTraceResult:
    t: float
    d: int
    value: float
    error: float


def _check_t(t: float):
    if t <= 0:
        raise ValueError("t must be positive")


def _diag_gaussian_integral(t: float, dims: int, points: int) -> float:
    """``int exp(-t |x|^2 / 2) dx`` over ``R^dims`` by the trapezoid rule on ``|x_i| <= sqrt(80 / t)``."""
    R = math.sqrt(80.0 / t)
    x = np.linspace(-R, R, points)
    h = x[1] - x[0]
    one = float(np.sum(np.exp(-0.5 * t * x * x)) * h)
    return one**dims


def classical_heat_trace(f: PhaseFunction, t: float, d: int | None = None) -> KernelTraceResult:
    """``Tr(M_f exp(t Delta / 2))`` from the kernel diagonal ``f^(0) exp(-t|y|^2/2)``.

    ``f^(0)`` is a position-space quadrature; the diagonal integral uses a
    box scaled with ``t``.  The error is the change under halving both
    resolutions.
    """
    _check_t(t)
    d = f.grid.d if d is None else d
    if d != f.grid.d:
        raise GridMismatch("d does not match the grid")
    dims = 2 * d

    def at(stride, pts):
        v = f.values[(slice(None, None, stride),) * dims]
        fhat0 = np.sum(v) * (f.grid.dx * stride) ** dims / (2 * math.pi) ** d
        return (fhat0 * _diag_gaussian_integral(t, dims, pts)).real

    fine, coarse = at(1, 801), at(2, 401)
    return KernelTraceResult(t, d, float(fine), float(abs(fine - coarse)))


def nc_heat_trace(f: PhaseFunction, t: float, d: int | None = None) -> KernelTraceResult:
    """``Tr(b(f) exp(t L0))`` from the kernel diagonal on the dual grid.

    The kernel ``f^(x - y) exp(-t|y|^2/2) exp(i p(x, y)/2)`` is sampled on the
    Fourier grid; its diagonal is integrated by the rectangle rule there.
    """
    _check_t(t)
    d = f.grid.d if d is None else d
    if d != f.grid.d:
        raise GridMismatch("d does not match the grid")
    grid = f.grid
    F = f.fourier
    zero = tuple([grid.n // 2] * grid.dims)

    def at(stride):
        K = grid.mesh(fourier=True)
        sl = (slice(None, None, stride),) * grid.dims
        r2 = sum(Ki[sl] ** 2 for Ki in K)
        # diagonal x = y: phase p(x, x) = 0 and f^(x - x) = f^(0)
        diag = F[zero] * np.exp(-0.5 * t * r2)
        return (np.sum(diag) * (grid.dk * stride) ** grid.dims).real

    fine, coarse = at(1), at(2)
    # Gaussian mass beyond the dual-grid edge, per axis
    tail = grid.dims * math.erfc(abs(grid.k[0]) * math.sqrt(t / 2))
    return KernelTraceResult(t, d, float(fine), float(abs(fine - coarse) + tail * abs(fine)))


def compactness_profile(f: PhaseFunction, t: float = 1.0, points: int = 32) -> np.ndarray:
    """Singular values of ``M_f`` composed with the Fourier multiplier ``exp(-t|k|^2/2)``.

    Built on a coarse sub-grid with ``points`` per axis; only the decay trend
    is meaningful.
    """
    if f.grid.n % points:
        raise ValueError("points must divide the grid resolution")
    grid = PhaseGrid(f.grid.d, f.grid.L, points)
    stride = f.grid.n // points
    v = f.values[(slice(None, None, stride),) * grid.dims]
    size = points**grid.dims
    K = grid.mesh(fourier=True)
    mult = np.exp(-0.5 * t * sum(Ki**2 for Ki in K)).ravel()
    E = np.eye(size, dtype=complex).reshape((size,) + grid.shape)
    cols = []
    for e in E:
        smoothed = _from_fourier(mult.reshape(grid.shape) * _to_fourier(e, grid), grid)
        cols.append((v * smoothed).ravel())
    sv = np.linalg.svd(np.array(cols).T, compute_uv=False)
    return sv / max(sv[0], 1e-300)


# -- flat torus Dixmier trace ----------------------------------------------------

@dataclass
class TorusDixmierResult:
    value: float
    error: float
    ratio_value: float
    count: int
    eps: float


def torus_dixmier(fS, eps: float = 1.0, cutoff: int = 200, samples: int = 64, min_count: int = 100_000) -> TorusDixmierResult:
    """``Tr_w(M_f (-Delta_S + eps)^-1)`` on the square ``S = [-pi, pi)^2`` with normalized area.

    ``fS`` is a callable on ``S`` or a square array of periodic samples.
    Diagonal weights in the Fourier eigenbasis are the mean of ``f``; the
    ordered partial sums are fitted against ``log k`` (value) and also
    divided by ``log k`` at the cutoff (``ratio_value``).
    """
    from .heat import log_slope

    if eps <= 0:
        raise ValueError("eps must be positive")
    count = (2 * cutoff + 1) ** 2
    if count < min_count:
        raise ValueError(f"cutoff {cutoff} gives {count} eigenvalues; need at least {min_count}")
    if callable(fS):
        x = -math.pi + 2 * math.pi * np.arange(samples) / samples
        X, Y = np.meshgrid(x, x, indexing="ij")
        vals = np.asarray(fS(X, Y), dtype=complex)
    else:
        vals = np.asarray(fS, dtype=complex)
    mean = complex(vals.mean())
    k = np.arange(-cutoff, cutoff + 1)
    mu = (k[:, None] ** 2 + k[None, :] ** 2).ravel().astype(float)
    # the eigenbasis is complete only inside the inscribed disc
    mu = np.sort(mu)
    w = np.full(mu.shape, mean)
    value, err = log_slope(mu, w, cutoff=float(cutoff**2), shift=-eps)
    inside = mu <= cutoff**2
    partial = np.sum((w[inside] / (mu[inside] + eps)).real)
    ratio = float(partial / math.log(int(inside.sum())))
    return TorusDixmierResult(value, err, ratio, int(inside.sum()), eps)


# -- Weyl flow -------------------------------------------------------------------

def weyl_flow_mc(f: PhaseFunction, t: float, M: int, seed: int, points: int = 16, workers: int = 1) -> MCEstimate:
    """Monte Carlo ``E j_t(b(f))`` mode by mode on a coarse dual grid.

    Pathwise ``f^(x) -> exp(-i (w1 x1 + w2 x2)) f^(x)``; the target is the heat
    multiplier ``exp(-t |x|^2 / 2) f^(x)``.
    """
    grid = f.grid
    if grid.d != 1:
        raise NotImplementedError("flow sampled for phase space R^2")
    if t < 0:
        raise ValueError("t must be nonnegative")
    stride = grid.n // points
    idx = np.arange(-points // 2, points // 2) * stride + grid.n // 2
    k = grid.k[idx]
    F = f.fourier[np.ix_(idx, idx)]
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    k1, k2, fh = K1.ravel(), K2.ravel(), F.ravel()
    keys = [(float(a), float(b)) for a, b in zip(k1, k2)]
    target = fh * np.exp(-0.5 * t * (k1**2 + k2**2))
    if t == 0:
        return MCEstimate(dict(zip(keys, fh.astype(complex))), dict.fromkeys(keys, 0.0),
                          dict(zip(keys, target)), M, seed)
    z = gaussian_block(seed, M, 2, workers=workers) * math.sqrt(t)
    means, ses = np.empty(len(keys), complex), np.empty(len(keys))
    step = 64
    for s in range(0, len(keys), step):
        sl = slice(s, s + step)
        X = fh[None, sl] * np.exp(-1j * (z[:, :1] * k1[None, sl] + z[:, 1:] * k2[None, sl]))
        means[sl], ses[sl] = complex_stats(X)
    return MCEstimate(
        {kk: complex(m) for kk, m in zip(keys, means)},
        {kk: float(s) for kk, s in zip(keys, ses)},
        {kk: complex(tg) for kk, tg in zip(keys, target)},
        M,
        seed,
    )


__all__ = [
    "PhaseGrid",
    "PhaseFunction",
    "KernelTraceResult",
    "TorusDixmierResult",
    "GridMismatch",
    "twisted_product",
    "weyl_trace",
    "classical_heat_trace",
    "nc_heat_trace",
    "compactness_profile",
    "torus_dixmier",
    "weyl_flow_mc",
]

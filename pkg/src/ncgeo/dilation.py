"""Brownian dilation of the torus heat semigroup.

A planar Brownian path drives the torus action:
``j_t(U^m V^n) = exp(i (m w1(t) + n w2(t))) U^m V^n``.  Since
``E exp(i k w(t)) = exp(-k^2 t / 2)`` the expectation of ``j_t`` is
``exp(t L0)``.  Paths come from a counter-based generator keyed by
``(seed, chunk)`` so any path is reproducible no matter how the work is split.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .operators import BasisWindow, build_lindbladian, heat_apply
from .torus import DerivationSpec, TorusElement, adjoint, canonical_derivation, is_self_adjoint, mul

CHUNK = 1024


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + int(chunk)))


def gaussian_block(seed: int, M: int, width: int, chunk: int = CHUNK, workers: int = 1) -> np.ndarray:
    """``(M, width)`` standard normals; row i depends only on ``(seed, i)``."""
    if M < 1 or width < 1:
        raise ValueError("sizes must be positive")
    starts = list(range(0, M, chunk))

    def one(k):
        rows = min(chunk, M - starts[k])
        return _chunk_rng(seed, k).standard_normal((chunk, width))[:rows]

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(one, range(len(starts))))
    else:
        parts = [one(k) for k in range(len(starts))]
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class BrownianPath:
    """``paths`` independent planar paths on ``steps`` equal steps up to ``T``."""

    T: float
    steps: int
    seed: int
    dw1: np.ndarray = field(repr=False)
    dw2: np.ndarray = field(repr=False)

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def paths(self) -> int:
        return self.dw1.shape[0]

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``(w1(t), w2(t))`` for every path; linear between grid times."""
        if t < 0 or t > self.T * (1 + 1e-12):
            raise ValueError(f"t={t} outside [0, {self.T}]")
        s = min(t / self.dt, self.steps)
        k = int(math.floor(s + 1e-12))
        frac = s - k
        out = []
        for dw in (self.dw1, self.dw2):
            w = dw[:, :k].sum(axis=1) if k else np.zeros(self.paths)
            if frac > 1e-12 and k < self.steps:
                w = w + frac * dw[:, k]
            out.append(w)
        return out[0], out[1]


def sample_brownian(T: float, steps: int, seed: int, paths: int = 1, workers: int = 1) -> BrownianPath:
    if T <= 0 or steps < 1 or paths < 1:
        raise ValueError("need T > 0, steps >= 1 and paths >= 1")
    z = gaussian_block(seed, paths, 2 * steps, workers=workers) * math.sqrt(T / steps)
    return BrownianPath(T, steps, seed, z[:, :steps], z[:, steps:])


def classical_flow(a: TorusElement, path: BrownianPath, t: float, index: int = 0) -> TorusElement:
    """``j_t(a)`` along path ``index``."""
    w1, w2 = path.at(t)
    p1, p2 = float(w1[index]), float(w2[index])
    return TorusElement(
        a.theta,
        {(m, n): c * np.exp(1j * (m * p1 + n * p2)) for (m, n), c in a.coeffs.items()},
        a.prune,
    )


@dataclass
class MCEstimate:
    """Per-coefficient Monte Carlo means with standard errors and targets."""

    mean: dict
    stderr: dict
    target: dict
    M: int
    seed: int

    @property
    def zscores(self) -> dict:
        out = {}
        for k, mu in self.mean.items():
            diff = abs(mu - self.target[k])
            se = self.stderr[k]
            out[k] = diff / se if se > 0 else (0.0 if diff < 1e-14 else math.inf)
        return out

    def within(self, sigmas: float = 4.0) -> bool:
        return all(z <= sigmas for z in self.zscores.values())

    def record(self) -> list[dict]:
        z = self.zscores
        rows = []
        for k in sorted(self.mean):
            mu, tg = self.mean[k], self.target[k]
            rows.append({
                "mode": list(k),
                "mean_re": mu.real, "mean_im": mu.imag,
                "stderr": self.stderr[k],
                "target_re": tg.real, "target_im": tg.imag,
                "z": z[k],
            })
        return rows


def complex_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and standard errors ``sqrt(sum |X - mean|^2 / (M - 1)) / sqrt(M)``."""
    M = X.shape[0]
    mean = X.mean(axis=0)
    if M < 2:
        return mean, np.zeros(mean.shape)
    var = np.sum(np.abs(X - mean) ** 2, axis=0) / (M - 1)
    return mean, np.sqrt(var / M)


def mc_expectation(a: TorusElement, t: float, M: int, seed: int, window: BasisWindow | None = None,
                   workers: int = 1) -> MCEstimate:
    """Monte Carlo ``E j_t(a)`` against ``exp(t L0) a``.

    Only ``w(t)`` enters, so each path is a single Gaussian step.  With a
    window the target comes from the truncated heat semigroup, otherwise
    from the exact multipliers ``exp(-t (m^2 + n^2) / 2)``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    keys = a.support
    if window is not None:
        zero = TorusElement.zero(a.theta)
        target_el = heat_apply(build_lindbladian(zero, zero, window), t, a)
        target = {k: target_el[k] for k in keys}
    else:
        target = {(m, n): a.coeffs[(m, n)] * math.exp(-0.5 * t * (m * m + n * n)) for m, n in keys}
    if t == 0:
        return MCEstimate({k: a.coeffs[k] for k in keys}, {k: 0.0 for k in keys}, target, M, seed)
    z = gaussian_block(seed, M, 2, workers=workers) * math.sqrt(t)
    ms = np.array([k[0] for k in keys], dtype=float)
    ns = np.array([k[1] for k in keys], dtype=float)
    cs = np.array([a.coeffs[k] for k in keys])
    X = cs[None, :] * np.exp(1j * (z[:, :1] * ms[None, :] + z[:, 1:] * ns[None, :]))
    mean, se = complex_stats(X)
    return MCEstimate(
        {k: complex(mean[i]) for i, k in enumerate(keys)},
        {k: float(se[i]) for i, k in enumerate(keys)},
        target,
        M,
        seed,
    )


def mc_error_scaling(a: TorusElement, t: float, Ms=(100, 400, 1600, 6400), replicates: int = 50,
                     seed: int = 0) -> tuple[float, list[float]]:
    """Fitted exponent ``p`` in ``rms error ~ M^-p`` over independent replicates."""
    rms = []
    for i, M in enumerate(Ms):
        errs = []
        for rep in range(replicates):
            est = mc_expectation(a, t, M, seed=seed * 1_000_003 + i * 10_007 + rep)
            errs.append(sum(abs(est.mean[k] - est.target[k]) ** 2 for k in est.mean))
        rms.append(math.sqrt(np.mean(errs)))
    slope = np.polyfit(np.log(Ms), np.log(rms), 1)[0]
    return float(-slope), rms


# -- structure relations --------------------------------------------------------

def lindbladian_element(r1: TorusElement, r2: TorusElement, x: TorusElement) -> TorusElement:
    """``L(x) = -1/2 (delta_1^2 + delta_2^2)(x)`` in exact coefficient arithmetic."""
    D1, D2 = DerivationSpec.perturbed(1, r1), DerivationSpec.perturbed(2, r2)
    return (D1(D1(x)) + D2(D2(x))).scale(-0.5)


def cocycle_residual(r1: TorusElement, r2: TorusElement, x: TorusElement, y: TorusElement) -> TorusElement:
    """``L(x* y) - L(x)* y - x* L(y) - sum_j delta_j(x)* delta_j(y)``."""
    if not (is_self_adjoint(r1) and is_self_adjoint(r2)):
        raise ValueError("perturbing elements must be self-adjoint")
    D1, D2 = DerivationSpec.perturbed(1, r1), DerivationSpec.perturbed(2, r2)
    xs = adjoint(x)
    out = (
        lindbladian_element(r1, r2, mul(xs, y))
        - mul(adjoint(lindbladian_element(r1, r2, x)), y)
        - mul(xs, lindbladian_element(r1, r2, y))
    )
    for D in (D1, D2):
        out = out - mul(adjoint(D(x)), D(y))
    return out


def structure_derivation_residual(x: TorusElement, y: TorusElement) -> float:
    """Max residual of ``delta0(xy) = delta0(x) y + x delta0(y)`` with ``delta0 = d1 (+) d2``."""
    worst = 0.0
    for j in (1, 2):
        lhs = canonical_derivation(j, mul(x, y))
        rhs = mul(canonical_derivation(j, x), y) + mul(x, canonical_derivation(j, y))
        worst = max(worst, (lhs - rhs).max_abs())
    return worst


__all__ = [
    "BrownianPath",
    "MCEstimate",
    "sample_brownian",
    "gaussian_block",
    "classical_flow",
    "complex_stats",
    "mc_expectation",
    "mc_error_scaling",
    "lindbladian_element",
    "cocycle_residual",
    "structure_derivation_residual",
]

"""Small-time heat-trace asymptotics on the torus algebra.

Volume and integrated scalar curvature are read off ``Tr exp(tL)`` as
``t -> 0+``: at d = 2, ``V = lim t Tr e^{tL}`` and
``s = lim (Tr e^{tL} - V/t) / 6``.  Limits are taken from samples on a
geometric t-grid by eliminating the correction terms Richardson-style.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .operators import (
    BasisWindow,
    KERNEL_TOL,
    OperatorMatrix,
    _inner_matrix,
    build_dirac,
    build_lindbladian,
    left_multiplication,
    lindbladian_split,
)
from .torus import TorusElement, is_self_adjoint

DIM = 2
TAIL_EPS = 1e-16


class InadequateWindow(ValueError):
    """The basis window is too small for the smallest requested time."""


class LimitNotResolved(RuntimeError):
    pass


@dataclass(frozen=True)
class TGrid:
    """Geometric grid ``t_k = t_max * ratio**k`` down to ``t_min``."""

    t_max: float = 0.64
    ratio: float = 0.5
    t_min: float = 0.04

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if not 0 < self.t_min <= self.t_max:
            raise ValueError("need 0 < t_min <= t_max")

    @property
    def times(self) -> np.ndarray:
        count = int(math.floor(math.log(self.t_min / self.t_max) / math.log(self.ratio) + 1e-9)) + 1
        return self.t_max * self.ratio ** np.arange(count)

    def as_dict(self) -> dict:
        return {"t_max": self.t_max, "ratio": self.ratio, "t_min": self.t_min}


@dataclass
class ExtrapolationResult:
    value: float
    error_estimate: float
    model: dict
    samples: list
    resolved: bool = True
    extrapolants: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {
            "inputs": self.inputs,
            "samples": [{"t": t, "y": y} for t, y in self.samples],
            "model": self.model,
            "extrapolants": self.extrapolants,
            "value": self.value,
            "error": self.error_estimate,
            "resolved": self.resolved,
        }


INTEGER_POWERS = (0.0, 1.0, 2.0, 3.0)
HALF_POWERS = (0.0, 0.5, 1.0, 1.5)


def extrapolate(ts, ys, powers=INTEGER_POWERS, noise_floor: float = 1e-11) -> ExtrapolationResult:
    """Limit of ``y(t)`` as ``t -> 0+`` for ``y ~ sum_p a_p t^p``.

    Each run of ``len(powers)`` consecutive samples is interpolated exactly
    and the constant term kept; the runs move toward small t so the last
    extrapolant is the most accurate.  The error estimate is the larger of
    the last two extrapolants' gap and the least-squares residual.

    Samples that have already settled (the last two differ by less than the
    extrapolation gap, as happens when the corrections are exponentially
    small) are reported directly instead.
    """
    ts = np.asarray(ts, dtype=float)
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(-ts)
    ts, ys = ts[order], ys[order]
    p = min(len(powers), len(ts))
    pw = np.asarray(powers[:p])
    X = ts[:, None] ** pw[None, :]
    extrap = []
    for j in range(len(ts) - p + 1):
        coef = np.linalg.solve(X[j : j + p], ys[j : j + p])
        extrap.append(float(coef[0]))
    coef, *_ = np.linalg.lstsq(X, ys, rcond=None)
    resid = float(np.max(np.abs(X @ coef - ys))) if len(ts) > p else 0.0
    scale = max(1.0, abs(extrap[-1]))
    diffs = np.abs(np.diff(extrap))
    gap = float(diffs[-1]) if len(diffs) else resid
    resolved = True
    if len(diffs) >= 2:
        big = diffs > noise_floor * scale
        # a gap that fails to shrink toward small t means the model is not converging
        if big[-1] and diffs[-1] > diffs[-2]:
            resolved = False
    err = max(gap, resid, noise_floor * scale)
    value, kind = extrap[-1], "richardson"
    if len(ts) >= 2:
        step = float(abs(ys[-1] - ys[-2]))
        if step < err:
            value, kind, err, resolved = float(ys[-1]), "plateau", max(step, noise_floor * scale), True
    return ExtrapolationResult(
        value=value,
        error_estimate=err,
        model={"kind": kind, "powers": pw.tolist(), "coefficients": coef.tolist(), "residual": resid},
        samples=list(zip(ts.tolist(), ys.tolist())),
        resolved=resolved,
        extrapolants=extrap,
    )


def check_window(window: BasisWindow, t_min: float, scale: float = 0.5):
    """Require ``exp(-scale N^2 t_min) < 1e-16`` for generators with spectrum ``~ scale (m^2+n^2)``."""
    if math.exp(-scale * window.N**2 * t_min) >= TAIL_EPS:
        need = math.ceil(math.sqrt(-math.log(TAIL_EPS) / (scale * t_min)))
        raise InadequateWindow(
            f"window N={window.N} too small for t_min={t_min}; need N >= {need} or a larger t_min"
        )


def _inputs(r1, r2, grid, window, **extra) -> dict:
    from .torus import to_text

    d = {
        "theta": r1.theta,
        "r1": to_text(r1),
        "r2": to_text(r2),
        "N": window.N,
        "grid": grid.as_dict(),
    }
    d.update(extra)
    return d


def _require_sa(*rs):
    for r in rs:
        if not is_self_adjoint(r):
            raise ValueError("perturbing elements must be self-adjoint")


def volume_estimate(r1: TorusElement, r2: TorusElement, grid: TGrid, window: BasisWindow, generator_scale: float = 1.0) -> ExtrapolationResult:
    """``lim t^{d/2} Tr exp(t c L)`` for the generator ``c L`` (c = generator_scale)."""
    _require_sa(r1, r2)
    check_window(window, grid.t_min * generator_scale)
    L = build_lindbladian(r1, r2, window)
    ts = grid.times
    ys = [t ** (DIM / 2) * float(np.sum(np.exp(generator_scale * t * L.spectrum.values))) for t in ts]
    res = extrapolate(ts, ys)
    res.inputs = _inputs(r1, r2, grid, window, generator_scale=generator_scale)
    return res


def curvature_estimate(r1: TorusElement, r2: TorusElement, V: float, grid: TGrid, window: BasisWindow) -> ExtrapolationResult:
    """``(1/6) lim t^{d/2-1} (Tr exp(tL) - t^{-d/2} V)``."""
    _require_sa(r1, r2)
    check_window(window, grid.t_min)
    L = build_lindbladian(r1, r2, window)
    ts = grid.times
    ys = [
        t ** (DIM / 2 - 1) * (float(np.sum(np.exp(t * L.spectrum.values))) - t ** (-DIM / 2) * V) / 6.0
        for t in ts
    ]
    res = extrapolate(ts, ys)
    res.inputs = _inputs(r1, r2, grid, window, V=V)
    return res


@dataclass
class ShiftResult(ExtrapolationResult):
    cancellation: list = field(default_factory=list)


def curvature_shift(r1: TorusElement, r2: TorusElement, grid: TGrid, window: BasisWindow) -> ShiftResult:
    """``(1/12) lim t Tr((d_{r1}^2 + d_{r2}^2) exp(t L0))``.

    Also records ``Tr(A exp(t L0))`` at every grid point, with
    ``A = -(d_{r1} d_1 + d_{r2} d_2)``; it vanishes identically.
    """
    _require_sa(r1, r2)
    check_window(window, grid.t_min)
    zero = TorusElement.zero(r1.theta)
    L0 = build_lindbladian(zero, zero, window)
    lam0 = L0.entries.diagonal().real
    R1 = _inner_matrix(r1, window)
    R2 = _inner_matrix(r2, window)
    W = (R1 @ R1 + R2 @ R2).diagonal().real
    _, _, A = lindbladian_split(r1, r2, window)
    Adiag = A.entries.diagonal()
    ts = grid.times
    ys, cancel = [], []
    for t in ts:
        heat = np.exp(t * lam0)
        ys.append(t * float(np.sum(W * heat)) / 12.0)
        cancel.append(abs(complex(np.sum(Adiag * heat))))
    base = extrapolate(ts, ys)
    res = ShiftResult(**base.__dict__, cancellation=cancel)
    res.inputs = _inputs(r1, r2, grid, window)
    return res


def theta_sums(theta: float, t: float) -> tuple[float, float]:
    """``(sum_{m in Z} e^{-m^2 t/2}, sum_{n>=1} sin^2(pi theta n) e^{-n^2 t/2})``."""
    if t <= 0:
        raise ValueError("t must be positive")
    cutoff = int(math.ceil(math.sqrt(2.0 * (-math.log(TAIL_EPS) + 4.0) / t))) + 1
    n = np.arange(1, cutoff + 1, dtype=float)
    g = np.exp(-0.5 * t * n * n)
    frac = np.mod(theta * n, 1.0)
    return 1.0 + 2.0 * float(np.sum(g)), float(np.sum(np.sin(np.pi * frac) ** 2 * g))


def equidistribution_check(theta: float, t: float) -> float:
    """Mean of ``sin^2(pi X_t)`` with ``X_t`` uniform on ``{k theta mod 1 : 1 <= k <= floor(sqrt(2/t))}``."""
    if not 0 < t < 2:
        raise ValueError("t must lie in (0, 2)")
    K = int(math.floor(math.sqrt(2.0 / t)))
    k = np.arange(1, K + 1, dtype=float)
    return float(np.mean(np.sin(np.pi * np.mod(k * theta, 1.0)) ** 2))


def shift_lattice_sum(theta: float, t: float) -> float:
    """First-order shift integrand for ``r1 = U + U^-1, r2 = 0`` from theta sums.

    The diagonal of ``d_r^2`` on ``U^m V^n`` is ``8 sin^2(pi theta n)``, so
    ``t Tr(d_r^2 e^{tL0}) / 12 = t S0 (16 S1) / 12``.
    """
    s0, s1 = theta_sums(theta, t)
    return t * s0 * 16.0 * s1 / 12.0


# -- Dixmier traces -----------------------------------------------------------

@dataclass
class DixmierEstimate:
    heat_value: float
    heat_error: float
    log_value: float
    log_error: float
    gap: float
    resolvent_values: dict = field(default_factory=dict)
    heat: ExtrapolationResult | None = None

    def record(self) -> dict:
        return {
            "heat_value": self.heat_value,
            "heat_error": self.heat_error,
            "log_value": self.log_value,
            "log_error": self.log_error,
            "gap": self.gap,
            "resolvent_values": {str(k): v for k, v in self.resolvent_values.items()},
            "heat": self.heat.record() if self.heat else None,
        }


def log_slope(values: np.ndarray, weights: np.ndarray, cutoff: float, shift: complex | None = None,
              kernel_tol: float = KERNEL_TOL, decades: float = 3.0) -> tuple[float, float]:
    """Coefficient of ``log k`` in the ordered partial sums ``sum_{j<=k} w_j / mu_j``.

    ``mu`` are the eigenvalues (kernel removed when ``shift`` is None, else
    the weights use ``1/(mu - shift)``).  The slope is fitted against
    ``log k`` at the ends of eigenvalue shells over the last ``decades``
    e-folds of k below ``cutoff``; the error is the spread of slopes fitted
    on the two halves of that range.
    """
    mu = np.asarray(values, dtype=float)
    w = np.asarray(weights)
    if shift is None:
        keep = np.abs(mu) > kernel_tol
        mu, w = mu[keep], w[keep]
        terms = (w / mu).real
    else:
        terms = (w / (mu - shift)).real
    keep = mu <= cutoff
    mu, terms = mu[keep], terms[keep]
    if len(mu) < 50:
        raise ValueError("too few eigenvalues below the completeness cutoff")
    S = np.cumsum(terms)
    k = np.arange(1, len(mu) + 1, dtype=float)
    ends = np.r_[np.flatnonzero(np.diff(mu) > 1e-9 * max(1.0, mu[-1])), len(mu) - 1]
    lk, Sk = np.log(k[ends]), S[ends]
    lo = lk[-1] - decades
    sel = lk >= lo
    slope = np.polyfit(lk[sel], Sk[sel], 1)[0]
    mid = lo + decades / 2
    a = lk[sel] <= mid
    s1 = np.polyfit(lk[sel][a], Sk[sel][a], 1)[0] if a.sum() > 3 else slope
    s2 = np.polyfit(lk[sel][~a], Sk[sel][~a], 1)[0] if (~a).sum() > 3 else slope
    return float(slope), float(abs(s1 - s2))


def _dixmier_from_operator(T: OperatorMatrix, weight, grid: TGrid, cutoff: float, zs=(), factor: float = 1.0) -> DixmierEstimate:
    spec = T.spectrum
    mu, w = spec.diagonal_weights(weight)
    nonker = np.abs(mu) > KERNEL_TOL
    ts = grid.times
    ys = [factor * t * float(np.sum((w[nonker] * np.exp(-t * mu[nonker])).real)) for t in ts]
    heat = extrapolate(ts, ys)
    lv, le = log_slope(mu, w, cutoff)
    lv, le = factor * lv, factor * le
    rv = {}
    for z in zs:
        v, e = log_slope(mu, w, cutoff, shift=z)
        rv[z] = (factor * v, factor * e)
    return DixmierEstimate(
        heat_value=heat.value,
        heat_error=heat.error_estimate,
        log_value=lv,
        log_error=le,
        gap=abs(heat.value - lv),
        resolvent_values=rv,
        heat=heat,
    )


def dixmier_heat(a: TorusElement, r1: TorusElement, r2: TorusElement, grid: TGrid, window: BasisWindow, zs=(-1.0, -4.0)) -> DixmierEstimate:
    """``Tr_w(a (-2 L)^-1 P)``, one Dirac-square block.

    Heat side: ``lim t Tr(a exp(2tL) P)``.  Partial-sum side: log slope of
    the ordered sums over the eigenbasis.  ``zs`` adds the resolvent forms
    ``(-2L - z)^-1``.
    """
    _require_sa(r1, r2)
    if not window.contains(a):
        raise ValueError("support of a leaves the window")
    check_window(window, grid.t_min, scale=1.0)
    L = build_lindbladian(r1, r2, window)
    T = L.scale(-2.0)
    Wa = left_multiplication(a, window).entries
    est = _dixmier_from_operator(T, Wa, grid, cutoff=window.N**2, zs=zs)
    if est.heat:
        est.heat.inputs = _inputs(r1, r2, grid, window, a=str(a))
    return est


def volume_form(a: TorusElement, r: TorusElement, grid: TGrid, window: BasisWindow, zs=(-1.0, -4.0)) -> DixmierEstimate:
    """``v(a) = 1/2 Tr_w(a |D|^-2 P)`` for ``D = D0 + [[0, d_r], [d_{r*}, 0]]``.

    ``|D|^2 = D^2``; both diagonal blocks of ``D^2`` contribute, so the
    value is half the sum over the two copies of ``L2(tau)``.
    """
    if not window.contains(a):
        raise ValueError("support of a leaves the window")
    check_window(window, grid.t_min, scale=1.0)
    D = build_dirac(r, window)
    T = D.square()
    La = left_multiplication(a, window).entries
    Wa = sp.block_diag([La, La], format="csr")
    est = _dixmier_from_operator(T, Wa, grid, cutoff=window.N**2, zs=zs, factor=0.5)
    if est.heat:
        est.heat.inputs = {"theta": r.theta, "r": str(r), "a": str(a), "N": window.N, "grid": grid.as_dict()}
    return est


def volume_difference_profile(r1, r2, ts, window: BasisWindow) -> tuple[np.ndarray, float]:
    """``|t Tr(e^{tL} - e^{tL0})|`` on ``ts`` and the fitted power of t.

    Returns ``inf`` for the power when the difference is below 1e-10
    everywhere (identically invariant within rounding).
    """
    zero = TorusElement.zero(r1.theta)
    L = build_lindbladian(r1, r2, window)
    L0 = build_lindbladian(zero, zero, window)
    ts = np.asarray(ts, float)
    d = np.array([abs(t * (np.sum(np.exp(t * L.spectrum.values)) - np.sum(np.exp(t * L0.spectrum.values)))) for t in ts])
    if np.all(d < 1e-10):
        return d, math.inf
    power = np.polyfit(np.log(ts), np.log(np.maximum(d, 1e-300)), 1)[0]
    return d, float(power)


__all__ = [
    "TGrid",
    "ExtrapolationResult",
    "DixmierEstimate",
    "InadequateWindow",
    "extrapolate",
    "INTEGER_POWERS",
    "HALF_POWERS",
    "check_window",
    "volume_estimate",
    "curvature_estimate",
    "curvature_shift",
    "theta_sums",
    "equidistribution_check",
    "shift_lattice_sum",
    "dixmier_heat",
    "volume_form",
    "log_slope",
    "volume_difference_profile",
]

"""Gaussian quasi-maximum-likelihood fits of the nuisance parameters.

``fit_psi`` estimates ``psi = (rho, theta)`` with the segment levels held
fixed; ``fit_gamma0`` estimates the segment levels with ``psi`` fixed.  The
Gaussian criterion is used whatever the true noise law.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, VolatilityFloorError
from .model_core import CharnSpec, LagState, Segmentation, TimeSeries, evaluate

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

# Lower/upper bounds applied by projection during the simplex search.
_BIG = 1e6


@dataclass(frozen=True)
class FitResult:
    psi_hat: NDArray[np.float64]
    gamma0_hat: NDArray[np.float64]
    neg_loglik: float
    converged: bool
    iterations: int
    projected: bool = False
    degenerate: bool = False
    spec: CharnSpec | None = None


def default_bounds(spec: CharnSpec) -> list[tuple[float, float]]:
    """Box constraints keeping ``V_theta`` positive and the exponentials bounded."""
    rho = {
        "constant": [],
        "linear_ar": [(-_BIG, _BIG)] * spec.p,
        "expar": [(-_BIG, _BIG), (-_BIG, _BIG), (0.0, _BIG)],
    }[spec.trend]
    theta = {
        "constant": [(max(spec.vol_floor, 1e-6), _BIG)],
        "exparch": [(max(spec.vol_floor, 1e-6), _BIG), (0.0, _BIG), (0.0, _BIG)],
    }[spec.vol]
    return rho + theta


def neg_loglik(
    series: TimeSeries,
    spec: CharnSpec,
    gamma: ArrayLike,
    seg: Segmentation,
    init: LagState | ArrayLike | None = None,
) -> float:
    """Gaussian conditional criterion ``sum_t log V + eps_t^2 / 2``."""
    g = np.asarray(gamma, dtype=np.float64)
    ev = evaluate(series, spec, init)
    lab = seg.labels()[ev.valid]
    v = ev.vol[ev.valid]
    eps = (series.values[ev.valid] - ev.trend[ev.valid] - g[lab]) / v
    return float(np.sum(np.log(v) + 0.5 * eps * eps))


def _project(psi: NDArray, bounds: list[tuple[float, float]]) -> NDArray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return np.clip(psi, lo, hi)


def fit_psi(
    series: TimeSeries,
    spec: CharnSpec,
    seg: Segmentation,
    gamma_init: ArrayLike | None = None,
    bounds: list[tuple[float, float]] | None = None,
    restarts: int = 3,
    seed: int = 0,
    max_iter: int | None = None,
    init: LagState | ArrayLike | None = None,
) -> FitResult:
    """Fit ``psi`` by Nelder-Mead on the Gaussian quasi-likelihood.

    The parameters carried by ``spec`` are the first starting point; the other
    ``restarts - 1`` starts are random perturbations drawn from ``seed``.
    Segment levels stay at ``gamma_init`` during the search (default: their
    estimate under the starting parameters).
    Points outside ``bounds`` are projected back before evaluation.  The
    segment levels are then re-estimated with :func:`fit_gamma0`.
    """
    if spec.psi.size == 0:
        raise ConfigError("the model has no nuisance parameter to fit")
    if series.n < 10 * spec.psi.size:
        raise ConfigError(f"need at least {10 * spec.psi.size} observations to fit {spec.psi.size} parameters")
    bounds = bounds or default_bounds(spec)
    if len(bounds) != spec.psi.size:
        raise ConfigError("bounds do not match the parameter vector")
    if gamma_init is None:
        gamma = fit_gamma0(series, seg, spec.with_psi(_project(spec.psi, bounds)), init=init)
    else:
        gamma = np.asarray(gamma_init, dtype=np.float64)
    if gamma.size != seg.k + 1:
        raise ConfigError(f"gamma_init needs length {seg.k + 1}")

    if np.ptp(series.values) == 0.0:
        psi0 = _project(spec.psi, bounds)
        return FitResult(psi0, fit_gamma0(series, seg, spec.with_psi(psi0), init=init),
                         float("nan"), False, 0, degenerate=True, spec=spec.with_psi(psi0))

    def objective(psi):
        try:
            return neg_loglik(series, spec.with_psi(_project(psi, bounds)), gamma, seg, init)
        except (VolatilityFloorError, ConfigError, FloatingPointError):
            return np.inf

    dim = spec.psi.size
    max_iter = max_iter or 2000 * dim
    rng = np.random.default_rng(seed)
    start = _project(spec.psi, bounds)
    starts = [start]
    for _ in range(max(restarts, 1) - 1):
        starts.append(_project(start + rng.normal(0.0, 0.1, dim) * (1.0 + np.abs(start)), bounds))

    best = None
    iters = 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for x0 in starts:
            res = minimize(objective, x0, method="Nelder-Mead",
                           options={"xatol": 1e-6, "fatol": 1e-8, "maxiter": max_iter, "maxfev": 2 * max_iter})
            iters += int(res.nit)
            if best is None or res.fun < best.fun:
                best = res
    raw = np.asarray(best.x)
    psi = _project(raw, bounds)
    fitted = spec.with_psi(psi)
    return FitResult(
        psi_hat=psi,
        gamma0_hat=fit_gamma0(series, seg, fitted, init=init),
        neg_loglik=float(best.fun),
        converged=bool(best.success),
        iterations=iters,
        projected=bool(np.any(psi != raw)),
        spec=fitted,
    )


def fit_gamma0(
    series: TimeSeries,
    seg: Segmentation,
    spec: CharnSpec,
    psi: ArrayLike | None = None,
    init: LagState | ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Segment levels maximising the Gaussian criterion with ``psi`` fixed.

    The criterion is quadratic in each level, so the maximiser is the
    ``V^-2``-weighted mean of ``X_t - T(Z_{t-1})`` over the segment; for
    constant ``V`` this is the plain segment mean.
    """
    if psi is not None:
        spec = spec.with_psi(psi)
    ev = evaluate(series, spec, init)
    labels = seg.labels()[ev.valid]
    y = series.values[ev.valid] - ev.trend[ev.valid]
    if spec.vol == "constant":
        sums = np.bincount(labels, weights=y, minlength=seg.k + 1)
        counts = np.bincount(labels, minlength=seg.k + 1)
        if np.any(counts == 0):
            raise ConfigError("empty segment")
        return sums / counts
    w = ev.vol[ev.valid] ** -2.0
    num = np.bincount(labels, weights=w * y, minlength=seg.k + 1)
    den = np.bincount(labels, weights=w, minlength=seg.k + 1)
    if np.any(den == 0):
        raise ConfigError("empty segment")
    return num / den

"""Local power: the theoretical formula and its plug-in estimate over candidates.

The asymptotic power at break locations ``t^k`` is ``1 - Phi(z_alpha - varpi)``
with ``varpi^2 = sum_j alpha_j beta_j^2 mu_j2``.  The estimate replaces
``beta`` by scaled differences of segment means and ``mu_j2`` by segment
averages of ``I(f) / V^2``.

:class:`PowerEvaluator` computes the same quantity for many candidate
segmentations at once from prefix sums; :func:`estimated_power` is the plain
single-candidate route and serves as its reference.
"""

from __future__ import annotations

import itertools
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, DomainError
from .lr_test import mu_hat, z_alpha
from .model_core import CharnSpec, LagState, Segmentation, TimeSeries, evaluate

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from .noise import NoiseDensity


@dataclass(frozen=True)
class PowerResult:
    locations: tuple[int, ...]
    beta_hat: NDArray[np.float64] = field(repr=False)
    varpi_hat: float
    power: float


def theoretical_power(varpi: float | NDArray, alpha: float = 0.05):
    """Asymptotic local power ``1 - Phi(z_alpha - varpi)``."""
    v = np.asarray(varpi, dtype=np.float64)
    if np.any(v < 0) or np.any(np.isnan(v)):
        raise DomainError("varpi must be non-negative")
    out = ndtr(v - z_alpha(alpha))
    return float(out) if out.ndim == 0 else out


def level_series(
    series: TimeSeries,
    spec: CharnSpec | None = None,
    init: LagState | ArrayLike | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """``X_t - T(Z_{t-1})`` and its validity mask (raw values when ``spec`` is None)."""
    if spec is None or spec.trend == "constant":
        valid = np.ones(series.n, dtype=bool)
        if spec is not None and spec.lag_dependent and init is None:
            valid[: spec.p] = False
        return series.values.copy(), valid
    ev = evaluate(series, spec, init)
    return series.values - ev.trend, ev.valid


def estimate_beta(
    series: TimeSeries,
    seg: Segmentation,
    gamma0_hat: ArrayLike | None = None,
    spec: CharnSpec | None = None,
    init: LagState | ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Break magnitudes ``beta_hat_j = sqrt(n) (mean_j - gamma0_hat_j)``.

    ``mean_j`` averages segment ``j`` (``[t_{j-1}, t_j)``, last one closed).
    By default ``gamma0_hat_j`` is the mean of the previous segment; the first
    component is always 0.  When ``spec`` has a non-constant trend the means
    are taken over ``X_t - T(Z_{t-1})``.
    """
    if seg.n != series.n:
        raise ConfigError("segmentation size does not match the series")
    level, valid = level_series(series, spec, init)
    labels = seg.labels()
    sums = np.bincount(labels[valid], weights=level[valid], minlength=seg.k + 1)
    counts = np.bincount(labels[valid], minlength=seg.k + 1)
    if np.any(counts == 0):
        raise ConfigError("empty segment")
    means = sums / counts
    if gamma0_hat is None:
        ref = np.concatenate([[means[0]], means[:-1]])
    else:
        ref = np.asarray(gamma0_hat, dtype=np.float64).reshape(-1)
        if ref.size != seg.k + 1:
            raise ConfigError(f"gamma0_hat needs length {seg.k + 1}")
    beta = np.sqrt(series.n) * (means - ref)
    beta[0] = 0.0
    return beta


def estimated_power(
    series: TimeSeries,
    spec: CharnSpec,
    seg: Segmentation,
    noise: NoiseDensity,
    alpha: float = 0.05,
    gamma0_hat: ArrayLike | None = None,
    init: LagState | ArrayLike | None = None,
) -> PowerResult:
    """Plug-in power estimate at the candidate breaks of ``seg``."""
    beta = estimate_beta(series, seg, gamma0_hat, spec, init)
    mu2 = mu_hat(series, spec, seg, noise, 2, init)
    varpi = float(np.sqrt(np.sum(seg.fractions * beta * beta * mu2)))
    return PowerResult(seg.breaks, beta, varpi, theoretical_power(varpi, alpha))


class PowerEvaluator:
    """Vectorised power estimates for many candidate break tuples.

    Candidates are 1-based break tuples.  Evaluation may be restricted to a
    window ``[lo, hi]`` of the series, which then plays the role of the whole
    sample (its length replaces ``n``).

    Parameters
    ----------
    reference : {"previous", "first"}
        Reference level for ``beta_hat_j``: the previous segment's mean, or
        the first segment's mean for every ``j``.
    """

    def __init__(
        self,
        series: TimeSeries,
        spec: CharnSpec,
        noise: NoiseDensity,
        alpha: float = 0.05,
        init: LagState | ArrayLike | None = None,
        reference: str = "previous",
    ):
        if reference not in ("previous", "first"):
            raise ConfigError(f"unknown reference convention {reference!r}")
        level, valid = level_series(series, spec, init)
        ev = evaluate(series, spec, init)
        self.n = series.n
        self.alpha = alpha
        self.z = z_alpha(alpha)
        self.fisher = float(noise.fisher)
        self.reference = reference
        self._set_arrays(level, 1.0 / ev.vol**2, valid)

    def _set_arrays(self, level, inv_v2, valid) -> None:
        self._level = level
        self._inv_v2 = inv_v2
        self._valid = valid
        vf = valid.astype(np.float64)
        self._cs_level = np.concatenate([[0.0], np.cumsum(np.where(valid, level, 0.0))])
        self._cs_w = np.concatenate([[0.0], np.cumsum(np.where(valid, inv_v2, 0.0))])
        self._cs_count = np.concatenate([[0.0], np.cumsum(vf)])

    def rotated(self, shift: int) -> PowerEvaluator:
        """Evaluator on the circularly spliced series ``X_{shift+1}, ..., X_n, X_1, ..., X_shift``."""
        out = object.__new__(PowerEvaluator)
        out.__dict__.update(self.__dict__)
        out._set_arrays(np.roll(self._level, -shift), np.roll(self._inv_v2, -shift), np.roll(self._valid, -shift))
        return out

    def evaluate(
        self, breaks: ArrayLike, lo: int = 1, hi: int | None = None
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Power, ``varpi_hat`` and ``beta_hat`` for every row of ``breaks``.

        ``breaks`` has shape ``(m, k)``; each row must satisfy
        ``lo < t_1 < ... < t_k <= hi``.
        """
        hi = self.n if hi is None else hi
        b = np.asarray(breaks, dtype=np.int64)
        if b.ndim == 1:
            b = b[:, None]
        m, k = b.shape
        if not 1 <= lo < hi <= self.n:
            raise ConfigError(f"bad window [{lo}, {hi}]")
        if m and (np.any(b <= lo) or np.any(b > hi) or (k > 1 and np.any(np.diff(b, axis=1) <= 0))):
            raise ConfigError("candidate breaks must be strictly increasing inside the window")
        # 1-based boundaries; segment j covers [edges[j], edges[j+1])
        edges = np.column_stack([np.full(m, lo), b, np.full(m, hi + 1)])
        a, z = edges[:, :-1] - 1, edges[:, 1:] - 1
        cnt = self._cs_count[z] - self._cs_count[a]
        if m and np.any(cnt == 0):
            raise ConfigError("a candidate segment has no usable observation")
        means = (self._cs_level[z] - self._cs_level[a]) / cnt
        mu2 = self.fisher * (self._cs_w[z] - self._cs_w[a]) / cnt
        n_eff = hi - lo + 1
        frac = (z - a) / n_eff
        ref = means[:, :1] if self.reference == "first" else means[:, :-1]
        beta = np.zeros_like(means)
        beta[:, 1:] = np.sqrt(n_eff) * (means[:, 1:] - ref)
        varpi = np.sqrt(np.sum(frac * beta * beta * mu2, axis=1))
        return ndtr(varpi - self.z), varpi, beta


class PowerSurface(Mapping):
    """Candidate tuple -> :class:`PowerResult`, in lexicographic key order.

    Candidates that could not be evaluated are listed in ``errors`` with the
    reason instead of aborting the whole surface.
    """

    def __init__(self, results: dict[tuple[int, ...], PowerResult], errors: dict[tuple[int, ...], str]):
        self._results = dict(sorted(results.items()))
        self.errors = dict(sorted(errors.items()))

    def __getitem__(self, key):
        return self._results[tuple(key)]

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return iter(self._results)

    def __len__(self) -> int:
        return len(self._results)

    def argmax(self) -> tuple[int, ...]:
        """Key with the largest power; the lexicographically smallest on ties.

        Candidates are ranked by ``varpi_hat``, which orders them like the
        power but does not saturate at 1 in floating point.
        """
        if not self._results:
            raise ConfigError("empty power surface")
        best, best_v = None, -np.inf
        for key, res in self._results.items():
            if res.varpi_hat > best_v:
                best, best_v = key, res.varpi_hat
        return best

    def rows(self) -> list[tuple[tuple[int, ...], float, float]]:
        return [(key, r.varpi_hat, r.power) for key, r in self._results.items()]


def grid_candidates(*grids: Iterable[int]) -> list[tuple[int, ...]]:
    """Strictly increasing tuples from the Cartesian product of ``grids``."""
    return [c for c in itertools.product(*[sorted(set(g)) for g in grids]) if all(x < y for x, y in zip(c, c[1:]))]


def power_surface(
    series: TimeSeries,
    spec: CharnSpec,
    candidate_sets: Sequence[Segmentation | Sequence[int]],
    noise: NoiseDensity,
    alpha: float = 0.05,
    init: LagState | ArrayLike | None = None,
    reference: str = "previous",
) -> PowerSurface:
    """Estimated power for every candidate segmentation."""
    if len(candidate_sets) == 0:
        raise ConfigError("no candidates given")
    keys = sorted({tuple(c.breaks) if isinstance(c, Segmentation) else tuple(int(t) for t in c) for c in candidate_sets})
    ev = PowerEvaluator(series, spec, noise, alpha, init, reference)
    results: dict[tuple[int, ...], PowerResult] = {}
    errors: dict[tuple[int, ...], str] = {}
    by_k: dict[int, list[tuple[int, ...]]] = {}
    for key in keys:
        by_k.setdefault(len(key), []).append(key)
    for k, group in by_k.items():
        if k == 0:
            for key in group:
                results[key] = PowerResult(key, np.zeros(1), 0.0, float(alpha))
            continue
        ok = []
        for key in group:
            if key[0] <= 1 or key[-1] > series.n or any(x >= y for x, y in zip(key, key[1:])):
                errors[key] = "breaks must be strictly increasing inside (1, n]"
            else:
                ok.append(key)
        if not ok:
            continue
        arr = np.array(ok, dtype=np.int64)
        with np.errstate(invalid="ignore", divide="ignore"):
            try:
                pw, vp, bh = ev.evaluate(arr)
            except ConfigError:
                pw = vp = bh = None
        if pw is None:
            for key in ok:
                try:
                    pk, vk, bk = ev.evaluate(np.array([key]))
                    results[key] = PowerResult(key, bk[0], float(vk[0]), float(pk[0]))
                except ConfigError as exc:
                    errors[key] = str(exc)
            continue
        for i, key in enumerate(ok):
            results[key] = PowerResult(key, bh[i], float(vp[i]), float(pw[i]))
    return PowerSurface(results, errors)

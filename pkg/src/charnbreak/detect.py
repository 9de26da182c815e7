"""Change detection by maximising the estimated local power.

Three strategies are provided:

* ``detect_s1`` -- existence: scan single-break candidates after the
  historical stretch and flag a change when the estimated power moves more
  than ``zeta`` away from the level ``alpha``.
* ``detect_s2`` -- grid search: candidate windows around prior locations,
  nested model choice over the number of breaks with the ``zeta`` rule, then
  argmax of the estimated power.
* ``detect_s3`` -- sequential sweep over consecutive stretches, one break at
  most per stretch, merging stretches where nothing is found.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator

import numpy as np
from scipy.signal import find_peaks

from .errors import ConfigError
from .model_core import CharnSpec, LagState, TimeSeries
from .power import PowerEvaluator

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from .noise import NoiseDensity


@dataclass(frozen=True)
class DetectionConfig:
    """Tuning of the detection strategies.

    Parameters
    ----------
    m : int
        Length of the change-free historical stretch ``X_1..X_m``.
    h : int
        Minimum distance between adjacent breaks.
    zeta : float
        Decision band on power differences, in ``(0, 0.1)``.
    alpha : float
        Test level.
    K : int or None
        Maximum number of breaks; defaults to the number of priors.
    priors : tuple of int or None
        Prior break locations; derived from a single-break sweep when absent
        (S2 only).
    candidate_halfwidth : int
        Radius of the candidate window around each prior.
    known_k : int or None
        Skip the model choice and search only tuples of this length.
    circular : bool
        Circularly splice the series for single-break candidates within
        ``h`` of the end.
    reference : {"previous", "first"}
        Reference level for the magnitude estimates.
    """

    m: int = 20
    h: int = 20
    zeta: float = 0.01
    alpha: float = 0.05
    K: int | None = None
    priors: tuple[int, ...] | None = None
    candidate_halfwidth: int = 10
    known_k: int | None = None
    circular: bool = False
    reference: str = "previous"

    def __post_init__(self):
        if self.priors is not None:
            object.__setattr__(self, "priors", tuple(int(t) for t in self.priors))
        if self.m < 1 or self.h < 1:
            raise ConfigError("m and h must be positive")
        if not 0.0 < self.zeta < 0.1:
            raise ConfigError("zeta must lie in (0, 0.1)")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.candidate_halfwidth < 0:
            raise ConfigError("candidate_halfwidth must be non-negative")
        if self.K is not None and self.K < 1:
            raise ConfigError("K must be at least 1")
        if self.known_k is not None and self.known_k < 1:
            raise ConfigError("known_k must be at least 1")

    @property
    def max_breaks(self) -> int:
        if self.K is not None:
            return self.K
        return len(self.priors) if self.priors else 3

    def check(self, n: int) -> None:
        if self.m >= n - 1:
            raise ConfigError(f"series of length {n} is too short for m={self.m}")
        if self.priors is None:
            return
        pr = self.priors
        if not pr:
            raise ConfigError("priors must not be empty")
        if pr[0] <= self.m:
            raise ConfigError(f"first prior {pr[0]} must exceed m={self.m}")
        if pr[-1] > n - self.h:
            raise ConfigError(f"last prior {pr[-1]} must not exceed n - h = {n - self.h}")
        for a, b in zip(pr, pr[1:]):
            if b - a < self.h:
                raise ConfigError(f"priors {a} and {b} are closer than h={self.h}")
        if self.K is not None and len(pr) > self.K:
            raise ConfigError(f"{len(pr)} priors given but K={self.K}")
        if self.known_k is not None and self.known_k > len(pr):
            raise ConfigError("known_k exceeds the number of priors")


@dataclass(frozen=True)
class CandidateSets:
    """Disjoint windows ``C_1 < ... < C_K`` and their increasing products."""

    windows: tuple[tuple[int, ...], ...]

    @property
    def K(self) -> int:
        return len(self.windows)

    def iter_level(self, ell: int) -> Iterator[tuple[int, ...]]:
        """Tuples of ``S_ell`` lazily, in lexicographic order."""

        def rec(first: int, depth: int):
            if depth == 0:
                yield ()
                return
            for j in range(first, self.K - depth + 1):
                for t in self.windows[j]:
                    for rest in rec(j + 1, depth - 1):
                        yield (t,) + rest

        if not 1 <= ell <= self.K:
            raise ConfigError(f"level {ell} outside 1..{self.K}")
        return rec(0, ell)

    def level(self, ell: int) -> NDArray[np.int64]:
        """``S_ell`` as an array of shape ``(|S_ell|, ell)``."""
        return np.array(list(self.iter_level(ell)), dtype=np.int64).reshape(-1, ell)

    def size(self, ell: int) -> int:
        sizes = [len(w) for w in self.windows]
        # elementary symmetric polynomial of the window sizes
        e = [1] + [0] * ell
        for s in sizes:
            for d in range(ell, 0, -1):
                e[d] += e[d - 1] * s
        return e[ell]


@dataclass
class DetectionResult:
    k_hat: int
    t_hat: tuple[int, ...]
    beta_hat: tuple[float, ...]
    max_power: float
    trace: list[tuple[tuple[int, ...], float]] = field(default_factory=list, repr=False)
    notes: list[str] = field(default_factory=list)


def build_candidates(cfg: DetectionConfig, n: int) -> CandidateSets:
    """Windows ``[tau_j - w, tau_j + w]`` clipped to ``[m+1, n-1]``.

    Neighbouring windows are trimmed (priors always kept) so that any two
    points taken from different windows are at least ``h`` apart.
    """
    cfg.check(n)
    if cfg.priors is None:
        raise ConfigError("build_candidates needs priors")
    w = cfg.candidate_halfwidth
    pr = cfg.priors
    lows = [max(t - w, cfg.m + 1) for t in pr]
    highs = [min(t + w, n - 1) for t in pr]
    for j in range(len(pr) - 1):
        slack = pr[j + 1] - pr[j] - cfg.h
        highs[j] = min(highs[j], pr[j] + slack // 2)
        lows[j + 1] = max(lows[j + 1], pr[j + 1] - (slack - slack // 2))
    windows = tuple(tuple(range(lo, hi + 1)) for lo, hi in zip(lows, highs))
    for a, b in zip(windows, windows[1:]):
        if not a or not b or a[-1] >= b[0]:
            raise ConfigError("candidate windows overlap after truncation")
    return CandidateSets(windows)


def s1_scan(
    series: TimeSeries,
    spec: CharnSpec,
    noise: NoiseDensity,
    cfg: DetectionConfig,
    init: LagState | ArrayLike | None = None,
    evaluator: PowerEvaluator | None = None,
) -> tuple[NDArray[np.int64], NDArray[np.float64], NDArray[np.float64]]:
    """Single-break power sweep over ``t_1 = m+1, ..., n-1``.

    Returns the candidate locations, their estimated powers and the
    corresponding ``beta_hat_2``.
    """
    t1, power, _, beta2 = _sweep(series, spec, noise, cfg, init, evaluator)
    return t1, power, beta2


def _sweep(series, spec, noise, cfg, init=None, evaluator=None):
    n = series.n
    cfg.check(n)
    ev = evaluator or PowerEvaluator(series, spec, noise, cfg.alpha, init, cfg.reference)
    t1 = np.arange(cfg.m + 1, n, dtype=np.int64)
    power, varpi, beta = ev.evaluate(t1)
    beta2 = beta[:, 1].copy()
    if cfg.circular:
        for i in np.flatnonzero(n - t1 + 1 < cfg.h):
            r = int(cfg.h - (n - t1[i] + 1))
            p, v, b = ev.rotated(r).evaluate(np.array([t1[i] - r]))
            power[i], varpi[i], beta2[i] = p[0], v[0], b[0, 1]
    return t1, power, varpi, beta2


def detect_s1(
    series: TimeSeries,
    spec: CharnSpec,
    noise: NoiseDensity,
    cfg: DetectionConfig,
    init: LagState | ArrayLike | None = None,
) -> bool:
    """Whether some single-break candidate moves the power more than ``zeta`` from ``alpha``."""
    _, power, _ = s1_scan(series, spec, noise, cfg, init)
    return bool(np.any(np.abs(power - cfg.alpha) > cfg.zeta))


def derive_priors(
    series: TimeSeries,
    spec: CharnSpec,
    noise: NoiseDensity,
    cfg: DetectionConfig,
    init: LagState | ArrayLike | None = None,
) -> tuple[int, ...]:
    """Prior locations from peaks of the single-break power sweep.

    Peaks at least ``h`` apart with prominence above ``zeta`` and at most
    ``n - h`` are kept, the ``K`` highest of them, in increasing order.
    """
    t1, power, varpi, _ = _sweep(series, spec, noise, cfg, init)
    # peaks are located on varpi, which keeps its shape where power rounds to 1
    peaks, props = find_peaks(varpi, distance=cfg.h, prominence=0.0)
    base = np.maximum(power[props["left_bases"]], power[props["right_bases"]])
    keep = [
        int(p) for p, b in zip(peaks, base)
        if power[p] - b > cfg.zeta and t1[p] <= series.n - cfg.h
    ]
    keep.sort(key=lambda p: (-varpi[p], t1[p]))
    return tuple(sorted(int(t1[p]) for p in keep[: cfg.max_breaks]))


def detect_s2(
    series: TimeSeries,
    spec: CharnSpec,
    noise: NoiseDensity,
    cfg: DetectionConfig,
    init: LagState | ArrayLike | None = None,
) -> DetectionResult:
    """Grid strategy: nested ``zeta`` rule over ``S_1, ..., S_K`` then argmax."""
    n = series.n
    cfg.check(n)
    notes: list[str] = []
    if cfg.priors is None:
        priors = derive_priors(series, spec, noise, cfg, init)
        notes.append(f"priors derived from single-break sweep: {priors}")
        if not priors:
            return DetectionResult(0, (), (), float(cfg.alpha), [], notes)
        cfg = _replace(cfg, priors=priors, K=len(priors), known_k=None if cfg.known_k is None else min(cfg.known_k, len(priors)))
    cands = build_candidates(cfg, n)
    ev = PowerEvaluator(series, spec, noise, cfg.alpha, init, cfg.reference)
    K = cands.K

    trace: list[tuple[tuple[int, ...], float]] = []
    best: dict[int, tuple[float, tuple[int, ...], NDArray]] = {}
    levels = [cfg.known_k] if cfg.known_k is not None else range(1, K + 1)
    for ell in levels:
        arr = cands.level(ell)
        power, varpi, beta = ev.evaluate(arr)
        trace.extend((tuple(int(t) for t in row), float(p)) for row, p in zip(arr, power))
        i = _argmax(varpi)
        best[ell] = (float(power[i]), tuple(int(t) for t in arr[i]), beta[i])

    if cfg.known_k is not None:
        chosen = cfg.known_k
    else:
        if abs(best[1][0] - cfg.alpha) <= cfg.zeta:
            notes.append("max single-break power within zeta of alpha: C_1 may contain no change")
        chosen = 1
        for ell in range(2, K + 1):
            if abs(best[ell][0] - best[ell - 1][0]) > cfg.zeta:
                chosen = ell
    p, t_hat, beta = best[chosen]
    return DetectionResult(len(t_hat), t_hat, tuple(float(b) for b in beta[1:]), p, trace, notes)


def detect_s3(
    series: TimeSeries,
    spec: CharnSpec,
    noise: NoiseDensity,
    cfg: DetectionConfig,
    init: LagState | ArrayLike | None = None,
) -> DetectionResult:
    """Sequential strategy over stretches ending ``h`` after each prior."""
    n = series.n
    if cfg.priors is None:
        raise ConfigError("S3 needs prior locations; run detect_s1 and build_candidates/derive_priors first")
    cfg.check(n)
    ev = PowerEvaluator(series, spec, noise, cfg.alpha, init, cfg.reference)
    start = 1
    t_hat: list[int] = []
    beta_hat: list[float] = []
    powers: list[float] = []
    trace: list[tuple[tuple[int, ...], float]] = []
    for tau in cfg.priors:
        end = min(tau + cfg.h, n)
        # every stretch keeps an m-point change-free lead-in
        first = start + cfg.m
        cand = np.arange(first, end, dtype=np.int64)
        if cand.size == 0:
            continue
        power, varpi, beta = ev.evaluate(cand, lo=start, hi=end)
        trace.extend(((int(t),), float(p)) for t, p in zip(cand, power))
        if np.any(np.abs(power - cfg.alpha) > cfg.zeta):
            i = _argmax(varpi)
            t_hat.append(int(cand[i]))
            beta_hat.append(float(beta[i, 1]))
            powers.append(float(power[i]))
            start = int(cand[i]) + cfg.h
            if start >= n:
                break
        # otherwise the stretch merges into the next one: start is kept
    max_power = max(powers) if powers else float(cfg.alpha)
    return DetectionResult(len(t_hat), tuple(t_hat), tuple(beta_hat), max_power, trace)


def detect(series, spec, noise, cfg, strategy: str = "s2", init=None):
    """Dispatch on ``strategy`` in ``{"s1", "s2", "s3"}``."""
    strategy = strategy.lower()
    if strategy == "s1":
        return detect_s1(series, spec, noise, cfg, init)
    if strategy == "s2":
        return detect_s2(series, spec, noise, cfg, init)
    if strategy == "s3":
        return detect_s3(series, spec, noise, cfg, init)
    raise ConfigError(f"unknown strategy {strategy!r}")


def _argmax(varpi: NDArray[np.float64]) -> int:
    # power is increasing in varpi but rounds to 1.0 for strong shifts;
    # ranking by varpi keeps those candidates apart (first index on exact ties)
    return int(np.argmax(varpi))


def _replace(cfg: DetectionConfig, **changes) -> DetectionConfig:
    from dataclasses import replace

    return replace(cfg, **changes)

"""Seeded replication harness for size, power, LAN and location studies.

Replication ``i`` of a scenario draws its path from ``mix_seed(master_seed, i)``
only, so results do not depend on execution order or on the number of worker
processes.  Aggregates are computed from per-replication records sorted by
index.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from typing import TYPE_CHECKING, Any, Callable, Sequence

import numpy as np
from scipy.stats import kstest

from .baselines import cusum_statistic
from .detect import DetectionConfig, detect_s1, detect_s2, detect_s3
from .errors import CharnError, ConfigError, ReplicationError
from .lr_test import central_statistic, loglik_ratio, mu_hat, test_statistic
from .model_core import CharnSpec, LagState, MeanShiftParams, Segmentation, TimeSeries, simulate_with_init
from .noise import GaussianNoise

if TYPE_CHECKING:
    from .noise import NoiseDensity

METHODS = ("LRT", "S1", "S2", "S3", "SCUSUM")

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix_seed(master: int, i: int) -> int:
    """SplitMix64 output for stream position ``i`` of generator ``master``.

    ``master + (i + 1) * golden`` is distinct for distinct ``i`` modulo 2**64
    and the finaliser is a bijection, so replication seeds never collide.
    """
    z = (int(master) + (int(i) + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


@dataclass(frozen=True)
class Scenario:
    """A data-generating process plus the method applied to each path.

    ``beta`` drives the simulation (``gamma0 + beta / sqrt(n)``);
    ``test_beta`` is the alternative direction used by the likelihood-ratio
    test and defaults to ``beta``.  A null scenario therefore needs an
    explicit ``test_beta``.

    With ``known_init`` the likelihood-ratio computations also receive the
    simulated pre-sample state ``Z_0``, as they receive the other true
    parameters; detection methods never see it.
    """

    spec: CharnSpec
    seg: Segmentation
    gamma0: tuple[float, ...]
    beta: tuple[float, ...]
    noise: NoiseDensity = field(default_factory=GaussianNoise)
    reps: int = 500
    master_seed: int = 0
    method: str = "LRT"
    test_beta: tuple[float, ...] | None = None
    detection: DetectionConfig | None = None
    burn_in: int = 100
    known_init: bool = True

    def __post_init__(self):
        for name in ("gamma0", "beta", "test_beta"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(x) for x in np.ravel(v)))
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        k1 = self.seg.k + 1
        if len(self.gamma0) != k1 or len(self.beta) != k1:
            raise ConfigError(f"gamma0 and beta need length {k1}")
        if self.test_beta is not None and len(self.test_beta) != k1:
            raise ConfigError(f"test_beta needs length {k1}")

    @property
    def n(self) -> int:
        return self.seg.n

    @property
    def direction(self) -> tuple[float, ...]:
        return self.beta if self.test_beta is None else self.test_beta

    def seed(self, i: int) -> int:
        return mix_seed(self.master_seed, i)

    def path(self, i: int, beta: Sequence[float] | None = None, stream: int = 0) -> TimeSeries:
        """Path of replication ``i``; ``stream > 0`` selects an independent sub-stream."""
        return self.path_init(i, beta, stream)[0]

    def path_init(
        self, i: int, beta: Sequence[float] | None = None, stream: int = 0
    ) -> tuple[TimeSeries, LagState | None]:
        """Path and the pre-sample state handed to the test (None unless ``known_init``)."""
        seed = self.seed(i) if stream == 0 else mix_seed(self.seed(i), stream)
        shift = MeanShiftParams(self.gamma0, self.beta if beta is None else beta)
        x, z0 = simulate_with_init(self.spec, self.seg, shift, self.noise, seed=seed, burn_in=self.burn_in)
        return x, (z0 if self.known_init and self.spec.lag_dependent else None)

    def with_(self, **changes) -> Scenario:
        return replace(self, **changes)


# ---------------------------------------------------------------- running


def _guarded(fn: Callable, sc: Scenario, extra: Any, i: int):
    try:
        return fn(sc, extra, i)
    except CharnError as exc:
        return ReplicationError(i, f"{type(exc).__name__}: {exc}")


def run_replications(sc: Scenario, fn: Callable, extra: Any = None, workers: int = 1) -> list:
    """``[fn(sc, extra, i) for i in range(sc.reps)]``, optionally across processes.

    Raises
    ------
    ReplicationError
        For the first (lowest-index) failing replication.
    """
    job = partial(_guarded, fn, sc, extra)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(job, range(sc.reps), chunksize=max(1, sc.reps // (8 * workers))))
    else:
        out = [job(i) for i in range(sc.reps)]
    for r in out:
        if isinstance(r, ReplicationError):
            raise r
    return out


# ------------------------------------------------------------- size/power


@dataclass(frozen=True)
class RateResult:
    rate: float
    ci_low: float
    ci_high: float
    half_width: float
    rejections: int
    reps: int
    method: str

    def as_dict(self) -> dict:
        return asdict(self)


def binomial_ci(successes: int, reps: int, level_z: float = 1.959963984540054) -> tuple[float, float, float]:
    """Rate, and Wald interval half-width ``z sqrt(p (1 - p) / reps)``."""
    p = successes / reps
    hw = level_z * math.sqrt(p * (1.0 - p) / reps)
    return p, hw, level_z


def _rep_reject(sc: Scenario, alpha: float, i: int) -> bool:
    x, z0 = sc.path_init(i)
    if sc.method == "LRT":
        out = test_statistic(x, sc.spec, sc.gamma0, sc.direction, sc.seg, sc.noise, alpha, z0)
        return out.reject
    if sc.method == "S1":
        return detect_s1(x, sc.spec, sc.noise, _detection(sc, alpha))
    if sc.method == "SCUSUM":
        return cusum_statistic(x, alpha).reject
    raise ConfigError(f"rejection rates are not defined for method {sc.method}")


def _detection(sc: Scenario, alpha: float | None = None) -> DetectionConfig:
    cfg = sc.detection or DetectionConfig()
    return cfg if alpha is None or cfg.alpha == alpha else replace(cfg, alpha=alpha)


def empirical_size_power(sc: Scenario, alpha: float = 0.05, workers: int = 1) -> RateResult:
    """Fraction of replications that reject (LRT, SCUSUM) or flag a change (S1)."""
    hits = run_replications(sc, _rep_reject, alpha, workers)
    k = int(np.sum(hits))
    p, hw, _ = binomial_ci(k, sc.reps)
    return RateResult(p, p - hw, p + hw, hw, k, sc.reps, sc.method)


# -------------------------------------------------------------------- LAN


@dataclass(frozen=True)
class LanSummary:
    mu: float
    null_mean: float
    null_var: float
    alt_mean: float
    alt_var: float
    t_null_mean: float
    t_null_var: float
    ks_pvalue: float
    remainder_null: float
    remainder_alt: float
    reps: int

    def as_dict(self) -> dict:
        return asdict(self)


def _rep_lan(sc: Scenario, _, i: int) -> tuple[float, ...]:
    b = sc.direction
    zero = np.zeros(len(b))
    out = []
    for beta, stream in ((zero, 0), (sc.beta, 1)):
        x, z0 = sc.path_init(i, beta, stream)
        mu = float(np.sum(sc.seg.fractions * np.square(b) * mu_hat(x, sc.spec, sc.seg, sc.noise, 2, z0)))
        delta = central_statistic(x, sc.spec, sc.gamma0, b, sc.seg, sc.noise, z0)
        lam = loglik_ratio(x, sc.spec, sc.gamma0, b, sc.seg, sc.noise, z0)
        out += [delta, mu, lam - delta + mu / 2.0]
    return tuple(out)


def lan_diagnostic(sc: Scenario, workers: int = 1) -> LanSummary:
    """Moments of ``Delta_n`` under the null and under ``gamma0 + beta / sqrt(n)``.

    Null paths use the scenario seeds; alternative paths use an independent
    seed stream.  ``mu`` is the mean of the plug-in ``mu_hat`` over null paths
    (exact for constant volatility).  The remainders are the means of
    ``Lambda_n - Delta_n + mu_hat / 2``.
    """
    if not np.any(sc.direction):
        raise ConfigError("LAN diagnostics need a non-zero direction")
    rec = np.array(run_replications(sc, _rep_lan, None, workers))
    d0, mu0, r0, d1, _, r1 = rec.T
    mu = float(mu0.mean())
    t0 = d0 / np.sqrt(mu0)
    return LanSummary(
        mu=mu,
        null_mean=float(d0.mean()),
        null_var=float(d0.var(ddof=1)),
        alt_mean=float(d1.mean()),
        alt_var=float(d1.var(ddof=1)),
        t_null_mean=float(t0.mean()),
        t_null_var=float(t0.var(ddof=1)),
        ks_pvalue=float(kstest(t0, "norm").pvalue),
        remainder_null=float(r0.mean()),
        remainder_alt=float(r1.mean()),
        reps=sc.reps,
    )


# --------------------------------------------------------------- location


@dataclass(frozen=True)
class LocationSummary:
    """Aggregated location estimates.

    Per-break statistics use only replications with the true number of
    breaks; ``k_accuracy`` is the share of such replications.
    """

    truth: tuple[int, ...]
    mean: tuple[float, ...]
    rounded_mean: tuple[int, ...]
    mode: tuple[int, ...]
    hit_rate: tuple[float, ...]
    exact_rate: float
    k_accuracy: float
    any_detected: float
    mean_abs_error: tuple[float, ...]
    reps: int

    def as_dict(self) -> dict:
        return asdict(self)


def summarize_locations(estimates: Sequence[Sequence[int]], truth: Sequence[int], tol: int = 2) -> LocationSummary:
    """Summary of per-replication location tuples against ``truth``.

    Also used to score location files produced by external methods.
    """
    truth = tuple(int(t) for t in truth)
    k = len(truth)
    reps = len(estimates)
    if reps == 0:
        raise ConfigError("no replications to summarise")
    right_k = np.array([tuple(e) for e in estimates if len(e) == k], dtype=np.int64).reshape(-1, k)
    tarr = np.array(truth, dtype=np.int64)
    exact = sum(tuple(int(x) for x in e) == truth for e in estimates) / reps
    if right_k.shape[0] and k:
        mean = right_k.mean(axis=0)
        mode = tuple(int(Counter(right_k[:, j].tolist()).most_common(1)[0][0]) for j in range(k))
        close = np.abs(right_k - tarr) <= tol
        hit = tuple(float(h) for h in close.sum(axis=0) / reps)
        mae = tuple(float(v) for v in np.abs(right_k - tarr).mean(axis=0))
    else:
        mean = np.full(k, np.nan)
        mode = (0,) * k
        hit = (0.0,) * k
        mae = (float("nan"),) * k
    return LocationSummary(
        truth=truth,
        mean=tuple(float(m) for m in mean),
        rounded_mean=tuple(int(np.floor(m + 0.5)) if np.isfinite(m) else -1 for m in mean),
        mode=mode,
        hit_rate=hit,
        exact_rate=float(exact),
        k_accuracy=right_k.shape[0] / reps,
        any_detected=sum(len(e) > 0 for e in estimates) / reps,
        mean_abs_error=mae,
        reps=reps,
    )


def _rep_locate(sc: Scenario, _, i: int) -> tuple[int, ...]:
    x = sc.path(i)
    if sc.method == "SCUSUM":
        # first post-change index, comparable with break locations
        return (cusum_statistic(x, _detection(sc).alpha).location + 1,)
    cfg = _detection(sc)
    res = (detect_s2 if sc.method == "S2" else detect_s3)(x, sc.spec, sc.noise, cfg)
    return res.t_hat


def location_estimates(sc: Scenario, workers: int = 1) -> list[tuple[int, ...]]:
    """Per-replication location tuples for methods S2, S3 and SCUSUM."""
    if sc.method not in ("S2", "S3", "SCUSUM"):
        raise ConfigError("location estimates need method S2, S3 or SCUSUM")
    return run_replications(sc, _rep_locate, None, workers)


def location_estimate_mean(sc: Scenario, workers: int = 1, tol: int = 2) -> LocationSummary:
    """Mean, mode and hit rates of the estimated locations.

    For SCUSUM the location is the first index after the maximising split,
    reported whether or not the test rejects.
    """
    return summarize_locations(location_estimates(sc, workers), sc.seg.breaks, tol)

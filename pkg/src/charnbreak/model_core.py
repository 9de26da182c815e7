"""CHARN(p) models with piecewise-constant mean shifts.

The model is

    X_t = T(Z_{t-1}) + gamma' omega(t) + V(Z_{t-1}) eps_t,

with lag vector ``Z_t = (X_t, ..., X_{t-p+1})`` and ``omega(t)`` the one-hot
indicator of the segment containing ``t``.  Time indices are 1-based in the
public API (as in the segmentation ``1 = t_0 < t_1 < ... < t_k < t_{k+1} = n``)
and 0-based inside numpy arrays.

Segments are half-open ``[t_{j-1}, t_j)`` except the last one, which is closed
at ``n`` so that every observation belongs to exactly one segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DomainError, SimulationDivergenceError, VolatilityFloorError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from .noise import NoiseDensity

TREND_FAMILIES = ("constant", "linear_ar", "expar")
VOL_FAMILIES = ("constant", "exparch")


@dataclass(frozen=True)
class TimeSeries:
    """Ordered real observations ``X_1..X_n``.

    ``origin_label`` is the label attached to index 1 (e.g. a calendar year);
    it only matters for reporting.
    """

    values: NDArray[np.float64]
    origin_label: int | None = None

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise ConfigError("a time series needs at least one observation")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0]) + 1
            raise ConfigError(f"non-finite observation at t={bad}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    def label(self, t: int) -> int:
        """Reporting label of 1-based index ``t``."""
        base = 1 if self.origin_label is None else self.origin_label
        return base + t - 1


@dataclass(frozen=True)
class Segmentation:
    """Break locations ``t_1 < ... < t_k`` inside ``(1, n)``.

    Parameters
    ----------
    n : int
        Sample size.
    breaks : sequence of int
        1-based first index of every segment after the first.
    min_seg_len : int
        Smallest admissible segment length.
    """

    n: int
    breaks: tuple[int, ...] = ()
    min_seg_len: int = 5

    def __post_init__(self) -> None:
        breaks = tuple(int(b) for b in self.breaks)
        object.__setattr__(self, "breaks", breaks)
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.min_seg_len < 1:
            raise ConfigError("min_seg_len must be at least 1")
        if any(b <= 1 or b >= self.n + 1 for b in breaks):
            raise ConfigError(f"breaks must lie in (1, n]; got {breaks} with n={self.n}")
        if any(b1 >= b2 for b1, b2 in zip(breaks, breaks[1:])):
            raise ConfigError(f"breaks must be strictly increasing; got {breaks}")
        short = [j + 1 for j, nj in enumerate(self.lengths) if nj < self.min_seg_len]
        if short:
            raise ConfigError(
                f"segment(s) {short} shorter than min_seg_len={self.min_seg_len}"
            )

    @property
    def k(self) -> int:
        return len(self.breaks)

    @property
    def starts(self) -> NDArray[np.int64]:
        """0-based inclusive start of every segment."""
        return np.array((0,) + tuple(b - 1 for b in self.breaks), dtype=np.int64)

    @property
    def ends(self) -> NDArray[np.int64]:
        """0-based exclusive end of every segment (the last one ends at n)."""
        return np.array(tuple(b - 1 for b in self.breaks) + (self.n,), dtype=np.int64)

    @property
    def lengths(self) -> NDArray[np.int64]:
        return self.ends - self.starts

    @property
    def fractions(self) -> NDArray[np.float64]:
        """Segment fractions ``n_j / n``."""
        return self.lengths / self.n

    def labels(self) -> NDArray[np.int64]:
        """0-based segment index of every observation."""
        return np.repeat(np.arange(self.k + 1), self.lengths)

    def indicator(self) -> NDArray[np.float64]:
        """Matrix whose row ``t-1`` is ``omega(t)``."""
        out = np.zeros((self.n, self.k + 1))
        out[np.arange(self.n), self.labels()] = 1.0
        return out


@dataclass(frozen=True)
class LagState:
    """Lag vector ``Z = (X_t, ..., X_{t-p+1})``."""

    z: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))

    @property
    def p(self) -> int:
        return len(self.z)

    @classmethod
    def zeros(cls, p: int) -> LagState:
        return cls((0.0,) * p)


@dataclass(frozen=True)
class MeanShiftParams:
    """Per-segment mean levels ``gamma`` and local-alternative magnitudes ``beta``."""

    gamma: NDArray[np.float64]
    beta: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        gamma = np.array(self.gamma, dtype=np.float64).reshape(-1)
        beta = np.zeros_like(gamma) if self.beta is None else np.array(self.beta, dtype=np.float64).reshape(-1)
        if beta.shape != gamma.shape:
            raise ConfigError("gamma and beta must have the same length")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)

    def local(self, n: int) -> NDArray[np.float64]:
        """Mean levels under the local alternative, ``gamma + beta / sqrt(n)``."""
        return self.gamma + self.beta / np.sqrt(n)

    def check(self, seg: Segmentation) -> None:
        if self.gamma.size != seg.k + 1:
            raise ConfigError(
                f"expected {seg.k + 1} mean levels for {seg.k} breaks, got {self.gamma.size}"
            )


@dataclass(frozen=True)
class CharnSpec:
    """Parametric trend/volatility pair ``(T_rho, V_theta)``.

    Families
    --------
    trend ``constant``
        ``T = 0`` (the mean level is carried by ``gamma``); ``rho = ()``.
    trend ``linear_ar``
        ``T(z) = rho . z`` with ``rho`` of length ``p``.
    trend ``expar``
        ``T(x) = (rho1 + rho2 x exp(-rho3 x^2)) x``, ``p = 1``.
    vol ``constant``
        ``V = theta1 > 0``.
    vol ``exparch``
        ``V(x) = sqrt(theta1 + theta2 x^2 exp(-theta3 x^2))``, ``p = 1``.
    """

    p: int = 1
    trend: str = "constant"
    rho: tuple[float, ...] = ()
    vol: str = "constant"
    theta: tuple[float, ...] = (1.0,)
    vol_floor: float = 1e-8

    def __post_init__(self) -> None:
        object.__setattr__(self, "rho", tuple(float(r) for r in self.rho))
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        if self.p < 1:
            raise ConfigError("lag order p must be at least 1")
        if self.trend not in TREND_FAMILIES:
            raise ConfigError(f"unknown trend family {self.trend!r}")
        if self.vol not in VOL_FAMILIES:
            raise ConfigError(f"unknown volatility family {self.vol!r}")
        want_rho = {"constant": 0, "linear_ar": self.p, "expar": 3}[self.trend]
        if len(self.rho) != want_rho:
            raise ConfigError(f"{self.trend} trend needs {want_rho} parameters, got {len(self.rho)}")
        want_theta = {"constant": 1, "exparch": 3}[self.vol]
        if len(self.theta) != want_theta:
            raise ConfigError(f"{self.vol} volatility needs {want_theta} parameters, got {len(self.theta)}")
        if (self.trend == "expar" or self.vol == "exparch") and self.p != 1:
            raise ConfigError("EXPAR/ExpARCH families are one-lag forms (p = 1)")
        if self.theta[0] <= 0:
            raise ConfigError("theta1 must be positive")
        if self.vol == "exparch" and self.theta[1] < 0:
            raise ConfigError("theta2 must be non-negative")
        if self.vol_floor <= 0:
            raise ConfigError("vol_floor must be positive")

    @property
    def lag_dependent(self) -> bool:
        """Whether T or V actually look at the lag vector."""
        return self.trend != "constant" or self.vol != "constant"

    @property
    def psi(self) -> NDArray[np.float64]:
        """Nuisance vector ``(rho, theta)``."""
        return np.array(self.rho + self.theta)

    def with_psi(self, psi: ArrayLike) -> CharnSpec:
        psi = np.asarray(psi, dtype=np.float64)
        nr = len(self.rho)
        return CharnSpec(
            p=self.p,
            trend=self.trend,
            rho=tuple(psi[:nr]),
            vol=self.vol,
            theta=tuple(psi[nr:]),
            vol_floor=self.vol_floor,
        )

    def trend_at(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate ``T`` on lag vectors stacked as rows of ``z`` (shape ``(m, p)``)."""
        if self.trend == "constant":
            return np.zeros(z.shape[0])
        if self.trend == "linear_ar":
            return z @ np.asarray(self.rho)
        r1, r2, r3 = self.rho
        x = z[:, 0]
        return (r1 + r2 * x * np.exp(-r3 * x * x)) * x

    def vol_at(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate ``V`` on lag vectors stacked as rows of ``z``."""
        if self.vol == "constant":
            return np.full(z.shape[0], self.theta[0])
        t1, t2, t3 = self.theta
        x = z[:, 0]
        with np.errstate(invalid="ignore"):
            return np.sqrt(t1 + t2 * x * x * np.exp(-t3 * x * x))


def _coerce_init(init: LagState | ArrayLike | None, p: int) -> NDArray[np.float64] | None:
    if init is None:
        return None
    z = np.asarray(init.z if isinstance(init, LagState) else init, dtype=np.float64).reshape(-1)
    if z.size != p:
        raise ConfigError(f"initial lag state must have length p={p}, got {z.size}")
    return z


def lag_matrix(x: NDArray[np.float64], p: int, init: NDArray[np.float64] | None = None) -> NDArray[np.float64]:
    """Rows ``Z_{t-1}`` for ``t = 1..n``.

    ``init`` is ``Z_0 = (X_0, X_{-1}, ..., X_{1-p})``; missing history is
    zero-filled (callers mask those rows in warm-up mode).
    """
    n = x.size
    head = np.zeros(p) if init is None else init
    ext = np.concatenate([head[::-1], x])
    cols = [ext[p - 1 - i : p - 1 - i + n] for i in range(p)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class Evaluated:
    """``T(Z_{t-1})`` and ``V(Z_{t-1})`` along a series, with the warm-up mask."""

    trend: NDArray[np.float64]
    vol: NDArray[np.float64]
    valid: NDArray[np.bool_] = field(repr=False)


def evaluate(
    series: TimeSeries | ArrayLike,
    spec: CharnSpec,
    init: LagState | ArrayLike | None = None,
) -> Evaluated:
    """Evaluate trend and volatility at every lag state of ``series``.

    Without ``init`` a lag-dependent model consumes the first ``p``
    observations as warm-up; those positions are flagged invalid.
    """
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    z0 = _coerce_init(init, spec.p)
    z = lag_matrix(x, spec.p, z0)
    valid = np.ones(x.size, dtype=bool)
    if z0 is None and spec.lag_dependent:
        valid[: spec.p] = False
    tr = spec.trend_at(z)
    v = spec.vol_at(z)
    low = valid & ~(v >= spec.vol_floor)
    if low.any():
        i = int(np.flatnonzero(low)[0])
        raise VolatilityFloorError(i + 1, float(v[i]), spec.vol_floor)
    return Evaluated(tr, v, valid)


def omega(t: int, seg: Segmentation) -> NDArray[np.int64]:
    """Segment indicator ``omega(t)`` for a 1-based index ``t``."""
    if not 1 <= t <= seg.n:
        raise DomainError(f"t={t} outside [1, {seg.n}]")
    out = np.zeros(seg.k + 1, dtype=np.int64)
    out[int(np.searchsorted(seg.breaks, t, side="right"))] = 1
    return out


def residuals(
    series: TimeSeries,
    spec: CharnSpec,
    gamma: MeanShiftParams | ArrayLike,
    seg: Segmentation,
    init: LagState | ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Standardised innovations ``eps_t = (X_t - T - gamma'omega(t)) / V``.

    Returns a length-``n`` vector.  Warm-up positions (lag-dependent model,
    no ``init``) are NaN.
    """
    g = gamma.gamma if isinstance(gamma, MeanShiftParams) else np.asarray(gamma, dtype=np.float64)
    if g.size != seg.k + 1 or seg.n != series.n:
        raise ConfigError("gamma / segmentation do not match the series")
    ev = evaluate(series, spec, init)
    eps = (series.values - ev.trend - g[seg.labels()]) / ev.vol
    eps[~ev.valid] = np.nan
    return eps


def simulate(
    spec: CharnSpec,
    seg: Segmentation,
    shift: MeanShiftParams,
    noise: NoiseDensity,
    n: int | None = None,
    seed: int = 0,
    burn_in: int = 100,
) -> TimeSeries:
    """Draw a path under the local alternative ``gamma + beta / sqrt(n)``.

    The recursion starts from ``Z_0 = 0``; ``burn_in`` extra draws run at the
    segment-1 level and are discarded.  The innovations are exactly
    ``noise.sample(burn_in + n, seed)``, so the path is a deterministic
    function of ``(spec, seg, shift, noise, seed, burn_in)``.
    """
    return simulate_with_init(spec, seg, shift, noise, n, seed, burn_in)[0]


def simulate_with_init(
    spec: CharnSpec,
    seg: Segmentation,
    shift: MeanShiftParams,
    noise: NoiseDensity,
    n: int | None = None,
    seed: int = 0,
    burn_in: int = 100,
) -> tuple[TimeSeries, LagState]:
    """Like :func:`simulate`, also returning the pre-sample lag state ``Z_0``."""
    n = seg.n if n is None else int(n)
    if n != seg.n:
        raise ConfigError(f"n={n} does not match segmentation size {seg.n}")
    if burn_in < 0:
        raise ConfigError("burn_in must be non-negative")
    shift.check(seg)
    level = shift.local(n)
    mean = np.concatenate([np.full(burn_in, level[0]), level[seg.labels()]])
    eps = np.asarray(noise.sample(burn_in + n, seed), dtype=np.float64)

    if spec.vol == "constant" and spec.trend != "expar":
        u = mean + spec.theta[0] * eps
        if spec.trend == "linear_ar":
            x = lfilter([1.0], np.concatenate([[1.0], -np.asarray(spec.rho)]), u)
        else:
            x = u
    else:
        x = _simulate_loop(spec, mean, eps)

    bad = ~np.isfinite(x)
    if bad.any():
        raise SimulationDivergenceError(int(np.flatnonzero(bad)[0]) - burn_in + 1)
    # Z_0 = (X_0, ..., X_{1-p}); positions before the recursion start are 0
    padded = np.concatenate([np.zeros(spec.p), x[:burn_in]])
    z0 = padded[::-1][: spec.p]
    return TimeSeries(x[burn_in:]), LagState(z0.copy())


def _simulate_loop(spec: CharnSpec, mean: NDArray[np.float64], eps: NDArray[np.float64]) -> NDArray[np.float64]:
    p = spec.p
    total = eps.size
    buf = np.zeros(total + p)
    z = np.zeros((1, p))
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(total):
            z[0] = buf[s : s + p][::-1]
            v = spec.vol_at(z)[0]
            if not v >= spec.vol_floor:
                if not np.isfinite(v):
                    buf[s + p :] = np.nan
                    break
                raise VolatilityFloorError(s + 1, float(v), spec.vol_floor)
            buf[s + p] = spec.trend_at(z)[0] + mean[s] + v * eps[s]
            if not np.isfinite(buf[s + p]):
                buf[s + p :] = np.nan
                break
    return buf[p:]


def segment_sums(values: NDArray[np.float64], seg: Segmentation, mask: NDArray[np.bool_] | None = None) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Per-segment sum and count of ``values`` (optionally restricted to ``mask``)."""
    labels = seg.labels()
    if mask is None:
        mask = np.ones(values.size, dtype=bool)
    sums = np.bincount(labels[mask], weights=values[mask], minlength=seg.k + 1)
    counts = np.bincount(labels[mask], minlength=seg.k + 1)
    return sums, counts


def as_series(x: TimeSeries | Sequence[float] | NDArray[np.float64]) -> TimeSeries:
    return x if isinstance(x, TimeSeries) else TimeSeries(np.asarray(x, dtype=np.float64))

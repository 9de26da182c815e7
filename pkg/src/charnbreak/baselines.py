"""Standard CUSUM single-change test used as a comparison baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.stats import kstwobign

from .errors import ConfigError, DegenerateSampleError
from .model_core import TimeSeries, as_series

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray


@dataclass(frozen=True)
class CusumOutcome:
    """CUSUM maximum, its location and the level-``alpha`` decision.

    ``location`` is the last index ``j`` (1-based) before the estimated
    change, so the first post-change observation is ``location + 1``.
    """

    statistic: float
    location: int
    reject: bool
    critical_value: float
    sigma: float


def bartlett_lrv(x: NDArray[np.float64], lag: int | None = None) -> float:
    """Long-run variance with Bartlett weights ``1 - l / (lag + 1)``.

    The default lag is ``floor(n ** (1/3))``.
    """
    n = x.size
    lag = int(np.floor(n ** (1.0 / 3.0))) if lag is None else int(lag)
    e = x - x.mean()
    lrv = e @ e / n
    for ell in range(1, min(lag, n - 1) + 1):
        lrv += 2.0 * (1.0 - ell / (lag + 1.0)) * (e[ell:] @ e[:-ell]) / n
    return float(lrv)


def cusum_statistic(
    series: TimeSeries | ArrayLike,
    alpha: float = 0.05,
    lag: int | None = None,
) -> CusumOutcome:
    """``M_n = max_j |S_j - (j/n) S_n| / (sigma_hat sqrt(n))``, ``1 <= j < n``.

    The decision compares ``M_n`` to the ``1 - alpha`` quantile of the
    Kolmogorov distribution (the supremum of a Brownian bridge).

    Raises
    ------
    DegenerateSampleError
        When the long-run variance estimate is not positive.
    """
    x = as_series(series).values
    n = x.size
    if n < 4:
        raise ConfigError("CUSUM needs at least 4 observations")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    lrv = bartlett_lrv(x, lag)
    if not lrv > 1e-14 * max(1.0, float(np.mean(x * x))):
        raise DegenerateSampleError("zero long-run variance")
    sigma = float(np.sqrt(lrv))
    # centring first keeps the statistic exactly shift invariant
    s = np.cumsum(x - x.mean())[:-1]
    dev = np.abs(s)
    j = int(np.argmax(dev))
    stat = float(dev[j] / (sigma * np.sqrt(n)))
    crit = float(kstwobign.ppf(1.0 - alpha))
    return CusumOutcome(stat, j + 1, stat > crit, crit, sigma)

"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class CharnError(Exception):
    """Base class for all errors raised by charnbreak."""


class ConfigError(CharnError, ValueError):
    """Invalid user configuration (bad priors, unknown keys, short series...)."""


class DomainError(CharnError, ValueError):
    """An argument lies outside the domain of a function."""


class VolatilityFloorError(CharnError, ValueError):
    """The volatility function dropped below the configured floor.

    Attributes
    ----------
    t : int
        1-based time index whose lag state produced the offending value.
    value : float
        The evaluated volatility.
    """

    def __init__(self, t: int, value: float, floor: float):
        self.t = t
        self.value = value
        self.floor = floor
        super().__init__(
            f"volatility {value:.3g} below floor {floor:.3g} at t={t}"
        )


class SimulationDivergenceError(CharnError, ArithmeticError):
    """A simulated path produced non-finite values."""

    def __init__(self, t: int):
        self.t = t
        super().__init__(f"simulated path diverged at t={t}")


class DegenerateSampleError(CharnError, ValueError):
    """Sample too small or without spread for the requested estimator."""


class UnusableScoreError(CharnError, ValueError):
    """Noise family has zero Fisher information; the score test is undefined."""


class DegenerateVarianceError(CharnError, ArithmeticError):
    """The variance plug-in vanished although the alternative is non-trivial."""


class LogDomainError(CharnError, ArithmeticError):
    """A density evaluated to zero where its logarithm is needed."""


class EstimationError(CharnError, ArithmeticError):
    """A numerical estimate came out non-finite."""


class ReplicationError(CharnError, RuntimeError):
    """A Monte Carlo replication failed; ``index`` identifies it."""

    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"replication {index} failed: {reason}")

    def __reduce__(self):
        return type(self), (self.index, self.reason)


class ParseError(CharnError, ValueError):
    """Malformed input file; ``row`` and ``column`` are 1-based when known."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f"row {row}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)

    def __reduce__(self):
        return type(self), (self.args[0], self.row, self.column)

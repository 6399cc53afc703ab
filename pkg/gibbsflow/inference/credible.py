from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ..utils.exceptions import InvalidArgumentError
from ..utils.utils import as_param_vector

PER_COORDINATE_AVERAGE = "per_coordinate_average"
ALL_COORDINATES = "all_coordinates"
COORDINATE = "coordinate"

MIN_DRAWS = 20


@dataclass(frozen=True)
class CredibleInterval:
    lower: float
    upper: float
    level: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise InvalidArgumentError(f"Interval bounds out of order: ({self.lower}, {self.upper}).")

    @property
    def length(self):
        return self.upper - self.lower

    def contains(self, value):
        """Boundary inclusive membership."""
        return self.lower <= value <= self.upper


class CoverageMode(NamedTuple):
    """How a vector parameter counts as covered by its per-coordinate intervals.

    `per_coordinate_average` scores the fraction of covered coordinates, `all_coordinates` scores 1
    only if every coordinate is covered and `coordinate` scores coordinate `k` alone.
    """

    mode: str = PER_COORDINATE_AVERAGE
    k: Optional[int] = None

    @classmethod
    def parse(cls, value):
        """Parses `per_coordinate_average`, `all_coordinates` or `coordinate:<k>`."""
        if isinstance(value, CoverageMode):
            return value
        name, _, index = str(value).partition(":")
        if name in (PER_COORDINATE_AVERAGE, ALL_COORDINATES) and not index:
            return cls(name)
        if name == COORDINATE and index.isdigit():
            return cls(COORDINATE, int(index))
        raise InvalidArgumentError(f"Unknown coverage mode {value}.")

    def __str__(self):
        return f"{COORDINATE}:{self.k}" if self.mode == COORDINATE else self.mode

    def validate(self, param_dim):
        if self.mode == COORDINATE and not 0 <= self.k < param_dim:
            raise InvalidArgumentError(
                f"Coverage coordinate {self.k} out of range for dimension {param_dim}."
            )


def quantile(draws, q):
    """Quantiles by linear interpolation between order statistics at position `(M - 1) q + 1`."""
    return np.quantile(np.asarray(draws, dtype=np.float64), q, axis=0, method="linear")


def _check_alpha(alpha):
    if not 0.0 < alpha < 0.5:
        raise InvalidArgumentError(f"alpha must lie in (0, 0.5), got {alpha}.")


def equal_tailed_interval(draws, alpha, min_draws=MIN_DRAWS):
    """Equal tailed `100(1 - alpha)%` interval `(q_{alpha/2}, q_{1-alpha/2})` of scalar draws.

    :param draws: posterior draws
    :type draws: array-like
    :param alpha: tail probability in (0, 0.5)
    :type alpha: float
    :param min_draws: smallest accepted number of draws
    :type min_draws: int
    :rtype: CredibleInterval
    """
    draws = np.asarray(draws, dtype=np.float64).reshape(-1)
    _check_alpha(alpha)
    if draws.shape[0] < min_draws:
        raise InvalidArgumentError(f"Need at least {min_draws} draws, got {draws.shape[0]}.")
    if not np.all(np.isfinite(draws)):
        raise InvalidArgumentError("Draws contain non-finite values.")

    lower, upper = quantile(draws, [alpha / 2.0, 1.0 - alpha / 2.0])
    return CredibleInterval(float(lower), float(upper), 1.0 - alpha)


def marginal_intervals(draws, alpha, min_draws=MIN_DRAWS):
    """Equal tailed intervals of every coordinate of `(M, param_dim)` draws."""
    draws = np.asarray(draws, dtype=np.float64)
    return [equal_tailed_interval(draws[:, i], alpha, min_draws) for i in range(draws.shape[1])]


def interval_bounds(draws, alpha):
    """Vectorised equal tailed bounds of `(..., M, param_dim)` draws, each of shape `(..., param_dim)`."""
    _check_alpha(alpha)
    bounds = np.quantile(draws, [alpha / 2.0, 1.0 - alpha / 2.0], axis=-2, method="linear")
    return bounds[0], bounds[1]


def coverage_scores(lower, upper, theta, mode):
    """Vectorised coverage events of bounds with shape `(..., param_dim)` against `theta`."""
    mode = CoverageMode.parse(mode)
    covered = (lower <= theta) & (theta <= upper)

    if mode.mode == PER_COORDINATE_AVERAGE:
        return covered.mean(axis=-1)
    if mode.mode == ALL_COORDINATES:
        return covered.all(axis=-1).astype(np.float64)
    return covered[..., mode.k].astype(np.float64)


def coverage_event(intervals, theta, mode=PER_COORDINATE_AVERAGE):
    """Coverage of `theta` by one interval per coordinate, a value in [0, 1].

    :param intervals: interval per coordinate of `theta`
    :type intervals: list(CredibleInterval)
    :param theta: parameter vector
    :param mode: coverage mode
    :type mode: CoverageMode or str
    :rtype: float
    """
    theta = as_param_vector(theta)
    mode = CoverageMode.parse(mode)
    if len(intervals) != theta.shape[0]:
        raise InvalidArgumentError(
            f"Got {len(intervals)} intervals for a parameter of dimension {theta.shape[0]}."
        )
    mode.validate(theta.shape[0])

    lower = np.array([interval.lower for interval in intervals])
    upper = np.array([interval.upper for interval in intervals])
    return float(coverage_scores(lower, upper, theta, mode))

from abc import ABC, abstractmethod

import numpy as np
from marshmallow import Schema, fields
from marshmallow.validate import OneOf
from scipy import stats

from ..utils.exceptions import InvalidArgumentError


class Prior(ABC):
    """Prior density `pi(theta)` evaluated on the log scale, vectorised over leading axes."""

    name = None

    @abstractmethod
    def log_density(self, theta):
        """Log prior density of `theta` with shape `(..., param_dim)`, returns shape `(...)`."""

    def describe(self):
        return self.name


class FlatPrior(Prior):
    """Improper flat prior, `log pi = 0`.

    Posterior propriety is the caller's responsibility. It holds for the check and squared error
    losses with `n >= param_dim`; the misclassification risk is bounded, so use a proper prior there.
    """

    name = "flat"

    def log_density(self, theta):
        return np.zeros(np.shape(theta)[:-1])

    def __eq__(self, other):
        return isinstance(other, FlatPrior)

    def __hash__(self):
        return hash(FlatPrior)


class GaussianPrior(Prior):
    """Independent normal prior with per-coordinate mean and standard deviation."""

    name = "gaussian"

    def __init__(self, mean, sd):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        sd = np.atleast_1d(np.asarray(sd, dtype=np.float64))
        mean, sd = np.broadcast_arrays(mean, sd)

        if not np.all(np.isfinite(mean)):
            raise InvalidArgumentError("Gaussian prior means must be finite.")
        if not np.all(sd > 0) or not np.all(np.isfinite(sd)):
            raise InvalidArgumentError(f"Gaussian prior sds must be positive, got {sd}.")

        self.mean = mean.copy()
        self.sd = sd.copy()

    def log_density(self, theta):
        return np.sum(stats.norm.logpdf(theta, loc=self.mean, scale=self.sd), axis=-1)

    def describe(self):
        return f"gaussian(mean={self.mean.tolist()}, sd={self.sd.tolist()})"

    def __eq__(self, other):
        return (
            isinstance(other, GaussianPrior)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.sd, other.sd)
        )

    def __hash__(self):
        return hash((GaussianPrior, tuple(self.mean), tuple(self.sd)))


# Available priors. Add keys with new priors here.
dictionary_priors = {
    "flat": FlatPrior,
    "gaussian": GaussianPrior,
}


class PriorConfig(Schema):
    kind = fields.String(
        load_default="flat",
        validate=OneOf(dictionary_priors.keys()),
        metadata={"description": "Prior family."},
    )
    mean = fields.List(
        fields.Float,
        load_default=[0.0],
        metadata={"description": "Gaussian prior means, a single value is broadcast."},
    )
    sd = fields.List(
        fields.Float,
        load_default=[10.0],
        metadata={"description": "Gaussian prior standard deviations, a single value is broadcast."},
    )


def build_prior(config, param_dim):
    """Instantiates the prior described by a `PriorConfig` for parameters of dimension `param_dim`."""
    kind = config.get("kind", "flat")
    if kind == "flat":
        return FlatPrior()

    mean = np.broadcast_to(np.asarray(config.get("mean", [0.0]), dtype=np.float64), (param_dim,))
    sd = np.broadcast_to(np.asarray(config.get("sd", [10.0]), dtype=np.float64), (param_dim,))
    return GaussianPrior(mean, sd)

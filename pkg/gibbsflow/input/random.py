from typing import NamedTuple

import numpy as np
from marshmallow import Schema, fields, validates_schema, ValidationError
from marshmallow.validate import Range, Length
from scipy.stats import norm

from ..base import BaseInput
from ..base.configuration import munch_to_dict
from ..models.losses import CheckLoss, MisclassificationLoss, SquaredErrorLoss
from ..models.priors import FlatPrior, GaussianPrior
from ..utils.exceptions import InvalidArgumentError
from ..utils.utils import make_rng, STREAM_DATA
from .dataset import Dataset


class Scenario(NamedTuple):
    data: Dataset
    true_theta: np.ndarray


class ScenarioInput(BaseInput):
    """Simulated data with a known true parameter. Subclasses draw the observations."""

    kind = None

    class _Schema(Schema):
        n = fields.Int(
            required=True,
            validate=Range(min=1),
            metadata={"description": "Sample size.", "example": 100},
        )
        seed = fields.Int(
            load_default=0,
            validate=Range(min=0, max=2**64 - 1),
            metadata={"description": "Seed of the data stream."},
        )

    def to_spec(self):
        """Plain `{"kind", "n", "seed", ...}` description, the inverse of `build_scenario`."""
        return {"kind": self.kind, **munch_to_dict(dict(self.config))}

    def with_config(self, **overrides):
        specs = munch_to_dict(dict(self.config))
        specs.update(overrides)
        return type(self)(specs)

    def with_seed(self, seed):
        return self.with_config(seed=int(seed))

    def with_n(self, n):
        return self.with_config(n=int(n))

    def _rng(self):
        return make_rng(self.config.seed, STREAM_DATA)

    def _draw(self, rng):
        raise NotImplementedError

    def true_theta(self):
        raise NotImplementedError

    def default_loss(self):
        raise NotImplementedError

    def default_prior(self):
        return FlatPrior()

    def generate(self):
        """Draws the dataset, deterministic given the seed."""
        return Scenario(self._draw(self._rng()), self.true_theta())

    def get_dataset(self):
        return self.generate().data

    def describe(self):
        return f"{self.kind}(n={self.config.n})"


class NormalMeanInput(ScenarioInput):
    """`n` i.i.d. N(0, sigma^2) draws, estimating the mean with squared error loss."""

    kind = "normal_mean"

    class _Schema(ScenarioInput._Schema):
        sigma = fields.Float(
            load_default=1.0,
            validate=Range(min=0.0, min_inclusive=False),
            metadata={"description": "Standard deviation of the observations."},
        )

    def _draw(self, rng):
        response = rng.normal(0.0, self.config.sigma, size=self.config.n)
        return Dataset(None, response)

    def true_theta(self):
        return np.zeros(1)

    def default_loss(self):
        return SquaredErrorLoss()


class ClassificationInput(ScenarioInput):
    """Bivariate Gaussian covariates with labels `Y = 2 Ber(F(X1 - X2)) - 1`, F the N(0, noise_sd^2) cdf.

    The optimal classifier separates the classes along the line with intercept 0 and slope 1.
    """

    kind = "classification"

    class _Schema(ScenarioInput._Schema):
        mu = fields.List(
            fields.Float,
            load_default=[5.0, 5.0],
            validate=Length(equal=2),
            metadata={"description": "Covariate mean."},
        )
        cov = fields.List(
            fields.List(fields.Float, validate=Length(equal=2)),
            load_default=[[2.0, 0.5], [0.5, 2.0]],
            validate=Length(equal=2),
            metadata={"description": "Covariate covariance, symmetric positive definite."},
        )
        noise_sd = fields.Float(
            load_default=0.5,
            validate=Range(min=0.0, min_inclusive=False),
            metadata={"description": "Scale of the label noise cdf."},
        )
        prior_sd = fields.Float(
            load_default=10.0,
            validate=Range(min=0.0, min_inclusive=False),
            metadata={"description": "Standard deviation of the default Gaussian prior."},
        )

        @validates_schema
        def _check_cov(self, data, **kwargs):
            cov = np.asarray(data["cov"], dtype=np.float64)
            if not np.allclose(cov, cov.T):
                raise ValidationError("Covariance must be symmetric.", "cov")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ValidationError("Covariance must be positive definite.", "cov")

    def _draw(self, rng):
        n = self.config.n
        chol = np.linalg.cholesky(np.asarray(self.config.cov, dtype=np.float64))
        covariates = np.asarray(self.config.mu) + rng.standard_normal((n, 2)) @ chol.T

        prob = norm.cdf(covariates[:, 0] - covariates[:, 1], scale=self.config.noise_sd)
        labels = np.where(rng.random(n) < prob, 1.0, -1.0)
        return Dataset(covariates, labels, labels=True)

    def true_theta(self):
        return np.array([0.0, 1.0])

    def default_loss(self):
        return MisclassificationLoss(j=0, param_dim=2)

    def default_prior(self):
        return GaussianPrior(np.zeros(2), np.full(2, self.config.prior_sd))


class QuantRegInput(ScenarioInput):
    """Linear model `Y = theta0 + theta1 X + e` with `X ~ ChiSq(2) - 2` and `e ~ N(0, error_sd^2)`.

    The true parameter is the `tau` conditional quantile line `(theta0 + error_sd z_tau, theta1)`.
    """

    kind = "quantreg"

    class _Schema(ScenarioInput._Schema):
        tau = fields.Float(
            load_default=0.5,
            validate=Range(min=0.0, max=1.0, min_inclusive=False, max_inclusive=False),
            metadata={"description": "Quantile level."},
        )
        theta0 = fields.Float(load_default=2.0, metadata={"description": "Intercept."})
        theta1 = fields.Float(load_default=1.0, metadata={"description": "Slope."})
        error_sd = fields.Float(
            load_default=2.0,
            validate=Range(min=0.0, min_inclusive=False),
            metadata={"description": "Standard deviation of the errors."},
        )

    def _draw(self, rng):
        n = self.config.n
        x = rng.chisquare(2, size=n) - 2.0
        errors = rng.normal(0.0, self.config.error_sd, size=n)
        return Dataset(x, self.config.theta0 + self.config.theta1 * x + errors)

    def true_theta(self):
        intercept = self.config.theta0 + self.config.error_sd * norm.ppf(self.config.tau)
        return np.array([intercept, self.config.theta1])

    def default_loss(self):
        return CheckLoss(tau=self.config.tau, param_dim=2)


# Available scenarios. Add keys with new scenarios here.
dictionary_scenarios = {
    NormalMeanInput.kind: NormalMeanInput,
    ClassificationInput.kind: ClassificationInput,
    QuantRegInput.kind: QuantRegInput,
}


def build_scenario(spec):
    """Builds a scenario from `{"kind": ..., "n": ..., "seed": ..., <parameters>}`."""
    if isinstance(spec, ScenarioInput):
        return spec

    specs = dict(spec)
    kind = specs.pop("kind", None)
    if kind not in dictionary_scenarios:
        raise InvalidArgumentError(f"Unknown scenario {kind}, expected one of {sorted(dictionary_scenarios)}.")
    return dictionary_scenarios[kind](specs)

"""Loss functions defining the empirical risk of a Gibbs posterior.

All losses are evaluated in a vectorised way. A loss first maps raw covariates to its design
(`LossModel.design`), then `LossModel.evaluate` computes pointwise losses for parameters of shape
`(..., param_dim)` against designs of shape `(..., n, q)` and responses of shape `(..., n)`. Leading
dimensions broadcast, which is how a batch of chains on a batch of bootstrap datasets is evaluated
at once.
"""

from abc import ABC, abstractmethod
from itertools import combinations
from math import comb

import numpy as np
from marshmallow import Schema, fields
from marshmallow.validate import OneOf, Range

from ..utils.exceptions import InvalidArgumentError
from ..utils.utils import as_param_vector


def _check_kernel(residual, tau):
    return np.abs(residual * (tau - (residual < 0)))


def _sign(margin):
    # sign(0) is taken as +1
    return np.where(margin >= 0, 1.0, -1.0)


class LossModel(ABC):
    """Base class for losses `l_theta(x)` with a fixed parameter dimension."""

    name = None
    # Empirical risk takes finitely many values
    piecewise_constant = False

    def __init__(self, param_dim):
        if int(param_dim) < 1:
            raise InvalidArgumentError(f"param_dim must be positive, got {param_dim}.")
        self._param_dim = int(param_dim)

    @property
    def param_dim(self):
        return self._param_dim

    def check_dataset(self, data):
        """Raises `InvalidArgumentError` if the loss can not be evaluated on `data`."""
        if data.n < 1:
            raise InvalidArgumentError("Empty dataset.")

    def design(self, covariates):
        """Maps raw covariates `(..., n, p)` to the design used by `evaluate`."""
        return covariates

    @abstractmethod
    def evaluate(self, theta, design, response):
        """Pointwise losses, shape `(..., n)`."""

    def pointwise(self, theta, data):
        """Pointwise losses of `theta` on every row of `data`."""
        self.check_dataset(data)
        theta = np.asarray(theta, dtype=np.float64)
        self._check_theta(theta)
        return self.evaluate(theta, self.design(data.covariates), data.response)

    def risk(self, theta, design, response):
        """Empirical risk, the mean of pointwise losses over the last axis.

        numpy reduces contiguous float arrays with pairwise summation, which keeps the result
        stable across row orders.
        """
        return np.mean(self.evaluate(theta, design, response), axis=-1)

    def initial_theta(self, data):
        """Deterministic starting point for optimisation and sampling."""
        return np.zeros(self.param_dim)

    def candidate_thetas(self, data, rng, size):
        """Data-driven start points for optimisation, shape `(K, param_dim)` with `K <= size`."""
        return np.empty((0, self.param_dim))

    def search_scale(self, data):
        """Per-coordinate scale of the initial optimisation simplex, `None` for the optimiser's default."""
        return None

    def _check_theta(self, theta):
        if theta.shape[-1:] != (self.param_dim,):
            raise InvalidArgumentError(
                f"{self.name} loss expects parameters of dimension {self.param_dim}, got shape {theta.shape}."
            )

    def describe(self):
        return self.name

    def __eq__(self, other):
        return type(self) is type(other) and vars(self) == vars(other)

    def __hash__(self):
        return hash((type(self), self._param_dim))

    def __repr__(self):
        return f"{type(self).__name__}(param_dim={self.param_dim})"


class CheckLoss(LossModel):
    """Quantile regression check loss `|(y - x'theta)(tau - 1{y - x'theta < 0})|`.

    The intercept is carried by a leading constant-1 column that `design` prepends to the raw
    covariates, so `param_dim = p + 1`.
    """

    name = "check"

    def __init__(self, tau, param_dim):
        super().__init__(param_dim)
        if not 0.0 < tau < 1.0:
            raise InvalidArgumentError(f"tau must lie strictly inside (0, 1), got {tau}.")
        self.tau = float(tau)

    def check_dataset(self, data):
        super().check_dataset(data)
        if data.p + 1 != self.param_dim:
            raise InvalidArgumentError(
                f"Check loss with param_dim={self.param_dim} needs {self.param_dim - 1} covariates, got {data.p}."
            )

    def design(self, covariates):
        ones = np.ones(covariates.shape[:-1] + (1,))
        return np.concatenate([ones, covariates], axis=-1)

    def evaluate(self, theta, design, response):
        fitted = np.matmul(design, theta[..., None])[..., 0]
        return _check_kernel(response - fitted, self.tau)

    def initial_theta(self, data):
        design = self.design(data.covariates)
        theta, *_ = np.linalg.lstsq(design, data.response, rcond=None)
        return theta

    def describe(self):
        return f"check(tau={self.tau:g})"

    def __hash__(self):
        return hash((type(self), self._param_dim, self.tau))


class MisclassificationLoss(LossModel):
    """Misclassification loss `1 - y sign{x_j - x(j)'theta_1 - theta_0}`, valued in {0, 2}.

    `theta = (theta_0, theta_1)` with the intercept first and `p - 1` slopes, so `param_dim = p`.
    """

    name = "misclassification"
    piecewise_constant = True

    def __init__(self, j, param_dim):
        super().__init__(param_dim)
        if int(j) < 0:
            raise InvalidArgumentError(f"Covariate index j must be non-negative, got {j}.")
        self.j = int(j)

    def check_dataset(self, data):
        super().check_dataset(data)
        if not data.labels:
            raise InvalidArgumentError("Misclassification loss needs a dataset with -1/+1 labels.")
        if data.p != self.param_dim:
            raise InvalidArgumentError(
                f"Misclassification loss with param_dim={self.param_dim} needs {self.param_dim} covariates, got {data.p}."
            )
        if self.j >= data.p:
            raise InvalidArgumentError(f"Covariate index {self.j} out of range for p={data.p}.")

    def design(self, covariates):
        # Distinguished covariate first, remaining covariates after it
        rest = np.delete(covariates, self.j, axis=-1)
        return np.concatenate([covariates[..., self.j : self.j + 1], rest], axis=-1)

    def evaluate(self, theta, design, response):
        margin = (
            design[..., 0]
            - np.matmul(design[..., 1:], theta[..., 1:, None])[..., 0]
            - theta[..., :1]
        )
        return 1.0 - response * _sign(margin)

    def candidate_thetas(self, data, rng, size):
        """Decision boundaries passing through `param_dim` observations.

        Every observation cuts the parameter space along the hyperplane `theta_0 + x(j)'theta_1 = x_j`
        and the risk is constant between cuts, so the vertices of this arrangement reach every cell. All
        vertices are returned when there are at most `size` of them, `size` random ones otherwise.
        """
        design = self.design(data.covariates)
        n, dim = data.n, self.param_dim
        if comb(n, dim) <= size:
            rows = np.array(list(combinations(range(n), dim)), dtype=np.int64).reshape(-1, dim)
        else:
            rows = rng.integers(0, n, size=(size, dim))

        system = np.concatenate([np.ones(rows.shape + (1,)), design[rows, 1:]], axis=-1)
        intercepts = design[rows, 0]
        with np.errstate(invalid="ignore", over="ignore"):
            regular = np.abs(np.linalg.det(system)) > 1e-12
        if not regular.any():
            return np.empty((0, dim))
        vertices = np.linalg.solve(system[regular], intercepts[regular][..., None])[..., 0]
        return vertices[np.all(np.isfinite(vertices), axis=1)]

    def search_scale(self, data):
        spread = self.design(data.covariates).std(axis=0)
        spread = np.where(spread > 0, spread, 1.0)
        return np.concatenate([spread[:1], spread[:1] / spread[1:]])

    def describe(self):
        return f"misclassification(j={self.j})"

    def __hash__(self):
        return hash((type(self), self._param_dim, self.j))


class SquaredErrorLoss(LossModel):
    """Squared error `(x - theta)^2` of a scalar location parameter; `x` is the response."""

    name = "squared_error"

    def __init__(self, param_dim=1):
        super().__init__(param_dim)
        if self.param_dim != 1:
            raise InvalidArgumentError(
                f"Squared error loss has a scalar parameter, got param_dim={param_dim}."
            )

    def evaluate(self, theta, design, response):
        return (response - theta[..., :1]) ** 2

    def initial_theta(self, data):
        return np.array([np.mean(data.response)])


# Available losses. Add keys with new losses here.
dictionary_losses = {
    "check": CheckLoss,
    "misclassification": MisclassificationLoss,
    "squared_error": SquaredErrorLoss,
}


class LossConfig(Schema):
    name = fields.String(
        required=True,
        validate=OneOf(dictionary_losses.keys()),
        metadata={"description": "Loss function defining the empirical risk."},
    )
    tau = fields.Float(
        load_default=0.5,
        validate=Range(min=0.0, max=1.0, min_inclusive=False, max_inclusive=False),
        metadata={"description": "Quantile level of the check loss."},
    )
    j = fields.Int(
        load_default=0,
        validate=Range(min=0),
        metadata={"description": "Distinguished covariate of the misclassification loss."},
    )


def build_loss(config, data):
    """Instantiates the loss described by a `LossConfig` for the covariate dimension of `data`.

    :param config: validated `LossConfig` values
    :type config: Config
    :param data: dataset the loss is evaluated on
    :type data: Dataset
    :rtype: LossModel
    """
    name = config["name"]
    if name == "check":
        loss = CheckLoss(tau=config.get("tau", 0.5), param_dim=data.p + 1)
    elif name == "misclassification":
        loss = MisclassificationLoss(j=config.get("j", 0), param_dim=data.p)
    elif name == "squared_error":
        loss = SquaredErrorLoss()
    else:
        raise InvalidArgumentError(f"Unknown loss {name}.")

    loss.check_dataset(data)
    return loss


def check_loss(theta, obs, tau):
    """Check loss of one observation whose covariate vector already contains the constant 1.

    :param theta: parameter vector, same dimension as `obs.covariates`
    :param obs: observation with a real response
    :type obs: Observation
    :param tau: quantile level in (0, 1)
    :type tau: float
    :rtype: float
    """
    theta = as_param_vector(theta)
    x = np.atleast_1d(np.asarray(obs.covariates, dtype=np.float64))
    if x.shape != theta.shape:
        raise InvalidArgumentError(
            f"Covariate dimension {x.shape[0]} does not match parameter dimension {theta.shape[0]}."
        )
    if not 0.0 < tau < 1.0:
        raise InvalidArgumentError(f"tau must lie strictly inside (0, 1), got {tau}.")
    return float(_check_kernel(obs.response - x @ theta, tau))


def misclassification_loss(theta, obs, j):
    """Misclassification loss of one labelled observation, 0 on the correct side and 2 otherwise.

    :param theta: `(theta_0, theta_1)`, intercept followed by `d - 1` slopes
    :param obs: observation with a -1/+1 label
    :type obs: Observation
    :param j: index of the distinguished covariate
    :type j: int
    :rtype: float
    """
    theta = as_param_vector(theta)
    x = np.atleast_1d(np.asarray(obs.covariates, dtype=np.float64))
    if obs.response not in (-1, 1):
        raise InvalidArgumentError(f"Expected a -1/+1 label, got {obs.response}.")
    if not 0 <= j < x.shape[0]:
        raise InvalidArgumentError(f"Covariate index {j} out of range for d={x.shape[0]}.")
    if theta.shape[0] != x.shape[0]:
        raise InvalidArgumentError(
            f"Expected {x.shape[0]} parameters (intercept and {x.shape[0] - 1} slopes), got {theta.shape[0]}."
        )
    margin = x[j] - np.delete(x, j) @ theta[1:] - theta[0]
    return float(1.0 - obs.response * _sign(margin))


def squared_error_loss(theta, obs):
    """Squared error `(x - theta)^2` where `x` is the response of `obs`."""
    theta = as_param_vector(theta)
    if theta.shape[0] != 1:
        raise InvalidArgumentError(
            f"Squared error loss has a scalar parameter, got dimension {theta.shape[0]}."
        )
    return float((obs.response - theta[0]) ** 2)

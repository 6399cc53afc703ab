import numpy as np

from ..utils.exceptions import InvalidArgumentError, NumericalError
from ..utils.utils import as_param_vector


def empirical_risk(theta, data, loss):
    """Empirical risk `R_n(theta) = (1/n) sum_i l_theta(X_i)`.

    :param theta: parameter vector
    :param data: observations
    :type data: Dataset
    :param loss: loss function
    :type loss: LossModel
    :rtype: float
    """
    if data is None or data.n < 1:
        raise InvalidArgumentError("Empirical risk of an empty dataset is undefined.")
    theta = as_param_vector(theta)
    return float(np.mean(loss.pointwise(theta, data)))


class GibbsTarget:
    """Unnormalised Gibbs posterior `-omega * n * R_n(theta) + log pi(theta)`.

    :param data: observations
    :type data: Dataset
    :param loss: loss function
    :type loss: LossModel
    :param prior: prior
    :type prior: Prior
    :param omega: scale (inverse temperature), positive
    :type omega: float
    """

    def __init__(self, data, loss, prior, omega):
        if not np.isfinite(omega) or omega <= 0:
            raise InvalidArgumentError(f"omega must be positive, got {omega}.")
        loss.check_dataset(data)

        self.data = data
        self.loss = loss
        self.prior = prior
        self.omega = float(omega)
        self.design = loss.design(data.covariates)

    @property
    def n(self):
        return self.data.n

    @property
    def param_dim(self):
        return self.loss.param_dim

    def with_omega(self, omega):
        return GibbsTarget(self.data, self.loss, self.prior, omega)

    def risk(self, theta):
        """Empirical risk, vectorised over leading axes of `theta`."""
        losses = self.loss.evaluate(np.asarray(theta, dtype=np.float64), self.design, self.data.response)
        _raise_on_nan(losses)
        return np.mean(losses, axis=-1)

    def log_density(self, theta):
        """Unnormalised log density, vectorised over leading axes of `theta`."""
        theta = np.asarray(theta, dtype=np.float64)
        return -self.omega * self.n * self.risk(theta) + self.prior.log_density(theta)


class TargetBatch:
    """Gibbs targets on equally sized datasets, evaluated together.

    Chain `b` is evaluated against `targets[b]`; designs and responses are stacked so one numpy
    call covers the whole batch.

    :param targets: targets sharing the loss, the prior and the sample size
    :type targets: list(GibbsTarget)
    """

    def __init__(self, targets):
        targets = list(targets)
        if not targets:
            raise InvalidArgumentError("Empty batch of targets.")

        first = targets[0]
        for target in targets[1:]:
            if target.n != first.n or target.loss != first.loss or target.prior != first.prior:
                raise InvalidArgumentError(
                    "Batched targets must share sample size, loss and prior."
                )

        self.targets = targets
        self.loss = first.loss
        self.prior = first.prior
        self.n = first.n
        self.omega = np.array([t.omega for t in targets])
        self.design = np.stack([t.design for t in targets])
        self.response = np.stack([t.data.response for t in targets])

    def __len__(self):
        return len(self.targets)

    @property
    def param_dim(self):
        return self.loss.param_dim

    def log_density(self, theta):
        """Log densities of `theta` with shape `(B, param_dim)`, returns shape `(B,)`."""
        losses = self.loss.evaluate(theta, self.design, self.response)
        _raise_on_nan(losses)
        risk = np.mean(losses, axis=-1)
        return -self.omega * self.n * risk + self.prior.log_density(theta)


def _raise_on_nan(losses):
    nan_mask = np.isnan(losses)
    if nan_mask.any():
        index = int(np.flatnonzero(nan_mask.reshape(-1, losses.shape[-1]).any(axis=0))[0])
        raise NumericalError(f"Loss is NaN at observation {index}.", index=index)


def gibbs_log_density(target, theta):
    """Unnormalised Gibbs log density of a single parameter vector.

    :param target: Gibbs target
    :type target: GibbsTarget
    :param theta: parameter vector
    :rtype: float
    """
    theta = as_param_vector(theta)
    if theta.shape[0] != target.param_dim:
        raise InvalidArgumentError(
            f"Expected a parameter of dimension {target.param_dim}, got {theta.shape[0]}."
        )
    return float(target.log_density(theta))

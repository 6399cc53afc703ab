import logging
from dataclasses import dataclass

import numpy as np
from marshmallow import Schema, fields
from marshmallow.validate import Range
from scipy.optimize import minimize

from ..base.configuration import build_config
from ..models.target import empirical_risk
from ..utils.exceptions import InvalidArgumentError
from ..utils.utils import make_rng, as_param_vector, STREAM_RESTART

logger = logging.getLogger(__name__)


class OptimizerConfig(Schema):
    restarts = fields.Int(
        load_default=5,
        validate=Range(min=1),
        metadata={"description": "Number of Nelder-Mead runs."},
    )
    max_evals = fields.Int(
        load_default=None,
        allow_none=True,
        validate=Range(min=1),
        metadata={"description": "Risk evaluations per run. Defaults to 2000 * param_dim."},
    )
    x_tol = fields.Float(
        load_default=1e-8,
        validate=Range(min=0.0, min_inclusive=False),
        metadata={"description": "Simplex size tolerance."},
    )
    f_tol = fields.Float(
        load_default=1e-10,
        validate=Range(min=0.0, min_inclusive=False),
        metadata={"description": "Risk spread tolerance across the simplex."},
    )
    start_spread = fields.Float(
        load_default=0.5,
        validate=Range(min=0.0),
        metadata={"description": "Relative perturbation of the restart points around the initializer."},
    )
    n_candidates = fields.Int(
        load_default=5000,
        validate=Range(min=0),
        metadata={"description": "Candidate start points screened on piecewise constant risks."},
    )
    simplex_size = fields.Float(
        load_default=0.1,
        validate=Range(min=0.0, min_inclusive=False),
        metadata={"description": "Initial simplex edge, relative to the loss' search scale."},
    )
    seed = fields.Int(
        load_default=0,
        validate=Range(min=0, max=2**64 - 1),
        metadata={"description": "Seed of the restart perturbations."},
    )


@dataclass(frozen=True)
class MEstimate:
    theta_hat: np.ndarray
    risk_value: float
    converged: bool
    bias_corrected: bool = False


def _nelder_mead(func, start, cfg, max_evals, scale=None, max_relaunches=5):
    """Nelder-Mead relaunched from its own solution while that still lowers the risk.

    A fresh simplex around the last solution gets the search unstuck when the simplex has collapsed
    along a kink of a nonsmooth risk. With `scale`, the initial simplex has edges `simplex_size * scale`
    along the coordinate axes instead of scipy's 5% perturbation of the start point.
    """

    def _options(point):
        options = {
            "xatol": cfg.x_tol,
            "fatol": cfg.f_tol,
            "maxfev": max_evals,
            "maxiter": max_evals,
        }
        if scale is not None:
            options["initial_simplex"] = np.vstack([point, point + np.diag(cfg.simplex_size * scale)])
        return options

    result = minimize(func, start, method="Nelder-Mead", options=_options(start))
    theta, risk, success = np.atleast_1d(result.x).astype(np.float64), float(result.fun), bool(result.success)

    for _ in range(max_relaunches):
        result = minimize(func, theta, method="Nelder-Mead", options=_options(theta))
        if not result.fun < risk - cfg.f_tol:
            if result.fun < risk:
                theta, risk = np.atleast_1d(result.x).astype(np.float64), float(result.fun)
            break
        theta, risk = np.atleast_1d(result.x).astype(np.float64), float(result.fun)
        success = success or bool(result.success)

    return theta, risk, success


def _screened_starts(data, loss, design, x0, cfg):
    """Lowest risk points among the initializer and the loss' candidates, initializer first on ties."""
    rng = make_rng(cfg.seed, STREAM_RESTART, 0)
    candidates = np.concatenate([x0[None, :], loss.candidate_thetas(data, rng, cfg.n_candidates)])
    risks = loss.risk(candidates, design, data.response)
    order = np.argsort(risks, kind="stable")[: cfg.restarts]
    logger.debug(
        "Screened %d start points, best risk %.6g", len(candidates), float(risks[order[0]])
    )
    return [candidates[i] for i in order]


def minimize_risk(data, loss, cfg=None):
    """M-estimator `argmin R_n(theta)` by restarted Nelder-Mead.

    For smooth and convex losses the first run starts at the loss' initializer (least squares for
    regression losses), the others at perturbations of it. Piecewise constant risks are flat almost
    everywhere, so the runs start instead from the lowest risk candidates of
    `LossModel.candidate_thetas` with a simplex sized by `LossModel.search_scale`. The best point
    wins; ties go to the earliest run, so on piecewise constant risks the first minimizer found is
    returned.

    :param data: observations, `n >= param_dim`
    :type data: Dataset
    :param loss: loss function
    :type loss: LossModel
    :param cfg: optimizer configuration (`OptimizerConfig` values)
    :type cfg: dict or Config or None
    :rtype: MEstimate
    """
    cfg = build_config(OptimizerConfig, cfg)
    loss.check_dataset(data)
    dim = loss.param_dim
    if data.n < dim:
        raise InvalidArgumentError(f"Need n >= param_dim, got n={data.n} and param_dim={dim}.")

    design = loss.design(data.covariates)
    response = data.response

    def _risk(theta):
        return float(loss.risk(np.asarray(theta, dtype=np.float64), design, response))

    x0 = as_param_vector(loss.initial_theta(data), "initializer")
    max_evals = cfg.max_evals or 2000 * dim

    if loss.piecewise_constant:
        starts = _screened_starts(data, loss, design, x0, cfg)
        scale = loss.search_scale(data)
    else:
        starts = [x0]
        for restart in range(1, cfg.restarts):
            rng = make_rng(cfg.seed, STREAM_RESTART, restart)
            starts.append(x0 + cfg.start_spread * (np.abs(x0) + 1.0) * rng.standard_normal(dim))
        scale = None

    best_theta, best_risk = x0, _risk(x0)
    converged = False
    for start in starts:
        theta, risk, success = _nelder_mead(_risk, start, cfg, max_evals, scale=scale)
        converged = converged or success
        if risk < best_risk:
            best_theta, best_risk = theta, risk

    if not converged:
        logger.warning(
            "Nelder-Mead exhausted %d evaluations on all %d restarts, returning best point.",
            max_evals,
            cfg.restarts,
        )

    best_theta = np.atleast_1d(best_theta).copy()
    return MEstimate(
        theta_hat=best_theta,
        risk_value=empirical_risk(best_theta, data, loss),
        converged=converged,
    )


def bootstrap_estimates(boot_sets, loss, cfg=None):
    """M-estimates on each bootstrap dataset."""
    return [minimize_risk(boot, loss, cfg).theta_hat for boot in boot_sets]


def bias_corrected_estimate(data, loss, boot_estimates, theta_hat=None, cfg=None):
    """Bootstrap bias corrected M-estimate `2 theta_hat - mean(boot_estimates)`.

    :param data: observations
    :type data: Dataset
    :param loss: loss function
    :type loss: LossModel
    :param boot_estimates: M-estimates computed on bootstrap resamples of `data`
    :type boot_estimates: list(np.ndarray)
    :param theta_hat: M-estimate on `data`, computed with `minimize_risk` if not given
    :type theta_hat: np.ndarray or None
    :rtype: np.ndarray
    """
    if len(boot_estimates) == 0:
        raise InvalidArgumentError("Bias correction needs at least one bootstrap estimate.")
    if theta_hat is None:
        theta_hat = minimize_risk(data, loss, cfg).theta_hat
    theta_hat = as_param_vector(theta_hat, "theta_hat")

    boot = np.array([as_param_vector(b, "bootstrap estimate") for b in boot_estimates])
    if boot.ndim != 2 or boot.shape[1] != theta_hat.shape[0]:
        raise InvalidArgumentError(
            f"Bootstrap estimates of shape {boot.shape} do not match theta_hat of dimension {theta_hat.shape[0]}."
        )

    return 2.0 * theta_hat - boot.mean(axis=0)


def corrected_mestimate(data, loss, boot_estimates, cfg=None):
    """`MEstimate` at the bias corrected point."""
    estimate = minimize_risk(data, loss, cfg)
    theta = bias_corrected_estimate(data, loss, boot_estimates, theta_hat=estimate.theta_hat)
    return MEstimate(
        theta_hat=theta,
        risk_value=empirical_risk(theta, data, loss),
        converged=estimate.converged,
        bias_corrected=True,
    )

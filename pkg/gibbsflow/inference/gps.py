"""Gibbs posterior scaling: choose `omega` so that credible intervals reach nominal coverage.

Coverage of the `omega`-scaled posterior is estimated on bootstrap resamples of the data, with the
M-estimate standing in for the unknown parameter, and the calibration equation
`c_hat(omega) = 1 - alpha` is solved by stochastic approximation
`omega <- max(omega_min, omega + kappa_t (c_hat(omega) - (1 - alpha)))`, `kappa_t = kappa0 t^-b`.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd
from marshmallow import Schema, fields, validates_schema, ValidationError
from marshmallow.validate import Range

from ..base.configuration import build_config
from ..models.target import GibbsTarget
from ..utils.exceptions import InvalidArgumentError, CalibrationError
from ..utils.utils import make_rng, as_param_vector, STREAM_BOOTSTRAP, STREAM_CHAIN
from .credible import CoverageMode, interval_bounds, coverage_scores, PER_COORDINATE_AVERAGE
from .mestimator import minimize_risk, bootstrap_estimates, bias_corrected_estimate
from .sampler import mh_sample_batch

logger = logging.getLogger(__name__)

# Slack for comparing coverages that are multiples of 1/B against the tolerance
_TOL_SLACK = 1e-12


class GpsConfig(Schema):
    alpha = fields.Float(
        load_default=0.05,
        validate=Range(min=0.0, max=0.5, min_inclusive=False, max_inclusive=False),
        metadata={"description": "Credible intervals have level 1 - alpha."},
    )
    B = fields.Int(
        load_default=100,
        validate=Range(min=1),
        metadata={"description": "Number of bootstrap resamples."},
    )
    M = fields.Int(
        load_default=2000,
        validate=Range(min=1),
        metadata={"description": "Retained posterior draws per chain."},
    )
    burn_in = fields.Int(
        load_default=None,
        allow_none=True,
        validate=Range(min=0),
        metadata={"description": "Burn-in of the first chains. Defaults to M."},
    )
    omega_init = fields.Float(
        load_default=1.0,
        validate=Range(min=0.0, min_inclusive=False),
        metadata={"description": "Starting scale omega^(0)."},
    )
    kappa0 = fields.Float(
        load_default=1.0,
        validate=Range(min=0.0, min_inclusive=False),
        metadata={"description": "Step size constant of kappa_t = kappa0 t^-kappa_exponent."},
    )
    kappa_exponent = fields.Float(
        load_default=0.75,
        validate=Range(min=0.5, max=1.0, min_inclusive=False, max_inclusive=True),
        metadata={"description": "Step size decay exponent, in (1/2, 1]."},
    )
    eps_tol = fields.Float(
        load_default=0.01,
        validate=Range(min=0.0, min_inclusive=False),
        metadata={"description": "Stop when |c_hat - (1 - alpha)| <= eps_tol."},
    )
    max_iter = fields.Int(
        load_default=50,
        validate=Range(min=1),
        metadata={"description": "Maximum number of stochastic approximation steps."},
    )
    omega_min = fields.Float(
        load_default=1e-8,
        validate=Range(min=0.0, min_inclusive=False),
        metadata={"description": "Lower clamp of the scale."},
    )
    coverage_mode = fields.String(
        load_default=PER_COORDINATE_AVERAGE,
        metadata={"description": "per_coordinate_average, all_coordinates or coordinate:<k>."},
    )
    warm_start = fields.Bool(
        load_default=True,
        metadata={"description": "Re-enter chains from their last state and step scale when omega changes."},
    )
    warm_burn_in = fields.Int(
        load_default=None,
        allow_none=True,
        validate=Range(min=0),
        metadata={"description": "Burn-in of warm started chains. Defaults to a full burn-in."},
    )
    bias_correction = fields.Bool(
        load_default=False,
        metadata={"description": "Anchor coverage at the bootstrap bias corrected M-estimate."},
    )
    target_accept = fields.Float(
        load_default=0.3,
        validate=Range(min=0.1, max=0.6, min_inclusive=False, max_inclusive=False),
        metadata={"description": "Acceptance rate targeted by the sampler adaptation."},
    )
    max_degenerate_fraction = fields.Float(
        load_default=0.2,
        validate=Range(min=0.0, max=1.0),
        metadata={"description": "Largest tolerated fraction of degenerate chains per coverage estimate."},
    )
    seed = fields.Int(
        load_default=0,
        validate=Range(min=0, max=2**64 - 1),
        metadata={"description": "Master seed of bootstrap and chain streams."},
    )

    @validates_schema
    def _check_omega(self, data, **kwargs):
        if data["omega_init"] < data["omega_min"]:
            raise ValidationError("omega_init must not be below omega_min.", "omega_init")
        try:
            CoverageMode.parse(data["coverage_mode"])
        except InvalidArgumentError as err:
            raise ValidationError(str(err), "coverage_mode")


@dataclass(frozen=True)
class TraceEntry:
    t: int
    omega: float
    c_hat: float
    kappa: float


@dataclass(frozen=True)
class GpsResult:
    """Outcome of a calibration run.

    `trace[t]` holds `omega^(t)`, the coverage estimated at it and the step size `kappa_{t+1}` of the
    update that follows. `omega_n` is the post-update scale `omega^(t+1)` of the last entry.
    """

    omega_n: float
    trace: List[TraceEntry]
    converged: bool
    iterations: int
    theta_hat: np.ndarray
    anchor: np.ndarray
    n_degenerate: int = 0
    boot_indices: np.ndarray = field(default=None, repr=False, compare=False)

    def trace_frame(self):
        return pd.DataFrame(
            [(e.t, e.omega, e.c_hat, e.kappa) for e in self.trace],
            columns=["t", "omega", "c_hat", "kappa"],
        )

    def to_csv(self, path_or_buf):
        """Writes the trace with columns `t,omega,c_hat,kappa`."""
        self.trace_frame().to_csv(path_or_buf, index=False, float_format="%.10g")


def bootstrap_indices(n, B, seed):
    """`(B, n)` row indices drawn uniformly with replacement, deterministic given `seed`."""
    if B < 1:
        raise InvalidArgumentError(f"Need at least one bootstrap replicate, got B={B}.")
    return make_rng(seed, STREAM_BOOTSTRAP).integers(0, n, size=(B, n))


def bootstrap_resample(data, B, seed):
    """Draws `B` bootstrap datasets of size `n` from `data`.

    :param data: observations
    :type data: Dataset
    :param B: number of resamples
    :type B: int
    :param seed: master seed
    :type seed: int
    :rtype: list(Dataset)
    """
    return [data.take(indices) for indices in bootstrap_indices(data.n, B, seed)]


def kappa(t, cfg):
    """Step size `kappa_t = kappa0 t^-kappa_exponent`."""
    return cfg["kappa0"] * float(t) ** (-cfg["kappa_exponent"])


def sa_step(omega_t, c_hat, t, cfg=None):
    """One stochastic approximation update of the scale.

    :param omega_t: current scale
    :type omega_t: float
    :param c_hat: coverage estimated at `omega_t`
    :type c_hat: float
    :param t: step index, starting at 1
    :type t: int
    :param cfg: `GpsConfig` values (alpha, kappa0, kappa_exponent, omega_min are used)
    :type cfg: dict or Config or None
    :return: `max(omega_min, omega_t + kappa_t (c_hat - (1 - alpha)))`
    :rtype: float
    """
    if t < 1:
        raise InvalidArgumentError(f"Step index starts at 1, got {t}.")
    cfg = build_config(GpsConfig, cfg)
    return max(cfg.omega_min, omega_t + kappa(t, cfg) * (c_hat - (1.0 - cfg.alpha)))


def _sampler_config(cfg, burn_in=None):
    return {
        "M": cfg.M,
        "burn_in": burn_in,
        "adapt": True,
        "target_accept": cfg.target_accept,
        "seed": cfg.seed,
    }


def sample_posteriors(
    omega, datasets, loss, prior, sampler_cfg=None, iteration=0, inits=None, step_scales=None, omega_min=1e-8
):
    """Samples the `omega`-Gibbs posterior of every dataset, chain `b` on stream `(seed, iteration, b)`.

    :rtype: list(PosteriorSample)
    """
    if not np.isfinite(omega) or omega < omega_min or omega <= 0:
        raise InvalidArgumentError(f"omega must be finite and at least omega_min={omega_min:g}, got {omega}.")
    targets = [GibbsTarget(data, loss, prior, omega) for data in datasets]
    stream_keys = [(STREAM_CHAIN, iteration, b) for b in range(len(targets))]
    return mh_sample_batch(targets, sampler_cfg, inits=inits, step_scales=step_scales, stream_keys=stream_keys)


def coverage_from_samples(samples, anchor, alpha, mode=PER_COORDINATE_AVERAGE, max_degenerate_fraction=0.2):
    """Average coverage of `anchor` by the equal tailed intervals of each sample.

    Degenerate chains are left out of the average.

    :return: coverage estimate and number of degenerate chains
    :rtype: (float, int)
    """
    anchor = as_param_vector(anchor, "anchor")
    mode = CoverageMode.parse(mode)
    mode.validate(anchor.shape[0])

    healthy = [s for s in samples if not s.degenerate]
    n_degenerate = len(samples) - len(healthy)
    if not healthy or n_degenerate > max_degenerate_fraction * len(samples):
        raise CalibrationError(
            f"{n_degenerate} of {len(samples)} chains are degenerate, coverage can not be estimated."
        )
    if n_degenerate:
        logger.warning("Excluding %d degenerate chains from the coverage estimate.", n_degenerate)

    draws = np.stack([s.draws for s in healthy])
    lower, upper = interval_bounds(draws, alpha)
    return float(np.mean(coverage_scores(lower, upper, anchor, mode))), n_degenerate


def empirical_coverage(
    omega,
    boot_sets,
    theta_anchor,
    alpha,
    loss,
    prior,
    sampler_cfg=None,
    mode=PER_COORDINATE_AVERAGE,
    iteration=0,
    inits=None,
    step_scales=None,
    max_degenerate_fraction=0.2,
    omega_min=1e-8,
):
    """Bootstrap estimate of the coverage `c_hat(omega)` of `theta_anchor`.

    For each bootstrap set the `omega`-Gibbs posterior is sampled, per-coordinate equal tailed
    `100(1 - alpha)%` intervals are formed and scored against `theta_anchor`; scores are averaged.

    :param omega: scale
    :type omega: float
    :param boot_sets: bootstrap datasets
    :type boot_sets: list(Dataset)
    :param theta_anchor: M-estimate on the original data
    :param alpha: tail probability
    :type alpha: float
    :param loss: loss function
    :type loss: LossModel
    :param prior: prior
    :type prior: Prior
    :param sampler_cfg: `SamplerConfig` values; chains start at `theta_anchor` unless `inits` is given
    :type sampler_cfg: dict or Config or None
    :param mode: coverage mode
    :type mode: CoverageMode or str
    :param omega_min: smallest admissible scale, smaller ones raise `InvalidArgumentError`
    :type omega_min: float
    :rtype: float
    """
    if inits is None:
        inits = [as_param_vector(theta_anchor, "theta_anchor")] * len(boot_sets)
    samples = sample_posteriors(omega, boot_sets, loss, prior, sampler_cfg, iteration, inits, step_scales, omega_min)
    c_hat, _ = coverage_from_samples(samples, theta_anchor, alpha, mode, max_degenerate_fraction)
    return c_hat


def coverage_curve(
    omegas, boot_sets, theta_anchor, alpha, loss, prior, sampler_cfg=None, mode=PER_COORDINATE_AVERAGE, omega_min=1e-8
):
    """Coverage estimates on a grid of scales, all sharing bootstrap sets and chain streams."""
    return np.array(
        [
            empirical_coverage(
                omega, boot_sets, theta_anchor, alpha, loss, prior, sampler_cfg, mode, omega_min=omega_min
            )
            for omega in omegas
        ]
    )


def stochastic_approximation(datasets, anchor, loss, prior, cfg=None, theta_hat=None):
    """Solves `c_hat(omega) = 1 - alpha` over fixed `datasets` with coverage anchored at `anchor`.

    Chains are first sampled at `omega^(0)`. Each step estimates the coverage at the current scale,
    updates the scale and re-samples all chains at the new scale. The loop stops once the coverage at
    the current scale is within `eps_tol` of `1 - alpha` and returns the updated scale, or after
    `max_iter` steps with `converged=False`.

    :param datasets: datasets the coverage is estimated on, fixed for the whole run
    :type datasets: list(Dataset)
    :param anchor: parameter whose coverage is calibrated
    :param loss: loss function
    :type loss: LossModel
    :param prior: prior
    :type prior: Prior
    :param cfg: `GpsConfig` values
    :type cfg: dict or Config or None
    :rtype: GpsResult
    """
    cfg = build_config(GpsConfig, cfg)
    anchor = as_param_vector(anchor, "anchor")
    mode = CoverageMode.parse(cfg.coverage_mode)
    mode.validate(anchor.shape[0])
    target_coverage = 1.0 - cfg.alpha

    omega = cfg.omega_init
    inits = [anchor] * len(datasets)
    samples = sample_posteriors(
        omega, datasets, loss, prior, _sampler_config(cfg, cfg.burn_in), 0, inits, omega_min=cfg.omega_min
    )

    trace = []
    n_degenerate = 0
    converged = False
    for t in range(1, cfg.max_iter + 1):
        c_hat, degenerate = coverage_from_samples(
            samples, anchor, cfg.alpha, mode, cfg.max_degenerate_fraction
        )
        n_degenerate += degenerate
        step = kappa(t, cfg)
        new_omega = max(cfg.omega_min, omega + step * (c_hat - target_coverage))
        trace.append(TraceEntry(t - 1, omega, c_hat, step))
        logger.info("GPS step %d: omega=%.6g c_hat=%.4f kappa=%.4g", t - 1, omega, c_hat, step)

        if abs(c_hat - target_coverage) <= cfg.eps_tol + _TOL_SLACK:
            converged = True
            omega = new_omega
            break

        if t < cfg.max_iter:
            if cfg.warm_start:
                inits = [s.final_state for s in samples]
                # Posterior spread scales like omega^-1/2
                step_scales = [s.final_step_scale * np.sqrt(omega / new_omega) for s in samples]
                sampler_cfg = _sampler_config(cfg, cfg.warm_burn_in if cfg.warm_burn_in is not None else cfg.burn_in)
            else:
                inits = [anchor] * len(datasets)
                step_scales = None
                sampler_cfg = _sampler_config(cfg, cfg.burn_in)
            samples = sample_posteriors(
                new_omega, datasets, loss, prior, sampler_cfg, t, inits, step_scales, cfg.omega_min
            )
        omega = new_omega

    if converged:
        logger.info("GPS converged after %d steps: omega_n=%.6g", len(trace), omega)
    else:
        logger.warning("GPS reached max_iter=%d without converging: omega=%.6g", cfg.max_iter, omega)

    return GpsResult(
        omega_n=float(omega),
        trace=trace,
        converged=converged,
        iterations=len(trace),
        theta_hat=anchor if theta_hat is None else as_param_vector(theta_hat),
        anchor=anchor,
        n_degenerate=n_degenerate,
    )


def gps_calibrate(data, loss, prior, cfg=None, optimizer_cfg=None):
    """Calibrates the scale of the Gibbs posterior of `data` with the GPS algorithm.

    Bootstrap sets are drawn once, the coverage anchor is the M-estimate on the original data (or its
    bias corrected version with `cfg.bias_correction`), then `stochastic_approximation` runs.

    :param data: observations, `n >= param_dim`
    :type data: Dataset
    :param loss: loss function
    :type loss: LossModel
    :param prior: prior
    :type prior: Prior
    :param cfg: `GpsConfig` values
    :type cfg: dict or Config or None
    :param optimizer_cfg: `OptimizerConfig` values for the M-estimates, seeded with `cfg.seed` by default
    :type optimizer_cfg: dict or Config or None
    :rtype: GpsResult
    """
    cfg = build_config(GpsConfig, cfg)
    optimizer_cfg = optimizer_cfg if optimizer_cfg is not None else {"seed": cfg.seed}

    estimate = minimize_risk(data, loss, optimizer_cfg)
    indices = bootstrap_indices(data.n, cfg.B, cfg.seed)
    boot_sets = [data.take(idx) for idx in indices]

    anchor = estimate.theta_hat
    if cfg.bias_correction:
        anchor = bias_corrected_estimate(
            data, loss, bootstrap_estimates(boot_sets, loss, optimizer_cfg), theta_hat=estimate.theta_hat
        )

    logger.info(
        "GPS on n=%d with %s loss, anchor=%s, B=%d, M=%d",
        data.n,
        loss.describe(),
        np.array2string(anchor, precision=4),
        cfg.B,
        cfg.M,
    )

    result = stochastic_approximation(boot_sets, anchor, loss, prior, cfg, theta_hat=estimate.theta_hat)
    return GpsResult(
        omega_n=result.omega_n,
        trace=result.trace,
        converged=result.converged,
        iterations=result.iterations,
        theta_hat=result.theta_hat,
        anchor=result.anchor,
        n_degenerate=result.n_degenerate,
        boot_indices=indices,
    )

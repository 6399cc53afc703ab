"""Monte Carlo coverage studies of calibrated and fixed-scale Gibbs posteriors."""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd
from scipy.stats import norm

from .base.configuration import build_config
from .inference.credible import CoverageMode, interval_bounds, PER_COORDINATE_AVERAGE
from .inference.gps import GpsConfig, gps_calibrate, sample_posteriors, coverage_from_samples, stochastic_approximation
from .inference.mestimator import minimize_risk
from .inference.sampler import mh_sample_batch
from .input.random import build_scenario
from .models.target import GibbsTarget
from .utils.exceptions import InvalidArgumentError, StudyError
from .utils.utils import derive_seed, STREAM_REPLICATION, STREAM_FINAL

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.05


def generate(spec):
    """Draws the dataset of a scenario together with its true parameter.

    :param spec: scenario, or its `{"kind", "n", "seed", ...}` description
    :type spec: ScenarioInput or dict
    :rtype: Scenario
    """
    return build_scenario(spec).generate()


def asymptotic_omega_oracle(tau, error_sd):
    """Scale `f(0) / (tau (1 - tau))`, f the N(0, error_sd^2) density.

    For the check loss with normal location errors this equates the asymptotic variance of the Gibbs
    posterior with the sandwich variance of the M-estimator.
    """
    if not 0.0 < tau < 1.0:
        raise InvalidArgumentError(f"tau must lie in (0, 1), got {tau}.")
    if not error_sd > 0:
        raise InvalidArgumentError(f"error_sd must be positive, got {error_sd}.")
    return float(norm.pdf(0.0, scale=error_sd) / (tau * (1.0 - tau)))


class ReplicationOutcome(NamedTuple):
    index: int
    omega: float
    covered: np.ndarray
    lengths: np.ndarray
    posterior_sd: np.ndarray
    converged: bool = True
    error: Optional[str] = None


@dataclass(frozen=True)
class StudyReport:
    """Aggregated coverage study, one entry per parameter coordinate.

    Coverage, lengths and posterior sds are averaged over the `replications` successful runs only.
    """

    scenario: str
    n: int
    alpha: float
    coverage: np.ndarray
    mean_length: np.ndarray
    mean_sd: np.ndarray
    joint_coverage: float
    omega_samples: np.ndarray
    replications: int
    failures: int
    prior: str
    coverage_mode: str
    converged_fraction: float = 1.0

    @property
    def param_dim(self):
        return self.coverage.shape[0]

    @property
    def omega_mean(self):
        return float(np.mean(self.omega_samples))

    @property
    def omega_iqr(self):
        q25, q75 = np.percentile(self.omega_samples, [25, 75])
        return float(q75 - q25)

    def to_frame(self):
        """One row per parameter."""
        return pd.DataFrame(
            {
                "scenario": self.scenario,
                "n": self.n,
                "parameter": [f"theta_{i}" for i in range(self.param_dim)],
                "coverage": self.coverage,
                "mean_length": self.mean_length,
                "mean_sd": self.mean_sd,
                "joint_coverage": self.joint_coverage,
                "omega_mean": self.omega_mean,
                "omega_iqr": self.omega_iqr,
                "converged_fraction": self.converged_fraction,
                "replications": self.replications,
                "failures": self.failures,
                "alpha": self.alpha,
                "prior": self.prior,
                "coverage_mode": self.coverage_mode,
            }
        )

    def omega_frame(self):
        return pd.DataFrame({"replication": np.arange(len(self.omega_samples)), "omega": self.omega_samples})

    def to_csv(self, path, omega_path=None):
        """Writes the report to `path` and the scale samples to `omega_path` (`<stem>_omega.csv` by default)."""
        if omega_path is None:
            stem, _ = os.path.splitext(path)
            omega_path = f"{stem}_omega.csv"
        self.to_frame().to_csv(path, index=False, float_format="%.6g")
        self.omega_frame().to_csv(omega_path, index=False, float_format="%.10g")
        return omega_path


def _final_posterior(data, loss, prior, omega, init, cfg, seed):
    sampler_cfg = {"M": cfg.M, "burn_in": cfg.burn_in, "target_accept": cfg.target_accept, "seed": seed}
    target = GibbsTarget(data, loss, prior, omega)
    return mh_sample_batch([target], sampler_cfg, inits=[init], stream_keys=[(STREAM_FINAL,)])[0]


def _replicate(job):
    """Runs one replication. Picklable entry point of the worker processes."""
    index, spec, cfg, omega, prior, seed = job
    scenario = build_scenario(spec)
    rep_seed = derive_seed(seed, STREAM_REPLICATION, index)
    try:
        data, true_theta = scenario.with_seed(rep_seed).generate()
        loss = scenario.default_loss()
        prior = scenario.default_prior() if prior is None else prior

        if omega is None:
            result = gps_calibrate(data, loss, prior, build_config(GpsConfig, cfg, seed=rep_seed))
            omega_n, theta_hat, converged = result.omega_n, result.theta_hat, result.converged
        else:
            theta_hat = minimize_risk(data, loss, {"seed": rep_seed}).theta_hat
            omega_n, converged = omega, True

        sample = _final_posterior(data, loss, prior, omega_n, theta_hat, cfg, rep_seed)
        lower, upper = interval_bounds(sample.draws, cfg.alpha)
        covered = (lower <= true_theta) & (true_theta <= upper)
        return ReplicationOutcome(index, omega_n, covered, upper - lower, sample.sd, converged)
    except Exception as err:  # pylint: disable=broad-except
        return ReplicationOutcome(index, np.nan, None, None, None, False, f"{type(err).__name__}: {err}")


def _run_study(scenario, cfg, replications, omega, prior, seed, n_workers):
    if replications < 1:
        raise InvalidArgumentError(f"Need at least one replication, got {replications}.")
    scenario = build_scenario(scenario)
    cfg = build_config(GpsConfig, cfg)
    mode = CoverageMode.parse(cfg.coverage_mode)

    jobs = [(r, scenario.to_spec(), cfg, omega, prior, seed) for r in range(replications)]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as executor:
            outcomes = list(executor.map(_replicate, jobs))
    else:
        outcomes = [_replicate(job) for job in jobs]

    succeeded = []
    for outcome in sorted(outcomes, key=lambda o: o.index):
        if outcome.error is not None:
            logger.warning("Replication %d failed and is excluded: %s", outcome.index, outcome.error)
            continue
        logger.info(
            "Replication %d/%d: omega=%.4g covered=%s",
            outcome.index + 1,
            replications,
            outcome.omega,
            outcome.covered.astype(int).tolist(),
        )
        succeeded.append(outcome)

    failures = replications - len(succeeded)
    if failures > MAX_FAILURE_FRACTION * replications:
        raise StudyError(f"{failures} of {replications} replications failed.")

    covered = np.array([o.covered for o in succeeded], dtype=np.float64)
    prior_used = scenario.default_prior() if prior is None else prior
    return StudyReport(
        scenario=scenario.kind,
        n=scenario.config.n,
        alpha=cfg.alpha,
        coverage=covered.mean(axis=0),
        mean_length=np.mean([o.lengths for o in succeeded], axis=0),
        mean_sd=np.mean([o.posterior_sd for o in succeeded], axis=0),
        joint_coverage=float(covered.all(axis=1).mean()),
        omega_samples=np.array([o.omega for o in succeeded]),
        replications=len(succeeded),
        failures=failures,
        prior=prior_used.describe(),
        coverage_mode=str(mode),
        converged_fraction=float(np.mean([o.converged for o in succeeded])),
    )


def run_coverage_study(scenario, gps_cfg=None, replications=200, prior=None, seed=0, n_workers=1):
    """Frequentist coverage of GPS calibrated credible intervals.

    Each replication draws a fresh dataset, calibrates `omega_n` with `gps_calibrate`, samples the
    `omega_n`-Gibbs posterior of the original data and records which coordinates of the true
    parameter its equal tailed intervals contain, along with the interval lengths.

    :param scenario: data generating scenario
    :type scenario: ScenarioInput or dict
    :param gps_cfg: `GpsConfig` values; its seed is replaced per replication
    :type gps_cfg: dict or Config or None
    :param replications: number of simulated datasets
    :type replications: int
    :param prior: prior, defaults to the scenario's
    :type prior: Prior or None
    :param seed: master seed, replication `r` uses the streams derived from `(seed, r)`
    :type seed: int
    :param n_workers: worker processes; results do not depend on it
    :type n_workers: int
    :rtype: StudyReport
    """
    return _run_study(scenario, gps_cfg, replications, None, prior, seed, n_workers)


def fixed_omega_study(scenario, omega, replications=200, gps_cfg=None, prior=None, seed=0, n_workers=1):
    """Same as `run_coverage_study` with the scale fixed at `omega` instead of calibrated.

    Only `alpha`, `M`, `burn_in`, `target_accept` and `coverage_mode` of `gps_cfg` are used.
    """
    if not omega > 0:
        raise InvalidArgumentError(f"omega must be positive, got {omega}.")
    return _run_study(scenario, gps_cfg, replications, float(omega), prior, seed, n_workers)


def _oracle_datasets(scenario, count, seed):
    scenario = build_scenario(scenario)
    datasets = [scenario.with_seed(derive_seed(seed, STREAM_REPLICATION, r)).get_dataset() for r in range(count)]
    return scenario, datasets


def oracle_coverage(omega, scenario, alpha=0.05, replications=200, sampler_cfg=None, mode=PER_COORDINATE_AVERAGE, prior=None, seed=0):
    """Coverage of the true parameter by `omega`-scaled intervals over fresh datasets of a known scenario.

    :rtype: float
    """
    scenario, datasets = _oracle_datasets(scenario, replications, seed)
    true_theta = scenario.true_theta()
    prior = scenario.default_prior() if prior is None else prior

    samples = sample_posteriors(
        omega, datasets, scenario.default_loss(), prior, sampler_cfg, inits=[true_theta] * len(datasets)
    )
    c_hat, _ = coverage_from_samples(samples, true_theta, alpha, mode)
    return c_hat


def gps_calibrate_oracle(scenario, cfg=None, prior=None, seed=0):
    """Stochastic approximation on `cfg.B` fresh datasets of a known scenario, covering its true parameter.

    :rtype: GpsResult
    """
    cfg = build_config(GpsConfig, cfg)
    scenario, datasets = _oracle_datasets(scenario, cfg.B, seed)
    prior = scenario.default_prior() if prior is None else prior
    return stochastic_approximation(datasets, scenario.true_theta(), scenario.default_loss(), prior, cfg)

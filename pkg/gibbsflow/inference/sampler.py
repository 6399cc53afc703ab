"""Random-walk Metropolis-Hastings sampling of Gibbs posteriors.

Chains are advanced in lock-step as a numpy batch. Every chain owns its own random stream and all
of its proposals and acceptance uniforms are drawn from that stream up front, so the output of a
chain does not depend on which other chains share its batch.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from marshmallow import Schema, fields
from marshmallow.validate import Range

from ..base.configuration import build_config
from ..models.target import TargetBatch
from ..utils.exceptions import InvalidArgumentError, DegenerateChainWarning
from ..utils.utils import make_rng, as_param_vector, STREAM_PILOT

logger = logging.getLogger(__name__)


class SamplerConfig(Schema):
    M = fields.Int(
        load_default=2000,
        validate=Range(min=1),
        metadata={"description": "Number of retained draws."},
    )
    burn_in = fields.Int(
        load_default=None,
        allow_none=True,
        validate=Range(min=0),
        metadata={"description": "Discarded iterations before the retained draws. Defaults to M."},
    )
    init = fields.List(
        fields.Float,
        load_default=None,
        allow_none=True,
        metadata={"description": "Initial state. Defaults to the loss' deterministic starting point."},
    )
    step_scale = fields.List(
        fields.Float(validate=Range(min=0.0, min_inclusive=False)),
        load_default=None,
        allow_none=True,
        metadata={"description": "Per-coordinate proposal sd. Defaults to a pilot estimate."},
    )
    adapt = fields.Bool(
        load_default=True,
        metadata={"description": "Tune the step scale during burn-in."},
    )
    target_accept = fields.Float(
        load_default=0.3,
        validate=Range(min=0.1, max=0.6, min_inclusive=False, max_inclusive=False),
        metadata={"description": "Acceptance rate targeted by the adaptation."},
    )
    adapt_interval = fields.Int(
        load_default=50,
        validate=Range(min=1),
        metadata={"description": "Iterations per adaptation batch."},
    )
    adapt_factor = fields.Float(
        load_default=0.05,
        validate=Range(min=0.0, min_inclusive=False),
        metadata={"description": "Log step change per adaptation batch."},
    )
    step_floor = fields.Float(
        load_default=1e-6,
        validate=Range(min=0.0, min_inclusive=False),
        metadata={"description": "Lower bound of the adapted step scale."},
    )
    seed = fields.Int(
        load_default=0,
        validate=Range(min=0, max=2**64 - 1),
        metadata={"description": "Seed of the chain's random stream."},
    )


@dataclass(frozen=True)
class PosteriorSample:
    """Retained draws of one Markov chain.

    Attributes:
        draws: `(M, param_dim)` retained states
        log_density: `(M,)` unnormalised log density of the retained states
        accept_rate: acceptance rate over the retained iterations
        final_state: last state of the chain, for warm starts
        final_step_scale: frozen step scale used for the retained draws
        burn_in: number of discarded iterations
        degenerate: whether the chain never accepted a proposal
    """

    draws: np.ndarray
    log_density: np.ndarray
    accept_rate: float
    final_state: np.ndarray
    final_step_scale: np.ndarray
    burn_in: int = 0
    degenerate: bool = False

    @property
    def M(self):
        return self.draws.shape[0]

    @property
    def param_dim(self):
        return self.draws.shape[1]

    @property
    def mean(self):
        return self.draws.mean(axis=0)

    @property
    def sd(self):
        return self.draws.std(axis=0, ddof=1) if self.M > 1 else np.zeros(self.param_dim)

    def to_frame(self):
        frame = pd.DataFrame(
            self.draws, columns=[f"theta_{i}" for i in range(self.param_dim)]
        )
        frame.insert(0, "iter", np.arange(self.burn_in, self.burn_in + self.M))
        frame["log_density"] = self.log_density
        return frame

    def to_csv(self, path):
        """Dumps the chain, one row per retained draw, columns `iter,theta_0..theta_p,log_density`."""
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def _draw_randomness(rngs, length, dim):
    noise = np.empty((length, len(rngs), dim))
    log_u = np.empty((length, len(rngs)))
    for b, rng in enumerate(rngs):
        noise[:, b, :] = rng.standard_normal((length, dim))
        log_u[:, b] = np.log1p(-rng.random(length))
    return noise, log_u


def _initial_log_density(batch, state):
    logp = batch.log_density(state)
    if not np.all(np.isfinite(logp)):
        bad = int(np.flatnonzero(~np.isfinite(logp))[0])
        raise InvalidArgumentError(
            f"Initial state {state[bad]} of chain {bad} has non-finite log density {logp[bad]}."
        )
    return logp


def _mh_move(batch, state, logp, step, noise, log_u):
    proposal = state + step * noise
    proposal_logp = batch.log_density(proposal)
    with np.errstate(invalid="ignore"):
        accept = log_u < proposal_logp - logp
    return np.where(accept[:, None], proposal, state), np.where(accept, proposal_logp, logp), accept


def pilot_step_scale(batch, state, max_rounds=60):
    """Per-coordinate step scales from a deterministic bracketing of the log density.

    For each coordinate the offset `h` is halved or doubled until the symmetric second difference
    `logp(x) - (logp(x + h) + logp(x - h)) / 2` lies in [0.5, 2]; for a Gaussian target this puts `h`
    within a factor two of `sqrt(2)` posterior sds. The returned scale is `2.38 / sqrt(d)` times the
    matching sd estimate. The bracketing only sees the local curvature, `tune_step_scale` corrects it
    on targets that are far from Gaussian.

    :param batch: targets of the chains
    :type batch: TargetBatch
    :param state: `(B, d)` states the scales are measured at
    :type state: np.ndarray
    :rtype: np.ndarray
    """
    n_chains, dim = state.shape
    logp = batch.log_density(state)
    scale = np.empty((n_chains, dim))

    for i in range(dim):
        h = np.ones(n_chains)
        offset = np.zeros((n_chains, dim))
        for _ in range(max_rounds):
            offset[:, i] = h
            with np.errstate(invalid="ignore"):
                drop = logp - 0.5 * (batch.log_density(state + offset) + batch.log_density(state - offset))
            too_big = ~(drop <= 2.0)
            too_small = drop < 0.5
            if not (too_big | too_small).any():
                break
            h = np.clip(np.where(too_big, h / 2, np.where(too_small, h * 2, h)), 1e-8, 2.0**20)
        scale[:, i] = h / np.sqrt(2.0)

    return 2.38 / np.sqrt(dim) * scale


def tune_step_scale(batch, init, step_scale, cfg, rngs, rounds=12, length=100, tolerance=0.1):
    """Rescales each chain's step until a short trial run accepts close to `cfg.target_accept`.

    Every round restarts the chains at `init` for `length` iterations. A chain accepting more than
    `target_accept + tolerance` has its step multiplied by the current factor, a chain accepting less
    than `target_accept - tolerance` divided by it. The factor starts at 2 and is square-rooted each
    time the direction flips. A chain inside the band keeps its step for good.

    :param batch: targets of the chains
    :type batch: TargetBatch
    :param init: `(B, d)` initial states
    :type init: np.ndarray
    :param step_scale: `(B, d)` step scales to rescale
    :type step_scale: np.ndarray
    :param cfg: sampler configuration
    :type cfg: Config
    :param rngs: one random generator per chain, used for the trial runs only
    :type rngs: list(numpy.random.Generator)
    :rtype: np.ndarray
    """
    n_chains, dim = init.shape
    logp0 = _initial_log_density(batch, init)
    log_mult = np.zeros(n_chains)
    log_factor = np.full(n_chains, np.log(2.0))
    direction = np.zeros(n_chains)
    active = np.ones(n_chains, dtype=bool)

    for _ in range(rounds):
        noise, log_u = _draw_randomness(rngs, length, dim)
        step = step_scale * np.exp(log_mult)[:, None]
        state, logp = init.copy(), logp0.copy()
        accepts = np.zeros(n_chains)
        for it in range(length):
            state, logp, accept = _mh_move(batch, state, logp, step, noise[it], log_u[it])
            accepts += accept

        rate = accepts / length
        high = rate > cfg.target_accept + tolerance
        active &= high | (rate < cfg.target_accept - tolerance)
        if not active.any():
            break

        new_direction = np.where(high, 1.0, -1.0)
        log_factor = np.where(active & (direction * new_direction < 0), log_factor / 2, log_factor)
        log_mult = np.where(active, log_mult + new_direction * log_factor, log_mult)
        direction = np.where(active, new_direction, direction)

    if active.any():
        logger.debug("%d of %d chains left the step tuning outside the acceptance band", int(active.sum()), n_chains)
    return np.maximum(step_scale * np.exp(log_mult)[:, None], cfg.step_floor)


def _run_chains(batch, init, step_scale, cfg, rngs):
    n_chains, dim = init.shape
    M = cfg.M
    burn_in = cfg.M if cfg.burn_in is None else cfg.burn_in
    total = burn_in + M

    noise, log_u = _draw_randomness(rngs, total, dim)
    state = init.copy()
    logp = _initial_log_density(batch, state)

    step = step_scale.copy()
    draws = np.empty((M, n_chains, dim))
    log_densities = np.empty((M, n_chains))
    window = np.zeros(n_chains)
    burn_accepts = np.zeros(n_chains)
    kept_accepts = np.zeros(n_chains)

    for it in range(total):
        state, logp, accept = _mh_move(batch, state, logp, step, noise[it], log_u[it])

        if it < burn_in:
            burn_accepts += accept
            window += accept
            if cfg.adapt and (it + 1) % cfg.adapt_interval == 0:
                rate = window / cfg.adapt_interval
                log_factor = np.where(rate > cfg.target_accept, cfg.adapt_factor, -cfg.adapt_factor)
                step = np.maximum(step * np.exp(log_factor)[:, None], cfg.step_floor)
                window[:] = 0.0
        else:
            draws[it - burn_in] = state
            log_densities[it - burn_in] = logp
            kept_accepts += accept

    if burn_in > 0:
        degenerate = burn_accepts == 0
    else:
        degenerate = (kept_accepts == 0) & (M > 1)

    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} of {n_chains} chains rejected every proposal.",
            DegenerateChainWarning,
        )

    logger.debug(
        "Sampled %d chains: mean acceptance %.3f, burn-in acceptance %.3f",
        n_chains,
        float(np.mean(kept_accepts / M)),
        float(np.mean(burn_accepts / burn_in)) if burn_in else float("nan"),
    )

    return [
        PosteriorSample(
            draws=draws[:, b, :].copy(),
            log_density=log_densities[:, b].copy(),
            accept_rate=float(kept_accepts[b] / M),
            final_state=state[b].copy(),
            final_step_scale=step[b].copy(),
            burn_in=burn_in,
            degenerate=bool(degenerate[b]),
        )
        for b in range(n_chains)
    ]


def mh_sample_batch(targets, cfg=None, inits=None, step_scales=None, stream_keys=None):
    """Runs one Metropolis-Hastings chain per target, all chains advanced together.

    :param targets: targets sharing loss, prior and sample size
    :type targets: list(GibbsTarget) or TargetBatch
    :param cfg: sampler configuration (`SamplerConfig` values)
    :type cfg: dict or Config or None
    :param inits: initial state per chain; defaults to `cfg.init`, then to the loss' starting point
    :type inits: array-like or None
    :param step_scales: step scale per chain; defaults to `cfg.step_scale`, then to `pilot_step_scale`
        refined by `tune_step_scale` on the stream `make_rng(cfg.seed, STREAM_PILOT, *key)`
    :type step_scales: array-like or None
    :param stream_keys: random stream path per chain, the stream is `make_rng(cfg.seed, *key)`
    :type stream_keys: list(tuple(int)) or None
    :return: one sample per target
    :rtype: list(PosteriorSample)
    """
    cfg = build_config(SamplerConfig, cfg)
    batch = targets if isinstance(targets, TargetBatch) else TargetBatch(targets)
    n_chains, dim = len(batch), batch.param_dim

    if inits is None:
        if cfg.init is not None:
            inits = [cfg.init] * n_chains
        else:
            inits = [t.loss.initial_theta(t.data) for t in batch.targets]
    init = np.array([as_param_vector(x, "init") for x in inits]).reshape(n_chains, -1)
    if init.shape[1] != dim:
        raise InvalidArgumentError(f"Initial states must have dimension {dim}, got {init.shape[1]}.")

    if stream_keys is None:
        stream_keys = [(b,) for b in range(n_chains)] if n_chains > 1 else [()]
    if len(stream_keys) != n_chains:
        raise InvalidArgumentError("One random stream key is needed per chain.")
    _initial_log_density(batch, init)

    if step_scales is None and cfg.step_scale is not None:
        step_scales = [cfg.step_scale] * n_chains
    if step_scales is None:
        pilot_rngs = [make_rng(cfg.seed, STREAM_PILOT, *key) for key in stream_keys]
        step = tune_step_scale(batch, init, pilot_step_scale(batch, init), cfg, pilot_rngs)
    else:
        step = np.broadcast_to(np.asarray(step_scales, dtype=np.float64), (n_chains, dim)).copy()
    if not np.all(step > 0):
        raise InvalidArgumentError("Step scales must be positive.")

    rngs = [make_rng(cfg.seed, *key) for key in stream_keys]
    return _run_chains(batch, init, step, cfg, rngs)


def mh_sample(target, cfg=None):
    """Draws `cfg.M` states from the Gibbs posterior of `target` by random-walk Metropolis-Hastings.

    The proposal is an independent Gaussian step per coordinate. With `cfg.adapt`, the step scale is
    multiplied by `exp(+-adapt_factor)` after every `adapt_interval` burn-in iterations towards
    `cfg.target_accept`, and frozen for the retained draws. Same seed and config give bit-identical draws.

    :param target: Gibbs posterior to sample
    :type target: GibbsTarget
    :param cfg: sampler configuration (`SamplerConfig` values)
    :type cfg: dict or Config or None
    :rtype: PosteriorSample
    """
    return mh_sample_batch([target], cfg, stream_keys=[()])[0]

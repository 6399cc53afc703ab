import io
import os
import unittest
import warnings
import numpy as np
import pandas as pd
from marshmallow import ValidationError

from gibbsflow.base import build_config
from gibbsflow.input import Dataset, NormalMeanInput
from gibbsflow.inference.gps import (
    GpsConfig,
    bootstrap_indices,
    bootstrap_resample,
    coverage_curve,
    coverage_from_samples,
    empirical_coverage,
    gps_calibrate,
    sa_step,
    stochastic_approximation,
)
from gibbsflow.inference.sampler import PosteriorSample
from gibbsflow.models import FlatPrior, SquaredErrorLoss
from gibbsflow.utils import CalibrationError, InvalidArgumentError

SLOW = os.environ.get("GIBBSFLOW_SLOW") == "1"

FAST_GPS = {"B": 30, "M": 300, "max_iter": 20, "eps_tol": 0.05, "omega_init": 0.8, "kappa0": 2.0, "seed": 3}


def _normal_data(n=50, sigma=1.0, seed=0):
    return NormalMeanInput({"n": n, "sigma": sigma, "seed": seed}).get_dataset()


class TestBootstrap(unittest.TestCase):
    def test_single_observation(self):
        data = Dataset(None, [4.2])
        for boot in bootstrap_resample(data, 5, seed=1):
            self.assertEqual(boot, data)

    def test_inclusion_fraction(self):
        indices = bootstrap_indices(1000, 200, seed=2)
        distinct = np.mean([np.unique(row).shape[0] / 1000 for row in indices])
        self.assertLess(abs(distinct - (1 - (1 - 1 / 1000) ** 1000)), 0.02)

    def test_deterministic(self):
        np.testing.assert_array_equal(bootstrap_indices(30, 10, seed=4), bootstrap_indices(30, 10, seed=4))
        self.assertFalse(np.array_equal(bootstrap_indices(30, 10, seed=4), bootstrap_indices(30, 10, seed=5)))
        self.assertRaises(InvalidArgumentError, bootstrap_indices, 30, 0, 4)


class TestStochasticApproximationStep(unittest.TestCase):
    def test_update(self):
        self.assertAlmostEqual(sa_step(1.0, 0.99, 1, {"alpha": 0.05}), 1.04, 12)

    def test_zero_residual(self):
        self.assertEqual(sa_step(0.7, 0.95, 3, {"alpha": 0.05}), 0.7)

    def test_clamped(self):
        cfg = {"alpha": 0.05, "omega_min": 0.01, "omega_init": 0.01}
        self.assertEqual(sa_step(0.01, 0.5, 1, cfg), 0.01)

    def test_step_size_decay(self):
        cfg = {"alpha": 0.05, "kappa0": 2.0, "kappa_exponent": 1.0}
        self.assertAlmostEqual(sa_step(1.0, 0.85, 4, cfg), 1.0 + 0.5 * (0.85 - 0.95), 12)

    def test_invalid(self):
        self.assertRaises(InvalidArgumentError, sa_step, 1.0, 0.9, 0)
        self.assertRaises(ValidationError, sa_step, 1.0, 0.9, 1, {"kappa_exponent": 0.5})


class TestGpsConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = build_config(GpsConfig)
        self.assertEqual((cfg.alpha, cfg.B, cfg.M, cfg.max_iter), (0.05, 100, 2000, 50))
        self.assertEqual(cfg.coverage_mode, "per_coordinate_average")
        self.assertIsNone(cfg.burn_in)

    def test_invalid(self):
        self.assertRaises(ValidationError, build_config, GpsConfig, {"omega_init": 1e-9, "omega_min": 1e-8})
        self.assertRaises(ValidationError, build_config, GpsConfig, {"coverage_mode": "coordinate:x"})
        self.assertRaises(ValidationError, build_config, GpsConfig, {"alpha": 0.5})


def _sample(value, degenerate=False):
    draws = np.linspace(value - 1.0, value + 1.0, 40)[:, None]
    return PosteriorSample(
        draws=draws,
        log_density=np.zeros(40),
        accept_rate=0.0 if degenerate else 0.3,
        final_state=draws[-1],
        final_step_scale=np.ones(1),
        degenerate=degenerate,
    )


class TestEmpiricalCoverage(unittest.TestCase):
    def test_single_bootstrap_set(self):
        data = _normal_data()
        anchor = [np.mean(data.response)]
        coverage = empirical_coverage(0.5, [data], anchor, 0.05, SquaredErrorLoss(), FlatPrior(), {"M": 500})
        self.assertEqual(coverage, 1.0)

    def test_decreases_with_omega(self):
        data = _normal_data()
        boot_sets = bootstrap_resample(data, 30, seed=1)
        anchor = [np.mean(data.response)]

        curve = coverage_curve([0.01, 0.5, 20.0], boot_sets, anchor, 0.05, SquaredErrorLoss(), FlatPrior(), {"M": 300})
        self.assertGreater(curve[0], curve[2])
        self.assertGreaterEqual(curve[0], 0.9)

    def test_conjugate_scale(self):
        data = _normal_data(n=100, seed=2)
        boot_sets = bootstrap_resample(data, 100, seed=2)
        anchor = [np.mean(data.response)]
        omega = 1 / (2 * np.var(data.response))

        coverage = empirical_coverage(omega, boot_sets, anchor, 0.05, SquaredErrorLoss(), FlatPrior(), {"M": 1000})
        self.assertLess(abs(coverage - 0.95), 2 / np.sqrt(100))

    def test_scale_below_floor(self):
        data = _normal_data()
        anchor = [np.mean(data.response)]
        args = ([data], anchor, 0.05, SquaredErrorLoss(), FlatPrior(), {"M": 50})

        self.assertRaises(InvalidArgumentError, empirical_coverage, 1e-9, *args)
        self.assertRaises(InvalidArgumentError, empirical_coverage, 0.01, *args, omega_min=0.1)
        self.assertRaises(InvalidArgumentError, coverage_curve, [0.5, 0.0], *args)
        self.assertTrue(0.0 <= empirical_coverage(1e-8, *args) <= 1.0)

    @unittest.skipUnless(SLOW, "set GIBBSFLOW_SLOW=1 to run statistical acceptance tests")
    def test_monotone_in_omega(self):
        data = NormalMeanInput({"n": 100, "seed": 11}).get_dataset()
        boot_sets = bootstrap_resample(data, 400, seed=11)
        anchor = [np.mean(data.response)]

        curve = coverage_curve(
            [0.1, 0.25, 0.5, 1.0, 2.0], boot_sets, anchor, 0.05, SquaredErrorLoss(), FlatPrior(), {"M": 2000}
        )
        # Monte Carlo noise may swap one neighbouring pair
        self.assertLessEqual(int(np.sum(np.diff(curve) > 0)), 1)
        self.assertGreater(curve[0], curve[-1])

    def test_degenerate_chains(self):
        healthy = [_sample(0.0) for _ in range(4)]

        coverage, n_degenerate = coverage_from_samples(healthy + [_sample(5.0, degenerate=True)], [0.0], 0.05)
        self.assertEqual((coverage, n_degenerate), (1.0, 1))

        too_many = healthy[:3] + [_sample(0.0, degenerate=True)] * 2
        self.assertRaises(CalibrationError, coverage_from_samples, too_many, [0.0], 0.05)


class TestGpsCalibrate(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.data = _normal_data(n=50, seed=7)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cls.result = gps_calibrate(cls.data, SquaredErrorLoss(), FlatPrior(), FAST_GPS)

    def test_trace(self):
        cfg = build_config(GpsConfig, FAST_GPS)
        trace = self.result.trace

        self.assertEqual(trace[0].omega, cfg.omega_init)
        self.assertLessEqual(len(trace), cfg.max_iter)
        self.assertEqual(self.result.iterations, len(trace))
        for t, entry in enumerate(trace):
            self.assertEqual(entry.t, t)
            self.assertGreaterEqual(entry.omega, cfg.omega_min)
            self.assertAlmostEqual(entry.kappa, cfg.kappa0 * (t + 1) ** -0.75, 12)

        # Every scale is the update of its predecessor
        for previous, current in zip(trace[:-1], trace[1:]):
            self.assertAlmostEqual(current.omega, sa_step(previous.omega, previous.c_hat, previous.t + 1, cfg), 12)
        self.assertAlmostEqual(self.result.omega_n, sa_step(trace[-1].omega, trace[-1].c_hat, len(trace), cfg), 12)

    def test_fixed_point(self):
        cfg = build_config(GpsConfig, FAST_GPS)
        self.assertTrue(self.result.converged)
        self.assertLessEqual(abs(self.result.trace[-1].c_hat - 0.95), cfg.eps_tol + 1e-12)

        boot_sets = bootstrap_resample(self.data, cfg.B, cfg.seed)
        coverage = empirical_coverage(
            self.result.omega_n, boot_sets, self.result.theta_hat, 0.05, SquaredErrorLoss(), FlatPrior(), {"M": cfg.M}
        )
        self.assertLessEqual(abs(coverage - 0.95), cfg.eps_tol + 2 / np.sqrt(cfg.B))

    def test_anchor_is_mestimate(self):
        self.assertAlmostEqual(self.result.theta_hat[0], np.mean(self.data.response), 6)
        np.testing.assert_array_equal(self.result.anchor, self.result.theta_hat)

    def test_deterministic(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            again = gps_calibrate(self.data, SquaredErrorLoss(), FlatPrior(), FAST_GPS)
        self.assertEqual(again.omega_n, self.result.omega_n)
        self.assertEqual(again.trace, self.result.trace)

    def test_trace_csv(self):
        buffer = io.StringIO()
        self.result.to_csv(buffer)
        buffer.seek(0)
        frame = pd.read_csv(buffer)

        self.assertEqual(list(frame.columns), ["t", "omega", "c_hat", "kappa"])
        self.assertEqual(len(frame), self.result.iterations)

    def test_not_converged(self):
        cfg = dict(FAST_GPS, max_iter=1, eps_tol=1e-6)
        result = gps_calibrate(self.data, SquaredErrorLoss(), FlatPrior(), cfg)

        self.assertFalse(result.converged)
        self.assertEqual(result.iterations, 1)
        self.assertAlmostEqual(result.omega_n, sa_step(0.8, result.trace[0].c_hat, 1, cfg), 12)

    def test_cold_start_and_bias_correction(self):
        cfg = dict(FAST_GPS, warm_start=False, bias_correction=True, max_iter=3)
        result = gps_calibrate(self.data, SquaredErrorLoss(), FlatPrior(), cfg)

        # The mean is unbiased, so the correction barely moves the anchor
        self.assertLess(abs(result.anchor[0] - result.theta_hat[0]), 0.1)
        self.assertLessEqual(result.iterations, 3)

    def test_stochastic_approximation_on_given_sets(self):
        boot_sets = bootstrap_resample(self.data, 10, seed=9)
        result = stochastic_approximation(
            boot_sets, [0.0], SquaredErrorLoss(), FlatPrior(), dict(FAST_GPS, B=10, max_iter=2)
        )
        self.assertEqual(result.trace[0].omega, FAST_GPS["omega_init"])
        self.assertLessEqual(result.iterations, 2)

    @unittest.skipUnless(SLOW, "set GIBBSFLOW_SLOW=1 to run statistical acceptance tests")
    def test_rescaled_data(self):
        data = _normal_data(n=200, seed=11)
        scaled = Dataset(None, 2.0 * data.response)
        cfg = {"B": 100, "M": 1000, "seed": 11}

        omega = gps_calibrate(data, SquaredErrorLoss(), FlatPrior(), cfg).omega_n
        omega_scaled = gps_calibrate(scaled, SquaredErrorLoss(), FlatPrior(), cfg).omega_n
        self.assertLess(abs(omega_scaled / omega / 0.25 - 1), 0.25)


if __name__ == "__main__":
    unittest.main()

import os
import tempfile
import unittest
import warnings
import numpy as np
import pandas as pd
from marshmallow import ValidationError
from scipy import integrate, stats

from gibbsflow.experiments import (
    asymptotic_omega_oracle,
    fixed_omega_study,
    generate,
    gps_calibrate_oracle,
    oracle_coverage,
    run_coverage_study,
)
from gibbsflow.input import ClassificationInput, QuantRegInput, NormalMeanInput, build_scenario
from gibbsflow.models import GaussianPrior
from gibbsflow.utils import InvalidArgumentError, StudyError

SLOW = os.environ.get("GIBBSFLOW_SLOW") == "1"

SMALL_GPS = {"B": 10, "M": 200, "max_iter": 3, "eps_tol": 0.05}


class TestGenerate(unittest.TestCase):
    def test_quantreg_defaults(self):
        n = 2000
        data, theta = generate({"kind": "quantreg", "n": n, "seed": 1})

        np.testing.assert_allclose(theta, [2.0, 1.0])
        self.assertEqual((data.n, data.p), (n, 1))
        self.assertLess(abs(np.mean(data.covariates)), 4 * 2 / np.sqrt(n))
        self.assertLess(abs(np.var(data.covariates) - 4.0), 4 * np.sqrt(128) / np.sqrt(n))

        residuals = data.response - 2.0 - data.covariates[:, 0]
        self.assertLess(abs(np.std(residuals) - 2.0), 4 * 2 / np.sqrt(2 * n))

    def test_quantreg_true_quantile(self):
        scenario = QuantRegInput({"n": 10, "tau": 0.9, "error_sd": 2.0})
        np.testing.assert_allclose(scenario.true_theta(), [2.0 + 2.0 * stats.norm.ppf(0.9), 1.0])

    def test_classification_defaults(self):
        n = 2000
        data, theta = generate({"kind": "classification", "n": n, "seed": 2})

        np.testing.assert_allclose(theta, [0.0, 1.0])
        self.assertTrue(data.labels)
        self.assertTrue(np.all(np.isin(data.response, [-1.0, 1.0])))
        np.testing.assert_allclose(data.covariates.mean(axis=0), [5.0, 5.0], atol=4 * np.sqrt(2) / np.sqrt(n))

        # Labels follow the side of the line x1 = x2 most of the time
        agree = np.mean(np.sign(data.covariates[:, 0] - data.covariates[:, 1]) == data.response)
        self.assertGreater(agree, 0.8)

    def test_normal_mean(self):
        data, theta = generate({"kind": "normal_mean", "n": 100000, "seed": 3})
        np.testing.assert_array_equal(theta, [0.0])
        self.assertEqual(data.p, 0)
        self.assertLess(abs(np.mean(data.response)), 0.01)

    def test_deterministic(self):
        spec = {"kind": "classification", "n": 50, "seed": 4}
        self.assertEqual(generate(spec).data, generate(spec).data)
        self.assertNotEqual(generate(spec).data, generate(dict(spec, seed=5)).data)

    def test_invalid(self):
        self.assertRaises(InvalidArgumentError, build_scenario, {"kind": "poisson", "n": 10})
        self.assertRaises(ValidationError, NormalMeanInput, {"n": 10, "sigma": 0.0})
        self.assertRaises(ValidationError, ClassificationInput, {"n": 10, "cov": [[1.0, 2.0], [2.0, 1.0]]})
        self.assertRaises(ValidationError, ClassificationInput, {"n": 10, "cov": [[1.0, 0.0], [0.5, 1.0]]})

    def test_spec_round_trip(self):
        scenario = QuantRegInput({"n": 30, "error_sd": 1.0})
        rebuilt = build_scenario(scenario.to_spec())
        self.assertIsInstance(rebuilt, QuantRegInput)
        self.assertEqual(rebuilt.generate().data, scenario.generate().data)


class TestAsymptoticOracle(unittest.TestCase):
    def test_values(self):
        self.assertLess(abs(asymptotic_omega_oracle(0.5, 2.0) - 0.798), 0.001)
        self.assertLess(abs(asymptotic_omega_oracle(0.5, 1.0) - 1.596), 0.001)
        self.assertAlmostEqual(asymptotic_omega_oracle(0.3, 4.0) * 2, asymptotic_omega_oracle(0.3, 2.0), 12)

    def test_numerical_integration(self):
        # Density at zero from the probability of a small interval around it
        h = 1e-4
        mass, _ = integrate.quad(lambda x: np.exp(-x**2 / 8) / np.sqrt(8 * np.pi), -h, h)
        self.assertLess(abs(asymptotic_omega_oracle(0.5, 2.0) - mass / (2 * h) / 0.25), 1e-6)

    def test_invalid(self):
        self.assertRaises(InvalidArgumentError, asymptotic_omega_oracle, 1.0, 2.0)
        self.assertRaises(InvalidArgumentError, asymptotic_omega_oracle, 0.5, 0.0)


class TestStudies(unittest.TestCase):
    def test_fixed_omega_study(self):
        report = fixed_omega_study({"kind": "quantreg", "n": 50}, 0.8, replications=4, gps_cfg={"M": 300}, seed=1)

        self.assertEqual(report.replications, 4)
        self.assertEqual(report.failures, 0)
        self.assertEqual(report.coverage.shape, (2,))
        self.assertTrue(np.all((report.coverage >= 0) & (report.coverage <= 1)))
        self.assertTrue(np.all(report.mean_length > 0))
        np.testing.assert_array_equal(report.omega_samples, np.full(4, 0.8))
        self.assertEqual(report.prior, "flat")
        self.assertEqual(report.coverage_mode, "per_coordinate_average")

    def test_report_csv(self):
        report = fixed_omega_study({"kind": "normal_mean", "n": 30}, 0.5, replications=3, gps_cfg={"M": 200}, seed=2)

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "report.csv")
            omega_path = report.to_csv(path)
            frame = pd.read_csv(path)
            omegas = pd.read_csv(omega_path)

        self.assertEqual(omega_path, os.path.join(tmp, "report_omega.csv"))
        self.assertEqual(len(frame), 1)
        self.assertEqual(frame["parameter"].iloc[0], "theta_0")
        self.assertIn("prior", frame.columns)
        self.assertEqual(list(omegas.columns), ["replication", "omega"])
        self.assertEqual(len(omegas), 3)

    def test_coverage_study(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = run_coverage_study({"kind": "normal_mean", "n": 40}, SMALL_GPS, replications=3, seed=3)

        self.assertEqual(report.replications, 3)
        self.assertEqual(report.omega_samples.shape, (3,))
        self.assertTrue(np.all(report.omega_samples >= 1e-8))
        self.assertTrue(0.0 <= report.converged_fraction <= 1.0)

    def test_workers_do_not_change_results(self):
        scenario = {"kind": "quantreg", "n": 40}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            serial = run_coverage_study(scenario, SMALL_GPS, replications=2, seed=4, n_workers=1)
            parallel = run_coverage_study(scenario, SMALL_GPS, replications=2, seed=4, n_workers=2)

        np.testing.assert_array_equal(serial.omega_samples, parallel.omega_samples)
        np.testing.assert_array_equal(serial.coverage, parallel.coverage)
        np.testing.assert_array_equal(serial.mean_length, parallel.mean_length)

    def test_failures(self):
        # A prior of the wrong dimension breaks every replication
        prior = GaussianPrior(np.zeros(3), np.ones(3))
        self.assertRaises(
            StudyError, fixed_omega_study, {"kind": "quantreg", "n": 30}, 0.8, replications=2, gps_cfg={"M": 50}, prior=prior
        )
        self.assertRaises(InvalidArgumentError, fixed_omega_study, {"kind": "quantreg", "n": 30}, 0.0)
        self.assertRaises(InvalidArgumentError, run_coverage_study, {"kind": "quantreg", "n": 30}, replications=0)


class TestKnownDistribution(unittest.TestCase):
    def test_oracle_coverage(self):
        scenario = {"kind": "normal_mean", "n": 50}
        wide = oracle_coverage(0.02, scenario, replications=20, sampler_cfg={"M": 200})
        narrow = oracle_coverage(50.0, scenario, replications=20, sampler_cfg={"M": 200})

        self.assertGreaterEqual(wide, 0.9)
        self.assertLess(narrow, wide)

    def test_gps_calibrate_oracle(self):
        result = gps_calibrate_oracle({"kind": "normal_mean", "n": 50}, SMALL_GPS, seed=5)

        np.testing.assert_array_equal(result.anchor, [0.0])
        self.assertLessEqual(result.iterations, 3)
        self.assertGreater(result.omega_n, 0.0)


@unittest.skipUnless(SLOW, "set GIBBSFLOW_SLOW=1 to run statistical acceptance tests")
class TestAcceptance(unittest.TestCase):
    def test_normal_mean_calibration(self):
        for n, expected in [(100, 0.58), (500, 0.55), (1000, 0.49)]:
            report = run_coverage_study({"kind": "normal_mean", "n": n}, replications=100, seed=n, n_workers=os.cpu_count())
            self.assertLess(abs(report.omega_mean - expected), 0.15)
            self.assertLess(abs(report.coverage[0] - 0.95), 0.03)

    def test_quantile_regression(self):
        for n, lengths in [(100, (0.88, 0.44)), (400, (0.44, 0.22))]:
            report = run_coverage_study({"kind": "quantreg", "n": n}, replications=200, seed=n, n_workers=os.cpu_count())
            np.testing.assert_allclose(report.coverage, [0.95, 0.95], atol=0.03)
            np.testing.assert_allclose(report.mean_length, lengths, rtol=0.15)

    def test_fixed_scale(self):
        report = fixed_omega_study({"kind": "quantreg", "n": 400}, 0.8, replications=200, seed=400, n_workers=os.cpu_count())
        np.testing.assert_allclose(report.coverage, [0.95, 0.96], atol=0.03)
        np.testing.assert_allclose(report.mean_length, [0.49, 0.25], rtol=0.15)

    def test_miscalibration(self):
        report = fixed_omega_study({"kind": "classification", "n": 100}, 1.0, replications=200, seed=1, n_workers=os.cpu_count())
        self.assertLess(abs(report.coverage.mean() - 0.85), 0.04)

        report = fixed_omega_study(
            {"kind": "quantreg", "n": 100, "error_sd": 1.0}, 1.0, replications=200, seed=2, n_workers=os.cpu_count()
        )
        self.assertLess(abs(report.coverage.mean() - 0.99), 0.01)

    def test_scale_tightens_with_n(self):
        small = run_coverage_study({"kind": "quantreg", "n": 100}, replications=50, seed=7, n_workers=os.cpu_count())
        large = run_coverage_study({"kind": "quantreg", "n": 1600}, replications=50, seed=7, n_workers=os.cpu_count())
        self.assertLess(large.omega_iqr, small.omega_iqr)

        medium = run_coverage_study({"kind": "quantreg", "n": 400}, replications=50, seed=7, n_workers=os.cpu_count())
        np.testing.assert_allclose(medium.mean_sd / large.mean_sd, [2.0, 2.0], atol=0.4)


if __name__ == "__main__":
    unittest.main()

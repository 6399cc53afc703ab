import unittest
import numpy as np

from gibbsflow.input import Dataset, Observation
from gibbsflow.models.losses import CheckLoss, MisclassificationLoss, SquaredErrorLoss
from gibbsflow.models.losses import check_loss, misclassification_loss, squared_error_loss
from gibbsflow.models.losses import LossConfig, build_loss
from gibbsflow.base import build_config
from gibbsflow.utils import InvalidArgumentError


class TestCheckLoss(unittest.TestCase):
    def test_values(self):
        theta = np.array([1.0, 1.0])

        # Fitted value is 2 for covariates (1, 1)
        self.assertEqual(check_loss(theta, Observation(np.array([1.0, 1.0]), 2.0), 0.5), 0.0)
        self.assertAlmostEqual(check_loss(theta, Observation(np.array([1.0, 1.0]), 4.0), 0.5), 1.0, 12)
        self.assertAlmostEqual(check_loss(theta, Observation(np.array([1.0, 1.0]), 0.0), 0.25), 1.5, 12)

    def test_invalid_arguments(self):
        obs = Observation(np.array([1.0, 1.0]), 0.0)
        self.assertRaises(InvalidArgumentError, check_loss, [1.0], obs, 0.5)
        self.assertRaises(InvalidArgumentError, check_loss, [1.0, 1.0], obs, 1.0)
        self.assertRaises(InvalidArgumentError, CheckLoss, 0.0, 2)

    def test_convexity(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = np.concatenate([[1.0], rng.normal(size=2)])
            obs = Observation(x, rng.normal())
            tau = rng.uniform(0.05, 0.95)
            theta1, theta2 = rng.normal(size=(2, 3)) * 3

            midpoint = check_loss((theta1 + theta2) / 2, obs, tau)
            average = (check_loss(theta1, obs, tau) + check_loss(theta2, obs, tau)) / 2
            self.assertLessEqual(midpoint, average + 1e-12)

    def test_lipschitz_bound(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            x = np.concatenate([[1.0], rng.normal(size=1)])
            obs = Observation(x, rng.normal())
            tau = rng.uniform(0.01, 0.99)
            theta1, theta2 = rng.normal(size=(2, 2))

            diff = abs(check_loss(theta1, obs, tau) - check_loss(theta2, obs, tau))
            bound = (1 + tau) * np.linalg.norm(x) * np.linalg.norm(theta1 - theta2)
            self.assertLessEqual(diff, bound + 1e-12)

    def test_vectorised_matches_scalar(self):
        rng = np.random.default_rng(5)
        data = Dataset(rng.normal(size=(30, 1)), rng.normal(size=30))
        loss = CheckLoss(tau=0.3, param_dim=2)
        theta = np.array([0.2, -0.7])

        expected = [check_loss(theta, Observation(np.concatenate([[1.0], obs.covariates]), obs.response), 0.3) for obs in data]
        np.testing.assert_allclose(loss.pointwise(theta, data), expected, rtol=1e-12)

        # A batch of parameters evaluates to a batch of loss vectors
        thetas = np.stack([theta, theta + 1.0, theta - 1.0])
        self.assertEqual(loss.pointwise(thetas, data).shape, (3, 30))

    def test_dimension_mismatch(self):
        data = Dataset(np.zeros((5, 2)), np.zeros(5))
        self.assertRaises(InvalidArgumentError, CheckLoss(0.5, 2).check_dataset, data)
        self.assertRaises(InvalidArgumentError, CheckLoss(0.5, 3).pointwise, [0.0, 0.0], data)


class TestMisclassificationLoss(unittest.TestCase):
    def test_values(self):
        theta = np.array([0.0, 1.0])

        # Margin x_j - x(j) theta_1 - theta_0 equals the first covariate here
        self.assertEqual(misclassification_loss(theta, Observation(np.array([3.0, 0.0]), 1), 0), 0.0)
        self.assertEqual(misclassification_loss(theta, Observation(np.array([-3.0, 0.0]), 1), 0), 2.0)
        self.assertEqual(misclassification_loss(theta, Observation(np.array([-3.0, 0.0]), -1), 0), 0.0)

    def test_zero_margin_counts_as_positive(self):
        theta = np.array([0.0, 1.0])
        obs = Observation(np.array([2.0, 2.0]), 1)
        self.assertEqual(misclassification_loss(theta, obs, 0), 0.0)

    def test_values_in_zero_two(self):
        rng = np.random.default_rng(6)
        covariates = rng.normal(size=(200, 3))
        labels = rng.choice([-1.0, 1.0], size=200)
        data = Dataset(covariates, labels, labels=True)
        loss = MisclassificationLoss(j=1, param_dim=3)

        values = loss.pointwise(rng.normal(size=(10, 3)), data)
        self.assertTrue(np.all(np.isin(values, [0.0, 2.0])))

    def test_distinguished_covariate(self):
        rng = np.random.default_rng(7)
        covariates = rng.normal(size=(50, 2))
        labels = rng.choice([-1.0, 1.0], size=50)
        data = Dataset(covariates, labels, labels=True)
        theta = np.array([0.3, -0.4])

        expected = [misclassification_loss(theta, obs, 1) for obs in data]
        np.testing.assert_array_equal(MisclassificationLoss(j=1, param_dim=2).pointwise(theta, data), expected)

    def test_requires_labels(self):
        data = Dataset(np.zeros((4, 2)), np.ones(4))
        self.assertRaises(InvalidArgumentError, MisclassificationLoss(0, 2).check_dataset, data)
        self.assertRaises(InvalidArgumentError, misclassification_loss, [0.0, 1.0], Observation(np.zeros(2), 0.5), 0)


class TestSquaredErrorLoss(unittest.TestCase):
    def test_values(self):
        self.assertEqual(squared_error_loss([1.5], Observation(np.empty(0), 1.5)), 0.0)
        self.assertEqual(squared_error_loss([1.0], Observation(np.empty(0), 3.0)), 4.0)
        self.assertEqual(squared_error_loss([1.0], Observation(np.empty(0), -1.0)), 4.0)

    def test_scalar_parameter(self):
        self.assertRaises(InvalidArgumentError, SquaredErrorLoss, 2)
        self.assertRaises(InvalidArgumentError, squared_error_loss, [1.0, 2.0], Observation(np.empty(0), 0.0))

    def test_initial_theta_is_mean(self):
        data = Dataset(None, [1.0, 2.0, 6.0])
        np.testing.assert_allclose(SquaredErrorLoss().initial_theta(data), [3.0])


class TestBuildLoss(unittest.TestCase):
    def test_infers_dimension(self):
        data = Dataset(np.zeros((5, 3)), np.zeros(5))
        loss = build_loss(build_config(LossConfig, {"name": "check", "tau": 0.25}), data)
        self.assertEqual(loss, CheckLoss(0.25, 4))

        labelled = Dataset(np.zeros((5, 2)), np.ones(5), labels=True)
        loss = build_loss(build_config(LossConfig, {"name": "misclassification"}), labelled)
        self.assertEqual(loss, MisclassificationLoss(0, 2))

    def test_invalid_config(self):
        from marshmallow import ValidationError

        self.assertRaises(ValidationError, build_config, LossConfig, {"name": "hinge"})
        self.assertRaises(ValidationError, build_config, LossConfig, {"name": "check", "tau": 1.5})


if __name__ == "__main__":
    unittest.main()

import unittest

import numpy as np

from src.likelihood import NO_RIDGE
from src.likelihood import BinnedCounts
from src.likelihood import RidgeConfig
from src.likelihood import bin_events
from src.likelihood import gradient
from src.likelihood import nll
from src.likelihood import objective
from src.likelihood import penalty
from src.model import PARAM_NAMES
from src.model import EventTrain
from src.model import ModelParams
from src.model import Variant
from src.simulator import simulate_binned
from src.tests.fixtures import random_params
from src.tests.fixtures import random_trials
from src.utils import NumericalError
from src.utils import ValidationError


def _perturb(params: ModelParams, index: int, step: float) -> ModelParams:
    vector = params.as_vector()
    vector[index] += step
    return ModelParams.from_vector(vector, params.variant)


class TestBinning(unittest.TestCase):
    def test_bin_events(self):
        np.testing.assert_array_equal([0, 0, 0, 0, 0], bin_events(EventTrain([], 5.), 1.).counts)
        np.testing.assert_array_equal([2, 0, 0, 1, 0], bin_events(EventTrain([0.5, 0.7, 3.2], 5.), 1.).counts)
        np.testing.assert_array_equal([0, 0, 0, 0, 1], bin_events(EventTrain([5.], 5.), 1.).counts)

    def test_counts_partition(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            duration = rng.uniform(5., 100.)
            onsets = np.unique(rng.uniform(0., duration, size=rng.integers(0, 50)))
            counts = bin_events(EventTrain(onsets, duration), rng.uniform(0.2, 3.))
            self.assertEqual(onsets.size, counts.n_events)

    def test_binned_counts_validation(self):
        with self.assertRaises(ValidationError):
            BinnedCounts([1, 2], 1., 5.)
        with self.assertRaises(ValidationError):
            BinnedCounts([1, -1], 1., 2.)
        with self.assertRaises(ValidationError):
            BinnedCounts([0.5, 1], 1., 2.)
        with self.assertRaises(ValidationError):
            bin_events(EventTrain([], 5.), 0.)


class TestLikelihood(unittest.TestCase):
    def test_homogeneous_values(self):
        params = ModelParams(mu=0.1, variant=Variant.HOMOGENEOUS)
        self.assertAlmostEqual(0.1 * 30., nll(params, [], BinnedCounts(np.zeros(30), 1., 30.)), places=12)
        self.assertAlmostEqual(2.502585, nll(params, [], BinnedCounts([1, 0], 1., 2.)), places=6)

    def test_depends_only_on_counts(self):
        rng = np.random.default_rng(1)
        trials = random_trials(rng)
        params = random_params(rng)
        a = bin_events(EventTrain([3.1, 3.2, 10.9], 60.), 1.)
        b = bin_events(EventTrain([3.8, 3.9, 10.05], 60.), 1.)
        self.assertEqual(nll(params, trials, a), nll(params, trials, b))

    def test_penalty(self):
        ridge = RidgeConfig(1., 1., 5.)
        self.assertEqual(0., penalty(ModelParams(mu=0.1, a0=1.), ridge))
        self.assertEqual(1., penalty(ModelParams(mu=0.1, a0=1., w_neg=1.), ridge))
        params = ModelParams(mu=0.1, a0=1., w_neg=0.3, w_rt=-0.2, w_err=0.4)
        doubled = ModelParams(mu=0.1, a0=1., w_neg=0.6, w_rt=-0.4, w_err=0.8)
        self.assertAlmostEqual(4. * penalty(params, ridge), penalty(doubled, ridge), places=12)
        self.assertEqual(0., penalty(ModelParams(mu=0.1, a0=1., variant=Variant.TRIAL_MODULATED), ridge))
        with self.assertRaises(ValidationError):
            RidgeConfig(-1., 0., 0.)

    def test_objective(self):
        rng = np.random.default_rng(2)
        trials = random_trials(rng)
        counts = BinnedCounts(rng.poisson(0.3, size=60), 1., 60.)
        for _ in range(10):
            params = random_params(rng)
            base = nll(params, trials, counts)
            self.assertEqual(base, objective(params, trials, counts, NO_RIDGE))
            self.assertGreaterEqual(objective(params, trials, counts, RidgeConfig()), base)
            self.assertLessEqual(
                objective(params, trials, counts, RidgeConfig(1., 1., 5.)),
                objective(params, trials, counts, RidgeConfig(2., 1., 5.)),
            )
        flat = ModelParams(mu=0.1, a0=0.5, tau=2.)
        self.assertEqual(nll(flat, trials, counts), objective(flat, trials, counts, RidgeConfig()))

    def test_non_finite(self):
        rng = np.random.default_rng(3)
        trials = random_trials(rng)
        counts = BinnedCounts(np.ones(60), 1., 60.)
        params = ModelParams(mu=0.1, a0=1., w_neg=800., w_rt=800., w_err=800., tau=2.)
        with np.errstate(over='ignore', invalid='ignore'):
            with self.assertRaises(NumericalError):
                nll(params, trials, counts)

    def test_generating_params_score_better(self):
        rng = np.random.default_rng(4)
        trials = random_trials(rng, n=40, duration=200.)
        truth = ModelParams(mu=0.05, a0=0.6, w_neg=0.8, w_rt=0.3, w_err=-0.5, tau=4.)
        perturbed = ModelParams(mu=0.2, a0=0.1, w_neg=-0.8, w_rt=-0.3, w_err=0.5, tau=15.)
        wins = 0
        for seed in range(100):
            counts = simulate_binned(truth, trials, 1., 200., seed)
            wins += nll(truth, trials, counts) <= nll(perturbed, trials, counts)
        self.assertGreater(wins, 50)


class TestGradient(unittest.TestCase):
    def test_finite_differences(self):
        rng = np.random.default_rng(7)
        ridge = RidgeConfig(1., 1., 5.)
        for _ in range(50):
            duration = float(rng.uniform(30., 90.))
            trials = random_trials(rng, n=int(rng.integers(2, 15)), duration=duration - 1.)
            counts = BinnedCounts(rng.poisson(0.5, size=int(np.ceil(duration))), 1., duration)
            params = random_params(rng)
            analytic = gradient(params, trials, counts, ridge)
            vector = params.as_vector()
            for i, name in enumerate(PARAM_NAMES):
                h = 1e-5 * max(abs(vector[i]), 1e-2)
                numeric = (
                    objective(_perturb(params, i, h), trials, counts, ridge)
                    - objective(_perturb(params, i, -h), trials, counts, ridge)
                ) / (2. * h)
                self.assertLessEqual(
                    abs(analytic[i] - numeric), 1e-4 * max(abs(numeric), 1.),
                    msg=f'{name}: analytic {analytic[i]} vs numeric {numeric}',
                )

    def test_homogeneous_stationary_point(self):
        counts = BinnedCounts([3, 0, 1, 2, 0, 0, 4, 0, 1, 1], 1., 10.)
        params = ModelParams(mu=counts.n_events / 10., variant=Variant.HOMOGENEOUS)
        self.assertAlmostEqual(0., gradient(params, [], counts, NO_RIDGE)[0], places=12)

    def test_unused_components(self):
        rng = np.random.default_rng(8)
        trials = random_trials(rng)
        counts = BinnedCounts(rng.poisson(0.5, size=60), 1., 60.)
        homogeneous = gradient(ModelParams(mu=0.2, variant=Variant.HOMOGENEOUS), trials, counts, RidgeConfig())
        np.testing.assert_array_equal(np.zeros(5), homogeneous[1:])
        modulated = gradient(ModelParams(mu=0.2, a0=0.5, tau=3., variant=Variant.TRIAL_MODULATED), trials, counts, RidgeConfig())
        np.testing.assert_array_equal(np.zeros(3), modulated[2:5])

    def test_ridge_term(self):
        rng = np.random.default_rng(9)
        trials = random_trials(rng)
        counts = BinnedCounts(rng.poisson(0.5, size=60), 1., 60.)
        params = ModelParams(mu=0.2, a0=0.5, w_neg=0.4, w_rt=-0.7, w_err=1.1, tau=3.)
        ridge = RidgeConfig(1., 2., 5.)
        difference = gradient(params, trials, counts, ridge) - gradient(params, trials, counts, NO_RIDGE)
        np.testing.assert_allclose([0.8, -2.8, 11.], difference[2:5], rtol=1e-12)
        np.testing.assert_array_equal(np.zeros(3), difference[[0, 1, 5]])


if __name__ == '__main__':
    unittest.main()

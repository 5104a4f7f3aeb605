import math
import unittest

import numpy as np

from src.model import EventTrain
from src.model import ModelParams
from src.model import RawTrial
from src.model import SubjectRecord
from src.model import SummaryAnnotations
from src.model import TrialCovariates
from src.model import TrialTable
from src.model import Variant
from src.model import amplitude
from src.model import bin_layout
from src.model import build_covariates
from src.model import compensator
from src.model import intensity_at
from src.model import intensity_binned
from src.utils import DegenerateSubjectError
from src.utils import ValidationError


def _trial(i, rho, x_neg=0, x_rt=0., x_err=0):
    return TrialCovariates(i, rho, x_neg, None if rho is None else 0.5, x_rt, 1 if rho is None else x_err)


def _random_trials(rng, n=12, duration=60.):
    rho = np.sort(rng.uniform(0., duration, size=n))
    return [_trial(i, float(r), int(rng.integers(2)), float(rng.normal()), int(rng.random() < 0.2)) for i, r in enumerate(rho)]


class TestTypes(unittest.TestCase):
    def test_event_train(self):
        train = EventTrain([1., 2.5], 10.)
        self.assertEqual(2, len(train))
        self.assertFalse(train.onsets.flags.writeable)
        self.assertEqual(train, EventTrain(np.array([1., 2.5]), 10))
        with self.assertRaises(ValidationError):
            EventTrain([2., 1.], 10.)
        with self.assertRaises(ValidationError):
            EventTrain([1., 1.], 10.)
        with self.assertRaises(ValidationError):
            EventTrain([11.], 10.)
        with self.assertRaises(ValidationError):
            EventTrain([], 0.)

    def test_params(self):
        with self.assertRaises(ValidationError):
            ModelParams(mu=0.)
        with self.assertRaises(ValidationError):
            ModelParams(mu=0.1, a0=0., variant=Variant.FULL)
        with self.assertRaises(ValidationError):
            ModelParams(mu=0.1, a0=1., w_neg=0.5, variant=Variant.TRIAL_MODULATED)
        ModelParams(mu=0.1, variant=Variant.HOMOGENEOUS)

        params = ModelParams(mu=0.1, a0=0.3, w_neg=0.8, w_rt=0.3, w_err=-0.5, tau=4.)
        self.assertEqual(params, ModelParams.from_vector(params.as_vector(), Variant.FULL))
        self.assertEqual(params, ModelParams.from_dict(params.to_dict()))
        reduced = ModelParams.from_vector(params.as_vector(), Variant.TRIAL_MODULATED)
        self.assertEqual((0., 0., 0.), reduced.weights)
        self.assertEqual(3, reduced.n_params)

    def test_covariates_invariants(self):
        with self.assertRaises(ValidationError):
            TrialCovariates(0, 1., 2, 0.5, 0., 0)
        with self.assertRaises(ValidationError):
            TrialCovariates(0, None, 0, None, 0., 0)

    def test_subject_record(self):
        train = EventTrain([1.], 10.)
        with self.assertRaises(ValidationError):
            SubjectRecord('s', train, (_trial(1, 2.), _trial(0, 1.)))
        with self.assertRaises(ValidationError):
            SubjectRecord('s', train, (_trial(0, 12.),))
        with self.assertRaises(ValidationError):
            SubjectRecord('s', train, (_trial(0, 2.),), SummaryAnnotations([[0., 1.], [1., 1.]], [1., 2.], [0.5, 0.5]))
        record = SubjectRecord('s', train, [_trial(0, 2.), _trial(1, None)])
        self.assertEqual(1, record.table.n_answered)

    def test_annotations(self):
        with self.assertRaises(ValidationError):
            SummaryAnnotations([[1., 0.], [0., 0.]], [], [])
        with self.assertRaises(ValidationError):
            SummaryAnnotations([[0., 0.]], [-1.], [0.])
        with self.assertRaises(ValidationError):
            SummaryAnnotations([[0., 0.]], [1., 2.], [0.])


class TestBuildCovariates(unittest.TestCase):
    @staticmethod
    def _raw(i, rt, negative=False, correct=True):
        onset = 10. * i
        return RawTrial(i, onset, None if rt is None else onset + rt, negative, rt, correct)

    def test_z_scores(self):
        covariates = build_covariates([self._raw(i, math.exp(i + 1)) for i in range(3)])
        expected = [-1.224744871391589, 0., 1.224744871391589]
        np.testing.assert_allclose([c.x_rt for c in covariates], expected, atol=1e-12)
        self.assertTrue(all(c.x_err == 0 for c in covariates))

    def test_constant_rts(self):
        covariates = build_covariates([self._raw(i, 0.5) for i in range(4)])
        self.assertTrue(all(c.x_rt == 0. for c in covariates))

    def test_misses_and_errors(self):
        covariates = build_covariates([
            self._raw(2, 0.4, negative=True),
            self._raw(0, 0.5, correct=False),
            self._raw(1, None),
        ])
        self.assertEqual([0, 1, 2], [c.trial_idx for c in covariates])
        missed = covariates[1]
        self.assertFalse(missed.answered)
        self.assertEqual((0., 1), (missed.x_rt, missed.x_err))
        self.assertEqual(1, covariates[0].x_err)
        self.assertEqual(1, covariates[2].x_neg)
        self.assertEqual(2, TrialTable(covariates).n_answered)

    def test_errors(self):
        with self.assertRaises(DegenerateSubjectError):
            build_covariates([self._raw(0, 0.5), self._raw(1, None)])
        with self.assertRaises(ValidationError):
            build_covariates([self._raw(0, 0.5), self._raw(1, -0.1), self._raw(2, 0.4)])
        with self.assertRaises(ValidationError):
            build_covariates([self._raw(0, 0.5), self._raw(0, 0.4)])


class TestIntensity(unittest.TestCase):
    def test_amplitude(self):
        params = ModelParams(mu=0.1, a0=1., w_neg=0.5)
        self.assertEqual(1., amplitude(params, _trial(0, 1.)))
        self.assertAlmostEqual(1.648721, amplitude(params, _trial(0, 1., x_neg=1)), places=6)
        self.assertAlmostEqual(
            amplitude(params, _trial(0, 1., x_neg=1, x_rt=0.3)),
            amplitude(params, _trial(0, 1., x_rt=0.3)) * math.exp(0.5),
            places=12,
        )
        modulated = ModelParams(mu=0.1, a0=0.7, variant=Variant.TRIAL_MODULATED)
        self.assertEqual(0.7, amplitude(modulated, _trial(0, 1., x_neg=1, x_rt=2., x_err=1)))
        with self.assertRaises(ValidationError):
            amplitude(ModelParams(mu=0.1, variant=Variant.HOMOGENEOUS), _trial(0, 1.))

    def test_intensity_at(self):
        params = ModelParams(mu=0.1, a0=0.5, tau=2., variant=Variant.TRIAL_MODULATED)
        trials = [_trial(0, 10.)]
        self.assertEqual(0.1, intensity_at(params, trials, 5.))
        self.assertAlmostEqual(0.283940, intensity_at(params, trials, 12.), places=6)
        homogeneous = ModelParams(mu=0.2, variant=Variant.HOMOGENEOUS)
        np.testing.assert_array_equal(np.full(3, 0.2), intensity_at(homogeneous, trials, np.array([0., 10., 50.])))

    def test_misses_trigger_nothing(self):
        params = ModelParams(mu=0.1, a0=0.5, tau=2.)
        self.assertEqual(
            intensity_at(params, [_trial(0, 10.)], 12.),
            intensity_at(params, [_trial(0, 10.), _trial(1, None)], 12.),
        )

    def test_ordering_invariance(self):
        rng = np.random.default_rng(3)
        trials = _random_trials(rng)
        params = ModelParams(mu=0.05, a0=0.4, w_neg=0.7, w_rt=-0.2, w_err=0.4, tau=3.)
        times = np.linspace(0., 60., 101)
        shuffled = [trials[i] for i in rng.permutation(len(trials))]
        np.testing.assert_allclose(intensity_at(params, trials, times), intensity_at(params, TrialTable(shuffled), times), rtol=1e-12)

    def test_intensity_binned(self):
        homogeneous = ModelParams(mu=0.1, variant=Variant.HOMOGENEOUS)
        np.testing.assert_array_equal(np.full(10, 0.1), intensity_binned(homogeneous, [], 1., 10.))

        rng = np.random.default_rng(5)
        trials = _random_trials(rng)
        params = ModelParams(mu=0.05, a0=0.4, w_neg=0.7, w_rt=-0.2, w_err=0.4, tau=3.)
        values = intensity_binned(params, trials, 1., 60.)
        self.assertEqual(60, values.size)
        self.assertTrue(np.all(values >= params.mu))
        for k in rng.integers(0, 60, size=5):
            self.assertEqual(intensity_at(params, trials, k + 0.5), values[k])

    def test_partial_last_bin(self):
        centres, widths = bin_layout(10.5, 1.)
        self.assertEqual(11, centres.size)
        self.assertEqual((10.25, 0.5), (centres[-1], widths[-1]))
        self.assertAlmostEqual(10.5, float(widths.sum()))


class TestCompensator(unittest.TestCase):
    def test_closed_forms(self):
        homogeneous = ModelParams(mu=0.1, variant=Variant.HOMOGENEOUS)
        self.assertAlmostEqual(10., compensator(homogeneous, [], 100.))
        self.assertEqual(0., compensator(homogeneous, [], 0.))

        params = ModelParams(mu=1e-5, a0=0.5, tau=2., variant=Variant.TRIAL_MODULATED)
        kernel_mass = compensator(params, [_trial(0, 0.)], 200.) - 1e-5 * 200.
        self.assertAlmostEqual(1., kernel_mass, places=12)

    def test_matches_numerical_integration(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            trials = _random_trials(rng, n=8, duration=30.)
            params = ModelParams(
                mu=rng.uniform(0.01, 0.5), a0=rng.uniform(0.1, 2.),
                w_neg=rng.normal(), w_rt=rng.normal(), w_err=rng.normal(), tau=rng.uniform(0.5, 10.),
            )
            t = 30.
            # piecewise, with every kernel onset a grid point
            edges = np.unique(np.concatenate([[0., t], TrialTable(trials).rho]))
            total = 0.
            for a, b in zip(edges[:-1], edges[1:]):
                grid = np.linspace(a, b - 1e-12, max(int((b - a) / 1e-3), 2) + 1)
                total += np.trapz(intensity_at(params, trials, grid), grid)
            self.assertAlmostEqual(1., total / compensator(params, trials, t), delta=1e-6)

    def test_non_decreasing(self):
        rng = np.random.default_rng(2)
        trials = _random_trials(rng)
        params = ModelParams(mu=0.05, a0=0.4, w_neg=0.7, tau=3.)
        values = compensator(params, trials, np.linspace(0., 60., 601))
        self.assertEqual(0., values[0])
        self.assertTrue(np.all(np.diff(values) >= 0))


if __name__ == '__main__':
    unittest.main()

import unittest

import numpy as np
import pandas as pd
from sklearn.metrics import roc_auc_score
from sklearn.metrics import roc_curve

from src.classification import POINT_PROCESS_SCHEMA
from src.classification import SCR_SCHEMA
from src.classification import FeatureSet
from src.classification import FeatureVector
from src.classification import ablate
from src.classification import ablate_features
from src.classification import assemble_point_process_features
from src.classification import assemble_summary_features
from src.classification import auroc
from src.classification import evaluate_blocks
from src.classification import evaluate_features
from src.classification import feature_table
from src.classification import held_out_scores
from src.classification import loso_evaluate
from src.classification import loso_folds
from src.classification import permutation_importance
from src.classification import permutation_importance_features
from src.classification import sensitivity_specificity
from src.classification import shuffled_auroc_drop
from src.classification import train_fold
from src.classification import zscore_apply
from src.classification import zscore_fit_transform
from src.datasets import CohortDataset
from src.model import EventTrain
from src.model import ModelParams
from src.model import SubjectRecord
from src.model import SummaryAnnotations
from src.model import Variant
from src.optimizer import FitReport
from src.utils import EvaluationError
from src.utils import FeatureUnavailableError
from src.utils import UndefinedStatisticError
from src.utils import ValidationError

SEEDS = (0, 1)


def _fit(params: ModelParams) -> FitReport:
    return FitReport(params, nll=0., objective=0., converged=True, iterations=1, grad_inf_norm=0., n_restarts_used=1)


def _cohort(n_per_group: int = 8, shift: float = 2., seed: int = 0, annotate: bool = True) -> CohortDataset:
    """ Labelled subjects with ready-made full-model fits; w_neg carries the group signal. """
    rng = np.random.default_rng(seed)
    subjects, labels, fits = dict(), dict(), dict()
    for g, group in enumerate('CDS'):
        for i in range(n_per_group):
            subject_id = f'{group}{i:02d}'
            n_events = int(rng.integers(5, 15))
            onsets = np.sort(rng.uniform(0., 100., size=n_events))
            annotations = SummaryAnnotations(
                tonic_samples=np.column_stack([np.arange(5.), rng.normal(size=5)]),
                scr_amplitudes=rng.uniform(0.1, 1., size=n_events),
                scr_rise_times_s=rng.uniform(0.5, 2., size=n_events),
            ) if annotate and subject_id != 'C00' else None
            subjects[subject_id] = SubjectRecord(subject_id, EventTrain(onsets, 100.), (), annotations)
            labels[subject_id] = group
            params = ModelParams(
                mu=rng.uniform(0.05, 0.2),
                a0=rng.uniform(0.1, 1.),
                w_neg=(shift if g else 0.) + rng.normal(scale=0.5),
                w_rt=rng.normal(scale=0.5),
                w_err=rng.normal(scale=0.5),
                tau=rng.uniform(1., 8.),
            )
            fits[subject_id] = {Variant.FULL: _fit(params)}
    return CohortDataset(subjects, labels, fits)


def _blobs(seed: int = 0, n: int = 20, shift: float = 3.):
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, 1, -1)
    X = np.column_stack([shift * (y > 0) + rng.normal(size=n), rng.normal(size=n)])
    return X, y


class TestFeatures(unittest.TestCase):
    def test_point_process(self):
        params = ModelParams(mu=0.1, a0=0.5, w_neg=1., w_rt=-0.2, w_err=0.3, tau=4.)
        vector = assemble_point_process_features(_fit(params), EventTrain([1., 2., 3.], 10.), 'S1')
        self.assertEqual(POINT_PROCESS_SCHEMA, vector.schema)
        self.assertEqual((0.1, 0.5, 1., -0.2, 0.3, 4., 3.), vector.values)
        with self.assertRaises(ValidationError):
            assemble_point_process_features(_fit(ModelParams(mu=0.1, variant=Variant.HOMOGENEOUS)), EventTrain([], 10.))

    def test_summary(self):
        annotations = SummaryAnnotations(
            tonic_samples=[[0., 1.], [1., 2.], [2., 3.]],
            scr_amplitudes=[1., 2., 3.],
            scr_rise_times_s=[1., 1., 1.],
        )
        values = assemble_summary_features(annotations, 'S1').as_dict()
        self.assertEqual(SCR_SCHEMA, tuple(values))
        self.assertAlmostEqual(2., values['tonic_mean'])
        self.assertAlmostEqual(2. / 3., values['tonic_var'])
        self.assertAlmostEqual(1., values['tonic_slope'])
        self.assertAlmostEqual(2. / 3., values['scr_amp_var'])
        self.assertEqual(0., values['scr_rise_var'])

    def test_summary_edge_cases(self):
        flat = SummaryAnnotations([[0., 2.], [5., 2.]], [1.], [1.])
        self.assertEqual(0., assemble_summary_features(flat).as_dict()['tonic_slope'])
        with self.assertRaises(FeatureUnavailableError):
            assemble_summary_features(None)
        with self.assertRaises(FeatureUnavailableError):
            assemble_summary_features(SummaryAnnotations([[0., 1.]], [1.], [1.]))
        with self.assertRaises(FeatureUnavailableError):
            assemble_summary_features(SummaryAnnotations([[0., 1.], [1., 2.]], [], []))

    def test_vector_checks(self):
        with self.assertRaises(ValidationError):
            FeatureVector('S1', (1., 2.), ('a',))
        with self.assertRaises(ValidationError):
            FeatureVector('S1', (np.nan,), ('a',))

    def test_feature_table(self):
        cohort = _cohort(n_per_group=3)
        frame, excluded = feature_table(cohort, FeatureSet.POINT_PROCESS)
        self.assertEqual((9, 7), frame.shape)
        self.assertEqual([], excluded)
        with self.assertLogs(level='WARNING'):
            frame, excluded = feature_table(cohort, FeatureSet.COMBINED)
        self.assertEqual(['C00'], excluded)
        self.assertEqual(list(POINT_PROCESS_SCHEMA + SCR_SCHEMA), list(frame.columns))
        self.assertNotIn('C00', frame.index)

    def test_missing_inputs(self):
        with self.assertRaises(FeatureUnavailableError):
            feature_table(_cohort(n_per_group=2, annotate=False), FeatureSet.SCR_BASELINE)
        cohort = _cohort(n_per_group=2)
        with self.assertRaises(EvaluationError):
            feature_table(CohortDataset(cohort.subjects, cohort.labels), FeatureSet.POINT_PROCESS)


class TestScaling(unittest.TestCase):
    def test_training_rows_are_standardised(self):
        X = np.random.default_rng(0).normal(3., 2., size=(10, 3))
        scaler, Z = zscore_fit_transform(X)
        np.testing.assert_allclose(np.zeros(3), Z.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(np.ones(3), Z.std(axis=0), atol=1e-12)
        np.testing.assert_allclose(X, scaler.inverse_transform(Z), atol=1e-12)

    def test_constant_columns_map_to_zero(self):
        X = np.column_stack([np.arange(4.), np.full(4, 7.)])
        scaler, Z = zscore_fit_transform(X)
        np.testing.assert_array_equal(np.zeros(4), Z[:, 1])
        np.testing.assert_array_equal([0.], zscore_apply(scaler, [[1., 9.]])[:, 1])
        with self.assertRaises(EvaluationError):
            zscore_fit_transform(X[:1])


class TestMetrics(unittest.TestCase):
    def test_examples(self):
        labels = [-1, -1, 1, 1]
        self.assertEqual(1., auroc([0., 1., 2., 3.], labels))
        self.assertEqual(0., auroc([3., 2., 1., 0.], labels))
        self.assertEqual(0.5, auroc([1., 1., 1., 1.], labels))
        self.assertEqual(0.75, auroc([0., 2., 1., 3.], labels))
        with self.assertRaises(UndefinedStatisticError):
            auroc([0., 1.], [1, 1])

    def test_against_sklearn(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            labels = np.where(rng.random(30) < 0.4, 1, -1)
            labels[:2] = (1, -1)
            scores = np.round(rng.normal(size=30) + 0.5 * labels, 1)
            fpr, tpr, _ = roc_curve(labels, scores)
            self.assertAlmostEqual(roc_auc_score(labels, scores), auroc(scores, labels), places=12)
            self.assertAlmostEqual(np.trapz(tpr, fpr), auroc(scores, labels), places=12)

    def test_sensitivity_specificity(self):
        sensitivity, specificity = sensitivity_specificity([1., -1., 0.5, -2., 0.], [1, 1, 1, -1, -1])
        self.assertAlmostEqual(2. / 3., sensitivity)
        self.assertEqual(1., specificity)


class TestLoso(unittest.TestCase):
    def test_held_out_row_never_trains(self):
        X, y = _blobs()
        folds = loso_folds(X, y)
        for fold in folds:
            keep = np.arange(len(y)) != fold.held_out
            np.testing.assert_allclose(X[keep].mean(axis=0), fold.scaler.scaler.mean_)
        changed = X.copy()
        changed[3] = (100., -100.)
        a, b = train_fold(X, y, held_out=3), train_fold(changed, y, held_out=3)
        np.testing.assert_array_equal(a.svm.alpha, b.svm.alpha)
        self.assertEqual(a.svm.bias, b.svm.bias)

    def test_invariant_to_affine_rescaling(self):
        X, y = _blobs(2)
        a = held_out_scores(loso_folds(X, y), X)
        shifted = 5. * X + np.array([100., -3.])
        b = held_out_scores(loso_folds(shifted, y), shifted)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_evaluate_features(self):
        X, y = _blobs(3)
        ids = [f'S{i}' for i in range(len(y))]
        report = evaluate_features(X, y, ids, seeds=SEEDS, featureset='pp', comparison='C vs D')
        self.assertGreater(report.auroc, 0.9)
        self.assertLess(report.max_kkt_residual, 1e-3)
        self.assertEqual(['auroc', 'sensitivity', 'specificity'], list(report.summary_frame()['metric']))
        decisions = report.decisions_frame()
        self.assertEqual(len(SEEDS) * len(y), len(decisions))
        self.assertEqual(set(ids), set(decisions['subject_id']))

    def test_needs_two_per_class(self):
        X, y = _blobs(4, n=6)
        y = np.array([1, 1, 1, 1, 1, -1])
        with self.assertRaises(EvaluationError):
            evaluate_features(X, y, list('abcdef'), seeds=SEEDS)

    def test_cohort_blocks(self):
        cohort = _cohort()
        reports = evaluate_blocks(cohort, FeatureSet.POINT_PROCESS, seeds=SEEDS)
        self.assertEqual(['C vs D+S', 'C vs D', 'C vs S'], [r.comparison for r in reports])
        self.assertEqual(24, len(reports[0].subject_ids))
        self.assertEqual(16, len(reports[1].subject_ids))
        self.assertFalse(reports[0].supplementary_specificity)
        self.assertTrue(reports[1].supplementary_specificity)
        self.assertGreater(reports[0].auroc, 0.75)

        with self.assertLogs(level='WARNING'):
            combined = loso_evaluate(cohort, FeatureSet.COMBINED, seeds=SEEDS)
        self.assertEqual(('C00',), combined.excluded)
        self.assertEqual(23, len(combined.subject_ids))


class TestAttribution(unittest.TestCase):
    def test_identity_permutation_drops_nothing(self):
        X, y = _blobs(5)
        folds = loso_folds(X, y)
        self.assertEqual(0., shuffled_auroc_drop(folds, X, y, 0, np.arange(len(y))))

    def test_importance_ranks_the_signal_first(self):
        X, y = _blobs(6, n=24)
        frame = pd.DataFrame(X, columns=['signal', 'noise'])
        importance = permutation_importance_features(frame, y, seeds=SEEDS, n_shuffles=5)
        self.assertEqual(['signal', 'noise'], list(importance['feature']))
        self.assertEqual([10, 10], list(importance['n_draws']))
        self.assertGreater(importance['importance_mean'].iloc[0], 0.2)

    def test_ablation_flags_the_signal(self):
        X, y = _blobs(7, n=24)
        frame = pd.DataFrame(X, columns=['signal', 'noise'])
        ablation = ablate_features(frame, y, seeds=SEEDS, n_permutations=10).set_index('feature')
        self.assertLess(ablation.loc['signal', 'delta_auroc'], -0.2)
        self.assertTrue(ablation.loc['signal', 'significant'])
        self.assertGreater(ablation.loc['signal', 'null_band'], 0.)
        with self.assertRaises(ValidationError):
            ablate_features(frame[['signal']], y, seeds=SEEDS)

    def test_cohort_entry_points(self):
        cohort = _cohort()
        ablation = ablate(cohort, ['w_neg', 'mu', 'tau'], seeds=SEEDS, n_permutations=5)
        self.assertEqual(['w_neg', 'mu', 'tau'], list(ablation['feature']))
        self.assertLess(ablation.set_index('feature').loc['w_neg', 'delta_auroc'], -0.1)
        with self.assertRaises(ValidationError):
            ablate(cohort, ['w_neg', 'nope'], seeds=SEEDS)
        importance = permutation_importance(cohort, seeds=(0,), n_shuffles=3)
        self.assertEqual(set(POINT_PROCESS_SCHEMA), set(importance['feature']))
        self.assertEqual('w_neg', importance['feature'].iloc[0])


if __name__ == '__main__':
    unittest.main()

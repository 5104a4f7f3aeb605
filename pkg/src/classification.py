""" Subject features, fold-wise scaling, leave-one-subject-out evaluation and feature attribution.

Scores are SVM decision values; a positive score predicts the clinical class.
Seeds set the order in which subjects enter each training fold and drive every
permutation draw.
"""
import logging
from dataclasses import dataclass
from dataclasses import replace
from enum import Enum
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
import pandas as pd
from scipy.stats import linregress
from scipy.stats import rankdata
from sklearn.preprocessing import StandardScaler

from src.datasets import CohortDataset
from src.model import PARAM_NAMES
from src.model import EventTrain
from src.model import SummaryAnnotations
from src.model import Variant
from src.optimizer import FitReport
from src.svm import Gamma
from src.svm import SvmModel
from src.svm import svm_decision
from src.svm import svm_train
from src.utils import DEFAULT_SEEDS
from src.utils import EvaluationError
from src.utils import FeatureUnavailableError
from src.utils import UndefinedStatisticError
from src.utils import ValidationError
from src.utils import mean_sd

POINT_PROCESS_SCHEMA: Tuple[str, ...] = PARAM_NAMES + ('n_events',)
SCR_SCHEMA: Tuple[str, ...] = (
    'tonic_mean', 'tonic_var', 'tonic_slope',
    'scr_amp_mean', 'scr_amp_var',
    'scr_rise_mean', 'scr_rise_var',
)
N_PERMUTATIONS = 20
N_SHUFFLES = 10
NULL_BAND_Z = 1.96


class FeatureSet(str, Enum):
    POINT_PROCESS = 'pp'
    SCR_BASELINE = 'scr'
    COMBINED = 'combined'

    @property
    def schema(self) -> Tuple[str, ...]:
        return {
            FeatureSet.POINT_PROCESS: POINT_PROCESS_SCHEMA,
            FeatureSet.SCR_BASELINE: SCR_SCHEMA,
            FeatureSet.COMBINED: POINT_PROCESS_SCHEMA + SCR_SCHEMA,
        }[self]


@dataclass(frozen=True)
class FeatureVector:
    subject_id: str
    values: Tuple[float, ...]
    schema: Tuple[str, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if len(values) != len(self.schema):
            raise ValidationError(f'{len(values)} values for a schema of {len(self.schema)} features.')
        if not all(np.isfinite(values)):
            raise ValidationError(f'subject {self.subject_id}: non-finite feature values {values}.')
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'schema', tuple(self.schema))

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.schema, self.values))


def assemble_point_process_features(fit: FitReport, events: EventTrain, subject_id: str = '') -> FeatureVector:
    """ The FULL model's raw parameters followed by the event count. """
    if fit.variant is not Variant.FULL:
        raise ValidationError(f'point-process features come from the full model. Got a {fit.variant.value} fit.')
    return FeatureVector(subject_id, tuple(fit.params.as_vector()) + (len(events),), POINT_PROCESS_SCHEMA)


def assemble_summary_features(annotations: Optional[SummaryAnnotations], subject_id: str = '') -> FeatureVector:
    """ Tonic level mean, variance and slope, then SCR amplitude and rise-time means and variances.

    Variances are population variances; the slope is the least-squares slope in units per second.
    """
    if annotations is None:
        raise FeatureUnavailableError(f'subject {subject_id} has no SCR annotations.')
    tonic = annotations.tonic_samples
    if tonic.shape[0] < 2:
        raise FeatureUnavailableError(f'subject {subject_id} has fewer than 2 tonic samples.')
    if annotations.scr_amplitudes.size < 1:
        raise FeatureUnavailableError(f'subject {subject_id} has no annotated SCRs.')

    times, levels = tonic[:, 0], tonic[:, 1]
    slope = 0. if np.all(levels == levels[0]) else float(linregress(times, levels).slope)
    values = (
        float(np.mean(levels)), float(np.var(levels)), slope,
        float(np.mean(annotations.scr_amplitudes)), float(np.var(annotations.scr_amplitudes)),
        float(np.mean(annotations.scr_rise_times_s)), float(np.var(annotations.scr_rise_times_s)),
    )
    return FeatureVector(subject_id, values, SCR_SCHEMA)


def feature_table(cohort: CohortDataset, featureset: FeatureSet = FeatureSet.POINT_PROCESS) -> Tuple[pd.DataFrame, List[str]]:
    """ One row of raw features per usable subject.

    :return: the table indexed by subject id and the ids left out for lack of annotations.
    """
    featureset = FeatureSet(featureset)
    rows: Dict[str, Dict[str, float]] = dict()
    excluded: List[str] = list()
    for subject_id, record in cohort.subjects.items():
        row: Dict[str, float] = dict()
        if featureset in (FeatureSet.POINT_PROCESS, FeatureSet.COMBINED):
            reports = cohort.fits.get(subject_id, dict())
            if Variant.FULL not in reports:
                raise EvaluationError(f'subject {subject_id} has no full-model fit; run fit first.')
            row.update(assemble_point_process_features(reports[Variant.FULL], record.events, subject_id).as_dict())
        if featureset in (FeatureSet.SCR_BASELINE, FeatureSet.COMBINED):
            try:
                row.update(assemble_summary_features(record.annotations, subject_id).as_dict())
            except FeatureUnavailableError as error:
                logging.warning(f'{error} Leaving it out of the {featureset.value} arm.')
                excluded.append(subject_id)
                continue
        rows[subject_id] = row

    if not rows and featureset is not FeatureSet.POINT_PROCESS:
        raise FeatureUnavailableError('no subject has SCR annotations; the events file needs amplitude and rise_time_s columns and a tonic file is required.')
    frame = pd.DataFrame.from_dict(rows, orient='index', columns=list(featureset.schema))
    frame.index.name = 'subject_id'
    return frame, excluded


@dataclass(frozen=True, eq=False)
class FoldScaler:
    """ Per-feature z-scoring fitted on training rows; constant features map to 0. """
    scaler: StandardScaler
    constant: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        Z = self.scaler.transform(np.atleast_2d(np.asarray(X, dtype=float)))
        Z[:, self.constant] = 0.
        return Z

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return self.scaler.inverse_transform(np.atleast_2d(np.asarray(Z, dtype=float)))


def zscore_fit_transform(train: np.ndarray) -> Tuple[FoldScaler, np.ndarray]:
    train = np.asarray(train, dtype=float)
    if train.ndim != 2 or train.shape[0] < 2:
        raise EvaluationError(f'z-scoring needs at least 2 training rows. Got shape {train.shape}.')
    scaler = StandardScaler().fit(train)
    fold_scaler = FoldScaler(scaler, np.asarray(scaler.var_ == 0))
    return fold_scaler, fold_scaler.transform(train)


def zscore_apply(scaler: FoldScaler, test: np.ndarray) -> np.ndarray:
    return scaler.transform(test)


@dataclass(frozen=True, eq=False)
class FoldModel:
    held_out: int
    scaler: FoldScaler
    svm: SvmModel

    def score(self, x: np.ndarray) -> float:
        return svm_decision(self.svm, self.scaler.transform(x)[0])


def train_fold(X: np.ndarray, y: np.ndarray, held_out: int, C: float = 1.0, gamma: Gamma = 'scale') -> FoldModel:
    """ Scaler and SVM fitted on every row except held_out. """
    keep = np.arange(X.shape[0]) != held_out
    scaler, train = zscore_fit_transform(X[keep])
    return FoldModel(held_out, scaler, svm_train(train, y[keep], C=C, gamma=gamma))


def loso_folds(X: np.ndarray, y: np.ndarray, C: float = 1.0, gamma: Gamma = 'scale') -> List[FoldModel]:
    return [train_fold(X, y, i, C, gamma) for i in range(X.shape[0])]


def held_out_scores(folds: Sequence[FoldModel], X: np.ndarray) -> np.ndarray:
    scores = np.empty(X.shape[0])
    for fold in folds:
        scores[fold.held_out] = fold.score(X[fold.held_out])
    return scores


def _check_labels(labels: np.ndarray):
    if not np.all(np.isin(labels, (-1, 1))):
        raise ValidationError('labels must be -1 or +1.')
    if np.unique(labels).size < 2:
        raise UndefinedStatisticError('AUROC is undefined for a single class.')


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """ Probability that a positive outscores a negative, ties counting one half. """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    _check_labels(labels)
    positive = labels == 1
    n_pos, n_neg = int(positive.sum()), int((~positive).sum())
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.) / (n_pos * n_neg))


def sensitivity_specificity(scores: Sequence[float], labels: Sequence[int]) -> Tuple[float, float]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    _check_labels(labels)
    predicted = scores > 0
    return float(np.mean(predicted[labels == 1])), float(np.mean(~predicted[labels == -1]))


@dataclass(frozen=True)
class SeedResult:
    seed: int
    auroc: float
    sensitivity: float
    specificity: float


@dataclass(frozen=True, eq=False)
class EvalReport:
    featureset: str
    comparison: str
    subject_ids: Tuple[str, ...]
    labels: np.ndarray
    seed_results: Tuple[SeedResult, ...]
    decisions: Mapping[int, np.ndarray]
    max_kkt_residual: float
    excluded: Tuple[str, ...] = ()
    supplementary_specificity: bool = False

    def _summary(self, metric: str) -> Tuple[float, float]:
        return mean_sd([getattr(result, metric) for result in self.seed_results])

    @property
    def auroc(self) -> float:
        return self._summary('auroc')[0]

    @property
    def auroc_sd(self) -> float:
        return self._summary('auroc')[1]

    @property
    def sensitivity(self) -> float:
        return self._summary('sensitivity')[0]

    @property
    def specificity(self) -> float:
        return self._summary('specificity')[0]

    def summary_frame(self) -> pd.DataFrame:
        records = list()
        for metric in ('auroc', 'sensitivity', 'specificity'):
            mean, sd = self._summary(metric)
            records.append({
                'featureset': self.featureset,
                'comparison': self.comparison,
                'metric': metric,
                'mean': mean,
                'sd': sd,
                'n_subjects': len(self.subject_ids),
                'n_seeds': len(self.seed_results),
                'supplementary': metric == 'specificity' and self.supplementary_specificity,
            })
        return pd.DataFrame(records)

    def decisions_frame(self) -> pd.DataFrame:
        records = [
            {
                'featureset': self.featureset,
                'comparison': self.comparison,
                'seed': seed,
                'subject_id': subject_id,
                'label': int(label),
                'score': float(score),
            }
            for seed, scores in self.decisions.items()
            for subject_id, label, score in zip(self.subject_ids, self.labels, scores)
        ]
        return pd.DataFrame(records)


def _check_classes(y: np.ndarray):
    for label, name in ((-1, 'control'), (1, 'clinical')):
        if int(np.sum(y == label)) < 2:
            raise EvaluationError(f'leave-one-subject-out needs at least 2 {name} subjects. Got {int(np.sum(y == label))}.')


def _seeded_scores(X: np.ndarray, y: np.ndarray, seed: int, C: float, gamma: Gamma) -> Tuple[np.ndarray, List[FoldModel], np.ndarray]:
    order = np.random.default_rng(seed).permutation(X.shape[0])
    folds = loso_folds(X[order], y[order], C, gamma)
    scores = np.empty(X.shape[0])
    scores[order] = held_out_scores(folds, X[order])
    return scores, folds, order


def evaluate_features(
        X: np.ndarray,
        y: np.ndarray,
        subject_ids: Sequence[str],
        seeds: Sequence[int] = DEFAULT_SEEDS,
        C: float = 1.0,
        gamma: Gamma = 'scale',
        *,
        featureset: str = '',
        comparison: str = '',
) -> EvalReport:
    """ Leave-one-subject-out scores, AUROC, sensitivity and specificity for every seed. """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    _check_classes(y)
    if not seeds:
        raise ValidationError('at least one seed is needed.')

    results: List[SeedResult] = list()
    decisions: Dict[int, np.ndarray] = dict()
    max_residual = 0.
    for seed in seeds:
        scores, folds, _ = _seeded_scores(X, y, int(seed), C, gamma)
        max_residual = max(max_residual, max(fold.svm.kkt_residual for fold in folds))
        sensitivity, specificity = sensitivity_specificity(scores, y)
        results.append(SeedResult(int(seed), auroc(scores, y), sensitivity, specificity))
        decisions[int(seed)] = scores

    return EvalReport(
        featureset=featureset,
        comparison=comparison,
        subject_ids=tuple(subject_ids),
        labels=y,
        seed_results=tuple(results),
        decisions=decisions,
        max_kkt_residual=max_residual,
    )


def _block(cohort: CohortDataset, frame: pd.DataFrame, group: Optional[str]) -> Tuple[pd.DataFrame, np.ndarray, str]:
    clinical = cohort.clinical_groups
    members = clinical if group is None else [group]
    keep = [k for k in frame.index if cohort.labels.get(k) in members + [cohort.control_label]]
    block = frame.loc[keep]
    return block, cohort.targets(list(block.index)), f'{cohort.control_label} vs {"+".join(members)}'


def loso_evaluate(
        cohort: CohortDataset,
        featureset: FeatureSet = FeatureSet.POINT_PROCESS,
        seeds: Sequence[int] = DEFAULT_SEEDS,
        C: float = 1.0,
        gamma: Gamma = 'scale',
        group: Optional[str] = None,
) -> EvalReport:
    """ Controls against the clinical groups pooled, or against one group. """
    featureset = FeatureSet(featureset)
    frame, excluded = feature_table(cohort, featureset)
    block, y, comparison = _block(cohort, frame, group)
    report = evaluate_features(
        block.to_numpy(dtype=float), y, list(block.index), seeds, C, gamma,
        featureset=featureset.value, comparison=comparison,
    )
    logging.info(f'{featureset.value}, {comparison}: AUROC {report.auroc:.3f} +- {report.auroc_sd:.3f}.')
    return replace(report, excluded=tuple(excluded), supplementary_specificity=group is not None)


def evaluate_blocks(
        cohort: CohortDataset,
        featureset: FeatureSet = FeatureSet.POINT_PROCESS,
        seeds: Sequence[int] = DEFAULT_SEEDS,
        C: float = 1.0,
        gamma: Gamma = 'scale',
) -> List[EvalReport]:
    """ The pooled comparison, then one per clinical group when there are several. """
    groups: List[Optional[str]] = [None]
    if len(cohort.clinical_groups) > 1:
        groups.extend(cohort.clinical_groups)
    return [loso_evaluate(cohort, featureset, seeds, C, gamma, group) for group in groups]


def permutation_null(
        X: np.ndarray,
        y: np.ndarray,
        seed: int = 0,
        n_permutations: int = N_PERMUTATIONS,
        C: float = 1.0,
        gamma: Gamma = 'scale',
) -> np.ndarray:
    """ AUROC of the LOSO pipeline under randomly permuted labels. """
    rng = np.random.default_rng([int(seed), n_permutations])
    values = np.empty(n_permutations)
    for p in range(n_permutations):
        permuted = rng.permutation(y)
        scores, _, _ = _seeded_scores(X, permuted, seed, C, gamma)
        values[p] = auroc(scores, permuted)
    return values


def ablate_features(
        frame: pd.DataFrame,
        y: np.ndarray,
        seeds: Sequence[int] = DEFAULT_SEEDS,
        n_permutations: int = N_PERMUTATIONS,
        C: float = 1.0,
        gamma: Gamma = 'scale',
) -> pd.DataFrame:
    """ Drop one feature at a time and report the change in mean AUROC.

    A change is flagged when it leaves the band of 1.96 standard deviations of
    the label-permutation null.
    """
    schema = list(frame.columns)
    if len(schema) < 2:
        raise ValidationError(f'ablation needs at least 2 features. Got {schema}.')
    ids = list(frame.index)
    full = evaluate_features(frame.to_numpy(dtype=float), y, ids, seeds, C, gamma)
    null = permutation_null(frame.to_numpy(dtype=float), y, seeds[0], n_permutations, C, gamma)
    band = NULL_BAND_Z * float(np.std(null, ddof=1)) if null.size > 1 else 0.

    records = list()
    for feature in schema:
        reduced = frame.drop(columns=[feature])
        without = evaluate_features(reduced.to_numpy(dtype=float), y, ids, seeds, C, gamma)
        delta = without.auroc - full.auroc
        records.append({
            'feature': feature,
            'auroc_full': full.auroc,
            'auroc_without': without.auroc,
            'auroc_without_sd': without.auroc_sd,
            'delta_auroc': delta,
            'null_band': band,
            'significant': abs(delta) > band,
        })
        logging.info(f'without {feature}: AUROC {without.auroc:.3f} (delta {delta:+.3f}).')
    return pd.DataFrame(records)


def ablate(
        cohort: CohortDataset,
        base_schema: Optional[Sequence[str]] = None,
        seeds: Sequence[int] = DEFAULT_SEEDS,
        featureset: FeatureSet = FeatureSet.POINT_PROCESS,
        n_permutations: int = N_PERMUTATIONS,
        C: float = 1.0,
        gamma: Gamma = 'scale',
) -> pd.DataFrame:
    frame, _ = feature_table(cohort, featureset)
    if base_schema is not None:
        unknown = [f for f in base_schema if f not in frame.columns]
        if unknown:
            raise ValidationError(f'unknown features {unknown}; choose from {list(frame.columns)}.')
        frame = frame[list(base_schema)]
    block, y, _ = _block(cohort, frame, None)
    return ablate_features(block, y, seeds, n_permutations, C, gamma)


def shuffled_auroc_drop(folds: Sequence[FoldModel], X: np.ndarray, y: np.ndarray, column: int, permutation: np.ndarray) -> float:
    """ Held-out AUROC lost when one column is permuted across subjects; the fold models stay fixed. """
    shuffled = X.copy()
    shuffled[:, column] = X[permutation, column]
    return auroc(held_out_scores(folds, X), y) - auroc(held_out_scores(folds, shuffled), y)


def permutation_importance_features(
        frame: pd.DataFrame,
        y: np.ndarray,
        seeds: Sequence[int] = DEFAULT_SEEDS,
        n_shuffles: int = N_SHUFFLES,
        C: float = 1.0,
        gamma: Gamma = 'scale',
) -> pd.DataFrame:
    """ Mean AUROC drop per feature over seeds and shuffles, with its Monte Carlo sd.

    This is permutation importance, not a Shapley attribution.
    """
    X = frame.to_numpy(dtype=float)
    y = np.asarray(y, dtype=int)
    _check_classes(y)
    drops: Dict[str, List[float]] = {feature: list() for feature in frame.columns}
    for seed in seeds:
        _, folds, order = _seeded_scores(X, y, int(seed), C, gamma)
        X_ordered, y_ordered = X[order], y[order]
        rng = np.random.default_rng([int(seed), n_shuffles])
        for column, feature in enumerate(frame.columns):
            for _ in range(n_shuffles):
                drops[feature].append(shuffled_auroc_drop(folds, X_ordered, y_ordered, column, rng.permutation(X.shape[0])))

    records = list()
    for feature, values in drops.items():
        mean, sd = mean_sd(values)
        records.append({'feature': feature, 'importance_mean': mean, 'importance_sd': sd, 'n_draws': len(values)})
    return pd.DataFrame(records).sort_values('importance_mean', ascending=False, kind='mergesort').reset_index(drop=True)


def permutation_importance(
        cohort: CohortDataset,
        seeds: Sequence[int] = DEFAULT_SEEDS,
        featureset: FeatureSet = FeatureSet.POINT_PROCESS,
        n_shuffles: int = N_SHUFFLES,
        C: float = 1.0,
        gamma: Gamma = 'scale',
) -> pd.DataFrame:
    frame, _ = feature_table(cohort, featureset)
    block, y, _ = _block(cohort, frame, None)
    return permutation_importance_features(block, y, seeds, n_shuffles, C, gamma)

""" Three-model comparison per subject and its cohort summary. """
import logging
from dataclasses import dataclass
from typing import Dict
from typing import List
from typing import Mapping

import numpy as np
import pandas as pd

from src.datasets import CohortDataset
from src.gof import KS_COEFF
from src.gof import GofReport
from src.gof import gof_report
from src.model import VARIANTS
from src.model import SubjectRecord
from src.model import Variant
from src.optimizer import FitReport
from src.stats import kruskal_wallis
from src.utils import EvaluationError
from src.utils import ValidationError
from src.utils import mean_sd

TABLE_ROWS = ['n_params', 'nll_mean', 'nll_sd', 'aic_mean', 'aic_sd', 'ks_mean', 'ks_median', 'ks_pass_rate', 'n_subjects']


@dataclass(frozen=True)
class ComparisonRow:
    subject_id: str
    reports: Mapping[Variant, GofReport]


def compare_models(subject: SubjectRecord, fits: Mapping[Variant, FitReport], alpha_coeff: float = KS_COEFF) -> ComparisonRow:
    missing = [v.value for v in VARIANTS if v not in fits]
    if missing:
        raise ValidationError(f'subject {subject.subject_id}: no fits for {missing}.')
    return ComparisonRow(
        subject_id=subject.subject_id,
        reports={variant: gof_report(fits[variant], subject, alpha_coeff) for variant in VARIANTS},
    )


def compare_cohort(cohort: CohortDataset, alpha_coeff: float = KS_COEFF) -> List[ComparisonRow]:
    rows: List[ComparisonRow] = list()
    for subject_id, record in cohort.subjects.items():
        if subject_id not in cohort.fits:
            logging.warning(f'subject {subject_id} has no fits; leaving it out of the comparison.')
            continue
        if len(record.events) == 0:
            logging.warning(f'subject {subject_id} has no events; the KS statistic is undefined, leaving it out.')
            continue
        rows.append(compare_models(record, cohort.fits[subject_id], alpha_coeff))
    return rows


def subjects_frame(rows: List[ComparisonRow], labels: Mapping[str, str] = None) -> pd.DataFrame:
    """ One line per subject and model. """
    labels = labels or dict()
    records = [
        {'subject_id': row.subject_id, 'group': labels.get(row.subject_id), **report.to_dict()}
        for row in rows
        for report in row.reports.values()
    ]
    return pd.DataFrame(records)


def comparison_table(rows: List[ComparisonRow]) -> pd.DataFrame:
    """ Cohort summary with one column per model and one row per metric. """
    if not rows:
        raise EvaluationError('no subjects to compare.')
    table: Dict[str, Dict[str, float]] = dict()
    for variant in VARIANTS:
        reports = [row.reports[variant] for row in rows]
        nll_mean, nll_sd = mean_sd([r.nll for r in reports])
        aic_mean, aic_sd = mean_sd([r.aic for r in reports])
        ks = np.asarray([r.ks_d for r in reports])
        table[variant.value] = {
            'n_params': variant.n_params,
            'nll_mean': nll_mean,
            'nll_sd': nll_sd,
            'aic_mean': aic_mean,
            'aic_sd': aic_sd,
            'ks_mean': float(np.mean(ks)),
            'ks_median': float(np.median(ks)),
            'ks_pass_rate': float(np.mean([r.passes_ks for r in reports])),
            'n_subjects': len(reports),
        }
    frame = pd.DataFrame(table).loc[TABLE_ROWS]
    frame.index.name = 'metric'
    return frame


def fit_bias_check(rows: List[ComparisonRow], labels: Mapping[str, str], variant: Variant = Variant.FULL) -> pd.DataFrame:
    """ Kruskal-Wallis across groups of the per-subject NLL and KS of one model. """
    groups: Dict[str, Dict[str, List[float]]] = {'nll': dict(), 'ks_d': dict()}
    for row in rows:
        if row.subject_id not in labels:
            continue
        report = row.reports[variant]
        groups['nll'].setdefault(labels[row.subject_id], list()).append(report.nll)
        groups['ks_d'].setdefault(labels[row.subject_id], list()).append(report.ks_d)

    if len(groups['nll']) < 2:
        raise EvaluationError('the fit-bias check needs at least two labelled groups.')
    records = list()
    for metric, samples in groups.items():
        result = kruskal_wallis(samples)
        records.append({'variant': variant.value, 'metric': metric, 'h': result.h, 'p': result.p, 'df': result.df})
    return pd.DataFrame(records)

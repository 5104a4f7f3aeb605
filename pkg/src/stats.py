""" Rank tests, effect sizes and false-discovery control for group comparisons. """
import logging
from dataclasses import dataclass
from typing import Dict
from typing import List
from typing import Mapping
from typing import Sequence
from typing import Tuple

import numpy as np
import pandas as pd
from scipy.stats import kruskal
from scipy.stats import mannwhitneyu
from statsmodels.stats.multitest import multipletests

from src.utils import UndefinedStatisticError
from src.utils import ValidationError

EXACT_MAX_N = 20
FDR_Q = 0.05


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p: float
    exact: bool


@dataclass(frozen=True)
class KruskalResult:
    h: float
    p: float
    df: int


def _sample(values: Sequence[float], name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValidationError(f'{name} is empty.')
    if not np.all(np.isfinite(values)):
        raise ValidationError(f'{name} has non-finite values.')
    return values


def mann_whitney_u(x: Sequence[float], y: Sequence[float], exact_max_n: int = EXACT_MAX_N) -> MannWhitneyResult:
    """ Two-sided Mann-Whitney U test.

    The p-value is exact for small samples without ties and otherwise comes from
    the normal approximation with tie correction and continuity correction.
    The reported U is the smaller of the two sample statistics.
    """
    x, y = _sample(x, 'x'), _sample(y, 'y')
    n1, n2 = x.size, y.size
    pooled = np.concatenate([x, y])
    if np.all(pooled == pooled[0]):
        return MannWhitneyResult(u=n1 * n2 / 2., p=1., exact=False)

    ties = np.unique(pooled).size < pooled.size
    exact = n1 + n2 <= exact_max_n and not ties
    result = mannwhitneyu(x, y, alternative='two-sided', use_continuity=True, method='exact' if exact else 'asymptotic')
    u1 = float(result.statistic)
    return MannWhitneyResult(u=min(u1, n1 * n2 - u1), p=float(min(result.pvalue, 1.)), exact=exact)


def kruskal_wallis(groups: Mapping[str, Sequence[float]]) -> KruskalResult:
    if len(groups) < 2:
        raise ValidationError(f'the Kruskal-Wallis test needs at least two groups. Got {len(groups)}.')
    samples = [_sample(values, f'group {name}') for name, values in groups.items()]
    df = len(samples) - 1
    pooled = np.concatenate(samples)
    if np.all(pooled == pooled[0]):
        return KruskalResult(h=0., p=1., df=df)
    result = kruskal(*samples)
    return KruskalResult(h=float(result.statistic), p=float(result.pvalue), df=df)


def bh_fdr(p_values: Sequence[float], q: float = FDR_Q) -> Tuple[np.ndarray, np.ndarray]:
    """ Benjamini-Hochberg step-up procedure.

    :return: rejection flags and adjusted p-values, in input order.
    """
    p_values = np.asarray(p_values, dtype=float).reshape(-1)
    if not 0. < q < 1.:
        raise ValidationError(f'q must lie in (0, 1). Got {q} instead.')
    if p_values.size == 0:
        return np.zeros(0, dtype=bool), np.zeros(0)
    if np.any(~np.isfinite(p_values)) or np.any((p_values < 0) | (p_values > 1)):
        raise ValidationError('p-values must lie in [0, 1].')
    reject, adjusted, _, _ = multipletests(p_values, alpha=q, method='fdr_bh')
    return np.asarray(reject, dtype=bool), np.minimum(np.asarray(adjusted, dtype=float), 1.)


def cohens_d(x: Sequence[float], y: Sequence[float]) -> float:
    """ Mean difference x - y over the pooled sample standard deviation. """
    x, y = _sample(x, 'x'), _sample(y, 'y')
    if x.size < 2 or y.size < 2:
        raise ValidationError('Cohen\'s d needs at least two values per group.')
    pooled = ((x.size - 1) * np.var(x, ddof=1) + (y.size - 1) * np.var(y, ddof=1)) / (x.size + y.size - 2)
    if pooled == 0:
        raise UndefinedStatisticError('Cohen\'s d is undefined when both groups are constant.')
    return float((np.mean(x) - np.mean(y)) / np.sqrt(pooled))


def group_pairs(labels: Mapping[str, str], control_label: str) -> List[Tuple[str, List[str]]]:
    """ Control versus every clinical group, then versus all clinical groups pooled if there are several. """
    clinical = sorted(set(labels.values()) - {control_label})
    pairs = [(f'{control_label} vs {group}', [group]) for group in clinical]
    if len(clinical) > 1:
        pairs.append((f'{control_label} vs {"+".join(clinical)}', clinical))
    return pairs


def cohort_stats(
        features: pd.DataFrame,
        labels: Mapping[str, str],
        control_label: str = 'C',
        q: float = FDR_Q,
        exact_max_n: int = EXACT_MAX_N,
) -> pd.DataFrame:
    """ Per-feature rank tests between groups, with FDR control inside each group pair.

    :param features: one row per subject (indexed by subject id), one column per feature.
    :param labels: subject id -> group.
    """
    labelled = features.loc[[k for k in features.index if k in labels]]
    groups = pd.Series({k: labels[k] for k in labelled.index})
    control = labelled.loc[groups == control_label]
    if control.empty:
        raise ValidationError(f'no subjects in the control group {control_label!r}.')
    pairs = group_pairs({k: labels[k] for k in labelled.index}, control_label)
    if not pairs:
        raise ValidationError('no clinical groups to compare against the control group.')

    records: List[Dict] = list()
    for pair, members in pairs:
        other = labelled.loc[groups.isin(members)]
        rows = list()
        for feature in labelled.columns:
            test = mann_whitney_u(other[feature], control[feature], exact_max_n)
            try:
                d = cohens_d(other[feature], control[feature])
            except (UndefinedStatisticError, ValidationError) as error:
                logging.warning(f'{pair}, {feature}: {error}')
                d = float('nan')
            rows.append({
                'feature': feature,
                'group_pair': pair,
                'n_control': len(control),
                'n_other': len(other),
                'u': test.u,
                'exact': test.exact,
                'p_raw': test.p,
                'cohens_d': d,
            })
        reject, adjusted = bh_fdr([row['p_raw'] for row in rows], q)
        for row, r, a in zip(rows, reject, adjusted):
            row['p_adjusted'] = float(a)
            row['significant'] = bool(r)
        records.extend(rows)

    columns = ['feature', 'group_pair', 'n_control', 'n_other', 'u', 'exact', 'p_raw', 'p_adjusted', 'significant', 'cohens_d']
    return pd.DataFrame(records, columns=columns)

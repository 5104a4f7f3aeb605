""" Goodness of fit: AIC, the KS distance between observed and modelled event-time CDFs, time rescaling. """
from dataclasses import dataclass
from typing import Dict
from typing import Union

import numpy as np

from src.model import EventTrain
from src.model import ModelParams
from src.model import SubjectRecord
from src.model import Trials
from src.model import Variant
from src.model import compensator
from src.optimizer import FitReport
from src.utils import UndefinedStatisticError
from src.utils import ValidationError

KS_COEFF = 1.36


@dataclass(frozen=True)
class GofReport:
    variant: Variant
    n_params: int
    nll: float
    aic: float
    ks_d: float
    ks_threshold: float
    n_events: int

    @property
    def passes_ks(self) -> bool:
        return self.ks_d < self.ks_threshold

    def to_dict(self) -> Dict[str, Union[str, int, float, bool]]:
        return {
            'variant': self.variant.value,
            'n_params': self.n_params,
            'nll': self.nll,
            'aic': self.aic,
            'ks_d': self.ks_d,
            'ks_threshold': self.ks_threshold,
            'n_events': self.n_events,
            'passes_ks': self.passes_ks,
        }


def aic(n_params: int, nll: float) -> float:
    """ 2P - 2 log L, with nll = -log L. """
    if n_params < 1:
        raise ValidationError(f'n_params must be at least 1. Got {n_params} instead.')
    return 2. * n_params + 2. * nll


def ks_statistic(events: EventTrain, params: ModelParams, trials: Trials) -> float:
    """ Largest gap between the empirical CDF of the onsets and the model CDF Lambda(t) / Lambda(T).

    The empirical CDF jumps at every onset, so the supremum is attained at an onset,
    either just before or just after its jump.
    """
    n = len(events)
    if n == 0:
        raise UndefinedStatisticError('the KS statistic needs at least one event.')
    total = compensator(params, trials, events.duration_s)
    model_cdf = compensator(params, trials, events.onsets) / total
    ranks = np.arange(1, n + 1)
    after = np.abs(ranks / n - model_cdf)
    before = np.abs((ranks - 1) / n - model_cdf)
    return float(max(np.max(after), np.max(before)))


def ks_threshold(n_events: int, alpha_coeff: float = KS_COEFF) -> float:
    if n_events < 1:
        raise ValidationError(f'n_events must be at least 1. Got {n_events} instead.')
    return alpha_coeff / np.sqrt(n_events)


def time_rescale(events: EventTrain, params: ModelParams, trials: Trials) -> np.ndarray:
    """ Compensator increments between consecutive onsets; unit exponential under a correct model. """
    if len(events) == 0:
        raise UndefinedStatisticError('time rescaling needs at least one event.')
    rescaled = compensator(params, trials, events.onsets)
    return np.diff(np.concatenate([[0.], rescaled]))


def gof_report(fit: FitReport, record: SubjectRecord, alpha_coeff: float = KS_COEFF) -> GofReport:
    n = len(record.events)
    return GofReport(
        variant=fit.variant,
        n_params=fit.params.n_params,
        nll=fit.nll,
        aic=aic(fit.params.n_params, fit.nll),
        ks_d=ks_statistic(record.events, fit.params, record.table),
        ks_threshold=ks_threshold(n, alpha_coeff),
        n_events=n,
    )

""" Domain types and the conditional intensity of the trial-locked point process.

The intensity of a subject's event train is a baseline rate plus one exponential
kernel per answered trial, anchored at the response time:

    lambda(t) = mu + sum_j A_j * exp(-(t - rho_j) / tau) * 1{t >= rho_j}
    A_j = a0 * exp(w_neg * x_neg + w_rt * x_rt + w_err * x_err)

All rates are in events per second and all times in seconds from task start.
"""
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np

from src.utils import DegenerateSubjectError
from src.utils import ValidationError

PARAM_NAMES: Tuple[str, ...] = ('mu', 'a0', 'w_neg', 'w_rt', 'w_err', 'tau')
WEIGHT_NAMES: Tuple[str, ...] = ('w_neg', 'w_rt', 'w_err')

Times = Union[float, np.ndarray]


class Variant(str, Enum):
    HOMOGENEOUS = 'homogeneous'
    TRIAL_MODULATED = 'trial_modulated'
    FULL = 'full'

    @property
    def n_params(self) -> int:
        return {
            Variant.HOMOGENEOUS: 1,
            Variant.TRIAL_MODULATED: 3,
            Variant.FULL: 6,
        }[self]

    @property
    def free_mask(self) -> np.ndarray:
        """ Which entries of the six-parameter vector this variant estimates. """
        return {
            Variant.HOMOGENEOUS: np.array([1, 0, 0, 0, 0, 0], dtype=bool),
            Variant.TRIAL_MODULATED: np.array([1, 1, 0, 0, 0, 1], dtype=bool),
            Variant.FULL: np.ones(6, dtype=bool),
        }[self]


# Fit order for nested comparisons.
VARIANTS: Tuple[Variant, ...] = (Variant.HOMOGENEOUS, Variant.TRIAL_MODULATED, Variant.FULL)


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class EventTrain:
    onsets: np.ndarray
    duration_s: float

    def __post_init__(self):
        onsets = _frozen_array(np.asarray(self.onsets, dtype=float).reshape(-1))
        duration = float(self.duration_s)
        if not (math.isfinite(duration) and duration > 0):
            raise ValidationError(f'duration must be positive. Got {self.duration_s} instead.')
        if not np.all(np.isfinite(onsets)):
            raise ValidationError('onsets must be finite.')
        if onsets.size > 0:
            outside = np.flatnonzero((onsets < 0) | (onsets > duration))
            if outside.size > 0:
                i = int(outside[0])
                raise ValidationError(f'onset {i} at {onsets[i]} s lies outside [0, {duration}] s.')
            unordered = np.flatnonzero(np.diff(onsets) <= 0)
            if unordered.size > 0:
                i = int(unordered[0]) + 1
                raise ValidationError(f'onsets must be strictly increasing; onset {i} at {onsets[i]} s is not.')
        object.__setattr__(self, 'onsets', onsets)
        object.__setattr__(self, 'duration_s', duration)

    def __len__(self) -> int:
        return int(self.onsets.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventTrain):
            return NotImplemented
        return self.duration_s == other.duration_s and np.array_equal(self.onsets, other.onsets)

    @property
    def n_events(self) -> int:
        return len(self)


@dataclass(frozen=True)
class RawTrial:
    """ One trial as recorded: a missing reaction time or response time marks a miss. """
    trial_idx: int
    stim_onset_s: Optional[float]
    response_time_s: Optional[float]
    negative: bool
    rt_s: Optional[float]
    correct: bool

    @property
    def missed(self) -> bool:
        return self.rt_s is None or self.response_time_s is None


@dataclass(frozen=True)
class TrialCovariates:
    trial_idx: int
    response_time_s: Optional[float]
    x_neg: int
    raw_rt_s: Optional[float]
    x_rt: float
    x_err: int
    stim_onset_s: Optional[float] = None

    def __post_init__(self):
        if self.x_neg not in (0, 1):
            raise ValidationError(f'trial {self.trial_idx}: x_neg must be 0 or 1. Got {self.x_neg} instead.')
        if self.x_err not in (0, 1):
            raise ValidationError(f'trial {self.trial_idx}: x_err must be 0 or 1. Got {self.x_err} instead.')
        if (self.response_time_s is None) != (self.raw_rt_s is None):
            raise ValidationError(f'trial {self.trial_idx}: response time and reaction time must be both present or both absent.')
        if self.raw_rt_s is None and self.x_err != 1:
            raise ValidationError(f'trial {self.trial_idx}: a missed response must carry x_err = 1.')
        if self.response_time_s is not None and self.response_time_s < 0:
            raise ValidationError(f'trial {self.trial_idx}: negative response time {self.response_time_s}.')
        if not math.isfinite(self.x_rt):
            raise ValidationError(f'trial {self.trial_idx}: x_rt must be finite.')

    @property
    def answered(self) -> bool:
        return self.response_time_s is not None


def build_covariates(raw_trials: Sequence[RawTrial]) -> List[TrialCovariates]:
    """ Derive the kernel covariates of one subject's trials.

    x_rt is the log reaction time z-scored over the subject's answered trials with
    the population standard deviation; a zero spread maps every x_rt to 0.
    Missed trials get x_rt = 0 and x_err = 1 and trigger no kernel.

    :param raw_trials: the subject's trials, in any order.
    :return: covariates ordered by trial index.
    """
    raw_trials = sorted(raw_trials, key=lambda t: t.trial_idx)
    indices = [t.trial_idx for t in raw_trials]
    if len(set(indices)) != len(indices):
        raise ValidationError('duplicate trial indices.')

    for trial in raw_trials:
        if trial.rt_s is not None and not trial.rt_s > 0:
            raise ValidationError(f'trial {trial.trial_idx}: reaction time must be positive. Got {trial.rt_s} instead.')

    answered = [t for t in raw_trials if not t.missed]
    if len(answered) < 2:
        raise DegenerateSubjectError(f'need at least 2 answered trials to z-score reaction times. Got {len(answered)}.')

    log_rt = np.log(np.asarray([t.rt_s for t in answered], dtype=float))
    spread = float(np.std(log_rt))
    z_scores = (log_rt - np.mean(log_rt)) / spread if spread > 0 else np.zeros_like(log_rt)
    x_rt: Dict[int, float] = {t.trial_idx: float(z) for t, z in zip(answered, z_scores)}

    covariates: List[TrialCovariates] = list()
    for trial in raw_trials:
        missed = trial.missed
        covariates.append(TrialCovariates(
            trial_idx=trial.trial_idx,
            response_time_s=None if missed else float(trial.response_time_s),
            x_neg=int(bool(trial.negative)),
            raw_rt_s=None if missed else float(trial.rt_s),
            x_rt=0. if missed else x_rt[trial.trial_idx],
            x_err=1 if (missed or not trial.correct) else 0,
            stim_onset_s=None if trial.stim_onset_s is None else float(trial.stim_onset_s),
        ))
    return covariates


@dataclass(frozen=True)
class ModelParams:
    mu: float
    a0: float = 0.
    w_neg: float = 0.
    w_rt: float = 0.
    w_err: float = 0.
    tau: float = 1.
    variant: Variant = Variant.FULL

    def __post_init__(self):
        object.__setattr__(self, 'variant', Variant(self.variant))
        for name in PARAM_NAMES:
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f'{name} must be finite. Got {value} instead.')
            object.__setattr__(self, name, value)

        if not self.mu > 0:
            raise ValidationError(f'mu must be positive. Got {self.mu} instead.')
        if not self.tau > 0:
            raise ValidationError(f'tau must be positive. Got {self.tau} instead.')
        if self.variant is not Variant.HOMOGENEOUS and not self.a0 > 0:
            raise ValidationError(f'a0 must be positive for the {self.variant.value} model. Got {self.a0} instead.')
        if self.variant is Variant.TRIAL_MODULATED and any(self.weights):
            raise ValidationError('covariate weights are fixed at 0 for the trial_modulated model.')

    @property
    def weights(self) -> Tuple[float, float, float]:
        return self.w_neg, self.w_rt, self.w_err

    @property
    def n_params(self) -> int:
        return self.variant.n_params

    def as_vector(self) -> np.ndarray:
        return np.asarray([getattr(self, name) for name in PARAM_NAMES], dtype=float)

    @classmethod
    def from_vector(cls, vector: Sequence[float], variant: Variant) -> 'ModelParams':
        values = dict(zip(PARAM_NAMES, (float(v) for v in vector)))
        variant = Variant(variant)
        if variant is not Variant.FULL:
            values.update({name: 0. for name in WEIGHT_NAMES})
        return cls(variant=variant, **values)

    def to_dict(self) -> Dict[str, Union[str, float]]:
        values: Dict[str, Union[str, float]] = {name: getattr(self, name) for name in PARAM_NAMES}
        values['variant'] = self.variant.value
        return values

    @classmethod
    def from_dict(cls, values: Dict) -> 'ModelParams':
        return cls(
            variant=Variant(values['variant']),
            **{name: float(values[name]) for name in PARAM_NAMES},
        )


class TrialTable:
    """ Column arrays of the answered trials, packed once per subject. """

    def __init__(self, trials: Sequence[TrialCovariates]):
        self.trials: Tuple[TrialCovariates, ...] = tuple(trials)
        answered = [t for t in self.trials if t.answered]
        self.rho: np.ndarray = _frozen_array([t.response_time_s for t in answered])
        self.covariates: np.ndarray = _frozen_array(
            np.asarray([[t.x_neg, t.x_rt, t.x_err] for t in answered], dtype=float).reshape(-1, 3)
        )

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def n_answered(self) -> int:
        return int(self.rho.size)

    def link(self, params: ModelParams) -> np.ndarray:
        """ exp(w . x_j) per answered trial; ones unless the model is FULL. """
        if params.variant is not Variant.FULL:
            return np.ones(self.n_answered)
        w_neg, w_rt, w_err = params.weights
        return np.exp(w_neg * self.covariates[:, 0] + w_rt * self.covariates[:, 1] + w_err * self.covariates[:, 2])

    def amplitudes(self, params: ModelParams) -> np.ndarray:
        if params.variant is Variant.HOMOGENEOUS:
            return np.zeros(self.n_answered)
        return params.a0 * self.link(params)


Trials = Union[TrialTable, Sequence[TrialCovariates]]


def as_table(trials: Trials) -> TrialTable:
    return trials if isinstance(trials, TrialTable) else TrialTable(trials)


@dataclass(frozen=True, eq=False)
class SummaryAnnotations:
    tonic_samples: np.ndarray
    scr_amplitudes: np.ndarray
    scr_rise_times_s: np.ndarray

    def __post_init__(self):
        tonic = _frozen_array(np.asarray(self.tonic_samples, dtype=float).reshape(-1, 2))
        amplitudes = _frozen_array(np.asarray(self.scr_amplitudes, dtype=float).reshape(-1))
        rise_times = _frozen_array(np.asarray(self.scr_rise_times_s, dtype=float).reshape(-1))
        if np.any(np.diff(tonic[:, 0]) <= 0):
            raise ValidationError('tonic samples must be strictly time-ordered.')
        if amplitudes.size != rise_times.size:
            raise ValidationError(f'{amplitudes.size} SCR amplitudes but {rise_times.size} rise times.')
        if np.any(amplitudes < 0) or np.any(rise_times < 0):
            raise ValidationError('SCR amplitudes and rise times must be non-negative.')
        object.__setattr__(self, 'tonic_samples', tonic)
        object.__setattr__(self, 'scr_amplitudes', amplitudes)
        object.__setattr__(self, 'scr_rise_times_s', rise_times)


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    subject_id: str
    events: EventTrain
    trials: Tuple[TrialCovariates, ...]
    annotations: Optional[SummaryAnnotations] = None

    def __post_init__(self):
        trials = tuple(self.trials)
        indices = [t.trial_idx for t in trials]
        if any(a >= b for a, b in zip(indices, indices[1:])):
            raise ValidationError(f'subject {self.subject_id}: trials must be ordered by trial index.')
        for trial in trials:
            if trial.answered and trial.response_time_s > self.events.duration_s:
                raise ValidationError(
                    f'subject {self.subject_id}: trial {trial.trial_idx} responds at {trial.response_time_s} s, '
                    f'after the session ends at {self.events.duration_s} s.'
                )
        if self.annotations is not None and self.annotations.scr_amplitudes.size not in (0, len(self.events)):
            raise ValidationError(
                f'subject {self.subject_id}: {self.annotations.scr_amplitudes.size} SCR annotations '
                f'for {len(self.events)} events.'
            )
        object.__setattr__(self, 'trials', trials)

    @cached_property
    def table(self) -> TrialTable:
        return TrialTable(self.trials)


def amplitude(params: ModelParams, trial: TrialCovariates) -> float:
    """ Kernel amplitude of one trial, events/second. """
    if params.variant is Variant.HOMOGENEOUS:
        raise ValidationError('the homogeneous model has no trial kernels.')
    if params.variant is Variant.TRIAL_MODULATED:
        return params.a0
    w_neg, w_rt, w_err = params.weights
    return params.a0 * math.exp(w_neg * trial.x_neg + w_rt * trial.x_rt + w_err * trial.x_err)


def _check_times(times: np.ndarray):
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise ValidationError('times must be finite and non-negative.')


def kernel_matrix(times: np.ndarray, rho: np.ndarray, tau: float) -> Tuple[np.ndarray, np.ndarray]:
    """ exp(-(t_k - rho_j) / tau) for t_k >= rho_j, else 0; also returns the lags. """
    lags = times[:, None] - rho[None, :]
    active = lags >= 0
    kernels = np.where(active, np.exp(-np.where(active, lags, 0.) / tau), 0.)
    return kernels, np.where(active, lags, 0.)


def intensity_at(params: ModelParams, trials: Trials, t: Times) -> Times:
    """ Conditional intensity at one time or an array of times. """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    _check_times(times)
    table = as_table(trials)

    rates = np.full(times.shape, params.mu)
    if params.variant is not Variant.HOMOGENEOUS and table.n_answered > 0:
        kernels, _ = kernel_matrix(times, table.rho, params.tau)
        rates = rates + kernels @ table.amplitudes(params)
    return float(rates[0]) if np.ndim(t) == 0 else rates


def n_bins(duration_s: float, dt: float) -> int:
    return max(1, int(math.ceil(round(duration_s / dt, 9))))


def bin_layout(duration_s: float, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """ Bin centres and widths covering [0, duration_s].

    Full bins are centred at (k + 0.5) * dt; a trailing partial bin is centred on
    its true extent and carries its true width.
    """
    if not dt > 0:
        raise ValidationError(f'dt must be positive. Got {dt} instead.')
    if not duration_s >= dt:
        raise ValidationError(f'the window ({duration_s} s) must span at least one bin ({dt} s).')
    k = n_bins(duration_s, dt)
    centres = (np.arange(k) + 0.5) * dt
    widths = np.full(k, dt)
    last_start = (k - 1) * dt
    if duration_s - last_start < dt * (1 - 1e-9):
        widths[-1] = duration_s - last_start
        centres[-1] = last_start + widths[-1] / 2
    return centres, widths


def intensity_binned(params: ModelParams, trials: Trials, dt: float, duration_s: float) -> np.ndarray:
    centres, _ = bin_layout(duration_s, dt)
    return intensity_at(params, trials, centres)


def compensator(params: ModelParams, trials: Trials, t: Times) -> Times:
    """ Expected number of events on [0, t], the integral of the intensity. """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    _check_times(times)
    table = as_table(trials)

    totals = params.mu * times
    if params.variant is not Variant.HOMOGENEOUS and table.n_answered > 0:
        lags = times[:, None] - table.rho[None, :]
        active = lags >= 0
        masses = np.where(active, -params.tau * np.expm1(-np.where(active, lags, 0.) / params.tau), 0.)
        totals = totals + masses @ table.amplitudes(params)
    return float(totals[0]) if np.ndim(t) == 0 else totals

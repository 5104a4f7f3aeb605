""" Synthetic trial schedules, event trains and labelled cohorts drawn from known parameters.

Exact event trains are drawn by superposition: a homogeneous Poisson train for the
baseline plus, for every answered trial, a Poisson number of events whose lags
follow the kernel's exponential law truncated at the end of the session.
"""
import logging
from dataclasses import dataclass
from dataclasses import field
from typing import Dict
from typing import List
from typing import Mapping
from typing import Tuple

import numpy as np
from scipy.stats import truncnorm

from src.datasets import CohortDataset
from src.likelihood import BinnedCounts
from src.model import PARAM_NAMES
from src.model import EventTrain
from src.model import ModelParams
from src.model import RawTrial
from src.model import SubjectRecord
from src.model import SummaryAnnotations
from src.model import TrialCovariates
from src.model import Trials
from src.model import Variant
from src.model import as_table
from src.model import bin_layout
from src.model import build_covariates
from src.model import intensity_at
from src.optimizer import BoxBounds
from src.utils import ConfigError
from src.utils import subject_seed

JITTER_S = 1e-6

# the reference subject used throughout the synthetic checks
DEFAULT_THETA: Dict[str, float] = {
    'mu': 0.05,
    'a0': 0.3,
    'w_neg': 0.8,
    'w_rt': 0.3,
    'w_err': -0.5,
    'tau': 4.0,
}

# median SCR amplitude (uS) and rise time (s), tonic level (uS) at session start and its drift (uS/s)
DEFAULT_SCR: Dict[str, float] = {
    'amplitude': 0.3,
    'rise_time_s': 2.0,
    'tonic_level': 5.0,
    'tonic_slope': -5e-4,
}
AMPLITUDE_LOG_SD = 0.5
RISE_TIME_LOG_SD = 0.3
TONIC_STEP_S = 10.
TONIC_NOISE = 0.05


@dataclass(frozen=True)
class TrialScheduleConfig:
    n_blocks: int = 4
    trials_per_block: int = 120
    rest_s: float = 30.
    stimulus_s: float = 0.5
    inter_trial_s: float = 1.5  # assumed
    p_negative: float = 0.5
    p_error: float = 0.03
    p_miss: float = 0.01
    rt_log_mean: float = -0.6
    rt_log_sd: float = 0.25

    def __post_init__(self):
        for name in ('p_negative', 'p_error', 'p_miss'):
            if not 0. <= getattr(self, name) <= 1.:
                raise ConfigError(f'{name} must lie in [0, 1]. Got {getattr(self, name)} instead.')
        for name in ('rest_s', 'stimulus_s', 'inter_trial_s', 'rt_log_sd'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'{name} must be positive. Got {getattr(self, name)} instead.')
        if self.n_blocks < 1 or self.trials_per_block < 1:
            raise ConfigError('a schedule needs at least one block of at least one trial.')

    @property
    def trial_period_s(self) -> float:
        return self.stimulus_s + self.inter_trial_s

    @property
    def block_s(self) -> float:
        return self.rest_s + self.trials_per_block * self.trial_period_s

    @property
    def duration_s(self) -> float:
        return self.n_blocks * self.block_s


@dataclass(frozen=True)
class GroupSpec:
    label: str
    n_subjects: int
    means: Mapping[str, float] = field(default_factory=dict)
    sds: Mapping[str, float] = field(default_factory=dict)
    scr: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class CohortSpec:
    groups: Tuple[GroupSpec, ...]
    seed: int = 0
    variant: Variant = Variant.FULL
    schedule: TrialScheduleConfig = TrialScheduleConfig()
    bounds: BoxBounds = BoxBounds()
    control_label: str = 'C'
    annotate: bool = True


def gen_trial_schedule(config: TrialScheduleConfig, seed: int) -> Tuple[List[TrialCovariates], float]:
    """ Blocks of trials after a rest period, each trial one stimulus plus an inter-trial gap.

    Valence is balanced within every block. A reaction time past the trial
    window counts as a miss.

    :return: the trials' covariates and the session length in seconds.
    """
    rng = np.random.default_rng(seed)
    period = config.trial_period_s
    n = config.trials_per_block
    n_negative = int(round(config.p_negative * n))

    raw_trials: List[RawTrial] = list()
    for block in range(config.n_blocks):
        first_onset = block * config.block_s + config.rest_s
        negative = np.zeros(n, dtype=bool)
        negative[:n_negative] = True
        rng.shuffle(negative)
        reaction_times = rng.lognormal(config.rt_log_mean, config.rt_log_sd, size=n)
        missed = rng.random(n) < config.p_miss
        errors = rng.random(n) < config.p_error

        for i in range(n):
            onset = first_onset + i * period
            rt = float(reaction_times[i])
            miss = bool(missed[i]) or rt >= period
            raw_trials.append(RawTrial(
                trial_idx=block * n + i,
                stim_onset_s=onset,
                response_time_s=None if miss else onset + rt,
                negative=bool(negative[i]),
                rt_s=None if miss else rt,
                correct=not bool(errors[i]),
            ))

    return build_covariates(raw_trials), config.duration_s


def _strictly_increasing(times: np.ndarray, duration_s: float) -> np.ndarray:
    """ Nudge coincident times apart by 1 microsecond while staying inside [0, duration_s]. """
    times = np.sort(times)
    if times.size == 0 or (np.all(np.diff(times) > 0) and times[-1] <= duration_s):
        return times
    for i in range(1, times.size):
        if times[i] <= times[i - 1]:
            times[i] = times[i - 1] + JITTER_S
    if times[-1] > duration_s:
        times[-1] = duration_s
        for i in range(times.size - 2, -1, -1):
            if times[i] >= times[i + 1]:
                times[i] = times[i + 1] - JITTER_S
    return times


def simulate_exact(params: ModelParams, trials: Trials, duration_s: float, seed: int) -> EventTrain:
    """ Draw an event train on [0, duration_s] exactly in continuous time. """
    rng = np.random.default_rng(seed)
    table = as_table(trials)

    baseline = rng.uniform(0., duration_s, size=rng.poisson(params.mu * duration_s))
    pieces = [baseline]
    if params.variant is not Variant.HOMOGENEOUS and table.n_answered > 0:
        inside = table.rho <= duration_s
        rho = table.rho[inside]
        amplitudes = table.amplitudes(params)[inside]
        # kernel mass left before the session ends, as a fraction of a0 * tau
        tails = -np.expm1(-(duration_s - rho) / params.tau)
        counts = rng.poisson(amplitudes * params.tau * tails)
        owners = np.repeat(np.arange(rho.size), counts)
        lags = -params.tau * np.log1p(-rng.random(owners.size) * tails[owners])
        pieces.append(np.minimum(rho[owners] + lags, duration_s))

    return EventTrain(_strictly_increasing(np.concatenate(pieces), duration_s), duration_s)


def simulate_binned(params: ModelParams, trials: Trials, dt: float, duration_s: float, seed: int) -> BinnedCounts:
    """ Independent Poisson counts per bin with mean intensity-at-centre times width. """
    rng = np.random.default_rng(seed)
    centres, widths = bin_layout(duration_s, dt)
    rates = intensity_at(params, trials, centres)
    return BinnedCounts(rng.poisson(rates * widths), dt, duration_s)


def simulate_annotations(events: EventTrain, scr: Mapping[str, float], seed: int) -> SummaryAnnotations:
    """ Scalar SCR annotations to go with an event train.

    Every event gets a log-normal amplitude and rise time around the medians in scr.
    The tonic level is a linear drift plus Gaussian noise, sampled every 10 s from
    the session start and floored at 0.
    """
    rng = np.random.default_rng(seed)
    scr = {**DEFAULT_SCR, **scr}
    n = len(events)
    amplitudes = scr['amplitude'] * rng.lognormal(0., AMPLITUDE_LOG_SD, size=n)
    rise_times = scr['rise_time_s'] * rng.lognormal(0., RISE_TIME_LOG_SD, size=n)
    times = np.arange(0., events.duration_s, TONIC_STEP_S)
    levels = scr['tonic_level'] + scr['tonic_slope'] * times + rng.normal(0., TONIC_NOISE, size=times.size)
    return SummaryAnnotations(np.column_stack([times, np.maximum(levels, 0.)]), amplitudes, rise_times)


def _draw_params(group: GroupSpec, variant: Variant, bounds: BoxBounds, rng: np.random.Generator) -> ModelParams:
    used = [name for name, free in zip(PARAM_NAMES, variant.free_mask) if free]
    vector = np.zeros(len(PARAM_NAMES))
    for i, name in enumerate(PARAM_NAMES):
        mean = float(group.means.get(name, DEFAULT_THETA[name]))
        sd = float(group.sds.get(name, 0.))
        low, high = getattr(bounds, name)
        if name not in used:
            vector[i] = mean if name == 'tau' else 0.
            continue
        if sd == 0.:
            vector[i] = mean
        else:
            vector[i] = truncnorm.rvs((low - mean) / sd, (high - mean) / sd, loc=mean, scale=sd, random_state=rng)
    return ModelParams.from_vector(bounds.clip(vector), variant)


def _check_spec(spec: CohortSpec):
    if not spec.groups:
        raise ConfigError('a cohort needs at least one group.')
    labels = [group.label for group in spec.groups]
    if len(set(labels)) != len(labels):
        raise ConfigError(f'group labels must be unique. Got {labels}.')
    for group in spec.groups:
        if group.n_subjects < 1:
            raise ConfigError(f'group {group.label} needs at least one subject.')
        unknown = (set(group.means) | set(group.sds)) - set(PARAM_NAMES)
        if unknown:
            raise ConfigError(f'group {group.label}: unknown parameters {sorted(unknown)}.')
        for name in PARAM_NAMES:
            mean = float(group.means.get(name, DEFAULT_THETA[name]))
            low, high = getattr(spec.bounds, name)
            if not low <= mean <= high:
                raise ConfigError(f'group {group.label}: mean {name}={mean} lies outside its bounds ({low}, {high}).')
            if float(group.sds.get(name, 0.)) < 0:
                raise ConfigError(f'group {group.label}: sd of {name} must be non-negative.')
        unknown = set(group.scr) - set(DEFAULT_SCR)
        if unknown:
            raise ConfigError(f'group {group.label}: unknown SCR settings {sorted(unknown)}; choose from {sorted(DEFAULT_SCR)}.')
        for name in ('amplitude', 'rise_time_s'):
            if not float(group.scr.get(name, DEFAULT_SCR[name])) > 0:
                raise ConfigError(f'group {group.label}: SCR {name} must be positive.')


def gen_cohort(spec: CohortSpec) -> CohortDataset:
    """ Draw a labelled cohort: per subject a parameter vector, a schedule, an event train
    and, unless spec.annotate is off, SCR annotations.

    Subject ids are the group label plus a 1-based, zero-padded index. Each subject's
    draws depend only on the cohort seed and the subject id.
    """
    _check_spec(spec)
    variant = Variant(spec.variant)

    subjects: Dict[str, SubjectRecord] = dict()
    labels: Dict[str, str] = dict()
    truth: Dict[str, ModelParams] = dict()
    for group in spec.groups:
        for i in range(group.n_subjects):
            subject_id = f'{group.label}{i + 1:03d}'
            theta_seed, schedule_seed, event_seed, annotation_seed = (
                int(child.generate_state(1)[0])
                for child in np.random.SeedSequence(subject_seed(spec.seed, subject_id)).spawn(4)
            )
            params = _draw_params(group, variant, spec.bounds, np.random.default_rng(theta_seed))
            trials, duration = gen_trial_schedule(spec.schedule, schedule_seed)
            events = simulate_exact(params, trials, duration, event_seed)
            annotations = simulate_annotations(events, group.scr, annotation_seed) if spec.annotate else None

            subjects[subject_id] = SubjectRecord(subject_id, events, tuple(trials), annotations)
            labels[subject_id] = group.label
            truth[subject_id] = params
        logging.info(f'simulated {group.n_subjects} subjects for group {group.label}.')

    return CohortDataset(subjects=subjects, labels=labels, truth=truth, control_label=spec.control_label)

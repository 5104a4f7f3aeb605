""" Small builders shared by the test modules. """
from typing import List
from typing import Optional

import numpy as np

from src.model import EventTrain
from src.model import ModelParams
from src.model import SubjectRecord
from src.model import TrialCovariates
from src.simulator import DEFAULT_THETA
from src.simulator import TrialScheduleConfig
from src.simulator import gen_trial_schedule
from src.simulator import simulate_exact


def trial(i: int, rho: Optional[float], x_neg: int = 0, x_rt: float = 0., x_err: int = 0) -> TrialCovariates:
    return TrialCovariates(i, rho, x_neg, None if rho is None else 0.5, x_rt, 1 if rho is None else x_err)


def random_trials(rng: np.random.Generator, n: int = 12, duration: float = 60.) -> List[TrialCovariates]:
    rho = np.sort(rng.uniform(0., duration, size=n))
    return [
        trial(i, float(r), int(rng.integers(2)), float(rng.normal()), int(rng.random() < 0.2))
        for i, r in enumerate(rho)
    ]


def random_params(rng: np.random.Generator) -> ModelParams:
    return ModelParams(
        mu=rng.uniform(0.02, 0.5),
        a0=rng.uniform(0.1, 2.),
        w_neg=rng.normal(scale=0.5),
        w_rt=rng.normal(scale=0.5),
        w_err=rng.normal(scale=0.5),
        tau=rng.uniform(0.7, 10.),
    )


def short_schedule(n_blocks: int = 1, trials_per_block: int = 60) -> TrialScheduleConfig:
    return TrialScheduleConfig(n_blocks=n_blocks, trials_per_block=trials_per_block, rest_s=10.)


def simulated_subject(
        subject_id: str = 'S001',
        params: Optional[ModelParams] = None,
        config: Optional[TrialScheduleConfig] = None,
        seed: int = 0,
) -> SubjectRecord:
    params = params or ModelParams(**DEFAULT_THETA)
    trials, duration = gen_trial_schedule(config or TrialScheduleConfig(), seed)
    events = simulate_exact(params, trials, duration, seed + 1)
    return SubjectRecord(subject_id, events, tuple(trials))


def empty_subject(subject_id: str = 'E001', seed: int = 0) -> SubjectRecord:
    trials, duration = gen_trial_schedule(short_schedule(), seed)
    return SubjectRecord(subject_id, EventTrain([], duration), tuple(trials))

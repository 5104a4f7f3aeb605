import logging
import os
import zlib
from typing import Sequence
from typing import Tuple

import numpy as np

SRC_DIR = os.path.abspath(os.path.dirname(__file__))
DATA_DIR = os.path.join(SRC_DIR, 'data')
RESULTS_DIR = os.path.join(SRC_DIR, 'results')
PLOTS_DIR = os.path.join(SRC_DIR, 'plots')

ARCHIVE_PATH = os.path.join(RESULTS_DIR, 'fits.json')
COMPARISON_PATH = os.path.join(RESULTS_DIR, 'comparison.csv')
EVALUATION_PATH = os.path.join(RESULTS_DIR, 'evaluation.csv')
ABLATION_PATH = os.path.join(RESULTS_DIR, 'ablation.csv')
STATS_PATH = os.path.join(RESULTS_DIR, 'stats.csv')

DEFAULT_DT = 1.0  # seconds
NOMINAL_TRIALS = 480
DEFAULT_SEEDS = tuple(range(10))

LOG_FORMAT = '%(asctime)s %(levelname)s %(module)s: %(message)s'


class ValidationError(ValueError):
    """ Bad inputs: a violated type invariant or a malformed file. """


class ConfigError(ValidationError):
    pass


class DegenerateSubjectError(ValidationError):
    pass


class FeatureUnavailableError(ValidationError):
    pass


class EvaluationError(ValidationError):
    pass


class UndefinedStatisticError(ValidationError):
    pass


class NumericalError(ArithmeticError):
    """ The likelihood or one of its derivatives stopped being finite. """


class OptimizationError(NumericalError):
    pass


def print_blurb(stage: str, subject: str, shape: Tuple[int, ...]):
    logging.info('-' * 80)
    logging.info(f'Running {stage} on {subject} with shape {shape}.')
    logging.info('-' * 80)
    return


def configure_logging(level: str = 'INFO'):
    logging.basicConfig(level=getattr(logging, level.upper()), format=LOG_FORMAT)
    return


def subject_seed(seed: int, subject_id: str) -> int:
    """ Mixes the run seed with a subject id.

    The mix only depends on the two values, so per-subject work gives the same
    draws regardless of the order or the process it runs in.
    """
    sequence = np.random.SeedSequence([int(seed), zlib.crc32(subject_id.encode('utf-8'))])
    return int(sequence.generate_state(1)[0])


def mean_sd(values: Sequence[float]) -> Tuple[float, float]:
    """ Mean and sample standard deviation, 0 sd for a single value. """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float('nan'), float('nan')
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.
    return float(np.mean(values)), sd

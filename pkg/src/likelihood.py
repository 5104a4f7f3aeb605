""" Binned Poisson likelihood of the trial-locked model, its ridge penalty and gradient. """
from dataclasses import dataclass
from functools import cached_property
from typing import Dict
from typing import Tuple

import numpy as np

from src.model import EventTrain
from src.model import ModelParams
from src.model import Trials
from src.model import Variant
from src.model import as_table
from src.model import bin_layout
from src.model import n_bins
from src.utils import NumericalError
from src.utils import ValidationError


@dataclass(frozen=True, eq=False)
class BinnedCounts:
    counts: np.ndarray
    dt: float
    duration_s: float

    def __post_init__(self):
        counts = np.array(self.counts).reshape(-1)
        if counts.size and not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValidationError('counts must be integers.')
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValidationError('counts must be non-negative.')
        expected = n_bins(float(self.duration_s), float(self.dt))
        if counts.size != expected:
            raise ValidationError(f'expected {expected} bins for {self.duration_s} s at dt={self.dt} s. Got {counts.size}.')
        counts.flags.writeable = False
        object.__setattr__(self, 'counts', counts)
        object.__setattr__(self, 'dt', float(self.dt))
        object.__setattr__(self, 'duration_s', float(self.duration_s))

    @property
    def n_events(self) -> int:
        return int(self.counts.sum())

    @cached_property
    def layout(self) -> Tuple[np.ndarray, np.ndarray]:
        return bin_layout(self.duration_s, self.dt)


@dataclass(frozen=True)
class RidgeConfig:
    lambda_neg: float = 1.0
    lambda_rt: float = 1.0
    lambda_err: float = 5.0  # shrinks w_err harder than the other weights

    def __post_init__(self):
        for name, value in self.to_dict().items():
            if not value >= 0:
                raise ValidationError(f'{name} must be non-negative. Got {value} instead.')

    @property
    def strengths(self) -> np.ndarray:
        return np.asarray([self.lambda_neg, self.lambda_rt, self.lambda_err], dtype=float)

    def to_dict(self) -> Dict[str, float]:
        return {
            'lambda_neg': float(self.lambda_neg),
            'lambda_rt': float(self.lambda_rt),
            'lambda_err': float(self.lambda_err),
        }


NO_RIDGE = RidgeConfig(0., 0., 0.)


def bin_events(events: EventTrain, dt: float) -> BinnedCounts:
    """ Count onsets in [k*dt, (k+1)*dt); an onset exactly at the end of the window goes in the last bin. """
    if not dt > 0:
        raise ValidationError(f'dt must be positive. Got {dt} instead.')
    k = n_bins(events.duration_s, dt)
    indices = np.minimum(np.floor(events.onsets / dt).astype(np.int64), k - 1)
    return BinnedCounts(np.bincount(indices, minlength=k), dt, events.duration_s)


class Design:
    """ The parts of a subject's likelihood that do not depend on the parameters. """

    def __init__(self, trials: Trials, counts: BinnedCounts):
        self.table = as_table(trials)
        self.counts = counts
        self.centres, self.widths = counts.layout
        self.y = counts.counts.astype(float)
        lags = self.centres[:, None] - self.table.rho[None, :]
        self.active = lags >= 0
        self.lags = np.where(self.active, lags, 0.)

    def kernels(self, tau: float) -> np.ndarray:
        return np.where(self.active, np.exp(-self.lags / tau), 0.)


def penalty(params: ModelParams, ridge: RidgeConfig) -> float:
    if params.variant is not Variant.FULL:
        return 0.
    return float(ridge.strengths @ np.square(params.weights))


def evaluate(design: Design, params: ModelParams, ridge: RidgeConfig, with_gradient: bool = True) -> Tuple[float, float, np.ndarray]:
    """ Raw negative log-likelihood, ridge penalty and the gradient of their sum.

    The gradient is taken with respect to (mu, a0, w_neg, w_rt, w_err, tau), tau in
    seconds, and is zero for parameters the variant does not estimate.
    """
    table = design.table
    has_kernels = params.variant is not Variant.HOMOGENEOUS and table.n_answered > 0

    if has_kernels:
        kernels = design.kernels(params.tau)
        link = table.link(params)
        amplitudes = params.a0 * link
        rates = params.mu + kernels @ amplitudes
    else:
        rates = np.full(design.widths.shape, params.mu)

    expected = rates * design.widths
    if not np.all(np.isfinite(expected)) or np.any(expected <= 0):
        raise NumericalError(f'non-finite or non-positive intensity at {params}.')
    nll = float(np.sum(expected) - design.y @ np.log(expected))
    ridge_term = penalty(params, ridge)
    if not np.isfinite(nll):
        raise NumericalError(f'non-finite likelihood at {params}.')

    gradient = np.zeros(6)
    if not with_gradient:
        return nll, ridge_term, gradient

    # d nll / d lambda_k per bin
    residuals = design.widths - design.y / rates
    gradient[0] = np.sum(residuals)
    if has_kernels:
        per_trial = residuals @ kernels
        gradient[1] = per_trial @ link
        if params.variant is Variant.FULL:
            gradient[2:5] = (per_trial * amplitudes) @ table.covariates
            gradient[2:5] += 2. * ridge.strengths * np.asarray(params.weights)
        lagged = residuals @ (kernels * design.lags)
        gradient[5] = (lagged @ amplitudes) / params.tau ** 2

    gradient[~params.variant.free_mask] = 0.
    if not np.all(np.isfinite(gradient)):
        raise NumericalError(f'non-finite gradient at {params}.')
    return nll, ridge_term, gradient


def nll(params: ModelParams, trials: Trials, counts: BinnedCounts) -> float:
    value, _, _ = evaluate(Design(trials, counts), params, NO_RIDGE, with_gradient=False)
    return value


def objective(params: ModelParams, trials: Trials, counts: BinnedCounts, ridge: RidgeConfig) -> float:
    value, ridge_term, _ = evaluate(Design(trials, counts), params, ridge, with_gradient=False)
    return value + ridge_term


def gradient(params: ModelParams, trials: Trials, counts: BinnedCounts, ridge: RidgeConfig) -> np.ndarray:
    _, _, values = evaluate(Design(trials, counts), params, ridge)
    return values

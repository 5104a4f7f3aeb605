""" Box-constrained penalized maximum likelihood for the three model variants.

The solver is a limited-memory quasi-Newton method with gradient projection onto
the box and a backtracking Armijo line search. tau is searched in log-space and
reported in seconds.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from dataclasses import field
from typing import Callable
from typing import Deque
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
from joblib import Parallel
from joblib import delayed

from src.likelihood import BinnedCounts
from src.likelihood import Design
from src.likelihood import NO_RIDGE
from src.likelihood import RidgeConfig
from src.likelihood import bin_events
from src.likelihood import evaluate
from src.model import PARAM_NAMES
from src.model import VARIANTS
from src.model import ModelParams
from src.model import SubjectRecord
from src.model import Variant
from src.utils import DEFAULT_DT
from src.utils import NOMINAL_TRIALS
from src.utils import NumericalError
from src.utils import OptimizationError
from src.utils import ValidationError
from src.utils import print_blurb
from src.utils import subject_seed

HISTORY = 10
MAX_ITER = 500
GTOL = 1e-6
FTOL = 1e-9
ARMIJO_C = 1e-4
MAX_HALVINGS = 60
TAU_START = 5.0  # seconds
DEFAULT_STARTS = 5

TAU = PARAM_NAMES.index('tau')


@dataclass(frozen=True)
class BoxBounds:
    mu: Tuple[float, float] = (1e-5, 1.0)
    a0: Tuple[float, float] = (1e-5, 5.0)
    w_neg: Tuple[float, float] = (-5., 5.)
    w_rt: Tuple[float, float] = (-5., 5.)
    w_err: Tuple[float, float] = (-5., 5.)
    tau: Tuple[float, float] = (0.5, 30.)

    def __post_init__(self):
        for name in PARAM_NAMES:
            low, high = (float(v) for v in getattr(self, name))
            if not low < high:
                raise ValidationError(f'bounds for {name} must satisfy lower < upper. Got ({low}, {high}).')
            if name in ('mu', 'a0', 'tau') and not low > 0:
                raise ValidationError(f'the lower bound of {name} must be positive. Got {low}.')
            object.__setattr__(self, name, (low, high))

    @property
    def lower(self) -> np.ndarray:
        return np.asarray([getattr(self, name)[0] for name in PARAM_NAMES], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray([getattr(self, name)[1] for name in PARAM_NAMES], dtype=float)

    def clip(self, vector: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(vector, self.lower), self.upper)

    def contains(self, params: ModelParams) -> bool:
        vector = params.as_vector()
        mask = params.variant.free_mask
        return bool(np.all((vector[mask] >= self.lower[mask]) & (vector[mask] <= self.upper[mask])))

    def to_dict(self) -> Dict[str, List[float]]:
        return {name: list(getattr(self, name)) for name in PARAM_NAMES}

    @classmethod
    def from_dict(cls, values: Dict) -> 'BoxBounds':
        return cls(**{name: tuple(float(v) for v in bounds) for name, bounds in values.items()})


@dataclass(frozen=True)
class FitReport:
    params: ModelParams
    nll: float
    objective: float
    converged: bool
    iterations: int
    grad_inf_norm: float  # projected gradient of the objective in model coordinates
    n_restarts_used: int
    n_events: int = 0
    degenerate: bool = False
    bounds: BoxBounds = field(default_factory=BoxBounds)

    @property
    def variant(self) -> Variant:
        return self.params.variant

    def to_dict(self) -> Dict:
        return {
            'params': self.params.to_dict(),
            'nll': self.nll,
            'objective': self.objective,
            'converged': self.converged,
            'iterations': self.iterations,
            'grad_inf_norm': self.grad_inf_norm,
            'n_restarts_used': self.n_restarts_used,
            'n_events': self.n_events,
            'degenerate': self.degenerate,
            'bounds': self.bounds.to_dict(),
        }

    @classmethod
    def from_dict(cls, values: Dict) -> 'FitReport':
        return cls(
            params=ModelParams.from_dict(values['params']),
            nll=float(values['nll']),
            objective=float(values['objective']),
            converged=bool(values['converged']),
            iterations=int(values['iterations']),
            grad_inf_norm=float(values['grad_inf_norm']),
            n_restarts_used=int(values['n_restarts_used']),
            n_events=int(values['n_events']),
            degenerate=bool(values['degenerate']),
            bounds=BoxBounds.from_dict(values['bounds']),
        )


@dataclass
class _Outcome:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    converged: bool
    grad_inf_norm: float


def _projected_gradient(x: np.ndarray, g: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return x - np.minimum(np.maximum(x - g, lower), upper)


def _two_loop(g: np.ndarray, s_history: Deque[np.ndarray], y_history: Deque[np.ndarray]) -> np.ndarray:
    """ Apply the inverse-Hessian approximation to g. """
    q = g.copy()
    alphas = list()
    for s, y in zip(reversed(s_history), reversed(y_history)):
        rho = 1. / (y @ s)
        alpha = rho * (s @ q)
        q -= alpha * y
        alphas.append((rho, alpha))
    if s_history:
        s, y = s_history[-1], y_history[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, alpha) in zip(zip(s_history, y_history), reversed(alphas)):
        beta = rho * (y @ q)
        q += (alpha - beta) * s
    return q


def projected_lbfgs(
        fun: Callable[[np.ndarray], Tuple[float, np.ndarray]],
        x0: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        *,
        history: int = HISTORY,
        max_iter: int = MAX_ITER,
        gtol: float = GTOL,
        ftol: float = FTOL,
) -> _Outcome:
    """ Minimize fun over the box [lower, upper].

    Every evaluated point is projected onto the box, and a step is only accepted
    when it satisfies the Armijo condition, so the objective never increases.

    :param fun: returns (value, gradient); may raise NumericalError.
    :param x0: starting point, projected onto the box first.
    :return: the final iterate with convergence diagnostics.
    """
    x = np.minimum(np.maximum(np.asarray(x0, dtype=float), lower), upper)
    f, g = fun(x)
    if not math.isfinite(f):
        raise NumericalError('non-finite objective at the starting point.')

    s_history: Deque[np.ndarray] = deque(maxlen=history)
    y_history: Deque[np.ndarray] = deque(maxlen=history)
    converged, iteration = False, 0
    while iteration < max_iter:
        if np.max(np.abs(_projected_gradient(x, g, lower, upper))) < gtol:
            converged = True
            break
        iteration += 1

        # variables held at a bound by the gradient do not move
        free = ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))
        direction = -_two_loop(g * free, s_history, y_history) * free
        if direction @ g >= 0:
            s_history.clear(), y_history.clear()
            direction = -g * free
        step = 1. if s_history else min(1., 1. / max(np.max(np.abs(direction)), 1e-12))

        accepted = False
        for _ in range(MAX_HALVINGS):
            x_new = np.minimum(np.maximum(x + step * direction, lower), upper)
            decrease = g @ (x_new - x)
            if decrease < 0:
                try:
                    f_new, g_new = fun(x_new)
                except NumericalError:
                    f_new, g_new = math.inf, None
                if math.isfinite(f_new) and f_new <= f + ARMIJO_C * decrease:
                    accepted = True
                    break
            step /= 2.

        if not accepted:
            if s_history:
                s_history.clear(), y_history.clear()
                continue
            break

        s, y = x_new - x, g_new - g
        if s @ y > 1e-10 * (y @ y):
            s_history.append(s), y_history.append(y)

        change = abs(f - f_new) / max(abs(f), abs(f_new), 1.)
        x, f, g = x_new, f_new, g_new
        if change < ftol:
            converged = True
            break

    grad_inf_norm = float(np.max(np.abs(_projected_gradient(x, g, lower, upper))))
    return _Outcome(x, float(f), g, iteration, converged, grad_inf_norm)


class _Problem:
    """ The penalized objective in the solver's coordinates: free parameters only, log tau. """

    def __init__(self, design: Design, variant: Variant, ridge: RidgeConfig, bounds: BoxBounds):
        self.design, self.variant, self.ridge, self.bounds = design, variant, ridge, bounds
        self.free = np.flatnonzero(variant.free_mask)
        self.log_tau = self.free == TAU
        self.lower = self._log_tau(bounds.lower[self.free])
        self.upper = self._log_tau(bounds.upper[self.free])

    def _log_tau(self, values: np.ndarray) -> np.ndarray:
        values = np.array(values, dtype=float)
        values[self.log_tau] = np.log(values[self.log_tau])
        return values

    def to_internal(self, params: ModelParams) -> np.ndarray:
        return self._log_tau(self.bounds.clip(params.as_vector())[self.free])

    def to_params(self, z: np.ndarray) -> ModelParams:
        values = np.array(z, dtype=float)
        values[self.log_tau] = np.exp(values[self.log_tau])
        vector = np.zeros(6)
        vector[TAU] = 1.
        vector[self.free] = values
        vector[self.free] = self.bounds.clip(vector)[self.free]
        return ModelParams.from_vector(vector, self.variant)

    def grad_inf_norm(self, params: ModelParams) -> float:
        """ Largest entry of the projected gradient over the free parameters, in model units (tau in seconds). """
        _, _, gradient = evaluate(self.design, params, self.ridge)
        free = self.free
        x = params.as_vector()[free]
        projected = _projected_gradient(x, gradient[free], self.bounds.lower[free], self.bounds.upper[free])
        return float(np.max(np.abs(projected)))

    def __call__(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        params = self.to_params(z)
        nll, ridge_term, gradient = evaluate(self.design, params, self.ridge)
        gradient = gradient[self.free]
        gradient = np.where(self.log_tau, gradient * params.tau, gradient)
        return nll + ridge_term, gradient


def fit_homogeneous(counts: BinnedCounts, bounds: BoxBounds = BoxBounds()) -> FitReport:
    """ Closed-form rate of the constant-intensity model: the event count over the window, clipped. """
    low, high = bounds.mu
    mu = min(max(counts.n_events / counts.duration_s, low), high)
    params = ModelParams(mu=mu, variant=Variant.HOMOGENEOUS)
    design = Design([], counts)
    nll, _, gradient = evaluate(design, params, NO_RIDGE)
    grad_inf_norm = abs(mu - min(max(mu - gradient[0], low), high))
    return FitReport(
        params=params,
        nll=nll,
        objective=nll,
        converged=True,
        iterations=0,
        grad_inf_norm=float(grad_inf_norm),
        n_restarts_used=0,
        n_events=counts.n_events,
        bounds=bounds,
    )


def multi_start_points(
        bounds: BoxBounds,
        n_starts: int,
        seed: int,
        *,
        n_events: int = 0,
        duration_s: float = 1.,
        n_trials: int = NOMINAL_TRIALS,
        variant: Variant = Variant.FULL,
) -> List[ModelParams]:
    """ Initial points for a multi-start fit.

    The first start spreads half the observed events over the baseline and half
    over the trial kernels, with w = 0 and tau = 5 s. The rest are seeded draws:
    log-uniform for mu, a0 and tau and uniform for the weights.
    """
    if n_starts < 1:
        raise ValidationError(f'n_starts must be at least 1. Got {n_starts} instead.')
    variant = Variant(variant)
    tau0 = TAU_START
    heuristic = np.asarray([
        0.5 * n_events / duration_s,
        0.5 * n_events / (max(n_trials, 1) * tau0),
        0., 0., 0.,
        tau0,
    ])
    starts = [bounds.clip(heuristic)]

    rng = np.random.default_rng(seed)
    lower, upper = bounds.lower, bounds.upper
    log_scaled = np.asarray([True, True, False, False, False, True])
    for _ in range(n_starts - 1):
        draw = rng.uniform(
            np.where(log_scaled, np.log(lower), lower),
            np.where(log_scaled, np.log(upper), upper),
        )
        starts.append(bounds.clip(np.where(log_scaled, np.exp(draw), draw)))

    return [ModelParams.from_vector(start, variant) for start in starts]


def as_variant(params: ModelParams, variant: Variant, bounds: BoxBounds = BoxBounds()) -> ModelParams:
    """ Embed a fitted point of a smaller model into a larger one, as a warm start. """
    vector = params.as_vector()
    if params.variant is Variant.HOMOGENEOUS:
        # nearest point with kernels: the weakest, fastest-decaying kernel
        vector[1], vector[TAU] = bounds.a0[0], bounds.tau[0]
    return ModelParams.from_vector(bounds.clip(vector), Variant(variant))


def _degenerate_fit(variant: Variant, design: Design, ridge: RidgeConfig, bounds: BoxBounds) -> FitReport:
    # with no events the likelihood is minimized by the least expected mass
    vector = np.zeros(6)
    vector[[0, 1, TAU]] = bounds.mu[0], bounds.a0[0], bounds.tau[0]
    params = ModelParams.from_vector(bounds.clip(vector), variant)
    nll, ridge_term, _ = evaluate(design, params, ridge, with_gradient=False)
    return FitReport(
        params=params,
        nll=nll,
        objective=nll + ridge_term,
        converged=True,
        iterations=0,
        grad_inf_norm=0.,
        n_restarts_used=0,
        n_events=0,
        degenerate=True,
        bounds=bounds,
    )


def fit(
        variant: Variant,
        subject: SubjectRecord,
        ridge: RidgeConfig = RidgeConfig(),
        bounds: BoxBounds = BoxBounds(),
        seed: int = 0,
        *,
        dt: float = DEFAULT_DT,
        n_starts: int = DEFAULT_STARTS,
        warm_starts: Sequence[ModelParams] = (),
) -> FitReport:
    """ Fit one model variant to one subject and return the best of several starts.

    :param variant: which model to fit.
    :param subject: the subject's events and trials.
    :param ridge: penalty strengths on the covariate weights.
    :param bounds: box constraints on every parameter.
    :param seed: drives the random starts.
    :param dt: bin width in seconds.
    :param n_starts: number of starts, the first one heuristic.
    :param warm_starts: extra starts, e.g. the optimum of a nested model.
    """
    variant = Variant(variant)
    counts = bin_events(subject.events, dt)
    if variant is Variant.HOMOGENEOUS:
        return fit_homogeneous(counts, bounds)

    design = Design(subject.table, counts)
    if counts.n_events == 0:
        logging.warning(f'subject {subject.subject_id} has no events; returning a degenerate {variant.value} fit.')
        return _degenerate_fit(variant, design, ridge, bounds)

    problem = _Problem(design, variant, ridge, bounds)
    starts = multi_start_points(
        bounds, n_starts, seed,
        n_events=counts.n_events,
        duration_s=counts.duration_s,
        n_trials=subject.table.n_answered,
        variant=variant,
    )
    starts.extend(as_variant(params, variant, bounds) for params in warm_starts)

    best: Optional[_Outcome] = None
    n_used = 0
    for i, start in enumerate(starts):
        try:
            outcome = projected_lbfgs(problem, problem.to_internal(start), problem.lower, problem.upper)
        except NumericalError as error:
            logging.warning(f'subject {subject.subject_id}, {variant.value} start {i} failed: {error}')
            continue
        n_used += 1
        if best is None or outcome.f < best.f:
            best = outcome

    if best is None:
        raise OptimizationError(f'every start failed for subject {subject.subject_id} ({variant.value}).')

    params = problem.to_params(best.x)
    nll, ridge_term, _ = evaluate(design, params, ridge, with_gradient=False)
    if not best.converged:
        logging.warning(f'subject {subject.subject_id}, {variant.value}: not converged after {best.iterations} iterations.')
    return FitReport(
        params=params,
        nll=nll,
        objective=nll + ridge_term,
        converged=best.converged,
        iterations=best.iterations,
        grad_inf_norm=problem.grad_inf_norm(params),
        n_restarts_used=n_used,
        n_events=counts.n_events,
        bounds=bounds,
    )


def fit_all_variants(
        subject: SubjectRecord,
        ridge: RidgeConfig = RidgeConfig(),
        bounds: BoxBounds = BoxBounds(),
        seed: int = 0,
        *,
        dt: float = DEFAULT_DT,
        n_starts: int = DEFAULT_STARTS,
) -> Dict[Variant, FitReport]:
    """ Fit the three nested models in order, warm-starting each from the previous optimum. """
    print_blurb('fit', subject.subject_id, (len(subject.events), len(subject.trials)))
    reports: Dict[Variant, FitReport] = dict()
    previous: Optional[FitReport] = None
    for variant in VARIANTS:
        warm = [] if previous is None or previous.degenerate else [previous.params]
        reports[variant] = fit(variant, subject, ridge, bounds, seed, dt=dt, n_starts=n_starts, warm_starts=warm)
        logging.info(
            f'subject {subject.subject_id}, {variant.value}: objective {reports[variant].objective:.4f}, '
            f'converged {reports[variant].converged}.'
        )
        previous = reports[variant]
    return reports


def fit_cohort(
        subjects: Sequence[SubjectRecord],
        ridge: RidgeConfig = RidgeConfig(),
        bounds: BoxBounds = BoxBounds(),
        seed: int = 0,
        *,
        dt: float = DEFAULT_DT,
        n_starts: int = DEFAULT_STARTS,
        jobs: int = 1,
) -> Dict[str, Dict[Variant, FitReport]]:
    """ Fit every subject, in parallel when jobs > 1.

    Each subject's starts are seeded from the run seed and its id only, so the
    result does not depend on jobs.
    """
    ordered = sorted(subjects, key=lambda record: record.subject_id)
    results = Parallel(n_jobs=jobs)(
        delayed(fit_all_variants)(
            record, ridge, bounds, subject_seed(seed, record.subject_id), dt=dt, n_starts=n_starts,
        )
        for record in ordered
    )
    return {record.subject_id: reports for record, reports in zip(ordered, results)}

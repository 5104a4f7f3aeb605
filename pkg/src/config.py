""" Run configuration: defaults, YAML files and command-line overrides. """
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from typing import Any
from typing import Dict
from typing import Mapping
from typing import Optional
from typing import Tuple
from typing import Union

import yaml

from src.classification import N_PERMUTATIONS
from src.classification import N_SHUFFLES
from src.classification import FeatureSet
from src.gof import KS_COEFF
from src.likelihood import RidgeConfig
from src.optimizer import DEFAULT_STARTS
from src.optimizer import BoxBounds
from src.simulator import GroupSpec
from src.stats import EXACT_MAX_N
from src.stats import FDR_Q
from src.utils import DEFAULT_DT
from src.utils import DEFAULT_SEEDS
from src.utils import ConfigError

# controls, a group with a stronger response to negative words and one that also responds less after errors;
# both clinical groups have smaller SCRs
DEFAULT_GROUPS: Tuple[Dict[str, Any], ...] = (
    {'label': 'C', 'n_subjects': 20, 'means': {'w_neg': 0.0}, 'sds': {'w_neg': 0.2, 'w_rt': 0.1, 'w_err': 0.1}},
    {'label': 'D', 'n_subjects': 20, 'means': {'w_neg': 1.0}, 'sds': {'w_neg': 0.2, 'w_rt': 0.1, 'w_err': 0.1}, 'scr': {'amplitude': 0.2}},
    {'label': 'S', 'n_subjects': 20, 'means': {'w_neg': 1.0, 'w_err': -1.0}, 'sds': {'w_neg': 0.2, 'w_rt': 0.1, 'w_err': 0.1}, 'scr': {'amplitude': 0.2}},
)

PATH_KEYS = ('trials', 'events', 'labels', 'tonic', 'archive')


@dataclass(frozen=True)
class RunConfig:
    dt: float = DEFAULT_DT
    ridge: RidgeConfig = field(default_factory=RidgeConfig)
    bounds: BoxBounds = field(default_factory=BoxBounds)
    n_starts: int = DEFAULT_STARTS
    seed: int = 0
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    featureset: str = FeatureSet.POINT_PROCESS.value
    jobs: int = 1
    ks_coeff: float = KS_COEFF
    fdr_q: float = FDR_Q
    exact_max_n: int = EXACT_MAX_N
    svm_c: float = 1.0
    svm_gamma: Union[str, float] = 'scale'
    control_label: str = 'C'
    n_permutations: int = N_PERMUTATIONS
    n_shuffles: int = N_SHUFFLES
    groups: Tuple[Mapping[str, Any], ...] = DEFAULT_GROUPS
    paths: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f'dt must be positive. Got {self.dt} instead.')
        if self.n_starts < 1:
            raise ConfigError(f'n_starts must be at least 1. Got {self.n_starts} instead.')
        if not self.seeds:
            raise ConfigError('seeds must not be empty.')
        if self.jobs == 0:
            raise ConfigError('jobs must be a positive count or negative as in joblib.')
        if not 0. < self.fdr_q < 1.:
            raise ConfigError(f'fdr_q must lie in (0, 1). Got {self.fdr_q} instead.')
        if not self.svm_c > 0:
            raise ConfigError(f'svm_c must be positive. Got {self.svm_c} instead.')
        if isinstance(self.svm_gamma, str) and self.svm_gamma != 'scale':
            raise ConfigError(f'svm_gamma must be \'scale\' or a positive number. Got {self.svm_gamma!r}.')
        if self.n_permutations < 2 or self.n_shuffles < 1:
            raise ConfigError('n_permutations must be at least 2 and n_shuffles at least 1.')
        try:
            FeatureSet(self.featureset)
        except ValueError as error:
            raise ConfigError(f'featureset must be one of {[f.value for f in FeatureSet]}. Got {self.featureset!r}.') from error
        unknown = sorted(set(self.paths) - set(PATH_KEYS))
        if unknown:
            raise ConfigError(f'unknown input paths {unknown}; choose from {list(PATH_KEYS)}.')
        object.__setattr__(self, 'paths', {k: str(v) for k, v in dict(self.paths).items()})
        object.__setattr__(self, 'seeds', tuple(int(s) for s in self.seeds))
        object.__setattr__(self, 'groups', tuple(dict(g) for g in self.groups))

    def group_specs(self) -> Tuple[GroupSpec, ...]:
        try:
            return tuple(
                GroupSpec(
                    label=str(g['label']),
                    n_subjects=int(g['n_subjects']),
                    means={k: float(v) for k, v in g.get('means', dict()).items()},
                    sds={k: float(v) for k, v in g.get('sds', dict()).items()},
                    scr={k: float(v) for k, v in g.get('scr', dict()).items()},
                )
                for g in self.groups
            )
        except (KeyError, TypeError, ValueError) as error:
            raise ConfigError(f'malformed group definition: {error}') from error

    def to_dict(self) -> Dict[str, Any]:
        """ Every setting that can change a result; jobs cannot. """
        return {
            'dt': self.dt,
            'ridge': self.ridge.to_dict(),
            'bounds': self.bounds.to_dict(),
            'n_starts': self.n_starts,
            'seed': self.seed,
            'seeds': list(self.seeds),
            'featureset': self.featureset,
            'ks_coeff': self.ks_coeff,
            'fdr_q': self.fdr_q,
            'exact_max_n': self.exact_max_n,
            'svm_c': self.svm_c,
            'svm_gamma': self.svm_gamma,
            'control_label': self.control_label,
            'n_permutations': self.n_permutations,
            'n_shuffles': self.n_shuffles,
            'groups': [dict(g) for g in self.groups],
            'paths': dict(self.paths),
        }


NUMERIC_FIELDS = {
    'dt': float, 'n_starts': int, 'seed': int, 'jobs': int, 'ks_coeff': float, 'fdr_q': float,
    'exact_max_n': int, 'svm_c': float, 'n_permutations': int, 'n_shuffles': int,
}


def _number(value, kind, name: str):
    try:
        # PyYAML reads 1e3 as a string
        return kind(float(value)) if kind is int and not isinstance(value, int) else kind(value)
    except (TypeError, ValueError) as error:
        raise ConfigError(f'{name} must be a number. Got {value!r}.') from error


def from_dict(values: Mapping[str, Any]) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f'unknown configuration keys {unknown}.')

    kwargs: Dict[str, Any] = dict()
    try:
        for name, value in values.items():
            if value is None:
                continue
            if name in NUMERIC_FIELDS:
                kwargs[name] = _number(value, NUMERIC_FIELDS[name], name)
            elif name == 'ridge':
                kwargs[name] = RidgeConfig(**{k: _number(v, float, f'ridge.{k}') for k, v in dict(value).items()})
            elif name == 'bounds':
                bounds = {k: [_number(b, float, f'bounds.{k}') for b in v] for k, v in dict(value).items()}
                kwargs[name] = BoxBounds.from_dict(bounds)
            elif name == 'seeds':
                kwargs[name] = tuple(_number(s, int, 'seeds') for s in value)
            elif name == 'svm_gamma':
                kwargs[name] = value if value == 'scale' else _number(value, float, name)
            else:
                kwargs[name] = value
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as error:
        raise ConfigError(str(error)) from error


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """ Defaults, then the YAML file, then command-line overrides. """
    values: Dict[str, Any] = dict()
    if path is not None:
        with open(path, 'r', encoding='utf-8') as fp:
            try:
                loaded = yaml.safe_load(fp)
            except yaml.YAMLError as error:
                raise ConfigError(f'{path}: not valid YAML ({error}).') from error
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f'{path}: expected a mapping at the top level.')
        values.update(loaded or dict())
    values.update({k: v for k, v in (overrides or dict()).items() if v is not None})
    return from_dict(values)


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)


def write_config_echo(config: RunConfig, output_path: str) -> str:
    """ Write the configuration next to an output file as <output>.config.yaml. """
    path = f'{output_path}.config.yaml'
    with open(path, 'w', encoding='utf-8', newline='\n') as fp:
        fp.write(dump_config(config))
    return path

""" Reading and writing cohorts, fit archives and intensity traces.

File formats (UTF-8 CSV with a header row; times in seconds from session start):

    trials.csv  subject_id,trial_idx,stim_onset_s,response_time_s,valence,rt_s,correct[,session_end_s]
                valence is pos_neutral or negative; misses leave response_time_s, rt_s and correct empty.
    events.csv  subject_id,onset_s[,amplitude,rise_time_s]
    tonic.csv   subject_id,time_s,conductance
    labels.csv  subject_id,group
    truth.csv   subject_id,variant,mu,a0,w_neg,w_rt,w_err,tau

Fit archives are JSON. Floats are written with 17 significant digits and read back
to the same values.
"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from typing import Dict
from typing import Iterable
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np
import pandas as pd

from src import __version__
from src.model import PARAM_NAMES
from src.model import EventTrain
from src.model import ModelParams
from src.model import RawTrial
from src.model import SubjectRecord
from src.model import SummaryAnnotations
from src.model import TrialCovariates
from src.model import Variant
from src.model import bin_layout
from src.model import build_covariates
from src.model import compensator
from src.model import intensity_at
from src.optimizer import FitReport
from src.utils import NOMINAL_TRIALS
from src.utils import EvaluationError
from src.utils import ValidationError

FLOAT_FORMAT = '%.17g'
VALENCES: Dict[str, bool] = {'pos_neutral': False, 'negative': True}

TRIAL_COLUMNS = ['subject_id', 'trial_idx', 'stim_onset_s', 'response_time_s', 'valence', 'rt_s', 'correct']
EVENT_COLUMNS = ['subject_id', 'onset_s']
ANNOTATION_COLUMNS = ['amplitude', 'rise_time_s']
TONIC_COLUMNS = ['subject_id', 'time_s', 'conductance']
LABEL_COLUMNS = ['subject_id', 'group']


@dataclass(frozen=True, eq=False)
class CohortDataset:
    subjects: Mapping[str, SubjectRecord]
    labels: Mapping[str, str] = field(default_factory=dict)
    fits: Mapping[str, Mapping[Variant, FitReport]] = field(default_factory=dict)
    truth: Mapping[str, ModelParams] = field(default_factory=dict)
    control_label: str = 'C'

    def __post_init__(self):
        object.__setattr__(self, 'subjects', {k: self.subjects[k] for k in sorted(self.subjects)})
        object.__setattr__(self, 'labels', {k: v for k, v in sorted(self.labels.items()) if k in self.subjects})

    @property
    def subject_ids(self) -> List[str]:
        return list(self.subjects.keys())

    @property
    def groups(self) -> List[str]:
        return sorted(set(self.labels.values()))

    @property
    def clinical_groups(self) -> List[str]:
        return [group for group in self.groups if group != self.control_label]

    def with_fits(self, fits: Mapping[str, Mapping[Variant, FitReport]]) -> 'CohortDataset':
        return replace(self, fits=dict(fits))

    def restrict(self, subject_ids: Iterable[str]) -> 'CohortDataset':
        keep = set(subject_ids)
        return replace(
            self,
            subjects={k: v for k, v in self.subjects.items() if k in keep},
            labels={k: v for k, v in self.labels.items() if k in keep},
            fits={k: v for k, v in self.fits.items() if k in keep},
            truth={k: v for k, v in self.truth.items() if k in keep},
        )

    def targets(self, subject_ids: Sequence[str]) -> np.ndarray:
        """ -1 for controls and +1 for every clinical group. """
        missing = [k for k in subject_ids if k not in self.labels]
        if missing:
            raise EvaluationError(f'no group label for subjects {missing[:5]}.')
        return np.asarray([-1 if self.labels[k] == self.control_label else 1 for k in subject_ids], dtype=int)


def _line(frame: pd.DataFrame, position: int) -> int:
    # data rows start on line 2, after the header
    return int(frame.index[position]) + 2


def _read_csv(
        path: str,
        required: Sequence[str],
        optional: Sequence[str] = (),
        numeric: Sequence[str] = (),
        filled: Sequence[str] = (),
) -> pd.DataFrame:
    """ Read a CSV and check its columns.

    :param numeric: columns whose non-empty cells must parse as numbers.
    :param filled: numeric columns that may not have empty cells either.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f'{path} does not exist.')
    frame = pd.read_csv(path, dtype={'subject_id': str}, encoding='utf-8')
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ValidationError(f'{path}: missing columns {missing}.')
    unknown = [c for c in frame.columns if c not in required and c not in optional]
    if unknown:
        logging.warning(f'{path}: ignoring unknown columns {unknown}.')
    if frame['subject_id'].isna().any():
        raise ValidationError(f'{path}:{_line(frame, int(np.flatnonzero(frame["subject_id"].isna())[0]))}: empty subject_id.')

    for column in [c for c in numeric if c in frame.columns]:
        values = pd.to_numeric(frame[column], errors='coerce')
        bad = values.isna() if column in filled else values.isna() & frame[column].notna()
        positions = np.flatnonzero(bad.to_numpy())
        if positions.size > 0:
            i = int(positions[0])
            raise ValidationError(f'{path}:{_line(frame, i)}: {column} must be a number. Got {frame[column].iloc[i]!r}.')
        frame[column] = values.astype(float)
    return frame


def _optional_float(value) -> Optional[float]:
    return None if pd.isna(value) else float(value)


def _parse_index(value, path: str, line: int) -> int:
    index = float(value)
    if not index.is_integer():
        raise ValidationError(f'{path}:{line}: trial_idx must be an integer. Got {value!r}.')
    return int(index)


def _parse_correct(value, path: str, line: int) -> bool:
    if pd.isna(value):
        return False
    token = str(value).strip().lower()
    if token in ('1', '1.0', 'true'):
        return True
    if token in ('0', '0.0', 'false'):
        return False
    raise ValidationError(f'{path}:{line}: correct must be 0 or 1. Got {value!r}.')


def parse_trials_csv(path: str) -> Dict[str, Tuple[List[TrialCovariates], Optional[float]]]:
    """ Read the trial table and derive each subject's covariates.

    :return: subject_id -> (covariates ordered by trial index, session end in seconds if given).
    """
    frame = _read_csv(
        path, TRIAL_COLUMNS, ['session_end_s'],
        numeric=['trial_idx', 'stim_onset_s', 'response_time_s', 'rt_s', 'session_end_s'], filled=['trial_idx'],
    )
    duplicated = np.flatnonzero(frame.duplicated(['subject_id', 'trial_idx']).to_numpy())
    if duplicated.size > 0:
        row = frame.iloc[duplicated[0]]
        raise ValidationError(f'{path}:{_line(frame, duplicated[0])}: duplicate trial {row.trial_idx:g} for subject {row.subject_id}.')

    trials: Dict[str, Tuple[List[TrialCovariates], Optional[float]]] = dict()
    for subject_id, rows in frame.groupby('subject_id', sort=True):
        raw_trials: List[RawTrial] = list()
        for position, row in zip(frame.index.get_indexer(rows.index), rows.itertuples(index=False)):
            line = _line(frame, position)
            if row.valence not in VALENCES:
                raise ValidationError(f'{path}:{line}: unknown valence {row.valence!r}; expected one of {sorted(VALENCES)}.')
            raw_trials.append(RawTrial(
                trial_idx=_parse_index(row.trial_idx, path, line),
                stim_onset_s=_optional_float(row.stim_onset_s),
                response_time_s=_optional_float(row.response_time_s),
                negative=VALENCES[row.valence],
                rt_s=_optional_float(row.rt_s),
                correct=_parse_correct(row.correct, path, line),
            ))
        if len(raw_trials) != NOMINAL_TRIALS:
            logging.warning(f'{path}: subject {subject_id} has {len(raw_trials)} trials, not {NOMINAL_TRIALS}.')
        try:
            covariates = build_covariates(raw_trials)
        except ValidationError as error:
            raise type(error)(f'{path}: subject {subject_id}: {error}') from error

        session_end = None
        if 'session_end_s' in rows.columns and rows['session_end_s'].notna().any():
            session_end = float(rows['session_end_s'].dropna().iloc[0])
        trials[subject_id] = (covariates, session_end)
    return trials


def parse_tonic_csv(path: str) -> Dict[str, np.ndarray]:
    frame = _read_csv(path, TONIC_COLUMNS, numeric=['time_s', 'conductance'], filled=['time_s', 'conductance'])
    return {
        subject_id: rows[['time_s', 'conductance']].to_numpy(dtype=float)
        for subject_id, rows in frame.groupby('subject_id', sort=True)
    }


def parse_labels_csv(path: str) -> Dict[str, str]:
    frame = _read_csv(path, LABEL_COLUMNS)
    duplicated = np.flatnonzero(frame.duplicated(['subject_id']).to_numpy())
    if duplicated.size > 0:
        raise ValidationError(f'{path}:{_line(frame, duplicated[0])}: subject listed twice.')
    return {str(row.subject_id): str(row.group) for row in frame.itertuples(index=False)}


def parse_events_csv(
        path: str,
        durations: Union[float, Mapping[str, float]],
        tonic_path: Optional[str] = None,
        subjects: Optional[Iterable[str]] = None,
) -> Dict[str, Tuple[EventTrain, Optional[SummaryAnnotations]]]:
    """ Read event onsets, with SCR annotations when the columns and a tonic file are given.

    :param path: the events file.
    :param durations: session length in seconds, one for all subjects or one per subject.
    :param tonic_path: optional tonic-level samples per subject.
    :param subjects: optional allowlist; other subjects are skipped.
    """
    frame = _read_csv(path, EVENT_COLUMNS, ANNOTATION_COLUMNS, numeric=['onset_s'] + ANNOTATION_COLUMNS, filled=['onset_s'])
    allowed = None if subjects is None else set(subjects)
    annotated = all(c in frame.columns for c in ANNOTATION_COLUMNS)
    tonic = parse_tonic_csv(tonic_path) if tonic_path is not None else dict()

    parsed: Dict[str, Tuple[EventTrain, Optional[SummaryAnnotations]]] = dict()
    for subject_id, rows in frame.groupby('subject_id', sort=True):
        if allowed is not None and subject_id not in allowed:
            continue
        positions = frame.index.get_indexer(rows.index)
        onsets = rows['onset_s'].to_numpy(dtype=float)
        unordered = np.flatnonzero(np.diff(onsets) <= 0)
        if unordered.size > 0:
            raise ValidationError(
                f'{path}:{_line(frame, positions[unordered[0] + 1])}: onsets of subject {subject_id} are not strictly increasing.'
            )

        if isinstance(durations, Mapping):
            if subject_id not in durations:
                raise ValidationError(f'{path}: no session length for subject {subject_id}; pass --duration or add session_end_s to the trials file.')
            duration = float(durations[subject_id])
        else:
            duration = float(durations)
        outside = np.flatnonzero((onsets < 0) | (onsets > duration))
        if outside.size > 0:
            raise ValidationError(
                f'{path}:{_line(frame, positions[outside[0]])}: onset {onsets[outside[0]]} s of subject {subject_id} '
                f'lies outside the session [0, {duration}] s.'
            )

        annotations = None
        if annotated and subject_id in tonic:
            if rows[ANNOTATION_COLUMNS].isna().to_numpy().any():
                logging.warning(f'{path}: subject {subject_id} has events without amplitude or rise time; treating it as unannotated.')
            else:
                try:
                    annotations = SummaryAnnotations(
                        tonic_samples=tonic[subject_id],
                        scr_amplitudes=rows['amplitude'].to_numpy(dtype=float),
                        scr_rise_times_s=rows['rise_time_s'].to_numpy(dtype=float),
                    )
                except ValidationError as error:
                    raise ValidationError(f'{path}: subject {subject_id}: {error}') from error
        parsed[subject_id] = (EventTrain(onsets, duration), annotations)
    return parsed


def load_cohort(
        trials_path: str,
        events_path: str,
        labels_path: Optional[str] = None,
        tonic_path: Optional[str] = None,
        *,
        duration: Optional[float] = None,
        subjects: Optional[Sequence[str]] = None,
        control_label: str = 'C',
) -> CohortDataset:
    """ Assemble subject records from the trial, event and optional label/tonic files.

    :param duration: session length for every subject; otherwise each subject's session_end_s.
    :param subjects: optional allowlist of subject ids.
    """
    trials = parse_trials_csv(trials_path)
    if subjects is not None:
        allowed = set(subjects)
        trials = {k: v for k, v in trials.items() if k in allowed}

    durations: Dict[str, float] = dict()
    for subject_id, (_, session_end) in trials.items():
        if duration is not None:
            durations[subject_id] = float(duration)
        elif session_end is not None:
            durations[subject_id] = session_end
        else:
            raise ValidationError(f'{trials_path}: no session length for subject {subject_id}; pass --duration or add session_end_s.')
    events = parse_events_csv(events_path, durations, tonic_path, subjects=list(trials))

    if subjects is None:
        named = pd.read_csv(events_path, usecols=['subject_id'], dtype={'subject_id': str}, encoding='utf-8')['subject_id']
        orphans = sorted(set(named.dropna()) - set(trials))
        if orphans:
            logging.warning(f'{events_path}: no trials for subjects {orphans}; skipping them.')

    records: Dict[str, SubjectRecord] = dict()
    for subject_id, (covariates, _) in trials.items():
        if subject_id in events:
            train, annotations = events[subject_id]
        else:
            logging.warning(f'{events_path}: subject {subject_id} has no events.')
            train, annotations = EventTrain([], durations[subject_id]), None
        records[subject_id] = SubjectRecord(subject_id, train, tuple(covariates), annotations)

    labels = parse_labels_csv(labels_path) if labels_path is not None else dict()
    return CohortDataset(subjects=records, labels=labels, control_label=control_label)


def write_frame(frame: pd.DataFrame, path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n', encoding='utf-8')
    return


def write_trials_csv(cohort: CohortDataset, path: str):
    rows = list()
    for subject_id, record in cohort.subjects.items():
        for trial in record.trials:
            rows.append({
                'subject_id': subject_id,
                'trial_idx': trial.trial_idx,
                'stim_onset_s': trial.stim_onset_s,
                'response_time_s': trial.response_time_s,
                'valence': 'negative' if trial.x_neg else 'pos_neutral',
                'rt_s': trial.raw_rt_s,
                'correct': None if not trial.answered else int(trial.x_err == 0),
                'session_end_s': record.events.duration_s,
            })
    frame = pd.DataFrame(rows, columns=TRIAL_COLUMNS + ['session_end_s'])
    frame['correct'] = frame['correct'].astype('Int64')
    write_frame(frame, path)
    return


def write_events_csv(cohort: CohortDataset, path: str):
    annotated = any(
        r.annotations is not None and r.annotations.scr_amplitudes.size > 0
        for r in cohort.subjects.values()
    )
    rows = list()
    for subject_id, record in cohort.subjects.items():
        for i, onset in enumerate(record.events.onsets):
            row = {'subject_id': subject_id, 'onset_s': float(onset)}
            if annotated:
                has = record.annotations is not None and record.annotations.scr_amplitudes.size > 0
                row['amplitude'] = float(record.annotations.scr_amplitudes[i]) if has else None
                row['rise_time_s'] = float(record.annotations.scr_rise_times_s[i]) if has else None
            rows.append(row)
    write_frame(pd.DataFrame(rows, columns=EVENT_COLUMNS + (ANNOTATION_COLUMNS if annotated else [])), path)
    return


def write_tonic_csv(cohort: CohortDataset, path: str):
    rows = [
        {'subject_id': subject_id, 'time_s': float(t), 'conductance': float(c)}
        for subject_id, record in cohort.subjects.items()
        if record.annotations is not None
        for t, c in record.annotations.tonic_samples
    ]
    write_frame(pd.DataFrame(rows, columns=TONIC_COLUMNS), path)
    return


def write_labels_csv(cohort: CohortDataset, path: str):
    frame = pd.DataFrame(sorted(cohort.labels.items()), columns=LABEL_COLUMNS)
    write_frame(frame, path)
    return


def write_truth_csv(cohort: CohortDataset, path: str):
    rows = [{'subject_id': subject_id, **params.to_dict()} for subject_id, params in sorted(cohort.truth.items())]
    write_frame(pd.DataFrame(rows, columns=['subject_id', 'variant', *PARAM_NAMES]), path)
    return


def parse_truth_csv(path: str) -> Dict[str, ModelParams]:
    frame = _read_csv(path, ['subject_id', 'variant', *PARAM_NAMES])
    return {str(row['subject_id']): ModelParams.from_dict(row) for row in frame.to_dict('records')}


def file_checksum(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as fp:
        for chunk in iter(lambda: fp.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class FitArchive:
    fits: Mapping[str, Mapping[Variant, FitReport]]
    config: Mapping = field(default_factory=dict)
    checksums: Mapping[str, str] = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> str:
        document = {
            'toolkit_version': self.version,
            'config': dict(self.config),
            'input_checksums': dict(self.checksums),
            'subjects': {
                subject_id: {variant.value: report.to_dict() for variant, report in reports.items()}
                for subject_id, reports in sorted(self.fits.items())
            },
        }
        return json.dumps(document, indent=2, sort_keys=True) + '\n'

    @classmethod
    def from_json(cls, text: str) -> 'FitArchive':
        document = json.loads(text)
        fits = {
            subject_id: {Variant(name): FitReport.from_dict(report) for name, report in reports.items()}
            for subject_id, reports in document['subjects'].items()
        }
        return cls(
            fits=fits,
            config=document['config'],
            checksums=document['input_checksums'],
            version=document['toolkit_version'],
        )


def write_archive(archive: FitArchive, path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as fp:
        fp.write(archive.to_json())
    return


def read_archive(path: str) -> FitArchive:
    if not os.path.exists(path):
        raise FileNotFoundError(f'{path} does not exist.')
    with open(path, 'r', encoding='utf-8') as fp:
        try:
            return FitArchive.from_json(fp.read())
        except (AttributeError, KeyError, ValueError, TypeError) as error:
            raise ValidationError(f'{path}: not a fit archive ({error}).') from error


def intensity_trace(record: SubjectRecord, params: ModelParams, dt: float) -> pd.DataFrame:
    """ The fitted intensity at bin centres next to the observed counts, for plotting. """
    centres, widths = bin_layout(record.events.duration_s, dt)
    rates = intensity_at(params, record.table, centres)
    starts = centres - widths / 2
    observed = np.histogram(record.events.onsets, bins=np.append(starts, record.events.duration_s))[0]
    return pd.DataFrame({
        'subject_id': record.subject_id,
        'variant': params.variant.value,
        't_s': centres,
        'intensity': rates,
        'expected_count': rates * widths,
        'observed_count': observed,
        'compensator': compensator(params, record.table, centres),
    })


def write_intensity_csv(trace: pd.DataFrame, path: str):
    write_frame(trace, path)
    return

""" Command-line entry point: python -m src.cli <command> [options].

Exit codes: 0 on success, 1 on invalid inputs or missing files, 2 when the
numerics fail.
"""
import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence

import pandas as pd

from src import __version__
from src import plots
from src.classification import FeatureSet
from src.classification import ablate
from src.classification import evaluate_blocks
from src.classification import feature_table
from src.classification import permutation_importance
from src.comparisons import compare_cohort
from src.comparisons import comparison_table
from src.comparisons import fit_bias_check
from src.comparisons import subjects_frame
from src.config import RunConfig
from src.config import load_config
from src.config import write_config_echo
from src.datasets import CohortDataset
from src.datasets import FitArchive
from src.datasets import file_checksum
from src.datasets import intensity_trace
from src.datasets import load_cohort
from src.datasets import read_archive
from src.datasets import write_archive
from src.datasets import write_events_csv
from src.datasets import write_frame
from src.datasets import write_intensity_csv
from src.datasets import write_labels_csv
from src.datasets import write_tonic_csv
from src.datasets import write_trials_csv
from src.datasets import write_truth_csv
from src.latex_tables import write_tables
from src.model import Variant
from src.optimizer import fit_cohort
from src.simulator import CohortSpec
from src.simulator import gen_cohort
from src.stats import cohort_stats
from src.utils import ABLATION_PATH
from src.utils import ARCHIVE_PATH
from src.utils import COMPARISON_PATH
from src.utils import DATA_DIR
from src.utils import EVALUATION_PATH
from src.utils import PLOTS_DIR
from src.utils import RESULTS_DIR
from src.utils import STATS_PATH
from src.utils import FeatureUnavailableError
from src.utils import NumericalError
from src.utils import ValidationError
from src.utils import configure_logging
from src.utils import print_blurb

IMPORTANCE_PATH = os.path.join(RESULTS_DIR, 'importance.csv')
INTENSITY_DIR = os.path.join(RESULTS_DIR, 'intensity')
INPUT_DEFAULTS: Dict[str, Optional[str]] = {
    'trials': os.path.join(DATA_DIR, 'trials.csv'),
    'events': os.path.join(DATA_DIR, 'events.csv'),
    'labels': os.path.join(DATA_DIR, 'labels.csv'),
    'tonic': None,
    'archive': ARCHIVE_PATH,
}


def _stem(path: str) -> str:
    return os.path.splitext(path)[0]


def _write_csv(frame: pd.DataFrame, path: str, config: RunConfig):
    write_frame(frame, path)
    write_config_echo(config, path)
    logging.info(f'wrote {path}.')
    return


def _add_cohort_inputs(parser: argparse.ArgumentParser, *, labels: bool = False, archive: bool = True, tonic: bool = False):
    # unset paths fall back to the configuration's paths, then to INPUT_DEFAULTS
    parser.add_argument('--trials', default=None, help='trial table CSV')
    parser.add_argument('--events', default=None, help='event onsets CSV')
    parser.add_argument('--duration', type=float, default=None, help='session length in seconds for every subject')
    if labels:
        parser.add_argument('--labels', default=None, help='group labels CSV')
    if archive:
        parser.add_argument('--archive', default=None, help='fit archive JSON written by fit')
    if tonic:
        parser.add_argument('--tonic', default=None, help='tonic-level samples CSV, needed for SCR features')
    return


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='python -m src.cli',
        description='Trial-locked point-process models of SCR onsets: fitting, goodness of fit and classification.',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--config', default=None, help='YAML file with run settings')
    parser.add_argument('--seed', type=int, default=None, help='run seed')
    parser.add_argument('--dt', type=float, default=None, help='bin width in seconds')
    parser.add_argument('--jobs', type=int, default=None, help='parallel per-subject fits')
    parser.add_argument('--n-starts', dest='n_starts', type=int, default=None, help='optimizer starts per fit')
    parser.add_argument('--subjects', default=None, help='comma-separated allowlist of subject ids')
    parser.add_argument('--log-level', dest='log_level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='draw a labelled synthetic cohort')
    simulate.add_argument('--out-dir', dest='out_dir', default=DATA_DIR)
    simulate.add_argument('--n-per-group', dest='n_per_group', type=int, default=None)
    simulate.add_argument('--variant', default=Variant.FULL.value, choices=[v.value for v in Variant])

    fit = commands.add_parser('fit', help='fit the three models to every subject')
    _add_cohort_inputs(fit, archive=False)
    fit.add_argument('--out', default=ARCHIVE_PATH)

    gof = commands.add_parser('gof', help='compare the three models per subject and over the cohort')
    _add_cohort_inputs(gof)
    gof.add_argument('--labels', default=None, help='group labels CSV; enables the fit-bias check')
    gof.add_argument('--out', default=COMPARISON_PATH)

    for name, default, text in (
            ('classify', EVALUATION_PATH, 'leave-one-subject-out classification'),
            ('ablate', ABLATION_PATH, 'leave-one-feature-out ablation'),
            ('importance', IMPORTANCE_PATH, 'permutation feature importance'),
    ):
        command = commands.add_parser(name, help=text)
        _add_cohort_inputs(command, labels=True, tonic=True)
        command.add_argument('--featureset', default=None, choices=[f.value for f in FeatureSet])
        command.add_argument('--out', default=default)
        if name == 'ablate':
            command.add_argument('--features', default=None, help='comma-separated subset of the feature set')
        if name != 'importance':
            command.add_argument('--plot', action='store_true')
            command.add_argument('--plots-dir', dest='plots_dir', default=PLOTS_DIR)

    stats = commands.add_parser('stats', help='group tests on the fitted parameters')
    _add_cohort_inputs(stats, labels=True)
    stats.add_argument('--out', default=STATS_PATH)

    export = commands.add_parser('export-intensity', help='per-subject intensity traces')
    _add_cohort_inputs(export)
    export.add_argument('--variant', default=Variant.FULL.value, choices=[v.value for v in Variant])
    export.add_argument('--out-dir', dest='out_dir', default=INTENSITY_DIR)
    export.add_argument('--plot', action='store_true')
    export.add_argument('--plots-dir', dest='plots_dir', default=PLOTS_DIR)

    tables = commands.add_parser('tables', help='LaTeX tables from result CSVs')
    tables.add_argument('--comparison', default=COMPARISON_PATH)
    tables.add_argument('--evaluation', nargs='+', default=[EVALUATION_PATH])
    tables.add_argument('--out-dir', dest='out_dir', default=RESULTS_DIR)
    return parser


def _resolve_inputs(args: argparse.Namespace, config: RunConfig):
    defaults = dict(INPUT_DEFAULTS)
    if args.command == 'gof':
        defaults['labels'] = None  # the fit-bias check needs labels given explicitly
    for name, default in defaults.items():
        if hasattr(args, name) and getattr(args, name) is None:
            setattr(args, name, config.paths.get(name, default))
    return


def _subjects(args: argparse.Namespace) -> Optional[List[str]]:
    if args.subjects is None:
        return None
    return [s.strip() for s in args.subjects.split(',') if s.strip()]


def _load(args: argparse.Namespace, config: RunConfig, *, with_fits: bool = True) -> CohortDataset:
    cohort = load_cohort(
        args.trials,
        args.events,
        getattr(args, 'labels', None),
        getattr(args, 'tonic', None),
        duration=args.duration,
        subjects=_subjects(args),
        control_label=config.control_label,
    )
    if not with_fits:
        return cohort
    archive = read_archive(args.archive)
    missing = [k for k in cohort.subject_ids if k not in archive.fits]
    if missing:
        logging.warning(f'{args.archive}: no fits for subjects {missing}; leaving them out.')
        cohort = cohort.restrict(k for k in cohort.subject_ids if k in archive.fits)
    return cohort.with_fits({k: archive.fits[k] for k in cohort.subject_ids})


def run_simulate(args: argparse.Namespace, config: RunConfig):
    groups = config.group_specs()
    if args.n_per_group is not None:
        groups = tuple(replace(g, n_subjects=args.n_per_group) for g in groups)
    spec = CohortSpec(
        groups=groups,
        seed=config.seed,
        variant=Variant(args.variant),
        bounds=config.bounds,
        control_label=config.control_label,
    )
    cohort = gen_cohort(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, writer in (
            ('trials.csv', write_trials_csv),
            ('events.csv', write_events_csv),
            ('tonic.csv', write_tonic_csv),
            ('labels.csv', write_labels_csv),
            ('truth.csv', write_truth_csv),
    ):
        path = os.path.join(args.out_dir, name)
        writer(cohort, path)
        write_config_echo(config, path)
        logging.info(f'wrote {path}.')
    return


def run_fit(args: argparse.Namespace, config: RunConfig):
    cohort = _load(args, config, with_fits=False)
    print_blurb('fit', f'{len(cohort.subjects)} subjects', (len(cohort.subjects), 3))
    fits = fit_cohort(
        list(cohort.subjects.values()),
        config.ridge,
        config.bounds,
        config.seed,
        dt=config.dt,
        n_starts=config.n_starts,
        jobs=config.jobs,
    )
    checksums = {os.path.basename(p): file_checksum(p) for p in (args.trials, args.events)}
    write_archive(FitArchive(fits=fits, config=config.to_dict(), checksums=checksums), args.out)
    logging.info(f'wrote {args.out}.')
    return


def run_gof(args: argparse.Namespace, config: RunConfig):
    cohort = _load(args, config)
    rows = compare_cohort(cohort, config.ks_coeff)
    _write_csv(comparison_table(rows).reset_index(), args.out, config)
    _write_csv(subjects_frame(rows, cohort.labels), f'{_stem(args.out)}_subjects.csv', config)
    if len(cohort.groups) > 1:
        _write_csv(fit_bias_check(rows, cohort.labels), f'{_stem(args.out)}_bias.csv', config)
    return


def _featureset(args: argparse.Namespace, config: RunConfig, cohort: CohortDataset) -> FeatureSet:
    featureset = FeatureSet(args.featureset or config.featureset)
    if featureset is not FeatureSet.POINT_PROCESS:
        if args.tonic is None:
            raise FeatureUnavailableError(f'the {featureset.value} feature set needs a tonic file; pass --tonic.')
        if all(record.annotations is None for record in cohort.subjects.values()):
            raise FeatureUnavailableError(
                f'{args.events} has no amplitude and rise_time_s columns matching {args.tonic}; '
                f'the {featureset.value} feature set needs SCR annotations.'
            )
    return featureset


def run_classify(args: argparse.Namespace, config: RunConfig):
    cohort = _load(args, config)
    featureset = _featureset(args, config, cohort)
    reports = evaluate_blocks(cohort, featureset, config.seeds, config.svm_c, config.svm_gamma)
    _write_csv(pd.concat([r.summary_frame() for r in reports], ignore_index=True), args.out, config)
    _write_csv(pd.concat([r.decisions_frame() for r in reports], ignore_index=True), f'{_stem(args.out)}_decisions.csv', config)
    if args.plot:
        for report in reports:
            scores = report.decisions[config.seeds[0]]
            plots.roc_curve(report.labels, scores, report.featureset, report.comparison, args.plots_dir)
    return


def run_ablate(args: argparse.Namespace, config: RunConfig):
    cohort = _load(args, config)
    featureset = _featureset(args, config, cohort)
    features = None if args.features is None else [f.strip() for f in args.features.split(',')]
    table = ablate(cohort, features, config.seeds, featureset, config.n_permutations, config.svm_c, config.svm_gamma)
    _write_csv(table, args.out, config)
    if args.plot:
        plots.ablation_bars(table, args.plots_dir)
    return


def run_importance(args: argparse.Namespace, config: RunConfig):
    cohort = _load(args, config)
    featureset = _featureset(args, config, cohort)
    table = permutation_importance(cohort, config.seeds, featureset, config.n_shuffles, config.svm_c, config.svm_gamma)
    _write_csv(table, args.out, config)
    return


def run_stats(args: argparse.Namespace, config: RunConfig):
    cohort = _load(args, config)
    frame, _ = feature_table(cohort, FeatureSet.POINT_PROCESS)
    table = cohort_stats(frame, cohort.labels, config.control_label, config.fdr_q, config.exact_max_n)
    _write_csv(table, args.out, config)
    return


def run_export_intensity(args: argparse.Namespace, config: RunConfig):
    cohort = _load(args, config)
    variant = Variant(args.variant)
    for subject_id, record in cohort.subjects.items():
        trace = intensity_trace(record, cohort.fits[subject_id][variant].params, config.dt)
        path = os.path.join(args.out_dir, f'{subject_id}_{variant.value}.csv')
        write_intensity_csv(trace, path)
        if args.plot:
            plots.intensity_trace(trace, record.events.onsets, args.plots_dir)
    write_config_echo(config, os.path.join(args.out_dir, 'intensity'))
    logging.info(f'wrote {len(cohort.subjects)} intensity traces to {args.out_dir}.')
    return


def run_tables(args: argparse.Namespace, config: RunConfig):
    comparison = args.comparison if os.path.exists(args.comparison) else None
    evaluation = [p for p in args.evaluation if os.path.exists(p)]
    if comparison is None and not evaluation:
        raise FileNotFoundError(f'none of {[args.comparison, *args.evaluation]} exist.')
    for path in write_tables(comparison, evaluation, args.out_dir):
        logging.info(f'wrote {path}.')
    return


COMMANDS = {
    'simulate': run_simulate,
    'fit': run_fit,
    'gof': run_gof,
    'classify': run_classify,
    'ablate': run_ablate,
    'importance': run_importance,
    'stats': run_stats,
    'export-intensity': run_export_intensity,
    'tables': run_tables,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        overrides: Dict[str, Any] = {'seed': args.seed, 'dt': args.dt, 'jobs': args.jobs, 'n_starts': args.n_starts}
        config = load_config(args.config, overrides)
        _resolve_inputs(args, config)
        COMMANDS[args.command](args, config)
    except NumericalError as error:
        logging.error(f'numerical failure: {error}')
        return 2
    except (ValidationError, OSError) as error:
        logging.error(str(error))
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())

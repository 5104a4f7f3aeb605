import os
from typing import List
from typing import Sequence

import pandas as pd

from src.utils import RESULTS_DIR

RULES = ('\\toprule', '\\midrule', '\\bottomrule')


def bold_best(values: List[float], *, high: bool = True, digits: int = 2) -> List[str]:
    """ Format the values and embolden the best one, ties included. """
    best = max(values) if high else min(values)
    return [
        ''.join(['\\textbf{', f'{v:.{digits}f}', '}']) if f'{v:.{digits}f}' == f'{best:.{digits}f}' else f'{v:.{digits}f}'
        for v in values
    ]


def bold_column(column: List[str]) -> List[str]:
    return [''.join(['\\textbf{' + c + '}']) for c in column]


def _with_sd(means: List[str], sds: Sequence[float], digits: int = 2) -> List[str]:
    return [f'{m} $\\pm$ {s:.{digits}f}' for m, s in zip(means, sds)]


def _to_latex(df: pd.DataFrame) -> str:
    columns = bold_column(list(df.columns))
    latex_string: str = df.to_latex(
        header=columns,
        index=False,
        column_format='|' + 'c|' * len(columns),
        escape=False,
    )
    latex_list = [line for line in latex_string.split('\n') if line.strip() not in RULES]
    # a horizontal rule around every row
    for i in range(len(latex_list[:-2]), 0, -1):
        latex_list.insert(i, '\\hline')
    return '\n'.join(latex_list)


def comparison_latex(table: pd.DataFrame) -> str:
    """ The model-comparison table: one column per model, lower is better on every score row. """
    variants = list(table.columns)
    nll = bold_best(list(table.loc['nll_mean']), high=False, digits=1)
    aic = bold_best(list(table.loc['aic_mean']), high=False, digits=1)
    ks = bold_best([10 * v for v in table.loc['ks_mean']], high=False, digits=2)
    df = pd.DataFrame({
        'measure': ['\\# Parameters', 'NLL', 'AIC', 'KS $\\times 10^{-1}$', 'KS pass rate'],
        **{
            variant: [
                f'{int(table.loc["n_params", variant])}',
                _with_sd([nll[i]], [table.loc['nll_sd', variant]], 1)[0],
                _with_sd([aic[i]], [table.loc['aic_sd', variant]], 1)[0],
                ks[i],
                f'{table.loc["ks_pass_rate", variant]:.2f}',
            ]
            for i, variant in enumerate(variants)
        },
    })
    return _to_latex(df)


def evaluation_latex(summary: pd.DataFrame) -> str:
    """ The classification table: one row per comparison and metric, one column per feature set. """
    featuresets = list(dict.fromkeys(summary['featureset']))
    rows = list()
    for (comparison, metric), block in summary.groupby(['comparison', 'metric'], sort=False):
        block = block.set_index('featureset').reindex(featuresets)
        means = bold_best(list(block['mean'].fillna(-1.)), high=True, digits=3)
        cells = _with_sd(means, list(block['sd'].fillna(0.)), 3)
        cells = ['-' if pd.isna(m) else c for m, c in zip(block['mean'], cells)]
        supplementary = bool(block['supplementary'].fillna(False).any())
        rows.append({'comparison': comparison, 'metric': metric + ('$^*$' if supplementary else ''), **dict(zip(featuresets, cells))})
    return _to_latex(pd.DataFrame(rows))


def write_tables(comparison_path: str, evaluation_paths: Sequence[str], out_dir: str = RESULTS_DIR) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = list()
    if comparison_path is not None:
        path = os.path.join(out_dir, 'latex_comparison.txt')
        with open(path, 'w', encoding='utf-8') as fp:
            fp.write(comparison_latex(pd.read_csv(comparison_path, index_col='metric')))
        written.append(path)
    if evaluation_paths:
        summary = pd.concat([pd.read_csv(p) for p in evaluation_paths], ignore_index=True)
        path = os.path.join(out_dir, 'latex_evaluation.txt')
        with open(path, 'w', encoding='utf-8') as fp:
            fp.write(evaluation_latex(summary))
        written.append(path)
    return written

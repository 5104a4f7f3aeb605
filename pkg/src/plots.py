import os

import matplotlib
import numpy as np
import pandas as pd

matplotlib.use('Agg')
from matplotlib import pyplot as plt  # noqa: E402
from sklearn import metrics  # noqa: E402

from src.utils import PLOTS_DIR  # noqa: E402


def _directory(plot: str, plots_dir: str = PLOTS_DIR) -> str:
    dir_path = os.path.join(plots_dir, plot)
    os.makedirs(dir_path, exist_ok=True)
    return dir_path


def intensity_trace(
        trace: pd.DataFrame,
        onsets: np.ndarray,
        plots_dir: str = PLOTS_DIR,
) -> str:
    """ Plot a fitted intensity over the session with a rug of the observed events.

    :param trace: one subject's intensity trace, as written by export-intensity.
    :param onsets: the subject's event onsets in seconds.
    :param plots_dir: root directory for figures.
    :return: path of the saved figure.
    """
    subject_id, variant = trace['subject_id'].iloc[0], trace['variant'].iloc[0]
    fig = plt.figure(figsize=(16, 10), dpi=200)
    ax = fig.add_subplot(111)
    ax.plot(trace['t_s'], trace['intensity'], color='darkorange', lw=1., label=f'{variant} intensity')
    ax.plot(onsets, np.zeros_like(onsets), '|', color='navy', markersize=12, label='events')
    ax.set_xlabel('Time (s)')
    ax.set_ylabel('Events per second')
    ax.set_title(f'{subject_id}-{variant}')
    ax.legend(loc='upper right')
    plot_path = os.path.join(_directory('intensity', plots_dir), f'{subject_id}_{variant}.png')
    plt.savefig(plot_path, bbox_inches='tight', pad_inches=0.25)
    plt.close(fig)
    return plot_path


def roc_curve(
        y_true: np.ndarray,
        y_pred: np.ndarray,
        featureset: str,
        comparison: str,
        plots_dir: str = PLOTS_DIR,
) -> str:
    """ Plot the ROC curve of pooled held-out scores.

    :param y_true: labels, +1 for clinical.
    :param y_pred: held-out decision values.
    """
    fpr, tpr, _ = metrics.roc_curve(y_true, y_pred, pos_label=1)
    auc = metrics.auc(fpr, tpr)

    fig = plt.figure(figsize=(16, 10), dpi=200)
    fig.add_subplot(111)
    plt.plot(fpr, tpr, color='darkorange', lw=2., label=f'area: {auc:.3f}')
    plt.plot([0, 1], [0, 1], color='navy', lw=2., linestyle='--')
    plt.xlim([0, 1.05]), plt.ylim([0, 1.05])
    plt.xlabel('False Positive Rate')
    plt.ylabel('True Positive Rate')
    plt.title(f'{featureset}: {comparison}')
    plt.legend(loc='lower right')
    name = comparison.replace(' ', '_').replace('+', '')
    plot_path = os.path.join(_directory('roc_curves', plots_dir), f'{featureset}_{name}.png')
    plt.savefig(plot_path, bbox_inches='tight', pad_inches=0.25)
    plt.close(fig)
    return plot_path


def ablation_bars(ablation: pd.DataFrame, plots_dir: str = PLOTS_DIR) -> str:
    """ Change in AUROC when each feature is left out, with the permutation-null band shaded. """
    fig = plt.figure(figsize=(16, 10), dpi=200)
    ax = fig.add_subplot(111)
    colors = ['#0504aa' if flag else '#a0a0a0' for flag in ablation['significant']]
    ax.bar(ablation['feature'], ablation['delta_auroc'], color=colors)
    band = float(ablation['null_band'].iloc[0])
    ax.axhspan(-band, band, color='navy', alpha=0.1)
    ax.axhline(0., color='black', lw=1.)
    ax.set_xlabel('Feature left out')
    ax.set_ylabel('Change in AUROC')
    plot_path = os.path.join(_directory('ablation', plots_dir), 'ablation.png')
    plt.savefig(plot_path, bbox_inches='tight', pad_inches=0.25)
    plt.close(fig)
    return plot_path

# == emit.py ==#

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .analysis import MetricsSeries
from .exceptions import Divergence
from .integrator import Trajectory

__all__: Tuple[str, ...] = (
    'TRUNCATION_MARKER',
    'plot_relative_error',
    'read_metrics_csv',
    'write_comparison_csv',
    'write_metrics_csv',
    'write_summary_json',
    'write_trajectory_csv',
)

logger = logging.getLogger(__name__)

TRUNCATION_MARKER = '# truncated'

PathLike = Union[str, Path]


def _fmt(value: float) -> str:
    return '%.17g' % value


def _provenance(config_hash: str, seed: Optional[int]) -> List[str]:
    return [f'# config_hash: {config_hash}', f'# seed: {seed}']


def _write_rows(
    path: Path, comments: Sequence[str], header: Sequence[str], rows: Iterable[Sequence[str]], footer: Sequence[str] = ()
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='') as f:
        for line in comments:
            f.write(line + '\n')
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
        for line in footer:
            f.write(line + '\n')
    logger.debug('Wrote %s', path)
    return path


def write_metrics_csv(path: PathLike, series: MetricsSeries, *, config_hash: str, seed: Optional[int]) -> Path:
    """Writes ``time,relative_error,consensus_error,optimality_residual,lambda_sum_drift`` rows.

    Values carry 17 significant digits so parsing them back is exact. Lines
    starting with ``#`` hold the config hash and seed, and whether the error
    column was normalized.
    """
    comments = _provenance(config_hash, seed) + [f'# normalized: {str(series.normalized).lower()}']
    rows = ([_fmt(v) for v in row] for row in series.rows())
    return _write_rows(Path(path), comments, MetricsSeries.COLUMNS, rows)


def read_metrics_csv(path: PathLike) -> Dict[str, np.ndarray]:
    """Parses a metrics CSV back into one array per column, skipping ``#`` lines."""
    with Path(path).open(encoding='utf-8', newline='') as f:
        reader = csv.DictReader(line for line in f if not line.startswith('#'))
        data: Dict[str, List[float]] = {name: [] for name in reader.fieldnames or ()}
        for row in reader:
            for name, value in row.items():
                data[name].append(float(value))
    return {name: np.array(values) for name, values in data.items()}


def write_trajectory_csv(
    path: PathLike,
    traj: Trajectory,
    *,
    config_hash: str,
    seed: Optional[int],
    divergence: Optional[Divergence] = None,
) -> Path:
    """Writes one row per record: the time, then every x, λ and v component in block order.

    A trajectory cut short by ``divergence`` ends with a ``# truncated`` line
    naming the failing time and component.
    """
    if traj.layout is None:
        labels = tuple(f's[{k + 1}]' for k in range(traj.states.shape[1]))
    else:
        labels = traj.layout.labels()
    rows = ([_fmt(t)] + [_fmt(v) for v in state] for t, state in zip(traj.times, traj.states))
    footer = []
    if divergence is not None:
        footer.append(
            f'{TRUNCATION_MARKER}: diverged at t = {_fmt(divergence.time)}, component {divergence.index}'
        )
    return _write_rows(Path(path), _provenance(config_hash, seed), ('time',) + labels, rows, footer)


def write_comparison_csv(
    path: PathLike, curves: Mapping[str, Tuple[np.ndarray, np.ndarray]], *, config_hash: str, seed: Optional[int]
) -> Path:
    """Merges the relative-error curves of several runs on their shared time grid.

    Runs that stopped early leave their remaining cells empty.
    """
    labels = list(curves)
    longest = max((curves[label][0] for label in labels), key=len)
    rows = []
    for k, t in enumerate(longest):
        row = [_fmt(t)]
        for label in labels:
            errors = curves[label][1]
            row.append(_fmt(errors[k]) if k < len(errors) else '')
        rows.append(row)
    return _write_rows(Path(path), _provenance(config_hash, seed), ['time'] + labels, rows)


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_summary_json(path: PathLike, summary: Mapping[str, Any]) -> Path:
    """Writes ``summary`` as sorted, indented JSON. Non-finite floats become ``null``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_json_safe(summary), sort_keys=True, indent=2) + '\n', encoding='utf-8')
    logger.debug('Wrote %s', path)
    return path


def plot_relative_error(
    path: PathLike,
    curves: Mapping[str, Tuple[np.ndarray, np.ndarray]],
    *,
    config_hash: str,
    seed: Optional[int],
    title: str = '',
    ylabel: str = 'relative error',
) -> Path:
    """Renders one log-scale line per curve into a self-contained SVG file.

    The file carries no timestamp, and its element ids are salted with the
    config hash, so rerunning a config reproduces the same SVG.
    """
    import matplotlib

    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({'svg.hashsalt': config_hash, 'svg.fonttype': 'none', 'axes.unicode_minus': False}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0), constrained_layout=True)
        for label, (times, errors) in curves.items():
            ax.plot(times, errors, label=label, linewidth=1.2)
        ax.set_yscale('log', nonpositive='mask')
        ax.set_xlabel('time')
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, which='both', alpha=0.3)
        if len(curves) > 1:
            ax.legend(loc='best', fontsize=8)
        metadata = {'Date': None, 'Identifier': config_hash, 'Description': f'seed: {seed}'}
        fig.savefig(path, format='svg', metadata=metadata)
        plt.close(fig)
    logger.debug('Wrote %s', path)
    return path

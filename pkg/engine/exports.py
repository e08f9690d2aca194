"""
Result files of simulation runs
games.csv / agents.csv are appended after every game so a long run keeps
its history if interrupted; summary.json and the .dat series are written
at the end.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd
from django.conf import settings

from Hybridsim.exceptions import HybridsimError

logger = logging.getLogger(__name__)

GAME_COLUMNS = [
    'game', 'agent', 'n_sent', 'sr', 'prr', 'mean_reward', 'eps',
    'mode0', 'mode1', 'mode2', 'mode3',
    'dup_pct', 'delivery_ratio', 'mean_loss', 'completed',
]
COMPARE_COLUMNS = [
    'selector', 'congestion', 'background_count', 'games', 'completed_games',
    'prr_mean', 'prr_std', 'delivery_ratio_mean', 'dup_pct', 'redundant_pct',
]
# prr counts rounds where every neighbor got exactly one copy, so redundant
# traffic scores near 0 there; delivery_ratio counts at least one copy.
COMPARE_COLUMN_NOTES = {
    'prr_mean': 'successful rounds over messages sent; a round with duplicate copies is never successful',
    'delivery_ratio_mean': 'share of rounds in which every neighbor received at least one copy',
    'dup_pct': 'share of neighbor receptions that got more than one copy, in percent',
    'redundant_pct': 'share of messages sent in hybrid redundant mode, in percent',
}


class ExportError(HybridsimError):
    """A result file could not be written"""


def ensure_output_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExportError(f"Cannot create output directory {out}: {e}") from e
    return out


def _append_rows(path: Path, rows: List[dict]):
    frame = pd.DataFrame(rows, columns=GAME_COLUMNS)
    try:
        frame.to_csv(path, mode='a', header=not path.exists(), index=False)
    except OSError as e:
        raise ExportError(f"Cannot write {path}: {e}") from e


class GameStatsWriter:
    """Appends one platoon row to games.csv and one row per agent to agents.csv"""

    def __init__(self, out_dir, prefix: str = '', overwrite: bool = True):
        self.out_dir = ensure_output_dir(out_dir)
        self.games_path = self.out_dir / f'{prefix}games.csv'
        self.agents_path = self.out_dir / f'{prefix}agents.csv'
        if overwrite:
            for path in (self.games_path, self.agents_path):
                path.unlink(missing_ok=True)
        self.rows_written = 0

    def __call__(self, stats):
        self.write(stats)

    def write(self, stats):
        _append_rows(self.games_path, [stats.summary_row()])
        _append_rows(self.agents_path, stats.agent_rows())
        self.rows_written += 1


def read_games(out_dir, prefix: str = '') -> pd.DataFrame:
    path = Path(out_dir) / f'{prefix}games.csv'
    if not path.exists():
        raise ExportError(f"No {path.name} in {out_dir}")
    return pd.read_csv(path)


def write_series_dat(path, values: Sequence[float], header: str = '') -> Path:
    """Two-column plain-text series: game number, value"""
    path = Path(path)
    data = np.column_stack([np.arange(1, len(values) + 1), np.asarray(values, dtype=float)])
    try:
        np.savetxt(path, data, fmt=['%d', '%.6f'], header=header)
    except OSError as e:
        raise ExportError(f"Cannot write {path}: {e}") from e
    return path


def write_training_series(out_dir, series: Iterable) -> Dict[str, Path]:
    """reward.dat and prr.dat of a training run"""
    series = list(series)
    out = ensure_output_dir(out_dir)
    rewards = [float(np.mean(stats.mean_reward)) for stats in series]
    prr = [stats.mean_prr for stats in series]
    return {
        'reward': write_series_dat(out / 'reward.dat', rewards, header='game mean_reward'),
        'prr': write_series_dat(out / 'prr.dat', prr, header='game prr'),
    }


def write_summary(out_dir, payload: dict, name: str = 'summary.json') -> Path:
    out = ensure_output_dir(out_dir)
    path = out / name
    document = {'schema_version': settings.HYBRIDSIM['CSV_SCHEMA_VERSION'], **payload}
    try:
        path.write_text(json.dumps(document, indent=2, default=float))
    except OSError as e:
        raise ExportError(f"Cannot write {path}: {e}") from e
    logger.info(f"Summary written to {path}")
    return path


def write_compare(out_dir, rows: List[dict]) -> Path:
    out = ensure_output_dir(out_dir)
    path = out / 'compare.csv'
    frame = pd.DataFrame(rows, columns=COMPARE_COLUMNS)
    try:
        frame.to_csv(path, index=False, float_format='%.6f')
    except OSError as e:
        raise ExportError(f"Cannot write {path}: {e}") from e
    logger.info(f"Comparison table written to {path}")
    return path

"""
Experiment orchestration
Training, evaluation, selector comparison and the invariant suite, each
writing its result files under the run's output directory.
"""

import logging
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from django.conf import settings
from joblib import Parallel, delayed

from Hybridsim import __version__
from Hybridsim.exceptions import ConfigError
from engine.charts import compare_figure, save_figure, training_figures
from engine.exports import (
    COMPARE_COLUMN_NOTES,
    GameStatsWriter,
    ensure_output_dir,
    read_games,
    write_compare,
    write_summary,
    write_training_series,
)
from engine.services import (
    SELECTOR_DRL,
    build_selectors,
    evaluate_selector,
    run_evaluation,
    run_training,
)
from experiments.config import RunConfig
from experiments.validation import CheckResult, run_checks
from nn.weights import save_weights

logger = logging.getLogger('hybridsim.experiments')


@dataclass
class RunResult:
    """Where a command wrote its files, plus its summary document"""

    out_dir: Path
    files: List[Path] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)


def weight_paths(weights_dir, platoon_size: int) -> List[Path]:
    return [Path(weights_dir) / f'weights-agent{k}.bin' for k in range(platoon_size)]


def require_weights(weights_dir, platoon_size: int) -> Path:
    """
    Raises:
        ConfigError: some weight file is missing
    """
    missing = [p.name for p in weight_paths(weights_dir, platoon_size) if not p.is_file()]
    if missing:
        raise ConfigError(
            f"No trained weights in {weights_dir} (missing {', '.join(missing)}); "
            f"run `simulate --mode train --out {weights_dir}` first or pass --weights DIR",
            errors={'weights': missing},
        )
    return Path(weights_dir)


def _write_charts(out_dir: Path, games: pd.DataFrame, prefix: str = '') -> List[Path]:
    files = []
    for name, fig in training_figures(games).items():
        files.extend(save_figure(fig, out_dir / f'{prefix}{name}').values())
    return files


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_train(config: RunConfig, charts: bool = False) -> RunResult:
    """
    Train one DRL agent per platoon vehicle for config.games games.

    Writes games.csv and agents.csv after every game, then the weight
    files, reward.dat / prr.dat, optional charts and summary.json.
    """
    if config.selector != SELECTOR_DRL:
        raise ConfigError(f"--mode train needs selector 'drl', got '{config.selector}'",
                          errors={'selector': [config.selector]})
    out = ensure_output_dir(config.output_dir)
    setup = config.setup
    logger.info(f"Training {setup.scenario.platoon_size} agents for {config.games} games (seed {config.seed}) into {out}")

    agents = build_selectors(setup, SELECTOR_DRL, config.seed)
    writer = GameStatsWriter(out)
    series = run_training(setup, agents, config.games, config.seed, on_game=writer)

    files = [writer.games_path, writer.agents_path]
    for agent, path in zip(agents, weight_paths(out, len(agents))):
        files.append(save_weights(agent.behavior, path))
    files.extend(write_training_series(out, series).values())
    if charts:
        files.extend(_write_charts(out, read_games(out)))

    window = settings.HYBRIDSIM['MOVING_AVERAGE_WINDOW']
    tail = series[-window:]
    summary = {
        'mode': 'train',
        'version': __version__,
        'seed': config.seed,
        'games': len(series),
        'completed_games': sum(1 for s in series if s.completed),
        'final_epsilon': [float(e) for e in series[-1].epsilon] if series else [],
        'tail_window': len(tail),
        'tail_prr_mean': float(np.mean([s.mean_prr for s in tail])) if tail else None,
        'tail_redundant_pct': float(np.mean([s.redundant_pct for s in tail])) if tail else None,
        'config': config.to_dict(),
    }
    files.append(write_summary(out, summary))
    logger.info(f"Training finished: {len(series)} games, files in {out}")
    return RunResult(out, files, summary)


def cmd_evaluate(config: RunConfig, weights_dir=None, charts: bool = False) -> RunResult:
    """
    Greedy evaluation of config.selector over config.eval_games games.
    DRL agents are loaded from weights_dir (default: the output directory).
    """
    out = ensure_output_dir(config.output_dir)
    setup = config.setup
    if config.selector == SELECTOR_DRL:
        weights_dir = require_weights(weights_dir or out, setup.scenario.platoon_size)
    logger.info(f"Evaluating {config.selector} over {config.eval_games} games (seed {config.seed})")

    selectors = build_selectors(setup, config.selector, config.seed, weights_dir)
    evaluation = run_evaluation(setup, selectors, config.eval_games, config.seed, selector_name=config.selector)

    writer = GameStatsWriter(out, prefix='eval-')
    for stats in evaluation.games:
        writer.write(stats)
    files = [writer.games_path, writer.agents_path]
    if charts:
        files.extend(_write_charts(out, read_games(out, prefix='eval-'), prefix='eval-'))

    summary = {
        'mode': 'eval',
        'version': __version__,
        'seed': config.seed,
        'weights_dir': str(weights_dir) if weights_dir else None,
        'evaluation': evaluation.as_dict(),
        'config': config.to_dict(),
    }
    files.append(write_summary(out, summary, name='eval-summary.json'))
    return RunResult(out, files, summary)


def compare_cells(config: RunConfig) -> List[RunConfig]:
    """One configuration per (selector, congestion level), selectors outermost"""
    levels = settings.HYBRIDSIM['COMPARE_CONGESTION_LEVELS']
    selectors = settings.HYBRIDSIM['COMPARE_SELECTORS']
    return [replace(config.with_congestion(level), selector=selector) for selector, level in product(selectors, levels)]


def cmd_compare(config: RunConfig, weights_dir=None, jobs: Optional[int] = None, charts: bool = False) -> RunResult:
    """
    Evaluate every selector under the low and high congestion presets and
    write compare.csv, one row per cell.
    """
    out = ensure_output_dir(config.output_dir)
    cells = compare_cells(config)
    if any(cell.selector == SELECTOR_DRL for cell in cells):
        weights_dir = require_weights(weights_dir or out, config.setup.scenario.platoon_size)
    jobs = jobs or settings.SIMULATION_JOBS
    logger.info(f"Comparing {len(cells)} cells with {jobs} job(s), {config.eval_games} games each")

    evaluations = Parallel(n_jobs=jobs)(
        delayed(evaluate_selector)(cell.setup, cell.selector, cell.seed, cell.eval_games, weights_dir)
        for cell in cells
    )

    rows = []
    for cell, evaluation in zip(cells, evaluations):
        result = evaluation.as_dict()
        rows.append({
            'selector': cell.selector,
            'congestion': cell.congestion,
            'background_count': cell.setup.scenario.background_count,
            'games': result['games'],
            'completed_games': result['completed_games'],
            'prr_mean': result['prr_mean'],
            'prr_std': result['prr_std'],
            'delivery_ratio_mean': result['delivery_ratio_mean'],
            'dup_pct': result['dup_pct'],
            'redundant_pct': result['redundant_pct'],
        })
    files = [write_compare(out, rows)]
    if charts:
        files.extend(save_figure(compare_figure(pd.DataFrame(rows)), out / 'compare').values())

    summary = {
        'mode': 'compare',
        'version': __version__,
        'seed': config.seed,
        'weights_dir': str(weights_dir) if weights_dir else None,
        'cells': rows,
        'column_notes': COMPARE_COLUMN_NOTES,
        'config': config.to_dict(),
    }
    files.append(write_summary(out, summary, name='compare-summary.json'))
    return RunResult(out, files, summary)


def cmd_validate(config: RunConfig) -> List[CheckResult]:
    """Run the fast invariant suite; the caller decides the exit code"""
    results = run_checks(seed=config.seed)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"Validation failed: {', '.join(failed)}")
    else:
        logger.info(f"All {len(results)} validation checks passed")
    return results

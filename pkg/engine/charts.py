"""
Training and comparison charts using Plotly
"""

import logging
from pathlib import Path
from typing import Dict, Optional

import pandas as pd
import plotly.graph_objects as go
from django.conf import settings
from plotly.subplots import make_subplots

from engine.services import moving_average

logger = logging.getLogger(__name__)

CHART_COLORS = {
    'background': '#ffffff',
    'grid': '#e5e5e5',
    'raw': '#9ecae1',
    'trend': '#08519c',
    'modes': ['#1b9e77', '#d95f02', '#7570b3', '#e7298a'],
}
MODE_LABELS = ['Single ITS-G5', 'Single LTE-V2X', 'Hybrid redundant', 'Hybrid division']


def _layout(fig: go.Figure, title: str) -> go.Figure:
    fig.update_layout(
        title=title,
        plot_bgcolor=CHART_COLORS['background'],
        paper_bgcolor=CHART_COLORS['background'],
        hovermode='x unified',
        template='plotly_white',
    )
    return fig


def series_figure(games: pd.DataFrame, column: str, title: str, window: Optional[int] = None) -> go.Figure:
    """Per-game values with their trailing mean"""
    window = window or settings.HYBRIDSIM['MOVING_AVERAGE_WINDOW']
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=games['game'], y=games[column], mode='lines', name=column,
                             line=dict(color=CHART_COLORS['raw'], width=1)))
    fig.add_trace(go.Scatter(x=games['game'], y=moving_average(games[column].tolist(), window),
                             mode='lines', name=f'{window}-game mean',
                             line=dict(color=CHART_COLORS['trend'], width=2)))
    fig.update_layout(xaxis_title='game', yaxis_title=column)
    return _layout(fig, title)


def mode_usage_figure(games: pd.DataFrame) -> go.Figure:
    """Stacked share of each communication mode per game"""
    mode_columns = [f'mode{m}' for m in range(len(MODE_LABELS))]
    totals = games[mode_columns].sum(axis=1).replace(0, 1)
    fig = go.Figure()
    for m, column in enumerate(mode_columns):
        fig.add_trace(go.Scatter(x=games['game'], y=100.0 * games[column] / totals, mode='lines',
                                 stackgroup='modes', name=MODE_LABELS[m],
                                 line=dict(color=CHART_COLORS['modes'][m])))
    fig.update_layout(xaxis_title='game', yaxis_title='% of messages')
    return _layout(fig, 'Communication mode usage')


def training_figures(games: pd.DataFrame) -> Dict[str, go.Figure]:
    return {
        'reward': series_figure(games, 'mean_reward', 'Mean reward per game'),
        'prr': series_figure(games, 'prr', 'Packet reception ratio per game'),
        'modes': mode_usage_figure(games),
    }


def compare_figure(table: pd.DataFrame) -> go.Figure:
    """Grouped bars of PRR, duplicated-message share and redundant usage per selector"""
    fig = make_subplots(rows=1, cols=3, subplot_titles=('PRR', 'Duplicated messages (%)', 'Redundant usage (%)'))
    for congestion, group in table.groupby('congestion', sort=False):
        fig.add_trace(go.Bar(x=group['selector'], y=group['prr_mean'], error_y=dict(type='data', array=group['prr_std']),
                             name=f'{congestion} congestion', legendgroup=congestion), row=1, col=1)
        fig.add_trace(go.Bar(x=group['selector'], y=group['dup_pct'], name=f'{congestion} congestion',
                             legendgroup=congestion, showlegend=False), row=1, col=2)
        fig.add_trace(go.Bar(x=group['selector'], y=group['redundant_pct'], name=f'{congestion} congestion',
                             legendgroup=congestion, showlegend=False), row=1, col=3)
    fig.update_layout(barmode='group')
    return _layout(fig, 'Selector comparison')


def save_figure(fig: go.Figure, path) -> Dict[str, Path]:
    """
    Write the figure as standalone HTML, plus SVG when kaleido is installed.

    Returns:
        Paths written, keyed by format
    """
    path = Path(path)
    written = {'html': path.with_suffix('.html')}
    fig.write_html(written['html'], include_plotlyjs='cdn')
    try:
        fig.write_image(path.with_suffix('.svg'))
        written['svg'] = path.with_suffix('.svg')
    except Exception as e:
        logger.warning(f"SVG export not available: {str(e)}")
    return written

"""
Baseline mode selectors
Static single-RAT and static hybrid policies, and a TOPSIS-based
multi-criteria selector over the four communication modes.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from Hybridsim.exceptions import ConfigError
from agent.services import ModeSelector, ObservationSnapshot, StateVec
from hybrid.services import CommMode
from radio.services import RatKind, RatParams

logger = logging.getLogger(__name__)

BENEFIT = 'benefit'
COST = 'cost'

NEUTRAL_SNIR_DB = 15.0
NEUTRAL_PRR = 0.5


class StaticPolicy(Enum):
    ALWAYS_ITS_G5 = 'static-g5'
    ALWAYS_LTE = 'static-lte'
    ALWAYS_REDUNDANT = 'static-redundant'


STATIC_MODES = {
    StaticPolicy.ALWAYS_ITS_G5: CommMode.SINGLE_ITS_G5,
    StaticPolicy.ALWAYS_LTE: CommMode.SINGLE_LTE,
    StaticPolicy.ALWAYS_REDUNDANT: CommMode.HYBRID_REDUNDANT,
}


def static_select(policy: StaticPolicy) -> CommMode:
    """Constant mode of a static policy"""
    return STATIC_MODES[StaticPolicy(policy)]


class StaticSelector(ModeSelector):
    """Selector that ignores observations"""

    def __init__(self, policy: StaticPolicy):
        self.policy = StaticPolicy(policy)
        self.name = self.policy.value
        self.mode = static_select(self.policy)

    def select(self, state: StateVec, snapshot: ObservationSnapshot) -> CommMode:
        return self.mode


# ============================================================================
# TOPSIS
# ============================================================================

@dataclass
class TopsisInput:
    """Decision matrix (alternatives x criteria), weights and criterion senses"""

    decision_matrix: np.ndarray
    weights: np.ndarray
    criterion_sense: Sequence[str]

    def __post_init__(self):
        self.decision_matrix = np.asarray(self.decision_matrix, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.criterion_sense = tuple(self.criterion_sense)
        self.validate()

    def validate(self):
        m = self.decision_matrix
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"decision matrix must be 2-D with at least one cell, got shape {m.shape}")
        if np.isnan(m).any():
            raise ValueError('decision matrix contains NaN')
        if not np.isfinite(m).all():
            raise ValueError('decision matrix must be finite')
        if self.weights.shape != (m.shape[1],):
            raise ValueError(f"need {m.shape[1]} weights, got {self.weights.shape}")
        if (self.weights < 0).any() or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError('weights must be non-negative and sum to 1')
        if len(self.criterion_sense) != m.shape[1] or any(s not in (BENEFIT, COST) for s in self.criterion_sense):
            raise ValueError(f"criterion_sense must list '{BENEFIT}' or '{COST}' per criterion")


def topsis_rank(topsis_input: TopsisInput) -> np.ndarray:
    """
    Closeness coefficient of every alternative to the ideal solution.

    Columns with zero norm normalize to zeros; an alternative equidistant
    from a coincident ideal and anti-ideal gets 0.5.
    """
    matrix = topsis_input.decision_matrix
    norms = np.sqrt((matrix ** 2).sum(axis=0))
    safe_norms = np.where(norms == 0.0, 1.0, norms)
    weighted = np.where(norms == 0.0, 0.0, matrix / safe_norms) * topsis_input.weights

    benefit = np.array([s == BENEFIT for s in topsis_input.criterion_sense])
    ideal = np.where(benefit, weighted.max(axis=0), weighted.min(axis=0))
    anti_ideal = np.where(benefit, weighted.min(axis=0), weighted.max(axis=0))

    s_plus = np.sqrt(((weighted - ideal) ** 2).sum(axis=1))
    s_minus = np.sqrt(((weighted - anti_ideal) ** 2).sum(axis=1))
    total = s_plus + s_minus
    safe_total = np.where(total == 0.0, 1.0, total)
    return np.where(total == 0.0, 0.5, s_minus / safe_total)


TOPSIS_CRITERIA = ('snir', 'prr', 'resource_cost', 'latency')
TOPSIS_SENSES = (BENEFIT, BENEFIT, COST, COST)


@dataclass(frozen=True)
class TopsisConfig:
    weights: Tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)

    def validate(self) -> 'TopsisConfig':
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(TOPSIS_CRITERIA),) or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(
                f"topsis weights must be {len(TOPSIS_CRITERIA)} non-negative values summing to 1",
                errors={'topsis': ['weights must be non-negative and sum to 1']},
            )
        return self


def build_decision_matrix(
    observations: ObservationSnapshot,
    base_latency_ms: Dict[RatKind, float],
) -> pd.DataFrame:
    """
    4 modes x 4 criteria: expected SNIR, expected PRR, resource cost and a
    latency proxy. Redundant takes the better RAT per criterion, division
    the worse one.
    """
    g5, lte = RatKind.ITS_G5, RatKind.LTE_V2X_PC5

    def value(table, rat, neutral):
        v = table.get(rat)
        return neutral if v is None else float(v)

    snir = {rat: value(observations.snir_db, rat, NEUTRAL_SNIR_DB) for rat in (g5, lte)}
    prr = {rat: value(observations.prr, rat, NEUTRAL_PRR) for rat in (g5, lte)}
    latency = {rat: float(base_latency_ms[rat]) for rat in (g5, lte)}

    rows = {
        CommMode.SINGLE_ITS_G5: (snir[g5], prr[g5], 1.0, latency[g5]),
        CommMode.SINGLE_LTE: (snir[lte], prr[lte], 1.0, latency[lte]),
        CommMode.HYBRID_REDUNDANT: (max(snir.values()), max(prr.values()), 2.0, min(latency.values())),
        CommMode.HYBRID_DIVISION: (min(snir.values()), min(prr.values()), 1.0, max(latency.values())),
    }
    return pd.DataFrame.from_dict(
        {mode.name: values for mode, values in rows.items()},
        orient='index',
        columns=list(TOPSIS_CRITERIA),
    )


def topsis_select(
    observations: ObservationSnapshot,
    weights: Sequence[float],
    base_latency_ms: Optional[Dict[RatKind, float]] = None,
) -> CommMode:
    """Mode with the highest closeness; ties go to the lowest action code"""
    if base_latency_ms is None:
        base_latency_ms = {rat: RatParams.defaults_for(rat).base_latency_ms for rat in RatKind}
    matrix = build_decision_matrix(observations, base_latency_ms)
    closeness = topsis_rank(TopsisInput(matrix.to_numpy(), weights, TOPSIS_SENSES))
    return CommMode(int(np.argmax(closeness)))


class TopsisSelector(ModeSelector):
    """MCDM baseline ranking the four modes on the vehicle's own observations"""

    name = 'topsis'

    def __init__(self, config: TopsisConfig, base_latency_ms: Dict[RatKind, float]):
        self.config = config.validate()
        self.base_latency_ms = dict(base_latency_ms)

    def select(self, state: StateVec, snapshot: ObservationSnapshot) -> CommMode:
        return topsis_select(snapshot, self.config.weights, self.base_latency_ms)

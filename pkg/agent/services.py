"""
DRL agent services
State construction, epsilon-greedy selection, the three-part reward,
experience replay and the double deep Q-learning training step.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from Hybridsim.exceptions import ConfigError, TrainingDivergedError
from hybrid.services import AckRecord, CommMode
from nn.services import (
    AdamState,
    MlpParams,
    adam_step,
    backward,
    clip_gradients,
    forward,
    forward_with_cache,
    init_weights,
    mse_loss,
    sync_target,
)
from radio.services import RatKind

logger = logging.getLogger(__name__)

N_ACTIONS = len(CommMode)
STATE_DIM = 6
SNIR_FLOOR_DB = -10.0
SNIR_CEIL_DB = 40.0
NEUTRAL_FEATURE = 0.5

DOUBLE_Q = 'double_q'
MAX_Q = 'max_q'


# ============================================================================
# STATE
# ============================================================================

@dataclass(frozen=True)
class StateVec:
    """Six normalized features observed by the Q-network"""

    snir_g5: float
    snir_lte: float
    prr_g5: float
    prr_lte: float
    latency_req_norm: float
    reliability_req: float

    def as_array(self) -> np.ndarray:
        return np.array([
            self.snir_g5, self.snir_lte, self.prr_g5, self.prr_lte,
            self.latency_req_norm, self.reliability_req,
        ])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'StateVec':
        if len(values) != STATE_DIM:
            raise ValueError(f"state needs {STATE_DIM} features, got {len(values)}")
        return cls(*(float(v) for v in values))


def normalize_snir(snir_db: Optional[float]) -> float:
    if snir_db is None:
        return NEUTRAL_FEATURE
    clamped = min(max(snir_db, SNIR_FLOOR_DB), SNIR_CEIL_DB)
    return (clamped - SNIR_FLOOR_DB) / (SNIR_CEIL_DB - SNIR_FLOOR_DB)


def build_state(
    snir_g5_db: Optional[float],
    snir_lte_db: Optional[float],
    prr_g5: Optional[float],
    prr_lte: Optional[float],
    L_ms: float,
    R: float,
) -> StateVec:
    """
    Normalize raw observations into a StateVec.

    Missing observations (None) map to the neutral value 0.5.
    """
    if not 0 < L_ms <= 100:
        raise ValueError(f"latency requirement must lie in (0, 100] ms, got {L_ms}")
    if not 0 <= R <= 1:
        raise ValueError(f"reliability requirement must lie in [0, 1], got {R}")
    for prr in (prr_g5, prr_lte):
        if prr is not None and not 0 <= prr <= 1:
            raise ValueError(f"PRR must lie in [0, 1], got {prr}")
    return StateVec(
        snir_g5=normalize_snir(snir_g5_db),
        snir_lte=normalize_snir(snir_lte_db),
        prr_g5=NEUTRAL_FEATURE if prr_g5 is None else float(prr_g5),
        prr_lte=NEUTRAL_FEATURE if prr_lte is None else float(prr_lte),
        latency_req_norm=L_ms / 100.0,
        reliability_req=float(R),
    )


@dataclass(frozen=True)
class ObservationSnapshot:
    """Raw per-RAT measurements frozen at one instant of the beacon timeline"""

    snir_db: Mapping[RatKind, Optional[float]]
    prr: Mapping[RatKind, Optional[float]]

    def snir_pair(self) -> Tuple[Optional[float], Optional[float]]:
        return self.snir_db[RatKind.ITS_G5], self.snir_db[RatKind.LTE_V2X_PC5]

    def to_state(self, L_ms: float, R: float) -> StateVec:
        return build_state(
            self.snir_db[RatKind.ITS_G5],
            self.snir_db[RatKind.LTE_V2X_PC5],
            self.prr[RatKind.ITS_G5],
            self.prr[RatKind.LTE_V2X_PC5],
            L_ms,
            R,
        )


class LinkObserver:
    """
    Running per-RAT measurements of one vehicle.

    SNIR is the value of the most recent frame decoded on the RAT; PRR is
    the success ratio of the vehicle's own segments on the RAT over a
    sliding window of link outcomes learned from acknowledgments.
    """

    def __init__(self, prr_window: int = 50):
        self.snir_db: Dict[RatKind, Optional[float]] = {rat: None for rat in RatKind}
        self._outcomes = {rat: deque(maxlen=prr_window) for rat in RatKind}

    def record_reception(self, rat: RatKind, snir_db: float):
        self.snir_db[rat] = float(snir_db)

    def record_link_outcome(self, rat: RatKind, delivered: bool):
        self._outcomes[rat].append(1.0 if delivered else 0.0)

    def prr(self, rat: RatKind) -> Optional[float]:
        window = self._outcomes[rat]
        return sum(window) / len(window) if window else None

    def snapshot(self) -> ObservationSnapshot:
        return ObservationSnapshot(
            snir_db=dict(self.snir_db),
            prr={rat: self.prr(rat) for rat in RatKind},
        )


# ============================================================================
# CONFIGURATION AND EXPERIENCE
# ============================================================================

@dataclass(frozen=True)
class AgentConfig:
    """Hyperparameters of one DRL agent"""

    gamma: float = 0.99
    learning_rate: float = 0.0005
    epsilon_start: float = 1.0
    epsilon_decrement: float = 1e-5
    epsilon_min: float = 0.01
    batch_size: int = 64
    buffer_capacity: int = 1_000_000
    target_sync_period: int = 1000
    alpha: float = 1.0
    beta: float = 1.0
    duplicate_score: float = 0.5
    target_estimator: str = DOUBLE_Q
    sr_target: int = 100
    hidden_layers: Tuple[int, ...] = (256, 256)
    lq_deadband_db: float = 0.5
    prr_window: int = 50
    normalize_reception: bool = True
    shared_parameters: bool = False
    max_grad_norm: Optional[float] = None

    def validate(self) -> 'AgentConfig':
        problems = []
        if not 0 <= self.gamma < 1:
            problems.append('gamma must lie in [0, 1)')
        if self.learning_rate <= 0:
            problems.append('learning_rate must be > 0')
        if not 0 <= self.epsilon_min <= self.epsilon_start <= 1:
            problems.append('need 0 <= epsilon_min <= epsilon_start <= 1')
        if self.epsilon_decrement < 0:
            problems.append('epsilon_decrement must be >= 0')
        if self.batch_size < 1:
            problems.append('batch_size must be >= 1')
        if self.buffer_capacity < self.batch_size:
            problems.append('buffer_capacity must be >= batch_size')
        if self.target_sync_period < 1:
            problems.append('target_sync_period must be >= 1')
        if not 0 <= self.duplicate_score <= 1:
            problems.append('duplicate_score must lie in [0, 1]')
        if self.target_estimator not in (DOUBLE_Q, MAX_Q):
            problems.append(f"target_estimator must be '{DOUBLE_Q}' or '{MAX_Q}'")
        if self.sr_target < 1:
            problems.append('sr_target must be >= 1')
        if not self.hidden_layers or any(h < 1 for h in self.hidden_layers):
            problems.append('hidden_layers must be positive widths')
        if self.lq_deadband_db < 0:
            problems.append('lq_deadband_db must be >= 0')
        if self.prr_window < 1:
            problems.append('prr_window must be >= 1')
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            problems.append('max_grad_norm must be > 0 when set')
        if problems:
            raise ConfigError('; '.join(problems), errors={'agent': problems})
        return self

    @property
    def layer_dims(self) -> Tuple[int, ...]:
        return (STATE_DIM,) + tuple(self.hidden_layers) + (N_ACTIONS,)


@dataclass(frozen=True)
class Transition:
    s: StateVec
    a: CommMode
    r: float
    s_next: StateVec
    terminal: bool

    def __post_init__(self):
        if not math.isfinite(self.r):
            raise ValueError(f"reward must be finite, got {self.r}")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return self.actions.shape[0]


class ReplayBuffer:
    """
    Bounded ring of transitions with uniform sampling.

    Storage grows geometrically up to capacity; once full, each insert
    overwrites the oldest transition.
    """

    def __init__(self, capacity: int, initial_allocation: int = 1024):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.size = 0
        self.cursor = 0
        self._allocate(min(self.capacity, initial_allocation))

    def _allocate(self, rows: int):
        self.states = np.zeros((rows, STATE_DIM))
        self.next_states = np.zeros((rows, STATE_DIM))
        self.actions = np.zeros(rows, dtype=np.int64)
        self.rewards = np.zeros(rows)
        self.terminals = np.zeros(rows, dtype=bool)

    def _grow(self):
        rows = min(self.capacity, 2 * self.states.shape[0])
        old = (self.states, self.next_states, self.actions, self.rewards, self.terminals)
        self._allocate(rows)
        n = old[0].shape[0]
        self.states[:n], self.next_states[:n], self.actions[:n], self.rewards[:n], self.terminals[:n] = old

    def __len__(self):
        return self.size

    def push(self, t: Transition):
        if self.size == self.states.shape[0] and self.size < self.capacity:
            self._grow()
        i = self.cursor
        self.states[i] = t.s.as_array()
        self.next_states[i] = t.s_next.as_array()
        self.actions[i] = int(t.a)
        self.rewards[i] = t.r
        self.terminals[i] = t.terminal
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} from {self.size} transitions")
        return rng.choice(self.size, size=batch_size, replace=False)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform mini-batch without replacement"""
        idx = self.sample_indices(batch_size, rng)
        return Batch(
            states=self.states[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            next_states=self.next_states[idx],
            terminals=self.terminals[idx],
        )

    def transition(self, index: int) -> Transition:
        return Transition(
            s=StateVec.from_array(self.states[index]),
            a=CommMode(int(self.actions[index])),
            r=float(self.rewards[index]),
            s_next=StateVec.from_array(self.next_states[index]),
            terminal=bool(self.terminals[index]),
        )

    def contents(self) -> List[Transition]:
        """Stored transitions, oldest first"""
        start = self.cursor if self.size == self.capacity else 0
        return [self.transition((start + k) % self.capacity) for k in range(self.size)]


def store_transition(buf: ReplayBuffer, t: Transition) -> None:
    buf.push(t)


# ============================================================================
# POLICY AND REWARD
# ============================================================================

def select_action(s: StateVec, epsilon: float, behavior_net: MlpParams, rng: np.random.Generator) -> CommMode:
    """
    Epsilon-greedy choice; greedy ties go to the lowest action code.
    """
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return CommMode(int(rng.integers(N_ACTIONS)))
    q = forward(behavior_net, s.as_array())
    if not np.isfinite(q).all():
        raise TrainingDivergedError(f"non-finite Q-values {q}")
    return CommMode(int(np.argmax(q)))


def epsilon_decay(epsilon: float, decrement: float = 1e-5, minimum: float = 0.01) -> float:
    return max(epsilon - decrement, minimum)


def reception_score(report: int, theta: float) -> float:
    if report == 1:
        return 1.0
    if report == 2:
        return theta
    return 0.0


def compute_reward(
    reports: Mapping[int, int],
    ps: int,
    lq: int,
    alpha: float = 1.0,
    beta: float = 1.0,
    theta: float = 0.5,
    normalize: bool = True,
) -> float:
    """
    Three-part reward: reception evaluation, performance satisfaction and
    link quality, each weighted by one half.
    """
    n = len(reports)
    scores = sum(reception_score(report, theta) for report in reports.values())
    if n == 0:
        part1 = 0.0
    else:
        part1 = 0.5 * (scores / n if normalize else scores)
    reward = part1 + 0.5 * alpha * ps + 0.5 * beta * lq

    ceiling = 0.5 * max(1.0, theta) * (1 if normalize else max(n, 1)) + 0.5 * (abs(alpha) + abs(beta))
    floor = -0.5 * (abs(alpha) + abs(beta))
    assert math.isfinite(reward) and floor - 1e-12 <= reward <= ceiling + 1e-12, (
        f"reward {reward} outside [{floor}, {ceiling}]"
    )
    return reward


def performance_satisfaction(
    acks: Iterable[AckRecord],
    expected_neighbors: Sequence[int],
    L_ms: float,
    R: float,
) -> int:
    """
    +1 when the share of expected neighbors that received the message is at
    least R and every first copy arrived within L_ms, else -1.
    """
    expected = set(expected_neighbors)
    received = {ack.receiver: ack for ack in acks if ack.receiver in expected}
    share = len(received) / len(expected) if expected else 1.0
    on_time = all(ack.first_copy_latency_ms <= L_ms for ack in received.values())
    return 1 if share >= R and on_time else -1


def link_quality_delta(
    snir_now: Tuple[Optional[float], Optional[float]],
    snir_prev_sprime: Optional[Tuple[Optional[float], Optional[float]]],
    deadband: float = 0.5,
) -> int:
    """Sign of the mean per-RAT SNIR change, with a dead band around zero"""
    if deadband < 0:
        raise ValueError(f"deadband must be >= 0, got {deadband}")
    if snir_prev_sprime is None or any(v is None for v in (*snir_now, *snir_prev_sprime)):
        return 0
    d = float(np.mean([now - prev for now, prev in zip(snir_now, snir_prev_sprime)]))
    if d > deadband:
        return 1
    if d < -deadband:
        return -1
    return 0


# ============================================================================
# TRAINING
# ============================================================================

def bootstrap_values(batch: Batch, behavior_net: MlpParams, target_net: MlpParams, estimator: str) -> np.ndarray:
    """Target-network value of the next state under the chosen estimator"""
    q_next_target = forward(target_net, batch.next_states)
    rows = np.arange(len(batch))
    if estimator == MAX_Q:
        return q_next_target.max(axis=1)
    greedy = np.argmax(forward(behavior_net, batch.next_states), axis=1)
    return q_next_target[rows, greedy]


def td_targets(batch: Batch, behavior_net: MlpParams, target_net: MlpParams,
               gamma: float, estimator: str = DOUBLE_Q) -> np.ndarray:
    """y = r for terminal transitions, else r + gamma * bootstrap"""
    bootstrap = bootstrap_values(batch, behavior_net, target_net, estimator)
    if not np.isfinite(bootstrap).all():
        raise TrainingDivergedError('non-finite target-network Q-values')
    return batch.rewards + gamma * np.where(batch.terminals, 0.0, bootstrap)


def train_step(
    buf: ReplayBuffer,
    behavior_net: MlpParams,
    target_net: MlpParams,
    adam: AdamState,
    config: AgentConfig,
    rng: np.random.Generator,
) -> Optional[float]:
    """
    One mini-batch update of the behavior network.

    Returns None while the buffer holds fewer than batch_size transitions.
    The target network is hard-synced every target_sync_period updates.
    """
    if len(buf) < config.batch_size:
        return None

    batch = buf.sample(config.batch_size, rng)
    y = td_targets(batch, behavior_net, target_net, config.gamma, config.target_estimator)

    q, cache = forward_with_cache(behavior_net, batch.states)
    if not np.isfinite(q).all():
        raise TrainingDivergedError('non-finite behavior-network Q-values')
    rows = np.arange(len(batch))
    loss, grad_pred = mse_loss(q[rows, batch.actions], y, config.batch_size)

    upstream = np.zeros_like(q)
    upstream[rows, batch.actions] = grad_pred
    grads = backward(behavior_net, batch.states, upstream, cache=cache)
    if config.max_grad_norm is not None:
        clip_gradients(grads, config.max_grad_norm)
    adam_step(behavior_net, grads, adam, config.learning_rate)

    if adam.t % config.target_sync_period == 0:
        sync_target(behavior_net, target_net)
        logger.debug(f"Target network synced after {adam.t} updates")
    return loss


# ============================================================================
# SELECTORS
# ============================================================================

class ModeSelector:
    """
    Base class of everything that picks a communication mode each beacon.
    """

    name = 'selector'
    learns = False

    def select(self, state: StateVec, snapshot: ObservationSnapshot) -> CommMode:
        raise NotImplementedError

    def observe(self, transition: Transition) -> Optional[float]:
        """Feed back one finished round; learning selectors train here"""
        return None

    @property
    def epsilon(self) -> float:
        return 0.0


class DQNAgent(ModeSelector):
    """
    Double deep Q-learning agent of one platoon vehicle.

    Owns its behavior and target networks, Adam state, replay buffer,
    exploration rate and random stream. With shared_with set, the networks,
    optimizer and buffer belong to another agent: this one keeps its own
    exploration rate and random stream, feeds the shared buffer and leaves
    training to the owner.
    """

    name = 'drl'
    learns = True

    def __init__(self, config: AgentConfig, rng: np.random.Generator,
                 behavior: Optional[MlpParams] = None, shared_with: Optional['DQNAgent'] = None):
        self.config = config.validate()
        self.rng = rng
        self.owns_parameters = shared_with is None
        if shared_with is not None:
            self.behavior = shared_with.behavior
            self.target = shared_with.target
            self.adam = shared_with.adam
            self.buffer = shared_with.buffer
        else:
            self.behavior = behavior if behavior is not None else init_weights(config.layer_dims, rng)
            self.target = self.behavior.copy()
            self.adam = AdamState.create(self.behavior)
            self.buffer = ReplayBuffer(config.buffer_capacity)
        self._epsilon = config.epsilon_start
        self.training = True
        self.last_loss: Optional[float] = None

    @property
    def epsilon(self) -> float:
        return self._epsilon

    def freeze(self):
        """Greedy, non-learning evaluation mode"""
        self.training = False
        self._epsilon = 0.0
        self.learns = False

    def select(self, state: StateVec, snapshot: ObservationSnapshot) -> CommMode:
        action = select_action(state, self._epsilon, self.behavior, self.rng)
        if self.training:
            self._epsilon = epsilon_decay(self._epsilon, self.config.epsilon_decrement, self.config.epsilon_min)
        return action

    def q_values(self, state: StateVec) -> np.ndarray:
        return forward(self.behavior, state.as_array())

    def observe(self, transition: Transition) -> Optional[float]:
        if not self.training:
            return None
        store_transition(self.buffer, transition)
        if not self.owns_parameters:
            return None
        loss = train_step(self.buffer, self.behavior, self.target, self.adam, self.config, self.rng)
        if loss is not None:
            self.last_loss = loss
        return loss

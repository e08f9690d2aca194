"""
Discrete-event simulation engine
Drives beacons, deliveries, acknowledgments and mobility for one platoon,
closes every beacon round with a reward and a stored transition, and
collects per-game statistics for training and evaluation runs.
"""

import heapq
import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from Hybridsim.exceptions import ConfigError, GameAbortedError, SimulationFault
from agent.services import (
    AgentConfig,
    DQNAgent,
    LinkObserver,
    ModeSelector,
    ObservationSnapshot,
    StateVec,
    Transition,
    compute_reward,
    link_quality_delta,
    performance_satisfaction,
)
from baselines.services import StaticPolicy, StaticSelector, TopsisConfig, TopsisSelector
from hybrid.services import (
    ACK_COHORT_ALL,
    AckRecord,
    CommMode,
    HybridConfig,
    Message,
    ReceptionVector,
    Transmission,
    complete_reports,
    duplicated_message_stats,
    finalize_round,
    prr_game,
    record_ack,
    transmit,
)
from nn.weights import load_weights
from radio.services import LinkSample, RadioChannel, RatKind, RatParams
from scenario.services import (
    ScenarioConfig,
    ScenarioState,
    background_in_range,
    init_scenario,
    neighbor_ids,
    step_mobility,
)

logger = logging.getLogger(__name__)

OVERRIDE_NONE = 'none'
OVERRIDE_LOSSLESS = 'lossless'
OVERRIDE_BLACKOUT = 'blackout'

SELECTOR_DRL = 'drl'
SELECTOR_TOPSIS = 'topsis'
SELECTORS = (SELECTOR_DRL,) + tuple(p.value for p in StaticPolicy) + (SELECTOR_TOPSIS,)

# spawn_key roots of the run seed tree
_AGENT_STREAMS = 0
_TRAINING_GAMES = 1
_EVALUATION_GAMES = 2


@dataclass(frozen=True)
class EngineConfig:
    """Timing, requirements and guards of the event loop"""

    beacon_period_ms: float = 100.0
    mobility_tick_ms: float = 100.0
    max_rounds_factor: int = 100
    latency_req_ms: float = 100.0
    reliability_req: float = 0.95
    channel_override: str = OVERRIDE_NONE

    def validate(self) -> 'EngineConfig':
        problems = []
        if self.beacon_period_ms != 100.0:
            # Acks are only guaranteed to beat the next beacon at a 100 ms cadence.
            problems.append('beacon_period_ms is fixed at 100')
        if self.mobility_tick_ms <= 0:
            problems.append('mobility_tick_ms must be > 0')
        if self.max_rounds_factor < 1:
            problems.append('max_rounds_factor must be >= 1')
        if not 0 < self.latency_req_ms <= 100:
            problems.append('latency_req_ms must lie in (0, 100]')
        if not 0 <= self.reliability_req <= 1:
            problems.append('reliability_req must lie in [0, 1]')
        if self.channel_override not in (OVERRIDE_NONE, OVERRIDE_LOSSLESS, OVERRIDE_BLACKOUT):
            problems.append(f"channel_override must be one of {OVERRIDE_NONE}, {OVERRIDE_LOSSLESS}, {OVERRIDE_BLACKOUT}")
        if problems:
            raise ConfigError('; '.join(problems), errors={'engine': problems})
        return self


@dataclass(frozen=True)
class SimulationSetup:
    """Everything a game needs besides the selectors and the seed"""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    radio: Dict[RatKind, RatParams] = field(
        default_factory=lambda: {rat: RatParams.defaults_for(rat) for rat in RatKind}
    )
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    topsis: TopsisConfig = field(default_factory=TopsisConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)

    def validate(self) -> 'SimulationSetup':
        self.scenario.validate()
        for rat, params in self.radio.items():
            params.validate(f'radio.{rat.label}')
        self.hybrid.validate()
        self.agent.validate()
        self.topsis.validate()
        self.engine.validate()
        return self

    @property
    def max_rounds(self) -> int:
        return self.engine.max_rounds_factor * self.agent.sr_target


# ============================================================================
# EVENTS
# ============================================================================

class EventKind(Enum):
    BEACON_DUE = 'beacon_due'
    DELIVERY = 'delivery'
    ACK = 'ack'
    MOBILITY_TICK = 'mobility_tick'


@dataclass(order=True)
class Event:
    time: float
    sequence: int
    kind: EventKind = field(compare=False)
    payload: tuple = field(compare=False, default=())


class EventQueue:
    """Min-heap of events ordered by (time, insertion sequence)"""

    def __init__(self):
        self._heap: List[Event] = []
        self._sequence = 0
        self.now = 0.0

    def __len__(self):
        return len(self._heap)

    def push(self, at: float, kind: EventKind, *payload) -> Event:
        if not math.isfinite(at) or at < self.now:
            raise SimulationFault(f"{kind.value} scheduled at {at} ms before current time {self.now} ms")
        event = Event(at, self._sequence, kind, payload)
        self._sequence += 1
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> Event:
        event = heapq.heappop(self._heap)
        self.now = event.time
        return event


# ============================================================================
# GAME STATISTICS
# ============================================================================

@dataclass
class GameStats:
    """Per-game metrics of every platoon agent"""

    game: int
    sr_target: int
    n_sent: List[int]
    sr: List[int]
    prr: List[float]
    cumulative_reward: List[float]
    mean_reward: List[float]
    mode_counts: List[List[int]]
    epsilon: List[float]
    delivery_ratio: List[float]
    mean_loss: List[float]
    dup_pct: float
    completed: bool = True
    wall_time_s: float = 0.0

    @property
    def n_agents(self) -> int:
        return len(self.n_sent)

    @property
    def mean_prr(self) -> float:
        return float(np.mean(self.prr))

    @property
    def mean_delivery_ratio(self) -> float:
        return float(np.mean(self.delivery_ratio))

    @property
    def total_mode_counts(self) -> List[int]:
        return [int(sum(counts[m] for counts in self.mode_counts)) for m in range(len(CommMode))]

    @property
    def redundant_pct(self) -> float:
        totals = self.total_mode_counts
        sent = sum(totals)
        return 100.0 * totals[CommMode.HYBRID_REDUNDANT] / sent if sent else 0.0

    def agent_rows(self) -> List[dict]:
        rows = []
        for k in range(self.n_agents):
            row = {
                'game': self.game,
                'agent': str(k),
                'n_sent': self.n_sent[k],
                'sr': self.sr[k],
                'prr': self.prr[k],
                'mean_reward': self.mean_reward[k],
                'eps': self.epsilon[k],
            }
            row.update({f'mode{m}': self.mode_counts[k][m] for m in range(len(CommMode))})
            row.update({
                'dup_pct': self.dup_pct,
                'delivery_ratio': self.delivery_ratio[k],
                'mean_loss': self.mean_loss[k],
                'completed': int(self.completed),
            })
            rows.append(row)
        return rows

    def summary_row(self) -> dict:
        """Platoon-level row: rates averaged over agents, counts summed"""
        row = {
            'game': self.game,
            'agent': 'mean',
            'n_sent': int(sum(self.n_sent)),
            'sr': int(sum(self.sr)),
            'prr': self.mean_prr,
            'mean_reward': float(np.mean(self.mean_reward)),
            'eps': float(np.mean(self.epsilon)),
        }
        row.update({f'mode{m}': c for m, c in enumerate(self.total_mode_counts)})
        row.update({
            'dup_pct': self.dup_pct,
            'delivery_ratio': self.mean_delivery_ratio,
            'mean_loss': float(np.nanmean(self.mean_loss)) if not np.all(np.isnan(self.mean_loss)) else float('nan'),
            'completed': int(self.completed),
        })
        return row


# ============================================================================
# PLATOON NODES
# ============================================================================

@dataclass
class PendingRound:
    """A sent beacon awaiting its round boundary"""

    message: Message
    state: StateVec
    expected_neighbors: List[int]
    sprime: Optional[ObservationSnapshot] = None


@dataclass
class PlatoonNode:
    """Runtime state of one platoon vehicle during a game"""

    index: int
    vehicle_id: int
    selector: ModeSelector
    observer: LinkObserver
    phase_ms: float
    vector: ReceptionVector = field(default_factory=ReceptionVector)
    pending: Optional[PendingRound] = None
    current_rats: Set[RatKind] = field(default_factory=set)
    prev_sprime_snir: Optional[Tuple[Optional[float], Optional[float]]] = None
    sequence: int = 0
    n_sent: int = 0
    rounds_all_delivered: int = 0
    mode_counts: List[int] = field(default_factory=lambda: [0] * len(CommMode))
    rewards: List[float] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    done: bool = False


@dataclass
class ReceptionProgress:
    """Receiver-side record of the segments of one message"""

    latencies: Dict[RatKind, float] = field(default_factory=dict)


class GameSimulation:
    """
    One game: the platoon beacons until every agent's SR counter reaches
    the target, or the round cap aborts the game.
    """

    def __init__(
        self,
        setup: SimulationSetup,
        selectors: Sequence[ModeSelector],
        game_index: int,
        seed: int,
        stream_root: int = _TRAINING_GAMES,
    ):
        self.setup = setup
        self.game_index = game_index
        cfg = setup.scenario
        if len(selectors) != cfg.platoon_size:
            raise ConfigError(f"need {cfg.platoon_size} selectors, got {len(selectors)}")

        game_seq = np.random.SeedSequence(entropy=seed, spawn_key=(stream_root, game_index))
        scenario_seq, channel_seq, phase_seq = game_seq.spawn(3)
        self.rng = np.random.default_rng(channel_seq)
        phase_rng = np.random.default_rng(phase_seq)

        scenario_seed = int(scenario_seq.generate_state(1)[0])
        self.scenario: ScenarioState = init_scenario(replace(cfg, seed=scenario_seed))
        self.channel = RadioChannel(setup.radio)
        self.queue = EventQueue()
        self.nodes = [
            PlatoonNode(
                index=k,
                vehicle_id=vehicle_id,
                selector=selectors[k],
                observer=LinkObserver(setup.agent.prr_window),
                phase_ms=float(phase_rng.uniform(0.0, setup.engine.beacon_period_ms)),
            )
            for k, vehicle_id in enumerate(self.scenario.platoon_ids)
        ]
        self.node_by_vehicle = {node.vehicle_id: node for node in self.nodes}
        self.receptions: Dict[Tuple[int, int], ReceptionProgress] = {}
        self.finalized_acks: List[AckRecord] = []
        self._message_ids = 0

    # ------------------------------------------------------------------ loop

    def run(self) -> GameStats:
        started = time.perf_counter()
        for node in self.nodes:
            node.vector.reset()
            self.queue.push(node.phase_ms, EventKind.BEACON_DUE, node)
        self.queue.push(self.setup.engine.mobility_tick_ms, EventKind.MOBILITY_TICK)

        handlers = {
            EventKind.BEACON_DUE: self._on_beacon_due,
            EventKind.DELIVERY: self._on_delivery,
            EventKind.ACK: self._on_ack,
            EventKind.MOBILITY_TICK: self._on_mobility_tick,
        }
        while not all(node.done for node in self.nodes):
            if not self.queue:
                raise SimulationFault(f"event queue empty in game {self.game_index} with unfinished agents")
            event = self.queue.pop()
            handlers[event.kind](*event.payload)
            capped = [n for n in self.nodes if not n.done and n.n_sent >= self.setup.max_rounds and n.pending is None]
            if capped:
                stats = self._stats(completed=False, wall_time=time.perf_counter() - started)
                message = (
                    f"Game {self.game_index} aborted: agent(s) {[n.index for n in capped]} sent "
                    f"{self.setup.max_rounds} messages without reaching SR {self.setup.agent.sr_target} "
                    f"(SR={[n.vector.sr_counter for n in self.nodes]}, "
                    f"modes={[n.mode_counts for n in self.nodes]})"
                )
                logger.warning(message)
                raise GameAbortedError(message, stats)

        return self._stats(completed=True, wall_time=time.perf_counter() - started)

    # -------------------------------------------------------------- handlers

    def _on_mobility_tick(self):
        self.scenario = step_mobility(self.scenario, self.setup.engine.mobility_tick_ms / 1000.0)
        self.queue.push(self.queue.now + self.setup.engine.mobility_tick_ms, EventKind.MOBILITY_TICK)

    def _on_beacon_due(self, node: PlatoonNode):
        now = self.queue.now
        if node.pending is not None:
            self._close_round(node)
        if node.done or node.n_sent >= self.setup.max_rounds:
            return

        snapshot = node.observer.snapshot()
        state = snapshot.to_state(self.setup.engine.latency_req_ms, self.setup.engine.reliability_req)
        mode = CommMode(node.selector.select(state, snapshot))

        message = Message.create(
            id=self._message_ids,
            sender=node.vehicle_id,
            sequence=node.sequence,
            mode=mode,
            send_time=now,
            payload_bytes=self.setup.hybrid.payload_bytes,
        )
        self._message_ids += 1
        node.sequence += 1
        node.n_sent += 1
        node.mode_counts[mode] += 1

        transmissions = transmit(message)
        node.current_rats = {t.rat for t in transmissions}
        expected = self._expected_neighbors(node.vehicle_id)
        node.pending = PendingRound(message=message, state=state, expected_neighbors=expected)

        for transmission in transmissions:
            for receiver in expected:
                sample = self._sample_link(transmission, receiver)
                if sample.delivered:
                    self.queue.push(now + sample.latency_ms, EventKind.DELIVERY, transmission, receiver, sample)

        self.queue.push(now + self.setup.engine.beacon_period_ms, EventKind.BEACON_DUE, node)

    def _on_delivery(self, transmission: Transmission, receiver: int, sample: LinkSample):
        message = transmission.message
        receiver_node = self.node_by_vehicle.get(receiver)
        if receiver_node is not None:
            receiver_node.observer.record_reception(transmission.rat, sample.snir_db)
            pending = receiver_node.pending
            if pending is not None and pending.sprime is None and self.queue.now > pending.message.send_time:
                pending.sprime = receiver_node.observer.snapshot()

        progress = self.receptions.setdefault((receiver, message.id), ReceptionProgress())
        progress.latencies[transmission.rat] = sample.latency_ms

        if message.mode is CommMode.HYBRID_DIVISION:
            if len(progress.latencies) < len(message.segments):
                return
            copies, first_latency = 1, max(progress.latencies.values())
        else:
            copies, first_latency = len(progress.latencies), min(progress.latencies.values())

        ack = AckRecord(
            receiver=receiver,
            message_id=message.id,
            copies=copies,
            first_copy_latency_ms=first_latency,
            rats=frozenset(progress.latencies),
        )
        if self.setup.hybrid.ack_loss_probability > 0 and self.rng.random() < self.setup.hybrid.ack_loss_probability:
            return
        sender = self.node_by_vehicle[message.sender]
        self.queue.push(self.queue.now + self.setup.hybrid.ack_latency_ms, EventKind.ACK, ack, sender)

    def _on_ack(self, ack: AckRecord, sender: PlatoonNode):
        pending = sender.pending
        if pending is None or pending.message.id != ack.message_id:
            raise SimulationFault(
                f"ack for message {ack.message_id} reached vehicle {sender.vehicle_id} after its round closed"
            )
        record_ack(sender.vector, ack, pending.message.mode)

    # ----------------------------------------------------------------- round

    def _close_round(self, node: PlatoonNode):
        """Reward, SR bookkeeping and the stored transition at a beacon boundary"""
        pending = node.pending
        agent_cfg = self.setup.agent
        engine_cfg = self.setup.engine
        expected = pending.expected_neighbors
        acks = list(node.vector.acks.values())
        reports = complete_reports(node.vector, expected)

        for rat, _ in pending.message.segments:
            for neighbor in expected:
                ack = node.vector.acks.get(neighbor)
                node.observer.record_link_outcome(rat, ack is not None and rat in ack.rats)

        ps = performance_satisfaction(acks, expected, engine_cfg.latency_req_ms, engine_cfg.reliability_req)
        sprime = pending.sprime or node.observer.snapshot()
        lq = link_quality_delta(sprime.snir_pair(), node.prev_sprime_snir, agent_cfg.lq_deadband_db)
        node.prev_sprime_snir = sprime.snir_pair()
        reward = compute_reward(
            reports, ps, lq,
            alpha=agent_cfg.alpha,
            beta=agent_cfg.beta,
            theta=agent_cfg.duplicate_score,
            normalize=agent_cfg.normalize_reception,
        )

        if all(value >= 1 for value in reports.values()):
            node.rounds_all_delivered += 1
        node.vector, perfect = finalize_round(node.vector, expected)
        terminal = node.vector.sr_counter >= agent_cfg.sr_target

        s_next = node.observer.snapshot().to_state(engine_cfg.latency_req_ms, engine_cfg.reliability_req)
        transition = Transition(s=pending.state, a=pending.message.mode, r=reward, s_next=s_next, terminal=terminal)
        loss = node.selector.observe(transition)
        if loss is not None:
            node.losses.append(loss)
        node.rewards.append(reward)
        self.finalized_acks.extend(acks)
        for neighbor in expected:
            self.receptions.pop((neighbor, pending.message.id), None)

        logger.debug(
            f"game={self.game_index} agent={node.index} mode={pending.message.mode.name} "
            f"reports={reports} ps={ps} lq={lq} reward={reward:.3f} perfect={perfect}"
        )

        node.pending = None
        if terminal:
            node.done = True
            node.current_rats = set()

    # ---------------------------------------------------------------- radio

    def _expected_neighbors(self, vehicle_id: int) -> List[int]:
        in_range = neighbor_ids(self.scenario, vehicle_id, self.scenario.config.comm_range)
        if self.setup.hybrid.ack_cohort == ACK_COHORT_ALL:
            return in_range
        return [v for v in in_range if self.scenario.is_platoon[v]]

    def _sample_link(self, transmission: Transmission, receiver: int) -> LinkSample:
        rat = transmission.rat
        sender = transmission.message.sender
        positions = self.scenario.positions
        receiver_position = positions[receiver]

        platoon_on_rat = [
            n.vehicle_id for n in self.nodes
            if rat in n.current_rats and n.vehicle_id not in (sender, receiver)
            and abs(positions[n.vehicle_id] - receiver_position) <= self.scenario.config.comm_range
        ]
        background = background_in_range(self.scenario, receiver_position, self.scenario.config.comm_range, int(rat))
        candidates = np.concatenate([np.asarray(platoon_on_rat, dtype=int), background[background != receiver]])

        params = self.setup.radio[rat]
        active = int(self.rng.binomial(candidates.size, params.activity_factor)) if candidates.size else 0
        interferers = self.rng.choice(candidates, size=active, replace=False) if active else np.empty(0, dtype=int)
        interferer_distances = np.abs(positions[interferers] - receiver_position)

        sample = self.channel.sample_link(
            rat,
            distance=float(abs(positions[sender] - receiver_position)),
            interferer_distances=interferer_distances,
            active_transmitters=active,
            payload_fraction=transmission.payload_fraction,
            rng=self.rng,
        )
        override = self.setup.engine.channel_override
        if override == OVERRIDE_LOSSLESS:
            return LinkSample(sample.snir_db, True, params.base_latency_ms, False, sample.rx_power_dbm)
        if override == OVERRIDE_BLACKOUT:
            return LinkSample(sample.snir_db, False, sample.latency_ms, sample.collided, sample.rx_power_dbm)
        return sample

    # ----------------------------------------------------------------- stats

    def _stats(self, completed: bool, wall_time: float) -> GameStats:
        target = self.setup.agent.sr_target
        prr, delivery = [], []
        for node in self.nodes:
            sr = node.vector.sr_counter
            if node.done:
                prr.append(prr_game(target, node.n_sent))
            else:
                prr.append(sr / node.n_sent if node.n_sent else 0.0)
            closed = len(node.rewards)
            delivery.append(node.rounds_all_delivered / closed if closed else 0.0)
        return GameStats(
            game=self.game_index,
            sr_target=target,
            n_sent=[n.n_sent for n in self.nodes],
            sr=[n.vector.sr_counter for n in self.nodes],
            prr=prr,
            cumulative_reward=[float(sum(n.rewards)) for n in self.nodes],
            mean_reward=[float(np.mean(n.rewards)) if n.rewards else 0.0 for n in self.nodes],
            mode_counts=[list(n.mode_counts) for n in self.nodes],
            epsilon=[float(n.selector.epsilon) for n in self.nodes],
            delivery_ratio=delivery,
            mean_loss=[float(np.mean(n.losses)) if n.losses else float('nan') for n in self.nodes],
            dup_pct=duplicated_message_stats(self.finalized_acks),
            completed=completed,
            wall_time_s=wall_time,
        )


# ============================================================================
# RUNS
# ============================================================================

def run_game(
    setup: SimulationSetup,
    selectors: Sequence[ModeSelector],
    game_index: int = 0,
    seed: int = 0,
    stream_root: int = _TRAINING_GAMES,
) -> GameStats:
    """
    Play one game.

    Raises:
        GameAbortedError: an agent hit the round cap; the error carries the partial stats
        SimulationFault: the event loop ran dry
    """
    return GameSimulation(setup, selectors, game_index, seed, stream_root).run()


def agent_rngs(seed: int, count: int) -> List[np.random.Generator]:
    root = np.random.SeedSequence(entropy=seed, spawn_key=(_AGENT_STREAMS,))
    return [np.random.default_rng(child) for child in root.spawn(count)]


def build_selectors(
    setup: SimulationSetup,
    selector: str,
    seed: int,
    weights_dir: Optional[Path] = None,
) -> List[ModeSelector]:
    """
    One selector per platoon vehicle.

    For 'drl' fresh agents are created, or frozen agents loaded from
    weights-agent<k>.bin when weights_dir is given.
    """
    n = setup.scenario.platoon_size
    if selector == SELECTOR_DRL:
        rngs = agent_rngs(seed, n)
        if weights_dir is not None:
            agents = []
            for k in range(n):
                net = load_weights(Path(weights_dir) / f'weights-agent{k}.bin')
                if net.layer_dims != setup.agent.layer_dims:
                    raise ConfigError(
                        f"weights-agent{k}.bin has dims {net.layer_dims}, agent config expects {setup.agent.layer_dims}"
                    )
                agent = DQNAgent(setup.agent, rngs[k], behavior=net)
                agent.freeze()
                agents.append(agent)
            return agents
        if setup.agent.shared_parameters:
            owner = DQNAgent(setup.agent, rngs[0])
            return [owner] + [DQNAgent(setup.agent, rngs[k], shared_with=owner) for k in range(1, n)]
        return [DQNAgent(setup.agent, rngs[k]) for k in range(n)]
    if selector == SELECTOR_TOPSIS:
        latency = {rat: params.base_latency_ms for rat, params in setup.radio.items()}
        return [TopsisSelector(setup.topsis, latency) for _ in range(n)]
    try:
        policy = StaticPolicy(selector)
    except ValueError:
        raise ConfigError(f"unknown selector '{selector}'; choose one of {', '.join(SELECTORS)}")
    return [StaticSelector(policy) for _ in range(n)]


def run_training(
    setup: SimulationSetup,
    selectors: Sequence[ModeSelector],
    games: int,
    seed: int,
    on_game: Optional[Callable[[GameStats], None]] = None,
) -> List[GameStats]:
    """
    Play consecutive games with persistent agents, buffers and epsilon.

    on_game is invoked after every game (incremental output); aborted
    games are recorded with completed = False and training continues.
    """
    series = []
    for game in range(games):
        try:
            stats = run_game(setup, selectors, game_index=game, seed=seed)
        except GameAbortedError as e:
            stats = e.stats
        series.append(stats)
        logger.info(
            f"Game {game + 1}/{games}: PRR={stats.mean_prr:.3f} "
            f"reward={np.mean(stats.mean_reward):.3f} eps={np.mean(stats.epsilon):.4f} "
            f"redundant={stats.redundant_pct:.1f}% completed={stats.completed}"
        )
        if on_game is not None:
            on_game(stats)
    return series


@dataclass
class EvaluationSummary:
    """Aggregate of frozen-policy evaluation games"""

    selector: str
    games: List[GameStats]

    @property
    def prr_values(self) -> np.ndarray:
        return np.array([g.mean_prr for g in self.games])

    @property
    def prr_mean(self) -> float:
        return float(self.prr_values.mean())

    @property
    def prr_std(self) -> float:
        return float(self.prr_values.std())

    @property
    def delivery_ratio_mean(self) -> float:
        return float(np.mean([g.mean_delivery_ratio for g in self.games]))

    @property
    def dup_pct(self) -> float:
        return float(np.mean([g.dup_pct for g in self.games]))

    @property
    def mode_usage_pct(self) -> List[float]:
        totals = np.sum([g.total_mode_counts for g in self.games], axis=0)
        sent = totals.sum()
        return [float(100.0 * c / sent) if sent else 0.0 for c in totals]

    @property
    def redundant_pct(self) -> float:
        return self.mode_usage_pct[CommMode.HYBRID_REDUNDANT]

    @property
    def completed_games(self) -> int:
        return sum(1 for g in self.games if g.completed)

    def as_dict(self) -> dict:
        return {
            'selector': self.selector,
            'games': len(self.games),
            'completed_games': self.completed_games,
            'prr_mean': self.prr_mean,
            'prr_std': self.prr_std,
            'delivery_ratio_mean': self.delivery_ratio_mean,
            'dup_pct': self.dup_pct,
            'mode_usage_pct': self.mode_usage_pct,
            'redundant_pct': self.redundant_pct,
        }


def run_evaluation(
    setup: SimulationSetup,
    selectors: Sequence[ModeSelector],
    games: int,
    seed: int,
    selector_name: str = '',
) -> EvaluationSummary:
    """
    Greedy, non-learning games. Learning agents are frozen first; aborted
    games contribute their partial statistics.
    """
    for selector in selectors:
        if isinstance(selector, DQNAgent):
            selector.freeze()
    results = []
    for game in range(games):
        try:
            stats = run_game(setup, selectors, game_index=game, seed=seed, stream_root=_EVALUATION_GAMES)
        except GameAbortedError as e:
            stats = e.stats
        results.append(stats)
    summary = EvaluationSummary(selector=selector_name or selectors[0].name, games=results)
    logger.info(
        f"Evaluation {summary.selector}: PRR={summary.prr_mean:.3f}±{summary.prr_std:.3f} "
        f"dup={summary.dup_pct:.1f}% redundant={summary.redundant_pct:.1f}%"
    )
    return summary


def moving_average(series: Sequence[float], window: int) -> List[float]:
    """Trailing mean with partial windows at the head"""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if len(series) == 0:
        return []
    return pd.Series(series, dtype=float).rolling(window, min_periods=1).mean().tolist()


def evaluate_selector(
    setup: SimulationSetup,
    selector: str,
    seed: int,
    games: int,
    weights_dir: Optional[Path] = None,
) -> EvaluationSummary:
    """Build and evaluate one selector; the unit of work of a comparison cell"""
    selectors = build_selectors(setup, selector, seed, weights_dir)
    return run_evaluation(setup, selectors, games, seed, selector_name=selector)

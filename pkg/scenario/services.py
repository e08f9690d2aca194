"""
Highway scenario services
Places the platoon and the background traffic on a two-way highway,
advances their positions and answers range queries.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Tuple, Union

import numpy as np

from Hybridsim.exceptions import ConfigError, UnknownVehicleError

logger = logging.getLogger(__name__)

# RAT tags for background stations; platoon members carry NO_RAT because
# their RAT usage changes every beacon with the selected mode.
NO_RAT = -1
BACKGROUND_G5 = 0
BACKGROUND_LTE = 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and traffic of one evaluation scenario"""

    highway_length: float = 2000.0
    lanes_per_direction: int = 2
    platoon_size: int = 5
    platoon_spacing: float = 10.0
    platoon_speed: float = 10.0
    platoon_start: float = 100.0
    background_speed: float = 20.0
    background_count: int = 20
    background_g5_share: float = 0.5
    base_station_positions: Tuple[float, ...] = (500.0, 1500.0)
    comm_range: float = 500.0
    seed: int = 0

    def validate(self) -> 'ScenarioConfig':
        """Raise ConfigError when a geometric invariant is broken"""
        problems = []
        if self.highway_length <= 0:
            problems.append('highway_length must be > 0')
        if self.lanes_per_direction < 1:
            problems.append('lanes_per_direction must be >= 1')
        if self.platoon_size < 2:
            problems.append('platoon_size must be >= 2')
        if self.platoon_spacing <= 0:
            problems.append('platoon_spacing must be > 0')
        if self.platoon_speed < 0 or self.background_speed < 0:
            problems.append('speeds must be >= 0')
        if self.background_count < 0:
            problems.append('background_count must be >= 0')
        if not 0.0 <= self.background_g5_share <= 1.0:
            problems.append('background_g5_share must lie in [0, 1]')
        if self.comm_range <= 0:
            problems.append('comm_range must be > 0')
        if self.seed < 0:
            problems.append('seed must be unsigned')

        platoon_length = (self.platoon_size - 1) * self.platoon_spacing
        if platoon_length > self.highway_length:
            problems.append('platoon is longer than the highway')
        elif not platoon_length <= self.platoon_start <= self.highway_length:
            problems.append(
                f'platoon_start must lie in [{platoon_length}, {self.highway_length}] '
                f'so every member is on the road'
            )
        for position in self.base_station_positions:
            if not 0.0 <= position <= self.highway_length:
                problems.append(f'base station at {position} is off the highway')

        if problems:
            raise ConfigError('; '.join(problems), errors={'scenario': problems})
        return self

    @property
    def platoon_length(self) -> float:
        return (self.platoon_size - 1) * self.platoon_spacing


@dataclass(frozen=True)
class VehicleState:
    """Snapshot of one vehicle"""

    id: int
    position: float
    lane: int
    direction: int
    speed: float
    is_platoon_member: bool
    background_rat: int = NO_RAT


@dataclass
class ScenarioState:
    """
    Column-oriented vehicle table.

    Vehicle ids equal row indices: the platoon occupies ids
    0..platoon_size-1 (leader first), background vehicles follow.
    """

    config: ScenarioConfig
    positions: np.ndarray
    lanes: np.ndarray
    directions: np.ndarray
    speeds: np.ndarray
    is_platoon: np.ndarray
    background_rats: np.ndarray
    time_s: float = 0.0
    _platoon_ids: List[int] = field(default_factory=list, repr=False)

    @property
    def vehicle_count(self) -> int:
        return int(self.positions.shape[0])

    @property
    def platoon_ids(self) -> List[int]:
        if not self._platoon_ids:
            self._platoon_ids = [int(i) for i in np.flatnonzero(self.is_platoon)]
        return self._platoon_ids

    def vehicle(self, vehicle_id: int) -> VehicleState:
        """Return the snapshot of a vehicle by id"""
        if not 0 <= vehicle_id < self.vehicle_count:
            raise UnknownVehicleError(vehicle_id)
        i = int(vehicle_id)
        return VehicleState(
            id=i,
            position=float(self.positions[i]),
            lane=int(self.lanes[i]),
            direction=int(self.directions[i]),
            speed=float(self.speeds[i]),
            is_platoon_member=bool(self.is_platoon[i]),
            background_rat=int(self.background_rats[i]),
        )


def init_scenario(config: ScenarioConfig) -> ScenarioState:
    """
    Build the initial vehicle table.

    Args:
        config: validated scenario configuration

    Returns:
        ScenarioState with the platoon as a column in lane 0 heading +1 and
        background vehicles spread uniformly (seeded) over both directions
    """
    config.validate()
    rng = np.random.default_rng(config.seed)

    n_platoon = config.platoon_size
    n_background = config.background_count

    platoon_positions = config.platoon_start - config.platoon_spacing * np.arange(n_platoon)
    background_positions = rng.uniform(0.0, config.highway_length, size=n_background)
    background_directions = rng.choice(np.array([1, -1]), size=n_background)
    background_lanes = rng.integers(0, config.lanes_per_direction, size=n_background)
    background_rats = np.where(
        rng.random(n_background) < config.background_g5_share, BACKGROUND_G5, BACKGROUND_LTE
    )

    state = ScenarioState(
        config=config,
        positions=np.concatenate([platoon_positions, background_positions]).astype(float),
        lanes=np.concatenate([np.zeros(n_platoon, dtype=int), background_lanes]),
        directions=np.concatenate([np.ones(n_platoon, dtype=int), background_directions]),
        speeds=np.concatenate([
            np.full(n_platoon, config.platoon_speed),
            np.full(n_background, config.background_speed),
        ]),
        is_platoon=np.concatenate([np.ones(n_platoon, dtype=bool), np.zeros(n_background, dtype=bool)]),
        background_rats=np.concatenate([np.full(n_platoon, NO_RAT), background_rats]).astype(int),
    )
    logger.debug(
        f"Scenario initialized: {n_platoon} platoon + {n_background} background vehicles "
        f"(seed={config.seed})"
    )
    return state


def step_mobility(state: ScenarioState, dt: float) -> ScenarioState:
    """
    Advance every vehicle by speed * dt along its direction.

    Background vehicles leaving the road re-enter at the opposite end.
    The platoon re-enters as a rigid column once its leader passes the
    end of the road, so member gaps never change.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")

    length = state.config.highway_length
    positions = state.positions + state.speeds * dt * state.directions

    background = ~state.is_platoon
    positions[background] = np.mod(positions[background], length)

    platoon = state.platoon_ids
    if platoon:
        leader = platoon[0]
        overshoot = positions[leader] - length
        if overshoot > 0:
            # Re-enter with the tail at the road start plus the overshoot.
            shift = length - state.config.platoon_length
            positions[platoon] -= shift * np.ceil(overshoot / shift) if shift > 0 else 0.0

    return replace(state, positions=positions, time_s=state.time_s + dt)


def neighbors_in_range(
    state: ScenarioState,
    v: Union[VehicleState, int],
    range: float,
) -> List[VehicleState]:
    """All vehicles other than v within longitudinal distance range, ordered by id"""
    if range <= 0:
        raise ValueError(f"range must be positive, got {range}")
    vehicle_id = v.id if isinstance(v, VehicleState) else int(v)
    return [state.vehicle(i) for i in neighbor_ids(state, vehicle_id, range)]


def neighbor_ids(state: ScenarioState, vehicle_id: int, range: float) -> List[int]:
    """Id-only variant of neighbors_in_range used on the hot path of the engine"""
    if not 0 <= vehicle_id < state.vehicle_count:
        raise UnknownVehicleError(vehicle_id)
    mask = np.abs(state.positions - state.positions[vehicle_id]) <= range
    mask[vehicle_id] = False
    return [int(i) for i in np.flatnonzero(mask)]


def background_in_range(state: ScenarioState, position: float, range: float, rat: int) -> np.ndarray:
    """Ids of background stations on a RAT within range of a position"""
    mask = (state.background_rats == rat) & (np.abs(state.positions - position) <= range)
    return np.flatnonzero(mask)

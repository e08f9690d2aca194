"""
Abstract per-RAT channel models
Path loss, fading, SNIR, channel load, collisions, delivery and latency
for ITS-G5 and LTE-V2X PC5 sidelink.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

from Hybridsim.exceptions import ConfigError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
LATENCY_CEILING_MS = 99.0


class RatKind(IntEnum):
    ITS_G5 = 0
    LTE_V2X_PC5 = 1

    @property
    def label(self) -> str:
        return 'its_g5' if self is RatKind.ITS_G5 else 'lte_v2x_pc5'

    @classmethod
    def from_label(cls, label: str) -> 'RatKind':
        for rat in cls:
            if rat.label == label:
                return rat
        raise ValueError(f"Unknown RAT: {label}")


FADING_NONE = 'none'
FADING_RAYLEIGH = 'rayleigh'


@dataclass(frozen=True)
class RatParams:
    """Radio parameters of one access technology"""

    tx_power_dbm: float = 23.0
    rx_sensitivity_dbm: float = -85.0
    energy_detection_dbm: float = -85.0
    background_noise_dbm: float = -90.0
    center_frequency_hz: float = 5.880e9
    fading: str = FADING_NONE
    collision_kappa: float = 2.0
    base_latency_ms: float = 2.0
    latency_load_scale_ms: float = 40.0
    capacity: int = 50
    snir50_db: float = 5.0
    snir_slope_db: float = 2.0
    path_loss_exponent: float = 2.0
    reference_distance_m: float = 1.0
    activity_factor: float = 0.1
    interference_offset_db: float = -15.0

    @classmethod
    def defaults_for(cls, rat: RatKind) -> 'RatParams':
        """Standards configuration defaults for a RAT"""
        if rat is RatKind.ITS_G5:
            return cls()
        return cls(
            background_noise_dbm=-110.0,
            center_frequency_hz=5.900e9,
            fading=FADING_RAYLEIGH,
            base_latency_ms=10.0,
            capacity=100,
            interference_offset_db=-20.0,
        )

    def with_overrides(self, **overrides) -> 'RatParams':
        return replace(self, **overrides)

    def validate(self, label: str = 'radio') -> 'RatParams':
        problems = []
        if not math.isfinite(self.tx_power_dbm):
            problems.append('tx_power_dbm must be finite')
        elif self.rx_sensitivity_dbm >= self.tx_power_dbm:
            problems.append('rx_sensitivity_dbm must be below tx_power_dbm')
        if self.center_frequency_hz <= 0:
            problems.append('center_frequency_hz must be > 0')
        if self.fading not in (FADING_NONE, FADING_RAYLEIGH):
            problems.append(f"fading must be '{FADING_NONE}' or '{FADING_RAYLEIGH}'")
        if self.collision_kappa < 0:
            problems.append('collision_kappa must be >= 0')
        if not 0 <= self.base_latency_ms < LATENCY_CEILING_MS:
            problems.append(f'base_latency_ms must lie in [0, {LATENCY_CEILING_MS})')
        if self.latency_load_scale_ms < 0:
            problems.append('latency_load_scale_ms must be >= 0')
        if self.capacity <= 0:
            problems.append('capacity must be > 0')
        if self.snir_slope_db <= 0:
            problems.append('snir_slope_db must be > 0')
        if self.path_loss_exponent <= 0 or self.reference_distance_m <= 0:
            problems.append('path loss exponent and reference distance must be > 0')
        if not 0 <= self.activity_factor <= 1:
            problems.append('activity_factor must lie in [0, 1]')
        if problems:
            raise ConfigError('; '.join(problems), errors={label: problems})
        return self


@dataclass(frozen=True)
class LinkSample:
    """Outcome of one segment towards one receiver"""

    snir_db: float
    delivered: bool
    latency_ms: float
    collided: bool
    rx_power_dbm: float = float('nan')


def path_loss_db(distance: float, frequency: float, exponent: float = 2.0, d0: float = 1.0) -> float:
    """
    Log-distance path loss anchored on free space at the reference distance.

    Distances below d0 are clamped to d0.
    """
    if frequency <= 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    d = max(distance, d0)
    reference = 20.0 * math.log10(4.0 * math.pi * d0 * frequency / SPEED_OF_LIGHT)
    return reference + 10.0 * exponent * math.log10(d / d0)


def fading_gain_db(rat: RatKind, rng: np.random.Generator, fading: Optional[str] = None) -> float:
    """
    Small-scale fading gain in dB, i.i.d. per transmission.

    Without an explicit model ITS-G5 is unfaded and LTE-V2X gets Rayleigh
    power fading (unit-mean exponential power).
    """
    if fading is None:
        fading = FADING_NONE if rat is RatKind.ITS_G5 else FADING_RAYLEIGH
    if fading == FADING_NONE:
        return 0.0
    power = rng.exponential(1.0)
    return 10.0 * math.log10(max(power, 1e-300))


def dbm_to_mw(dbm):
    return np.power(10.0, np.asarray(dbm, dtype=float) / 10.0)


def snir_db(rx_power_dbm: float, noise_dbm: float, interference_dbm_list: Iterable[float] = ()) -> float:
    """Signal to noise plus interference ratio, summing powers in the linear domain"""
    interference = np.fromiter(interference_dbm_list, dtype=float)
    total_mw = float(dbm_to_mw(noise_dbm)) + float(dbm_to_mw(interference).sum())
    return rx_power_dbm - 10.0 * math.log10(total_mw)


def channel_load(rat: RatKind, active_transmitters_in_range: int, capacity: int) -> float:
    """Fraction of the RAT's capacity in use, saturating at 1"""
    if capacity <= 0:
        raise ValueError(f"capacity must be positive for {rat.label}")
    return min(1.0, active_transmitters_in_range / capacity)


def collision_probability(rat: RatKind, rho: float, kappa: float = 2.0) -> float:
    """Load-driven collision probability 1 - exp(-kappa * rho)"""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"channel load must lie in [0, 1], got {rho} on {rat.label}")
    return -math.expm1(-kappa * rho)


def latency_sample(rat: RatKind, params: RatParams, rho: float, rng: np.random.Generator) -> float:
    """
    End-to-end latency of one segment in ms.

    Base latency plus exponential jitter whose mean scales with load,
    clamped below the 100 ms beacon period.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"channel load must lie in [0, 1], got {rho} on {rat.label}")
    mean_jitter = params.latency_load_scale_ms * rho
    jitter = rng.exponential(mean_jitter) if mean_jitter > 0 else 0.0
    return min(params.base_latency_ms + jitter, LATENCY_CEILING_MS)


def delivery_outcome(
    rat: RatKind,
    params: RatParams,
    snir: float,
    rho: float,
    payload_fraction: float,
    rng: np.random.Generator,
    rx_power_dbm: Optional[float] = None,
) -> LinkSample:
    """
    Decide whether one segment reaches one receiver.

    Shorter frames are exposed to collisions in proportion to their airtime;
    frames that survive decode with a logistic probability in SNIR. A
    received power below the sensitivity floor never decodes.
    """
    if not 0.0 < payload_fraction <= 1.0:
        raise ValueError(f"payload_fraction must lie in (0, 1], got {payload_fraction}")

    p_collision = collision_probability(rat, rho, params.collision_kappa) * payload_fraction
    collided = bool(rng.random() < p_collision)
    decoded = bool(rng.random() < expit((snir - params.snir50_db) / params.snir_slope_db))
    latency = latency_sample(rat, params, rho, rng)

    audible = rx_power_dbm is None or rx_power_dbm >= params.rx_sensitivity_dbm
    delivered = (not collided) and decoded and audible
    return LinkSample(
        snir_db=float(snir),
        delivered=delivered,
        latency_ms=latency,
        collided=collided,
        rx_power_dbm=float('nan') if rx_power_dbm is None else float(rx_power_dbm),
    )


class RadioChannel:
    """
    Composes the per-RAT models into one link draw.

    Args:
        params: RatParams per RatKind
    """

    def __init__(self, params: dict):
        self.params = {rat: params[rat] for rat in RatKind}

    def received_power_dbm(self, rat: RatKind, distance: float, rng: Optional[np.random.Generator] = None) -> float:
        p = self.params[rat]
        power = p.tx_power_dbm - path_loss_db(
            distance, p.center_frequency_hz, p.path_loss_exponent, p.reference_distance_m
        )
        if rng is not None:
            power += fading_gain_db(rat, rng, p.fading)
        return power

    def sample_link(
        self,
        rat: RatKind,
        distance: float,
        interferer_distances: Sequence[float],
        active_transmitters: int,
        payload_fraction: float,
        rng: np.random.Generator,
    ) -> LinkSample:
        """Draw the outcome of one segment between two vehicles"""
        p = self.params[rat]
        rx_power = self.received_power_dbm(rat, distance, rng)
        interference = [
            self.received_power_dbm(rat, d) + p.interference_offset_db for d in interferer_distances
        ]
        snir = snir_db(rx_power, p.background_noise_dbm, interference)
        rho = channel_load(rat, active_transmitters, p.capacity)
        return delivery_outcome(rat, p, snir, rho, payload_fraction, rng, rx_power_dbm=rx_power)

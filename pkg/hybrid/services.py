"""
Hybrid communication layer
Mode-dependent fan-out of messages over ITS-G5 and LTE-V2X, reception
reports, acknowledgments, the reception evaluation vector and PRR accounting.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

from Hybridsim.exceptions import AccountingError, ConfigError, ProtocolError
from radio.services import LATENCY_CEILING_MS, RatKind

logger = logging.getLogger(__name__)


class CommMode(IntEnum):
    SINGLE_ITS_G5 = 0
    SINGLE_LTE = 1
    HYBRID_REDUNDANT = 2
    HYBRID_DIVISION = 3


Segment = Tuple[RatKind, float]

MODE_SEGMENTS: Dict[CommMode, Tuple[Segment, ...]] = {
    CommMode.SINGLE_ITS_G5: ((RatKind.ITS_G5, 1.0),),
    CommMode.SINGLE_LTE: ((RatKind.LTE_V2X_PC5, 1.0),),
    CommMode.HYBRID_REDUNDANT: ((RatKind.ITS_G5, 1.0), (RatKind.LTE_V2X_PC5, 1.0)),
    CommMode.HYBRID_DIVISION: ((RatKind.ITS_G5, 0.5), (RatKind.LTE_V2X_PC5, 0.5)),
}

ACK_COHORT_PLATOON = 'platoon'
ACK_COHORT_ALL = 'all'


@dataclass(frozen=True)
class HybridConfig:
    """Knobs of the hybrid layer and its acknowledgment channel"""

    payload_bytes: int = 300
    ack_cohort: str = ACK_COHORT_PLATOON
    ack_loss_probability: float = 0.0
    ack_latency_ms: float = 0.5

    def validate(self) -> 'HybridConfig':
        problems = []
        if self.payload_bytes <= 0:
            problems.append('payload_bytes must be > 0')
        if self.ack_cohort not in (ACK_COHORT_PLATOON, ACK_COHORT_ALL):
            problems.append(f"ack_cohort must be '{ACK_COHORT_PLATOON}' or '{ACK_COHORT_ALL}'")
        if not 0.0 <= self.ack_loss_probability <= 1.0:
            problems.append('ack_loss_probability must lie in [0, 1]')
        # Acks must land before the sender's next beacon: data latency is
        # clamped to 99 ms, so the ack leg gets strictly less than 1 ms.
        if not 0.0 <= self.ack_latency_ms < 100.0 - LATENCY_CEILING_MS:
            problems.append('ack_latency_ms must lie in [0, 1)')
        if problems:
            raise ConfigError('; '.join(problems), errors={'hybrid': problems})
        return self


def segments_for(mode: CommMode) -> Tuple[Segment, ...]:
    return MODE_SEGMENTS[CommMode(mode)]


def mode_for_segments(segments: Sequence[Segment]) -> CommMode:
    """Inverse of segments_for; raises ProtocolError on unknown layouts"""
    key = tuple((RatKind(rat), float(fraction)) for rat, fraction in segments)
    for mode, layout in MODE_SEGMENTS.items():
        if layout == key:
            return mode
    raise ProtocolError(f"No communication mode matches segments {key}")


@dataclass(frozen=True)
class Message:
    """One application beacon and its per-RAT segments"""

    id: int
    sender: int
    sequence: int
    mode: CommMode
    send_time: float
    segments: Tuple[Segment, ...]
    payload_bytes: int = 300

    @classmethod
    def create(cls, id: int, sender: int, sequence: int, mode: CommMode,
               send_time: float, payload_bytes: int = 300) -> 'Message':
        mode = CommMode(mode)
        return cls(
            id=id,
            sender=sender,
            sequence=sequence,
            mode=mode,
            send_time=send_time,
            segments=segments_for(mode),
            payload_bytes=payload_bytes,
        )


@dataclass(frozen=True)
class Transmission:
    """One scheduled segment of a message on one RAT"""

    message: Message
    rat: RatKind
    payload_fraction: float

    @property
    def payload_bytes(self) -> float:
        return self.message.payload_bytes * self.payload_fraction


@dataclass(frozen=True)
class AckRecord:
    """Acknowledgment of a message from one receiver"""

    receiver: int
    message_id: int
    copies: int
    first_copy_latency_ms: float
    rats: FrozenSet[RatKind] = frozenset()

    def __post_init__(self):
        if self.copies < 1:
            raise ProtocolError(f"Ack from {self.receiver} must report at least one copy")
        if not self.first_copy_latency_ms < 100.0:
            raise ProtocolError(
                f"Ack from {self.receiver} reports latency {self.first_copy_latency_ms} ms >= 100 ms"
            )

    def merge(self, other: 'AckRecord') -> 'AckRecord':
        return AckRecord(
            receiver=self.receiver,
            message_id=self.message_id,
            copies=max(self.copies, other.copies),
            first_copy_latency_ms=min(self.first_copy_latency_ms, other.first_copy_latency_ms),
            rats=self.rats | other.rats,
        )


@dataclass
class ReceptionVector:
    """Per-neighbor reports {0, 1, 2} of the current round plus the SR counter"""

    reports: Dict[int, int] = field(default_factory=dict)
    sr_counter: int = 0
    acks: Dict[int, AckRecord] = field(default_factory=dict)

    def reset(self):
        """Start of a game"""
        self.reports.clear()
        self.acks.clear()
        self.sr_counter = 0


def transmit(msg: Message) -> List[Transmission]:
    """
    Fan a message out into one transmission per segment.

    Raises:
        ProtocolError: segments do not match the message's mode
    """
    if not msg.segments or mode_for_segments(msg.segments) != msg.mode:
        raise ProtocolError(
            f"Message {msg.id} from {msg.sender}: segments {msg.segments} inconsistent with {msg.mode.name}"
        )
    return [Transmission(message=msg, rat=RatKind(rat), payload_fraction=fraction)
            for rat, fraction in msg.segments]


def reception_report(mode: CommMode, delivered_per_segment: Sequence[bool]) -> int:
    """
    Report value for one neighbor.

    Single modes report 1 on delivery. Redundant reports the number of
    copies. Division reports 1 only when both halves arrived, since half a
    message is unusable.
    """
    mode = CommMode(mode)
    expected = len(MODE_SEGMENTS[mode])
    if len(delivered_per_segment) != expected:
        raise ProtocolError(
            f"{mode.name} expects {expected} segment outcomes, got {len(delivered_per_segment)}"
        )
    delivered = sum(bool(d) for d in delivered_per_segment)
    if mode is CommMode.HYBRID_REDUNDANT:
        return delivered
    if mode is CommMode.HYBRID_DIVISION:
        return 1 if delivered == 2 else 0
    return delivered


def record_ack(vec: ReceptionVector, ack: AckRecord, mode: CommMode) -> ReceptionVector:
    """Fold an acknowledgment into the vector; repeated acks keep the highest copy count"""
    previous = vec.acks.get(ack.receiver)
    if previous is not None and previous.message_id == ack.message_id:
        ack = previous.merge(ack)
    vec.acks[ack.receiver] = ack
    delivered = [rat in ack.rats for rat, _ in segments_for(mode)]
    if not ack.rats:
        # Acks without RAT detail count their copies in segment order.
        delivered = [i < ack.copies for i in range(len(delivered))]
    vec.reports[ack.receiver] = reception_report(mode, delivered)
    return vec


def complete_reports(vec: ReceptionVector, expected_neighbors: Iterable[int]) -> Dict[int, int]:
    """Round reports with a 0 for every neighbor that never acknowledged"""
    return {n: vec.reports.get(n, 0) for n in expected_neighbors}


def finalize_round(vec: ReceptionVector, expected_neighbors: Iterable[int]) -> Tuple[ReceptionVector, bool]:
    """
    Close a round: count it towards SR when every expected neighbor
    reported exactly one copy, then clear the reports.
    """
    reports = complete_reports(vec, expected_neighbors)
    perfect = all(value == 1 for value in reports.values())
    if perfect:
        vec.sr_counter += 1
    vec.reports.clear()
    vec.acks.clear()
    return vec, perfect


def prr_game(sr_target: int, n_sent: int) -> float:
    """Packet reception ratio of a finished game: SR target over messages sent"""
    if sr_target < 1:
        raise AccountingError(f"SR target must be >= 1, got {sr_target}")
    if n_sent < sr_target:
        raise AccountingError(f"{n_sent} messages sent cannot reach SR target {sr_target}")
    return sr_target / n_sent


def duplicated_message_stats(acks: Iterable[AckRecord]) -> float:
    """
    Percentage of received messages that arrived twice.

    Acks of the same (receiver, message) are merged before counting.
    """
    copies: Dict[Tuple[int, int], int] = {}
    for ack in acks:
        key = (ack.receiver, ack.message_id)
        copies[key] = max(copies.get(key, 0), ack.copies)
    return duplicate_percentage(Counter(copies.values()))


def duplicate_percentage(copy_histogram: Counter) -> float:
    """Percentage of receptions with two copies given a histogram of copy counts"""
    received = sum(count for copies, count in copy_histogram.items() if copies >= 1)
    if received == 0:
        return 0.0
    return 100.0 * copy_histogram.get(2, 0) / received

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

from ..simnet import NS_PER_S, ProbeRecord, ProbeSchedule

# A driver hands a schedule to the network and gets measured records back.
SendFn = Callable[[ProbeSchedule], list]


class Status(str, Enum):
    OK = "ok"
    ABORTED_LOSS = "aborted_loss"
    NO_CONVERGENCE = "no_convergence"


class NoConvergence(RuntimeError):
    pass


@dataclass
class Estimate:
    tool: str
    value_bps: Optional[float]
    bytes_sent: int
    duration_s: float
    status: Status = Status.OK
    low_bps: Optional[float] = None
    high_bps: Optional[float] = None
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OK

    @property
    def probe_rate_bps(self) -> float:
        if self.duration_s <= 0:
            return float("nan")
        return 8.0 * self.bytes_sent / self.duration_s


def bytes_of(records: Sequence[ProbeRecord]) -> int:
    return sum(r.size_bits for r in records) // 8


def span_seconds(records: Sequence[ProbeRecord]) -> float:
    """Last measured receive minus first measured send; 0 if nothing arrived."""
    received = [r.measured_recv_ns for r in records if not r.lost]
    if not received or not records:
        return 0.0
    first = min(r.measured_send_ns for r in records)
    return max(0.0, (max(received) - first) / NS_PER_S)


def group_records(records: Sequence[ProbeRecord]) -> dict:
    groups: dict = {}
    for r in records:
        groups.setdefault(r.group, []).append(r)
    for members in groups.values():
        members.sort(key=lambda r: r.position)
    return groups


def consecutive_gaps(train: Sequence[ProbeRecord]):
    """(D_in, D_out) in ns for adjacent packets of a train that both arrived."""
    gaps = []
    for a, b in zip(train, train[1:]):
        if a.lost or b.lost or b.position != a.position + 1:
            continue
        gaps.append((b.measured_send_ns - a.measured_send_ns, b.measured_recv_ns - a.measured_recv_ns))
    return gaps

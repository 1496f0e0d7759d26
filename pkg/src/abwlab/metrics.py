"""Ground-truth bandwidth and the evaluation criteria (accuracy, load, response time)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .simnet import NS_PER_S, CrossMode, LinkStats, PathSpec


@dataclass(frozen=True)
class GroundTruth:
    capacity_bps: float
    link_available_bps: tuple
    path_available_bps: float
    window_s: Optional[float] = None


@dataclass(frozen=True)
class EvalRecord:
    expected_abw_bps: float
    measured_abw_bps: Optional[float]
    relative_error: Optional[float]
    intrusiveness: float
    response_time_s: float


def _capacities(path) -> list:
    if isinstance(path, PathSpec):
        return [link.capacity_bps for link in path.links]
    return list(path)


def path_capacity(path) -> float:
    """Narrow-link capacity: the minimum link capacity along the path."""
    caps = _capacities(path)
    if not caps:
        raise ValueError("path must contain at least one link")
    return min(caps)


def link_available(capacity_bps: float, utilization: float) -> float:
    if not 0.0 <= utilization <= 1.0:
        raise ValueError(f"utilization must lie in [0, 1], got {utilization}")
    return capacity_bps * (1.0 - utilization)


def path_available(links: Iterable) -> float:
    """Minimum over ``(capacity_bps, utilization)`` pairs of the link's unused capacity."""
    values = [link_available(c, u) for c, u in links]
    if not values:
        raise ValueError("path must contain at least one link")
    return min(values)


def configured_utilizations(path: PathSpec, cross: Sequence, overhead_bits: float = 0.0) -> list:
    """Per-link utilization implied by the configured cross-traffic rates.

    ``overhead_bits`` is a per-packet framing overhead charged to packet
    flows on top of their IP-layer rate.
    """
    load = [0.0] * len(path.links)
    for flow in cross:
        first, last = path.position(flow.entry_link), path.position(flow.exit_link)
        rate = flow.rate_bps
        if overhead_bits and flow.mode is CrossMode.PACKET:
            rate *= 1.0 + overhead_bits / flow.packet_size_bits
        for pos in range(first, last + 1):
            load[pos] += rate
    return [min(1.0, l / link.capacity_bps) for l, link in zip(load, path.links)]


def ground_truth(path: PathSpec, cross: Sequence = (), overhead_bits: float = 0.0,
                 window_s: Optional[float] = None) -> GroundTruth:
    utils = configured_utilizations(path, cross, overhead_bits)
    avail = tuple(link_available(link.capacity_bps, u) for link, u in zip(path.links, utils))
    return GroundTruth(path_capacity(path), avail, min(avail), window_s)


def ground_truth_from_stats(stats: Sequence[LinkStats]) -> GroundTruth:
    """Ground truth from the simulator's own per-link cross-traffic accounting."""
    avail = tuple(link_available(s.capacity_bps, min(1.0, s.cross_utilization)) for s in stats)
    window = max((s.window_ns for s in stats), default=0) / NS_PER_S
    return GroundTruth(min(s.capacity_bps for s in stats), avail, min(avail), window)


def relative_error(expected_bps: float, measured_bps: float) -> float:
    if expected_bps == 0:
        raise ValueError("relative error is undefined for zero expected bandwidth")
    return abs(expected_bps - measured_bps) / expected_bps


def intrusiveness(bytes_sent: float, duration_s: float, capacity_bps: float) -> float:
    """Average probe rate as a fraction of the path capacity."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    return (8.0 * bytes_sent / duration_s) / capacity_bps


def response_time(durations: Iterable[float]) -> float:
    values = list(durations)
    if not values:
        raise ValueError("need at least one session duration")
    return sum(values) / len(values)


def evaluate(estimate, expected_bps: float, capacity_bps: float) -> EvalRecord:
    measured = estimate.value_bps if estimate.ok else None
    err = None
    if measured is not None and expected_bps > 0:
        err = relative_error(expected_bps, measured)
    load = intrusiveness(estimate.bytes_sent, estimate.duration_s, capacity_bps) \
        if estimate.duration_s > 0 else float("nan")
    return EvalRecord(expected_bps, measured, err, load, estimate.duration_s)

"""Pathload: self-loading periodic streams with a binary search on the stream rate."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..simnet import NS_PER_S, ProbeSchedule, ScheduleEntry, tx_time_ns
from ._common import Estimate, SendFn, Status, bytes_of, span_seconds


class Trend(str, Enum):
    INCREASING = "increasing"
    NONE = "none"
    AMBIGUOUS = "ambiguous"


@dataclass
class PathloadConfig:
    rate_max_bps: float
    rate_min_bps: float = 0.0
    resolution_bps: float = 2e6
    stream_length: int = 100
    probe_size_bits: int = 12000
    fleet_size: int = 12
    loss_abort_fraction: float = 0.10
    trend_groups: int = 10
    increasing_fraction: float = 0.6
    flat_fraction: float = 0.4
    # send-timestamp noise span the receiver assumes; a trend must rise by
    # rise_factor times this span
    noise_span_us: float = 5.0
    rise_factor: float = 10.0
    stream_idle_factor: float = 3.0
    fleet_gap_s: float = 0.05

    def __post_init__(self):
        if not self.rate_min_bps < self.rate_max_bps:
            raise ValueError("rate_min_bps must be below rate_max_bps")
        if self.resolution_bps <= 0:
            raise ValueError("resolution_bps must be > 0")


def stream_schedule(rate_bps: float, start_ns: int, config: PathloadConfig, group: int) -> ProbeSchedule:
    period = tx_time_ns(config.probe_size_bits, rate_bps)
    return ProbeSchedule([ScheduleEntry(start_ns + k * period, config.probe_size_bits, group, k)
                          for k in range(config.stream_length)])


def relative_owd(stream) -> np.ndarray:
    owd = np.array([r.measured_recv_ns - r.measured_send_ns for r in stream if not r.lost], dtype=float)
    if owd.size:
        owd -= owd.min()
    return owd


def classify_stream(stream, config: PathloadConfig) -> Trend:
    """Trend of one stream's one-way delays from the medians of consecutive groups."""
    owd = relative_owd(stream)
    if owd.size < 2 * config.trend_groups:
        return Trend.AMBIGUOUS
    medians = np.array([np.median(g) for g in np.array_split(owd, config.trend_groups)])
    frac_up = float(np.mean(np.diff(medians) > 0))
    rise = medians[-1] - medians[0]
    if frac_up >= config.increasing_fraction and rise > config.rise_factor * config.noise_span_us * 1000:
        return Trend.INCREASING
    if frac_up <= config.flat_fraction:
        return Trend.NONE
    return Trend.AMBIGUOUS


def fleet_verdict(trends) -> Trend:
    """Majority of the decisive streams; ties lean to INCREASING."""
    up = sum(t is Trend.INCREASING for t in trends)
    flat = sum(t is Trend.NONE for t in trends)
    if up == 0 and flat == 0:
        return Trend.AMBIGUOUS
    return Trend.NONE if flat > up else Trend.INCREASING


def pathload_estimate(send: SendFn, config: PathloadConfig, start_ns: int = 0) -> Estimate:
    low, high = config.rate_min_bps, config.rate_max_bps
    t = start_ns
    records = []
    tested = []
    status = Status.OK
    group = 0
    while high - low > config.resolution_bps:
        rate = 0.5 * (low + high)
        tested.append(rate)
        trends = []
        aborted = False
        for _ in range(config.fleet_size):
            sched = stream_schedule(rate, t, config, group)
            group += 1
            stream = send(sched)
            records.extend(stream)
            span = sched.entries[-1].send_ns - sched.entries[0].send_ns
            t += span + int(config.stream_idle_factor * span) + 1
            lost = sum(r.lost for r in stream)
            if lost > config.loss_abort_fraction * len(stream):
                aborted = True
                break
            trends.append(classify_stream(stream, config))
        if aborted:
            status = Status.ABORTED_LOSS
            break
        t += int(config.fleet_gap_s * NS_PER_S)
        # an all-ambiguous fleet is treated like an increasing one
        if fleet_verdict(trends) is Trend.NONE:
            low = rate
        else:
            high = rate
    value: Optional[float] = 0.5 * (low + high) if status is Status.OK else None
    return Estimate("pathload", value, bytes_of(records), span_seconds(records), status,
                    low_bps=low, high_bps=high, details={"rates_tested": tested})


def run_pathload(send: SendFn, config: PathloadConfig, rng=None, start_ns: int = 0) -> Estimate:
    return pathload_estimate(send, config, start_ns)

"""Pathchirp: exponentially spaced chirps and the onset of sustained queueing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..simnet import NS_PER_S, ProbeSchedule, ScheduleEntry, tx_time_ns
from ._common import Estimate, SendFn, Status, bytes_of, group_records


@dataclass
class PathchirpConfig:
    probe_size_bits: int = 8000
    rate_min_bps: float = 10e6
    rate_max_bps: float = 200e6
    spread_factor: float = 1.2
    duration_s: float = 20.0
    chirp_interval_s: float = 0.5
    noise_span_us: float = 5.0

    def __post_init__(self):
        if not self.spread_factor > 1:
            raise ValueError("spread_factor must be > 1")
        if not self.rate_min_bps < self.rate_max_bps:
            raise ValueError("rate_min_bps must be below rate_max_bps")

    @property
    def num_chirps(self) -> int:
        return max(1, int(self.duration_s / self.chirp_interval_s + 1e-9))


def chirp_gaps_ns(config: PathchirpConfig) -> list:
    """Strictly decreasing gaps from L / R_min down to L / R_max.

    One gap per probed rate: ceil(log_gamma(R_max / R_min)) + 1 of them,
    the last one pinned to L / R_max.
    """
    n_rates = math.ceil(math.log(config.rate_max_bps / config.rate_min_bps, config.spread_factor) - 1e-12) + 1
    first = config.probe_size_bits * NS_PER_S / config.rate_min_bps
    last = tx_time_ns(config.probe_size_bits, config.rate_max_bps)
    gaps = [max(math.ceil(first / config.spread_factor ** k - 1e-6), last) for k in range(n_rates)]
    gaps[-1] = last
    return gaps


def pathchirp_build_chirp(config: PathchirpConfig, start_ns: int = 0, group: int = 0) -> ProbeSchedule:
    t = start_ns
    entries = [ScheduleEntry(t, config.probe_size_bits, group, 0)]
    for k, gap in enumerate(chirp_gaps_ns(config)):
        t += gap
        entries.append(ScheduleEntry(t, config.probe_size_bits, group, k + 1))
    return ProbeSchedule(entries)


def pathchirp_session_schedule(config: PathchirpConfig, start_ns: int = 0) -> ProbeSchedule:
    step = int(config.chirp_interval_s * NS_PER_S)
    entries = []
    for c in range(config.num_chirps):
        entries.extend(pathchirp_build_chirp(config, start_ns + c * step, group=c).entries)
    return ProbeSchedule(entries)


def chirp_rate_estimate(chirp, config: PathchirpConfig) -> Optional[float]:
    """Rate at which one chirp's queueing delay starts a sustained rise.

    The sustained segment is the longest suffix whose delays never drop by
    more than the noise span; its onset is the last packet still within one
    noise span of the suffix minimum. The estimate is the geometric mean of
    the two rates around the onset gap, or R_max when no excursion exists.
    """
    if not chirp or any(r.lost for r in chirp):
        return None
    send = np.array([r.measured_send_ns for r in chirp], dtype=float)
    recv = np.array([r.measured_recv_ns for r in chirp], dtype=float)
    gaps = np.diff(send)
    if np.any(gaps <= 0):
        return None
    rates = config.probe_size_bits * NS_PER_S / gaps
    q = recv - send
    q -= q.min()
    tol = config.noise_span_us * 1000.0
    n = len(q)
    j = n - 1
    while j > 0 and q[j] >= q[j - 1] - tol:
        j -= 1
    tail = q[j:]
    below = np.nonzero(tail <= tail.min() + tol)[0]
    m = j + int(below[-1])
    if m >= n - 1 or q[-1] - q[m] <= 2 * tol or q[-1] <= q[m]:
        return config.rate_max_bps
    rate = math.sqrt(rates[m - 1] * rates[m]) if m >= 1 else rates[0]
    return min(max(rate, config.rate_min_bps), config.rate_max_bps)


def pathchirp_estimate(records, config: PathchirpConfig) -> Estimate:
    per_chirp = [v for v in (chirp_rate_estimate(ch, config) for ch in group_records(records).values())
                 if v is not None]
    bytes_sent = bytes_of(records)
    if not per_chirp:
        return Estimate("pathchirp", None, bytes_sent, config.duration_s, Status.NO_CONVERGENCE)
    value = min(max(float(np.mean(per_chirp)), config.rate_min_bps), config.rate_max_bps)
    return Estimate("pathchirp", value, bytes_sent, config.duration_s,
                    details={"chirps_used": len(per_chirp)})


def run_pathchirp(send: SendFn, config: PathchirpConfig, rng=None, start_ns: int = 0) -> Estimate:
    return pathchirp_estimate(send(pathchirp_session_schedule(config, start_ns)), config)

"""Spruce: Poisson-spaced packet pairs sent at the bottleneck capacity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..simnet import NS_PER_S, ProbeSchedule, ScheduleEntry, tx_time_ns
from ._common import Estimate, SendFn, Status, bytes_of, consecutive_gaps, group_records, span_seconds


@dataclass
class SpruceConfig:
    capacity_bps: float
    num_pairs: int = 100
    probe_size_bits: int = 12000
    rate_cap_bps: float = 240e3
    rate_fraction: float = 0.05

    @property
    def probe_rate_bps(self) -> float:
        return min(self.rate_cap_bps, self.rate_fraction * self.capacity_bps)

    @property
    def mean_pair_gap_s(self) -> float:
        return 2 * self.probe_size_bits / self.probe_rate_bps

    @property
    def pair_gap_ns(self) -> int:
        return tx_time_ns(self.probe_size_bits, self.capacity_bps)


def spruce_schedule(config: SpruceConfig, rng: np.random.Generator, start_ns: int = 0) -> ProbeSchedule:
    """Pair start times of a Poisson process conditioned on ``num_pairs`` events.

    Given the count, Poisson arrival times over a horizon are the order
    statistics of uniforms; the horizon is ``num_pairs`` mean gaps long, so
    the average probe rate is the configured one.
    """
    d_in = config.pair_gap_ns
    horizon_ns = config.num_pairs * config.mean_pair_gap_s * NS_PER_S
    starts = np.sort(rng.uniform(0.0, horizon_ns, config.num_pairs)).astype(np.int64) + start_ns
    entries = []
    prev_end = -1
    for k, s in enumerate(starts.tolist()):
        s = max(s, prev_end)
        entries.append(ScheduleEntry(s, config.probe_size_bits, k, 0))
        entries.append(ScheduleEntry(s + d_in, config.probe_size_bits, k, 1))
        prev_end = s + d_in
    return ProbeSchedule(entries)


def spruce_pair_sample(d_in_ns, d_out_ns, capacity_bps) -> float:
    """Available bandwidth implied by one pair: (2 - D_out/D_in) * C.

    Not clamped; a strongly expanded pair yields a negative sample.
    """
    if d_in_ns == 0:
        raise ValueError("d_in must be non-zero")
    return (2.0 - d_out_ns / d_in_ns) * capacity_bps


def spruce_estimate(records, config: SpruceConfig) -> Estimate:
    samples = []
    for pair in group_records(records).values():
        for d_in, d_out in consecutive_gaps(pair):
            if d_in > 0:
                samples.append(spruce_pair_sample(d_in, d_out, config.capacity_bps))
    bytes_sent = bytes_of(records)
    duration = span_seconds(records)
    if not samples:
        return Estimate("spruce", None, bytes_sent, duration, Status.NO_CONVERGENCE)
    raw = float(np.mean(samples))
    value = min(max(raw, 0.0), config.capacity_bps)
    return Estimate("spruce", value, bytes_sent, duration,
                    details={"raw_mean_bps": raw, "pairs_used": len(samples)})


def run_spruce(send: SendFn, config: SpruceConfig, rng: np.random.Generator, start_ns: int = 0) -> Estimate:
    return spruce_estimate(send(spruce_schedule(config, rng, start_ns)), config)

"""IGI: evenly spaced trains, gap search for the turning point, then the gap formula."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..simnet import NS_PER_S, ProbeSchedule, ScheduleEntry, tx_time_ns
from ._common import (Estimate, NoConvergence, SendFn, Status, bytes_of, consecutive_gaps,
                      group_records, span_seconds)


@dataclass
class IGIConfig:
    capacity_bps: float
    train_length: int = 60
    probe_size_bits: int = 5600
    initial_gap_ns: Optional[int] = None  # None: L / C
    gap_step: float = 1.25
    turning_tolerance: float = 0.05
    max_rounds: int = 20
    round_gap_s: float = 0.01
    # trains re-sent at the turning gap and averaged into the final value
    estimate_trains: int = 12
    estimate_interval_s: float = 1.0

    def first_gap_ns(self) -> int:
        if self.initial_gap_ns is not None:
            return int(self.initial_gap_ns)
        return tx_time_ns(self.probe_size_bits, self.capacity_bps)


@dataclass
class TurningPoint:
    gap_ns: int
    train: list
    rounds: list = field(default_factory=list)  # (gap_ns, mean D_in, mean D_out)
    records: list = field(default_factory=list)
    next_ns: int = 0


def igi_train(gap_ns: int, start_ns: int, config: IGIConfig, group: int) -> ProbeSchedule:
    return ProbeSchedule([ScheduleEntry(start_ns + k * gap_ns, config.probe_size_bits, group, k)
                          for k in range(config.train_length)])


def _train_means(train):
    gaps = consecutive_gaps(train)
    if not gaps:
        return None
    d_in = sum(g[0] for g in gaps) / len(gaps)
    d_out = sum(g[1] for g in gaps) / len(gaps)
    return d_in, d_out


def igi_turning_point(send: SendFn, config: IGIConfig, start_ns: int = 0) -> TurningPoint:
    """Grow the train gap until the average output gap matches the input gap."""
    gap = config.first_gap_ns()
    t = start_ns
    rounds = []
    all_records = []
    for rnd in range(config.max_rounds):
        records = send(igi_train(gap, t, config, group=rnd))
        all_records.extend(records)
        t += (config.train_length - 1) * gap + int(config.round_gap_s * NS_PER_S)
        means = _train_means(records)
        if means is not None:
            d_in, d_out = means
            rounds.append((gap, d_in, d_out))
            if d_in > 0 and abs(d_out - d_in) <= config.turning_tolerance * d_in:
                return TurningPoint(gap, records, rounds, all_records, t)
        gap = max(gap + 1, math.ceil(gap * config.gap_step))
    err = NoConvergence(f"no turning point within {config.max_rounds} rounds")
    err.records = all_records
    raise err


def igi_point_estimate(train, config: IGIConfig) -> Optional[float]:
    """Gap formula on one train: A = (C (D_in - D_out) + L) / D_in.

    Only gaps that expanded (D_out > D_in) enter the averaged output gap;
    if none did, D_out = D_in and the result is the train's probe rate.
    """
    gaps = [g for g in consecutive_gaps(train) if g[0] > 0]
    if not gaps:
        return None
    d_in = sum(g[0] for g in gaps) / len(gaps)
    grown = [g[1] for g in gaps if g[1] > g[0]]
    d_out = sum(grown) / len(grown) if grown else d_in
    c = config.capacity_bps
    return (c * (d_in - d_out) + config.probe_size_bits * NS_PER_S) / d_in


def igi_estimate(trains, config: IGIConfig, all_records=None) -> Estimate:
    """Average the per-train estimates of the turning-point trains, clamped to [0, C]."""
    all_records = all_records if all_records is not None else [r for tr in trains for r in tr]
    values = [v for v in (igi_point_estimate(tr, config) for tr in trains) if v is not None]
    bytes_sent = bytes_of(all_records)
    duration = span_seconds(all_records)
    if not values:
        return Estimate("igi", None, bytes_sent, duration, Status.NO_CONVERGENCE)
    raw = float(np.mean(values))
    return Estimate("igi", min(max(raw, 0.0), config.capacity_bps), bytes_sent, duration,
                    details={"raw_mean_bps": raw, "trains": len(values)})


def run_igi(send: SendFn, config: IGIConfig, rng=None, start_ns: int = 0) -> Estimate:
    try:
        tp = igi_turning_point(send, config, start_ns)
    except NoConvergence as err:
        records = err.records
        return Estimate("igi", None, bytes_of(records), span_seconds(records), Status.NO_CONVERGENCE)
    records = list(tp.records)
    trains = [tp.train]
    t = tp.next_ns
    base = len(tp.rounds) + 1000
    for i in range(config.estimate_trains):
        t += int(config.estimate_interval_s * NS_PER_S)
        train = send(igi_train(tp.gap_ns, t, config, group=base + i))
        records.extend(train)
        trains.append(train)
    est = igi_estimate(trains, config, records)
    est.details.update(turning_gap_ns=tp.gap_ns, rounds=len(tp.rounds))
    return est



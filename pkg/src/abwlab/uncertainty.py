"""First-order error propagation for the gap-model tools, and a Monte-Carlo check of it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import Status, get_tool, run_tool
from .simnet import NS_PER_S, Scenario, TimestampNoiseModel, tx_time_ns


@dataclass(frozen=True)
class UncertaintyInputs:
    capacity_bps: float
    d_in_ns: float
    d_out_ns: float
    delta_d_in_ns: float = 0.0
    delta_capacity_bps: float = 0.0
    probe_size_bits: int = 12000

    def __post_init__(self):
        for name in ("capacity_bps", "d_out_ns", "delta_d_in_ns", "delta_capacity_bps", "probe_size_bits"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.d_in_ns > 0:
            raise ValueError("d_in_ns must be > 0")


def spruce_uncertainty(capacity_bps, d_in, d_out, delta_d_in) -> float:
    """|C * D_out / D_in^2| * dD_in: spread of the pair formula under an input-gap error.

    Gaps and their error may be in any time unit as long as it is shared.
    """
    if d_in == 0:
        raise ValueError("d_in must be non-zero")
    return abs(-capacity_bps * d_out / d_in ** 2) * delta_d_in


def igi_uncertainty(d_in, d_out, delta_capacity_bps) -> float:
    """|1 - D_out / D_in| * dC: spread of the gap formula under a capacity error."""
    if d_in == 0:
        raise ValueError("d_in must be non-zero")
    return abs(1.0 - d_out / d_in) * delta_capacity_bps


def spruce_operating_point(abw_bps, capacity_bps, probe_size_bits=12000):
    """(D_in, D_out) in ns of a pair sent at capacity rate when the path has ``abw_bps`` free."""
    d_in = probe_size_bits * NS_PER_S / capacity_bps
    return d_in, d_in * (2.0 - abw_bps / capacity_bps)


def igi_gap_ratio(abw_bps, capacity_bps, probe_rate_bps) -> float:
    """D_out / D_in at which the gap formula yields ``abw_bps`` for a train at ``probe_rate_bps``."""
    return 1.0 + (probe_rate_bps - abw_bps) / capacity_bps


def igi_default_probe_rate(capacity_bps, probe_size_bits=5600) -> float:
    """Rate of a train whose gap is L / C rounded up to a whole microsecond."""
    gap_us = math.ceil(tx_time_ns(probe_size_bits, capacity_bps) / 1000)
    return probe_size_bits / (gap_us * 1e-6)


@dataclass
class MonteCarloResult:
    estimates: np.ndarray
    failures: int

    @property
    def std(self) -> float:
        return float(np.std(self.estimates, ddof=1)) if self.estimates.size > 1 else 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.estimates))


def monte_carlo_spread(tool: str, config, noise: TimestampNoiseModel, scenario: Scenario,
                       n_trials: int = 200, seed: int = 0, **session_kwargs) -> MonteCarloResult:
    """Run ``n_trials`` independent sessions; trial ``i`` is seeded from (seed, i)."""
    if n_trials < 100:
        raise ValueError("n_trials must be at least 100")
    get_tool(tool)
    values = []
    failures = 0
    for i in range(n_trials):
        sim_ss, tool_ss = np.random.SeedSequence(seed, spawn_key=(i,)).spawn(2)
        session = scenario.session(noise, sim_ss, **session_kwargs)
        est = run_tool(tool, session.send, config, np.random.default_rng(tool_ss))
        if est.status is Status.OK:
            values.append(est.value_bps)
        else:
            failures += 1
    if len(values) < 0.5 * n_trials:
        raise RuntimeError(f"{tool}: only {len(values)} of {n_trials} trials succeeded")
    return MonteCarloResult(np.array(values), failures)

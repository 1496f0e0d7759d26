"""Experiment configuration and sweep execution.

A sweep runs every (tool, cross rate, session) cell on a fresh simulated
session. Each cell's seed derives from the master seed and the cell's
identity only, so results do not depend on execution order or on the
number of worker processes.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import metrics
from .estimators import TOOLS, build_config, get_tool, run_tool
from .simnet import (CrossMode, CrossTrafficSpec, LinkSpec, PathSpec, RecvMode, Scenario,
                     TimestampNoiseModel)

log = logging.getLogger(__name__)

TOOL_ORDER = ("spruce", "igi", "pathload", "pathchirp")


class ConfigError(ValueError):
    pass


def default_links():
    # three routers on FastEthernet; 97.5 Mbps is the IP-layer bottleneck
    return [
        {"capacity_bps": 100e6, "queue_limit_bytes": 0, "prop_delay_ns": 0},
        {"capacity_bps": 97.5e6, "queue_limit_bytes": 0, "prop_delay_ns": 0},
        {"capacity_bps": 100e6, "queue_limit_bytes": 0, "prop_delay_ns": 0},
    ]


@dataclass
class ExperimentConfig:
    links: list = field(default_factory=default_links)
    cross_entry_link: int = 2
    cross_exit_link: int = 2
    cross_mode: str = "packet"
    cross_packet_size_bits: int = 12000
    cross_rates_bps: Optional[list] = None  # None: 0, step, 2 step, ... below capacity
    cross_rate_step_bps: float = 5e6
    sessions_per_point: int = 30
    tools: dict = field(default_factory=lambda: {name: {} for name in TOOL_ORDER})
    # recv_mode "auto" picks each tool's own timestamping (see estimators.TOOLS)
    noise: dict = field(default_factory=lambda: {"send_latency_us": [1.0, 6.0], "recv_mode": "auto",
                                                 "recv_latency_us": [5.0, 65.0]})
    overhead_bits: float = 0.0
    master_seed: int = 0
    fast_forward: bool = True
    warmup_ns: int = 20_000_000
    workers: int = 1
    output_dir: Optional[str] = None

    def __post_init__(self):
        if not self.links:
            raise ConfigError("path needs at least one link")
        if self.sessions_per_point < 1:
            raise ConfigError("sessions_per_point must be >= 1")
        for name in self.tools:
            if name not in TOOLS:
                raise ConfigError(f"unknown tool {name!r}")
        try:
            self.path
            CrossMode(self.cross_mode)
            self.noise_for("spruce")
        except ValueError as err:
            raise ConfigError(str(err)) from err
        cap = self.capacity_bps
        if self.cross_rates_bps is None:
            if self.cross_rate_step_bps <= 0:
                raise ConfigError("cross_rate_step_bps must be > 0")
            n = int(np.ceil(cap / self.cross_rate_step_bps - 1e-9))
            self.cross_rates_bps = [k * self.cross_rate_step_bps for k in range(n)]
        self.cross_rates_bps = [float(r) for r in self.cross_rates_bps]
        for r in self.cross_rates_bps:
            if not 0 <= r <= cap:
                raise ConfigError(f"cross rate {r} outside [0, {cap}]")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known - {"resolved_tools"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = {k: v for k, v in data.items() if k in known}
        if "links" in data:
            data["links"] = [{**{"queue_limit_bytes": 0, "prop_delay_ns": 0}, **link} for link in data["links"]]
        if "noise" in data:
            data["noise"] = {**cls().noise, **data["noise"]}
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(f"{path}: {err}") from err
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["resolved_tools"] = {name: dataclasses.asdict(self.tool_config(name)) for name in self.tools}
        return data

    @property
    def path(self) -> PathSpec:
        try:
            return PathSpec(tuple(LinkSpec(i + 1, float(l["capacity_bps"]), int(l.get("queue_limit_bytes", 0)),
                                           int(l.get("prop_delay_ns", 0))) for i, l in enumerate(self.links)))
        except (KeyError, TypeError) as err:
            raise ConfigError(f"bad link description: {err}") from err

    @property
    def capacity_bps(self) -> float:
        return metrics.path_capacity(self.path)

    def scenario(self, cross_rate_bps: float) -> Scenario:
        cross = ()
        if cross_rate_bps > 0:
            cross = (CrossTrafficSpec(1, self.cross_entry_link, self.cross_exit_link, cross_rate_bps,
                                      self.cross_packet_size_bits, CrossMode(self.cross_mode)),)
        return Scenario(self.path, cross)

    def expected_abw(self, cross_rate_bps: float) -> float:
        sc = self.scenario(cross_rate_bps)
        return metrics.ground_truth(sc.path, sc.cross, self.overhead_bits).path_available_bps

    def tool_config(self, name: str):
        try:
            return build_config(name, self.capacity_bps, self.tools.get(name) or {})
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err

    def noise_for(self, tool: str) -> TimestampNoiseModel:
        params = dict(self.noise)
        if params.get("recv_mode", "auto") == "auto":
            params["recv_mode"] = get_tool(tool).recv_mode
        params["recv_mode"] = RecvMode(params["recv_mode"])
        return TimestampNoiseModel(**params)


def session_seed(master_seed: int, tool: str, cross_rate_bps: float, session: int) -> np.random.SeedSequence:
    """Seed of one sweep cell, a pure function of its identity."""
    key = (zlib.crc32(tool.encode()), int(round(cross_rate_bps)), int(session))
    return np.random.SeedSequence(master_seed, spawn_key=key)


@dataclass
class SessionRow:
    tool: str
    cross_rate_bps: float
    session: int
    expected_abw_bps: float
    value_bps: Optional[float]
    low_bps: Optional[float]
    high_bps: Optional[float]
    bytes_sent: int
    duration_s: float
    status: str
    relative_error: Optional[float]
    intrusiveness: float
    probe_rate_bps: float


def run_session(config: ExperimentConfig, tool: str, cross_rate_bps: float, session: int,
                return_estimate: bool = False, records: Optional[list] = None):
    """One measurement session; measured probe records are appended to ``records`` if given."""
    sim_ss, tool_ss = session_seed(config.master_seed, tool, cross_rate_bps, session).spawn(2)
    sim = config.scenario(cross_rate_bps).session(
        config.noise_for(tool), sim_ss, fast_forward=config.fast_forward, warmup_ns=config.warmup_ns)
    send = sim.send
    if records is not None:
        def send(schedule):
            out = sim.send(schedule)
            records.extend(out)
            return out
    est = run_tool(tool, send, config.tool_config(tool), np.random.default_rng(tool_ss))
    expected = config.expected_abw(cross_rate_bps)
    ev = metrics.evaluate(est, expected, config.capacity_bps)
    row = SessionRow(tool, cross_rate_bps, session, expected, est.value_bps if est.ok else None,
                     est.low_bps, est.high_bps, est.bytes_sent, est.duration_s, est.status.value,
                     ev.relative_error, ev.intrusiveness, est.probe_rate_bps)
    return (row, est) if return_estimate else row


def _run_cell(args):
    config, tool, rate, session = args
    try:
        return run_session(config, tool, rate, session)
    except Exception:  # a crashing session is recorded, the sweep goes on
        log.exception("session %s/%s/%s failed", tool, rate, session)
        return SessionRow(tool, rate, session, config.expected_abw(rate), None, None, None, 0, 0.0,
                          "error", None, float("nan"), float("nan"))


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list

    @property
    def summary(self) -> list:
        from .results import aggregate
        return aggregate(self.rows)


def sweep_cells(config: ExperimentConfig):
    for tool in config.tools:
        for rate in config.cross_rates_bps:
            for s in range(config.sessions_per_point):
                yield config, tool, rate, s


def run_sweep(config: ExperimentConfig, workers: Optional[int] = None) -> SweepResult:
    """Run every cell; per-session failures are recorded as rows, never raised."""
    cells = list(sweep_cells(config))
    workers = config.workers if workers is None else workers
    log.info("sweep: %d sessions on %d worker(s)", len(cells), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, cells, chunksize=8))
    else:
        rows = [_run_cell(c) for c in cells]
    return SweepResult(config, rows)

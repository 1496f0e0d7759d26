"""The four available-bandwidth estimators, selectable by name.

Every tool consumes only measured probe records. ``build_config`` fills in
capacity-dependent defaults, ``run_tool`` drives one measurement session.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

from ..simnet import RecvMode
from ._common import Estimate, NoConvergence, Status
from .igi import IGIConfig, igi_estimate, igi_point_estimate, igi_turning_point, run_igi
from .pathchirp import (PathchirpConfig, chirp_gaps_ns, chirp_rate_estimate, pathchirp_build_chirp,
                        pathchirp_estimate, pathchirp_session_schedule, run_pathchirp)
from .pathload import PathloadConfig, Trend, classify_stream, pathload_estimate, run_pathload
from .spruce import SpruceConfig, run_spruce, spruce_estimate, spruce_pair_sample, spruce_schedule


@dataclass(frozen=True)
class ToolSpec:
    name: str
    config_cls: type
    run: Callable
    # receive timestamping as deployed: Pathload stamps in user space
    recv_mode: RecvMode


TOOLS = {
    "spruce": ToolSpec("spruce", SpruceConfig, run_spruce, RecvMode.KERNEL),
    "igi": ToolSpec("igi", IGIConfig, run_igi, RecvMode.KERNEL),
    "pathload": ToolSpec("pathload", PathloadConfig, run_pathload, RecvMode.USER),
    "pathchirp": ToolSpec("pathchirp", PathchirpConfig, run_pathchirp, RecvMode.KERNEL),
}


def get_tool(name: str) -> ToolSpec:
    try:
        return TOOLS[name]
    except KeyError:
        raise ValueError(f"unknown tool {name!r}; choose from {sorted(TOOLS)}") from None


def build_config(name: str, capacity_bps: float, overrides=None):
    """Tool config with the path capacity wired in where the tool needs it."""
    spec = get_tool(name)
    params = dict(overrides or {})
    fields = {f.name for f in dataclasses.fields(spec.config_cls)}
    unknown = set(params) - fields
    if unknown:
        raise ValueError(f"{name}: unknown config keys {sorted(unknown)}")
    if "capacity_bps" in fields:
        params.setdefault("capacity_bps", capacity_bps)
    if "rate_max_bps" in fields and name == "pathload":
        params.setdefault("rate_max_bps", capacity_bps)
    return spec.config_cls(**params)


def run_tool(name: str, send, config, rng, start_ns: int = 0) -> Estimate:
    return get_tool(name).run(send, config, rng, start_ns)


__all__ = [
    "Estimate", "NoConvergence", "Status", "TOOLS", "ToolSpec", "Trend", "build_config", "get_tool",
    "run_tool", "SpruceConfig", "IGIConfig", "PathloadConfig", "PathchirpConfig",
    "spruce_pair_sample", "spruce_estimate", "spruce_schedule", "run_spruce",
    "igi_turning_point", "igi_point_estimate", "igi_estimate", "run_igi",
    "classify_stream", "pathload_estimate", "run_pathload",
    "chirp_gaps_ns", "pathchirp_build_chirp", "pathchirp_session_schedule", "chirp_rate_estimate",
    "pathchirp_estimate", "run_pathchirp",
]

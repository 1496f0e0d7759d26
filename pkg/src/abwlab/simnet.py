"""Deterministic packet-level simulation of a fixed store-and-forward path.

Probe packets and cross traffic traverse an ordered chain of FIFO links.
Time is kept in integer nanoseconds and every rate-to-time conversion
rounds up, so a transmission never takes zero time.

A :class:`Session` is incremental: adaptive probing tools send one batch
(train, stream, chirp) at a time and receive :class:`ProbeRecord` objects
carrying only *measured* timestamps, i.e. true times plus timestamping
latency drawn from a :class:`TimestampNoiseModel`.

Long idle stretches between probe groups are skipped when the link has
provably drained ("fast-forward"); cross traffic is then restarted a
warm-up interval before the next probe so the queue state the probe sees
is the steady state of the cross traffic.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

NS_PER_S = 1_000_000_000
# far-future horizon; a vanishing cross rate never sends past it
MAX_TIME_NS = 2 ** 62


class SimulationError(ValueError):
    """Invalid path, cross-traffic or schedule handed to the simulator."""


@dataclass(frozen=True)
class LinkSpec:
    index: int
    capacity_bps: float
    queue_limit_bytes: int = 0  # 0 = unbounded
    prop_delay_ns: int = 0

    def __post_init__(self):
        if not self.capacity_bps > 0:
            raise SimulationError(f"link {self.index}: capacity must be > 0")
        if self.queue_limit_bytes < 0 or self.prop_delay_ns < 0:
            raise SimulationError(f"link {self.index}: negative queue limit or delay")


@dataclass(frozen=True)
class PathSpec:
    links: tuple

    def __post_init__(self):
        links = tuple(self.links)
        object.__setattr__(self, "links", links)
        if not links:
            raise SimulationError("path must contain at least one link")
        indices = [link.index for link in links]
        if len(set(indices)) != len(indices):
            raise SimulationError("link indices must be unique")

    @classmethod
    def from_capacities(cls, capacities: Sequence[float], queue_limit_bytes=0) -> "PathSpec":
        return cls(tuple(LinkSpec(i + 1, c, queue_limit_bytes) for i, c in enumerate(capacities)))

    def __len__(self):
        return len(self.links)

    def position(self, index: int) -> int:
        """0-based position of the link carrying ``index``."""
        for pos, link in enumerate(self.links):
            if link.index == index:
                return pos
        raise SimulationError(f"no link with index {index}")


class CrossMode(str, Enum):
    PACKET = "packet"
    FLUID = "fluid"


@dataclass(frozen=True)
class CrossTrafficSpec:
    """Constant-rate cross traffic entering at ``entry_link``, leaving after ``exit_link``.

    ``phase_offset_s=None`` lets the session draw a random phase from its seed.
    """

    flow_id: int
    entry_link: int
    exit_link: int
    rate_bps: float
    packet_size_bits: int = 12000
    mode: CrossMode = CrossMode.PACKET
    phase_offset_s: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", CrossMode(self.mode))
        if self.entry_link > self.exit_link:
            raise SimulationError(f"flow {self.flow_id}: entry_link > exit_link")
        if self.rate_bps < 0:
            raise SimulationError(f"flow {self.flow_id}: negative rate")
        if self.packet_size_bits <= 0:
            raise SimulationError(f"flow {self.flow_id}: packet size must be > 0")


class RecvMode(str, Enum):
    KERNEL = "kernel"
    USER = "user"


@dataclass(frozen=True)
class TimestampNoiseModel:
    """Timestamping latency added to true send/receive times.

    Send latency is uniform over ``send_latency_us``. In ``kernel`` receive
    mode the receive timestamp is exact; in ``user`` mode a uniform
    ``recv_latency_us`` delay is added. An optional heavy-tailed spike
    (Pareto, scale ``spike_scale_us``) models scheduler preemption.
    """

    send_latency_us: tuple = (1.0, 6.0)
    recv_mode: RecvMode = RecvMode.KERNEL
    recv_latency_us: tuple = (5.0, 65.0)
    spike_probability: float = 0.0
    spike_scale_us: float = 100.0
    spike_shape: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "recv_mode", RecvMode(self.recv_mode))
        object.__setattr__(self, "send_latency_us", tuple(float(v) for v in self.send_latency_us))
        object.__setattr__(self, "recv_latency_us", tuple(float(v) for v in self.recv_latency_us))
        for name in ("send_latency_us", "recv_latency_us"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise SimulationError(f"{name} must be a non-negative range, got {(lo, hi)}")
        if not 0.0 <= self.spike_probability <= 1.0:
            raise SimulationError("spike_probability must lie in [0, 1]")

    @classmethod
    def noiseless(cls) -> "TimestampNoiseModel":
        return cls(send_latency_us=(0.0, 0.0), recv_mode=RecvMode.KERNEL)

    @property
    def send_span_us(self) -> float:
        return self.send_latency_us[1] - self.send_latency_us[0]


@dataclass(frozen=True)
class ScheduleEntry:
    send_ns: int
    size_bits: int
    group: int
    position: int


@dataclass
class ProbeSchedule:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        prev = None
        for e in self.entries:
            if e.send_ns < 0:
                raise SimulationError("probe send times must be >= 0")
            if prev is not None and e.send_ns < prev:
                raise SimulationError("probe schedule has a negative gap")
            prev = e.send_ns

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def total_bits(self) -> int:
        return sum(e.size_bits for e in self.entries)

    @classmethod
    def from_times(cls, send_ns: Iterable[int], size_bits: int, group: int = 0) -> "ProbeSchedule":
        return cls([ScheduleEntry(int(t), size_bits, group, k) for k, t in enumerate(send_ns)])

    def extend(self, other: "ProbeSchedule") -> "ProbeSchedule":
        return ProbeSchedule(self.entries + other.entries)


@dataclass(slots=True)
class ProbeRecord:
    packet_id: int
    group: int
    position: int
    size_bits: int
    intended_send_ns: int
    measured_send_ns: int
    measured_recv_ns: Optional[int]
    lost: bool


@dataclass
class ProbeTrace:
    """True per-link timestamps of one probe packet (simulator-side only)."""

    packet_id: int
    size_bits: int
    send_ns: int
    arrivals: list = field(default_factory=list)
    departures: list = field(default_factory=list)
    dropped_at: Optional[int] = None  # 0-based link position
    recv_ns: Optional[int] = None

    @property
    def dropped(self) -> bool:
        return self.dropped_at is not None


@dataclass
class LinkStats:
    index: int
    capacity_bps: float
    window_ns: int
    probe_bits: int
    cross_bits: float
    busy_ns: int
    dropped_probes: int
    dropped_cross: int

    @property
    def utilization(self) -> float:
        if self.window_ns <= 0:
            return 0.0
        return (self.probe_bits + self.cross_bits) * NS_PER_S / (self.capacity_bps * self.window_ns)

    @property
    def cross_utilization(self) -> float:
        if self.window_ns <= 0:
            return 0.0
        return self.cross_bits * NS_PER_S / (self.capacity_bps * self.window_ns)


@dataclass
class SimResult:
    records: list
    link_stats: list
    traces: list


def tx_time_ns(size_bits, capacity_bps) -> int:
    """Transmission time of ``size_bits`` on a ``capacity_bps`` link, rounded up."""
    if float(capacity_bps).is_integer() and float(size_bits).is_integer():
        c = int(capacity_bps)
        return -(-int(size_bits) * NS_PER_S // c)
    return math.ceil(size_bits * NS_PER_S / capacity_bps)


def fifo_departure(arrival_ns: int, prev_departure_ns: int, size_bits, capacity_bps) -> int:
    """Departure time of a packet from a FIFO store-and-forward link."""
    return max(arrival_ns, prev_departure_ns) + tx_time_ns(size_bits, capacity_bps)


def apply_noise(true_send_ns, true_recv_ns, model: TimestampNoiseModel, rng: np.random.Generator):
    """Return measured (send, recv) timestamps; works on scalars or arrays."""
    send = np.asarray(true_send_ns, dtype=np.int64)
    recv = np.asarray(true_recv_ns, dtype=np.int64)
    lo, hi = model.send_latency_us
    send_noise = rng.uniform(lo, hi, size=send.shape) * 1000.0
    if model.recv_mode is RecvMode.USER:
        rlo, rhi = model.recv_latency_us
        recv_noise = rng.uniform(rlo, rhi, size=recv.shape) * 1000.0
    else:
        recv_noise = np.zeros(recv.shape)
    if model.spike_probability > 0:
        hit = rng.random(size=recv.shape) < model.spike_probability
        spikes = (rng.pareto(model.spike_shape, size=recv.shape) + 1.0) * model.spike_scale_us * 1000.0
        if model.recv_mode is RecvMode.USER:
            recv_noise = recv_noise + np.where(hit, spikes, 0.0)
        else:
            send_noise = send_noise + np.where(hit, spikes, 0.0)
    measured_send = send + np.rint(send_noise).astype(np.int64)
    measured_recv = recv + np.rint(recv_noise).astype(np.int64)
    if measured_send.ndim == 0:
        return int(measured_send), int(measured_recv)
    return measured_send, measured_recv


class _EntryFlow:
    """Packet-level CBR source feeding one link: packet k arrives at phase + k * period."""

    __slots__ = ("flow_id", "size", "phase_ns", "rate", "int_rate", "exit_pos", "k", "next_t")

    def __init__(self, spec: CrossTrafficSpec, phase_ns: int, exit_pos: int):
        self.flow_id = spec.flow_id
        self.size = spec.packet_size_bits
        self.rate = spec.rate_bps
        self.int_rate = int(spec.rate_bps) if float(spec.rate_bps).is_integer() else None
        self.phase_ns = phase_ns
        self.exit_pos = exit_pos
        self.k = 0
        self.next_t = self.time_of(0)

    def time_of(self, k: int) -> int:
        if self.int_rate is not None:
            return self.phase_ns + (k * self.size * NS_PER_S) // self.int_rate
        offset = k * self.size * NS_PER_S / self.rate
        if offset >= MAX_TIME_NS:
            return MAX_TIME_NS
        return self.phase_ns + math.floor(offset)

    def index_at(self, t_ns: int) -> int:
        """Smallest packet index whose arrival is at or after ``t_ns``."""
        k = max(0, int((t_ns - self.phase_ns) * self.rate / (self.size * NS_PER_S)) - 1)
        while self.time_of(k) < t_ns:
            k += 1
        while k > 0 and self.time_of(k - 1) >= t_ns:
            k -= 1
        return k

    def advance(self):
        self.k += 1
        self.next_t = self.time_of(self.k)


class _Link:
    __slots__ = (
        "pos", "spec", "cap", "limit_bits", "prop", "fluid_rate", "total_rate", "max_cross_bits",
        "free_at", "work", "t_ref", "last_t", "entry", "pending", "pend_seq",
        "window_start", "window_end", "probe_bits", "cross_bits", "busy_ns",
        "dropped_probes", "dropped_cross", "tx_cache", "ghosts",
    )

    def __init__(self, pos: int, spec: LinkSpec):
        self.pos = pos
        self.spec = spec
        cap = spec.capacity_bps
        self.cap = int(cap) if float(cap).is_integer() else cap
        self.limit_bits = spec.queue_limit_bytes * 8
        self.prop = spec.prop_delay_ns
        self.fluid_rate = 0.0
        self.total_rate = 0.0
        self.max_cross_bits = 0
        self.free_at = 0
        self.work = 0.0  # backlog in bits at t_ref, used when fluid traffic is present
        self.t_ref = 0
        self.last_t = -1
        self.entry = []
        self.pending = []
        self.pend_seq = 0
        self.window_start = None
        self.window_end = None
        self.probe_bits = 0
        self.cross_bits = 0.0
        self.busy_ns = 0
        self.dropped_probes = 0
        self.dropped_cross = 0
        self.tx_cache = {}
        # (flow, first k, end k) of through-traffic skipped upstream, counted in link_stats
        self.ghosts = []

    def tx(self, size):
        t = self.tx_cache.get(size)
        if t is None:
            t = self.tx_cache[size] = tx_time_ns(size, self.cap)
        return t

    def serve(self, t: int, size: int):
        """Enqueue a packet arriving at ``t``; return its departure time or None if dropped."""
        if self.fluid_rate == 0.0:
            free_at = self.free_at
            if self.limit_bits and free_at > t:
                backlog = (free_at - t) * self.cap / NS_PER_S
                if backlog + size > self.limit_bits:
                    return None
            tx = self.tx(size)
            dep = (free_at if free_at > t else t) + tx
            self.free_at = dep
            self.busy_ns += tx
            self.last_t = t
            return dep
        work = self.work + (self.fluid_rate - self.cap) * (t - self.t_ref) / NS_PER_S
        if work < 0.0:
            work = 0.0
        self.t_ref = t
        self.last_t = t
        if self.limit_bits and work + size > self.limit_bits:
            self.work = work
            return None
        dep = t + math.ceil((work + size) * NS_PER_S / self.cap)
        self.work = work + size
        self.busy_ns += self.tx(size)
        return dep

    def backlog_bits(self, t: int) -> float:
        if self.fluid_rate == 0.0:
            return max(0, self.free_at - t) * self.cap / NS_PER_S
        return max(0.0, self.work + (self.fluid_rate - self.cap) * (t - self.t_ref) / NS_PER_S)

    def drained_by(self, t: int) -> bool:
        """True if the link is certainly idle of pre-``t`` probe work by time ``t``."""
        headroom = self.cap - self.total_rate
        if headroom <= 0:
            return False
        start = max(self.last_t, 0)
        burst = self.backlog_bits(start) + self.max_cross_bits * max(1, len(self.entry) + 1)
        return start + burst * NS_PER_S / headroom < t

    def in_window(self, t: int) -> bool:
        return self.window_start is not None and t >= self.window_start


class Session:
    """One deterministic simulation run; probes are sent batch by batch.

    Batches must be handed over in non-decreasing send-time order. All
    randomness (cross-traffic phases and timestamp noise) derives from
    ``seed``.
    """

    def __init__(
        self,
        path: PathSpec,
        cross: Sequence[CrossTrafficSpec] = (),
        noise: Optional[TimestampNoiseModel] = None,
        seed=0,
        fast_forward: bool = True,
        warmup_ns: int = 20_000_000,
        keep_traces: bool = False,
    ):
        if not isinstance(path, PathSpec) or not path.links:
            raise SimulationError("path must be a non-empty PathSpec")
        self.path = path
        self.cross = tuple(cross)
        self.noise = noise if noise is not None else TimestampNoiseModel()
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        phase_ss, noise_ss = ss.spawn(2)
        self._noise_rng = np.random.default_rng(noise_ss)
        phase_rng = np.random.default_rng(phase_ss)
        self.fast_forward = fast_forward
        self.warmup_ns = int(warmup_ns)
        self.keep_traces = keep_traces
        self.links = [_Link(pos, spec) for pos, spec in enumerate(path.links)]
        for flow in self.cross:
            entry = path.position(flow.entry_link)
            exit_ = path.position(flow.exit_link)
            if entry > exit_:
                raise SimulationError(f"flow {flow.flow_id}: entry link is downstream of exit link")
            if flow.rate_bps == 0:
                continue
            for link in self.links[entry:exit_ + 1]:
                link.total_rate += flow.rate_bps
                if flow.mode is CrossMode.FLUID:
                    link.fluid_rate += flow.rate_bps
                else:
                    link.max_cross_bits = max(link.max_cross_bits, flow.packet_size_bits)
            if flow.mode is CrossMode.PACKET:
                period_ns = flow.packet_size_bits * NS_PER_S / flow.rate_bps
                if flow.phase_offset_s is None:
                    phase = int(phase_rng.uniform(0.0, min(period_ns, MAX_TIME_NS)))
                else:
                    phase = int(round(flow.phase_offset_s * NS_PER_S))
                self.links[entry].entry.append(_EntryFlow(flow, phase, exit_))
        self._next_id = 0
        self._last_send = 0
        self.bits_sent = 0
        self.traces = []

    # -- cross traffic -------------------------------------------------
    def _skip(self, link: _Link, until: int):
        """Drop cross-only traffic before ``until`` and restart the link idle there."""
        for flow in link.entry:
            if flow.next_t >= until:
                continue
            k_until = flow.index_at(until)
            if link.window_start is not None:
                first_counted = max(flow.k, flow.index_at(link.window_start))
                link.cross_bits += max(0, k_until - first_counted) * flow.size
            for down in self.links[link.pos + 1:flow.exit_pos + 1]:
                down.ghosts.append((flow, flow.k, k_until))
            flow.k = k_until
            flow.next_t = flow.time_of(k_until)
        pending = link.pending
        while pending and pending[0][0] < until:
            t, _, size, _ = heapq.heappop(pending)
            if link.in_window(t):
                link.cross_bits += size
        link.free_at = min(link.free_at, until)
        link.work = 0.0
        link.t_ref = until
        link.last_t = until

    def _advance(self, link: _Link, until: int):
        """Process every cross packet arriving at ``link`` no later than ``until``."""
        if (self.fast_forward and until - self.warmup_ns > link.last_t
                and link.drained_by(until - self.warmup_ns)):
            self._skip(link, until - self.warmup_ns)
        entry = link.entry
        pending = link.pending
        nxt = self.links[link.pos + 1] if link.pos + 1 < len(self.links) else None
        while True:
            t = None
            src = None
            for flow in entry:
                if flow.next_t <= until and (t is None or flow.next_t < t):
                    t = flow.next_t
                    src = flow
            if pending and pending[0][0] <= until and (t is None or pending[0][0] < t):
                t, _, size, exit_pos = heapq.heappop(pending)
                src = None
            elif src is None:
                return
            else:
                size = src.size
                exit_pos = src.exit_pos
                src.advance()
            dep = link.serve(t, size)
            counted = link.in_window(t)
            if dep is None:
                link.dropped_cross += 1
                continue
            if counted:
                link.cross_bits += size
            if exit_pos > link.pos and nxt is not None:
                nxt.pend_seq += 1
                heapq.heappush(nxt.pending, (dep + link.prop, nxt.pend_seq, size, exit_pos))

    # -- probes ----------------------------------------------------------
    def send(self, schedule: ProbeSchedule) -> list:
        """Push a batch of probes through the path and return their records."""
        entries = list(schedule)
        if not entries:
            return []
        if entries[0].send_ns < self._last_send:
            raise SimulationError("batch starts before the previous batch's last probe")
        n = len(entries)
        ids = list(range(self._next_id, self._next_id + n))
        self._next_id += n
        self._last_send = entries[-1].send_ns
        sizes = [e.size_bits for e in entries]
        self.bits_sent += sum(sizes)
        times = [e.send_ns for e in entries]
        alive = list(range(n))
        traces = None
        if self.keep_traces:
            traces = [ProbeTrace(ids[j], sizes[j], times[j]) for j in range(n)]
        dropped = [False] * n
        for link in self.links:
            if not alive:
                break
            if link.window_start is None:
                link.window_start = times[alive[0]]
            survivors = []
            new_times = []
            for j, t in zip(alive, (times[j] for j in alive)):
                self._advance(link, t)
                dep = link.serve(t, sizes[j])
                if traces is not None:
                    traces[j].arrivals.append(t)
                if dep is None:
                    link.dropped_probes += 1
                    dropped[j] = True
                    if traces is not None:
                        traces[j].dropped_at = link.pos
                    continue
                link.probe_bits += sizes[j]
                if traces is not None:
                    traces[j].departures.append(dep)
                survivors.append(j)
                new_times.append(dep + link.prop)
            link.window_end = max(link.window_end or 0, times[alive[-1]])
            for j, t in zip(survivors, new_times):
                times[j] = t
            alive = survivors
        recv = np.array([0 if dropped[j] else times[j] for j in range(n)], dtype=np.int64)
        intended = np.array([e.send_ns for e in entries], dtype=np.int64)
        m_send, m_recv = apply_noise(intended, recv, self.noise, self._noise_rng)
        records = []
        for j, e in enumerate(entries):
            records.append(ProbeRecord(
                ids[j], e.group, e.position, e.size_bits, e.send_ns, int(m_send[j]),
                None if dropped[j] else int(m_recv[j]), dropped[j],
            ))
        if traces is not None:
            for j in range(n):
                if not dropped[j]:
                    traces[j].recv_ns = times[j]
            self.traces.extend(traces)
        return records

    def link_stats(self) -> list:
        out = []
        for link in self.links:
            start = link.window_start or 0
            end = link.window_end or start
            window = end - start
            cross_bits = link.cross_bits + link.fluid_rate * window / NS_PER_S
            for flow, k0, k1 in link.ghosts:
                first = max(k0, flow.index_at(start))
                last = min(k1, flow.index_at(end + 1))
                cross_bits += max(0, last - first) * flow.size
            out.append(LinkStats(
                link.spec.index, link.spec.capacity_bps, window, link.probe_bits, cross_bits,
                link.busy_ns, link.dropped_probes, link.dropped_cross,
            ))
        return out


def simulate(path, cross, probes: ProbeSchedule, noise=None, seed=0, **kwargs) -> SimResult:
    """Run a whole schedule through a fresh :class:`Session`."""
    if not isinstance(path, PathSpec) or not path.links:
        raise SimulationError("path must be a non-empty PathSpec")
    kwargs.setdefault("keep_traces", True)
    session = Session(path, cross, noise, seed, **kwargs)
    records = session.send(probes)
    return SimResult(records, session.link_stats(), session.traces)


TRACE_COLUMNS = ("packet_id", "group", "position", "intended_send_ns",
                 "measured_send_ns", "measured_recv_ns", "lost")


def write_trace_csv(records: Iterable[ProbeRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in records:
            w.writerow([r.packet_id, r.group, r.position, r.intended_send_ns, r.measured_send_ns,
                        "" if r.measured_recv_ns is None else r.measured_recv_ns, int(r.lost)])


@dataclass(frozen=True)
class Scenario:
    """A path together with the cross traffic loading it."""

    path: PathSpec
    cross: tuple = ()

    def session(self, noise=None, seed=0, **kwargs) -> Session:
        return Session(self.path, self.cross, noise, seed, **kwargs)


def bottleneck_scenario(capacity_bps: float, cross_rate_bps: float = 0.0, mode=CrossMode.PACKET,
                        packet_size_bits: int = 12000, queue_limit_bytes: int = 0) -> Scenario:
    """Single-link path carrying one constant-rate cross flow."""
    path = PathSpec((LinkSpec(1, capacity_bps, queue_limit_bytes),))
    cross = (CrossTrafficSpec(1, 1, 1, cross_rate_bps, packet_size_bits, mode),) if cross_rate_bps else ()
    return Scenario(path, cross)

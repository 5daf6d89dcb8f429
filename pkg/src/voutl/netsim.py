"""Seeded discrete-event simulation of control loops over lossy multi-hop paths.

Each hop is served by a FIFO server; hops that name the same
``shared_medium_group`` share one server, which is how contention on a common
radio channel is approximated. Delay-only hops (the Internet backbone) have no
queue but never reorder packets.
"""
from __future__ import annotations

import enum
import heapq
import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .admission import (AcpRateController, CurveUnavailable, PolicyConfig, PolicyKind,
                        SensorView, ThresholdState, adapt_threshold, decide,
                        fit_delay_curve)
from .augmentation import AckedHistory
from .belief import StateProbModel, informative_probs
from .control import ControllerState, LoopModel, lqg_window_cost
from .netstats import AckRecord, NetStats, NetStatsConfig, loss_prob

COST_WINDOWS = 5
MIN_STEPS_FOR_WINDOWS = 7001
THRESHOLD_EPOCH_STEPS = 10


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HopModel:
    """One traversal: service time, loss on completion, optional shared server.

    ``distribution`` is ``deterministic`` (``service_ms`` plus exponential
    jitter with mean ``jitter_ms``), ``exponential`` (mean ``service_ms``) or
    ``lognormal`` (median ``service_ms``, shape ``sigma``). ``queued=False``
    makes the hop a pure order-preserving delay line.
    """

    service_ms: float
    loss_prob: float = 0.0
    jitter_ms: float = 0.0
    distribution: str = "deterministic"
    sigma: float = 0.0
    queue_capacity: int | None = None
    shared_medium_group: str | None = None
    queued: bool = True

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ConfigError(f"loss probability {self.loss_prob} outside [0, 1]")
        if self.service_ms < 0 or self.jitter_ms < 0:
            raise ConfigError("service times must be nonnegative")
        if self.distribution not in ("deterministic", "exponential", "lognormal"):
            raise ConfigError(f"unknown service distribution {self.distribution!r}")
        if self.distribution != "deterministic" and self.service_ms <= 0:
            raise ConfigError("random service needs a positive mean")
        if self.queue_capacity is not None and self.queue_capacity < 0:
            raise ConfigError("queue capacity must be nonnegative")

    def sample_service(self, rng: np.random.Generator) -> float:
        if self.distribution == "deterministic":
            extra = rng.exponential(self.jitter_ms) if self.jitter_ms > 0 else 0.0
            return self.service_ms + extra
        if self.distribution == "exponential":
            return rng.exponential(self.service_ms)
        return self.service_ms * math.exp(self.sigma * rng.standard_normal())


@dataclass(frozen=True)
class BackgroundFlow:
    period_ms: float
    path: tuple[str, ...]
    payload_bytes: int = 20
    phase_ms: float = 5.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    hops: dict
    data_paths: tuple
    ack_paths: tuple
    background: tuple = ()
    steps: int = 8000
    T: float = 10.0
    payload_bytes: int = 20
    seed: int = 0
    model: LoopModel = field(default_factory=LoopModel.scalar)

    @property
    def loops(self) -> int:
        return len(self.data_paths)

    def validate(self) -> None:
        if self.loops < 1:
            raise ConfigError("at least one loop is required")
        if len(self.ack_paths) != self.loops:
            raise ConfigError("one ACK path per loop is required")
        if self.steps < 1:
            raise ConfigError("steps must be positive")
        if self.T <= 0:
            raise ConfigError("sampling period must be positive")
        if self.model.T != self.T:
            raise ConfigError("loop model and scenario disagree on the sampling period")
        for path in (*self.data_paths, *self.ack_paths, *(f.path for f in self.background)):
            if not path:
                raise ConfigError("paths must be nonempty")
            for hop in path:
                if hop not in self.hops:
                    raise ConfigError(f"unknown hop {hop!r}")
        for flow in self.background:
            if flow.period_ms <= 0:
                raise ConfigError("background period must be positive")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


# scenario builders ---------------------------------------------------------

def wireless_hop(loss=0.02, group=None, capacity=8, service_ms=2.0, jitter_ms=1.0) -> HopModel:
    return HopModel(service_ms=service_ms, jitter_ms=jitter_ms, loss_prob=loss,
                    queue_capacity=capacity, shared_medium_group=group)


def local_two_hop(loops=3, steps=8000, seed=0, loss=0.02, service_ms=2.0, jitter_ms=1.0,
                  background_period_ms=10.0, capacity=8, model: LoopModel | None = None,
                  T=10.0) -> ScenarioConfig:
    """Loops closed over sensor -> relay -> controller with a busy shared channel."""
    hops = {"bg": wireless_hop(loss, "air", capacity, service_ms, jitter_ms)}
    data, acks = [], []
    for i in range(loops):
        hops[f"s{i}>r{i}"] = wireless_hop(loss, "air", capacity, service_ms, jitter_ms)
        hops[f"r{i}>c{i}"] = wireless_hop(loss, f"relay{i}", capacity, service_ms, jitter_ms)
        hops[f"c{i}>r{i}"] = wireless_hop(loss, f"relay{i}", capacity, service_ms, jitter_ms)
        hops[f"r{i}>s{i}"] = wireless_hop(loss, "air", capacity, service_ms, jitter_ms)
        data.append((f"s{i}>r{i}", f"r{i}>c{i}"))
        acks.append((f"c{i}>r{i}", f"r{i}>s{i}"))
    background = (BackgroundFlow(background_period_ms, ("bg",)),) if background_period_ms else ()
    return ScenarioConfig("local_2hop", hops, tuple(data), tuple(acks), background, steps, T,
                          seed=seed, model=model or LoopModel.scalar(T=T))


def internet(loops=3, steps=8000, seed=0, loss=0.02, service_ms=2.0, jitter_ms=1.0,
             backbone_median_ms=25.0, backbone_sigma=0.5, backbone_loss=0.01, capacity=8,
             model: LoopModel | None = None, T=10.0) -> ScenarioConfig:
    """Wireless access hop shared by all loops plus a variable-delay backbone."""
    hops = {}
    data, acks = [], []
    for i in range(loops):
        hops[f"s{i}>gw"] = wireless_hop(loss, "air", capacity, service_ms, jitter_ms)
        hops[f"gw>s{i}"] = wireless_hop(loss, "air", capacity, service_ms, jitter_ms)
        for d in ("up", "down"):
            hops[f"bb{i}{d}"] = HopModel(service_ms=backbone_median_ms, distribution="lognormal",
                                         sigma=backbone_sigma, loss_prob=backbone_loss,
                                         queued=False)
        data.append((f"s{i}>gw", f"bb{i}up"))
        acks.append((f"bb{i}down", f"gw>s{i}"))
    return ScenarioConfig("internet", hops, tuple(data), tuple(acks), (), steps, T,
                          seed=seed, model=model or LoopModel.scalar(T=T))


def ideal(loops=1, steps=8000, seed=0, model: LoopModel | None = None, T=10.0) -> ScenarioConfig:
    """Zero-delay lossless channel."""
    hops = {}
    data, acks = [], []
    for i in range(loops):
        hops[f"d{i}"] = HopModel(service_ms=0.0)
        hops[f"a{i}"] = HopModel(service_ms=0.0)
        data.append((f"d{i}",))
        acks.append((f"a{i}",))
    return ScenarioConfig("ideal", hops, tuple(data), tuple(acks), (), steps, T,
                          seed=seed, model=model or LoopModel.scalar(T=T))


def single_hop(loops=1, steps=8000, seed=0, service_ms=1.0, loss=0.0, capacity=None,
               model: LoopModel | None = None, T=10.0) -> ScenarioConfig:
    hops = {}
    data, acks = [], []
    for i in range(loops):
        hops[f"d{i}"] = HopModel(service_ms=service_ms, loss_prob=loss, queue_capacity=capacity)
        hops[f"a{i}"] = HopModel(service_ms=service_ms, loss_prob=loss, queue_capacity=capacity)
        data.append((f"d{i}",))
        acks.append((f"a{i}",))
    return ScenarioConfig("single_hop", hops, tuple(data), tuple(acks), (), steps, T,
                          seed=seed, model=model or LoopModel.scalar(T=T))


SCENARIOS = {
    "local_2hop": local_two_hop,
    "internet": internet,
    "ideal": ideal,
    "single_hop": single_hop,
}


# events -------------------------------------------------------------------

class EventKind(enum.IntEnum):
    """Tie-break order for events sharing a timestamp."""

    ACK_DELIVER = 0
    DELIVER = 1
    HOP_DEPART = 2
    TIMEOUT_SCAN = 3
    EPOCH = 4
    SAMPLE = 5
    ADMIT_DECISION = 6
    CONTROL = 7


class SimEvent(NamedTuple):
    """Heap entry; ``seq`` is unique so ``payload`` is never compared."""

    time: float
    kind: EventKind
    loop: int
    seq: int
    payload: object = None


@dataclass(slots=True)
class Packet:
    kind: str  # "data", "ack" or "bg"
    loop: int
    path: tuple
    gen: int = -1
    recv: int = -1
    x: np.ndarray | None = None
    hop_index: int = 0


class _Server:
    __slots__ = ("queue", "busy", "rng", "capacity", "last_departure")

    def __init__(self, rng, capacity):
        self.queue = deque()
        self.busy = False
        self.rng = rng
        self.capacity = capacity
        self.last_departure = -math.inf


# results ------------------------------------------------------------------

@dataclass
class LoopTrace:
    x: np.ndarray
    u: np.ndarray
    aoi: np.ndarray
    admissions: list
    deliveries: list
    acks: list
    lam: list
    decision_time_s: float = 0.0
    decisions: int = 0


@dataclass
class RunResult:
    scenario: str
    policy: PolicyConfig
    seed: int
    steps: int
    T: float
    loops: list
    window_costs: np.ndarray
    counters: dict

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.window_costs))

    def loop_mean_costs(self) -> np.ndarray:
        return self.window_costs.mean(axis=1)

    @property
    def mean_aoi(self) -> float:
        return float(np.mean([lp.aoi.mean() for lp in self.loops]))

    @property
    def admission_rate(self) -> float:
        """Admissions per second per loop."""
        secs = self.steps * self.T / 1000.0
        return float(np.mean([len(lp.admissions) for lp in self.loops])) / secs

    @property
    def mean_decision_time(self) -> float:
        total = sum(lp.decision_time_s for lp in self.loops)
        count = sum(lp.decisions for lp in self.loops)
        return total / count if count else 0.0


def aoi_trace(result: RunResult) -> np.ndarray:
    """Per-loop controller AoI derived from the delivery log.

    Before the first delivery the age is reported as ``k + 1``.
    """
    out = np.empty((len(result.loops), result.steps), dtype=np.int64)
    for i, loop in enumerate(result.loops):
        deliveries = sorted(loop.deliveries, key=lambda d: (d[1], d[0]))
        j = 0
        nu = None
        for k in range(result.steps):
            while j < len(deliveries) and deliveries[j][1] <= k:
                g = deliveries[j][0]
                if nu is None or g > nu:
                    nu = g
                j += 1
            out[i, k] = k + 1 if nu is None else k - nu
    return out


# sensor middleware --------------------------------------------------------

class Sensor:
    def __init__(self, loop: int, model: LoopModel, policy: PolicyConfig,
                 rng_pred: np.random.Generator, T: float):
        self.loop = loop
        self.model = model
        self.policy = policy
        self.T = T
        self.stats = NetStats(NetStatsConfig(T=T))
        self.acked = AckedHistory(model)
        self.threshold = ThresholdState(lam=policy.lam)
        self.acp = AcpRateController(max_rate=1000.0 / T)
        self.threshold.target_rate = self.acp.rate
        self.rng_pred = rng_pred
        self.noise_factor = _noise_factor(model.Sigma)
        self._curve = None
        self._curve_samples = 0
        self._tokens = 1.0
        self.epoch_admissions = 0
        self.decision_time = 0.0
        self.decisions = 0
        self._uses_curve = policy.kind.uses_curve
        self._uses_belief = policy.kind.uses_belief

    def curve(self):
        count = len(self.stats.ist_delay_samples)
        if count >= self._curve_samples + 8 or (self._curve is None and count >= 8
                                                and count != self._curve_samples):
            try:
                self._curve = fit_delay_curve(self.stats.ist_delay_samples)
            except CurveUnavailable:
                self._curve = None
            self._curve_samples = count
        return self._curve

    def belief(self, now_ms: float):
        stats = self.stats
        if not stats.has_model:
            model = None
        else:
            t_max = stats.t_max
            # zero-delay statistics: every earlier admission is already processed
            model = StateProbModel(loss_prob(stats), t_max if t_max > 0 else 1e-9)
        return informative_probs(stats.ops, now_ms, model, self.policy.max_node_size,
                                 self.policy.renormalize)

    def sample(self, k: int, x_k: np.ndarray, now_ms: float, oracle=None) -> int:
        policy = self.policy
        kind = policy.kind
        self.acked.record_sample(k, x_k)
        self.acked.advance(k)
        self._tokens = min(1.0, self._tokens + self.acp.rate * self.T / 1000.0)
        view = SensorView(k=k, now_ms=now_ms, x_k=x_k, stats=self.stats, acked=self.acked,
                          lam=self.threshold.lam, ist_inst=self.stats.ist_since_last(now_ms),
                          acp_due=self._tokens >= 1.0 - 1e-12)
        if self._uses_curve:
            view.curve = self.curve()
        if self._uses_belief:
            view.belief = self.belief(now_ms)
        if kind is PolicyKind.VOU_DYN_W:
            z = self.rng_pred.standard_normal((policy.t_pr, self.model.n))
            view.noise = z @ self.noise_factor.T
        if kind is PolicyKind.ORACLE_COST:
            view.oracle_estimate = oracle
        t0 = time.perf_counter()
        delta = decide(policy, view)
        self.decision_time += time.perf_counter() - t0
        self.decisions += 1
        if delta:
            self.epoch_admissions += 1
            if kind is PolicyKind.ACP_RATE:
                self._tokens -= 1.0
        return delta

    def threshold_epoch(self, epoch_s: float) -> None:
        self.threshold.record_epoch(self.epoch_admissions, epoch_s)
        self.epoch_admissions = 0
        if self.policy.adapt_threshold:
            adapt_threshold(self.threshold)

    def acp_epoch(self, mean_aoi: float) -> None:
        self.threshold.target_rate = self.acp.update(mean_aoi, len(self.stats.ops))


def _noise_factor(Sigma: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(Sigma)
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


# simulation ---------------------------------------------------------------

class Simulation:
    ROLE_PLANT, ROLE_PREDICTION, ROLE_SERVER, ROLE_BACKGROUND = range(4)

    def __init__(self, config: ScenarioConfig, policy: PolicyConfig):
        config.validate()
        if policy.proc_delay_ms >= config.T:
            raise ConfigError("processing delay must be shorter than the sampling period")
        self.config = config
        self.policy = policy
        self.model = config.model
        self.T = config.T
        self.heap: list = []
        self._seq = 0
        self.counters = dict(admitted=0, delivered=0, lost_in_hop=0, dropped_full=0,
                             acks_sent=0, acks_delivered=0, acks_lost=0, bg_sent=0)
        n, m, steps, N = self.model.n, self.model.m, config.steps, config.loops
        self.servers = {}
        for idx, name in enumerate(sorted(self._server_names())):
            rng = self._rng(self.ROLE_SERVER, idx)
            cap = min((h.queue_capacity for h in config.hops.values()
                       if (h.shared_medium_group or None) == name and h.queue_capacity is not None),
                      default=None)
            if name in config.hops and config.hops[name].shared_medium_group is None:
                cap = config.hops[name].queue_capacity
            self.servers[name] = _Server(rng, cap)
        self.x = [np.zeros(n) for _ in range(N)]
        factor = _noise_factor(self.model.Sigma)
        self.noise = [self._rng(self.ROLE_PLANT, i).standard_normal((steps, n)) @ factor.T
                      for i in range(N)]
        self.controllers = [ControllerState(self.model) for _ in range(N)]
        self.sensors = [Sensor(i, self.model, policy, self._rng(self.ROLE_PREDICTION, i), self.T)
                        for i in range(N)]
        self.arrivals = [[] for _ in range(N)]
        self.traces = [LoopTrace(np.zeros((steps, n)), np.zeros((steps, m)),
                                 np.zeros(steps, dtype=np.int64), [], [], [], [])
                       for _ in range(N)]

    def _server_names(self):
        return {h.shared_medium_group or name for name, h in self.config.hops.items()}

    def _server_of(self, hop_name):
        hop = self.config.hops[hop_name]
        return self.servers[hop.shared_medium_group or hop_name]

    def _rng(self, role: int, index: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.config.seed, spawn_key=(role, index))
        return np.random.Generator(np.random.PCG64(ss))

    def _push(self, t, kind, loop, payload=None):
        self._seq += 1
        heapq.heappush(self.heap, SimEvent(t, kind, loop, self._seq, payload))

    # packet movement

    def _enqueue(self, pkt: Packet, now: float) -> None:
        hop_name = pkt.path[pkt.hop_index]
        hop = self.config.hops[hop_name]
        server = self._server_of(hop_name)
        if not hop.queued:
            depart = max(now + hop.sample_service(server.rng), server.last_departure)
            server.last_departure = depart
            self._push(depart, EventKind.HOP_DEPART, pkt.loop, (pkt, hop_name))
            return
        if server.busy:
            if server.capacity is not None and len(server.queue) >= server.capacity:
                self._drop(pkt)
                return
            server.queue.append((pkt, hop_name))
            return
        self._start_service(server, pkt, hop_name, now)

    def _start_service(self, server, pkt, hop_name, now):
        server.busy = True
        duration = self.config.hops[hop_name].sample_service(server.rng)
        self._push(now + duration, EventKind.HOP_DEPART, pkt.loop, (pkt, hop_name))

    def _drop(self, pkt):
        if pkt.kind == "data":
            self.counters["dropped_full"] += 1
        elif pkt.kind == "ack":
            self.counters["acks_lost"] += 1

    def _on_depart(self, ev: SimEvent):
        pkt, hop_name = ev.payload
        hop = self.config.hops[hop_name]
        server = self._server_of(hop_name)
        if hop.queued:
            if server.queue:
                nxt, nxt_hop = server.queue.popleft()
                self._start_service(server, nxt, nxt_hop, ev.time)
            else:
                server.busy = False
        if hop.loss_prob > 0 and server.rng.random() < hop.loss_prob:
            if pkt.kind == "data":
                self.counters["lost_in_hop"] += 1
            elif pkt.kind == "ack":
                self.counters["acks_lost"] += 1
            return
        pkt.hop_index += 1
        if pkt.hop_index < len(pkt.path):
            self._enqueue(pkt, ev.time)
        elif pkt.kind == "data":
            self._push(ev.time, EventKind.DELIVER, pkt.loop, pkt)
        elif pkt.kind == "ack":
            self._push(ev.time, EventKind.ACK_DELIVER, pkt.loop, pkt)

    # handlers

    def _on_deliver(self, ev: SimEvent):
        pkt = ev.payload
        i = pkt.loop
        recv = max(pkt.gen, math.ceil(ev.time / self.T - 1e-9))
        self.counters["delivered"] += 1
        self.arrivals[i].append((pkt.gen, pkt.x))
        self.traces[i].deliveries.append((pkt.gen, recv))
        ack = Packet("ack", i, self.config.ack_paths[i], gen=pkt.gen, recv=recv)
        self.counters["acks_sent"] += 1
        self._enqueue(ack, ev.time)

    def _on_ack(self, ev: SimEvent):
        pkt = ev.payload
        sensor = self.sensors[pkt.loop]
        self.counters["acks_delivered"] += 1
        sensor.stats.process_ack(AckRecord(pkt.gen, pkt.recv, ev.time), ev.time)
        sensor.acked.add_ack(pkt.gen, pkt.recv)
        self.traces[pkt.loop].acks.append((pkt.gen, pkt.recv, ev.time))

    def _admit(self, i: int, k: int, now: float):
        sensor = self.sensors[i]
        sensor.stats.record_admission(k, now)
        self.counters["admitted"] += 1
        self.traces[i].admissions.append(k)
        pkt = Packet("data", i, self.config.data_paths[i], gen=k, x=sensor.acked.sample(k))
        self._enqueue(pkt, now)

    def _on_sample(self, i: int, k: int, now: float):
        sensor = self.sensors[i]
        oracle = None
        if self.policy.kind is PolicyKind.ORACLE_COST:
            oracle = self.controllers[i].estimate_at(k, self.arrivals[i])
        if sensor.sample(k, self.x[i].copy(), now, oracle):
            delay = self.policy.proc_delay_ms
            if delay > 0:
                self._push(now + delay, EventKind.ADMIT_DECISION, i, k)
            else:
                self._admit(i, k, now)

    def _on_control(self, i: int, k: int):
        ctrl = self.controllers[i]
        u = ctrl.tick(k, self.arrivals[i])
        self.arrivals[i] = []
        tr = self.traces[i]
        tr.x[k] = self.x[i]
        tr.u[k] = u
        tr.aoi[k] = ctrl.aoi
        self.x[i] = self.model.A @ self.x[i] + self.model.B @ u + self.noise[i][k]

    def _on_epoch(self, i: int, k: int, which: str):
        sensor = self.sensors[i]
        if which == "threshold":
            sensor.threshold_epoch(THRESHOLD_EPOCH_STEPS * self.T / 1000.0)
            self.traces[i].lam.append(sensor.threshold.lam)
        else:
            span = self._acp_steps
            lo = max(0, k - span)
            aoi = self.traces[i].aoi[lo:k]
            sensor.acp_epoch(float(aoi.mean()) if len(aoi) else float(k + 1))

    def _on_background(self, ev: SimEvent):
        flow_idx = ev.loop - self.config.loops
        flow = self.config.background[flow_idx]
        self.counters["bg_sent"] += 1
        self._enqueue(Packet("bg", ev.loop, flow.path), ev.time)
        self._push(ev.time + flow.period_ms, EventKind.ADMIT_DECISION, ev.loop, "bg")

    def _drain(self, now: float, below: EventKind) -> None:
        """Process queued events up to ``now``; at ``now`` only kinds before ``below``."""
        heap = self.heap
        while heap and (heap[0].time < now or (heap[0].time == now and heap[0].kind < below)):
            ev = heapq.heappop(heap)
            kind = ev.kind
            if kind is EventKind.HOP_DEPART:
                self._on_depart(ev)
            elif kind is EventKind.DELIVER:
                self._on_deliver(ev)
            elif kind is EventKind.ACK_DELIVER:
                self._on_ack(ev)
            elif ev.payload == "bg":
                self._on_background(ev)
            else:
                self._admit(ev.loop, ev.payload, ev.time)

    def run(self) -> RunResult:
        """Advance all loops step by step.

        Network events live on the heap; the per-step sensor and controller
        events are handled inline in the same (time, kind, loop) order the
        heap would give them.
        """
        cfg = self.config
        N, T = cfg.loops, self.T
        self._acp_steps = max(1, int(round(self.sensors[0].acp.epoch_ms / T)))
        for j, flow in enumerate(cfg.background):
            self._push(flow.phase_ms, EventKind.ADMIT_DECISION, N + j, "bg")
        adaptive = self.policy.adapt_threshold or self.policy.kind is PolicyKind.ACP_RATE
        loops = range(N)
        for k in range(cfg.steps):
            now = k * T
            self._drain(now, EventKind.TIMEOUT_SCAN)
            for i in loops:
                self.sensors[i].stats.check_timeouts(now)
            if k > 0:
                threshold_epoch = k % THRESHOLD_EPOCH_STEPS == 0
                acp_epoch = adaptive and k % self._acp_steps == 0
                for i in loops:
                    if threshold_epoch:
                        self._on_epoch(i, k, "threshold")
                    if acp_epoch:
                        self._on_epoch(i, k, "acp")
            for i in loops:
                self._on_sample(i, k, now)
            self._drain(now, EventKind.CONTROL)
            for i in loops:
                self._on_control(i, k)
        return self._result()

    def _result(self) -> RunResult:
        cfg = self.config
        for tr, sensor in zip(self.traces, self.sensors):
            tr.decision_time_s = sensor.decision_time
            tr.decisions = sensor.decisions
        if cfg.steps >= MIN_STEPS_FOR_WINDOWS:
            costs = np.array([[lqg_window_cost(tr.x, tr.u, self.model.Q, self.model.R, q)
                               for q in range(COST_WINDOWS)] for tr in self.traces])
        else:
            costs = np.empty((cfg.loops, 0))
        counters = dict(self.counters)
        in_flight = (counters["admitted"] - counters["delivered"] - counters["lost_in_hop"]
                     - counters["dropped_full"])
        counters["in_flight"] = in_flight
        return RunResult(cfg.name, self.policy, cfg.seed, cfg.steps, self.T, self.traces,
                         costs, counters)


def run(config: ScenarioConfig, policy: PolicyConfig) -> RunResult:
    return Simulation(config, policy).run()

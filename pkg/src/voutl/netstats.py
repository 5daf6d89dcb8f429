"""Outstanding-packet bookkeeping and ACK-derived statistics at the sensor."""
from __future__ import annotations

import math
import statistics
from collections import deque
from dataclasses import dataclass


class AdmissionOrderError(ValueError):
    pass


@dataclass(slots=True)
class OutstandingPacket:
    gen_step: int
    send_time: float
    ist_at_send: float
    rto_deadline: float


@dataclass(frozen=True, slots=True)
class AckRecord:
    gen_step: int
    recv_step: int
    ack_arrival_time: float

    def __post_init__(self):
        if self.recv_step < self.gen_step:
            raise ValueError("ACK reception step precedes generation step")


@dataclass
class NetStatsConfig:
    T: float = 10.0
    delay_capacity: int = 512
    ist_capacity: int = 1024
    ack_weight: float = 0.05
    rto_initial: float = 1000.0
    rto_floor: float = 200.0
    rto_max: float = 60_000.0
    ist_sentinel_factor: float = 10.0
    # used for the first IST before any delay statistics exist
    ist_sentinel_default: float = 1000.0
    min_samples: int = 8


class NetStats:
    """Running statistics kept by one sensor.

    Delays are end-to-end data delays ``(recv_step - gen_step) * T`` in ms as
    reported by ACKs; round-trip samples drive an RFC 6298 style timeout.
    """

    def __init__(self, config: NetStatsConfig | None = None):
        self.config = config or NetStatsConfig()
        cfg = self.config
        self.ops: list[OutstandingPacket] = []
        self.delay_samples: deque[float] = deque(maxlen=cfg.delay_capacity)
        self.ist_delay_samples: deque[tuple[float, float]] = deque(maxlen=cfg.ist_capacity)
        self.p_ack = 1.0
        self.srtt: float | None = None
        self.rttvar: float | None = None
        self.rto = cfg.rto_initial
        self.last_admission_ms: float | None = None
        self.acks: list[AckRecord] = []
        self.sent = 0
        self.acked = 0
        self.timed_out = 0
        self._sent_info: dict[int, tuple[float, float]] = {}
        self._acked_gens: set[int] = set()
        self._latest_gen: int | None = None
        self._t_max: float | None = None

    # statistics -----------------------------------------------------------

    @property
    def t_max(self) -> float:
        """95% quantile of the recorded delays, 0 when there are none."""
        if self._t_max is None:
            d = self.delay_samples
            if len(d) > 1:
                self._t_max = statistics.quantiles(d, n=20, method="inclusive")[18]
            else:
                self._t_max = float(d[0]) if d else 0.0
        return self._t_max

    @property
    def has_model(self) -> bool:
        return len(self.delay_samples) >= self.config.min_samples

    def loss_prob(self) -> float:
        return loss_prob(self)

    def ist_since_last(self, now_ms: float) -> float:
        if self.last_admission_ms is None:
            t_max = self.t_max
            if t_max > 0:
                return self.config.ist_sentinel_factor * t_max
            return self.config.ist_sentinel_default
        return now_ms - self.last_admission_ms

    # events ---------------------------------------------------------------

    def record_admission(self, gen_step: int, now_ms: float) -> OutstandingPacket:
        if self._latest_gen is not None and gen_step <= self._latest_gen:
            raise AdmissionOrderError(
                f"admission of step {gen_step} after step {self._latest_gen}")
        ist = self.ist_since_last(now_ms)
        op = OutstandingPacket(gen_step, now_ms, ist, now_ms + self.rto)
        self.ops.append(op)
        # the sentinel IST is not a measurement; keep it out of the curve data
        self._sent_info[gen_step] = (now_ms, ist if self.last_admission_ms is not None else None)
        if len(self._sent_info) > 4 * self.config.ist_capacity:
            for g in sorted(self._sent_info)[: len(self._sent_info) // 2]:
                del self._sent_info[g]
        self._latest_gen = gen_step
        self.last_admission_ms = now_ms
        self.sent += 1
        return op

    def process_ack(self, ack: AckRecord, now_ms: float) -> list[OutstandingPacket]:
        """Apply one ACK; returns the OPs it removed (itself and all older)."""
        if ack.gen_step in self._acked_gens:
            return []
        self._acked_gens.add(ack.gen_step)
        if len(self._acked_gens) > 4 * self.config.ist_capacity:
            cutoff = sorted(self._acked_gens)[len(self._acked_gens) // 2]
            self._acked_gens = {g for g in self._acked_gens if g >= cutoff}
        self.acks.append(ack)

        delay = (ack.recv_step - ack.gen_step) * self.config.T
        self.delay_samples.append(delay)
        self._t_max = None
        info = self._sent_info.get(ack.gen_step)
        if info is not None and info[1] is not None:
            self.ist_delay_samples.append((info[1], delay))

        own = None
        keep = []
        removed = []
        for op in self.ops:
            if op.gen_step == ack.gen_step:
                own = op
            if op.gen_step <= ack.gen_step:
                removed.append(op)
            else:
                keep.append(op)
        self.ops = keep
        if own is not None:
            # late ACKs of timed-out packets are neither successes nor RTT samples
            self._update_rtt(now_ms - own.send_time)
            self.p_ack += self.config.ack_weight * (1.0 - self.p_ack)
            self.acked += 1
        return removed

    def check_timeouts(self, now_ms: float) -> list[OutstandingPacket]:
        expired = [op for op in self.ops if op.rto_deadline <= now_ms]
        if expired:
            self.ops = [op for op in self.ops if op.rto_deadline > now_ms]
            w = self.config.ack_weight
            for _ in expired:
                self.p_ack -= w * self.p_ack
            self.timed_out += len(expired)
        return expired

    def _update_rtt(self, rtt: float) -> None:
        cfg = self.config
        if self.srtt is None:
            self.srtt = rtt
            self.rttvar = rtt / 2.0
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - rtt)
            self.srtt = 0.875 * self.srtt + 0.125 * rtt
        self.rto = min(cfg.rto_max, max(cfg.rto_floor, self.srtt + 4.0 * self.rttvar))

    # helpers used by the relevance computations ----------------------------

    def mean_delay_below(self, limit_ms: float) -> float | None:
        vals = [d for d in self.delay_samples if d < limit_ms]
        return sum(vals) / len(vals) if vals else None

    def mean_delay_above(self, limit_ms: float) -> float | None:
        vals = [d for d in self.delay_samples if d > limit_ms]
        return sum(vals) / len(vals) if vals else None


def loss_prob(stats: NetStats) -> float:
    """Per-direction loss probability assuming symmetric data/ACK channels."""
    p_ack = min(1.0, max(0.0, stats.p_ack))
    return 1.0 - math.sqrt(p_ack)

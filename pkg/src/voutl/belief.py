"""Belief network over the network states of outstanding packets."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

DEFAULT_MAX_NODE_SIZE = 5


class ModelUnavailable(RuntimeError):
    """No delay statistics yet (t_max is zero)."""


class OpState(enum.Enum):
    R = "R"
    WR = "WR"
    L = "L"
    WL = "WL"

    @property
    def processed(self) -> bool:
        return self in (OpState.R, OpState.L)

    @property
    def delivers(self) -> bool:
        return self in (OpState.R, OpState.WR)


PROCESSED = (OpState.R, OpState.L)
IN_PROCESS = (OpState.WR, OpState.WL)


@dataclass(frozen=True)
class StateProbModel:
    p_l: float
    t_max: float

    def __post_init__(self):
        if not 0.0 <= self.p_l <= 1.0:
            raise ValueError(f"loss probability {self.p_l} outside [0, 1]")
        if self.t_max < 0:
            raise ValueError("t_max must be nonnegative")

    @property
    def alpha(self) -> float:
        """Exponent of the conditional loss curve; infinite when p_l = 0."""
        return math.inf if self.p_l == 0 else 1.0 / self.p_l - 1.0


def op_state_probs(model: StateProbModel, t: float) -> tuple[float, float, float, float]:
    """(P_R, P_WR, P_L, P_WL) for a packet sent ``t`` ms ago.

    Processing time is uniform on (0, t_max); conditional loss grows as
    (tau / t_max) ** alpha with alpha chosen so total loss equals p_l.
    """
    if model.t_max <= 0:
        raise ModelUnavailable("no delay samples")
    if t < 0:
        raise ValueError("elapsed time must be nonnegative")
    p_l = model.p_l
    s = min(t, model.t_max) / model.t_max
    if p_l == 0.0:
        return s, 1.0 - s, 0.0, 0.0
    p_lost = s ** (1.0 / p_l) * p_l
    p_recv = s - p_lost
    # clamp rounding noise; the four values still sum to 1 exactly enough
    p_recv = min(max(p_recv, 0.0), 1.0 - p_l)
    p_lost = min(max(p_lost, 0.0), p_l)
    return p_recv, (1.0 - p_l) - p_recv, p_lost, p_l - p_lost


@dataclass(frozen=True)
class BeliefNode:
    assignments: tuple[tuple[int, OpState], ...]
    probability: float

    def freshest_delivering(self) -> tuple[int, OpState] | None:
        """Freshest OP whose update reaches the controller in this node."""
        for gen, state in reversed(self.assignments):
            if state.delivers:
                return gen, state
        return None


def is_feasible(states: Sequence[OpState]) -> bool:
    """Ordered processing: no in-process OP may precede a processed one."""
    seen_in_process = False
    for s in states:
        if s.processed and seen_in_process:
            return False
        if not s.processed:
            seen_in_process = True
    return True


def feasible_count(n: int) -> int:
    return (n + 1) * 2 ** n


def build_nodes(ops, now_ms: float, model: StateProbModel | None,
                max_node_size: int = DEFAULT_MAX_NODE_SIZE,
                renormalize: bool = True) -> list[BeliefNode]:
    """Enumerate feasible joint states of the freshest ``max_node_size`` OPs.

    ``ops`` are outstanding packets sorted oldest to freshest (anything with
    ``gen_step`` and ``send_time``). ``model=None`` is the cold-start belief
    where every OP will be received.
    """
    ops = list(ops)[-max_node_size:] if max_node_size > 0 else []
    if not ops:
        return [BeliefNode((), 1.0)]
    gens = [op.gen_step for op in ops]
    if model is None:
        return [BeliefNode(tuple((g, OpState.WR) for g in gens), 1.0)]

    probs = []
    for op in ops:
        p_r, p_wr, p_lo, p_wl = op_state_probs(model, max(0.0, now_ms - op.send_time))
        probs.append({OpState.R: p_r, OpState.WR: p_wr, OpState.L: p_lo, OpState.WL: p_wl})

    n = len(ops)
    nodes = []
    for j in range(n + 1):
        for head in itertools.product(PROCESSED, repeat=j):
            for tail in itertools.product(IN_PROCESS, repeat=n - j):
                states = head + tail
                p = math.prod(probs[i][s] for i, s in enumerate(states))
                nodes.append(BeliefNode(tuple(zip(gens, states)), p))
    if renormalize:
        total = math.fsum(node.probability for node in nodes)
        if total > 0:
            nodes = [BeliefNode(nd.assignments, nd.probability / total) for nd in nodes]
        else:
            nodes = [BeliefNode(nd.assignments, 1.0 / len(nodes)) for nd in nodes]
    return nodes


def group_by_informative(nodes: Sequence[BeliefNode]) -> dict:
    """Sum node probabilities per freshest delivering OP (None when absent)."""
    out: dict = {}
    for node in nodes:
        key = node.freshest_delivering()
        out[key] = out.get(key, 0.0) + node.probability
    return out


def informative_probs(ops, now_ms: float, model: StateProbModel | None,
                      max_node_size: int = DEFAULT_MAX_NODE_SIZE,
                      renormalize: bool = True) -> dict:
    """Same result as ``group_by_informative(build_nodes(...))`` without enumerating.

    For a processed prefix of length ``j`` the freshest delivering OP ``i``
    fixes every later OP to a non-delivering state, so each group is a sum of
    ``n + 1`` products.
    """
    ops = list(ops)[-max_node_size:] if max_node_size > 0 else []
    if not ops:
        return {None: 1.0}
    gens = [op.gen_step for op in ops]
    if model is None:
        return {(gens[-1], OpState.WR): 1.0}
    n = len(ops)
    pr, pwr, plo, pwl = zip(*(op_state_probs(model, max(0.0, now_ms - op.send_time)) for op in ops))
    a = [pr[i] + plo[i] for i in range(n)]
    b = [pwr[i] + pwl[i] for i in range(n)]
    head_a = [1.0] * (n + 1)
    head_lo = [1.0] * (n + 1)
    for i in range(n):
        head_a[i + 1] = head_a[i] * a[i]
        head_lo[i + 1] = head_lo[i] * plo[i]
    tail_b = [1.0] * (n + 1)
    tail_wl = [1.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        tail_b[i] = tail_b[i + 1] * b[i]
        tail_wl[i] = tail_wl[i + 1] * pwl[i]
    total = math.fsum(head_a[j] * tail_b[j] for j in range(n + 1))
    none = math.fsum(head_lo[j] * tail_wl[j] for j in range(n + 1))
    out: dict = {}
    for i in range(n):
        # R: processed prefix ends at j >= i, OPs i+1..j lost, the rest will be lost
        acc, lost = 0.0, 1.0
        for j in range(i, n):
            if j > i:
                lost *= plo[j]
            acc += lost * tail_wl[j + 1]
        out[(gens[i], OpState.R)] = head_a[i] * pr[i] * acc
        # WR: prefix ends at j <= i, OPs j..i-1 in process
        acc, pend = 0.0, 1.0
        for j in range(i, -1, -1):
            if j < i:
                pend *= b[j]
            acc += head_a[j] * pend
        out[(gens[i], OpState.WR)] = acc * pwr[i] * tail_wl[i + 1]
    out[None] = none
    if renormalize:
        if total > 0:
            out = {key: p / total for key, p in out.items()}
        else:
            count = feasible_count(n)
            nodes = build_nodes(ops, now_ms, model, max_node_size, renormalize=False)
            out = {}
            for node in nodes:
                key = node.freshest_delivering()
                out[key] = out.get(key, 0.0) + 1.0 / count
    return {key: p for key, p in out.items() if p > 0.0}

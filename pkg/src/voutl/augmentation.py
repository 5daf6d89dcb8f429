"""Sensor-side replica of the controller estimator and the relevance measures.

The sensor knows every measurement it sampled and, through ACKs, which of
them reached the controller and when. Replaying the controller's
estimate/actuate cycle over a hypothesized reception record yields the
controller estimate that record implies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .belief import OpState, group_by_informative
from .control import LoopModel, as_vector
from .netstats import NetStats

_EPS = 1e-9


def delay_to_steps(ms: float, T: float) -> int:
    """Whole sampling periods needed to cover ``ms`` (ceil)."""
    return max(0, math.ceil(ms / T - _EPS))


@dataclass
class AugmentedHistory:
    """Hypothesized controller observation history: (gen, recv, x) triples."""

    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.entries = [(int(g), int(r), as_vector(x)) for g, r, x in self.entries]
        for g, r, _ in self.entries:
            if r < g:
                raise ValueError(f"reception {r} before generation {g}")

    def add(self, gen: int, recv: int, x) -> None:
        if recv < gen:
            raise ValueError(f"reception {recv} before generation {gen}")
        self.entries.append((int(gen), int(recv), as_vector(x)))

    @property
    def gen_steps(self):
        return [g for g, _, _ in self.entries]

    @property
    def recv_steps(self):
        return [r for _, r, _ in self.entries]


def augment_estimate(k: int, history: AugmentedHistory, model: LoopModel):
    """Replay the controller from step 0 to ``k`` over ``history``.

    Returns ``(x_k, inputs)`` with ``inputs[t]`` the replayed input of step
    ``t`` for ``t = 0..k``. Before the first reception the estimate is the
    zero set point.
    """
    A, B, K = model.A, model.B, model.K
    by_recv: dict[int, list] = {}
    for g, r, x in history.entries:
        by_recv.setdefault(r, []).append((g, x))
    inputs = np.zeros((k + 1, model.m))
    x_t = np.zeros(model.n)
    nu = None
    for t in range(k + 1):
        fresh = None
        for g, x in by_recv.get(t, ()):
            if (nu is None or g > nu) and (fresh is None or g > fresh[0]):
                fresh = (g, x)
        if fresh is not None:
            g, x_g = fresh
            x_t = x_g.copy()
            for s in range(g, t):
                x_t = A @ x_t + B @ inputs[s]
            nu = g
        elif t > 0:
            x_t = A @ x_t + B @ inputs[t - 1]
        inputs[t] = -(K @ x_t)
    return x_t, inputs


class AckedHistory:
    """Incremental replay over the ACKed reception record of one sensor.

    Keeps the augmented estimate and input of every step so hypothetical
    receptions of outstanding packets can be replayed from their reception
    step instead of from the start.
    """

    def __init__(self, model: LoopModel, capacity: int = 1024):
        self.model = model
        self._A = np.ascontiguousarray(model.A)
        self._B = np.ascontiguousarray(model.B)
        self._K = np.ascontiguousarray(model.K)
        self._alloc(capacity)
        self.k = -1

    def _alloc(self, capacity: int) -> None:
        n, m = self.model.n, self.model.m
        old = getattr(self, "_xt", None)
        samples = np.zeros((capacity, n))
        xt = np.zeros((capacity, n))
        ut = np.zeros((capacity, m))
        nu = np.full(capacity, -1, dtype=np.int64)
        by_recv = np.full(capacity, -1, dtype=np.int64)
        have = np.zeros(capacity, dtype=bool)
        if old is not None:
            c = len(old)
            samples[:c], xt[:c], ut[:c] = self._samples, self._xt, self._ut
            nu[:c], by_recv[:c], have[:c] = self._nu, self._by_recv, self._have
        self._samples, self._xt, self._ut = samples, xt, ut
        self._nu, self._by_recv, self._have = nu, by_recv, have

    def _ensure(self, t: int) -> None:
        if t >= len(self._xt):
            self._alloc(max(2 * len(self._xt), t + 1))

    def record_sample(self, k: int, x) -> None:
        self._ensure(k)
        self._samples[k] = as_vector(x)
        self._have[k] = True

    def has_sample(self, k: int) -> bool:
        return 0 <= k < len(self._have) and bool(self._have[k])

    def sample(self, k: int) -> np.ndarray:
        if not self.has_sample(k):
            raise KeyError(f"no sample recorded for step {k}")
        return self._samples[k]

    def add_ack(self, gen: int, recv: int) -> None:
        if not self.has_sample(gen):
            raise KeyError(f"no sample recorded for step {gen}")
        if recv < gen:
            raise ValueError("reception before generation")
        self._ensure(recv)
        if self._by_recv[recv] >= gen:
            return
        self._by_recv[recv] = gen
        if recv <= self.k and gen > self._nu[recv]:
            self._replay(recv, self.k)

    def advance(self, k: int) -> None:
        if k > self.k:
            self._ensure(k)
            self._replay(self.k + 1, k)

    def _replay(self, start: int, stop: int) -> None:
        _kernels.replay(self._A, self._B, self._K, self._samples, self._xt, self._ut, self._nu,
                        self._by_recv, start, stop)
        self.k = stop

    def estimate(self, t: int) -> np.ndarray:
        return self._xt[t] if t >= 0 else np.zeros(self.model.n)

    def input(self, t: int) -> np.ndarray:
        return self._ut[t] if t >= 0 else np.zeros(self.model.m)

    def freshest_gen(self, t: int) -> int | None:
        nu = int(self._nu[t]) if t >= 0 else -1
        return None if nu < 0 else nu

    def entries(self) -> list:
        recv = np.flatnonzero(self._by_recv >= 0)
        return [(int(self._by_recv[r]), int(r), self._samples[self._by_recv[r]]) for r in recv]

    def as_history(self) -> AugmentedHistory:
        return AugmentedHistory(self.entries())

    def hypothetical_estimate(self, gen: int, recv: int, k: int) -> np.ndarray:
        """Estimate at ``k`` if measurement ``gen`` had also arrived at ``recv``."""
        if recv > k:
            return self.estimate(k)
        if k > self.k:
            raise ValueError(f"history only replayed up to step {self.k}")
        return _kernels.hypothetical(self._A, self._B, self._K, self._samples, self._xt, self._ut,
                                     self._nu, self._by_recv, gen, recv, k)


def _past_reception(gen: int, k: int, stats: NetStats, T: float) -> int:
    mean = stats.mean_delay_below((k - gen) * T)
    if mean is None:
        return k - 1
    return min(k - 1, gen + delay_to_steps(mean, T))


def _future_reception(gen: int, k: int, stats: NetStats, T: float) -> int:
    mean = stats.mean_delay_above((k - gen) * T)
    if mean is None:
        mean = 0.5 * ((k - gen) * T + stats.t_max)
    return max(k + 1, gen + delay_to_steps(mean, T))


def node_estimate(key, k: int, acked: AckedHistory, stats: NetStats) -> np.ndarray:
    """Augmented estimate at ``k`` for a node's freshest delivering OP."""
    if key is None:
        return acked.estimate(k)
    gen, state = key
    if state is OpState.R:
        return acked.hypothetical_estimate(gen, _past_reception(gen, k, stats, acked.model.T), k)
    return acked.hypothetical_estimate(gen, k, k)


def _groups(belief) -> dict:
    """Accept either grouped probabilities or a list of belief nodes."""
    if isinstance(belief, dict):
        return belief
    return group_by_informative(belief)


def relevance_inst(k: int, x_k, belief, acked: AckedHistory, stats: NetStats) -> float:
    """Probability-weighted L1 distance between augmented estimate and state."""
    x_k = as_vector(x_k)
    total = 0.0
    for key, p in _groups(belief).items():
        if p <= 0.0:
            continue
        total += p * float(np.abs(node_estimate(key, k, acked, stats) - x_k).sum())
    return total


_POWERS: dict = {}


def _powers(A: np.ndarray, t_pr: int) -> np.ndarray:
    """``A^t`` for ``t = 0..t_pr``, cached per matrix and horizon."""
    key = (A.tobytes(), A.shape, t_pr)
    hit = _POWERS.get(key)
    if hit is None:
        hit = np.empty((t_pr + 1,) + A.shape)
        hit[0] = np.eye(A.shape[0])
        for i in range(1, t_pr + 1):
            hit[i] = A @ hit[i - 1]
        _POWERS[key] = hit
    return hit


def noise_accumulation(A: np.ndarray, noise, t_pr: int, n: int) -> np.ndarray:
    """``N_t = sum_{j<t} A^(t-1-j) w_j`` for ``t = 0..t_pr``."""
    noise = np.zeros((0, n)) if noise is None else np.asarray(noise, dtype=float).reshape(t_pr, n)
    return _kernels.accumulate_noise(np.ascontiguousarray(A), noise, t_pr)


def relevance_dyn(k: int, x_k, belief, acked: AckedHistory, stats: NetStats, t_pr: int,
                  new_delay_ms: float, noise=None) -> float:
    """Expected reduction of the summed estimation error over ``[k, k+t_pr]``.

    Uses that the gap between the predicted plant and the augmented estimate
    evolves as ``e' = A e + w`` between receptions, and that a reception of
    measurement ``g`` at ``k+t`` sets it to ``A^t c_g + N_t`` where ``c_g`` is
    the gap at ``k`` had ``g`` been received by then and ``N`` is the
    accumulated predicted noise. The new update is the freshest one, so once
    it arrives at ``k+d`` the gap is ``N_t`` whatever else arrives. ``noise``
    (shape ``(t_pr, n)``) is the sampled disturbance, ``None`` for the
    zero-mean prediction.
    """
    if t_pr < 1:
        raise ValueError("prediction horizon must be at least 1")
    model = acked.model
    T, n = model.T, model.n
    d = delay_to_steps(new_delay_ms, T)
    if d > t_pr:
        return 0.0
    groups = [(key, p) for key, p in _groups(belief).items() if p > 0.0]
    if not groups:
        return 0.0
    x_k = as_vector(x_k)
    consts = np.empty((len(groups) + 1, n))
    probs = np.zeros(len(groups) + 1)
    wr_at = np.zeros(len(groups) + 1, dtype=np.int64)
    consts[0] = x_k - acked.estimate(k)
    for row, (key, p) in enumerate(groups, start=1):
        probs[row] = p
        if key is not None and key[1] is OpState.WR:
            # before the WR packet lands the gap follows the ACKed record
            consts[row] = x_k - acked.hypothetical_estimate(key[0], k, k)
            wr_at[row] = _future_reception(key[0], k, stats, T) - k
        else:
            consts[row] = x_k - node_estimate(key, k, acked, stats)
    noise = np.zeros((0, n)) if noise is None else np.asarray(noise, dtype=float).reshape(t_pr, n)
    return float(_kernels.dyn_gain(acked._A, _powers(acked._A, t_pr), noise, consts, probs,
                                   wr_at, d, t_pr))


@dataclass
class TrajectoryPrediction:
    horizon: int
    predicted_states: np.ndarray
    augmented_estimates: np.ndarray
    augmented_inputs: np.ndarray

    def __post_init__(self):
        for arr in (self.predicted_states, self.augmented_estimates, self.augmented_inputs):
            if len(arr) != self.horizon + 1:
                raise ValueError("trajectory lengths must equal horizon + 1")

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.predicted_states - self.augmented_estimates).sum(axis=1)


def predict_trajectories(k: int, x_k, history: AugmentedHistory, model: LoopModel,
                         t_pr: int, noise=None) -> TrajectoryPrediction:
    """Straight replay of plant and augmented estimate over ``[k, k+t_pr]``.

    Runs ``augment_estimate`` for every step of the horizon; entries of
    ``history`` received after ``k`` act as predicted future receptions.
    Slow but direct, useful for checking the fast relevance path.
    """
    x_bar = np.empty((t_pr + 1, model.n))
    x_bar[0] = as_vector(x_k)
    x_aug = np.empty((t_pr + 1, model.n))
    u_aug = np.empty((t_pr + 1, model.m))
    noise = np.zeros((t_pr, model.n)) if noise is None else np.asarray(noise, float).reshape(t_pr, model.n)
    for i in range(t_pr + 1):
        x_aug[i], inputs = augment_estimate(k + i, history, model)
        u_aug[i] = inputs[k + i]
        if i < t_pr:
            x_bar[i + 1] = model.A @ x_bar[i] + model.B @ u_aug[i] + noise[i]
    return TrajectoryPrediction(t_pr, x_bar, x_aug, u_aug)

"""Transmission cost, value-of-update decision and the benchmark policies."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from .augmentation import AckedHistory, relevance_dyn, relevance_inst
from .netstats import NetStats

CURVE_DEGREE = 3
CURVE_GRID = 256
MIN_CURVE_SAMPLES = 8


class CurveUnavailable(RuntimeError):
    pass


def pav_nonincreasing(y, w=None) -> np.ndarray:
    """Least-squares non-increasing fit (pool adjacent violators)."""
    return isotonic_regression(np.asarray(y, dtype=float), weights=w, increasing=False).x


@dataclass(frozen=True)
class DelayCurve:
    """Expected delay (ms) of a packet admitted after a given IST (ms).

    Defined on the observed IST range and held constant outside it, so
    ``d0`` is the delay at the shortest observed IST.
    """

    coefficients: tuple[float, ...]
    ist_lo: float
    ist_hi: float
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def d0(self) -> float:
        return float(self.values[0])

    def __call__(self, ist: float) -> float:
        ist = min(max(float(ist), self.ist_lo), self.ist_hi)
        return float(np.interp(ist, self.grid, self.values))


def fit_delay_curve(ist_delay_samples, degree: int = CURVE_DEGREE,
                    grid_size: int = CURVE_GRID) -> DelayCurve:
    """Cubic least squares on (IST, delay), clipped to the observed delays,
    then made non-increasing."""
    data = np.asarray(list(ist_delay_samples), dtype=float).reshape(-1, 2)
    if len(data) < MIN_CURVE_SAMPLES:
        raise CurveUnavailable(f"{len(data)} samples, need {MIN_CURVE_SAMPLES}")
    ist, delay = data[:, 0], data[:, 1]
    ist_lo, ist_hi = float(ist.min()), float(ist.max())
    deg = min(degree, len(np.unique(ist)) - 1)
    if deg < 1:
        poly = np.polynomial.Polynomial([float(delay.mean())])
    else:
        poly = np.polynomial.Polynomial.fit(ist, delay, deg).convert()
    grid = np.linspace(ist_lo, ist_hi, grid_size)
    fitted = np.clip(poly(grid), max(float(delay.min()), 0.0), float(delay.max()))
    values = np.maximum(pav_nonincreasing(fitted), 0.0)
    return DelayCurve(tuple(float(c) for c in poly.coef), ist_lo, ist_hi, grid, values)


def transmission_cost(curve: DelayCurve | None, ist_inst: float, lam: float) -> float:
    """lambda * d(IST) / d(0); the full lambda while no curve exists."""
    if curve is None or curve.d0 <= 0:
        return lam
    d = min(max(curve(ist_inst), 0.0), curve.d0)
    return lam * (d / curve.d0)


@dataclass
class ThresholdState:
    lam: float
    target_rate: float = 10.0
    measured_rate: float | None = None
    gamma: float = 0.02
    lam_max: float = 1e6
    lam_min: float = 1e-9
    rate_weight: float = 0.1

    def record_epoch(self, admissions: int, epoch_s: float) -> None:
        rate = admissions / epoch_s
        if self.measured_rate is None:
            self.measured_rate = rate
        else:
            self.measured_rate += self.rate_weight * (rate - self.measured_rate)


def adapt_threshold(state: ThresholdState) -> float:
    """Nudge lambda so the running admission rate tracks the target."""
    if state.target_rate <= 0:
        raise ValueError("target rate must be positive")
    if state.measured_rate is not None:
        if state.measured_rate > state.target_rate:
            state.lam = min(state.lam_max, state.lam * (1.0 + state.gamma))
        elif state.measured_rate < state.target_rate:
            state.lam = max(state.lam_min, state.lam / (1.0 + state.gamma))
    return state.lam


@dataclass
class AcpRateController:
    """Stand-in for an age-minimizing rate controller.

    Hill-climbs on the mean AoI reported each epoch: keep the last direction
    while age improves, reverse it otherwise.
    """

    rate: float = 10.0
    epoch_ms: float = 500.0
    up: float = 1.25
    down: float = 0.8
    min_rate: float = 1.0
    max_rate: float = 100.0
    increasing: bool = True
    last_aoi: float | None = None

    def update(self, mean_aoi: float, mean_backlog: float | None = None) -> float:
        if self.last_aoi is not None and not mean_aoi < self.last_aoi:
            self.increasing = not self.increasing
        self.last_aoi = mean_aoi
        self.rate *= self.up if self.increasing else self.down
        self.rate = min(self.max_rate, max(self.min_rate, self.rate))
        return self.rate


def acp_target_rate(controller: AcpRateController, mean_aoi: float,
                    mean_backlog: float | None = None) -> float:
    return controller.update(mean_aoi, mean_backlog)


class PolicyKind(enum.Enum):
    VOU_INST = "VoU_Inst"
    VOU_DYN = "VoU_Dyn"
    VOU_DYN_W = "VoU_Dyn_w"
    AUGM_ZW_ET = "Augm_ZW_ET"
    AUGM_ET_OP2 = "Augm_ET_Op2"
    AUGM_ET_COST = "Augm_ET_Cost"
    ORACLE_COST = "Oracle_Cost"
    ACP_RATE = "ACP_Rate"
    PERIODIC = "Periodic"

    @property
    def uses_belief(self) -> bool:
        return self in (PolicyKind.VOU_INST, PolicyKind.VOU_DYN, PolicyKind.VOU_DYN_W)

    @property
    def is_dynamic(self) -> bool:
        return self in (PolicyKind.VOU_DYN, PolicyKind.VOU_DYN_W)

    @property
    def uses_threshold(self) -> bool:
        return self not in (PolicyKind.ACP_RATE, PolicyKind.PERIODIC)

    @property
    def uses_curve(self) -> bool:
        return self in (PolicyKind.VOU_INST, PolicyKind.VOU_DYN, PolicyKind.VOU_DYN_W,
                        PolicyKind.AUGM_ET_COST, PolicyKind.ORACLE_COST)


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind
    lam: float = 1.0
    t_pr: int = 10
    proc_delay_ms: float = 0.0
    adapt_threshold: bool = False
    max_node_size: int = 5
    renormalize: bool = True

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.lam < 0:
            raise ValueError("threshold must be nonnegative")
        if self.t_pr < 1:
            raise ValueError("prediction horizon must be at least 1")
        if self.proc_delay_ms < 0:
            raise ValueError("processing delay must be nonnegative")

    @property
    def label(self) -> str:
        return self.kind.value


@dataclass
class SensorView:
    """Everything a sensor knows when deciding on the sample of step ``k``."""

    k: int
    now_ms: float
    x_k: np.ndarray
    stats: NetStats
    acked: AckedHistory
    lam: float
    ist_inst: float
    belief: dict | list | None = None
    curve: DelayCurve | None = None
    noise: np.ndarray | None = None
    oracle_estimate: np.ndarray | None = None
    acp_due: bool = False

    @property
    def op_count(self) -> int:
        return len(self.stats.ops)

    def ack_error(self) -> float:
        return float(np.abs(self.acked.estimate(self.k) - self.x_k).sum())

    def expected_delay_ms(self) -> float:
        if self.curve is not None:
            return self.curve(self.ist_inst)
        samples = self.stats.delay_samples
        return float(np.mean(samples)) if samples else self.acked.model.T


def relevance(policy: PolicyConfig, view: SensorView) -> float:
    kind = policy.kind
    if kind is PolicyKind.VOU_INST:
        return relevance_inst(view.k, view.x_k, view.belief, view.acked, view.stats)
    if kind.is_dynamic:
        noise = view.noise if kind is PolicyKind.VOU_DYN_W else None
        return relevance_dyn(view.k, view.x_k, view.belief, view.acked, view.stats,
                             policy.t_pr, view.expected_delay_ms(), noise)
    if kind is PolicyKind.ORACLE_COST:
        return float(np.abs(view.oracle_estimate - view.x_k).sum())
    return view.ack_error()


def decide(policy: PolicyConfig, view: SensorView) -> int:
    """Admission decision for the sample in ``view`` (1 admit, 0 discard)."""
    kind = policy.kind
    if kind is PolicyKind.PERIODIC:
        return 1
    if kind is PolicyKind.ACP_RATE:
        return int(view.acp_due)
    if kind is PolicyKind.AUGM_ZW_ET:
        return int(view.op_count == 0 and view.ack_error() > view.lam)
    if kind is PolicyKind.AUGM_ET_OP2:
        return int(view.op_count < 2 and view.ack_error() > view.lam)
    cost = transmission_cost(view.curve, view.ist_inst, view.lam)
    return int(relevance(policy, view) - cost > 0)

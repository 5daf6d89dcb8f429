"""Plant dynamics, LQR synthesis, controller-side estimation and LQG cost.

States are 1-D arrays of length ``n`` and inputs 1-D arrays of length ``m``;
matrices are always stored 2-D so the scalar loops used throughout the
experiments go through exactly the same code as the vector case.
"""
from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

RICCATI_TOL = 1e-12
RICCATI_MAX_ITER = 1_000_000
INPUT_WINDOW = 1024


class SynthesisError(RuntimeError):
    """Riccati iteration failed to reach a stabilizing fixed point."""


class InputError(ValueError):
    """Inconsistent or singular problem data."""


def as_matrix(a) -> np.ndarray:
    if type(a) is np.ndarray and a.ndim == 2 and a.dtype == np.float64:
        return a
    return np.atleast_2d(np.asarray(a, dtype=float))


def as_vector(v) -> np.ndarray:
    # hot path: already a float vector
    if type(v) is np.ndarray and v.ndim == 1 and v.dtype == np.float64:
        return v
    return np.atleast_1d(np.asarray(v, dtype=float))


def riccati_map(A, B, Q, R, P):
    """One application of P -> Q + A'PA - A'PB (R + B'PB)^-1 B'PA."""
    BtP = B.T @ P
    S = R + BtP @ B
    try:
        G = np.linalg.solve(S, BtP @ A)
    except np.linalg.LinAlgError as exc:
        raise InputError("R + B'PB is singular") from exc
    return Q + A.T @ P @ A - A.T @ P @ B @ G


def feedback_gain(A, B, R, P):
    S = R + B.T @ P @ B
    try:
        return np.linalg.solve(S, B.T @ P @ A)
    except np.linalg.LinAlgError as exc:
        raise InputError("R + B'PB is singular") from exc


def solve_lqr(A, B, Q, R, tol=RICCATI_TOL, max_iter=RICCATI_MAX_ITER):
    """Solve the discrete algebraic Riccati equation by fixed-point iteration.

    Starts from ``P = Q`` and stops once the largest entry change drops
    below ``tol``. Returns ``(P, K)`` with ``K = (R + B'PB)^-1 B'PA``.
    """
    A, B, Q, R = map(as_matrix, (A, B, Q, R))
    n, m = A.shape[0], B.shape[1]
    if A.shape != (n, n) or B.shape[0] != n or Q.shape != (n, n) or R.shape != (m, m):
        raise InputError(
            f"inconsistent shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}")
    P = Q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            P_next = riccati_map(A, B, Q, R, P)
            delta = np.abs(P_next - P).max()
            P = P_next
            if not delta < tol:
                if not np.isfinite(delta):
                    raise SynthesisError("Riccati iteration diverged; (A, B) not stabilizable?")
                continue
            break
        else:
            raise SynthesisError(f"Riccati iteration did not converge in {max_iter} steps")
    P = 0.5 * (P + P.T)
    K = feedback_gain(A, B, R, P)
    if spectral_radius(A - B @ K) >= 1.0:
        raise SynthesisError("fixed point is not stabilizing")
    return P, K


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(as_matrix(M)))))


def riccati_residual(A, B, Q, R, P) -> float:
    A, B, Q, R, P = map(as_matrix, (A, B, Q, R, P))
    return float(np.max(np.abs(P - riccati_map(A, B, Q, R, P))))


@dataclass(frozen=True, eq=False)
class LoopModel:
    """Constants of one control loop. ``T`` is the sampling period in ms."""

    A: np.ndarray
    B: np.ndarray
    Sigma: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    T: float = 10.0
    P: np.ndarray = field(init=False, repr=False)
    K: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("A", "B", "Sigma", "Q", "R"):
            object.__setattr__(self, name, as_matrix(getattr(self, name)))
        n, m = self.n, self.m
        if self.Sigma.shape != (n, n):
            raise InputError("Sigma must be n x n")
        for name, M in (("Sigma", self.Sigma), ("Q", self.Q), ("R", self.R)):
            if not np.allclose(M, M.T):
                raise InputError(f"{name} must be symmetric")
        if np.min(np.linalg.eigvalsh(self.Sigma)) < -1e-12 or np.min(np.linalg.eigvalsh(self.Q)) < -1e-12:
            raise InputError("Sigma and Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise InputError("R must be positive definite")
        if self.T <= 0:
            raise InputError("sampling period must be positive")
        P, K = solve_lqr(self.A, self.B, self.Q, self.R)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "K", K)

    @classmethod
    def scalar(cls, a=1.2, b=1.0, sigma=1.0, q=1.0, r=1.0, T=10.0) -> "LoopModel":
        return cls(A=a, B=b, Sigma=sigma, Q=q, R=r, T=T)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def closed_loop(self) -> np.ndarray:
        return self.A - self.B @ self.K

    @property
    def optimal_cost(self) -> float:
        """Full-information LQG cost trace(P Sigma)."""
        return float(np.trace(self.P @ self.Sigma))


@dataclass
class PlantState:
    k: int
    x: np.ndarray

    def advance(self, u, w, model: LoopModel) -> None:
        self.x = step_plant(self.x, u, w, model)
        self.k += 1


def step_plant(x, u, w, model: LoopModel) -> np.ndarray:
    x, u, w = as_vector(x), as_vector(u), as_vector(w)
    if x.shape != (model.n,) or w.shape != (model.n,) or u.shape != (model.m,):
        raise InputError(
            f"dimension mismatch: x{x.shape} u{u.shape} w{w.shape} for n={model.n}, m={model.m}")
    return model.A @ x + model.B @ u + w


def control_input(x_hat, K) -> np.ndarray:
    return -(as_matrix(K) @ as_vector(x_hat))


class Observation(NamedTuple):
    gen_step: int
    recv_step: int
    x: np.ndarray


class ObservationHistory:
    """Measurements known to a controller, ordered by reception step."""

    def __init__(self, entries: Iterable[Observation] = ()):
        self._entries: list[tuple[int, int, int]] = []
        self._x: dict[int, np.ndarray] = {}
        for e in entries:
            self.add(*e)

    def add(self, gen_step: int, recv_step: int, x) -> None:
        if recv_step < gen_step:
            raise InputError(f"reception step {recv_step} precedes generation step {gen_step}")
        insort(self._entries, (recv_step, gen_step, len(self._x)))
        self._x[len(self._x)] = as_vector(x)

    def __iter__(self):
        for recv, gen, idx in self._entries:
            yield Observation(gen, recv, self._x[idx])

    def __len__(self):
        return len(self._entries)

    def freshest(self, k: int) -> Observation | None:
        """Entry with the largest generation step among those received by ``k``."""
        best = None
        for recv, gen, idx in self._entries:
            if recv > k:
                break
            if best is None or gen > best.gen_step:
                best = Observation(gen, recv, self._x[idx])
        return best

    def aoi(self, k: int) -> int:
        obs = self.freshest(k)
        return k + 1 if obs is None else k - obs.gen_step


def reset_estimate(x_gen, gen_step, k, inputs, model: LoopModel) -> np.ndarray:
    """Open-loop prediction of a measurement taken at ``gen_step`` up to ``k``.

    ``inputs`` maps step -> applied input and must cover ``gen_step..k-1``.
    """
    x = as_vector(x_gen).copy()
    A, B = model.A, model.B
    for t in range(gen_step, k):
        x = A @ x + B @ inputs[t]
    return x


class ControllerState:
    """Remote controller: freshest-update estimator plus certainty-equivalent LQR."""

    def __init__(self, model: LoopModel, window: int = INPUT_WINDOW):
        self.model = model
        self.window = window
        self.history = ObservationHistory()
        self.x_hat = np.zeros(model.n)
        self.applied_inputs: dict[int, np.ndarray] = {}
        self.nu = None
        self.k = -1

    def _input(self, t):
        if t < 0:
            return np.zeros(self.model.m)
        try:
            return self.applied_inputs[t]
        except KeyError:
            raise InputError(
                f"input for step {t} is outside the stored window of {self.window} steps") from None

    def _inputs_view(self):
        return _InputLookup(self._input)

    def estimate_at(self, k: int, arrivals=()) -> np.ndarray:
        """Estimate the controller would hold at ``k`` without mutating state."""
        fresh = self._freshest_arrival(arrivals)
        if fresh is not None:
            gen, x = fresh
            return reset_estimate(x, gen, k, self._inputs_view(), self.model)
        if self.k < 0:
            return self.x_hat.copy()
        return self.model.A @ self.x_hat + self.model.B @ self._input(k - 1)

    def _freshest_arrival(self, arrivals):
        best = None
        for gen, x in arrivals:
            if self.nu is not None and gen <= self.nu:
                continue
            if best is None or gen > best[0]:
                best = (gen, x)
        return best

    def tick(self, k: int, arrivals=()) -> np.ndarray:
        """Consume measurements delivered during step ``k`` and return ``u_k``.

        ``arrivals`` holds ``(gen_step, x)`` pairs; anything not fresher than
        the current freshest update is ignored.
        """
        if k != self.k + 1:
            raise InputError(f"controller ticked at {k}, expected {self.k + 1}")
        for gen, x in arrivals:
            self.history.add(gen, k, x)
        self.x_hat = self.estimate_at(k, arrivals)
        fresh = self._freshest_arrival(arrivals)
        if fresh is not None:
            self.nu = fresh[0]
        u = control_input(self.x_hat, self.model.K)
        self.applied_inputs[k] = u
        self.applied_inputs.pop(k - self.window, None)
        self.k = k
        return u

    @property
    def aoi(self) -> int:
        return self.k + 1 if self.nu is None else self.k - self.nu


class _InputLookup:
    __slots__ = ("_fn",)

    def __init__(self, fn):
        self._fn = fn

    def __getitem__(self, t):
        return self._fn(t)


def controller_tick(ctrl: ControllerState, k: int, arrivals=()) -> np.ndarray:
    return ctrl.tick(k, arrivals)


def stage_costs(x_traj, u_traj, Q, R) -> np.ndarray:
    x = np.asarray(x_traj, dtype=float)
    u = np.asarray(u_traj, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if u.ndim == 1:
        u = u[:, None]
    Q, R = as_matrix(Q), as_matrix(R)
    return np.einsum("ti,ij,tj->t", x, Q, x) + np.einsum("ti,ij,tj->t", u, R, u)


def window_bounds(q: int) -> tuple[int, int]:
    return 1000 * (2 + q), 1000 * (3 + q)


def lqg_window_cost(x_traj, u_traj, Q, R, q: int) -> float:
    """Mean stage cost over steps ``1000(2+q) .. 1000(3+q)`` inclusive."""
    if q not in range(5):
        raise InputError(f"window index {q} not in 0..4")
    lo, hi = window_bounds(q)
    if len(x_traj) < hi + 1 or len(u_traj) < hi + 1:
        raise InputError(f"trajectory of length {len(x_traj)} too short for window {q}")
    return float(np.mean(stage_costs(x_traj[lo:hi + 1], u_traj[lo:hi + 1], Q, R)))

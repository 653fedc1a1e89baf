"""Model-based MPC baseline on the condensed horizon QP.

This is the ground-truth controller the data-driven formulations are
checked against: with exact data and hard past-consistency they must
reproduce its closed loop input for input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plants import StateSpaceModel, impulse_toeplitz, observability_matrix
from .qp import QpSolution, QuadProgram, solve_qp_active_set


def _weight_matrix(W, dim: int) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim == 0:
        W = float(W) * np.eye(dim)
    elif W.ndim == 1:
        W = np.diag(W)
    if W.shape != (dim, dim):
        raise ValueError(f"weight must be scalar, {dim}-vector, or {dim}x{dim}")
    s = np.linalg.eigvalsh(0.5 * (W + W.T))
    if s[0] <= 0:
        raise ValueError("weights must be positive definite")
    return 0.5 * (W + W.T)


@dataclass(frozen=True)
class CostWeights:
    """Per-step tracking weight Q (p x p) and input weight R (m x m), both PD."""

    Q: np.ndarray
    R: np.ndarray

    @staticmethod
    def make(Q, R, p: int, m: int) -> "CostWeights":
        return CostWeights(Q=_weight_matrix(Q, p), R=_weight_matrix(R, m))

    def horizon(self, N: int):
        """Block-diagonal weights over an N-step horizon."""
        return np.kron(np.eye(N), self.Q), np.kron(np.eye(N), self.R)


def _bound_vec(v, dim: int, default: float) -> np.ndarray:
    if v is None:
        return np.full(dim, default)
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return np.full(dim, float(v))
    if v.shape != (dim,):
        raise ValueError(f"bound must be scalar or length-{dim}")
    return v


@dataclass(frozen=True)
class BoxConstraints:
    """Per-step box bounds on inputs and outputs; None entries are unbounded."""

    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None
    y_min: np.ndarray | None = None
    y_max: np.ndarray | None = None

    @staticmethod
    def make(m: int, p: int, u_min=None, u_max=None, y_min=None, y_max=None) -> "BoxConstraints":
        bc = BoxConstraints(
            u_min=_bound_vec(u_min, m, -np.inf) if u_min is not None else None,
            u_max=_bound_vec(u_max, m, np.inf) if u_max is not None else None,
            y_min=_bound_vec(y_min, p, -np.inf) if y_min is not None else None,
            y_max=_bound_vec(y_max, p, np.inf) if y_max is not None else None,
        )
        lo = bc.u_min if bc.u_min is not None else -np.inf
        hi = bc.u_max if bc.u_max is not None else np.inf
        if np.any(np.asarray(lo) >= np.asarray(hi)):
            raise ValueError("u_min must be strictly below u_max")
        lo = bc.y_min if bc.y_min is not None else -np.inf
        hi = bc.y_max if bc.y_max is not None else np.inf
        if np.any(np.asarray(lo) >= np.asarray(hi)):
            raise ValueError("y_min must be strictly below y_max")
        return bc

    def is_trivial(self) -> bool:
        return all(v is None for v in (self.u_min, self.u_max, self.y_min, self.y_max))

    def rows(self, N: int, U_map: np.ndarray, Y_map: np.ndarray,
             u_bias=0.0, y_bias=0.0):
        """Inequality rows over a horizon for a decision variable d.

        The realized signals are u = U_map d + u_bias and y = Y_map d + y_bias;
        infinite bounds contribute no rows. Returns (A_in, b_in) or (None, None).
        """
        A_rows, b_rows = [], []
        u_bias = np.broadcast_to(np.asarray(u_bias, dtype=float), (U_map.shape[0],))
        y_bias = np.broadcast_to(np.asarray(y_bias, dtype=float), (Y_map.shape[0],))

        def emit(M, bias, lo, hi, dim):
            if lo is None and hi is None:
                return
            for t in range(N):
                for j in range(dim):
                    row = t * dim + j
                    if hi is not None and np.isfinite(hi[j]):
                        A_rows.append(M[row])
                        b_rows.append(hi[j] - bias[row])
                    if lo is not None and np.isfinite(lo[j]):
                        A_rows.append(-M[row])
                        b_rows.append(bias[row] - lo[j])

        m = U_map.shape[0] // N
        p = Y_map.shape[0] // N
        emit(U_map, u_bias, self.u_min, self.u_max, m)
        emit(Y_map, y_bias, self.y_min, self.y_max, p)
        if not A_rows:
            return None, None
        return np.vstack(A_rows), np.asarray(b_rows)


@dataclass(frozen=True)
class MpcSolution:
    """Open-loop optimizer over the horizon; apply u[0] in closed loop."""

    u: np.ndarray           # (N, m)
    y: np.ndarray           # (N, p)
    objective: float
    status: str
    active_set: tuple
    qp: QpSolution


def _flat_reference(r, N: int, p: int) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.ndim == 0:
        r = np.full((N, p), float(r))
    if r.ndim == 1:
        if r.shape[0] == p:
            r = np.tile(r, (N, 1))
        elif r.shape[0] == N * p:
            r = r.reshape(N, p)
        else:
            raise ValueError("reference length matches neither p nor N*p")
    if r.shape != (N, p):
        raise ValueError(f"reference must be (N, p) = ({N}, {p})")
    return r.reshape(-1)


def mpc_step(model: StateSpaceModel, x, r, weights: CostWeights, N: int,
             constraints: BoxConstraints | None = None,
             max_iter: int | None = None) -> MpcSolution:
    """One receding-horizon solve from a known state.

    Minimizes sum ||y_k - r_k||_Q^2 + ||u_k||_R^2 over the N-step prediction
    y = O x + T u, subject to optional box bounds on inputs and outputs.
    """
    x = np.asarray(x, dtype=float).reshape(model.n)
    r_flat = _flat_reference(r, N, model.p)
    O = observability_matrix(model, N)
    T = impulse_toeplitz(model, N)
    Qbar, Rbar = weights.horizon(N)
    free = O @ x
    P = 2.0 * (T.T @ Qbar @ T + Rbar)
    f = 2.0 * (T.T @ Qbar @ (free - r_flat))
    A_in = b_in = None
    if constraints is not None and not constraints.is_trivial():
        U_map = np.eye(model.m * N)
        A_in, b_in = constraints.rows(N, U_map, T, u_bias=0.0, y_bias=free)
    prog = QuadProgram(P=P, f=f, A_in=A_in, b_in=b_in)
    sol = solve_qp_active_set(prog, max_iter=max_iter)
    u = sol.x
    y = free + T @ u
    err = y - r_flat
    obj = float(err @ Qbar @ err + u @ Rbar @ u)
    return MpcSolution(u=u.reshape(N, model.m), y=y.reshape(N, model.p),
                       objective=obj, status=sol.status,
                       active_set=sol.active_set, qp=sol)


def unconstrained_mpc_gains(model: StateSpaceModel, N: int, weights: CostWeights):
    """Closed-form receding-horizon law u = K_r r + K_x x (no constraints).

    Returns (K_r, K_x) acting on the stacked reference (N*p,) and the state.
    """
    O = observability_matrix(model, N)
    T = impulse_toeplitz(model, N)
    Qbar, Rbar = weights.horizon(N)
    M = T.T @ Qbar @ T + Rbar
    K_r = np.linalg.solve(M, T.T @ Qbar)
    return K_r, -K_r @ O

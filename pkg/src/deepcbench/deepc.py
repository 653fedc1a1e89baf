"""Data-enabled predictive control straight on the Hankel blocks.

The decision variable is the column combiner g: every candidate trajectory
is H g with H = [U_p; Y_p; U_f; Y_f]. Past consistency is enforced either
as hard equalities (exact-data regime) or through penalized slacks; future
inputs/outputs carry the tracking cost and optional box constraints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .hankel import DataBlocks
from .mpc import BoxConstraints, CostWeights, _flat_reference
from .qp import QuadProgram, solve_eq_qp, solve_qp_active_set


@dataclass(frozen=True)
class DeepcConfig:
    """Horizon and regularization settings shared by the data-driven solvers.

    hard_past=True pins both past channels as equalities and ignores the
    slack penalties (the exact-data regime). Otherwise past outputs are
    penalized with lambda_y; past inputs are equalities unless
    use_input_slack=True, in which case they get a lambda_u penalty too.
    lambda_g is the combiner regularization weight.
    """

    T_ini: int
    N: int
    weights: CostWeights
    lambda_g: float = 0.0
    lambda_y: float = 1e3
    lambda_u: float = 1e3
    hard_past: bool = False
    use_input_slack: bool = False

    def __post_init__(self):
        if self.T_ini < 1 or self.N < 1:
            raise ValueError("T_ini and N must be positive")
        if min(self.lambda_g, self.lambda_y, self.lambda_u) < 0:
            raise ValueError("regularization weights must be nonnegative")
        if not self.hard_past and self.lambda_y == 0:
            raise ValueError("soft past outputs need lambda_y > 0")
        if self.use_input_slack and self.hard_past:
            raise ValueError("input slack has no effect with hard_past")
        if self.use_input_slack and self.lambda_u == 0:
            raise ValueError("input slack needs lambda_u > 0")


@dataclass(frozen=True)
class DeepcSolution:
    """Optimizer of one step. g is the internal decision vector (its length
    depends on the formulation); u, y are the planned future windows and
    sigma_u, sigma_y the realized past-consistency residuals."""

    g: np.ndarray
    u: np.ndarray            # (N, m)
    y: np.ndarray            # (N, p)
    sigma_u: np.ndarray      # (T_ini, m)
    sigma_y: np.ndarray      # (T_ini, p)
    objective: float
    status: str
    active_set: tuple
    iterations: int = 0
    solve_time: float = 0.0
    decision_dim: int = 0    # size of the QP actually solved


def _window(w, steps: int, dim: int, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.size != steps * dim:
        raise ValueError(f"{name} must hold {steps} samples of width {dim}")
    return w.reshape(-1)


def _assemble(blocks: DataBlocks, config: DeepcConfig, u_ini, y_ini, r,
              constraints: BoxConstraints | None = None,
              reg: np.ndarray | None = None):
    """Build the QP over the combiner for one receding-horizon step.

    reg replaces the identity in the lambda_g term (used by the range-space
    variant where the natural regularizer is alpha' G alpha).

    Returns (program, Qbar, Rbar, r_flat).
    """
    if blocks.T_ini != config.T_ini or blocks.N != config.N:
        raise ValueError("blocks were partitioned for different horizons")
    m, p, N = blocks.m, blocks.p, blocks.N
    d = blocks.L
    u_ini = _window(u_ini, config.T_ini, m, "u_ini")
    y_ini = _window(y_ini, config.T_ini, p, "y_ini")
    r_flat = _flat_reference(r, N, p)
    Qbar, Rbar = config.weights.horizon(N)

    P = 2.0 * (blocks.Y_f.T @ Qbar @ blocks.Y_f + blocks.U_f.T @ Rbar @ blocks.U_f)
    f = -2.0 * (blocks.Y_f.T @ (Qbar @ r_flat))
    eq_rows, eq_rhs = [], []
    if config.hard_past:
        eq_rows += [blocks.U_p, blocks.Y_p]
        eq_rhs += [u_ini, y_ini]
    else:
        P += 2.0 * config.lambda_y * (blocks.Y_p.T @ blocks.Y_p)
        f += -2.0 * config.lambda_y * (blocks.Y_p.T @ y_ini)
        if config.use_input_slack:
            P += 2.0 * config.lambda_u * (blocks.U_p.T @ blocks.U_p)
            f += -2.0 * config.lambda_u * (blocks.U_p.T @ u_ini)
        else:
            eq_rows.append(blocks.U_p)
            eq_rhs.append(u_ini)
    if config.lambda_g > 0:
        P += 2.0 * config.lambda_g * (np.eye(d) if reg is None else reg)

    A_eq = np.vstack(eq_rows) if eq_rows else None
    b_eq = np.concatenate(eq_rhs) if eq_rhs else None
    A_in = b_in = None
    if constraints is not None and not constraints.is_trivial():
        A_in, b_in = constraints.rows(N, blocks.U_f, blocks.Y_f)
    prog = QuadProgram(P=P, f=f, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)
    return prog, Qbar, Rbar, r_flat


def _solution_from_g(blocks, config, g, status, active_set, iterations,
                     u_ini, y_ini, r_flat, Qbar, Rbar,
                     reg: np.ndarray | None = None,
                     u=None, y=None, decision_dim: int | None = None) -> DeepcSolution:
    m, p, N, T_ini = blocks.m, blocks.p, blocks.N, blocks.T_ini
    if u is None:
        u = blocks.U_f @ g
    if y is None:
        y = blocks.Y_f @ g
    sigma_u = blocks.U_p @ g - u_ini
    sigma_y = blocks.Y_p @ g - y_ini
    err = y - r_flat
    obj = float(err @ Qbar @ err + u @ Rbar @ u)
    if not config.hard_past:
        obj += config.lambda_y * float(sigma_y @ sigma_y)
        if config.use_input_slack:
            obj += config.lambda_u * float(sigma_u @ sigma_u)
    if config.lambda_g > 0:
        obj += config.lambda_g * float(g @ (g if reg is None else reg @ g))
    return DeepcSolution(
        g=g, u=u.reshape(N, m), y=y.reshape(N, p),
        sigma_u=sigma_u.reshape(T_ini, m), sigma_y=sigma_y.reshape(T_ini, p),
        objective=obj, status=status, active_set=active_set,
        iterations=iterations,
        decision_dim=len(g) if decision_dim is None else decision_dim)


def deepc_step(blocks: DataBlocks, config: DeepcConfig, u_ini, y_ini, r,
               constraints: BoxConstraints | None = None,
               reg: np.ndarray | None = None,
               max_iter: int | None = None) -> DeepcSolution:
    """Solve one receding-horizon step; apply u[0] in closed loop."""
    t0 = time.perf_counter()
    prog, Qbar, Rbar, r_flat = _assemble(blocks, config, u_ini, y_ini, r,
                                         constraints, reg)
    qp_sol = solve_qp_active_set(prog, max_iter=max_iter)
    u_ini = _window(u_ini, config.T_ini, blocks.m, "u_ini")
    y_ini = _window(y_ini, config.T_ini, blocks.p, "y_ini")
    sol = _solution_from_g(blocks, config, qp_sol.x, qp_sol.status,
                           qp_sol.active_set, qp_sol.iterations,
                           u_ini, y_ini, r_flat, Qbar, Rbar, reg)
    return replace(sol, solve_time=time.perf_counter() - t0)


@dataclass(frozen=True)
class DeepcGains:
    """Explicit unconstrained law u = K_r r + K_ini [u_ini; y_ini]."""

    K_r: np.ndarray          # (m*N, p*N)
    K_ini: np.ndarray        # (m*N, (m+p)*T_ini)
    m: int
    p: int
    T_ini: int
    N: int

    def predict(self, u_ini, y_ini, r) -> np.ndarray:
        u_ini = _window(u_ini, self.T_ini, self.m, "u_ini")
        y_ini = _window(y_ini, self.T_ini, self.p, "y_ini")
        r_flat = _flat_reference(r, self.N, self.p)
        w = np.concatenate([u_ini, y_ini])
        return (self.K_r @ r_flat + self.K_ini @ w).reshape(self.N, self.m)


def unconstrained_deepc_gains(blocks: DataBlocks, config: DeepcConfig,
                              reg: np.ndarray | None = None) -> DeepcGains:
    """Condense the unconstrained step into explicit linear gains.

    Solves the stationarity system with matrix right-hand sides; a pseudo-
    inverse keeps the map well defined when lambda_g = 0 leaves the combiner
    underdetermined (any minimizer yields the same u, which is what the
    gains return).
    """
    m, p, N, T_ini = blocks.m, blocks.p, blocks.N, blocks.T_ini
    d = blocks.L
    zero_u = np.zeros(T_ini * m)
    zero_y = np.zeros(T_ini * p)
    prog, Qbar, _, _ = _assemble(blocks, config, zero_u, zero_y,
                                 np.zeros((N, p)), None, reg)
    e = prog.n_eq
    K = np.zeros((d + e, d + e))
    K[:d, :d] = prog.P
    if e:
        K[:d, d:] = prog.A_eq.T
        K[d:, :d] = prog.A_eq
    Z = np.linalg.pinv(K)[:d]

    # rhs = [-f; b_eq] as linear maps of (r, u_ini, y_ini)
    M_r = np.zeros((d + e, p * N))
    M_r[:d] = 2.0 * blocks.Y_f.T @ Qbar
    M_u = np.zeros((d + e, m * T_ini))
    M_y = np.zeros((d + e, p * T_ini))
    if config.hard_past:
        M_u[d:d + m * T_ini] = np.eye(m * T_ini)
        M_y[d + m * T_ini:] = np.eye(p * T_ini)
    else:
        M_y[:d] = 2.0 * config.lambda_y * blocks.Y_p.T
        if config.use_input_slack:
            M_u[:d] = 2.0 * config.lambda_u * blocks.U_p.T
        else:
            M_u[d:] = np.eye(m * T_ini)
    K_r = blocks.U_f @ (Z @ M_r)
    K_ini = blocks.U_f @ (Z @ np.hstack([M_u, M_y]))
    return DeepcGains(K_r=K_r, K_ini=K_ini, m=m, p=p, T_ini=T_ini, N=N)


@dataclass(frozen=True)
class MismatchScore:
    """Best achievable data-consistency cost for a fixed candidate (u, y)."""

    value: float
    status: str
    g: np.ndarray


def _mismatch_terms(blocks: DataBlocks, config: DeepcConfig, u_ini, y_ini):
    """Quadratic (P, f, const) of the consistency cost plus fixed equality rows.

    The consistency cost is the slack/regularization part of the objective:
    lambda_u ||sigma_u||^2 (slack mode) + lambda_y ||sigma_y||^2 (soft mode)
    + lambda_g ||g||^2, with hard channels moved into equality rows.
    """
    d = blocks.L
    P = 2.0 * config.lambda_g * np.eye(d)
    f = np.zeros(d)
    const = 0.0
    eq_rows, eq_rhs = [], []
    if config.hard_past:
        eq_rows += [blocks.U_p, blocks.Y_p]
        eq_rhs += [u_ini, y_ini]
    else:
        P += 2.0 * config.lambda_y * (blocks.Y_p.T @ blocks.Y_p)
        f += -2.0 * config.lambda_y * (blocks.Y_p.T @ y_ini)
        const += config.lambda_y * float(y_ini @ y_ini)
        if config.use_input_slack:
            P += 2.0 * config.lambda_u * (blocks.U_p.T @ blocks.U_p)
            f += -2.0 * config.lambda_u * (blocks.U_p.T @ u_ini)
            const += config.lambda_u * float(u_ini @ u_ini)
        else:
            eq_rows.append(blocks.U_p)
            eq_rhs.append(u_ini)
    A_past = np.vstack(eq_rows) if eq_rows else np.zeros((0, d))
    b_past = np.concatenate(eq_rhs) if eq_rhs else np.zeros(0)
    return P, f, const, A_past, b_past


def trajectory_mismatch(blocks: DataBlocks, config: DeepcConfig,
                        u_ini, y_ini, u, y) -> MismatchScore:
    """Score how well a candidate (u, y) can be explained by the data.

    Minimizes the consistency cost over the combiner subject to the future
    rows reproducing the candidate exactly. Candidates outside the span of
    the future rows get status "infeasible" and an infinite score. A true
    plant trajectory with lambda_g = 0 scores exactly zero.
    """
    m, p = blocks.m, blocks.p
    u_ini = _window(u_ini, config.T_ini, m, "u_ini")
    y_ini = _window(y_ini, config.T_ini, p, "y_ini")
    u = _window(u, config.N, m, "u")
    y = _window(y, config.N, p, "y")
    P, f, const, A_past, b_past = _mismatch_terms(blocks, config, u_ini, y_ini)
    A_eq = np.vstack([A_past, blocks.U_f, blocks.Y_f])
    b_eq = np.concatenate([b_past, u, y])
    sol = solve_eq_qp(P, f, A_eq, b_eq)
    if sol.status != "optimal":
        return MismatchScore(value=np.inf, status="infeasible", g=sol.x)
    g = sol.x
    value = 0.5 * float(g @ P @ g) + float(f @ g) + const
    return MismatchScore(value=max(value, 0.0), status="optimal", g=g)


def decomposed_step(blocks: DataBlocks, config: DeepcConfig, u_ini, y_ini, r,
                    constraints: BoxConstraints | None = None,
                    max_iter: int | None = None) -> DeepcSolution:
    """Equivalent step through the control-cost/consistency-cost split.

    The combiner is eliminated in closed form: the inner consistency
    minimizer is an affine function of the candidate (u, y), so the outer
    problem is a QP in the future window alone, constrained to the span of
    the future rows. The optimizer matches deepc_step exactly.
    """
    t0 = time.perf_counter()
    m, p, N = blocks.m, blocks.p, blocks.N
    d = blocks.L
    u_ini = _window(u_ini, config.T_ini, m, "u_ini")
    y_ini = _window(y_ini, config.T_ini, p, "y_ini")
    r_flat = _flat_reference(r, N, p)
    Qbar, Rbar = config.weights.horizon(N)
    nv = (m + p) * N

    P_m, f_m, const_m, A_past, b_past = _mismatch_terms(blocks, config, u_ini, y_ini)
    e_p = A_past.shape[0]
    A_stack = np.vstack([A_past, blocks.U_f, blocks.Y_f])

    # inner consistency minimum as a function of the candidate (u, y).
    # Eliminating the combiner through its stationarity system squares the
    # constraint conditioning, and when the penalty weights span ten orders
    # of magnitude the roundoff it amplifies buries the control cost, enough
    # to push the outer optimizer onto a wrong active set. The value
    # function is far better behaved than the minimizer: split g into a
    # pseudoinverse particular solution plus an orthonormal null component,
    # write the penalties as weighted residual rows, and reduce them with
    # one small SVD. The minimum over the null component is then a ridge
    # filter on those rows, so everything that stays in the outer program
    # is an orthogonal projection or a contraction.
    U_sv, s_sv, Vt_sv = np.linalg.svd(A_stack, full_matrices=True)
    rank = int(np.sum(s_sv > 1e-9 * s_sv[0])) if s_sv.size and s_sv[0] > 0 else 0
    pinv_A = (Vt_sv[:rank].T / s_sv[:rank]) @ U_sv[:, :rank].T
    V_n = Vt_sv[rank:].T
    n_null = V_n.shape[1]

    rows_w, rhs_w = [], []
    if not config.hard_past:
        rows_w.append(np.sqrt(config.lambda_y) * blocks.Y_p)
        rhs_w.append(np.sqrt(config.lambda_y) * y_ini)
        if config.use_input_slack:
            rows_w.append(np.sqrt(config.lambda_u) * blocks.U_p)
            rhs_w.append(np.sqrt(config.lambda_u) * u_ini)
    C_w = np.vstack(rows_w) if rows_w else np.zeros((0, d))
    c_w = np.concatenate(rhs_w) if rhs_w else np.zeros(0)

    Fp = C_w @ pinv_A
    e0 = c_w - (Fp[:, :e_p] @ b_past if e_p else 0.0)
    F1 = Fp[:, e_p:]
    D = C_w @ V_n
    Ud, sd, Vtd = np.linalg.svd(D, full_matrices=False)
    # cut against the penalty-row scale, not against sd[0]: when the past
    # rows are exactly dependent on the stacked constraint rows, D is zero
    # in exact arithmetic and every computed singular value is roundoff.
    # A junk direction kept here declares the residual reducible at
    # unbounded combiner norm and silently deletes the consistency cost.
    scale_w = np.linalg.norm(C_w, 2) if C_w.size else 0.0
    rankd = int(np.sum(sd > 1e-9 * scale_w)) if sd.size else 0
    Ud, sd, Vtd = Ud[:, :rankd], sd[:rankd], Vtd[:rankd]
    if config.lambda_g > 0:
        filt = sd ** 2 / (sd ** 2 + config.lambda_g)
        wmap = (Vtd.T * (sd / (sd ** 2 + config.lambda_g))) @ Ud.T
    else:
        filt = np.ones(rankd)
        wmap = ((Vtd.T / sd) @ Ud.T if rankd
                else np.zeros((n_null, C_w.shape[0])))
    proj = F1 - Ud @ ((filt[:, None] * Ud.T) @ F1)

    # consistency cost as a quadratic in v (value function, not minimizer)
    M = 2.0 * (F1.T @ proj)
    m1 = -2.0 * (proj.T @ e0)
    q0 = pinv_A[:, :e_p] @ b_past if e_p else np.zeros(d)
    Q1 = pinv_A[:, e_p:]
    if config.lambda_g > 0:
        M += 2.0 * config.lambda_g * (Q1.T @ Q1)
        m1 += 2.0 * config.lambda_g * (Q1.T @ q0)
    M = 0.5 * (M + M.T)

    # affine map back to the reported combiner (refined below when optimal)
    G1 = Q1 - V_n @ (wmap @ F1)
    g0 = q0 + V_n @ (wmap @ e0)
    # feasible v: the stacked equality system must stay consistent
    Nl = U_sv[:, rank:]
    A_eq_v = Nl[e_p:].T
    b_eq_v = -(Nl[:e_p].T @ b_past) if e_p else np.zeros(A_eq_v.shape[0])
    if A_eq_v.shape[0] == 0:
        A_eq_v = None
        b_eq_v = None

    P_v = np.zeros((nv, nv))
    P_v[:m * N, :m * N] = 2.0 * Rbar
    P_v[m * N:, m * N:] = 2.0 * Qbar
    P_v += M
    f_v = m1.copy()
    f_v[m * N:] += -2.0 * (Qbar @ r_flat)

    A_in = b_in = None
    if constraints is not None and not constraints.is_trivial():
        U_map = np.zeros((m * N, nv))
        U_map[:, :m * N] = np.eye(m * N)
        Y_map = np.zeros((p * N, nv))
        Y_map[:, m * N:] = np.eye(p * N)
        A_in, b_in = constraints.rows(N, U_map, Y_map)
    prog = QuadProgram(P=P_v, f=f_v, A_eq=A_eq_v, b_eq=b_eq_v, A_in=A_in, b_in=b_in)
    qp_sol = solve_qp_active_set(prog, max_iter=max_iter)
    v = qp_sol.x
    g = G1 @ v + g0
    if qp_sol.status == "optimal":
        # One refinement solve in the combiner variables. The mapped-back
        # combiner goes through operators with large norm when the penalty
        # rows are nearly dependent on the constraint null space, so it is
        # only good to a handful of digits; re-solving the stationarity
        # system at the discovered active set recovers the rest.
        F = np.vstack([blocks.U_f, blocks.Y_f])
        P_g = P_m + 2.0 * (blocks.U_f.T @ Rbar @ blocks.U_f
                           + blocks.Y_f.T @ Qbar @ blocks.Y_f)
        f_g = f_m - 2.0 * (blocks.Y_f.T @ (Qbar @ r_flat))
        rows, rhs = [A_past], [b_past]
        if A_in is not None and qp_sol.active_set:
            act = list(qp_sol.active_set)
            rows.append(A_in[act] @ F)
            rhs.append(b_in[act])
        ref = solve_eq_qp(P_g, f_g, np.vstack(rows), np.concatenate(rhs))
        if ref.status == "optimal":
            v_ref = F @ ref.x
            feasible = A_in is None or bool(np.all(A_in @ v_ref <= b_in + 1e-9))
            if feasible:
                g, v = ref.x, v_ref
    sol = _solution_from_g(blocks, config, g, qp_sol.status, qp_sol.active_set,
                           qp_sol.iterations, u_ini, y_ini, r_flat, Qbar, Rbar,
                           u=v[:m * N], y=v[m * N:], decision_dim=nv)
    return replace(sol, solve_time=time.perf_counter() - t0)

"""Structure-exploiting reformulations of the data-driven step.

Each variant restates the same receding-horizon problem with a smaller or
better-conditioned decision variable:

  subspace predictor  -- least squares onto [U_p; Y_p; U_f], decision u only
  null-space          -- combiner split into particular + kernel part
  reduced-order       -- SVD-truncated Hankel stack
  kernel              -- banded left-annihilator lifted to the full window
  range-space         -- Gram matrix of the Hankel rows as the constraint map

On exact data with hard past consistency all of them reproduce the direct
solver's optimizer; their value is the decision dimension and storage.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .deepc import DeepcConfig, DeepcSolution, deepc_step, _window, _solution_from_g
from .hankel import DataBlocks, SvdReduction, build_mosaic, numeric_rank
from .mpc import BoxConstraints, _flat_reference
from .plants import Trajectory
from .qp import QuadProgram, solve_qp_active_set


def _quad_from_affine(terms, dim: int):
    """Sum of (M x + c)' W (M x + c) as (P, f, const) with 0.5 x'Px + f'x + const.

    W may be a scalar weight or a square matrix.
    """
    P = np.zeros((dim, dim))
    f = np.zeros(dim)
    const = 0.0
    for M, c, W in terms:
        if np.ndim(W) == 0:
            if W == 0:
                continue
            WM = float(W) * M
            Wc = float(W) * c
        else:
            WM = W @ M
            Wc = W @ c
        P += 2.0 * M.T @ WM
        f += 2.0 * M.T @ Wc
        const += float(c @ Wc)
    return P, f, const


def _eliminate_tail(P, f, const, keep: int):
    """Minimize the quadratic over the trailing block in closed form.

    Returns (P_red, f_red, const_red, S, s0) with the eliminated block
    recovered as s = S u + s0. The trailing block of P must be PD.
    """
    Puu = P[:keep, :keep]
    Pus = P[:keep, keep:]
    Pss = P[keep:, keep:]
    fu, fs = f[:keep], f[keep:]
    S = -np.linalg.solve(Pss, Pus.T)
    s0 = -np.linalg.solve(Pss, fs)
    P_red = Puu + Pus @ S
    f_red = fu + Pus @ s0
    const_red = const + 0.5 * float(fs @ s0)
    return P_red, f_red, const_red, S, s0


# ---------------------------------------------------------------------------
# subspace predictor


@dataclass(frozen=True)
class SpcPredictor:
    """Least-squares multi-step predictor fitted on the Hankel blocks.

    y = S_ini [u_ini; y_ini] + S_u u, with the matching combiner maps
    g = H_ini [u_ini; y_ini] + H_u u kept for the optional combiner
    regularization term. Only S_ini and S_u are needed online when that
    term is off, which is what makes the footprint horizon-sized.
    """

    S_ini: np.ndarray        # (p*N, q*T_ini)
    S_u: np.ndarray          # (p*N, m*N)
    H_ini: np.ndarray        # (L, q*T_ini)
    H_u: np.ndarray          # (L, m*N)
    T_ini: int
    N: int
    m: int
    p: int


def fit_spc(blocks: DataBlocks) -> SpcPredictor:
    """Project future outputs onto past data and future inputs."""
    H_pu = np.vstack([blocks.U_p, blocks.Y_p, blocks.U_f])
    Pi = np.linalg.pinv(H_pu)
    S = blocks.Y_f @ Pi
    q_Ti = (blocks.m + blocks.p) * blocks.T_ini
    return SpcPredictor(
        S_ini=S[:, :q_Ti], S_u=S[:, q_Ti:],
        H_ini=Pi[:, :q_Ti], H_u=Pi[:, q_Ti:],
        T_ini=blocks.T_ini, N=blocks.N, m=blocks.m, p=blocks.p)


def spc_step(pred: SpcPredictor, config: DeepcConfig, u_ini, y_ini, r,
             constraints: BoxConstraints | None = None,
             max_iter: int | None = None) -> DeepcSolution:
    """Receding-horizon step with the fitted predictor; decision is u alone.

    In the soft regimes the slacks are eliminated in closed form before
    constraints are imposed, so box rows see the eliminated predictor.
    """
    t0 = time.perf_counter()
    m, p, N, T_ini = pred.m, pred.p, pred.N, pred.T_ini
    if config.T_ini != T_ini or config.N != N:
        raise ValueError("predictor fitted for different horizons")
    u_ini = _window(u_ini, T_ini, m, "u_ini")
    y_ini = _window(y_ini, T_ini, p, "y_ini")
    r_flat = _flat_reference(r, N, p)
    Qbar, Rbar = config.weights.horizon(N)
    w = np.concatenate([u_ini, y_ini])
    nu = m * N

    # slack channels entering w + sigma
    sel_cols = []
    lam = []
    if not config.hard_past:
        if config.use_input_slack:
            sel_cols += list(range(m * T_ini))
            lam += [config.lambda_u] * (m * T_ini)
        sel_cols += list(range(m * T_ini, (m + p) * T_ini))
        lam += [config.lambda_y] * (p * T_ini)
    ns = len(sel_cols)
    Sel = np.zeros((w.shape[0], ns))
    for j, c in enumerate(sel_cols):
        Sel[c, j] = 1.0

    dim = nu + ns
    U_map = np.zeros((nu, dim))
    U_map[:, :nu] = np.eye(nu)
    Y_map = np.hstack([pred.S_u, pred.S_ini @ Sel]) if ns else pred.S_u.copy()
    if ns == 0:
        Y_map = np.hstack([pred.S_u, np.zeros((p * N, 0))])
    y0 = pred.S_ini @ w

    terms = [
        (Y_map, y0 - r_flat, Qbar),
        (U_map, np.zeros(nu), Rbar),
    ]
    if ns:
        S_sig = np.zeros((ns, dim))
        S_sig[:, nu:] = np.eye(ns)
        terms.append((S_sig, np.zeros(ns), np.diag(lam)))
    if config.lambda_g > 0:
        G_map = np.hstack([pred.H_u, pred.H_ini @ Sel]) if ns else \
            np.hstack([pred.H_u, np.zeros((pred.H_u.shape[0], 0))])
        terms.append((G_map, pred.H_ini @ w, config.lambda_g))
    P, f, const = _quad_from_affine(terms, dim)

    if ns:
        P, f, const, S_rec, s0 = _eliminate_tail(P, f, const, nu)
        y_of_u = (Y_map[:, :nu] + Y_map[:, nu:] @ S_rec, y0 + Y_map[:, nu:] @ s0)
    else:
        S_rec = np.zeros((0, nu))
        s0 = np.zeros(0)
        y_of_u = (Y_map[:, :nu], y0)

    A_in = b_in = None
    if constraints is not None and not constraints.is_trivial():
        A_in, b_in = constraints.rows(N, np.eye(nu), y_of_u[0], y_bias=y_of_u[1])
    qp_sol = solve_qp_active_set(QuadProgram(P=P, f=f, A_in=A_in, b_in=b_in),
                                 max_iter=max_iter)
    u = qp_sol.x
    sigma = S_rec @ u + s0
    y = y_of_u[0] @ u + y_of_u[1]
    g = pred.H_ini @ (w + Sel @ sigma) + pred.H_u @ u

    sigma_u = np.zeros(m * T_ini)
    sigma_y = np.zeros(p * T_ini)
    if ns:
        if config.use_input_slack:
            sigma_u = sigma[:m * T_ini]
            sigma_y = sigma[m * T_ini:]
        else:
            sigma_y = sigma
    err = y - r_flat
    obj = float(err @ Qbar @ err + u @ Rbar @ u)
    obj += config.lambda_y * float(sigma_y @ sigma_y) if not config.hard_past else 0.0
    if config.use_input_slack:
        obj += config.lambda_u * float(sigma_u @ sigma_u)
    if config.lambda_g > 0:
        obj += config.lambda_g * float(g @ g)
    return DeepcSolution(
        g=g, u=u.reshape(N, m), y=y.reshape(N, p),
        sigma_u=sigma_u.reshape(T_ini, m), sigma_y=sigma_y.reshape(T_ini, p),
        objective=obj, status=qp_sol.status, active_set=qp_sol.active_set,
        iterations=qp_sol.iterations, solve_time=time.perf_counter() - t0,
        decision_dim=nu)


# ---------------------------------------------------------------------------
# null-space reformulation


@dataclass(frozen=True)
class NullSpaceParam:
    """Particular-plus-kernel split of the combiner against the past rows.

    Any g with H_past g ~ w_ini is pinv_past @ w_ini plus an element of the
    kernel; the online decision is the kernel coefficient, dimension
    L - rank(H_past).
    """

    pinv_past: np.ndarray    # (L, q*T_ini)
    null_basis: np.ndarray   # (L, L - rank)
    rank_past: int


def build_null_space(blocks: DataBlocks, tol: float = 1e-9) -> NullSpaceParam:
    H_p = blocks.H_past
    U, s, Vt = np.linalg.svd(H_p, full_matrices=True)
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    pinv = Vt[:r].T @ ((U[:, :r] / s[:r]).T)
    return NullSpaceParam(pinv_past=pinv, null_basis=Vt[r:].T, rank_past=r)


def null_space_step(param: NullSpaceParam, blocks: DataBlocks, config: DeepcConfig,
                    u_ini, y_ini, r, constraints: BoxConstraints | None = None,
                    max_iter: int | None = None) -> DeepcSolution:
    """Step in the kernel coordinates; optimizer matches the direct solver.

    Hard regime: g = pinv_past w_ini + Phi z, so past consistency is built
    into the parametrization and only the kernel coefficient is free. Soft
    regimes add the slacks to w_ini and eliminate them in closed form
    (exact whenever the past rows have full row rank).
    """
    t0 = time.perf_counter()
    m, p, N, T_ini = blocks.m, blocks.p, blocks.N, blocks.T_ini
    u_ini = _window(u_ini, T_ini, m, "u_ini")
    y_ini = _window(y_ini, T_ini, p, "y_ini")
    r_flat = _flat_reference(r, N, p)
    Qbar, Rbar = config.weights.horizon(N)
    w = np.concatenate([u_ini, y_ini])
    Phi = param.null_basis
    nz = Phi.shape[1]

    sel_cols = []
    lam = []
    if not config.hard_past:
        if config.use_input_slack:
            sel_cols += list(range(m * T_ini))
            lam += [config.lambda_u] * (m * T_ini)
        sel_cols += list(range(m * T_ini, (m + p) * T_ini))
        lam += [config.lambda_y] * (p * T_ini)
    ns = len(sel_cols)
    Sel = np.zeros((w.shape[0], ns))
    for j, c in enumerate(sel_cols):
        Sel[c, j] = 1.0

    dim = nz + ns
    # g as an affine map of x = [z; sigma]
    G_map = np.hstack([Phi, param.pinv_past @ Sel]) if ns else Phi
    if ns == 0:
        G_map = np.hstack([Phi, np.zeros((Phi.shape[0], 0))])
    g0 = param.pinv_past @ w

    terms = [
        (blocks.Y_f @ G_map, blocks.Y_f @ g0 - r_flat, Qbar),
        (blocks.U_f @ G_map, blocks.U_f @ g0, Rbar),
    ]
    if ns:
        S_sig = np.zeros((ns, dim))
        S_sig[:, nz:] = np.eye(ns)
        terms.append((S_sig, np.zeros(ns), np.diag(lam)))
    if config.lambda_g > 0:
        terms.append((G_map, g0, config.lambda_g))
    P, f, const = _quad_from_affine(terms, dim)

    if ns:
        P, f, const, S_rec, s0 = _eliminate_tail(P, f, const, nz)
    else:
        S_rec = np.zeros((0, nz))
        s0 = np.zeros(0)
    # realized g as a map of z after eliminating sigma
    G_z = G_map[:, :nz] + G_map[:, nz:] @ S_rec
    g_off = g0 + G_map[:, nz:] @ s0

    A_in = b_in = None
    if constraints is not None and not constraints.is_trivial():
        A_in, b_in = constraints.rows(N, blocks.U_f @ G_z, blocks.Y_f @ G_z,
                                      u_bias=blocks.U_f @ g_off,
                                      y_bias=blocks.Y_f @ g_off)
    qp_sol = solve_qp_active_set(QuadProgram(P=P, f=f, A_in=A_in, b_in=b_in),
                                 max_iter=max_iter)
    z = qp_sol.x
    g = G_z @ z + g_off
    status = qp_sol.status
    if config.hard_past:
        # hard regime requires the history to be reproducible from data
        resid = np.linalg.norm(blocks.H_past @ g0 - w)
        if resid > 1e-6 * (1.0 + np.linalg.norm(w)):
            status = "infeasible"
    sol = _solution_from_g(blocks, config, g, status, qp_sol.active_set,
                           qp_sol.iterations, u_ini, y_ini, r_flat, Qbar, Rbar,
                           decision_dim=nz)
    return replace(sol, solve_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# reduced-order (SVD-truncated) solver


def reduced_order_step(reduction: SvdReduction, config: DeepcConfig,
                       u_ini, y_ini, r,
                       constraints: BoxConstraints | None = None,
                       max_iter: int | None = None) -> DeepcSolution:
    """Direct step on the truncated blocks; full-rank truncation is exact.

    The returned combiner lives in the reduced coordinates (length r_a).
    """
    return deepc_step(reduction.blocks, config, u_ini, y_ini, r,
                      constraints=constraints, max_iter=max_iter)


# ---------------------------------------------------------------------------
# kernel (annihilator) representation


@dataclass(frozen=True)
class KernelRep:
    """Null-space trajectory basis built from a short annihilator.

    R_M annihilates every depth-M window of the data; Gamma tiles its
    first p rows along the window to annihilate depth-Z windows, and P
    spans null(Gamma): every admissible length-Z trajectory is P beta
    with beta of length m*Z + n. Built from a record only slightly longer
    than the minimum for depth M, far shorter than depth-Z approaches need.
    """

    P: np.ndarray            # (q*Z, m*Z + n), interleaved row order
    R_M: np.ndarray          # (p*M - n, q*M)
    Gamma: np.ndarray        # (p*Z - n, q*Z)
    m: int
    p: int
    M: int
    Z: int
    n: int
    cond_gamma: float

    def as_blocks(self, T_ini: int, N: int) -> DataBlocks:
        """Reorder interleaved rows into the (U_p, Y_p, U_f, Y_f) layout."""
        if T_ini + N != self.Z:
            raise ValueError(f"T_ini + N must equal Z = {self.Z}")
        q, m, p = self.m + self.p, self.m, self.p
        u_rows = [t * q + j for t in range(self.Z) for j in range(m)]
        y_rows = [t * q + m + j for t in range(self.Z) for j in range(p)]
        u_rows = np.asarray(u_rows).reshape(self.Z, m)
        y_rows = np.asarray(y_rows).reshape(self.Z, p)
        return DataBlocks(
            U_p=self.P[u_rows[:T_ini].reshape(-1)],
            Y_p=self.P[y_rows[:T_ini].reshape(-1)],
            U_f=self.P[u_rows[T_ini:].reshape(-1)],
            Y_f=self.P[y_rows[T_ini:].reshape(-1)],
            T_ini=T_ini, N=N, m=m, p=p)


def build_kernel_rep(w_data, m: int, M: int, Z: int, n: int | None = None,
                     tol: float = 1e-9, cond_limit: float = 1e10) -> KernelRep:
    """Annihilator-based basis of the length-Z behavior from short data.

    Args:
        w_data: interleaved samples (T, m+p); a Trajectory, an array, or a
            list of either (episodes concatenate column-wise).
        m: input width (splits each sample into input and output parts).
        M: annihilator window, at least lag + 1 for exactness.
        Z: target window (T_ini + N downstream).
        n: state dimension if known; inferred from the rank otherwise and
            validated when given.

    Raises ValueError when the depth-M data matrix has the wrong rank, when
    the tiled annihilator loses row rank, or when its conditioning exceeds
    cond_limit (the tiling can go ill-conditioned; a larger M helps).
    """
    if isinstance(w_data, (Trajectory, np.ndarray)):
        w_data = [w_data]
    ws = [w.w if isinstance(w, Trajectory) else np.asarray(w, dtype=float) for w in w_data]
    q = ws[0].shape[1]
    p = q - m
    if p < 1:
        raise ValueError("need at least one output channel")
    if Z < M:
        raise ValueError("Z must be at least the annihilator window M")
    H_M = build_mosaic(ws, M)
    if n is not None and H_M.shape[1] < m * M + n:
        raise ValueError("not enough data columns for the required rank")
    U, s, _ = np.linalg.svd(H_M, full_matrices=True)
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    n_inf = rank - m * M
    if n is None:
        n = n_inf
    if n != n_inf or n < 0:
        raise ValueError(
            f"depth-{M} data matrix has rank {rank}, expected {m * M} + n; "
            f"check excitation, window, or the claimed state dimension")
    if p * M - n < 1:
        raise ValueError("window M too short: annihilator would be empty")
    R_M = U[:, rank:].T

    n_rows = p * Z - n
    Gamma = np.zeros((n_rows, q * Z))
    head = p * M - n
    Gamma[:head, :q * M] = R_M
    for j in range(1, Z - M + 1):
        rows = slice(head + (j - 1) * p, head + j * p)
        Gamma[rows, j * q:j * q + q * M] = R_M[:p]
    sg = np.linalg.svd(Gamma, compute_uv=False)
    rank_g = int(np.sum(sg > tol * sg[0]))
    if rank_g < n_rows:
        raise ValueError("tiled annihilator lost row rank; increase M or improve data")
    cond_g = float(sg[0] / sg[n_rows - 1])
    if cond_g > cond_limit:
        raise ValueError(
            f"tiled annihilator condition number {cond_g:.2e} exceeds {cond_limit:.0e}; "
            f"increase M or collect better-conditioned data")
    _, _, Vt = np.linalg.svd(Gamma, full_matrices=True)
    P = Vt[n_rows:].T
    return KernelRep(P=P, R_M=R_M, Gamma=Gamma, m=m, p=p, M=M, Z=Z, n=n,
                     cond_gamma=cond_g)


def kernel_step(rep: KernelRep, config: DeepcConfig, u_ini, y_ini, r,
                constraints: BoxConstraints | None = None,
                max_iter: int | None = None) -> DeepcSolution:
    """Step over the basis coefficient beta (length m*Z + n)."""
    blocks = rep.as_blocks(config.T_ini, config.N)
    return deepc_step(blocks, config, u_ini, y_ini, r,
                      constraints=constraints, max_iter=max_iter)


# ---------------------------------------------------------------------------
# range-space (Gram matrix) reformulation


@dataclass(frozen=True)
class RangeSpaceData:
    """Gram form G = H Psi^{-1} H' with the same row partition as H.

    The combiner is replaced by alpha with g = Psi^{-1} H' alpha; the
    natural regularizer ||g||_Psi^2 becomes alpha' G alpha. Storage is
    (qK)^2 independent of the record length, but cond(G) = cond(H)^2
    for Psi = I, so tolerances downstream must be generous.
    """

    G: np.ndarray
    blocks: DataBlocks       # row partition of G, decision dimension q*K

    @property
    def dim(self) -> int:
        return self.G.shape[0]


def build_range_space(blocks: DataBlocks, Psi: np.ndarray | None = None) -> RangeSpaceData:
    H = blocks.H
    if Psi is None:
        G = H @ H.T
    else:
        Psi = np.asarray(Psi, dtype=float)
        s = np.linalg.eigvalsh(0.5 * (Psi + Psi.T))
        if s[0] <= 0:
            raise ValueError("Psi must be positive definite")
        G = H @ np.linalg.solve(Psi, H.T)
    m, p, T_ini = blocks.m, blocks.p, blocks.T_ini
    mTi, qTi = m * T_ini, (m + p) * T_ini
    gb = DataBlocks(U_p=G[:mTi], Y_p=G[mTi:qTi],
                    U_f=G[qTi:qTi + m * blocks.N], Y_f=G[qTi + m * blocks.N:],
                    T_ini=T_ini, N=blocks.N, m=m, p=p)
    return RangeSpaceData(G=G, blocks=gb)


def range_space_step(rs: RangeSpaceData, config: DeepcConfig, u_ini, y_ini, r,
                     constraints: BoxConstraints | None = None,
                     max_iter: int | None = None) -> DeepcSolution:
    """Step over alpha; same optimizer, Gram-weighted regularization."""
    return deepc_step(rs.blocks, config, u_ini, y_ini, r,
                      constraints=constraints, reg=rs.G, max_iter=max_iter)

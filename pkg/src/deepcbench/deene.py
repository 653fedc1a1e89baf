"""Neighboring-extremal updates around a nominal data-driven solution.

For the soft-regime problem the combiner QP is parametric in the history
window w_ini = (u_ini, y_ini) and the reference r, and both enter only the
linear term. As long as the active set does not change, the perturbed
optimizer is an exact affine function of (delta w_ini, delta r); the gains
come from one factorization of the KKT system at the nominal point. A
refresh policy detects when the expansion stops being valid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .deepc import DeepcConfig, _assemble
from .hankel import DataBlocks
from .mpc import BoxConstraints

log = logging.getLogger(__name__)

_TOL_VIOL = 1e-8


def _parameter_jacobians(blocks: DataBlocks, config: DeepcConfig, Qbar):
    """d(linear term)/d w_ini and /d r for the soft-regime cost."""
    J_gw = -2.0 * np.hstack([config.lambda_u * blocks.U_p.T,
                             config.lambda_y * blocks.Y_p.T])
    J_gr = -2.0 * blocks.Y_f.T @ Qbar
    return J_gw, J_gr


def _check_regime(config: DeepcConfig):
    # the parametric form above needs both past channels penalized
    if config.hard_past or not config.use_input_slack:
        raise ValueError("sensitivity gains need both past channels "
                         "penalized (use_input_slack=True, hard_past=False)")


def recover_multipliers(nominal, blocks: DataBlocks, config: DeepcConfig,
                        u_ini, y_ini, r,
                        constraints: BoxConstraints | None = None) -> np.ndarray:
    """Least-squares multipliers of the active rows from the gradient.

    mu = -(E E^T)^{-1} E (P g + f) over the active inequality rows E.
    Empty active set gives an empty vector. Raises when the active rows
    are linearly dependent, which breaks multiplier uniqueness.
    """
    _check_regime(config)
    prog, _, _, _ = _assemble(blocks, config, u_ini, y_ini, r, constraints)
    active = list(nominal.active_set)
    if not active:
        return np.zeros(0)
    E = prog.A_in[active]
    grad = prog.P @ nominal.g + prog.f
    if np.linalg.matrix_rank(E, tol=1e-10 * max(1.0, np.abs(E).max())) < len(active):
        raise ValueError("active constraint rows are linearly dependent")
    return -np.linalg.solve(E @ E.T, E @ grad)


@dataclass
class DeeneGains:
    """Frozen sensitivity data for one nominal solve.

    K1/K2 map history and reference perturbations to delta g, M1/M2 map
    them to delta mu over the active rows. The step counter and last
    refresh reason are bookkeeping for the scheduled-refresh policy; the
    gain matrices themselves are never mutated.
    """
    K1: np.ndarray
    K2: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    kkt_factorization: tuple
    g0: np.ndarray
    mu0: np.ndarray
    w0: np.ndarray
    r0: np.ndarray
    active_set: tuple
    A_in: np.ndarray | None
    b_in: np.ndarray | None
    U_f: np.ndarray
    N: int
    m: int
    trust_radius: float
    refresh_every: int = 25
    tol_viol: float = _TOL_VIOL
    steps: int = 0
    last_refresh_reason: str = field(default="", repr=False)


def build_deene(nominal, blocks: DataBlocks, config: DeepcConfig,
                u_ini, y_ini, r,
                constraints: BoxConstraints | None = None,
                trust_radius: float | None = None,
                refresh_every: int = 25) -> DeeneGains:
    """Factor the nominal KKT system and assemble perturbation gains.

    The Hessian must be positive definite (guaranteed in the soft regime
    with lambda_g > 0 and verified by a Cholesky attempt); active rows
    must be independent. The default trust radius scales with the nominal
    window so the policy is size-free across plants.
    """
    _check_regime(config)
    prog, Qbar, _, r_flat = _assemble(blocks, config, u_ini, y_ini, r, constraints)
    if prog.A_eq is not None:
        raise ValueError("unexpected equality rows in the soft regime")
    try:
        scipy.linalg.cho_factor(prog.P)
    except np.linalg.LinAlgError as exc:
        raise ValueError("combiner Hessian is not positive definite; "
                         "sensitivity gains need a strictly convex problem "
                         "(set lambda_g > 0)") from exc
    L = prog.dim
    active = tuple(nominal.active_set)
    na = len(active)
    if na:
        E = prog.A_in[list(active)]
        if np.linalg.matrix_rank(E, tol=1e-10 * max(1.0, np.abs(E).max())) < na:
            raise ValueError("active constraint rows are linearly dependent")
        K0 = np.block([[prog.P, E.T], [E, np.zeros((na, na))]])
    else:
        K0 = prog.P
    lu = scipy.linalg.lu_factor(K0)
    if not np.all(np.isfinite(lu[0])) or np.abs(np.diag(lu[0])).min() < 1e-12 * np.abs(np.diag(lu[0])).max():
        raise ValueError("sensitivity KKT system is singular")

    J_gw, J_gr = _parameter_jacobians(blocks, config, Qbar)
    rhs_w = np.vstack([J_gw, np.zeros((na, J_gw.shape[1]))])
    rhs_r = np.vstack([J_gr, np.zeros((na, J_gr.shape[1]))])
    sol_w = -scipy.linalg.lu_solve(lu, rhs_w)
    sol_r = -scipy.linalg.lu_solve(lu, rhs_r)

    mu0 = recover_multipliers(nominal, blocks, config, u_ini, y_ini, r, constraints)
    w0 = np.concatenate([np.asarray(u_ini, dtype=float).ravel(),
                         np.asarray(y_ini, dtype=float).ravel()])
    if trust_radius is None:
        trust_radius = 10.0 * (1.0 + float(np.linalg.norm(w0)))
    return DeeneGains(
        K1=sol_w[:L], K2=sol_r[:L], M1=sol_w[L:], M2=sol_r[L:],
        kkt_factorization=lu, g0=np.asarray(nominal.g, dtype=float),
        mu0=mu0, w0=w0, r0=r_flat, active_set=active,
        A_in=prog.A_in, b_in=prog.b_in,
        U_f=blocks.U_f, N=blocks.N, m=blocks.m,
        trust_radius=float(trust_radius), refresh_every=refresh_every)


def deene_step(gains: DeeneGains, u_ini, y_ini, r):
    """Propagate the nominal solution to perturbed inputs.

    Returns (u_star, refresh_flag) with u_star the flat mN input plan.
    The flag asks the caller to re-solve and rebuild when the expansion
    can no longer be trusted: a scheduled refresh is due, the perturbation
    left the trust region, a previously inactive constraint is violated,
    or an active-row multiplier estimate turned negative. The step itself
    is matrix-vector work only.
    """
    w_new = np.concatenate([np.asarray(u_ini, dtype=float).ravel(),
                            np.asarray(y_ini, dtype=float).ravel()])
    r_new = np.asarray(r, dtype=float).ravel()
    dw = w_new - gains.w0
    dr = r_new - gains.r0
    gains.steps += 1
    reason = ""
    if gains.steps >= gains.refresh_every:
        reason = "scheduled"
    if not reason and np.linalg.norm(dw) > gains.trust_radius:
        reason = "trust_region"

    g = gains.g0 + gains.K1 @ dw + gains.K2 @ dr
    if gains.A_in is not None and gains.A_in.shape[0]:
        resid = gains.A_in @ g - gains.b_in
        inactive = np.ones(gains.A_in.shape[0], dtype=bool)
        inactive[list(gains.active_set)] = False
        if not reason and inactive.any() and resid[inactive].max() > gains.tol_viol:
            reason = "constraint_violation"
        if gains.active_set:
            mu = gains.mu0 + gains.M1 @ dw + gains.M2 @ dr
            if not reason and mu.min() < -gains.tol_viol:
                reason = "negative_multiplier"
            if mu.size:
                log.debug("multiplier estimates: min %.3e max %.3e",
                          mu.min(), mu.max())
    gains.last_refresh_reason = reason
    u_star = gains.U_f @ g
    return u_star, bool(reason)

import numpy as np
import pytest

from deepcbench.deepc import DeepcConfig, deepc_step
from deepcbench.hankel import (build_mosaic, min_data_length, numeric_rank,
                               partition, svd_reduce)
from deepcbench.mpc import BoxConstraints, CostWeights, mpc_step
from deepcbench.plants import (collect_dataset, Excitation, lag,
                               make_integrator, make_random_lti, simulate)
from deepcbench.variants import (build_kernel_rep, build_null_space,
                                 build_range_space, fit_spc, kernel_step,
                                 null_space_step, range_space_step,
                                 reduced_order_step, spc_step)


def _setup(seed=0, n=3, m=1, p=1, T=120, T_ini=None, N=8):
    model = make_random_lti(seed=seed, n=n, m=m, p=p)
    data = collect_dataset(model, Excitation(length=T), seed=seed)
    T_ini = T_ini or max(2, lag(model))
    blocks = partition(data, T_ini, N)
    weights = CostWeights.make(1.0, 0.1, p, m)
    return model, data, blocks, weights, T_ini, N


def _true_window(model, rng, T_ini):
    x0 = 0.3 * rng.standard_normal(model.n)
    u_ini = 0.4 * rng.standard_normal((T_ini, model.m))
    tr = simulate(model, x0, u_ini)
    x = x0
    for k in range(T_ini):
        x = model.step_state(x, u_ini[k])
    return u_ini, tr.y, x


# ---------------------------------------------------------------------------
# subspace predictor


def test_spc_integrator_predictor_frozen():
    # y(k+1) = y(k) + u(k); past window one step, horizon two. The first
    # predicted output is the current one (no feedthrough), so it sees only
    # the window; the second adds the first future input.
    model = make_integrator()
    rng = np.random.default_rng(5)
    data = simulate(model, np.zeros(1), rng.standard_normal((9, 1)))
    pred = fit_spc(partition(data, 1, 2))
    np.testing.assert_allclose(pred.S_ini, [[1.0, 1.0], [1.0, 1.0]], atol=1e-10)
    np.testing.assert_allclose(pred.S_u, [[0.0, 0.0], [1.0, 0.0]], atol=1e-10)


def test_spc_prediction_matches_rollout():
    model, _, blocks, _, T_ini, N = _setup(seed=2, n=3, m=2, p=2)
    pred = fit_spc(blocks)
    rng = np.random.default_rng(7)
    for _ in range(5):
        u_ini, y_ini, x = _true_window(model, rng, T_ini)
        u_f = 0.5 * rng.standard_normal((N, model.m))
        w = np.concatenate([u_ini.ravel(), y_ini.ravel()])
        y_hat = pred.S_ini @ w + pred.S_u @ u_f.ravel()
        ref = simulate(model, x, u_f)
        np.testing.assert_allclose(y_hat, ref.y.ravel(), atol=1e-8)


def test_spc_zero_window_zero_prediction():
    _, _, blocks, _, T_ini, N = _setup(seed=1)
    pred = fit_spc(blocks)
    w = np.zeros((blocks.m + blocks.p) * T_ini)
    np.testing.assert_allclose(pred.S_ini @ w + pred.S_u @ np.zeros(blocks.m * N),
                               np.zeros(blocks.p * N), atol=1e-12)


def test_spc_free_response_reference_gives_zero_input():
    model, _, blocks, _, T_ini, N = _setup(seed=6)
    pred = fit_spc(blocks)
    cfg = DeepcConfig(T_ini=T_ini, N=N,
                      weights=CostWeights.make(1.0, 1.0, model.p, model.m),
                      hard_past=True)
    rng = np.random.default_rng(3)
    u_ini, y_ini, _ = _true_window(model, rng, T_ini)
    w = np.concatenate([u_ini.ravel(), y_ini.ravel()])
    r = (pred.S_ini @ w).reshape(N, model.p)
    sol = spc_step(pred, cfg, u_ini, y_ini, r)
    assert sol.status == "optimal"
    assert np.abs(sol.u).max() <= 1e-6
    print("free-response input magnitude", np.abs(sol.u).max())


def test_spc_step_matches_direct_and_model():
    model, _, blocks, weights, T_ini, N = _setup(seed=4)
    pred = fit_spc(blocks)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    cons = BoxConstraints(u_min=-0.25 * np.ones(model.m),
                          u_max=0.25 * np.ones(model.m))
    rng = np.random.default_rng(9)
    for k in range(4):
        u_ini, y_ini, x = _true_window(model, rng, T_ini)
        r = rng.standard_normal((N, model.p))
        for c in (None, cons):
            a = deepc_step(blocks, cfg, u_ini, y_ini, r, constraints=c)
            b = spc_step(pred, cfg, u_ini, y_ini, r, constraints=c)
            mref = mpc_step(model, x, r, weights, N, constraints=c)
            np.testing.assert_allclose(b.u, a.u, atol=1e-8)
            np.testing.assert_allclose(b.u, mref.u, atol=1e-7)
        assert b.decision_dim == model.m * N


def test_spc_horizon_mismatch_raises():
    _, _, blocks, weights, T_ini, N = _setup(seed=0)
    pred = fit_spc(blocks)
    cfg = DeepcConfig(T_ini=T_ini + 1, N=N, weights=weights)
    with pytest.raises(ValueError, match="different horizons"):
        spc_step(pred, cfg, np.zeros((T_ini + 1, 1)), np.zeros((T_ini + 1, 1)),
                 np.zeros((N, 1)))


# ---------------------------------------------------------------------------
# null-space reformulation


def test_null_space_basis_properties():
    for seed in range(4):
        _, _, blocks, _, _, _ = _setup(seed=seed, m=1 + seed % 2)
        param = build_null_space(blocks)
        Phi = param.null_basis
        smax = np.linalg.svd(blocks.H_past, compute_uv=False)[0]
        assert np.linalg.norm(blocks.H_past @ Phi) <= 1e-10 * smax
        np.testing.assert_allclose(Phi.T @ Phi, np.eye(Phi.shape[1]), atol=1e-12)
        assert param.rank_past + Phi.shape[1] == blocks.L
        assert param.rank_past == numeric_rank(blocks.H_past)


def test_null_space_matches_direct_hard():
    model, _, blocks, weights, T_ini, N = _setup(seed=8, m=2, p=1)
    param = build_null_space(blocks)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    cons = BoxConstraints(u_min=-0.3 * np.ones(model.m),
                          u_max=0.3 * np.ones(model.m))
    rng = np.random.default_rng(2)
    for _ in range(4):
        u_ini, y_ini, _ = _true_window(model, rng, T_ini)
        r = rng.standard_normal((N, model.p))
        for c in (None, cons):
            a = deepc_step(blocks, cfg, u_ini, y_ini, r, constraints=c)
            b = null_space_step(param, blocks, cfg, u_ini, y_ini, r, constraints=c)
            np.testing.assert_allclose(b.u, a.u, atol=1e-8)
            np.testing.assert_allclose(b.y, a.y, atol=1e-8)
        assert b.decision_dim == blocks.L - param.rank_past


def test_null_space_matches_direct_soft():
    # soft-regime elimination is exact when the past rows keep full row
    # rank, which pins T_ini to n for single-output plants
    model, _, blocks, weights, T_ini, N = _setup(seed=5, n=3, m=1, p=1, T_ini=3)
    assert numeric_rank(blocks.H_past) == blocks.H_past.shape[0]
    param = build_null_space(blocks)
    rng = np.random.default_rng(4)
    for slack in (False, True):
        cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=False,
                          lambda_g=1e-2, lambda_y=1e3, lambda_u=1e3,
                          use_input_slack=slack)
        for _ in range(3):
            u_ini, y_ini, _ = _true_window(model, rng, T_ini)
            y_ini = y_ini + 0.05 * rng.standard_normal(y_ini.shape)
            r = rng.standard_normal((N, model.p))
            a = deepc_step(blocks, cfg, u_ini, y_ini, r)
            b = null_space_step(param, blocks, cfg, u_ini, y_ini, r)
            np.testing.assert_allclose(b.u, a.u, atol=1e-8)
            np.testing.assert_allclose(b.sigma_y, a.sigma_y, atol=1e-8)


def test_null_space_empty_kernel_degenerates():
    # 5 integrator samples at K=4 leave a 2-column stack whose past rows
    # have rank 2: the kernel is empty and g is pinned to the particular
    # solution, a zero-dimensional QP
    model = make_integrator()
    rng = np.random.default_rng(0)
    data = simulate(model, np.zeros(1), rng.standard_normal((5, 1)))
    blocks = partition(data, 2, 2)
    param = build_null_space(blocks)
    assert param.null_basis.shape == (2, 0)
    cfg = DeepcConfig(T_ini=2, N=2, weights=CostWeights.make(1.0, 0.1, 1, 1),
                      hard_past=True)
    # a window realized by the data columns themselves stays feasible
    g_true = np.array([1.0, 0.0])
    u_ini = (blocks.U_p @ g_true).reshape(2, 1)
    y_ini = (blocks.Y_p @ g_true).reshape(2, 1)
    r = np.zeros((2, 1))
    a = deepc_step(blocks, cfg, u_ini, y_ini, r)
    b = null_space_step(param, blocks, cfg, u_ini, y_ini, r)
    assert b.status == "optimal"
    assert b.decision_dim == 0
    np.testing.assert_allclose(b.u, a.u, atol=1e-8)
    # an arbitrary true plant window is outside this 2-column behavior
    uw, yw, _ = _true_window(model, rng, 2)
    assert null_space_step(param, blocks, cfg, uw, yw, r).status == "infeasible"


def test_null_space_hard_infeasible_detection():
    # needs p*T_ini > n so the past rows are row-rank deficient and an
    # arbitrary window can fall outside their span
    model, _, blocks, weights, T_ini, N = _setup(seed=3, T_ini=5)
    param = build_null_space(blocks)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    rng = np.random.default_rng(1)
    u_ini = rng.standard_normal((T_ini, model.m))
    y_ini = 5.0 + rng.standard_normal((T_ini, model.p))
    sol = null_space_step(param, blocks, cfg, u_ini, y_ini,
                          np.zeros((N, model.p)))
    assert sol.status == "infeasible"


# ---------------------------------------------------------------------------
# reduced-order solver


def test_reduced_order_full_rank_exact():
    model, _, blocks, weights, T_ini, N = _setup(seed=7, m=2, p=2)
    red_auto = svd_reduce(blocks)
    rank = model.m * blocks.K + model.n
    red_explicit = svd_reduce(blocks, r_a=rank)
    assert red_auto.r_a == rank
    assert red_explicit.discarded_energy <= 1e-16 * red_explicit.singular_values[0] ** 2
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True,
                      lambda_g=1e-3)
    cons = BoxConstraints(u_min=-0.4 * np.ones(model.m),
                          u_max=0.4 * np.ones(model.m))
    rng = np.random.default_rng(6)
    for _ in range(3):
        u_ini, y_ini, _ = _true_window(model, rng, T_ini)
        r = rng.standard_normal((N, model.p))
        for c in (None, cons):
            a = deepc_step(blocks, cfg, u_ini, y_ini, r, constraints=c)
            for red in (red_auto, red_explicit):
                b = reduced_order_step(red, cfg, u_ini, y_ini, r, constraints=c)
                np.testing.assert_allclose(b.u, a.u, atol=1e-8)
                np.testing.assert_allclose(b.y, a.y, atol=1e-8)
                assert b.decision_dim == red.r_a


def test_svd_reduce_rejects_bad_order():
    _, _, blocks, _, _, _ = _setup(seed=0)
    with pytest.raises(ValueError, match="outside"):
        svd_reduce(blocks, r_a=0)
    with pytest.raises(ValueError, match="outside"):
        svd_reduce(blocks, r_a=blocks.L + blocks.H.shape[0])


# ---------------------------------------------------------------------------
# kernel (annihilator) representation


def test_kernel_rep_integrator_frozen():
    # depth-2 window (u_k, y_k, u_{k+1}, y_{k+1}) of the integrator obeys
    # -u_k - y_k + y_{k+1} = 0, so the one-row annihilator is that relation
    model = make_integrator()
    rng = np.random.default_rng(5)
    data = simulate(model, np.zeros(1), rng.standard_normal((9, 1)))
    rep = build_kernel_rep(data, m=1, M=2, Z=3, n=1)
    v = rep.R_M.ravel()
    np.testing.assert_allclose(v / v[3], [-1.0, -1.0, 0.0, 1.0], atol=1e-9)
    assert rep.Gamma.shape == (2, 6)
    assert rep.P.shape == (6, 4)
    np.testing.assert_allclose(rep.Gamma @ rep.P, 0.0, atol=1e-12)
    # banded structure: second block row is the relation shifted one sample
    g = rep.Gamma / rep.Gamma[0, 3]
    np.testing.assert_allclose(g[1, 2:], g[0, :4], atol=1e-9)
    np.testing.assert_allclose(g[1, :2], 0.0, atol=1e-12)


def test_kernel_rep_annihilates_and_spans():
    model, data, _, _, _, _ = _setup(seed=9, n=3, m=2, p=2, T=200)
    M = lag(model) + 1
    Z = 8
    rep = build_kernel_rep(data[0], m=model.m, M=M, Z=Z, n=model.n)
    H_M = build_mosaic([data[0].w], M)
    H_Z = build_mosaic([data[0].w], Z)
    assert np.linalg.norm(rep.R_M @ H_M) <= 1e-8
    assert np.linalg.norm(rep.Gamma @ H_Z) <= 1e-7 * np.linalg.norm(H_Z)
    # same column space: principal angles between im(P) and im(H_Z) vanish
    Q, _ = np.linalg.qr(H_Z)
    r = numeric_rank(H_Z)
    angles = np.linalg.svd(rep.P.T @ Q[:, :r], compute_uv=False)
    assert rep.P.shape[1] == model.m * Z + model.n == r
    np.testing.assert_allclose(angles, 1.0, atol=1e-8)


def test_kernel_beta_dimension():
    model = make_random_lti(seed=11, n=2, m=1, p=1)
    data = collect_dataset(model, Excitation(length=60), seed=11)
    rep = build_kernel_rep(data[0], m=1, M=lag(model) + 1, Z=6, n=2)
    assert rep.P.shape[1] == 1 * 6 + 2 == 8


def test_kernel_step_matches_direct():
    model, data, blocks, weights, T_ini, N = _setup(seed=10, n=3, m=1, p=1)
    rep = build_kernel_rep(data[0], m=model.m, M=lag(model) + 1,
                           Z=T_ini + N, n=model.n)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    cons = BoxConstraints(u_min=-0.3 * np.ones(model.m),
                          u_max=0.3 * np.ones(model.m))
    rng = np.random.default_rng(8)
    for _ in range(4):
        u_ini, y_ini, _ = _true_window(model, rng, T_ini)
        r = rng.standard_normal((N, model.p))
        for c in (None, cons):
            a = deepc_step(blocks, cfg, u_ini, y_ini, r, constraints=c)
            b = kernel_step(rep, cfg, u_ini, y_ini, r, constraints=c)
            np.testing.assert_allclose(b.u, a.u, atol=1e-6)
            np.testing.assert_allclose(b.y, a.y, atol=1e-6)
        assert b.decision_dim == model.m * rep.Z + model.n


def test_kernel_data_length_advantage():
    # the annihilator only needs a record long enough for depth M, then
    # tiles it out to any window Z; the direct stack needs depth-Z data
    model = make_integrator()
    T_short = min_data_length(1, 2, 1)
    assert T_short == 5
    need_direct = min_data_length(1, 6, 1)
    assert need_direct == 13
    rng = np.random.default_rng(3)
    short = simulate(model, np.zeros(1), rng.standard_normal((T_short, 1)))
    rep = build_kernel_rep(short, m=1, M=2, Z=6, n=1)
    assert rep.P.shape == (12, 7)
    with pytest.raises(ValueError, match="shorter"):
        partition(short, 2, 4)
    # basis built from 5 samples spans the true depth-6 behavior
    long = simulate(model, np.zeros(1), rng.standard_normal((40, 1)))
    H_Z = build_mosaic([long.w], 6)
    Q, _ = np.linalg.qr(H_Z)
    angles = np.linalg.svd(rep.P.T @ Q[:, :7], compute_uv=False)
    np.testing.assert_allclose(angles, 1.0, atol=1e-8)
    print("kernel rep from", T_short, "samples; direct route needs", need_direct)


def test_kernel_rep_errors():
    model = make_integrator()
    rng = np.random.default_rng(1)
    data = simulate(model, np.zeros(1), rng.standard_normal((20, 1)))
    with pytest.raises(ValueError, match="at least the annihilator window"):
        build_kernel_rep(data, m=1, M=4, Z=3)
    with pytest.raises(ValueError, match="rank"):
        build_kernel_rep(data, m=1, M=2, Z=4, n=2)
    with pytest.raises(ValueError, match="too short"):
        build_kernel_rep(data, m=1, M=1, Z=4, n=1)
    short = simulate(model, np.zeros(1), rng.standard_normal((3, 1)))
    with pytest.raises(ValueError, match="not enough data columns"):
        build_kernel_rep(short, m=1, M=2, Z=4, n=1)
    with pytest.raises(ValueError, match="condition number"):
        build_kernel_rep(data, m=1, M=2, Z=12, n=1, cond_limit=1.5)
    rep = build_kernel_rep(data, m=1, M=2, Z=4, n=1)
    with pytest.raises(ValueError, match="must equal Z"):
        rep.as_blocks(T_ini=2, N=3)


# ---------------------------------------------------------------------------
# range-space reformulation


def test_range_space_gram_properties():
    _, _, blocks, _, _, _ = _setup(seed=12, m=2, p=1)
    rs = build_range_space(blocks)
    H = blocks.H
    np.testing.assert_allclose(rs.G, H @ H.T, atol=1e-10)
    np.testing.assert_allclose(rs.G, rs.G.T, atol=1e-12)
    assert np.linalg.eigvalsh(rs.G)[0] >= -1e-9
    assert numeric_rank(rs.G, tol=1e-12) == numeric_rank(H)
    assert rs.dim == (blocks.m + blocks.p) * blocks.K
    rng = np.random.default_rng(0)
    B = rng.standard_normal((blocks.L, blocks.L))
    Psi = B @ B.T + blocks.L * np.eye(blocks.L)
    rs2 = build_range_space(blocks, Psi=Psi)
    np.testing.assert_allclose(rs2.G, H @ np.linalg.solve(Psi, H.T), atol=1e-8)
    with pytest.raises(ValueError, match="positive definite"):
        build_range_space(blocks, Psi=-np.eye(blocks.L))


def test_range_space_matches_direct():
    model, _, blocks, weights, T_ini, N = _setup(seed=13)
    rs = build_range_space(blocks)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True,
                      lambda_g=1e-2)
    cons = BoxConstraints(u_min=-0.3 * np.ones(model.m),
                          u_max=0.3 * np.ones(model.m))
    rng = np.random.default_rng(5)
    for _ in range(4):
        u_ini, y_ini, _ = _true_window(model, rng, T_ini)
        r = rng.standard_normal((N, model.p))
        for c in (None, cons):
            a = deepc_step(blocks, cfg, u_ini, y_ini, r, constraints=c)
            b = range_space_step(rs, cfg, u_ini, y_ini, r, constraints=c)
            np.testing.assert_allclose(b.u, a.u, atol=1e-6)
            np.testing.assert_allclose(b.y, a.y, atol=1e-6)
        assert b.decision_dim == rs.dim


def test_range_space_condition_squares():
    _, _, blocks, _, _, _ = _setup(seed=14, T=160)
    rs = build_range_space(blocks)
    s_h = np.linalg.svd(blocks.H, compute_uv=False)
    s_g = np.linalg.svd(rs.G, compute_uv=False)
    r = numeric_rank(blocks.H)
    cond_h = s_h[0] / s_h[r - 1]
    cond_g = s_g[0] / s_g[r - 1]
    rel = abs(cond_g - cond_h ** 2) / cond_h ** 2
    print(f"cond(H)={cond_h:.4e} cond(G)={cond_g:.4e} rel dev {rel:.2e}")
    assert rel < 0.01


# ---------------------------------------------------------------------------
# cross-variant agreement and footprints


def test_five_way_agreement():
    # every reformulation lands on the direct optimizer, constrained or not
    saw_active = 0
    for seed in range(6):
        m = 1 + seed % 2
        model, data, blocks, weights, T_ini, N = _setup(seed=20 + seed, m=m)
        cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
        pred = fit_spc(blocks)
        param = build_null_space(blocks)
        red = svd_reduce(blocks)
        rep = build_kernel_rep(data[0], m=model.m, M=lag(model) + 1,
                               Z=T_ini + N, n=model.n)
        rs = build_range_space(blocks)
        cons = BoxConstraints(u_min=-0.25 * np.ones(model.m),
                              u_max=0.25 * np.ones(model.m))
        rng = np.random.default_rng(seed)
        u_ini, y_ini, _ = _true_window(model, rng, T_ini)
        r = 0.8 * np.ones((N, model.p))
        ref = deepc_step(blocks, cfg, u_ini, y_ini, r, constraints=cons)
        assert ref.status == "optimal"
        saw_active += bool(ref.active_set)
        sols = {
            "spc": spc_step(pred, cfg, u_ini, y_ini, r, constraints=cons),
            "npc": null_space_step(param, blocks, cfg, u_ini, y_ini, r,
                                   constraints=cons),
            "ro": reduced_order_step(red, cfg, u_ini, y_ini, r, constraints=cons),
            "kernel": kernel_step(rep, cfg, u_ini, y_ini, r, constraints=cons),
            "rs": range_space_step(rs, cfg, u_ini, y_ini, r, constraints=cons),
        }
        for name, sol in sols.items():
            np.testing.assert_allclose(sol.u, ref.u, atol=1e-6,
                                       err_msg=f"{name} seed {seed}")
            np.testing.assert_allclose(sol.y, ref.y, atol=1e-6,
                                       err_msg=f"{name} seed {seed}")
    assert saw_active >= 2


def test_decision_dimension_ledger():
    model, data, blocks, weights, T_ini, N = _setup(seed=15)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    pred = fit_spc(blocks)
    param = build_null_space(blocks)
    red = svd_reduce(blocks)
    rep = build_kernel_rep(data[0], m=model.m, M=lag(model) + 1,
                           Z=T_ini + N, n=model.n)
    rs = build_range_space(blocks)
    rng = np.random.default_rng(0)
    u_ini, y_ini, _ = _true_window(model, rng, T_ini)
    r = np.zeros((N, model.p))
    assert deepc_step(blocks, cfg, u_ini, y_ini, r).decision_dim == blocks.L
    assert spc_step(pred, cfg, u_ini, y_ini, r).decision_dim == model.m * N
    assert null_space_step(param, blocks, cfg, u_ini, y_ini, r).decision_dim \
        == blocks.L - param.rank_past
    assert reduced_order_step(red, cfg, u_ini, y_ini, r).decision_dim == red.r_a
    assert kernel_step(rep, cfg, u_ini, y_ini, r).decision_dim \
        == model.m * (T_ini + N) + model.n
    assert range_space_step(rs, cfg, u_ini, y_ini, r).decision_dim \
        == (model.m + model.p) * (T_ini + N)


def test_offline_footprints_do_not_grow_with_record_length():
    sizes = {}
    for T in (120, 360):
        model, data, blocks, _, T_ini, N = _setup(seed=16, T=T)
        pred = fit_spc(blocks)
        red = svd_reduce(blocks)
        rep = build_kernel_rep(data[0], m=model.m, M=lag(model) + 1,
                               Z=T_ini + N, n=model.n)
        rs = build_range_space(blocks)
        sizes[T] = {
            "spc": pred.S_ini.size + pred.S_u.size,
            "ro": red.blocks.H.size,
            "kernel": rep.P.size,
            "rs": rs.G.size,
            "deepc": blocks.H.size,
            "npc": build_null_space(blocks).null_basis.size,
        }
    for name in ("spc", "ro", "kernel", "rs"):
        assert sizes[120][name] == sizes[360][name], name
    for name in ("deepc", "npc"):
        assert sizes[360][name] > sizes[120][name], name
    print("stored entries at T=120 vs 360:", sizes[120], sizes[360])

import numpy as np
import pytest

from deepcbench.deepc import (DeepcConfig, decomposed_step, deepc_step,
                              trajectory_mismatch, unconstrained_deepc_gains)
from deepcbench.hankel import partition
from deepcbench.mpc import BoxConstraints, CostWeights, mpc_step
from deepcbench.plants import (Excitation, collect_dataset, lag,
                               make_oscillator, make_random_lti, simulate)


def _setup(seed=0, n=3, m=1, p=1, T=120, T_ini=None, N=8, noise=None):
    model = make_random_lti(seed=seed, n=n, m=m, p=p)
    data = collect_dataset(model, Excitation(length=T), noise=noise, seed=seed)
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


def test_hard_past_matches_model_based_control():
    model, _, blocks, weights, T_ini, N = _setup(seed=3)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    rng = np.random.default_rng(1)
    for _ in range(5):
        u_ini, y_ini, x = _true_window(model, rng, T_ini)
        r = rng.standard_normal((N, model.p))
        sol = deepc_step(blocks, cfg, u_ini, y_ini, r)
        ref = mpc_step(model, x, r, weights, N)
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.u, ref.u, atol=1e-7)
        np.testing.assert_allclose(sol.y, ref.y, atol=1e-7)


def test_hard_past_slacks_are_identically_zero():
    model, _, blocks, weights, T_ini, N = _setup(seed=4)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    rng = np.random.default_rng(2)
    u_ini, y_ini, _ = _true_window(model, rng, T_ini)
    sol = deepc_step(blocks, cfg, u_ini, y_ini, 0.5)
    np.testing.assert_allclose(sol.sigma_u, 0.0, atol=1e-12)
    np.testing.assert_allclose(sol.sigma_y, 0.0, atol=1e-12)


def test_soft_past_slack_identity():
    model, _, blocks, weights, T_ini, N = _setup(seed=5)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights,
                      lambda_g=1e-4, lambda_y=1e3, lambda_u=1e3,
                      hard_past=False, use_input_slack=True)
    rng = np.random.default_rng(3)
    u_ini = rng.standard_normal((T_ini, model.m))
    y_ini = rng.standard_normal((T_ini, model.p))
    sol = deepc_step(blocks, cfg, u_ini, y_ini, 0.0)
    np.testing.assert_allclose(
        sol.sigma_y.ravel(), blocks.Y_p @ sol.g - y_ini.ravel(), atol=1e-10)
    np.testing.assert_allclose(
        sol.sigma_u.ravel(), blocks.U_p @ sol.g - u_ini.ravel(), atol=1e-10)


def test_inconsistent_hard_window_is_infeasible():
    model, _, blocks, weights, T_ini, N = _setup(seed=6, p=2)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    rng = np.random.default_rng(4)
    u_ini = rng.standard_normal((T_ini, model.m))
    y_junk = 5.0 + rng.standard_normal((T_ini, model.p))
    sol = deepc_step(blocks, cfg, u_ini, y_junk, 0.0)
    assert sol.status == "infeasible"


def test_regularization_shrinks_combiner_norm():
    model, _, blocks, weights, T_ini, N = _setup(seed=7)
    rng = np.random.default_rng(5)
    u_ini, y_ini, _ = _true_window(model, rng, T_ini)
    norms = []
    for lg in (1e-8, 1e-2, 1e2):
        cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, lambda_g=lg,
                          lambda_y=1e4, hard_past=False)
        sol = deepc_step(blocks, cfg, u_ini, y_ini, 0.5)
        norms.append(np.linalg.norm(sol.g))
    assert norms[0] >= norms[1] >= norms[2]


def test_gains_match_step_across_regimes():
    model, _, blocks, weights, T_ini, N = _setup(seed=8, m=2, p=2)
    rng = np.random.default_rng(6)
    configs = [
        DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True),
        DeepcConfig(T_ini=T_ini, N=N, weights=weights, lambda_g=1e-3,
                    lambda_y=1e3, hard_past=False),
        DeepcConfig(T_ini=T_ini, N=N, weights=weights, lambda_g=1e-3,
                    lambda_y=1e3, lambda_u=1e3, hard_past=False,
                    use_input_slack=True),
    ]
    for cfg in configs:
        gains = unconstrained_deepc_gains(blocks, cfg)
        for _ in range(3):
            u_ini, y_ini, _ = _true_window(model, rng, T_ini)
            r = rng.standard_normal((N, model.p))
            sol = deepc_step(blocks, cfg, u_ini, y_ini, r)
            np.testing.assert_allclose(gains.predict(u_ini, y_ini, r), sol.u,
                                       atol=1e-7)


def test_box_constraints_honored():
    model, _, blocks, weights, T_ini, N = _setup(seed=9)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    cons = BoxConstraints.make(m=model.m, p=model.p, u_min=-0.2, u_max=0.2)
    rng = np.random.default_rng(7)
    u_ini, y_ini, _ = _true_window(model, rng, T_ini)
    sol = deepc_step(blocks, cfg, u_ini, y_ini, 2.0, constraints=cons)
    assert sol.status == "optimal"
    assert sol.u.max() <= 0.2 + 1e-8 and sol.u.min() >= -0.2 - 1e-8
    assert len(sol.active_set) > 0


def test_mismatch_zero_on_true_trajectory():
    model, _, blocks, weights, T_ini, N = _setup(seed=10)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    rng = np.random.default_rng(8)
    x0 = 0.2 * rng.standard_normal(model.n)
    u = 0.3 * rng.standard_normal((T_ini + N, model.m))
    tr = simulate(model, x0, u)
    score = trajectory_mismatch(blocks, cfg, tr.u[:T_ini], tr.y[:T_ini],
                                tr.u[T_ini:], tr.y[T_ini:])
    assert score.status == "optimal"
    assert abs(score.value) <= 1e-10


def test_mismatch_positive_off_behavior():
    model, _, blocks, weights, T_ini, N = _setup(seed=10)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, lambda_y=1e3,
                      hard_past=False)
    rng = np.random.default_rng(9)
    x0 = 0.2 * rng.standard_normal(model.n)
    u = 0.3 * rng.standard_normal((T_ini + N, model.m))
    tr = simulate(model, x0, u)
    y_off = tr.y[T_ini:] + 0.5
    score = trajectory_mismatch(blocks, cfg, tr.u[:T_ini], tr.y[:T_ini],
                                tr.u[T_ini:], y_off)
    assert score.value > 1e-3


def test_mismatch_infeasible_when_hard_and_unreachable():
    model, _, blocks, weights, T_ini, N = _setup(seed=11)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    rng = np.random.default_rng(10)
    u_ini = rng.standard_normal((T_ini, model.m))
    y_junk = 10.0 + rng.standard_normal((T_ini, model.p))
    score = trajectory_mismatch(blocks, cfg, u_ini, y_junk,
                                np.zeros((N, model.m)), np.zeros((N, model.p)))
    assert score.status == "infeasible"
    assert score.value == np.inf


def test_decomposed_step_equals_direct():
    model, _, blocks, weights, T_ini, N = _setup(seed=12, m=2, p=1)
    cons = BoxConstraints.make(m=model.m, p=model.p, u_min=-0.3, u_max=0.3)
    rng = np.random.default_rng(11)
    for hard in (True, False):
        cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights,
                          lambda_g=0.0 if hard else 1e-3,
                          lambda_y=1e3, hard_past=hard)
        for _ in range(4):
            u_ini, y_ini, _ = _true_window(model, rng, T_ini)
            r = 0.8 * rng.standard_normal((N, model.p))
            a = deepc_step(blocks, cfg, u_ini, y_ini, r, constraints=cons)
            b = decomposed_step(blocks, cfg, u_ini, y_ini, r, constraints=cons)
            np.testing.assert_allclose(b.u, a.u, atol=1e-8)
            np.testing.assert_allclose(b.y, a.y, atol=1e-8)


def test_decision_dimension_reported():
    model, _, blocks, weights, T_ini, N = _setup(seed=13)
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, hard_past=True)
    rng = np.random.default_rng(12)
    u_ini, y_ini, _ = _true_window(model, rng, T_ini)
    sol = deepc_step(blocks, cfg, u_ini, y_ini, 0.0)
    assert sol.decision_dim == blocks.L
    assert sol.solve_time > 0.0


def test_config_validation():
    w = CostWeights.make(1.0, 1.0, 1, 1)
    with pytest.raises(ValueError):
        DeepcConfig(T_ini=0, N=4, weights=w)
    with pytest.raises(ValueError):
        DeepcConfig(T_ini=2, N=4, weights=w, lambda_g=-1.0)
    with pytest.raises(ValueError):
        # soft past needs a positive output penalty
        DeepcConfig(T_ini=2, N=4, weights=w, hard_past=False, lambda_y=0.0)
    with pytest.raises(ValueError):
        # input slack contradicts a hard past window
        DeepcConfig(T_ini=2, N=4, weights=w, hard_past=True,
                    use_input_slack=True, lambda_u=1.0)


def test_noisy_data_soft_regime_still_tracks():
    from deepcbench.plants import NoiseSpec

    model, _, blocks, weights, T_ini, N = _setup(
        seed=14, T=300, noise=NoiseSpec(measurement_std=0.02))
    cfg = DeepcConfig(T_ini=T_ini, N=N, weights=weights, lambda_g=10.0,
                      lambda_y=1e4, lambda_u=1e4, hard_past=False,
                      use_input_slack=True)
    rng = np.random.default_rng(13)
    u_ini, y_ini, x = _true_window(model, rng, T_ini)
    r = 0.5 * np.ones((N, model.p))
    sol = deepc_step(blocks, cfg, u_ini, y_ini, r)
    ref = mpc_step(model, x, r, weights, N)
    assert sol.status == "optimal"
    # noise and regularization allow only a loose match to the exact law
    assert np.max(np.abs(sol.u - ref.u)) < 0.3

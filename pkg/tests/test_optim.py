import numpy as np
import pytest

import sharpline as s
from sharpline.errors import NonFiniteValueError, UnsupportedOptimizerError


def test_gd_step_is_definition():
    cfg = s.OptimizerConfig(kind="gd", lr=0.1)
    params = np.array([1.0, -2.0])
    grad = np.array([0.5, 0.25])
    new_params, state, direction = s.step(cfg, s.init_state(2), params, grad)
    assert np.array_equal(direction.delta, grad)
    assert np.array_equal(new_params, params - 0.1 * grad)
    assert state.t == 1
    assert not direction.includes_decay


def test_two_gd_steps_constant_grad():
    cfg = s.OptimizerConfig(kind="gd", lr=0.05)
    params = np.array([1.0, 1.0])
    grad = np.array([2.0, -1.0])
    state = s.init_state(2)
    p, state, _ = s.step(cfg, state, params, grad)
    p, state, _ = s.step(cfg, state, p, grad)
    assert np.allclose(p, params - 2 * 0.05 * grad, rtol=0, atol=0)


def test_adamw_first_step_hand_computed():
    beta1, beta2, eps = 0.9, 0.99, 1e-8
    cfg = s.OptimizerConfig(kind="adamw", lr=1e-3, beta1=beta1, beta2=beta2,
                            eps=eps, weight_decay=0.0)
    params = np.array([1.0, -1.0, 2.0])
    grad = np.array([0.4, -0.2, 1.5])
    new_params, state, direction = s.step(cfg, s.init_state(3), params, grad)
    m1 = (1 - beta1) * grad
    v1 = (1 - beta2) * grad ** 2
    assert np.allclose(state.m, m1, rtol=1e-15)
    assert np.allclose(state.v, v1, rtol=1e-15)
    p1 = (1 - beta1) * (np.sqrt(v1 / (1 - beta2)) + eps)  # = (1-b1)(|g|+eps)
    assert np.allclose(direction.delta, m1 / p1, rtol=1e-15)
    assert np.allclose(direction.delta, grad / (np.abs(grad) + eps), rtol=1e-12)
    assert np.all(np.sign(direction.delta) == np.sign(grad))
    assert np.array_equal(new_params, params - cfg.lr * direction.delta)


def test_direction_consistency_bitwise_all_kinds():
    rng = np.random.default_rng(3)
    params = rng.standard_normal(16)
    for kind in ("gd", "sgd-momentum", "adam", "adamw"):
        cfg = s.OptimizerConfig(kind=kind, lr=0.01, weight_decay=0.1)
        state = s.init_state(16)
        p = params
        for _ in range(5):
            grad = rng.standard_normal(16)
            p_next, state, direction = s.step(cfg, state, p, grad)
            assert np.array_equal(p_next, p - cfg.lr * direction.delta)
            assert direction.includes_decay
            p = p_next


def test_coupled_vs_decoupled_decay_1d_recursions():
    # GD+WD: theta' = (1 - lr*gamma)theta - lr*lambda*theta on L = 0.5*lam*x^2
    lam, lr, gamma = 4.0, 0.05, 0.5
    cfg = s.OptimizerConfig(kind="gd", lr=lr, weight_decay=gamma)
    theta = np.array([1.0])
    state = s.init_state(1)
    hand = 1.0
    for _ in range(5):
        grad = lam * theta
        theta, state, _ = s.step(cfg, state, theta, grad)
        hand = (1 - lr * gamma - lr * lam) * hand
        assert theta[0] == pytest.approx(hand, rel=1e-15)

    # AdamW: theta' = (1 - lr*gamma)theta - lr * P^-1 m, term by term
    beta1, beta2, eps = 0.9, 0.99, 1e-8
    cfg = s.OptimizerConfig(kind="adamw", lr=lr, beta1=beta1, beta2=beta2,
                            eps=eps, weight_decay=gamma)
    theta = np.array([1.0])
    state = s.init_state(1)
    h_theta, h_m, h_v = 1.0, 0.0, 0.0
    for t in range(1, 6):
        g = lam * theta[0]
        theta, state, _ = s.step(cfg, state, theta, np.array([g]))
        h_m = beta1 * h_m + (1 - beta1) * g
        h_v = beta2 * h_v + (1 - beta2) * g * g
        p = (1 - beta1 ** t) * (np.sqrt(h_v / (1 - beta2 ** t)) + eps)
        h_theta = (1 - lr * gamma) * h_theta - lr * h_m / p
        assert theta[0] == pytest.approx(h_theta, rel=1e-14)


def test_preconditioner_reproduces_step_exactly():
    cfg = s.OptimizerConfig(kind="adamw", lr=1e-3, weight_decay=0.0)
    rng = np.random.default_rng(0)
    params = rng.standard_normal(8)
    state = s.init_state(8)
    for _ in range(3):
        grad = rng.standard_normal(8)
        new_params, state, direction = s.step(cfg, state, params, grad)
        p_diag = s.preconditioner(cfg, state)
        assert np.array_equal(state.m / p_diag, direction.delta)
        params = new_params


def test_preconditioner_positive_and_floor():
    cfg = s.OptimizerConfig(kind="adam", lr=1e-3, beta1=0.9, eps=1e-8)
    state = s.OptimizerState(np.zeros(4), np.zeros(4), t=1)
    p = s.preconditioner(cfg, state)
    # v = 0 after the first step: every entry is the bias-corrected eps floor
    assert np.allclose(p, (1 - 0.9) * 1e-8, rtol=1e-15)
    rng = np.random.default_rng(5)
    state = s.OptimizerState(rng.standard_normal(4), rng.random(4), t=7)
    p = s.preconditioner(cfg, state)
    assert np.all(p >= (1 - 0.9 ** 7) * 1e-8)


def test_preconditioner_after_one_grad():
    beta1, beta2, eps = 0.9, 0.99, 1e-8
    cfg = s.OptimizerConfig(kind="adamw", lr=1e-3, beta1=beta1, beta2=beta2, eps=eps)
    g = np.array([0.3, -2.0])
    _, state, _ = s.step(cfg, s.init_state(2), np.zeros(2), g)
    p = s.preconditioner(cfg, state)
    # v1/(1-beta2) = g^2, so P = (1-beta1)(|g| + eps) at t=1
    assert np.allclose(p, (1 - beta1) * (np.abs(g) + eps), rtol=1e-14)


def test_preconditioner_requires_adaptive():
    cfg = s.OptimizerConfig(kind="gd", lr=0.1)
    with pytest.raises(UnsupportedOptimizerError):
        s.preconditioner(cfg, s.OptimizerState(np.zeros(2), np.zeros(2), t=3))


def test_adam_with_zero_betas_is_normalized_gd():
    cfg = s.OptimizerConfig(kind="adam", lr=0.1, beta1=0.0, beta2=0.0, eps=1e-8)
    rng = np.random.default_rng(9)
    state = s.init_state(6)
    params = rng.standard_normal(6)
    for _ in range(4):
        grad = rng.standard_normal(6)
        params, state, direction = s.step(cfg, state, params, grad)
        assert np.allclose(direction.delta, grad / (np.abs(grad) + 1e-8),
                           rtol=1e-12)


def test_step_rejects_bad_inputs():
    cfg = s.OptimizerConfig(kind="gd", lr=0.1)
    with pytest.raises(NonFiniteValueError):
        s.step(cfg, s.init_state(2), np.zeros(2), np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        s.step(cfg, s.init_state(2), np.zeros(2), np.zeros(3))


def test_warmup_moments_frozen_params():
    beta1, beta2 = 0.9, 0.99
    cfg = s.OptimizerConfig(kind="adamw", lr=1e-3, beta1=beta1, beta2=beta2)
    spec = s.ModelSpec((3, 4, 2), init_seed=2)
    params = s.init_params(spec)
    task = s.TaskSpec(dim=3, seed=2)
    stream = lambda k: s.generate(task, k * 64, 64)
    state0 = s.init_state(params.size)

    assert s.warmup_moments(cfg, state0, params, spec, stream, 0).t == 0

    state = s.warmup_moments(cfg, state0, params, spec, stream, 100)
    assert state.t == 100

    # Exact oracle: the moments are the exponential averages of the per-batch
    # gradients at the *frozen* parameter vector (no step is ever applied).
    m_ref = np.zeros(params.size)
    v_ref = np.zeros(params.size)
    sq = np.zeros(params.size)
    for k in range(100):
        g = s.gradient(params, spec, stream(k))
        m_ref = beta1 * m_ref + (1 - beta1) * g
        v_ref = beta2 * v_ref + (1 - beta2) * g * g
        sq += g * g
    assert np.allclose(state.m, m_ref, rtol=1e-12)
    assert np.allclose(state.v, v_ref, rtol=1e-12)

    # Bias-corrected v tracks the running mean of g^2 over the stream
    mean_sq = sq / 100
    v_hat = state.v / (1 - beta2 ** 100)
    mask = mean_sq > 1e-8
    assert np.all(np.abs(v_hat[mask] - mean_sq[mask]) <= 0.10 * mean_sq[mask])


def test_warmup_constant_gradient_fixed_point():
    cfg = s.OptimizerConfig(kind="adam", lr=1e-3, beta1=0.9, beta2=0.9)
    spec = s.ModelSpec((2, 1), activation="identity", head="mse")
    params = np.array([0.0, 0.0, 0.0])
    batch = s.Batch(np.array([[1.0, 2.0]]), np.array([[1.0]]))
    g = s.gradient(params, spec, batch)
    state = s.warmup_moments(cfg, s.init_state(3), params, spec,
                             lambda k: batch, 400)
    assert np.allclose(state.m, g, rtol=1e-12)
    assert np.allclose(state.v, g * g, rtol=1e-12)

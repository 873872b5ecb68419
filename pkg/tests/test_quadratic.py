import numpy as np
import pytest

import sharpline as s
from sharpline.errors import NoBoundaryError


# ----------------------------------------------------------------- thresholds


def test_gd_threshold_values():
    assert s.gd_wd_threshold(0.01, 1.0) == pytest.approx(199.0, rel=1e-15)
    assert s.gd_wd_threshold(0.01, 0.0) == pytest.approx(200.0, rel=1e-15)
    assert s.gd_wd_threshold(2.0, 1.0) == 0.0


def test_gd_threshold_rejects_bad_args():
    with pytest.raises(ValueError):
        s.gd_wd_threshold(0.0, 0.0)
    with pytest.raises(ValueError):
        s.gd_wd_threshold(0.1, -1.0)


def test_adamw_threshold_values():
    assert s.adamw_threshold(1e-3, 0.0, 0.9) == pytest.approx(38000.0, rel=1e-12)
    assert s.adamw_threshold(2.0, 1.0, 0.9) == 0.0
    with pytest.raises(ValueError):
        s.adamw_threshold(1e-3, 0.0, 1.0)


def test_adamw_threshold_reduces_to_gd_at_zero_momentum():
    for eta in (1e-3, 0.01, 0.5):
        for gamma in (0.0, 0.1, 3.0):
            assert s.adamw_threshold(eta, gamma, 0.0) == s.gd_wd_threshold(eta, gamma)


# ------------------------------------------------------------------ predicate


def test_stability_predicate_truth_table():
    assert s.stability_predicate(-1.5, 0.6)          # 0.1>0, 3.1>0, 0.4>0
    assert not s.stability_predicate(0.0, 1.1)       # 1-p2 < 0
    assert not s.stability_predicate(-2.0, 1.0)      # boundary: strict
    assert not s.stability_predicate(2.0, 1.0)       # 1-p1+p2 boundary
    assert s.stability_predicate(0.0, 0.0)


# ----------------------------------------------------------------- simulators


def test_simulate_gd_verdicts():
    assert not s.simulate_gd_wd(10.0, 0.19, 0.0).diverged
    assert s.simulate_gd_wd(10.0, 0.21, 0.0).diverged
    # |1 - 0.21 * 15| = 2.15 > 1
    assert s.simulate_gd_wd(10.0, 0.21, 5.0).diverged


def test_simulate_gd_matches_factor_criterion():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lam = float(rng.uniform(0.1, 50.0))
        eta = float(rng.uniform(1e-3, 0.5))
        gamma = float(rng.uniform(0.0, 5.0))
        factor = 1.0 - eta * (lam + gamma)
        if abs(abs(factor) - 1.0) < 0.01:
            continue  # too close to the boundary for a finite budget
        verdict = s.simulate_gd_wd(lam, eta, gamma, q0=float(rng.uniform(0.5, 2)))
        assert verdict.diverged == (abs(factor) > 1.0)


def test_simulate_gd_growth_ratio_tracks_factor():
    v = s.simulate_gd_wd(10.0, 0.25, 0.0)  # factor = -1.5
    assert v.diverged
    assert v.growth_ratio == pytest.approx(1.5, rel=1e-6)
    v = s.simulate_gd_wd(10.0, 0.05, 0.0)  # factor = 0.5
    assert not v.diverged
    assert v.growth_ratio == pytest.approx(0.5, rel=1e-6)


def test_simulate_adamw_near_threshold():
    eta, gamma, beta1 = 1e-3, 0.1, 0.9
    lam_star = s.adamw_threshold(eta, gamma, beta1)
    assert not s.simulate_adamw_frozen(0.99 * lam_star, eta, gamma, beta1).diverged
    assert s.simulate_adamw_frozen(1.01 * lam_star, eta, gamma, beta1).diverged


def test_simulate_adamw_zero_momentum_reduces_to_gd():
    for lam, eta, gamma in [(10.0, 0.19, 0.0), (10.0, 0.21, 0.0),
                            (10.0, 0.21, 5.0), (3.0, 0.1, 0.5)]:
        gd = s.simulate_gd_wd(lam, eta, gamma)
        aw = s.simulate_adamw_frozen(lam, eta, gamma, 0.0)
        assert gd.diverged == aw.diverged


def test_predicate_and_simulation_agree_off_boundary():
    # 1000 seeded tuples at least 1% (relative) away from the threshold
    rng = np.random.default_rng(42)
    checked = 0
    while checked < 1000:
        eta = float(10 ** rng.uniform(-4, -1.5))
        beta1 = float(rng.uniform(0.0, 0.95))
        gamma = float(rng.uniform(0.0, 0.5) * (2.0 / eta) * 0.5)
        lam_star = s.adamw_threshold(eta, gamma, beta1)
        factor = float(rng.choice([rng.uniform(0.3, 0.99), rng.uniform(1.01, 3.0)]))
        lam = factor * lam_star
        p1 = -(1.0 - eta * gamma + beta1 - eta * (1.0 - beta1) * lam)
        p2 = beta1 * (1.0 - eta * gamma)
        stable = s.stability_predicate(p1, p2)
        verdict = s.simulate_adamw_frozen(lam, eta, gamma, beta1, steps=30_000)
        assert stable == (not verdict.diverged), (eta, gamma, beta1, factor)
        checked += 1


# ----------------------------------------------------------- boundary finding


def test_empirical_boundary_gd_in_eta():
    boundary = s.empirical_boundary(
        lambda eta: s.simulate_gd_wd(10.0, eta, 0.0, steps=300_000),
        0.1, 0.3, tol=1e-4)
    assert boundary == pytest.approx(0.2, rel=3e-4)


def test_empirical_boundary_gd_with_decay():
    boundary = s.empirical_boundary(
        lambda eta: s.simulate_gd_wd(10.0, eta, 1.0, steps=300_000),
        0.05, 0.4, tol=1e-4)
    assert boundary == pytest.approx(2.0 / 11.0, rel=3e-4)


def test_empirical_boundary_adamw_in_lambda():
    eta, gamma, beta1 = 1e-3, 0.1, 0.9
    lam_star = s.adamw_threshold(eta, gamma, beta1)
    boundary = s.empirical_boundary(
        lambda lam: s.simulate_adamw_frozen(lam, eta, gamma, beta1, steps=50_000),
        0.5 * lam_star, 1.5 * lam_star, tol=1e-4)
    assert boundary == pytest.approx(lam_star, rel=1e-2)


def test_empirical_boundary_requires_disagreement():
    with pytest.raises(NoBoundaryError):
        s.empirical_boundary(
            lambda eta: s.simulate_gd_wd(10.0, eta, 0.0), 0.01, 0.05)


# -------------------------------------------------------------- cross-module


def test_critical_lr_reproduces_gd_boundary_on_quadratic():
    # ties the probe estimate to the closed-form 2/lambda_dir
    rng = np.random.default_rng(7)
    qp = s.QuadraticProblem(rng.uniform(1.0, 20.0, 8), np.zeros(8))
    theta = rng.standard_normal(8)
    g = qp.grad(theta)
    lam_dir = s.directional_sharpness(g, g, qp.hvp(g))
    est = s.critical_lr(qp.probe_along(theta, g),
                        s.ProbeSettings(eta0=0.05, epsilon=1.0 / 16.0))
    assert est.eta_c == pytest.approx(2.0 / lam_dir, rel=1.0 / 16.0)
    # and gradient descent on the quadratic diverges just past eta_c
    assert s.simulate_gd_wd(lam_dir, 1.05 * est.eta_c, 0.0).diverged


def test_quadratic_problem_validation():
    with pytest.raises(ValueError):
        s.QuadraticProblem(np.array([1.0, 2.0]), np.zeros(3))

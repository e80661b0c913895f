"""Augmented system assembly, Riccati solves and closed-loop behavior."""

import numpy as np
import pytest

from conftest import random_spd_kernel, scalar_dare_root

from cdtrain.control import (
    DareConvergenceError,
    build_augmented_system,
    closed_loop,
    dare_iteration,
    dare_residual,
    deflated_spectral_radius,
    simulate_local,
    solve_dare,
)
from cdtrain.kernel import Kernel


def random_system(rng, n=None, loss="sse", alpha_scale=None):
    n = int(rng.integers(2, 9)) if n is None else n
    theta, eigs = random_spd_kernel(rng, n)
    scale = float(rng.uniform(0.3, 3.0)) if alpha_scale is None else alpha_scale
    h = 1.0 / n if loss == "mse" else 1.0
    alpha = scale / (eigs.max() * h)
    y = rng.standard_normal(n)
    system = build_augmented_system(
        Kernel(theta), alpha=alpha, y=y, q_weight=1.0, r_weight=0.1, loss=loss
    )
    return system, theta, alpha, h


def test_augmented_matrices_have_documented_block_structure():
    rng = np.random.default_rng(0)
    theta, _ = random_spd_kernel(rng, 4)
    y = rng.standard_normal(4)
    system = build_augmented_system(Kernel(theta), alpha=0.3, y=y, q_weight=2.0, r_weight=0.5)
    m = 0.3 * theta
    np.testing.assert_allclose(system.A[:4, :4], np.eye(4) - m)
    np.testing.assert_allclose(system.A[:4, 4], m @ y)
    np.testing.assert_array_equal(system.A[4], [0, 0, 0, 0, 1])
    np.testing.assert_allclose(system.B[:4], m)
    np.testing.assert_array_equal(system.B[4], np.zeros(4))
    np.testing.assert_allclose(system.Q_tilde[:4, :4], 2.0 * np.eye(4))
    np.testing.assert_array_equal(system.R, 0.5 * np.eye(4))


def test_target_direction_is_invariant_and_cost_free():
    rng = np.random.default_rng(1)
    for trial in range(6):
        system, _, _, _ = random_system(rng)
        t = system.target_direction
        np.testing.assert_allclose(system.A @ t, t, atol=1e-12)
        np.testing.assert_allclose(system.Q_tilde @ t, np.zeros(t.shape), atol=1e-12)


def test_builder_rejections():
    kern = Kernel(np.eye(2))
    y = np.zeros(2)
    with pytest.raises(ValueError, match="quadratic loss"):
        build_augmented_system(kern, 0.1, y, loss="mae")
    with pytest.raises(ValueError, match="quadratic loss"):
        build_augmented_system(kern, 0.1, y, loss="cross_entropy")
    with pytest.raises(ValueError):
        build_augmented_system(kern, 0.0, y)
    with pytest.raises(ValueError):
        build_augmented_system(kern, 0.1, np.zeros(3))
    with pytest.raises(ValueError):
        build_augmented_system(kern, 0.1, y, q_weight=-1.0)
    with pytest.raises(ValueError):
        build_augmented_system(kern, 0.1, y, r_weight=0.0)
    with pytest.raises(ValueError, match="symmetric"):
        build_augmented_system(kern, 0.1, y, q_weight=np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="semidefinite"):
        build_augmented_system(kern, 0.1, y, q_weight=np.diag([1.0, -1.0]))


def test_matrix_q_weight_is_used():
    qmat = np.diag([1.0, 3.0])
    system = build_augmented_system(Kernel(np.eye(2)), 0.1, np.ones(2), q_weight=qmat)
    np.testing.assert_array_equal(system.Q_tilde[:2, :2], qmat)


def test_scalar_dare_matches_quadratic_root():
    p, k, iters, res = dare_iteration(
        np.array([[0.5]]), np.array([[0.5]]), np.array([[1.0]]), np.array([[0.1]]), tol=1e-14
    )
    p_star = scalar_dare_root(0.5, 0.5, 1.0, 0.1)
    assert abs(p[0, 0] - p_star) / p_star < 1e-12
    k_star = 0.5 * 0.5 * p_star / (0.1 + 0.25 * p_star)
    assert k[0, 0] == pytest.approx(k_star, rel=1e-12)
    assert res < 1e-13
    assert iters < 50


def test_zero_cost_gives_zero_solution():
    p, k, iters, res = dare_iteration(
        np.array([[0.5]]), np.array([[1.0]]), np.array([[0.0]]), np.array([[1.0]])
    )
    assert p[0, 0] == 0.0
    assert k[0, 0] == 0.0
    assert iters == 1


def test_iteration_budget_exhaustion_raises():
    a = np.array([[0.99]])
    b = np.array([[0.1]])
    with pytest.raises(DareConvergenceError) as err:
        dare_iteration(a, b, np.array([[1.0]]), np.array([[1.0]]), tol=1e-14, max_iters=3)
    assert err.value.last_change is not None and err.value.last_change > 1e-14


@pytest.mark.parametrize("loss", ["sse", "mse"])
def test_solution_matches_eigenbasis_closed_form(loss):
    """With Q = qI and R = pI the augmented Riccati solution reduces, in the
    kernel eigenbasis, to decoupled scalar quadratics; P and K must match
    that closed form through the [I, -y] change of coordinates."""
    rng = np.random.default_rng(21)
    for trial in range(6):
        n = int(rng.integers(2, 9))
        qmat, _ = np.linalg.qr(rng.standard_normal((n, n)))
        eigs = np.exp(rng.uniform(np.log(1e-2), np.log(1.0), n))
        theta = (qmat * eigs) @ qmat.T
        h = 1.0 / n if loss == "mse" else 1.0
        alpha = float(rng.uniform(0.3, 3.0)) / (eigs.max() * h)
        y = rng.standard_normal(n)
        system = build_augmented_system(
            Kernel(theta), alpha=alpha, y=y, q_weight=1.0, r_weight=0.1, loss=loss
        )
        law = solve_dare(system, tol=1e-13, max_iters=10**6)

        mu = alpha * h * eigs
        p_modes = np.array([scalar_dare_root(1.0 - m, m, 1.0, 0.1) for m in mu])
        k_modes = (1.0 - mu) * mu * p_modes / (0.1 + mu * mu * p_modes)
        p0 = (qmat * p_modes) @ qmat.T
        k0 = (qmat * k_modes) @ qmat.T
        msel = np.hstack([np.eye(n), -y[:, None]])
        p_ref = msel.T @ p0 @ msel
        k_ref = np.hstack([k0, (-k0 @ y)[:, None]])
        np.testing.assert_allclose(law.P, p_ref, rtol=1e-7, atol=1e-8)
        np.testing.assert_allclose(law.K, k_ref, rtol=1e-7, atol=1e-8)


def test_structural_invariants_of_solution():
    rng = np.random.default_rng(22)
    for trial in range(8):
        system, _, _, _ = random_system(rng, loss="sse" if trial % 2 else "mse")
        law = solve_dare(system, tol=1e-12, max_iters=10**6)
        t = system.target_direction
        assert np.linalg.norm(law.P @ t) < 1e-6 * (1.0 + np.linalg.norm(law.P))
        assert np.linalg.norm(law.K @ t) < 1e-6 * (1.0 + np.linalg.norm(law.K))
        w = np.linalg.eigvalsh((law.P + law.P.T) / 2.0)
        assert w[0] >= -1e-10 * max(w[-1], 1.0)
        assert law.closed_loop_radius_deflated < 1.0
        assert law.dare_residual < 1e-8

        info = closed_loop(system, law)
        assert info.structural_eigenvalue == pytest.approx(1.0, abs=1e-9)
        assert info.deflated_radius == pytest.approx(law.closed_loop_radius_deflated, abs=1e-12)


def test_deflated_radius_removes_only_named_direction():
    rng = np.random.default_rng(3)
    qmat, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    m = (qmat * np.array([3.0, 0.5, 0.2, 0.1])) @ qmat.T
    assert deflated_spectral_radius(m, qmat[:, 0]) == pytest.approx(0.5, abs=1e-12)
    assert deflated_spectral_radius(m, qmat[:, 1]) == pytest.approx(3.0, abs=1e-12)


def test_deflated_radius_on_nonsymmetric_matrix():
    """Deflation along a right eigenvector block-triangularizes, so the
    remaining spectrum is exact even without symmetry."""
    m = np.array([[2.0, 1.0], [0.0, 0.4]])
    assert deflated_spectral_radius(m, np.array([1.0, 0.0])) == pytest.approx(0.4, abs=1e-12)


def test_cost_report_matches_simulated_stage_costs():
    rng = np.random.default_rng(4)
    system, _, _, _ = random_system(rng, n=5, alpha_scale=1.2)
    law = solve_dare(system, tol=1e-13, max_iters=10**6)
    y0 = rng.standard_normal(5)
    report = law.cost_report(y0)

    state = np.append(y0, 1.0)
    total = 0.0
    for _ in range(4000):
        u = -law.K @ state
        total += float(state @ system.Q_tilde @ state + u @ system.R @ u)
        state = system.A @ state + system.B @ u
    assert report["quadratic_form"] == pytest.approx(total, rel=1e-3)
    assert report["half_quadratic_form"] == pytest.approx(total / 2.0, rel=1e-3)


def test_simulate_local_open_loop_is_plain_descent():
    rng = np.random.default_rng(5)
    system, theta, alpha, h = random_system(rng, n=4, alpha_scale=0.8)
    y0 = rng.standard_normal(4)
    trace = simulate_local(system, None, y0, steps=30)
    assert trace.shape == (31, 4)
    np.testing.assert_array_equal(trace[0], y0)

    m = alpha * h * theta
    y_hat = y0.copy()
    for k in range(1, 31):
        y_hat = y_hat - m @ (y_hat - system.y)
        np.testing.assert_allclose(trace[k], y_hat, rtol=1e-10, atol=1e-12)


def test_simulate_local_closed_loop_converges_faster():
    rng = np.random.default_rng(6)
    system, _, _, _ = random_system(rng, n=5, alpha_scale=0.5)
    law = solve_dare(system, tol=1e-12, max_iters=10**6)
    y0 = system.y + np.ones(5)
    open_dev = np.linalg.norm(simulate_local(system, None, y0, 100)[-1] - system.y)
    closed_dev = np.linalg.norm(simulate_local(system, law, y0, 100)[-1] - system.y)
    assert closed_dev < open_dev


def test_simulate_local_argument_errors():
    rng = np.random.default_rng(7)
    system, _, _, _ = random_system(rng, n=3)
    with pytest.raises(ValueError):
        simulate_local(system, None, np.zeros(3), steps=-1)
    with pytest.raises(ValueError):
        simulate_local(system, None, np.zeros(4), steps=1)


def test_residual_is_zero_at_exact_solution():
    p_star = scalar_dare_root(0.5, 0.5, 1.0, 0.1)
    res = dare_residual(
        np.array([[0.5]]),
        np.array([[0.5]]),
        np.array([[1.0]]),
        np.array([[0.1]]),
        np.array([[p_star]]),
    )
    assert res < 1e-15

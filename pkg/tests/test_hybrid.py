import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hybrid import (
    compose,
    param_gradient,
    phase_indices,
    quantize_phases,
    random_init,
    rescale_to_budget,
    wrap_params,
)
from models import BeamformerParams, HybridArchitecture, InvalidArgumentError, PowerConstraint


def _random_params(rng, arch, with_xi=True):
    return BeamformerParams(
        theta=rng.uniform(-np.pi, np.pi, size=arch.theta_shape),
        alpha=rng.uniform(0.2, 1.0, size=arch.num_rf),
        xi=rng.uniform(-np.pi, np.pi, size=arch.num_rf) if with_xi else None,
    )


def test_architecture_invariants():
    with pytest.raises(InvalidArgumentError):
        HybridArchitecture("sub_array", 64, 3)
    with pytest.raises(InvalidArgumentError):
        HybridArchitecture("fully_connected", 8, 2, levels=1)
    with pytest.raises(InvalidArgumentError):
        HybridArchitecture("fully_connected", 4, 5)
    assert HybridArchitecture("sub_array", 64, 4).group_size == 16


def test_compose_examples():
    sub = HybridArchitecture("sub_array", 4, 2)
    a = compose(sub, BeamformerParams(theta=np.zeros((2, 2)), alpha=np.array([1.0, 2.0])))
    assert_allclose(a, [1, 1, 2, 2])

    full = HybridArchitecture("fully_connected", 2, 2)
    a = compose(full, BeamformerParams(theta=np.zeros((2, 2)), alpha=np.array([1.0, 1.0])))
    assert_allclose(a, [2, 2])


def test_compose_fully_connected_matrix_oracle():
    rng = np.random.default_rng(0)
    arch = HybridArchitecture("fully_connected", 4, 2, levels=4)
    params = _random_params(rng, arch)
    W = np.exp(1j * params.theta)
    expected = W @ (params.alpha * np.exp(1j * params.xi))
    assert_allclose(compose(arch, params), expected, atol=1e-12)


def test_compose_sub_array_block_diagonal_oracle():
    rng = np.random.default_rng(1)
    arch = HybridArchitecture("sub_array", 6, 3)
    params = _random_params(rng, arch, with_xi=False)
    W = np.zeros((6, 3), dtype=complex)
    for i in range(3):
        W[2 * i:2 * i + 2, i] = np.exp(1j * params.theta[:, i])
    assert_allclose(compose(arch, params), W @ params.alpha, atol=1e-12)


def test_compose_shape_mismatch():
    arch = HybridArchitecture("sub_array", 4, 2)
    with pytest.raises(InvalidArgumentError):
        compose(arch, BeamformerParams(theta=np.zeros((4, 2)), alpha=np.ones(2)))


def test_sub_array_groups_have_constant_magnitude():
    rng = np.random.default_rng(2)
    arch = HybridArchitecture("sub_array", 12, 3)
    params = _random_params(rng, arch)
    mags = np.abs(compose(arch, params)).reshape(3, 4)
    assert_allclose(mags, np.repeat(params.alpha[:, None], 4, axis=1), atol=1e-12)


def test_compose_positively_homogeneous():
    rng = np.random.default_rng(3)
    arch = HybridArchitecture("fully_connected", 8, 2)
    params = _random_params(rng, arch, with_xi=False)
    scaled = params.copy()
    scaled.alpha = 2.5 * scaled.alpha
    assert_allclose(compose(arch, scaled), 2.5 * compose(arch, params), atol=1e-12)


def _fd_check(arch, params, rng, h=1e-6):
    """ f(a) = Re(c^H a) + |a|^2 weighted; returns (analytic, numeric) for every parameter."""
    c = rng.normal(size=arch.num_antennas) + 1j * rng.normal(size=arch.num_antennas)
    w = rng.uniform(0.5, 1.5, size=arch.num_antennas)

    def f(p):
        a = compose(arch, p)
        return float(np.real(np.vdot(c, a)) + np.sum(w * np.abs(a) ** 2))

    a = compose(arch, params)
    grad_a = c + 2 * w * a  # ∂f/∂Re + j ∂f/∂Im
    grads = param_gradient(arch, params, grad_a)

    pairs = []
    for name in ("theta", "alpha", "xi"):
        value = getattr(params, name)
        if value is None:
            continue
        analytic = getattr(grads, name)
        for idx in np.ndindex(value.shape):
            plus, minus = params.copy(), params.copy()
            getattr(plus, name)[idx] += h
            getattr(minus, name)[idx] -= h
            pairs.append((analytic[idx], (f(plus) - f(minus)) / (2 * h)))
    return np.array(pairs)


@pytest.mark.parametrize("variant", ["sub_array", "fully_connected"])
@pytest.mark.parametrize("K", [0, 4])
def test_param_gradient_finite_differences(variant, K):
    rng = np.random.default_rng(4)
    arch = HybridArchitecture(variant, 8, 2, levels=K)
    for _ in range(50):
        pairs = _fd_check(arch, _random_params(rng, arch, with_xi=K >= 2), rng)
        err = np.abs(pairs[:, 0] - pairs[:, 1]) / np.maximum(np.abs(pairs[:, 1]), 1e-3)
        assert err.max() < 1e-5


def test_param_gradient_zero_alpha_kills_phase_gradient():
    rng = np.random.default_rng(5)
    arch = HybridArchitecture("sub_array", 8, 2)
    params = _random_params(rng, arch, with_xi=False)
    params.alpha[1] = 0.0
    grads = param_gradient(arch, params, rng.normal(size=8) + 1j * rng.normal(size=8))
    assert_allclose(grads.theta[:, 1], 0.0)


def test_param_gradient_digital_pass_through():
    arch = HybridArchitecture("digital", 3)
    g = np.array([1 + 2j, -1j, 0.5])
    out = param_gradient(arch, BeamformerParams(digital=np.ones(3, dtype=complex)), g)
    assert_array_equal(out.digital, g)


def test_random_init_deterministic_and_feasible():
    arch = HybridArchitecture("sub_array", 16, 4)
    p1, p2 = random_init(arch, 7), random_init(arch, 7)
    assert_array_equal(p1.theta, p2.theta)
    assert_array_equal(p1.alpha, p2.alpha)

    thetas = {random_init(arch, s).theta.tobytes() for s in range(10)}
    assert len(thetas) == 10

    full = HybridArchitecture("fully_connected", 16, 4)
    for s in range(10):
        assert np.max(np.abs(compose(full, random_init(full, s)))) <= 1 + 1e-12


def test_quantize_phases_examples():
    K = 4
    p = BeamformerParams(theta=np.array([[0.6], [-2.0]]), alpha=np.ones(1), xi=np.array([0.3]))
    q = quantize_phases(p, K)
    assert_allclose(q.theta[:, 0], [0.0, -np.pi / 2])
    assert_array_equal(q.xi, p.xi)
    # idempotent
    assert_array_equal(quantize_phases(q, K).theta, q.theta)
    with pytest.raises(InvalidArgumentError):
        quantize_phases(p, 1)


def test_quantize_moves_at_most_half_step():
    rng = np.random.default_rng(6)
    theta = rng.uniform(-np.pi, np.pi, size=(50, 3))
    for K in (2, 4, 8):
        q = quantize_phases(BeamformerParams(theta=theta, alpha=np.ones(3)), K).theta
        dist = np.abs(np.angle(np.exp(1j * (q - theta))))
        assert dist.max() <= np.pi / K + 1e-12
        assert_allclose(q, -np.pi + phase_indices(theta, K) * 2 * np.pi / K)


def test_phase_indices_ties_go_to_smaller_index():
    # K=2 levels are -π (k=0) and 0 (k=1); -π/2 sits exactly between them
    assert phase_indices(np.array([-np.pi / 2]), 2)[0] == 0


def test_wrap_params_keeps_compose():
    rng = np.random.default_rng(7)
    arch = HybridArchitecture("fully_connected", 4, 2, levels=4)
    params = _random_params(rng, arch)
    params.theta += 6 * np.pi
    wrapped = wrap_params(params)
    assert np.all(wrapped.theta >= -np.pi) and np.all(wrapped.theta < np.pi)
    assert_allclose(compose(arch, wrapped), compose(arch, params), atol=1e-10)


def test_rescale_to_budget():
    arch = HybridArchitecture("fully_connected", 4, 2)
    params = [BeamformerParams(theta=np.zeros((4, 2)), alpha=np.array([1.0, 1.0]))]

    per_elem = rescale_to_budget(arch, params, PowerConstraint("per_element", 1.0))
    assert np.max(np.abs(compose(arch, per_elem[0])) ** 2) == pytest.approx(1.0)

    two = params + [BeamformerParams(theta=np.zeros((4, 2)), alpha=np.array([0.1, 0.0]))]
    summed = rescale_to_budget(arch, two, PowerConstraint("sum_power", 1.0))
    total = sum(np.vdot(a, a).real for a in (compose(arch, p) for p in summed))
    assert total == pytest.approx(1.0, abs=1e-12)

    # feasible per-element vectors are left alone
    small = [BeamformerParams(theta=np.zeros((4, 2)), alpha=np.array([0.1, 0.1]))]
    assert_array_equal(rescale_to_budget(arch, small, PowerConstraint())[0].alpha, [0.1, 0.1])

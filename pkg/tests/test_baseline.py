import itertools
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from baseline import alternating_fit, baseline_synthesis, digital_target, hybrid_approximate
from geometry import make_ula
from hybrid import compose, phase_indices
from metrics import max_ripple
from models import HybridArchitecture, PowerConstraint, SolverConfig, SynthesisProblem
from pattern import build_target, pattern_operator, stage_targets, uniform_psi_grid


def _random_vector(rng, M):
    return rng.normal(size=M) + 1j * rng.normal(size=M)


def test_digital_architecture_is_exact():
    rng = np.random.default_rng(0)
    a_d = _random_vector(rng, 6)
    params = hybrid_approximate(a_d, HybridArchitecture("digital", 6))
    assert_array_equal(params.digital, a_d)


def test_constant_magnitude_vector_is_recovered():
    rng = np.random.default_rng(1)
    a_d = 0.7 * np.exp(1j * rng.uniform(-np.pi, np.pi, size=4))
    arch = HybridArchitecture("sub_array", 4, 1)
    params = hybrid_approximate(a_d, arch)
    assert_allclose(compose(arch, params), a_d, atol=1e-10)


def _sub_array_exhaustive(a_d, arch, K):
    """ Sum of per-group optima; groups decouple, so this covers all K^M choices."""
    levels = -np.pi + np.arange(K) * 2 * np.pi / K
    total = 0.0
    for i in range(arch.num_rf):
        d = a_d[i * arch.group_size:(i + 1) * arch.group_size]
        best = np.inf
        for combo in itertools.product(levels, repeat=arch.group_size):
            e = np.exp(1j * np.array(combo))
            c = np.vdot(e, d) / arch.group_size
            best = min(best, float(np.sum(np.abs(c * e - d) ** 2)))
        total += best
    return total


def test_quantized_sub_array_near_exhaustive_optimum():
    rng = np.random.default_rng(2)
    K = 4
    arch = HybridArchitecture("sub_array", 8, 2, levels=K)
    for _ in range(10):
        a_d = _random_vector(rng, 8)
        params = hybrid_approximate(a_d, arch)
        residual = float(np.sum(np.abs(compose(arch, params) - a_d) ** 2))
        assert residual <= 1.05 * _sub_array_exhaustive(a_d, arch, K) + 1e-12
        assert_allclose(params.theta, -np.pi + phase_indices(params.theta, K) * np.pi / 2, atol=1e-12)


@pytest.mark.parametrize("variant, K", [("fully_connected", 0), ("fully_connected", 4), ("sub_array", 4)])
def test_alternating_fit_is_monotone(variant, K):
    rng = np.random.default_rng(3)
    arch = HybridArchitecture(variant, 8, 2, levels=K)
    D = np.atleast_2d(_random_vector(rng, 8))
    theta0 = rng.uniform(-np.pi, np.pi, size=arch.theta_shape)
    _, _, history = alternating_fit(arch, D, theta0, K)
    assert np.all(np.diff(history) <= 1e-9 * history[0])


def test_multi_beam_approximation_shares_theta():
    rng = np.random.default_rng(4)
    arch = HybridArchitecture("fully_connected", 8, 2, levels=4)
    params = hybrid_approximate(np.stack([_random_vector(rng, 8), _random_vector(rng, 8)]), arch)
    assert len(params) == 2
    assert_array_equal(params[0].theta, params[1].theta)


def test_continuous_multi_beam_keeps_chain_phases():
    rng = np.random.default_rng(6)
    arch = HybridArchitecture("fully_connected", 8, 2)
    single = hybrid_approximate(_random_vector(rng, 8), arch)
    assert single.xi is None

    # one shared θ cannot absorb two different chain phases
    D = np.stack([_random_vector(rng, 8), _random_vector(rng, 8)])
    params = hybrid_approximate(D, arch)
    assert all(p.xi is not None and p.xi.shape == (2,) for p in params)
    assert_array_equal(params[0].theta, params[1].theta)
    with_xi = sum(np.linalg.norm(compose(arch, p) - d) ** 2 for p, d in zip(params, D))
    dropped = [p.copy() for p in params]
    for p in dropped:
        p.xi = np.zeros(2)
    without_xi = sum(np.linalg.norm(compose(arch, p) - d) ** 2 for p, d in zip(dropped, D))
    assert with_xi <= without_xi + 1e-12


def test_zero_vector_gives_zero_params(caplog):
    arch = HybridArchitecture("fully_connected", 4, 2, levels=4)
    with caplog.at_level(logging.WARNING):
        params = hybrid_approximate(np.zeros(4), arch)
    assert_allclose(compose(arch, params), 0.0)
    assert "identically zero" in caplog.text


def test_constraint_rescales_output():
    rng = np.random.default_rng(5)
    arch = HybridArchitecture("fully_connected", 8, 2)
    params = hybrid_approximate(5 * _random_vector(rng, 8), arch, constraint=PowerConstraint())
    assert np.max(np.abs(compose(arch, params)) ** 2) <= 1 + 1e-12


def _small_problem(targets=None, variant="fully_connected", K=4, kind="per_element", M=8, G=64):
    grid = uniform_psi_grid(G)
    if targets is None:
        targets = [build_target(0.0, np.pi / 2, 2.0, None, M, grid, power_budget=kind)]
    arch = HybridArchitecture(variant, M, 2, levels=K)
    return SynthesisProblem(make_ula(M, 0.5), grid, targets, arch, PowerConstraint(kind))


def test_digital_target_flat_beam():
    M, G = 8, 64
    grid = uniform_psi_grid(G)
    flat = build_target(0.0, 2 * np.pi, 0.0, None, M, grid, power_budget="sum_power")
    problem = _small_problem([flat], kind="sum_power")
    cfg = SolverConfig(n_starts=4, max_iters=1000, log_every=1000)
    a_d = digital_target(problem, cfg)
    assert a_d.shape == (M,)
    A = pattern_operator(problem.geometry, grid).forward(a_d)
    assert max_ripple(A, flat) < 1.5
    assert_array_equal(a_d, digital_target(problem, cfg))


def test_digital_target_multi_beam_shape():
    M, G = 8, 64
    grid = uniform_psi_grid(G)
    problem = _small_problem(stage_targets(1, M, grid, 2.0), kind="sum_power")
    a_d = digital_target(problem, SolverConfig(n_starts=2, max_iters=200, log_every=1000))
    assert a_d.shape == (2, M)


def test_baseline_synthesis_result():
    problem = _small_problem()
    result = baseline_synthesis(problem, SolverConfig(n_starts=2, max_iters=200, log_every=1000))
    assert result.feasibility["satisfied"]
    assert_allclose(result.a, compose(problem.architecture, result.params[0]))
    theta = result.params[0].theta
    assert_allclose(theta, -np.pi + phase_indices(theta, 4) * np.pi / 2, atol=1e-12)
    assert result.start_objectives == [result.objective]

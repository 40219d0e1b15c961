from __future__ import annotations

import numpy as np

from models import ArrayGeometry, InvalidArgumentError, PowerConstraint, SpatialGrid, TargetPattern
from pattern import PatternOperator, pattern_operator


def _check_p(p: int) -> None:
    if int(p) != p or p < 2 or p % 2:
        raise InvalidArgumentError(f"p must be an even integer >= 2 (got {p})")


def _check_lengths(A: np.ndarray, target: TargetPattern) -> None:
    if A.shape[-1] != target.desired.size:
        raise InvalidArgumentError(
            f"pattern has {A.shape[-1]} samples, target has {target.desired.size}"
        )


def lp_sum(A, target: TargetPattern, p: int, cell: float) -> np.ndarray:
    """ S = Σ_g W_g^p (|A_g| - D_g)^p Δψ; vectorised over leading axes of A."""
    A = np.asarray(A)
    _check_p(p)
    _check_lengths(A, target)
    resid = np.abs(A) - target.desired
    return np.sum(target.weight ** p * resid ** p, axis=-1) * cell


def objective_value(A, target: TargetPattern, p: int, cell: float) -> float:
    """ Discretised weighted L^p distance (Σ_g W^p ||A| - D|^p Δψ)^(1/p)."""
    return float(lp_sum(A, target, p, cell) ** (1.0 / p))


def lp_sum_and_gradient(
    a: np.ndarray,
    op: PatternOperator,
    target: TargetPattern,
    p: int,
) -> tuple[float, np.ndarray, np.ndarray]:
    """
    S and ∂S packed as 2·∂S/∂a* = P^H r with
        r_g = p · W_g^p Δψ (|A_g| - D_g)^(p-1) · A_g / |A_g|
    (zero where |A_g| = 0). Also returns A for callers that need it.
    """
    A = op.forward(a)
    mag = np.abs(A)
    resid = mag - target.desired
    wp = target.weight ** p * op.grid.cell
    S = float(np.sum(wp * resid ** p))
    unit = np.divide(A, mag, out=np.zeros_like(A), where=mag > 0)
    r = p * wp * resid ** (p - 1) * unit
    return S, op.adjoint(r), A


def objective_gradient_a(
    a,
    geometry: ArrayGeometry,
    grid: SpatialGrid,
    target: TargetPattern,
    p: int,
    op: PatternOperator | None = None,
) -> np.ndarray:
    """
    Gradient of objective_value with respect to the real and imaginary parts
    of a, packed as ∂f/∂Re(a) + j·∂f/∂Im(a). Uses the FFT forward/adjoint
    pair on uniform ψ grids of ULAs, direct summation otherwise.
    """
    _check_p(p)
    a = np.asarray(a, dtype=complex)
    op = op or pattern_operator(geometry, grid)
    if a.shape != (op.num_elements,):
        raise InvalidArgumentError(f"beamforming vector must have length {op.num_elements}")
    _check_lengths(np.zeros(grid.size), target)
    S, dS, _ = lp_sum_and_gradient(a, op, target, p)
    if S <= 0:
        return np.zeros_like(a)
    # f = S^(1/p)  =>  ∇f = (1/p) S^(1/p - 1) ∇S
    return (S ** (1.0 / p - 1.0) / p) * dS


def power_penalty(a, c: PowerConstraint, mu: float) -> tuple[float, np.ndarray]:
    """
    Quadratic exterior penalty and its packed gradient:
      per_element  μ Σ_m max(0, |a_m|^2 - budget)^2
      sum_power    μ max(0, ||a||^2 - budget)^2
    """
    if mu < 0:
        raise InvalidArgumentError("penalty weight must be >= 0")
    a = np.asarray(a, dtype=complex)
    if c.kind == "per_element":
        excess = np.maximum(0.0, np.abs(a) ** 2 - c.budget)
        return float(mu * np.sum(excess ** 2)), 4 * mu * excess * a
    excess = max(0.0, float(np.vdot(a, a).real) - c.budget)
    return float(mu * excess ** 2), 4 * mu * excess * a


def joint_power_penalty(beams: list[np.ndarray], c: PowerConstraint, mu: float) -> tuple[float, list[np.ndarray]]:
    """
    Penalty over several simultaneously transmitted beams: per_element binds
    each beam on its own, sum_power binds Σ_b ||a_b||^2.
    """
    if c.kind == "per_element":
        vals, grads = zip(*(power_penalty(a, c, mu) for a in beams))
        return float(sum(vals)), list(grads)
    total = float(sum(np.vdot(a, a).real for a in beams))
    excess = max(0.0, total - c.budget)
    return float(mu * excess ** 2), [4 * mu * excess * np.asarray(a, dtype=complex) for a in beams]

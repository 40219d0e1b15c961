from __future__ import annotations

from typing import Sequence

import numpy as np

from geometry import wrap_phase
from models import BeamformerParams, HybridArchitecture, InvalidArgumentError, PowerConstraint


# ---------- internal helpers ----------

def _check_params(arch: HybridArchitecture, params: BeamformerParams) -> None:
    if arch.variant == "digital":
        if params.digital is None or np.shape(params.digital) != (arch.num_antennas,):
            raise InvalidArgumentError(f"digital variant needs a length-{arch.num_antennas} vector")
        return
    shape = arch.theta_shape
    if params.theta is None or np.shape(params.theta) != shape:
        raise InvalidArgumentError(f"theta must have shape {shape} for {arch.variant}")
    if params.alpha is None or np.shape(params.alpha) != (arch.num_rf,):
        raise InvalidArgumentError(f"alpha must have length M_RFE={arch.num_rf}")
    if params.xi is not None and np.shape(params.xi) != (arch.num_rf,):
        raise InvalidArgumentError(f"xi must have length M_RFE={arch.num_rf}")


def _chain_coefficients(params: BeamformerParams) -> tuple[np.ndarray, np.ndarray]:
    """ (α ∘ e^{jξ}, e^{jξ}); ξ ≡ 0 when absent."""
    phase = np.ones(params.alpha.shape, dtype=complex) if params.xi is None else np.exp(1j * params.xi)
    return params.alpha * phase, phase


def _as_group_matrix(arch: HybridArchitecture, v: np.ndarray) -> np.ndarray:
    # sub-array antenna m = c + i·M_C sits at row c, column i
    if arch.variant == "sub_array":
        return v.reshape(arch.theta_shape, order="F")
    return np.broadcast_to(v[:, None], arch.theta_shape)


# ---------- parameter <-> vector map ----------

def compose(arch: HybridArchitecture, params: BeamformerParams) -> np.ndarray:
    """
    Beamforming vector a for the architecture:
      sub_array        a_m = α_i e^{j(θ_{c,i} + ξ_i)}, m in group i
      fully_connected  a_m = Σ_j α_j e^{j(θ_{m,j} + ξ_j)}
      digital          a = params.digital
    """
    _check_params(arch, params)
    if arch.variant == "digital":
        return np.asarray(params.digital, dtype=complex).copy()

    coeff, _ = _chain_coefficients(params)
    E = np.exp(1j * params.theta)
    if arch.variant == "sub_array":
        return (E * coeff[None, :]).ravel(order="F")
    return E @ coeff


def param_gradient(arch: HybridArchitecture, params: BeamformerParams, grad_a) -> BeamformerParams:
    """
    Chain rule through compose. `grad_a` packs ∂f/∂Re(a) + j·∂f/∂Im(a); for a
    real parameter t the derivative is Re(conj(grad_a) · ∂a/∂t).
    Returns the gradients in a BeamformerParams with matching shapes.
    """
    _check_params(arch, params)
    g = np.asarray(grad_a, dtype=complex)
    if g.shape != (arch.num_antennas,):
        raise InvalidArgumentError(f"gradient must have length M={arch.num_antennas}")
    if arch.variant == "digital":
        return BeamformerParams(digital=g.copy())

    coeff, phase = _chain_coefficients(params)
    E = np.exp(1j * params.theta)
    Gc = np.conj(_as_group_matrix(arch, g))

    d_theta = np.real(Gc * 1j * E * coeff[None, :])
    d_alpha = np.real(np.sum(Gc * E, axis=0) * phase)
    d_xi = None if params.xi is None else d_theta.sum(axis=0)
    return BeamformerParams(theta=d_theta, alpha=d_alpha, xi=d_xi)


# ---------- initialisation / quantization / feasibility ----------

def random_init(
    arch: HybridArchitecture,
    seed: int | Sequence[int],
    constraint: PowerConstraint | None = None,
) -> BeamformerParams:
    """
    Random start, deterministic per seed: θ and ξ uniform on [-π, π), α
    uniform on [0.5, 1], then rescaled to be feasible under `constraint`
    (per-element, budget 1 by default).
    """
    rng = np.random.default_rng(seed)
    constraint = constraint or PowerConstraint()

    if arch.variant == "digital":
        v = rng.normal(size=arch.num_antennas) + 1j * rng.normal(size=arch.num_antennas)
        params = BeamformerParams(digital=v)
    else:
        params = BeamformerParams(
            theta=rng.uniform(-np.pi, np.pi, size=arch.theta_shape),
            alpha=rng.uniform(0.5, 1.0, size=arch.num_rf),
            xi=rng.uniform(-np.pi, np.pi, size=arch.num_rf) if arch.quantized else None,
        )
    return rescale_to_budget(arch, [params], constraint)[0]


def phase_indices(theta, K: int) -> np.ndarray:
    """
    Index k of the nearest level -π + k·2π/K (circular distance, ties
    toward the smaller k).
    """
    if K < 2:
        raise InvalidArgumentError(f"phase quantization needs K >= 2 (got {K})")
    step = 2 * np.pi / K
    t = np.mod((np.asarray(theta, dtype=float) + np.pi) / step, K)
    k = np.ceil(t - 0.5).astype(int)
    # tie across the seam (between K-1 and 0) goes to 0
    k = np.where(np.isclose(t, K - 0.5, rtol=0, atol=1e-12), 0, k)
    return np.mod(k, K)


def quantize_phases(params: BeamformerParams, K: int) -> BeamformerParams:
    """ Snap every θ entry onto the grid {-π + k·2π/K}; ξ is left untouched."""
    if K < 2:
        raise InvalidArgumentError(f"phase quantization needs K >= 2 (got {K})")
    out = params.copy()
    if out.theta is not None:
        k = phase_indices(out.theta, K)
        out.theta = -np.pi + k * (2 * np.pi / K)
    return out


def wrap_params(params: BeamformerParams) -> BeamformerParams:
    """ θ and ξ wrapped into [-π, π); compose is unchanged."""
    out = params.copy()
    if out.theta is not None:
        out.theta = wrap_phase(out.theta)
    if out.xi is not None:
        out.xi = wrap_phase(out.xi)
    return out


def _scaled(params: BeamformerParams, s: float) -> BeamformerParams:
    out = params.copy()
    if out.digital is not None:
        out.digital = out.digital * s
    else:
        out.alpha = out.alpha * s
    return out


def rescale_to_budget(
    arch: HybridArchitecture,
    params_list: list[BeamformerParams],
    constraint: PowerConstraint,
) -> list[BeamformerParams]:
    """
    Exact feasibility through positive homogeneity in α:
      per_element  each beam scaled down until max_m |a_m|^2 <= budget
      sum_power    all beams scaled jointly so Σ_b ||a_b||^2 == budget
    """
    beams = [compose(arch, p) for p in params_list]
    if constraint.kind == "per_element":
        out = []
        for p, a in zip(params_list, beams):
            peak = float(np.max(np.abs(a) ** 2))
            out.append(_scaled(p, np.sqrt(constraint.budget / peak)) if peak > constraint.budget else p.copy())
        return out

    total = float(sum(np.vdot(a, a).real for a in beams))
    if total <= 0:
        return [p.copy() for p in params_list]
    s = np.sqrt(constraint.budget / total)
    return [_scaled(p, s) for p in params_list]

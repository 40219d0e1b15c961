from __future__ import annotations

import dataclasses
import logging

import numpy as np

from hybrid import compose, phase_indices, rescale_to_budget, wrap_params
from models import (
    BeamformerParams,
    HybridArchitecture,
    InvalidArgumentError,
    PowerConstraint,
    SolverConfig,
    SynthesisProblem,
    SynthesisResult,
)
from solver import SynthesisEngine, feasibility_report, solve

logger = logging.getLogger(__name__)

# Reference path: synthesize with a fully digital array first, then fit the
# hybrid hardware to that vector by alternating least squares.


def digital_target(problem: SynthesisProblem, config: SolverConfig) -> np.ndarray:
    """
    Beam vector(s) of the same synthesis problem solved without hardware
    structure: shape (M,) for one target, (B, M) for several.
    """
    arch = HybridArchitecture("digital", problem.architecture.num_antennas)
    digital = dataclasses.replace(problem, architecture=arch)
    result = solve(digital, config)
    if problem.num_beams == 1:
        return result.beams[0]
    return np.stack(result.beams)


# ---------- alternating fit internals ----------

def _groups(arch: HybridArchitecture, D: np.ndarray) -> np.ndarray:
    # (B, M) -> (B, M_C, M_RFE); antenna m = c + i·M_C lands on [c, i]
    B = D.shape[0]
    return D.reshape(B, arch.num_rf, arch.group_size).transpose(0, 2, 1)


def _ungroup(arch: HybridArchitecture, X: np.ndarray) -> np.ndarray:
    return X.transpose(0, 2, 1).reshape(X.shape[0], arch.num_antennas)


def _snap(angle: np.ndarray, K: int) -> np.ndarray:
    if K < 2:
        return angle
    return -np.pi + phase_indices(angle, K) * (2 * np.pi / K)


def _fit_coefficients(arch: HybridArchitecture, E: np.ndarray, D: np.ndarray) -> np.ndarray:
    """ Least-squares chain coefficients c = α·e^{jξ}, shape (B, M_RFE), for fixed θ."""
    if arch.variant == "sub_array":
        return np.sum(np.conj(E)[None] * _groups(arch, D), axis=1) / arch.group_size
    return np.linalg.lstsq(E, D.T, rcond=None)[0].T


def _compose_all(arch: HybridArchitecture, E: np.ndarray, C: np.ndarray) -> np.ndarray:
    if arch.variant == "sub_array":
        return _ungroup(arch, E[None] * C[:, None, :])
    return C @ E.T


def _residual(arch, E, C, D) -> float:
    return float(np.sum(np.abs(_compose_all(arch, E, C) - D) ** 2))


def _phase_step(arch: HybridArchitecture, theta: np.ndarray, C: np.ndarray, D: np.ndarray, K: int) -> np.ndarray:
    """
    Exact minimization over each θ entry with the coefficients held: the best
    phase aligns the entry with Σ_b r_b·conj(c_b), snapped to the nearest
    level when quantized.
    """
    theta = theta.copy()
    if arch.variant == "sub_array":
        z = np.sum(_groups(arch, D) * np.conj(C)[:, None, :], axis=0)
        update = np.abs(z) > 0
        theta[update] = _snap(np.angle(z), K)[update]
        return theta

    E = np.exp(1j * theta)
    for j in range(arch.num_rf):
        others = C @ E.T - np.outer(C[:, j], E[:, j])
        z = np.sum((D - others) * np.conj(C[:, j])[:, None], axis=0)
        update = np.abs(z) > 0
        theta[update, j] = _snap(np.angle(z), K)[update]
        E[:, j] = np.exp(1j * theta[:, j])
    return theta


def alternating_fit(
    arch: HybridArchitecture,
    D: np.ndarray,
    theta0: np.ndarray,
    K: int,
    max_sweeps: int = 200,
    tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """
    Alternate the closed-form phase step with the least-squares coefficient
    step from `theta0`. Returns (θ, C, residual after every sweep); the
    residual history is non-increasing.
    """
    theta = _snap(np.asarray(theta0, dtype=float), K)
    E = np.exp(1j * theta)
    C = _fit_coefficients(arch, E, D)
    res = _residual(arch, E, C, D)
    history = [res]
    for _ in range(max_sweeps):
        theta = _phase_step(arch, theta, C, D, K)
        E = np.exp(1j * theta)
        C = _fit_coefficients(arch, E, D)
        new = _residual(arch, E, C, D)
        history.append(new)
        if res - new <= tol * max(res, 1e-300):
            break
        res = new
    return theta, C, history


# ---------- initialisations ----------

def _breakpoint_phases(arch: HybridArchitecture, d: np.ndarray, K: int) -> np.ndarray:
    """
    Best quantized phases of a single-beam sub-array, group by group: the
    snapped decisions only change when the group coefficient phase crosses
    a breakpoint, so scanning one phase per breakpoint interval is exhaustive.
    """
    Dg = _groups(arch, d[None])[0]
    step = 2 * np.pi / K
    theta = np.zeros(arch.theta_shape)
    for i in range(arch.num_rf):
        col = Dg[:, i]
        ang = np.angle(col)
        bps = np.mod(ang[:, None] + np.pi - (np.arange(K) + 0.5) * step, 2 * np.pi).ravel()
        bps = np.unique(bps)
        mids = (bps + np.diff(np.append(bps, bps[0] + 2 * np.pi)) / 2)
        best, best_res = None, np.inf
        for phi in mids:
            cand = _snap(ang - phi, K)
            e = np.exp(1j * cand)
            c = np.vdot(e, col) / arch.group_size
            res = float(np.sum(np.abs(c * e - col) ** 2))
            if res < best_res:
                best, best_res = cand, res
        theta[:, i] = best
    return theta


def _initial_phases(arch: HybridArchitecture, D: np.ndarray, K: int) -> list[np.ndarray]:
    ref = D[0]
    if arch.variant == "sub_array":
        if K >= 2 and D.shape[0] == 1:
            return [_breakpoint_phases(arch, ref, K)]
        base = _groups(arch, np.angle(ref)[None])[0]
    else:
        base = np.repeat(np.angle(ref)[:, None], arch.num_rf, axis=1)

    inits = [base]
    if arch.variant == "fully_connected" and arch.num_rf >= 2:
        # two equal chains reach any magnitude up to 2c: d = c(e^{j(∠d+δ)} + e^{j(∠d-δ)})
        mag = np.abs(ref)
        delta = np.arccos(np.clip(mag / max(mag.max(), 1e-300), 0.0, 1.0))
        pair = base.copy()
        pair[:, 0] += delta
        pair[:, 1] -= delta
        inits.append(pair)

    if K >= 2:
        rotations = np.arange(1, 2 * K) * (np.pi / K)
        inits += [init + rho for init in list(inits) for rho in rotations]
    return inits


def _zero_params(arch: HybridArchitecture, B: int) -> list[BeamformerParams]:
    return [
        BeamformerParams(
            theta=np.zeros(arch.theta_shape),
            alpha=np.zeros(arch.num_rf),
            xi=np.zeros(arch.num_rf) if arch.quantized else None,
        )
        for _ in range(B)
    ]


# ---------- public API ----------

def hybrid_approximate(
    a_d,
    arch: HybridArchitecture,
    K: int | None = None,
    constraint: PowerConstraint | None = None,
    max_sweeps: int = 200,
    tol: float = 1e-8,
):
    """
    Hybrid parameters whose composed vector best approximates a_d in the
    least-squares sense. a_d of shape (M,) gives one BeamformerParams; shape
    (B, M) gives a list sharing one θ. With `constraint` the result is
    rescaled onto the power budget.
    """
    D = np.asarray(a_d, dtype=complex)
    single = D.ndim == 1
    D = np.atleast_2d(D)
    if D.ndim != 2 or D.shape[1] != arch.num_antennas:
        raise InvalidArgumentError(f"a_d must have length M={arch.num_antennas}")
    K = arch.levels if K is None else K
    if K != 0 and K < 2:
        raise InvalidArgumentError("K must be 0 (continuous) or >= 2")
    if K != arch.levels:
        arch = dataclasses.replace(arch, levels=K)

    if arch.variant == "digital":
        out = [BeamformerParams(digital=d.copy()) for d in D]
    elif not np.any(np.abs(D) > 0):
        logger.warning("a_d is identically zero; returning zero parameters")
        out = _zero_params(arch, D.shape[0])
    else:
        best = None
        for theta0 in _initial_phases(arch, D, K):
            theta, C, history = alternating_fit(arch, D, theta0, K, max_sweeps, tol)
            if best is None or history[-1] < best[2]:
                best = (theta, C, history[-1])
        theta, C, res = best
        logger.info(f"baseline residual={res:.6g} (||a_d||^2={float(np.sum(np.abs(D) ** 2)):.6g})")
        out = _to_params(arch, theta, C)

    if constraint is not None:
        out = rescale_to_budget(arch, out, constraint)
    out = [wrap_params(p) for p in out]
    return out[0] if single else out


def _to_params(arch: HybridArchitecture, theta: np.ndarray, C: np.ndarray) -> list[BeamformerParams]:
    if not arch.quantized and C.shape[0] == 1:
        # continuous single beam: the chain phase moves into θ
        return [BeamformerParams(theta=theta + np.angle(C[0])[None, :], alpha=np.abs(C[0]))]
    return [BeamformerParams(theta=theta.copy(), alpha=np.abs(c), xi=np.angle(c)) for c in C]


def baseline_synthesis(problem: SynthesisProblem, config: SolverConfig) -> SynthesisResult:
    """ digital_target followed by hybrid_approximate, packed like a solver result."""
    a_d = np.atleast_2d(digital_target(problem, config))
    params = hybrid_approximate(a_d, problem.architecture, constraint=problem.constraint)
    engine = SynthesisEngine(problem, config)
    beams = [compose(problem.architecture, p) for p in params]
    return SynthesisResult(
        params=params,
        beams=beams,
        objective=engine.objective(params),
        traces=[],
        feasibility=feasibility_report(problem, beams),
        start_params=[params],
        start_objectives=[engine.objective(params)],
        best_start=0,
    )

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from hybrid import compose, param_gradient, quantize_phases, random_init, rescale_to_budget, wrap_params
from logger import TraceLogger
from models import (
    BeamformerParams,
    HybridArchitecture,
    InvalidArgumentError,
    SolverConfig,
    SolverError,
    SynthesisProblem,
    SynthesisResult,
)
from objective import joint_power_penalty, lp_sum, lp_sum_and_gradient
from pattern import pattern_operator

logger = logging.getLogger(__name__)


class _Layout:
    """
    Packs the free parameters of B simultaneously synthesized beams into one
    real vector: [θ (shared), α_1..α_B, ξ_1..ξ_B]. With `theta` given, θ is
    held fixed and only the digital part (α, ξ) is free. The digital variant
    packs [Re a_b, Im a_b] per beam.
    """

    def __init__(self, arch: HybridArchitecture, num_beams: int, theta: np.ndarray | None = None):
        self.arch = arch
        self.num_beams = num_beams
        self.fixed_theta = theta
        self.with_xi = arch.quantized
        if arch.variant == "digital":
            self.n_theta = 0
            self._alpha = slice(0, 0)
            return
        self.n_theta = 0 if theta is not None else int(np.prod(arch.theta_shape))
        self._alpha = slice(self.n_theta, self.n_theta + num_beams * arch.num_rf)

    def pack(self, params_list: list[BeamformerParams]) -> np.ndarray:
        if self.arch.variant == "digital":
            return np.concatenate([np.concatenate([p.digital.real, p.digital.imag]) for p in params_list])
        parts = [] if self.fixed_theta is not None else [params_list[0].theta.ravel()]
        parts += [p.alpha for p in params_list]
        if self.with_xi:
            parts += [p.xi for p in params_list]
        return np.concatenate(parts).astype(float)

    def unpack(self, x: np.ndarray) -> list[BeamformerParams]:
        M, R, B = self.arch.num_antennas, self.arch.num_rf, self.num_beams
        if self.arch.variant == "digital":
            v = x.reshape(B, 2, M)
            return [BeamformerParams(digital=v[b, 0] + 1j * v[b, 1]) for b in range(B)]
        if self.fixed_theta is not None:
            theta = self.fixed_theta
        else:
            theta = x[: self.n_theta].reshape(self.arch.theta_shape)
        alphas = x[self._alpha].reshape(B, R)
        xis = x[self._alpha.stop:].reshape(B, R) if self.with_xi else [None] * B
        return [
            BeamformerParams(theta=theta.copy(), alpha=alphas[b].copy(), xi=None if xis[b] is None else xis[b].copy())
            for b in range(B)
        ]

    def gradient(self, params_list: list[BeamformerParams], grads_a: list[np.ndarray]) -> np.ndarray:
        if self.arch.variant == "digital":
            return np.concatenate([np.concatenate([g.real, g.imag]) for g in grads_a])
        pg = [param_gradient(self.arch, p, g) for p, g in zip(params_list, grads_a)]
        parts = [] if self.fixed_theta is not None else [sum(q.theta for q in pg).ravel()]
        parts += [q.alpha for q in pg]
        if self.with_xi:
            parts += [q.xi for q in pg]
        return np.concatenate(parts)

    def project(self, x: np.ndarray) -> np.ndarray:
        # α >= 0; signs and phases live in θ and ξ
        x = x.copy()
        x[self._alpha] = np.maximum(x[self._alpha], 0.0)
        return x


class SynthesisEngine:
    """
    Multi-start projected gradient descent on the penalized objective

        F(x) = (Σ_b S_b)^(1/p) + μ·penalty(a_1..a_B)

    where S_b is the discretised weighted L^p sum of beam b. Each start runs
    a geometric μ schedule; the step is a Barzilai-Borwein guess cut back
    until the Armijo condition holds, so accepted steps never increase F.
    """

    def __init__(self, problem: SynthesisProblem, config: SolverConfig, trace: TraceLogger | None = None):
        self.problem = problem
        self.config = config
        self.arch = problem.architecture
        self.op = pattern_operator(problem.geometry, problem.grid)
        self.trace = trace

    # ---------- objective helpers ----------

    def compose_all(self, params_list: list[BeamformerParams]) -> list[np.ndarray]:
        return [compose(self.arch, p) for p in params_list]

    def objective(self, params_list: list[BeamformerParams]) -> float:
        """ Unpenalized (Σ_b S_b)^(1/p) of the composed beams."""
        p, cell = self.problem.p, self.problem.grid.cell
        S = sum(
            float(lp_sum(self.op.forward(a), t, p, cell))
            for a, t in zip(self.compose_all(params_list), self.problem.targets)
        )
        return S ** (1.0 / p)

    def _evaluate(self, layout: _Layout, x: np.ndarray, mu: float) -> tuple[float, np.ndarray]:
        p = self.problem.p
        params_list = layout.unpack(x)
        beams = self.compose_all(params_list)
        S_total, dS = 0.0, []
        for a, t in zip(beams, self.problem.targets):
            S, grad, _ = lp_sum_and_gradient(a, self.op, t, p)
            S_total += S
            dS.append(grad)
        f = S_total ** (1.0 / p)
        scale = (S_total ** (1.0 / p - 1.0) / p) if S_total > 0 else 0.0
        pen, pen_grads = joint_power_penalty(beams, self.problem.constraint, mu)
        grads_a = [scale * g + pg for g, pg in zip(dS, pen_grads)]
        return f + pen, layout.gradient(params_list, grads_a)

    # ---------- descent ----------

    def _descend(self, layout, x, mu, budget, start, round_, trace_values):
        cfg = self.config
        F, g = self._evaluate(layout, x, mu)
        if not (np.isfinite(F) and np.all(np.isfinite(g))):
            raise SolverError(f"start {start}: non-finite objective (f={F}) at round {round_}")

        step = cfg.initial_step
        x_prev = g_prev = None
        for it in range(budget):
            if x_prev is not None:
                s, y = x - x_prev, g - g_prev
                sy = float(s @ y)
                step = float(np.clip((s @ s) / sy, 1e-12, 1e6)) if sy > 0 else min(step * 2, 1e6)

            accepted = False
            for _ in range(cfg.max_backtracks):
                x_new = layout.project(x - step * g)
                F_new, g_new = self._evaluate(layout, x_new, mu)
                if np.isfinite(F_new) and F_new <= F + cfg.armijo * float(g @ (x_new - x)):
                    accepted = True
                    break
                step *= cfg.step_shrink
            if not accepted:
                break
            if not np.all(np.isfinite(g_new)):
                raise SolverError(f"start {start}: non-finite gradient at iteration {it}")

            converged = abs(F - F_new) <= cfg.tol * max(abs(F), 1e-300)
            x_prev, g_prev = x, g
            x, F, g = x_new, F_new, g_new
            trace_values.append(F)

            if it % cfg.log_every == 0:
                logger.info(f"start={start} iter={it} f={F:.6g} mu={mu:.3g}")
                if self.trace:
                    self.trace.log("iter", start=start, round=round_, iter=it, objective=F, mu=mu, step=step)
            if converged:
                break

        logger.info(f"start={start} iter={it} f={F:.6g} mu={mu:.3g}")
        if self.trace:
            self.trace.log("round_end", start=start, round=round_, iter=it, objective=F, mu=mu, step=step)
        return x

    def _optimize(self, layout: _Layout, params_list, start: int, trace_values: list[float]):
        cfg = self.config
        per_round = max(1, math.ceil(cfg.max_iters / cfg.penalty_rounds))
        x = layout.pack(params_list)
        for r in range(cfg.penalty_rounds):
            mu = cfg.mu0 * cfg.mu_growth ** r
            x = self._descend(layout, x, mu, per_round, start, r, trace_values)
        return layout.unpack(x)

    def _finish(self, params_list):
        params_list = rescale_to_budget(self.arch, params_list, self.problem.constraint)
        return [wrap_params(p) for p in params_list]

    # ---------- continuous stage ----------

    def initial_params(self, start: int) -> list[BeamformerParams]:
        seed = (self.config.seed, start)
        params_list = [
            random_init(self.arch, seed + (b,), self.problem.constraint)
            for b in range(self.problem.num_beams)
        ]
        if self.arch.variant != "digital":
            for p in params_list[1:]:
                p.theta = params_list[0].theta.copy()  # one analog network for all beams
        return rescale_to_budget(self.arch, params_list, self.problem.constraint)

    def run_start(self, start: int):
        trace_values: list[float] = []
        layout = _Layout(self.arch, self.problem.num_beams)
        params_list = self._optimize(layout, self.initial_params(start), start, trace_values)
        params_list = self._finish(params_list)
        return params_list, self.objective(params_list), trace_values

    # ---------- discrete stage ----------

    def _candidate_values(self, As, beams, m, deltas):
        """
        Objective of every candidate update a_{b,m} += deltas[b, k], each
        candidate rescaled onto the power budget the way the output will be.
        """
        P_col = self.op.matrix[:, m]
        c = self.problem.constraint
        p, cell = self.problem.p, self.problem.grid.cell
        cand_A = [A[None, :] + d[:, None] * P_col[None, :] for A, d in zip(As, deltas)]
        new_am = [a[m] + d for a, d in zip(beams, deltas)]

        if c.kind == "per_element":
            scales = []
            for a, am in zip(beams, new_am):
                others = np.delete(np.abs(a) ** 2, m)
                rest = float(others.max()) if others.size else 0.0
                peak = np.maximum(rest, np.abs(am) ** 2)
                scales.append(np.where(peak > c.budget, np.sqrt(c.budget / np.maximum(peak, 1e-300)), 1.0))
        else:
            total = sum(float(np.vdot(a, a).real) - abs(a[m]) ** 2 + np.abs(am) ** 2 for a, am in zip(beams, new_am))
            s = np.where(total > 0, np.sqrt(c.budget / np.maximum(total, 1e-300)), 1.0)
            scales = [s] * len(beams)

        return sum(
            lp_sum(s[:, None] * A, t, p, cell)
            for s, A, t in zip(scales, cand_A, self.problem.targets)
        )

    def _coordinate_sweep(self, params_list) -> bool:
        """
        One cyclic pass over the analog phases: every θ entry tries all K
        levels and keeps a strict improvement. Returns whether anything moved.
        """
        arch = self.arch
        K = arch.levels
        levels = -np.pi + np.arange(K) * (2 * np.pi / K)
        theta = params_list[0].theta
        coeffs = [p.alpha * np.exp(1j * p.xi) for p in params_list]
        beams = self.compose_all(params_list)
        As = [self.op.forward(a) for a in beams]
        changed = False

        rows, cols = arch.theta_shape
        for j in range(cols):
            for r in range(rows):
                m = r + j * arch.group_size if arch.variant == "sub_array" else r
                cur = np.exp(1j * theta[r, j])
                deltas = [c[j] * (np.exp(1j * levels) - cur) for c in coeffs]
                values = self._candidate_values(As, beams, m, deltas)
                k_cur = int(np.argmin(np.abs(np.exp(1j * levels) - cur)))
                k_best = int(np.argmin(values))
                if values[k_best] < values[k_cur] * (1 - 1e-12):
                    theta[r, j] = levels[k_best]
                    for b in range(len(beams)):
                        beams[b] = beams[b].copy()
                        beams[b][m] += deltas[b][k_best]
                        As[b] = As[b] + deltas[b][k_best] * self.op.matrix[:, m]
                    changed = True

        for p in params_list:
            p.theta = theta.copy()
        return changed

    def refine_start(self, params_list, start: int):
        K = self.arch.levels
        trace_values: list[float] = []
        cur = [quantize_phases(p, K) for p in params_list]
        for p in cur:
            if p.xi is None:
                p.xi = np.zeros(self.arch.num_rf)
        cur = self._finish(cur)
        snapped, snapped_f = [p.copy() for p in cur], self.objective(cur)

        for sweep in range(self.config.refine_sweeps):
            changed = self._coordinate_sweep(cur)
            cur = self._finish(cur)
            f_sweep = self.objective(cur)

            # digital part re-fitted with the analog phases frozen
            layout = _Layout(self.arch, len(cur), theta=cur[0].theta.copy())
            refit = self._finish(self._optimize(layout, cur, start, trace_values))
            f_refit = self.objective(refit)
            if f_refit < f_sweep:
                cur, f_sweep = refit, f_refit
            logger.info(f"start={start} sweep={sweep} f={f_sweep:.6g} changed={changed}")
            if not changed:
                break

        if self.objective(cur) > snapped_f:
            return snapped, snapped_f, trace_values
        return cur, self.objective(cur), trace_values


# ---------- result assembly ----------

def feasibility_report(problem: SynthesisProblem, beams: list[np.ndarray]) -> dict:
    c = problem.constraint
    max_elem = max(float(np.max(np.abs(a) ** 2)) for a in beams)
    total = float(sum(np.vdot(a, a).real for a in beams))
    if c.kind == "per_element":
        ok = max_elem <= c.budget + 1e-12
    else:
        ok = total <= c.budget + 1e-12
    return {
        "constraint": c.kind,
        "budget": c.budget,
        "max_element_power": max_elem,
        "total_power": total,
        "satisfied": bool(ok),
    }


def _assemble(problem, engine, outcomes) -> SynthesisResult:
    start_params = [o[0] for o in outcomes]
    objectives = [float(o[1]) for o in outcomes]
    traces = [o[2] for o in outcomes]
    # lowest index wins ties
    best = min(range(len(outcomes)), key=lambda i: (objectives[i], i))
    params = start_params[best]
    beams = engine.compose_all(params)
    return SynthesisResult(
        params=params,
        beams=beams,
        objective=engine.objective(params),
        traces=traces,
        feasibility=feasibility_report(problem, beams),
        start_params=start_params,
        start_objectives=objectives,
        best_start=best,
    )


def _run_parallel(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _zero_result(problem: SynthesisProblem, config: SolverConfig) -> SynthesisResult:
    arch = problem.architecture
    logger.warning("desired pattern is identically zero; returning a = 0")
    if arch.variant == "digital":
        p = BeamformerParams(digital=np.zeros(arch.num_antennas, dtype=complex))
    else:
        p = BeamformerParams(
            theta=np.zeros(arch.theta_shape),
            alpha=np.zeros(arch.num_rf),
            xi=np.zeros(arch.num_rf) if arch.quantized else None,
        )
    params = [p.copy() for _ in problem.targets]
    engine = SynthesisEngine(problem, config)
    return _assemble(problem, engine, [(params, engine.objective(params), [])])


def _trace_logger(config: SolverConfig) -> TraceLogger | None:
    return TraceLogger(config.trace_path) if config.trace_path else None


# ---------- public API ----------

def solve_continuous(problem: SynthesisProblem, config: SolverConfig) -> SynthesisResult:
    """
    Continuous stage: every start descends the penalized objective through
    the μ schedule, is rescaled to exact feasibility, and the best start is
    returned together with all per-start traces.
    """
    if all(not np.any(t.desired > 0) for t in problem.targets):
        return _zero_result(problem, config)
    engine = SynthesisEngine(problem, config, _trace_logger(config))
    outcomes = _run_parallel(engine.run_start, list(range(config.n_starts)), config.workers)
    return _assemble(problem, engine, outcomes)


def refine_discrete(problem: SynthesisProblem, warm: SynthesisResult, config: SolverConfig) -> SynthesisResult:
    """
    Discrete stage for K-level phase shifters: snap, then alternate cyclic
    coordinate descent over θ with a continuous re-fit of (α, ξ). Every start
    of the warm result is refined; the best refined start is returned.
    """
    arch = problem.architecture
    if arch.levels < 2:
        raise InvalidArgumentError(f"discrete refinement needs K >= 2 (got {arch.levels})")
    if arch.variant == "digital":
        return warm
    engine = SynthesisEngine(problem, config, _trace_logger(config))
    warm_starts = warm.start_params or [warm.params]
    jobs = list(enumerate(warm_starts))
    outcomes = _run_parallel(lambda job: engine.refine_start(job[1], job[0]), jobs, config.workers)
    return _assemble(problem, engine, outcomes)


def solve(problem: SynthesisProblem, config: SolverConfig) -> SynthesisResult:
    """ solve_continuous, followed by refine_discrete when the phases are quantized."""
    warm = solve_continuous(problem, config)
    if problem.architecture.quantized and problem.architecture.variant != "digital":
        if warm.objective == 0 and all(not np.any(t.desired > 0) for t in problem.targets):
            return warm
        return refine_discrete(problem, warm, config)
    return warm


def solve_multibeam(problem: SynthesisProblem, config: SolverConfig) -> SynthesisResult:
    """
    Joint synthesis of B >= 2 simultaneously transmitted beams sharing one
    analog network (θ) with per-beam digital weights (α, ξ).
    """
    if problem.num_beams < 2:
        raise InvalidArgumentError("multi-beam synthesis needs at least two targets")
    if problem.constraint.kind != "sum_power":
        logger.warning("multi-beam synthesis is usually run under a sum-power constraint")
    return solve(problem, config)

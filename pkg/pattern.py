from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Callable

import numpy as np
import scipy.fft

from geometry import steering_matrix, unit_vector, wrap_phase
from models import ArrayGeometry, InvalidArgumentError, Region, SpatialGrid, TargetPattern

GAIN_FLOOR_DB = -120.0


def uniform_psi_grid(G: int) -> SpatialGrid:
    """ G uniform samples ψ_g = -π + g·2π/G on [-π, π)."""
    if G < 2:
        raise InvalidArgumentError(f"grid needs G >= 2 (got {G})")
    return SpatialGrid(psi=-np.pi + 2 * np.pi * np.arange(G) / G)


def azimuth_cut_grid(G: int, elevation: float = 0.0) -> SpatialGrid:
    """
    G uniform azimuth samples on [-π, π) at a fixed elevation, carrying unit
    direction vectors so that any geometry can be evaluated on it.
    """
    grid = uniform_psi_grid(G)
    dirs = np.array([unit_vector(az, elevation) for az in grid.psi])
    return SpatialGrid(psi=grid.psi, directions=dirs)


def is_uniform_psi(grid: SpatialGrid) -> bool:
    G = grid.size
    return np.allclose(grid.psi, -np.pi + 2 * np.pi * np.arange(G) / G, rtol=0, atol=1e-12)


def gain_db(A, floor_db: float = GAIN_FLOOR_DB) -> np.ndarray:
    """ 20·log10|A| with zero magnitudes clamped to the floor."""
    mag = np.abs(np.asarray(A))
    with np.errstate(divide="ignore"):
        g = 20 * np.log10(mag)
    return np.maximum(g, floor_db)


# ---------- array factor operators ----------

class PatternOperator(ABC):
    """
    Linear map a -> A with A_g = a^T p(u_g), plus its adjoint r -> P^H r,
    used for the objective gradient.
    """

    def __init__(self, num_elements: int, grid: SpatialGrid):
        self.num_elements = num_elements
        self.grid = grid

    @abstractmethod
    def forward(self, a: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def adjoint(self, r: np.ndarray) -> np.ndarray:
        pass

    @property
    @abstractmethod
    def matrix(self) -> np.ndarray:
        """ Dense steering matrix P, shape (G, M)."""
        pass

    def _check(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        if a.shape[-1] != self.num_elements:
            raise InvalidArgumentError(
                f"beamforming vector has length {a.shape[-1]}, array has {self.num_elements} elements"
            )
        return a


class DenseOperator(PatternOperator):
    """ Direct summation against the stacked steering vectors."""

    def __init__(self, geom: ArrayGeometry, grid: SpatialGrid):
        super().__init__(geom.num_elements, grid)
        if grid.directions is not None:
            self._P = steering_matrix(geom, directions=grid.directions)
        else:
            self._P = steering_matrix(geom, psi=grid.psi)

    def forward(self, a):
        return self._check(a) @ self._P.T

    def adjoint(self, r):
        return np.asarray(r) @ self._P.conj()

    @property
    def matrix(self):
        return self._P


class FFTOperator(PatternOperator):
    """
    Uniform ψ grid on a ULA. With ψ_g = -π + 2πg/G,
        A_g = Σ_n a_n (-1)^n e^{j2πng/G} = G · ifft(a ∘ (-1)^n)[g]
    and the adjoint is (P^H r)_n = (-1)^n fft(r)[n], n < M.
    """

    def __init__(self, num_elements: int, grid: SpatialGrid, workers: int = 1):
        super().__init__(num_elements, grid)
        if not is_uniform_psi(grid) or grid.directions is not None:
            raise InvalidArgumentError("FFT evaluation needs a uniform ψ grid")
        if grid.size < num_elements:
            raise InvalidArgumentError(
                f"FFT grid too coarse: G={grid.size} < M={num_elements}"
            )
        self.workers = workers
        self._sign = (-1.0) ** np.arange(num_elements)
        self._P = None

    def forward(self, a):
        a = self._check(a)
        G = self.grid.size
        return G * scipy.fft.ifft(a * self._sign, n=G, axis=-1, workers=self.workers)

    def adjoint(self, r):
        spec = scipy.fft.fft(np.asarray(r, dtype=complex), axis=-1, workers=self.workers)
        return spec[..., : self.num_elements] * self._sign

    @property
    def matrix(self):
        if self._P is None:
            self._P = np.exp(1j * np.outer(self.grid.psi, np.arange(self.num_elements)))
        return self._P


def pattern_operator(geom: ArrayGeometry, grid: SpatialGrid, workers: int = 1) -> PatternOperator:
    """ FFT path whenever the grid and geometry allow it, direct summation otherwise."""
    if (
        geom.kind == "ula"
        and grid.directions is None
        and grid.size >= geom.num_elements
        and is_uniform_psi(grid)
    ):
        return FFTOperator(geom.num_elements, grid, workers=workers)
    return DenseOperator(geom, grid)


def array_factor(geom: ArrayGeometry, a, grid: SpatialGrid) -> np.ndarray:
    """ A_g = a^T p(u_g) by direct summation."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 1 or a.size != geom.num_elements:
        raise InvalidArgumentError(
            f"beamforming vector has length {a.size}, array has {geom.num_elements} elements"
        )
    return DenseOperator(geom, grid).forward(a)


def array_factor_ula_fft(a, grid: SpatialGrid, workers: int = 1) -> np.ndarray:
    """ Same samples as array_factor on a ULA, via one zero-padded length-G transform."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 1:
        raise InvalidArgumentError("beamforming vector must be 1-D")
    return FFTOperator(a.size, grid, workers=workers).forward(a)


# ---------- target construction ----------

def d_max_level(b: float, M: int, power_budget: str, budget: float = 1.0, share: float = 1.0) -> float:
    """ Level of a lossless flat beam of width b under the given budget."""
    if power_budget == "per_element":
        return float(np.sqrt(share * budget * M * 2 * np.pi / b))
    if power_budget == "sum_power":
        return float(np.sqrt(share * budget * 2 * np.pi / b))
    raise InvalidArgumentError(f"unknown power budget {power_budget!r}")


def build_target(
    center: float,
    b: float,
    beta_db: float,
    transition_halfwidth: float | None,
    M: int,
    grid: SpatialGrid,
    power_budget: str = "per_element",
    element_gain: Callable[[np.ndarray], np.ndarray] | None = None,
    budget: float = 1.0,
    power_share: float = 1.0,
) -> TargetPattern:
    """
    Flat beam of width b centred at `center` (both in radians of ψ).

    Pass samples satisfy -b/2 <= wrap(ψ - center) < b/2, so adjacent beams
    tile the circle; transition samples are the non-pass samples within
    `transition_halfwidth` of a pass edge (W = 0 there); the rest is stop.
    """
    cell = grid.cell
    if not 0 < b <= 2 * np.pi:
        raise InvalidArgumentError(f"beam width must satisfy 0 < b <= 2π (got {b})")
    if beta_db < 0:
        raise InvalidArgumentError("beta_db must be >= 0")
    if M < 1:
        raise InvalidArgumentError("M must be >= 1")
    if not 0 < power_share <= 1:
        raise InvalidArgumentError("power_share must lie in (0, 1]")
    if transition_halfwidth is None:
        transition_halfwidth = 2 * cell
    if transition_halfwidth < cell * (1 - 1e-9):
        raise InvalidArgumentError(
            f"transition half-width {transition_halfwidth:.4g} is thinner than one grid cell {cell:.4g}"
        )

    eps = 1e-9
    offset = wrap_phase(grid.psi - center)
    if b >= 2 * np.pi - eps:
        in_pass = np.ones(grid.size, dtype=bool)
    else:
        in_pass = (offset >= -b / 2 - eps) & (offset < b / 2 - eps)

    region = np.full(grid.size, Region.STOP, dtype=np.int8)
    region[in_pass] = Region.PASS
    if not np.all(in_pass):
        lo, hi = center - b / 2, center + b / 2
        edge_dist = np.minimum(np.abs(wrap_phase(grid.psi - lo)), np.abs(wrap_phase(grid.psi - hi)))
        region[~in_pass & (edge_dist <= transition_halfwidth + eps)] = Region.TRANSITION

    beta = 10 ** (-beta_db / 20)
    d_max = d_max_level(b, M, power_budget, budget=budget, share=power_share)

    desired = np.where(region == Region.PASS, beta * d_max, 0.0)
    weight = np.where(region == Region.TRANSITION, 0.0, 1.0)

    # element pattern compensation: divide D and W by the element gain
    if element_gain is not None:
        g = np.asarray(element_gain(grid.psi), dtype=float)
        if g.shape != (grid.size,) or np.any(g <= 0):
            raise InvalidArgumentError("element gain must be positive on every grid sample")
        desired = desired / g
        weight = weight / g

    return TargetPattern(
        desired=desired,
        weight=weight,
        region=region,
        d_max=d_max,
        beta=beta,
        width=float(b),
        center=float(wrap_phase(center)),
    )


def stage_targets(
    stage: int,
    M: int,
    grid: SpatialGrid,
    beta_db: float,
    transition_halfwidth: float | None = None,
    power_budget: str = "sum_power",
    budget: float = 1.0,
) -> list[TargetPattern]:
    """
    Two adjacent beams of width w = π/2^stage splitting the parent sector
    [0, 2w): stage 1 halves [0, π), stage 2 halves [0, π/2), ...
    """
    if stage < 1:
        raise InvalidArgumentError("stage must be >= 1")
    w = np.pi / 2 ** stage
    share = 0.5 if power_budget == "sum_power" else 1.0
    return [
        build_target(
            center=float(wrap_phase(c)),
            b=w,
            beta_db=beta_db,
            transition_halfwidth=transition_halfwidth,
            M=M,
            grid=grid,
            power_budget=power_budget,
            budget=budget,
            power_share=share,
        )
        for c in (w / 2, 3 * w / 2)
    ]

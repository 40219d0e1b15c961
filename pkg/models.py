from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Literal

import numpy as np

GeometryKind = Literal["ula", "upa", "cylindrical", "custom"]
Variant = Literal["digital", "sub_array", "fully_connected"]
PowerKind = Literal["per_element", "sum_power"]


# ---------- exceptions ----------

class BeamforgeError(Exception):
    """ Root of every error raised by the library."""
    pass


class InvalidArgumentError(BeamforgeError, ValueError):
    """ Custom exception for arguments violating an operation's preconditions."""
    pass


class ConfigError(BeamforgeError):
    """ Custom exception for config files failing schema validation."""
    pass


class SolverError(BeamforgeError, RuntimeError):
    """ Custom exception for numerical breakdowns during synthesis."""
    pass


# ---------- geometry / pattern ----------

class Region(IntEnum):
    STOP = 0
    PASS = 1
    TRANSITION = 2


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """
    Antenna element positions in carrier wavelengths, shape (M, 3).
    Element 1 sits at the origin so x_1(u) = 0 for every direction.
    """
    positions: np.ndarray
    kind: GeometryKind = "custom"
    spacing_wl: float | None = None  # only meaningful for kind == "ula"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise InvalidArgumentError("positions must be an (M, 3) array with M >= 1")
        if not np.all(np.isfinite(pos)):
            raise InvalidArgumentError("positions must be finite")
        if np.max(np.abs(pos[0])) > 1e-12:
            raise InvalidArgumentError("first element must be at the origin")
        object.__setattr__(self, "positions", pos)

    @property
    def num_elements(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """
    Sampling grid. `psi` holds the scalar coordinate of each sample (spatial
    angle for ULAs, azimuth for cuts of general arrays); `directions` holds
    3D unit vectors when the grid is meant for non-linear geometries.
    """
    psi: np.ndarray
    directions: np.ndarray | None = None

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        if psi.ndim != 1 or psi.size < 2:
            raise InvalidArgumentError("grid needs at least 2 samples")
        if np.any(np.diff(psi) <= 0):
            raise InvalidArgumentError("grid samples must be strictly increasing")
        object.__setattr__(self, "psi", psi)
        if self.directions is not None:
            dirs = np.asarray(self.directions, dtype=float)
            if dirs.shape != (psi.size, 3):
                raise InvalidArgumentError("directions must have shape (G, 3)")
            object.__setattr__(self, "directions", dirs)

    @property
    def size(self) -> int:
        return self.psi.size

    @property
    def cell(self) -> float:
        """ Measure of one sample, 2π/G."""
        return 2 * np.pi / self.psi.size


@dataclass(frozen=True, eq=False)
class TargetPattern:
    """
    Desired magnitude D and weighting W sampled on a grid, with per-sample
    region labels (see Region).
    """
    desired: np.ndarray
    weight: np.ndarray
    region: np.ndarray
    d_max: float = 0.0
    beta: float = 1.0
    width: float = 0.0
    center: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.desired, dtype=float)
        w = np.asarray(self.weight, dtype=float)
        r = np.asarray(self.region, dtype=np.int8)
        if not (d.shape == w.shape == r.shape) or d.ndim != 1:
            raise InvalidArgumentError("D, W and region must be 1-D arrays of equal length")
        if np.any(d < 0) or np.any(w < 0):
            raise InvalidArgumentError("D and W must be nonnegative")
        if not 0 < self.beta <= 1:
            raise InvalidArgumentError("beta must lie in (0, 1]")
        object.__setattr__(self, "desired", d)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "region", r)

    @classmethod
    def from_samples(cls, desired, weight=None, region=None) -> "TargetPattern":
        """
        Arbitrary target shape. Without explicit labels: W == 0 is transition,
        D > 0 is pass, the rest is stop.
        """
        d = np.asarray(desired, dtype=float)
        w = np.ones_like(d) if weight is None else np.asarray(weight, dtype=float)
        if d.shape != w.shape:
            raise InvalidArgumentError("D and W must have equal length")
        if region is None:
            region = np.where(w == 0, Region.TRANSITION, np.where(d > 0, Region.PASS, Region.STOP))
        peak = float(np.max(d)) if d.size else 0.0
        return cls(desired=d, weight=w, region=region, d_max=peak)

    @property
    def pass_mask(self) -> np.ndarray:
        return self.region == Region.PASS

    @property
    def stop_mask(self) -> np.ndarray:
        return self.region == Region.STOP

    @property
    def transition_mask(self) -> np.ndarray:
        return self.region == Region.TRANSITION


# ---------- hardware ----------

@dataclass(frozen=True)
class HybridArchitecture:
    variant: Variant
    num_antennas: int          # M
    num_rf: int = 1            # M_RFE
    levels: int = 0            # K, 0 = continuous phases

    def __post_init__(self):
        if self.variant not in ("digital", "sub_array", "fully_connected"):
            raise InvalidArgumentError(f"unknown architecture variant {self.variant!r}")
        if self.num_antennas < 1:
            raise InvalidArgumentError("M must be >= 1")
        if not 1 <= self.num_rf <= self.num_antennas:
            raise InvalidArgumentError("M_RFE must satisfy 1 <= M_RFE <= M")
        if self.levels != 0 and self.levels < 2:
            raise InvalidArgumentError("K must be 0 (continuous) or >= 2")
        if self.variant == "sub_array" and self.num_antennas % self.num_rf:
            raise InvalidArgumentError(
                f"sub_array needs M_RFE | M (M={self.num_antennas}, M_RFE={self.num_rf})"
            )

    @property
    def quantized(self) -> bool:
        return self.levels >= 2

    @property
    def group_size(self) -> int:
        """ M_C, antennas per RF chain in the sub-array structure."""
        return self.num_antennas // self.num_rf

    @property
    def theta_shape(self) -> tuple[int, int] | None:
        if self.variant == "sub_array":
            return (self.group_size, self.num_rf)
        if self.variant == "fully_connected":
            return (self.num_antennas, self.num_rf)
        return None


@dataclass(eq=False)
class BeamformerParams:
    theta: np.ndarray | None = None    # analog phases (radians)
    alpha: np.ndarray | None = None    # digital gains, >= 0
    xi: np.ndarray | None = None       # digital phases, only with K >= 2
    digital: np.ndarray | None = None  # free vector, digital variant only

    def copy(self) -> "BeamformerParams":
        return BeamformerParams(
            theta=None if self.theta is None else self.theta.copy(),
            alpha=None if self.alpha is None else self.alpha.copy(),
            xi=None if self.xi is None else self.xi.copy(),
            digital=None if self.digital is None else self.digital.copy(),
        )


@dataclass(frozen=True)
class PowerConstraint:
    kind: PowerKind = "per_element"
    budget: float = 1.0

    def __post_init__(self):
        if self.kind not in ("per_element", "sum_power"):
            raise InvalidArgumentError(f"unknown power constraint {self.kind!r}")
        if not self.budget > 0:
            raise InvalidArgumentError("power budget must be > 0")


# ---------- synthesis ----------

@dataclass(eq=False)
class SynthesisProblem:
    geometry: ArrayGeometry
    grid: SpatialGrid
    targets: list[TargetPattern]
    architecture: HybridArchitecture
    constraint: PowerConstraint = field(default_factory=PowerConstraint)
    p: int = 4

    def __post_init__(self):
        if not self.targets:
            raise InvalidArgumentError("at least one target pattern is required")
        if self.geometry.num_elements != self.architecture.num_antennas:
            raise InvalidArgumentError("geometry and architecture disagree on M")
        for i, t in enumerate(self.targets):
            if t.desired.size != self.grid.size:
                raise InvalidArgumentError(f"target {i} is not sampled on the problem grid")
        if self.p < 2 or self.p % 2:
            raise InvalidArgumentError("p must be an even integer >= 2")

    @property
    def num_beams(self) -> int:
        return len(self.targets)


@dataclass
class SolverConfig:
    n_starts: int = 8
    max_iters: int = 2000           # per start, split across penalty rounds
    initial_step: float = 1e-2
    step_shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    mu0: float = 10.0
    mu_growth: float = 10.0
    penalty_rounds: int = 4
    tol: float = 1e-8
    seed: int = 0
    refine_sweeps: int = 10
    workers: int = 1
    log_every: int = 200
    trace_path: str | None = None

    def __post_init__(self):
        for name in ("n_starts", "max_iters", "max_backtracks", "penalty_rounds",
                     "refine_sweeps", "workers", "log_every"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        for name in ("initial_step", "armijo", "mu0", "tol"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        if not 0 < self.step_shrink < 1:
            raise InvalidArgumentError("step_shrink must lie in (0, 1)")
        if self.mu_growth < 1:
            raise InvalidArgumentError("mu_growth must be >= 1")


@dataclass(eq=False)
class SynthesisResult:
    params: list[BeamformerParams]    # one per beam; theta shared in multi-beam runs
    beams: list[np.ndarray]           # composed a per beam
    objective: float
    traces: list[list[float]]         # per start, penalized objective per accepted step
    feasibility: dict
    start_params: list[list[BeamformerParams]] = field(default_factory=list)
    start_objectives: list[float] = field(default_factory=list)
    best_start: int = 0

    @property
    def a(self) -> np.ndarray:
        return self.beams[0]


@dataclass(frozen=True)
class BeamMetrics:
    beam_id: str
    avg_gain_db: float
    max_ripple_db: float
    overlap_pct: float | None
    max_sidelobe_db: float

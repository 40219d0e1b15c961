from __future__ import annotations

import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from geometry import make_custom, make_cylindrical, make_ula, make_upa
from models import (
    ConfigError,
    HybridArchitecture,
    InvalidArgumentError,
    PowerConstraint,
    SolverConfig,
    SynthesisProblem,
)
from pattern import azimuth_cut_grid, build_target, stage_targets, uniform_psi_grid


# ---------- environment ----------

@dataclass(frozen=True)
class EnvSettings:
    threads: int = 1
    output_dir: Path = Path(".")


def env_settings() -> EnvSettings:
    """ BEAMFORGE_THREADS and BEAMFORGE_OUTPUT_DIR, with .env honoured."""
    load_dotenv()
    raw = os.getenv("BEAMFORGE_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"BEAMFORGE_THREADS must be an integer (got {raw!r})") from None
    if threads < 1:
        raise ConfigError(f"BEAMFORGE_THREADS must be >= 1 (got {threads})")
    return EnvSettings(threads=threads, output_dir=Path(os.getenv("BEAMFORGE_OUTPUT_DIR", ".")))


# ---------- config file schema ----------

class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryBlock(_Block):
    kind: Literal["ula", "upa", "cylindrical", "custom"] = "ula"
    m: int | None = Field(default=None, ge=1)
    spacing_wl: float = Field(default=0.5, gt=0)
    mx: int | None = Field(default=None, ge=1)
    my: int | None = Field(default=None, ge=1)
    rings: int | None = Field(default=None, ge=1)
    per_ring: int | None = Field(default=None, ge=1)
    radius_wl: float | None = Field(default=None, gt=0)
    ring_spacing_wl: float = Field(default=0.5, ge=0)
    positions: list[list[float]] | None = None

    @model_validator(mode="after")
    def _required_for_kind(self):
        needed = {
            "ula": ("m",),
            "upa": ("mx", "my"),
            "cylindrical": ("rings", "per_ring", "radius_wl"),
            "custom": ("positions",),
        }[self.kind]
        missing = [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} geometry needs {', '.join(missing)}")
        return self


class GridBlock(_Block):
    size: int = Field(default=512, ge=2)
    kind: Literal["psi", "azimuth"] = "psi"
    elevation_deg: float = 0.0


class ArchitectureBlock(_Block):
    variant: Literal["digital", "sub_array", "fully_connected"]
    m_rfe: int = Field(default=1, ge=1)
    k: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _levels(self):
        if self.k == 1:
            raise ValueError("k must be 0 (continuous) or >= 2")
        return self


class PowerBlock(_Block):
    kind: Literal["per_element", "sum_power"] = "per_element"
    budget: float = Field(default=1.0, gt=0)


class BeamBlock(_Block):
    id: str | None = None
    center: float = 0.0                     # radians of ψ
    width: float = Field(gt=0, le=2 * np.pi)
    beta_db: float = Field(default=0.0, ge=0)
    transition_halfwidth: float | None = Field(default=None, gt=0)
    power_share: float | None = Field(default=None, gt=0, le=1)


class StageBlock(_Block):
    stage: int = Field(ge=1)
    beta_db: float = Field(default=0.0, ge=0)
    transition_halfwidth: float | None = Field(default=None, gt=0)


class ObjectiveBlock(_Block):
    p: int = Field(default=4, ge=2)

    @model_validator(mode="after")
    def _even(self):
        if self.p % 2:
            raise ValueError("p must be even")
        return self


class SolverBlock(_Block):
    n_starts: int = Field(default=8, ge=1)
    max_iters: int = Field(default=2000, ge=1)
    initial_step: float = Field(default=1e-2, gt=0)
    step_shrink: float = Field(default=0.5, gt=0, lt=1)
    armijo: float = Field(default=1e-4, gt=0)
    max_backtracks: int = Field(default=40, ge=1)
    mu0: float = Field(default=10.0, gt=0)
    mu_growth: float = Field(default=10.0, ge=1)
    penalty_rounds: int = Field(default=4, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    seed: int = 0
    refine_sweeps: int = Field(default=10, ge=1)
    log_every: int = Field(default=200, ge=1)


class ConfigFile(_Block):
    geometry: GeometryBlock
    grid: GridBlock = GridBlock()
    architecture: ArchitectureBlock
    power: PowerBlock = PowerBlock()
    beams: list[BeamBlock] = Field(default_factory=list)
    stage: StageBlock | None = None
    objective: ObjectiveBlock = ObjectiveBlock()
    solver: SolverBlock = SolverBlock()
    pairs: list[tuple[int, int]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _beams_or_stage(self):
        if bool(self.beams) == (self.stage is not None):
            raise ValueError("give either a 'beams' list or a 'stage' block")
        n = 2 if self.stage is not None else len(self.beams)
        for i, j in self.pairs:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"pair ({i}, {j}) does not name two distinct beams")
        return self


# ---------- assembly ----------

@dataclass
class RunConfig:
    problem: SynthesisProblem
    solver: SolverConfig
    beam_ids: list[str]
    pairs: list[tuple[int, int]] = field(default_factory=list)


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


@contextmanager
def _section(name: str):
    """ Re-raise domain validation failures as ConfigError naming the block."""
    try:
        yield
    except InvalidArgumentError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _build_geometry(block: GeometryBlock):
    if block.kind == "ula":
        return make_ula(block.m, block.spacing_wl)
    if block.kind == "upa":
        return make_upa(block.mx, block.my, block.spacing_wl)
    if block.kind == "cylindrical":
        return make_cylindrical(block.rings, block.per_ring, block.radius_wl, block.ring_spacing_wl)
    return make_custom(block.positions)


def build_run_config(raw: dict, threads: int = 1) -> RunConfig:
    """ Validated RunConfig from an already parsed config mapping."""
    try:
        cfg = ConfigFile.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None

    with _section("geometry"):
        geom = _build_geometry(cfg.geometry)
    M = geom.num_elements

    with _section("grid"):
        if cfg.grid.kind == "azimuth" or geom.kind != "ula":
            grid = azimuth_cut_grid(cfg.grid.size, np.deg2rad(cfg.grid.elevation_deg))
        else:
            grid = uniform_psi_grid(cfg.grid.size)

    with _section("architecture"):
        arch = HybridArchitecture(cfg.architecture.variant, M, cfg.architecture.m_rfe, cfg.architecture.k)

    with _section("power"):
        constraint = PowerConstraint(cfg.power.kind, cfg.power.budget)

    with _section("beams"):
        if cfg.stage is not None:
            targets = stage_targets(
                cfg.stage.stage, M, grid, cfg.stage.beta_db,
                transition_halfwidth=cfg.stage.transition_halfwidth,
                power_budget=constraint.kind,
                budget=constraint.budget,
            )
            beam_ids = [f"stage{cfg.stage.stage}-{n}" for n in (1, 2)]
        else:
            default_share = 1.0 / len(cfg.beams) if constraint.kind == "sum_power" else 1.0
            targets = [
                build_target(
                    center=b.center,
                    b=b.width,
                    beta_db=b.beta_db,
                    transition_halfwidth=b.transition_halfwidth,
                    M=M,
                    grid=grid,
                    power_budget=constraint.kind,
                    budget=constraint.budget,
                    power_share=b.power_share or default_share,
                )
                for b in cfg.beams
            ]
            beam_ids = [b.id or f"beam{i + 1}" for i, b in enumerate(cfg.beams)]

    with _section("config"):
        problem = SynthesisProblem(geom, grid, targets, arch, constraint, cfg.objective.p)
        solver = SolverConfig(**cfg.solver.model_dump(), workers=threads)

    return RunConfig(problem=problem, solver=solver, beam_ids=beam_ids, pairs=list(cfg.pairs))


def load_run_config(path: str | Path, threads: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if threads is None:
        threads = env_settings().threads
    return build_run_config(raw, threads)


def load_config(path: str | Path) -> tuple[SynthesisProblem, SolverConfig]:
    """ Parse and validate a JSON config into (problem, solver settings)."""
    run = load_run_config(path)
    return run.problem, run.solver

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from geometry import angle_from_psi
from hybrid import compose, phase_indices
from metrics import REPORT_COLUMNS, report_frame
from models import (
    ArrayGeometry,
    BeamformerParams,
    BeamMetrics,
    ConfigError,
    HybridArchitecture,
    SpatialGrid,
    SynthesisProblem,
    SynthesisResult,
)
from pattern import GAIN_FLOOR_DB, gain_db

logger = logging.getLogger(__name__)

PATTERN_COLUMNS = ["angle_deg", "psi_rad", "gain_db"]


@dataclass
class Codebook:
    method: str
    architecture: HybridArchitecture
    geometry: ArrayGeometry
    beam_ids: list[str]
    params: list[BeamformerParams]
    beams: list[np.ndarray]
    objective: float | None = None
    seed: int | None = None


# ---------- codebook JSON ----------

def _array(v) -> list | None:
    return None if v is None else np.asarray(v).tolist()


def _beam_entry(arch: HybridArchitecture, beam_id: str, params: BeamformerParams) -> dict:
    a = compose(arch, params)
    entry = {
        "id": beam_id,
        "theta": _array(params.theta),
        "theta_index": None,
        "alpha": _array(params.alpha),
        "xi": _array(params.xi),
        "a_re": a.real.tolist(),
        "a_im": a.imag.tolist(),
    }
    if arch.quantized and params.theta is not None:
        entry["theta_index"] = phase_indices(params.theta, arch.levels).tolist()
    return entry


def codebook_dict(
    problem: SynthesisProblem,
    result: SynthesisResult,
    beam_ids: Sequence[str],
    method: str = "optimizer",
    seed: int | None = None,
) -> dict:
    arch, geom = problem.architecture, problem.geometry
    return {
        "method": method,
        "seed": seed,
        "objective": float(result.objective),
        "architecture": {
            "variant": arch.variant,
            "m": arch.num_antennas,
            "m_rfe": arch.num_rf,
            "k": arch.levels,
        },
        "geometry": {
            "kind": geom.kind,
            "spacing_wl": geom.spacing_wl,
            "positions": geom.positions.tolist(),
        },
        "power": {"kind": problem.constraint.kind, "budget": problem.constraint.budget},
        "feasibility": result.feasibility,
        "beams": [_beam_entry(arch, bid, p) for bid, p in zip(beam_ids, result.params)],
    }


def write_codebook(path: str | Path, payload: dict) -> Path:
    """ Deterministic JSON: sorted keys, fixed indent, trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    logger.info(f"wrote codebook {path}")
    return path


def _params_from_entry(arch: HybridArchitecture, entry: dict) -> BeamformerParams:
    if arch.variant == "digital":
        return BeamformerParams(digital=np.asarray(entry["a_re"]) + 1j * np.asarray(entry["a_im"]))
    xi = entry.get("xi")
    return BeamformerParams(
        theta=np.asarray(entry["theta"], dtype=float),
        alpha=np.asarray(entry["alpha"], dtype=float),
        xi=None if xi is None else np.asarray(xi, dtype=float),
    )


def read_codebook(path: str | Path) -> Codebook:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        a = raw["architecture"]
        arch = HybridArchitecture(a["variant"], int(a["m"]), int(a["m_rfe"]), int(a["k"]))
        g = raw["geometry"]
        geom = ArrayGeometry(
            positions=np.asarray(g["positions"], dtype=float),
            kind=g["kind"],
            spacing_wl=g.get("spacing_wl"),
        )
        params = [_params_from_entry(arch, e) for e in raw["beams"]]
        ids = [e.get("id") or f"beam{i + 1}" for i, e in enumerate(raw["beams"])]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed codebook ({exc!r})") from None

    return Codebook(
        method=raw.get("method", "optimizer"),
        architecture=arch,
        geometry=geom,
        beam_ids=ids,
        params=params,
        beams=[compose(arch, p) for p in params],
        objective=raw.get("objective"),
        seed=raw.get("seed"),
    )


# ---------- pattern CSV ----------

def pattern_frame(A, grid: SpatialGrid, spacing_wl: float | None = 0.5, dbr: bool = False) -> pd.DataFrame:
    """
    One row per grid sample. angle_deg is the physical angle behind ψ for
    ULA grids (NaN outside the visible region) and the azimuth itself for
    direction grids.
    """
    g = gain_db(A)
    if dbr:
        g = np.maximum(g - g.max(), GAIN_FLOOR_DB)
    if grid.directions is not None or spacing_wl is None:
        angle = np.rad2deg(grid.psi)
    else:
        angle = np.rad2deg(angle_from_psi(grid.psi, spacing_wl))
    return pd.DataFrame({"angle_deg": angle, "psi_rad": grid.psi, "gain_db": g}, columns=PATTERN_COLUMNS)


def export_plot_data(A, grid: SpatialGrid, path: str | Path, spacing_wl: float | None = 0.5, dbr: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pattern_frame(A, grid, spacing_wl, dbr).to_csv(path, index=False)
    logger.info(f"wrote pattern {path}")
    return path


def import_pattern(path: str | Path) -> pd.DataFrame:
    """
    Pattern CSV back into a DataFrame, with a `magnitude` column recovered
    from gain_db so the metrics can run on it directly.
    """
    df = pd.read_csv(path)
    missing = [c for c in PATTERN_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigError(f"{path}: missing pattern columns {missing}")
    df["magnitude"] = 10 ** (df["gain_db"] / 20)
    return df


# ---------- report CSV ----------

def write_report(rows: Sequence[BeamMetrics], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report_frame(rows).to_csv(path, index=False)
    logger.info(f"wrote report {path}")
    return path


def read_report(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"beam_id": str})
    missing = [c for c in REPORT_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigError(f"{path}: missing report columns {missing}")
    return df.astype({"overlap_pct": float})[REPORT_COLUMNS]

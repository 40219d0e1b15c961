from __future__ import annotations

from dataclasses import asdict
from typing import Iterable, Literal, Sequence

import numpy as np
import pandas as pd

from models import BeamMetrics, InvalidArgumentError, TargetPattern
from pattern import GAIN_FLOOR_DB, gain_db

REPORT_COLUMNS = ["beam_id", "avg_gain_db", "max_ripple_db", "overlap_pct", "max_sidelobe_db"]
OVERLAP_FLOOR_DBR = -40.0

GainMean = Literal["db", "linear"]


def _pass_gains(A, target: TargetPattern) -> np.ndarray:
    A = np.asarray(A)
    if A.shape != target.desired.shape:
        raise InvalidArgumentError("pattern and target are sampled on different grids")
    mask = target.pass_mask
    if not np.any(mask):
        raise InvalidArgumentError("target has an empty pass region")
    return gain_db(A[mask])


def average_gain(A, target: TargetPattern, mean: GainMean = "db") -> float:
    """
    Mean gain over the pass samples. "db" averages 20·log10|A| sample by
    sample; "linear" converts the mean power |A|^2 back to dB.
    """
    g = _pass_gains(A, target)
    if mean == "db":
        return float(np.mean(g))
    if mean == "linear":
        power = np.mean(np.abs(np.asarray(A)[target.pass_mask]) ** 2)
        return float(max(10 * np.log10(power), GAIN_FLOOR_DB)) if power > 0 else GAIN_FLOOR_DB
    raise InvalidArgumentError(f"unknown gain mean {mean!r}")


def max_ripple(A, target: TargetPattern) -> float:
    """ Peak-to-peak gain over the pass region; transition samples never count."""
    g = _pass_gains(A, target)
    return float(np.max(g) - np.min(g))


def max_sidelobe(A, target: TargetPattern, mean: GainMean = "db") -> float:
    """ Highest stop-region gain relative to the average pass gain."""
    A = np.asarray(A)
    if not np.any(target.stop_mask):
        raise InvalidArgumentError("target has an empty stop region")
    peak = float(np.max(gain_db(A[target.stop_mask])))
    if peak <= GAIN_FLOOR_DB:
        return GAIN_FLOOR_DB
    return max(peak - average_gain(A, target, mean), GAIN_FLOOR_DB)


def overlap(
    A,
    B,
    target_a: TargetPattern,
    target_b: TargetPattern | None = None,
    threshold_db: float = 5.0,
) -> float:
    """
    Share of beam A's pass area where the two beams are within threshold_db
    of each other, in percent.

    Only samples where at least one beam is above its own floor (-40 dB from
    its peak) count; they count wherever they lie, shared stop regions
    included. `target_b` is only checked against the grid. Denominator is
    A's pass area, so the measure is not symmetric.
    """
    A, B = np.asarray(A), np.asarray(B)
    shapes = {A.shape, B.shape, target_a.desired.shape}
    if target_b is not None:
        shapes.add(target_b.desired.shape)
    if len(shapes) != 1:
        raise InvalidArgumentError("patterns are sampled on different grids")
    n_pass = int(np.count_nonzero(target_a.pass_mask))
    if n_pass == 0:
        raise InvalidArgumentError("beam A has an empty pass region")

    ga, gb = gain_db(A), gain_db(B)
    above_floor = (ga >= ga.max() + OVERLAP_FLOOR_DBR) | (gb >= gb.max() + OVERLAP_FLOOR_DBR)
    close = np.abs(ga - gb) < threshold_db
    mask = close & above_floor

    # equal-measure samples, so the area ratio is a count ratio
    return float(min(100.0, 100.0 * np.count_nonzero(mask) / n_pass))


def beam_metrics(
    beam_id: str,
    A,
    target: TargetPattern,
    overlap_pct: float | None = None,
    mean: GainMean = "db",
) -> BeamMetrics:
    return BeamMetrics(
        beam_id=str(beam_id),
        avg_gain_db=average_gain(A, target, mean),
        max_ripple_db=max_ripple(A, target),
        overlap_pct=overlap_pct,
        max_sidelobe_db=max_sidelobe(A, target, mean),
    )


def report(
    beams: Sequence[tuple[str, np.ndarray, TargetPattern]],
    pairs: Iterable[tuple[int, int]] | None = None,
    threshold_db: float = 5.0,
    mean: GainMean = "db",
) -> list[BeamMetrics]:
    """
    One BeamMetrics row per (beam_id, pattern, target). Every declared pair
    (i, j) fills the overlap of beam i against j and of beam j against i;
    a beam with several partners reports its largest overlap.
    """
    overlaps: dict[int, float] = {}
    for i, j in pairs or []:
        if not (0 <= i < len(beams) and 0 <= j < len(beams)) or i == j:
            raise InvalidArgumentError(f"invalid beam pair ({i}, {j})")
        _, A_i, t_i = beams[i]
        _, A_j, t_j = beams[j]
        for k, val in ((i, overlap(A_i, A_j, t_i, t_j, threshold_db)), (j, overlap(A_j, A_i, t_j, t_i, threshold_db))):
            overlaps[k] = max(overlaps.get(k, 0.0), val)

    return [
        beam_metrics(beam_id, A, target, overlaps.get(idx), mean)
        for idx, (beam_id, A, target) in enumerate(beams)
    ]


def report_frame(rows: Sequence[BeamMetrics]) -> pd.DataFrame:
    df = pd.DataFrame([asdict(r) for r in rows], columns=REPORT_COLUMNS)
    return df.astype({"overlap_pct": float})


def render_report(rows: Sequence[BeamMetrics]) -> str:
    """ Aligned text table, two decimals, empty overlap cells left blank."""
    df = report_frame(rows)
    return df.to_string(
        index=False,
        na_rep="",
        float_format=lambda v: f"{v:.2f}",
    )

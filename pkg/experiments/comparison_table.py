import logging
import sys
from pathlib import Path

import pandas as pd

# scripts in experiments/ run from the repository root: python experiments/comparison_table.py
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from baseline import baseline_synthesis
from config import load_run_config
from metrics import report, report_frame
from pattern import pattern_operator
from solver import solve

# (row label, config file, method)
SETUPS = [
    ("sub-array b=pi", "sub_array_b180.json", "optimizer"),
    ("sub-array b=pi/2", "sub_array_b90.json", "optimizer"),
    ("sub-array b=pi/4", "sub_array_b45.json", "optimizer"),
    ("fully-connected b=pi", "fully_connected_b180.json", "optimizer"),
    ("fully-connected b=pi/2", "fully_connected_b90.json", "optimizer"),
    ("fully-connected b=pi/4", "fully_connected_b45.json", "optimizer"),
    ("2-bit stage 1", "stage1.json", "optimizer"),
    ("2-bit stage 2", "stage2.json", "optimizer"),
    ("2-bit stage 3", "stage3.json", "optimizer"),
    ("2-bit stage 1 (baseline)", "stage1.json", "baseline-approx"),
    ("2-bit stage 2 (baseline)", "stage2.json", "baseline-approx"),
    ("2-bit stage 3 (baseline)", "stage3.json", "baseline-approx"),
]


def run_table(data_dir: str = "data", out_path: str = "output/comparison_table.csv") -> pd.DataFrame:
    frames = []
    for label, cfg_file, method in SETUPS:
        run = load_run_config(Path(data_dir) / cfg_file)
        logging.info(f"--- {label} ({method}) ---")
        if method == "optimizer":
            result = solve(run.problem, run.solver)
        else:
            result = baseline_synthesis(run.problem, run.solver)

        op = pattern_operator(run.problem.geometry, run.problem.grid)
        rows = report(
            [(bid, op.forward(a), t) for bid, a, t in zip(run.beam_ids, result.beams, run.problem.targets)],
            pairs=run.pairs,
        )
        df = report_frame(rows)
        df.insert(0, "setup", label)
        df.insert(1, "method", method)
        frames.append(df)

    table = pd.concat(frames, ignore_index=True)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_path, index=False)
    print(table.to_string(index=False, na_rep="", float_format=lambda v: f"{v:.2f}"))
    return table


if __name__ == "__main__":
    logging.basicConfig(stream=sys.stderr, format="%(message)s", level=logging.INFO)
    run_table()

import csv
import threading
from pathlib import Path


class TraceLogger:
    """
    CSV trace of solver progress for offline convergence analysis.
    One row per logged iteration or finished penalty round; starts running
    in parallel threads append to the same file.
    """

    def __init__(self, path: str = "output/solver_trace.csv") -> None:
        self._path = Path(path)
        self._lock = threading.Lock()
        self._fieldnames = [
            "event",
            "start",
            "round",
            "iter",
            "objective",
            "mu",
            "step",
        ]
        self._path.parent.mkdir(parents=True, exist_ok=True)
        if not self._path.exists():
            with self._path.open("w", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=self._fieldnames)
                writer.writeheader()

    @property
    def path(self) -> Path:
        return self._path

    def log(self, event: str, **fields) -> None:
        """
        event examples: "iter", "round_end"
        Unknown keys are dropped so callers can pass extra context freely.
        """
        row = {name: None for name in self._fieldnames}
        row["event"] = event
        row.update({k: v for k, v in fields.items() if k in self._fieldnames})
        with self._lock, self._path.open("a", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=self._fieldnames)
            writer.writerow(row)

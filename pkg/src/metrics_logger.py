"""Metrics logger: persists trajectories, diagnostics and deviation series to CSV."""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from src.metrics import ComplexPopulation, DeviationSeries
from src.propagator import Trajectory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.16e"


def safe_name(label: str) -> str:
    """File-name friendly method label: "aLgG(+)" -> "aLgG_plus"."""
    return label.replace("(+)", "_plus").replace("/", "_").replace(" ", "_")


def write_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    """UTF-8, comma separated, 17 significant digits, header row, no index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
    logger.debug("Wrote %s (%d rows)", path, len(df))
    return path


class MetricsLogger:
    """Writes every CSV of one run into `output_dir` and remembers what it wrote."""

    def __init__(self, output_dir: Union[str, Path], prefix: str = ""):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self.written: List[Path] = []

    def path_for(self, *parts: str) -> Path:
        stem = "_".join(p for p in (self.prefix,) + parts if p)
        return self.output_dir / f"{stem}.csv"

    def _write(self, df: pd.DataFrame, path: Path) -> Path:
        out = write_csv(df, path)
        self.written.append(out)
        return out

    def log_trajectories(
        self,
        trajectories: Dict[str, Trajectory],
        observables: Optional[Sequence[Tuple[int, int]]] = None,
        sweep_column: Optional[str] = None,
        sweep_values: Optional[Dict[str, float]] = None,
    ) -> List[Path]:
        """One trajectory CSV per method.

        With a sweep, keys of `trajectories` are "<method>@<value>" and all
        values of one method are stacked into a single CSV with a sweep column.
        """
        if sweep_column is None:
            return [
                self._write(traj.to_frame(observables), self.path_for(safe_name(method), "trajectory"))
                for method, traj in trajectories.items()
            ]
        grouped: Dict[str, List[pd.DataFrame]] = {}
        for key, traj in trajectories.items():
            method = key.split("@", 1)[0]
            frame = traj.to_frame(observables)
            frame.insert(0, sweep_column, sweep_values[key])
            grouped.setdefault(method, []).append(frame)
        return [
            self._write(pd.concat(frames, ignore_index=True), self.path_for(safe_name(method), "trajectory"))
            for method, frames in grouped.items()
        ]

    def log_diagnostics(self, rows: List[Dict[str, object]]) -> Optional[Path]:
        if not rows:
            return None
        return self._write(pd.DataFrame(rows), self.path_for("diagnostics"))

    def log_step_diagnostics(self, trajectories: Dict[str, Trajectory]) -> Optional[Path]:
        """Per-step trace, min eigenvalue and Hermiticity defect, stacked over methods."""
        frames = []
        for method, traj in trajectories.items():
            frame = traj.diagnostics_frame()
            frame.insert(0, "method", method)
            frames.append(frame)
        if not frames:
            return None
        return self._write(pd.concat(frames, ignore_index=True), self.path_for("step_diagnostics"))

    def log_deviations(self, series: Dict[str, DeviationSeries]) -> Optional[Path]:
        frames = []
        for method, dev in series.items():
            frame = dev.to_frame()
            frame.insert(0, "method", method)
            frames.append(frame)
        if not frames:
            return None
        return self._write(pd.concat(frames, ignore_index=True), self.path_for("deviation"))

    def log_complex_populations(self, populations: Dict[str, ComplexPopulation], level: int) -> List[Path]:
        return [
            self._write(pop.to_frame(), self.path_for(safe_name(key), f"phase_level{level}"))
            for key, pop in populations.items()
        ]

    def log_table(self, df: pd.DataFrame, name: str) -> Path:
        return self._write(df, self.path_for(name))

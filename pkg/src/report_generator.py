"""Report generator: ensemble aggregates, histograms and lifetime tables."""

from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from src.ensemble import EnsembleReport, eigenvalue_stats
from src.metrics_logger import write_csv
from src.scenario import HistogramConfig


class ReportGenerator:
    """Generates aggregated reports from an EnsembleReport."""

    def __init__(self, output_dir: Union[str, Path], prefix: str = "ensemble"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self.report_json_path = self.output_dir / f"{prefix}_report.json"
        self.aggregates_csv_path = self.output_dir / f"{prefix}_aggregates.csv"
        self.histograms_csv_path = self.output_dir / f"{prefix}_histograms.csv"
        self.eigen_summary_csv_path = self.output_dir / f"{prefix}_eigen_summary.csv"
        self.repair_csv_path = self.output_dir / f"{prefix}_repair.csv"

    def repair_table(self, report: EnsembleReport) -> pd.DataFrame:
        """Median ||K - K_+|| / ||K|| per method and factor."""
        rows = []
        for factor in report.factors:
            for method in report.methods:
                values = [c.repair_distance for c in report.cells(method, factor)
                          if c is not None and c.repair_distance is not None]
                rows.append(
                    {
                        "factor": factor,
                        "method": method,
                        "median_repair_distance": float(np.median(values)) if values else None,
                        "max_delta_herm_defect": max(
                            (c.delta_herm_defect for c in report.cells(method, factor)
                             if c is not None and c.delta_herm_defect is not None),
                            default=None,
                        ),
                    }
                )
        return pd.DataFrame(rows)

    def generate_report(
        self, report: EnsembleReport, hist: Optional[HistogramConfig] = None
    ) -> List[Path]:
        """Write report JSON, aggregates, histograms, eigenvalue summary and repair table."""
        self.report_json_path.write_text(report.to_json() + "\n", encoding="utf-8")
        stats = eigenvalue_stats(report, hist=hist)
        return [
            self.report_json_path,
            write_csv(report.aggregates(), self.aggregates_csv_path),
            write_csv(stats.histograms, self.histograms_csv_path),
            write_csv(stats.summary, self.eigen_summary_csv_path),
            write_csv(self.repair_table(report), self.repair_csv_path),
        ]


def lifetime_table(lifetimes: Dict[str, Dict[float, float]], reference: Dict[float, float]) -> pd.DataFrame:
    """Rows per (sweep value, method) with the 1/(2 pi J) reference lifetime alongside."""
    rows = []
    for value in sorted(reference):
        for method, by_value in lifetimes.items():
            tau = by_value.get(value, float("nan"))
            rows.append(
                {
                    "sweep_value": value,
                    "method": method,
                    "lifetime_inv_eV": tau,
                    "reference_inv_eV": reference[value],
                    "ratio_to_reference": tau / reference[value] if reference[value] else float("nan"),
                }
            )
    return pd.DataFrame(rows)

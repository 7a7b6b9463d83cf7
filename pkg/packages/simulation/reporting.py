"""
KDEXP - Simulation Metrics
Bias, MSE, empirical coverage, power / type-I rate and interval width per
(scenario, method) with Monte Carlo standard errors, and the report writers.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from packages.shared.utils import atomic_write_json, atomic_write_text

logger = logging.getLogger("KDEXP.Reporting")

SCENARIO_COLUMNS = ["scenario", "theta_true", "correlated", "skewed", "tau2"]
METRICS = ["bias", "mse", "ec", "power", "width"]
TABLE_METRICS = ["bias", "mse", "ec", "power"]
METRIC_LABELS = {"bias": "Bias", "mse": "MSE", "ec": "EC", "power": "Power", "width": "Width"}
FACTOR_COLUMNS = ["Theta", "Tau2", "Correlated", "Skewed"]


def replicate_metrics(rows: pd.DataFrame, theta_true: float) -> pd.DataFrame:
    """Natural-scale metrics and SEs for one method's successful replicates"""
    R = len(rows)
    estimate = rows["theta_hat"].to_numpy()
    lower, upper = rows["lower"].to_numpy(), rows["upper"].to_numpy()
    error = estimate - theta_true
    squared = error**2
    covered = (lower <= theta_true) & (theta_true <= upper)
    excludes_zero = (lower > 0.0) | (upper < 0.0)
    width = upper - lower

    def sd(x: np.ndarray) -> float:
        return float(np.std(x, ddof=1)) if R > 1 else 0.0

    def binomial_se(p: float) -> float:
        return float(np.sqrt(p * (1.0 - p) / R))

    ec, power = float(covered.mean()), float(excludes_zero.mean())
    values = {
        "bias": (float(error.mean()), sd(estimate) / np.sqrt(R)),
        "mse": (float(squared.mean()), sd(squared) / np.sqrt(R)),
        "ec": (ec, binomial_se(ec)),
        "power": (power, binomial_se(power)),
        "width": (float(width.mean()), sd(width) / np.sqrt(R)),
    }
    return pd.DataFrame(
        [{"metric": name, "value": value, "se": se, "replicates": R} for name, (value, se) in values.items()]
    )


@dataclass
class MetricsReport:
    """Raw per-replicate results and the metrics derived from them"""

    raw: pd.DataFrame
    metrics: pd.DataFrame

    @classmethod
    def from_raw(cls, raw: pd.DataFrame) -> "MetricsReport":
        frames = []
        ok = raw[~raw["failed"].astype(bool)]
        scenario_order = list(dict.fromkeys(raw["scenario"]))
        method_order = list(dict.fromkeys(raw["method"]))
        for scenario in scenario_order:
            block = ok[ok["scenario"] == scenario]
            if block.empty:
                continue
            factors = block.iloc[0][SCENARIO_COLUMNS].to_dict()
            for method in method_order:
                rows = block[block["method"] == method]
                if rows.empty:
                    continue
                frame = replicate_metrics(rows, float(factors["theta_true"]))
                for key, value in reversed(list(factors.items())):
                    frame.insert(0, key, value)
                frame.insert(len(SCENARIO_COLUMNS), "method", method)
                frames.append(frame)
        metrics = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
        return cls(raw=raw.reset_index(drop=True), metrics=metrics)

    @classmethod
    def combine(cls, reports: Sequence["MetricsReport"]) -> "MetricsReport":
        raw = pd.concat([report.raw for report in reports], ignore_index=True)
        metrics = pd.concat([report.metrics for report in reports], ignore_index=True)
        return cls(raw=raw, metrics=metrics)

    @property
    def methods(self) -> List[str]:
        return list(dict.fromkeys(self.metrics["method"]))

    @property
    def scenarios(self) -> List[str]:
        return list(dict.fromkeys(self.metrics["scenario"]))

    def value(self, scenario: str, method: str, metric: str, scaled: bool = True) -> float:
        row = self.metrics[
            (self.metrics["scenario"] == scenario)
            & (self.metrics["method"] == method)
            & (self.metrics["metric"] == metric)
        ]
        if row.empty:
            raise KeyError(f"no {metric} for {method} in {scenario}")
        return float(row["value"].iloc[0]) * (100.0 if scaled else 1.0)

    def raw_frame(self) -> pd.DataFrame:
        """Per-replicate theta-hat and interval endpoints on the natural scale"""
        return self.raw.copy()

    def to_table(self, include_width: bool = False) -> pd.DataFrame:
        """Metric rows by scenario, one column per method, values x100, plus SE-range rows

        Each metric row also carries the cell factors: Theta and Tau2 as numbers,
        Correlated and Skewed as Yes/No. Power rows of theta = 0 cells are
        labelled Type I. SE-range rows leave the factor columns blank and give
        the min-max standard error of that metric per method across scenarios.
        """
        metrics = TABLE_METRICS + (["width"] if include_width else [])
        scaled = self.metrics.assign(value=self.metrics["value"] * 100.0, se=self.metrics["se"] * 100.0)
        rows = []
        for metric in metrics:
            block = scaled[scaled["metric"] == metric]
            for scenario in self.scenarios:
                cell = block[block["scenario"] == scenario]
                if cell.empty:
                    continue
                first = cell.iloc[0]
                label = METRIC_LABELS[metric]
                if metric == "power" and float(first["theta_true"]) == 0.0:
                    label = "Type I"
                row = {
                    "Metric": label,
                    "Theta": first["theta_true"],
                    "Tau2": first["tau2"],
                    "Correlated": "Yes" if first["correlated"] else "No",
                    "Skewed": "Yes" if first["skewed"] else "No",
                }
                row.update({method: round(value, 2) for method, value in zip(cell["method"], cell["value"])})
                rows.append(row)
            if not block.empty:
                row = {"Metric": f"{METRIC_LABELS[metric]} SE range"}
                row.update(dict.fromkeys(FACTOR_COLUMNS, ""))
                for method, group in block.groupby("method", sort=False):
                    row[method] = f"{group['se'].min():.2f}-{group['se'].max():.2f}"
                rows.append(row)
        return pd.DataFrame(rows, columns=["Metric"] + FACTOR_COLUMNS + self.methods)


def write_report(report: MetricsReport, output_dir: Union[str, Path], include_width: bool = False) -> List[Path]:
    """Table-shaped CSV (x100), long metrics CSV and raw per-replicate JSON"""
    output_dir = Path(output_dir)
    paths = [
        atomic_write_text(
            output_dir / "metrics_table.csv",
            report.to_table(include_width=include_width).to_csv(index=False, lineterminator="\n"),
        ),
        atomic_write_text(
            output_dir / "metrics_long.csv",
            report.metrics.to_csv(index=False, float_format="%.17g", lineterminator="\n"),
        ),
        atomic_write_json(output_dir / "replicates.json", report.raw.to_dict(orient="records")),
    ]
    logger.info(f"Wrote simulation report to {output_dir}")
    return paths

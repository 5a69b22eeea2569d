"""
Result formatter module for the wireless DSGD simulator.
Renders schedules as JSON and experiment summaries as console tables.
"""

import json
import math
from datetime import datetime
from typing import Any, Dict, List, Optional

import pandas as pd
import pytz

from src.config import TIMEZONE
from src.scheduling import Schedule

SEPARATOR = "━" * 72


class ResultFormatter:
    """Formats schedules and summary tables for files and the console."""

    @staticmethod
    def format_number(value: Optional[float], digits: int = 2) -> str:
        """Fixed-point number, or `-` for missing values."""
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return "-"
        return f"{value:.{digits}f}"

    @staticmethod
    def schedule_to_dict(schedule: Schedule) -> Dict[str, Any]:
        """Slot -> participants; P2P slots list links, MAC slots map transmitter -> receiver."""
        return schedule.to_dict()

    @staticmethod
    def schedule_to_json(schedule: Schedule, indent: Optional[int] = 2) -> str:
        return json.dumps(ResultFormatter.schedule_to_dict(schedule), indent=indent)

    @staticmethod
    def summary_lines(summary: pd.DataFrame, metric_name: str = "metric") -> List[str]:
        """One line per scenario row: sigma, tau, scheme, T mean/std and metric mean/std."""
        fmt = ResultFormatter.format_number
        lines = [
            f"{'sigma':>6} {'tau/sigma':>9} {'scheme':>6} {'ok':>4} {'fail':>4} "
            f"{'T_mean':>7} {'T_std':>6} {metric_name + '_final':>16} {metric_name + '_best':>16}"
        ]
        for row in summary.itertuples(index=False):
            final = f"{fmt(row.acc_final_mean, 4)}±{fmt(row.acc_final_std, 4)}"
            lines.append(
                f"{row.sigma:>6g} {row.tau_factor:>9g} {row.scheme:>6} {row.trials_ok:>4d} {row.trials_failed:>4d} "
                f"{fmt(row.T_mean):>7} {fmt(row.T_std):>6} {final:>16} {fmt(row.acc_best_mean, 4):>16}"
            )
        return lines

    @staticmethod
    def create_report(summary: pd.DataFrame, metric_name: str = "metric", paths: Optional[Dict[str, str]] = None) -> str:
        """Console report: dated header, summary table and the written files."""
        now = datetime.now(pytz.timezone(TIMEZONE))
        parts = [
            f"OTA-DSGD experiment | {now.strftime('%b %d, %Y %H:%M %Z')}",
            SEPARATOR,
            *ResultFormatter.summary_lines(summary, metric_name),
            SEPARATOR,
        ]
        if paths:
            summary_path = paths.get("summary")
            if summary_path:
                parts.append(f"summary: {summary_path}")
            traces = sum(1 for key in paths if key.startswith("trace:"))
            parts.append(f"traces: {traces} files")
            if "meta" in paths:
                parts.append(f"meta: {paths['meta']}")
        return "\n".join(parts)

"""Scenario-driven batch runner and its command line."""

from .cli import main
from .config import ConfigError, ScenarioConfig, load_scenario, parse_scenario
from .csvio import emit_csv, parse_csv
from .report import format_report, gain_ratios, series_medians
from .sweep import (Cell, CellFilter, ResultRow, aggregate_cfsdm, cfsdm_partition, run_sweep,
                    snr_b_transform)

__all__ = ["main", "ConfigError", "ScenarioConfig", "load_scenario", "parse_scenario",
           "emit_csv", "parse_csv", "format_report", "gain_ratios", "series_medians", "Cell",
           "CellFilter", "ResultRow", "aggregate_cfsdm", "cfsdm_partition", "run_sweep",
           "snr_b_transform"]

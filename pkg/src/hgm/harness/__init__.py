"""Configuration, staged training, evaluation, the flat comparison and export."""

from .compare import compare_flat
from .config import RunConfig, config_hash, load_config, physics_hash
from .evaluate import build_report, evaluate, report_from_log
from .export import export_run
from .flat import FlatBaselineConfig, FlatEnv, match_flat_config
from .pipeline import pipeline_train

__all__ = [
    "compare_flat", "RunConfig", "config_hash", "load_config", "physics_hash", "build_report", "evaluate",
    "report_from_log", "export_run", "FlatBaselineConfig", "FlatEnv", "match_flat_config", "pipeline_train",
]

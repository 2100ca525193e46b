"""Configuration, training runs, sweeps, reports, checkpoints and the CLI."""
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Diagnostics, RunConfig, parse_variant
from .reports import emit_reports, load_records
from .runner import CellSummary, RunRecord, aggregate, sweep, train, train_model

__all__ = [
    "CellSummary", "Diagnostics", "RunConfig", "RunRecord", "aggregate", "emit_reports", "load_checkpoint",
    "load_records", "parse_variant", "save_checkpoint", "sweep", "train", "train_model",
]

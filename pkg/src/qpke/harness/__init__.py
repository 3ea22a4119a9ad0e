from .cli import main
from .report import summary_text, write_ledger, write_session_outputs
from .sweep import SweepSpec, load_sweep, run_sweep, write_sweep_csv

__all__ = ["SweepSpec", "load_sweep", "main", "run_sweep", "summary_text", "write_ledger",
           "write_session_outputs", "write_sweep_csv"]

from .config import ExperimentConfig, build_config, load_config
from .output import emit_csv, emit_plot, read_csv
from .sweep import ResultRow, run_sweep

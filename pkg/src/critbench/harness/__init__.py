from .certify import CertReport, certify_budget, decrease_audit, make_budget
from .config import ConfigError, ExperimentConfig, from_dict, load
from .grid import GridError, GridResult, GridSpec, grid_search, select_best
from .io import emit_plots, read_trace, write_sidecar, write_trace
from .studies import compare, observations, run_grid, run_seeds, xi_sweep

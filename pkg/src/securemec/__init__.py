"""Energy-efficient secure offloading for RIS-assisted NOMA mobile edge computing."""

from .bcd_perfect import BcdOptions, BcdTrace, PerfectState
from .bcd_perfect import run as run_perfect
from .bcd_robust import RobustState, run_robust
from .config import Geometry, SystemConfig
from .experiments import (ConfigError, RunRecord, ScenarioConfig, compare_baselines, load_config,
                          run_scenario, sweep, write_records)
from .metrics import EveCsi, evaluate_solution
from .scenario import ChannelSet, RngStreams, sample_channels, sample_geometry

__all__ = ["BcdOptions", "BcdTrace", "ChannelSet", "ConfigError", "EveCsi", "Geometry",
           "PerfectState", "RngStreams", "RobustState", "RunRecord", "ScenarioConfig",
           "SystemConfig", "compare_baselines", "evaluate_solution", "load_config", "run_perfect",
           "run_robust", "run_scenario", "sample_channels", "sample_geometry", "sweep",
           "write_records"]
__version__ = "0.1.0"

"""Discrete-event simulation of handover signalling and switch forwarding."""
from .config import MODES, SMARTHO, TRADITIONAL, ConfigError, ScenarioConfig, load_config
from .engine import ClockRegression, Engine, Event
from .forwarding import ForwardingConfig, run_forwarding_experiment, run_forwarding_grid
from .handover import HandoverSim, HoMessage, calibrate_drop_threshold, run_scenario
from .metrics import ForwardingRecord, HoRecord, MetricsReport, MissingTimestamp, measure_ho
from .router import Router
from .traffic import EXPONENTIAL_HO, POISSON_USER, generate_traffic

__all__ = [
    "MODES", "SMARTHO", "TRADITIONAL", "ConfigError", "ScenarioConfig", "load_config",
    "ClockRegression", "Engine", "Event",
    "ForwardingConfig", "run_forwarding_experiment", "run_forwarding_grid",
    "HandoverSim", "HoMessage", "calibrate_drop_threshold", "run_scenario",
    "ForwardingRecord", "HoRecord", "MetricsReport", "MissingTimestamp", "measure_ho",
    "Router", "EXPONENTIAL_HO", "POISSON_USER", "generate_traffic",
]

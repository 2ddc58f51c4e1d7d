from .decay import DecayFit, fit_decay_series
from .moduli import PillowcasePoint, Stratum
from .flow import FlowConfig, Trajectory
from .kuranishi import LowModeSpace, KuranishiSolution
from .lojasiewicz import LojConstants, TestFunction

__all__ = [
    "DecayFit", "fit_decay_series",
    "PillowcasePoint", "Stratum",
    "FlowConfig", "Trajectory",
    "LowModeSpace", "KuranishiSolution",
    "LojConstants", "TestFunction",
]

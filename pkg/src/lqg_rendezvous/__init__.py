"""Distributed LQG rendezvous of mobile robots under localization uncertainty.

Submodules
----------
graph       communication topology, Laplacians, Kronecker products
dynamics    truth propagation, sensors, differential-drive conversion
estimation  per-axis Kalman filtering
control     Riccati synthesis and the neighbor-difference control law
analysis    costs, Lyapunov sequence, noise floor, mean-square bound
sim         closed-loop episodes and Monte Carlo batches
config      scenario files and presets
cli         command-line entry point
oracles     reference computations for verification
"""
from .config import load_scenario
from .sim import ScenarioConfig, run_episode, run_monte_carlo

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "load_scenario", "run_episode", "run_monte_carlo", "__version__"]

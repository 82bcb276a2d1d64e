"""Vanishing-viscosity approximation of rate-independent systems with certified limits."""
from .bvload import BVLoad, PiecewiseLinearCurve, kurzweil_bv_dg, kurzweil_cont_dstep
from .incremental import DiscreteTrajectory, Partition, incremental_step, solve_trajectory
from .model import Dissipation, DoubleWell, Problem, Quartic, SemilinearEnergy, SpdOperator, ZeroTerm
from .scenarios import Scenario, get_scenario
from .viscosity import ParameterizedCurve, SweepResult, reparameterize, sweep

__all__ = [
    "BVLoad", "PiecewiseLinearCurve", "kurzweil_bv_dg", "kurzweil_cont_dstep",
    "DiscreteTrajectory", "Partition", "incremental_step", "solve_trajectory",
    "Dissipation", "DoubleWell", "Problem", "Quartic", "SemilinearEnergy", "SpdOperator", "ZeroTerm",
    "Scenario", "get_scenario", "ParameterizedCurve", "SweepResult", "reparameterize", "sweep",
]

"""Optimal output-feedback synthesis for N-player triangular LQG problems."""

from trilqg.coupled_riccati import GainSet, solve_coupled
from trilqg.matops import StateSpace
from trilqg.plant import TriangularPlant, load, save, validate
from trilqg.structure import Partition
from trilqg.synthesis import build_controller, closed_loop, optimal_cost

__all__ = [
    "GainSet",
    "Partition",
    "StateSpace",
    "TriangularPlant",
    "build_controller",
    "closed_loop",
    "load",
    "optimal_cost",
    "save",
    "solve_coupled",
    "validate",
]

"""Simulation and verification toolkit for zero-sum games on backward SDEs
driven by Brownian motion and Teugel martingales of a Levy process."""

from .levy import Atoms, Exponential, LevyTriplet, NoJumps, effective_order, gram_matrix, moment
from .paths import PathBundle, TimeGrid, inject_paths, simulate
from .teugel import OrthonormalBasis, bracket_test, increments, orthonormalize
from .info import InfoStructure, NoiseFeatures, RegressionConfig, cond_exp, is_adapted
from .bsde import CostSpec, DriverSpec, TerminalSpec, evaluate_cost, residual_audit, solve_backward
from .game import (HamiltonianSpec, LQSpec, hamiltonian, hamiltonian_gradients, lq_optimal_controls,
                   lq_solve, solve_adjoint_forward, verify_minimax, verify_saddle, verify_stationarity)

__version__ = "0.1.0"

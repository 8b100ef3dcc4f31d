"""Informed-policy synthesis for nonlinear discrete-time systems.

Pipeline: fit a linear over-approximation ``f(x, u) in A x + B u + E`` on a
sampled domain, synthesize a policy that also reads the current
approximation error via system level synthesis, and recover admissible
inputs online by solving the policy's fixed-point equation.
"""

from ._version import __version__
from .concretize import ConcretizationResult, Method, StepAffinePolicy, concretize_affine, concretize_banach, \
    concretize_shared, dispatch_concretize
from .config import ExperimentConfig, load_system_config
from .errors import *  # noqa: F401,F403
from .expr import parse_expression
from .lp import LinearProgram, LpOptions, LpSolution, LpStatus, solve_lp
from .model import Box, DynamicalSystem, LinearOverApprox, Polytope, Structure, euler_step
from .overapprox import FitReport, compute_overapprox, fit_affine_component, uniform_grid
from .simulate import Trajectory, rollout, verify_trajectory
from .sls import InformedPolicy, SynthesisSpec, build_augmented, build_sls_lp, synthesize

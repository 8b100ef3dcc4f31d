"""Runtime concretization: find ``u = m + Ke (f(x, u) - A x - B u)``.

Three regimes: closed form when the error does not depend on ``u``, a square
linear solve (with an LP fallback) for input-affine dynamics, and Banach
iteration for general dynamics under a small-gain condition.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConstraintViolationError, DivergenceError, NoSolutionError
from .lp import EQ, LinearProgram, LpOptions, LpStatus, solve_lp
from .model import SIMULATION_TOL, Box, DynamicalSystem, LinearOverApprox, Structure, box_contains, \
    eval_error, inf_norm

log = logging.getLogger(__name__)

BANACH_TOL = 1e-10
BANACH_MAX_ITER = 100


class Method(enum.Enum):
    SHARED = "SharedClosedForm"
    AFFINE_SOLVE = "AffineLinearSolve"
    AFFINE_LP = "AffineFeasibilityLP"
    BANACH = "BanachIteration"


@dataclass(frozen=True)
class StepAffinePolicy:
    """Policy at one time step, ``pi(x, e) = m + Ke e`` (history and state folded into ``m``)."""

    m: np.ndarray
    Ke: np.ndarray

    def __call__(self, e):
        return self.m + self.Ke @ np.asarray(e, dtype=float)


@dataclass(frozen=True)
class ConcretizationResult:
    u: np.ndarray
    method: Method
    iterations: int
    residual: float
    in_U: bool


def fixed_point_residual(p: StepAffinePolicy, x, sys: DynamicalSystem, oa: LinearOverApprox, u) -> float:
    """``||u - pi(x, f(x, u) - f_hat(x, u))||_inf``, evaluated from scratch."""
    u = np.asarray(u, dtype=float)
    return float(np.max(np.abs(u - p(eval_error(sys, oa, x, u))), initial=0.0))


def _result(p, x, sys, oa, u, method, iterations, U, tol):
    in_U = True if U is None else box_contains(U, u, tol)
    return ConcretizationResult(u, method, iterations, fixed_point_residual(p, x, sys, oa, u), in_U)


def concretize_shared(p: StepAffinePolicy, x, sys: DynamicalSystem, oa: LinearOverApprox,
                      U: Optional[Box] = None, tol: float = SIMULATION_TOL) -> ConcretizationResult:
    """Closed form ``u = m + Ke (f_x(x) - A x)`` when f and f_hat share ``B u``."""
    x = np.asarray(x, dtype=float)
    e = eval_error(sys, oa, x, np.zeros(sys.n_u))
    u = p(e)
    res = _result(p, x, sys, oa, u, Method.SHARED, 0, U, tol)
    if not res.in_U:
        raise ConstraintViolationError(f"concretized input {u} lies outside U", u)
    return res


def concretize_affine(p: StepAffinePolicy, x, sys: DynamicalSystem, oa: LinearOverApprox,
                      U: Optional[Box] = None, tol: float = SIMULATION_TOL,
                      lp_opts: Optional[LpOptions] = None, method: str = "auto") -> ConcretizationResult:
    """Solve ``(I - Ke dfu) u = m + Ke dfx`` directly, or as an LP over U when that fails.

    ``method`` may force one path: ``"solve"`` or ``"lp"``.
    """
    if method not in ("auto", "solve", "lp"):
        raise ValueError(f"unknown method {method!r}")
    x = np.asarray(x, dtype=float)
    dfx = sys.f_x(x) - oa.A @ x
    dfu = sys.f_u(x) - oa.B
    M = np.eye(sys.n_u) - p.Ke @ dfu
    rhs = p.m + p.Ke @ dfx
    reason = "linear solve skipped"
    if method != "lp":
        try:
            u = np.linalg.solve(M, rhs)
            if np.all(np.isfinite(u)) and (U is None or box_contains(U, u, tol)):
                return _result(p, x, sys, oa, u, Method.AFFINE_SOLVE, 0, U, tol)
            reason = "solution outside U"
        except np.linalg.LinAlgError:
            reason = "singular fixed-point matrix"
        if method == "solve":
            raise NoSolutionError(reason)
    if U is None:
        raise NoSolutionError(f"{reason} and no input set for the LP fallback")
    lp = LinearProgram(np.zeros(sys.n_u), sp.csr_matrix(M), np.full(sys.n_u, EQ), rhs, U.lo, U.hi)
    sol = solve_lp(lp, lp_opts or LpOptions(feas_tol=1e-10))
    if sol.status is LpStatus.OPTIMAL:
        return _result(p, x, sys, oa, sol.x, Method.AFFINE_LP, sol.iterations, U, tol)
    raise NoSolutionError(
        f"{reason}; feasibility LP is {sol.status.value}. The policy does not map into U at this "
        "state, so the error set or the synthesized gains do not match this system")


def check_contraction(p: StepAffinePolicy, sys: DynamicalSystem, oa: LinearOverApprox):
    """Second small-gain condition ``||Ke|| < 1 / (L_f(x,.) + ||B||)``; returns ``(ok, margin)``."""
    denom = sys.lip_u + inf_norm(oa.B)
    bound = np.inf if denom == 0 else 1.0 / denom
    gain = inf_norm(p.Ke)
    return bool(gain < bound), float(bound - gain)


def concretize_banach(p: StepAffinePolicy, x, sys: DynamicalSystem, oa: LinearOverApprox, u0=None,
                      tol: float = BANACH_TOL, max_iter: int = BANACH_MAX_ITER,
                      U: Optional[Box] = None, u_tol: float = SIMULATION_TOL) -> ConcretizationResult:
    """Iterate ``u <- m + Ke (f(x, u) - A x - B u)`` until the step is at most ``tol``.

    Iterates are not projected onto U; membership is reported for the final one.
    """
    x = np.asarray(x, dtype=float)
    ok, margin = check_contraction(p, sys, oa)
    if not ok:
        warnings.warn(f"contraction condition fails (margin {margin:.3g}); iterating anyway", RuntimeWarning)
    u = np.zeros(sys.n_u) if u0 is None else np.asarray(u0, dtype=float).copy()
    trace = []
    for k in range(1, max_iter + 2):
        nxt = p(eval_error(sys, oa, x, u))
        step = float(np.max(np.abs(nxt - u), initial=0.0))
        trace.append(step)
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError("non-finite Banach iterate", trace)
        u = nxt
        if step <= tol:
            # the final evaluation only confirms convergence of the previous iterate
            return _result(p, x, sys, oa, u, Method.BANACH, max(k - 1, 1), U, u_tol)
    raise DivergenceError(f"no convergence in {max_iter} iterations (last step {trace[-1]:.3e})", trace)


@dataclass(frozen=True)
class StepRecord:
    x: np.ndarray
    u: np.ndarray
    e: np.ndarray


def step_policy(policy, t: int, history: Sequence[StepRecord], x) -> StepAffinePolicy:
    """Fold the memory terms and the current state into ``m``; ``Ke`` is the diagonal error gain."""
    if len(history) != t:
        raise ValueError(f"history must hold {t} steps, got {len(history)}")
    m = policy.Kx(t, t) @ np.asarray(x, dtype=float)
    for tau, rec in enumerate(history):
        m = m + policy.Kx(t, tau) @ rec.x
        if policy.informed:
            m = m + policy.Ke(t, tau) @ rec.e
    return StepAffinePolicy(m, policy.Ke(t, t))


def dispatch_concretize(policy, t: int, history: Sequence[StepRecord], x, sys: DynamicalSystem,
                        oa: LinearOverApprox, tol: float = BANACH_TOL, max_iter: int = BANACH_MAX_ITER,
                        u_tol: float = SIMULATION_TOL) -> ConcretizationResult:
    """Concretize the memoryful linear policy at step ``t`` using the regime matching ``sys``."""
    p = step_policy(policy, t, history, x)
    U = sys.U
    if not np.any(p.Ke) or sys.structure is Structure.SHARED:
        e = eval_error(sys, oa, x, np.zeros(sys.n_u)) if np.any(p.Ke) else np.zeros(sys.n_x)
        u = p(e)
        return _result(p, x, sys, oa, u, Method.SHARED, 0, U, u_tol)
    if sys.structure is Structure.AFFINE:
        return concretize_affine(p, x, sys, oa, U, u_tol)
    u0 = history[-1].u if history else np.zeros(sys.n_u)
    if U is not None:
        u0 = np.clip(u0, U.lo, U.hi)
    return concretize_banach(p, x, sys, oa, u0, tol, max_iter, U, u_tol)

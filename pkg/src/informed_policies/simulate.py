"""Closed-loop rollouts on the true dynamics and on the linear over-approximation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .concretize import ConcretizationResult, StepRecord, dispatch_concretize
from .errors import ConcretizationError, InformedPolicyError
from .model import SIMULATION_TOL, Box, DynamicalSystem, LinearOverApprox, box_contains, euler_step, \
    eval_error
from .sls import AugmentedSystem, InformedPolicy, SynthesisSpec, disturbance_stack

log = logging.getLogger(__name__)


@dataclass
class Trajectory:
    states: np.ndarray  # (T+1, n_x)
    inputs: np.ndarray  # (T, n_u)
    errors: np.ndarray  # (T, n_x)
    results: List[Optional[ConcretizationResult]] = field(default_factory=list)
    u_final: Optional[np.ndarray] = None  # u_T, evaluated but never applied
    e_final: Optional[np.ndarray] = None
    violations: List[str] = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1

    def terminal(self, component: int) -> float:
        """Terminal value of the 1-based state ``component``."""
        return float(self.states[-1, component - 1])


def rollout(sys: DynamicalSystem, oa: LinearOverApprox, policy: InformedPolicy, x0, T: Optional[int] = None,
            tol: float = SIMULATION_TOL) -> Trajectory:
    """Apply the policy to the true dynamics, concretizing the input at every step.

    Constraint violations are logged and the rollout continues; a failed
    concretization stops it with the partial trajectory attached to the error.
    """
    T = policy.T if T is None else T
    if T > policy.T:
        raise ValueError(f"policy horizon {policy.T} is shorter than {T}")
    x = np.asarray(x0, dtype=float)
    if not box_contains(sys.X, x, tol):
        raise ValueError(f"initial state {x} lies outside X")
    states, inputs, errors, results, history = [x], [], [], [], []
    viol = []
    for t in range(T):
        try:
            res = dispatch_concretize(policy, t, history, x, sys, oa, u_tol=tol)
        except ConcretizationError as exc:
            exc.trajectory = Trajectory(np.array(states), np.array(inputs).reshape(-1, sys.n_u),
                                        np.array(errors).reshape(-1, sys.n_x), results, violations=viol)
            raise
        u = res.u
        e = eval_error(sys, oa, x, u)
        if sys.U is not None and not box_contains(sys.U, u, tol):
            viol.append(f"t={t}: input {u.tolist()} outside U")
        if not box_contains(oa.err_box, e, tol):
            viol.append(f"t={t}: error {e.tolist()} outside E")
        history.append(StepRecord(x, u, e))
        x = euler_step(sys, x, u)
        if not box_contains(sys.X, x, tol):
            viol.append(f"t={t + 1}: state {x.tolist()} outside X")
        states.append(x)
        inputs.append(u)
        errors.append(e)
        results.append(res)
    traj = Trajectory(np.array(states), np.array(inputs).reshape(T, sys.n_u),
                      np.array(errors).reshape(T, sys.n_x), results, violations=viol)
    if T == policy.T and sys.n_u:
        try:
            res = dispatch_concretize(policy, T, history, x, sys, oa, u_tol=tol)
            traj.u_final = res.u
            traj.e_final = eval_error(sys, oa, x, res.u)
            traj.results.append(res)
        except InformedPolicyError as exc:
            log.info("u_T not evaluated: %s", exc)
    return traj


@dataclass
class VerificationReport:
    state_violations: List[int]
    input_violations: List[int]
    error_violations: List[int]
    terminal_value: float
    alpha: float
    terminal_ok: bool
    max_residual: float

    @property
    def passed(self) -> bool:
        return (self.terminal_ok and not self.state_violations and not self.input_violations
                and not self.error_violations)

    def summary(self) -> str:
        return (f"X violations {len(self.state_violations)}, U violations {len(self.input_violations)}, "
                f"E violations {len(self.error_violations)}, terminal {self.terminal_value:.6g} vs alpha "
                f"{self.alpha:.6g} ({'ok' if self.terminal_ok else 'FAIL'}), "
                f"max fixed-point residual {self.max_residual:.2e}")


def verify_trajectory(traj: Trajectory, X: Box, U: Optional[Box], E: Optional[Box], alpha: float,
                      objective_component: int, tol: float = SIMULATION_TOL,
                      alpha_tol: float = 1e-6) -> VerificationReport:
    xs = [t for t, x in enumerate(traj.states) if not box_contains(X, x, tol)]
    us = [t for t, u in enumerate(traj.inputs) if U is not None and not box_contains(U, u, tol)]
    es = [t for t, e in enumerate(traj.errors) if E is not None and not box_contains(E, e, tol)]
    term = traj.terminal(objective_component)
    res = [r.residual for r in traj.results[: traj.T] if r is not None]
    return VerificationReport(xs, us, es, term, alpha, term >= alpha - alpha_tol, max(res, default=0.0))


@dataclass
class LinearTrajectory:
    states: np.ndarray  # (T+1, n_x)
    inputs: np.ndarray  # (T, n_u)


def adversarial_error_rollout(aug: AugmentedSystem, policy: InformedPolicy, x0, errors) -> LinearTrajectory:
    """Run the policy on ``x+ = A x + B u + e`` with a prescribed error sequence.

    ``errors`` holds ``e_0 .. e_{T-1}`` (an extra trailing row is accepted and
    ignored); in the informed case ``u_t`` sees ``e_t`` before it is applied.
    """
    oa, T = aug.oa, policy.T
    errors = np.asarray(errors, dtype=float).reshape(-1, aug.n_x)[:T]
    if errors.shape[0] != T:
        raise ValueError(f"need {T} error vectors")
    x = np.asarray(x0, dtype=float)
    zs, states, inputs = [], [x], []
    for t in range(T):
        z = np.concatenate([x, errors[t]]) if aug.informed else x
        zs.append(z)
        u = sum(policy.block(t, tau) @ zs[tau] for tau in range(t + 1))
        x = oa.A @ x + oa.B @ u + errors[t]
        states.append(x)
        inputs.append(u)
    return LinearTrajectory(np.array(states), np.array(inputs).reshape(T, aug.n_u))


def stack_to_errors(aug: AugmentedSystem, T: int, w) -> np.ndarray:
    """Error sequence ``e_0 .. e_{T-1}`` encoded in a disturbance-stack vector."""
    w = np.asarray(w, dtype=float)
    n = aug.n_x
    if aug.informed:
        seq = np.concatenate([w[n:2 * n], w[2 * n:]]).reshape(-1, n)
    else:
        seq = w[n:].reshape(-1, n)
    return seq[:T]


def worst_case_terminal_errors(spec: SynthesisSpec, policy: InformedPolicy) -> np.ndarray:
    """Error sequence minimizing the terminal objective component (a box vertex)."""
    if policy.responses is None:
        raise ValueError("policy carries no system responses")
    aug, T = spec.aug, spec.T
    n_z = aug.n_z
    i = spec.objective_component - 1
    row = policy.responses.Phi_z[T * n_z + i]
    coeffs = [row[:n_z]] + [row[tau * n_z:(tau + 1) * n_z] @ aug.D_tilde for tau in range(1, T + 1)]
    coeffs = np.concatenate(coeffs)
    c, r = disturbance_stack(spec)
    return stack_to_errors(aug, T, c - np.sign(coeffs) * r)


# -- CSV ------------------------------------------------------------------------

def _g(v) -> str:
    return f"{float(v):.17g}"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    n_x, n_u = traj.states.shape[1], traj.inputs.shape[1]
    header = (["t"] + [f"x{i + 1}" for i in range(n_x)] + [f"u{j + 1}" for j in range(n_u)]
              + [f"e{i + 1}" for i in range(n_x)] + ["method", "iterations", "residual"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(traj.T + 1):
            row = [t] + [_g(v) for v in traj.states[t]]
            if t < traj.T:
                u, e = traj.inputs[t], traj.errors[t]
            else:
                u, e = traj.u_final, traj.e_final
            res = traj.results[t] if t < len(traj.results) else None
            row += [_g(v) for v in u] if u is not None else [""] * n_u
            row += [_g(v) for v in e] if e is not None else [""] * n_x
            row += [res.method.value, res.iterations, _g(res.residual)] if res is not None else ["", "", ""]
            w.writerow(row)


def read_trajectory_csv(path) -> dict:
    """Columns of a trajectory CSV as float arrays (blank cells become NaN)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no trajectory rows")
    header, body = rows[0], rows[1:]
    out = {}
    for k, name in enumerate(header):
        col = [r[k] for r in body]
        if name == "method":
            out[name] = col
        else:
            out[name] = np.array([float(v) if v != "" else np.nan for v in col])
    out["n_x"] = sum(1 for h in header if h.startswith("x"))
    out["states"] = np.column_stack([out[f"x{i + 1}"] for i in range(out["n_x"])])
    return out

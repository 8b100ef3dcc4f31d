"""Finite-horizon system level synthesis of informed and uninformed policies.

The augmented state is ``z = (x, e)`` with ``z+ = At z + Bt u + Dt w``; the
uninformed variant uses ``(A, B, I)`` directly. Decision variables are the
block-lower-triangular responses ``Phi_z``, ``Phi_u`` mapping the disturbance
stack ``(z_0, w_0, ..., w_{T-1})`` to states and inputs. Robust box
constraints over that stack reduce to support functions with absolute-value
epigraph variables.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleSynthesisError, LPError
from .lp import EQ, LE, LinearProgram, LpOptions, LpStatus, solve_lp
from .model import Box, LinearOverApprox, inf_norm

log = logging.getLogger(__name__)

GAMMA_MARGIN = 1e-5
ACHIEVABILITY_TOL = 1e-8


@dataclass(frozen=True)
class AugmentedSystem:
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    D_tilde: np.ndarray
    informed: bool
    oa: LinearOverApprox

    @property
    def n_x(self) -> int:
        return self.oa.n_x

    @property
    def n_z(self) -> int:
        return self.A_tilde.shape[0]

    @property
    def n_u(self) -> int:
        return self.B_tilde.shape[1]

    @property
    def n_w(self) -> int:
        return self.D_tilde.shape[1]


def build_augmented(oa: LinearOverApprox, informed: bool = True) -> AugmentedSystem:
    n, m = oa.n_x, oa.n_u
    if not informed:
        return AugmentedSystem(oa.A.copy(), oa.B.copy(), np.eye(n), False, oa)
    At = np.block([[oa.A, np.eye(n)], [np.zeros((n, n)), np.zeros((n, n))]])
    Bt = np.vstack([oa.B, np.zeros((n, m))])
    Dt = np.vstack([np.zeros((n, n)), np.eye(n)])
    return AugmentedSystem(At, Bt, Dt, True, oa)


@dataclass
class SynthesisSpec:
    aug: AugmentedSystem
    X: Box
    U: Box
    x0: np.ndarray
    E: Box
    T: int
    objective_component: int = 1  # 1-based
    gamma: Optional[float] = None
    lp_opts: LpOptions = field(default_factory=LpOptions)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if not 1 <= self.objective_component <= self.aug.n_x:
            raise ValueError("objective_component must be in 1..n_x")
        if self.gamma is not None and not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")
        if self.T < 0:
            raise ValueError("horizon must be nonnegative")


def auto_gamma(lip_u: float, B) -> float:
    """Small-gain bound ``1 / (L_f(x,.) + ||B||)`` on the error gain."""
    return 1.0 / (lip_u + inf_norm(B))


def disturbance_stack(spec: SynthesisSpec):
    """Centre and half-width of the box containing ``(z_0, w_0, ..., w_{T-1})``."""
    aug, n_x = spec.aug, spec.aug.n_x
    c, r = [spec.x0], [np.zeros(n_x)]
    if aug.informed:
        c.append(spec.E.center)
        r.append(spec.E.halfwidth)
    c += [spec.E.center] * spec.T
    r += [spec.E.halfwidth] * spec.T
    return np.concatenate(c), np.concatenate(r)


class _Builder:
    """Accumulates sparse rows ``sum coef * var (<= | =) rhs``."""

    def __init__(self):
        self.n = 0
        self.names = []
        self.ri, self.ci, self.vals = [], [], []
        self.senses, self.rhs, self.row_names = [], [], []

    def new_vars(self, count, prefix):
        ids = np.arange(self.n, self.n + count)
        self.n += count
        self.names += [f"{prefix}[{k}]" for k in range(count)]
        return ids

    def row(self, terms, sense, rhs, name):
        i = len(self.rhs)
        for v, c in terms:
            if c != 0:
                self.ri.append(i)
                self.ci.append(v)
                self.vals.append(c)
        self.senses.append(sense)
        self.rhs.append(rhs)
        self.row_names.append(name)


def _slot_terms(index, t, spec, row):
    """Linear expressions (per stack slot) of one output row at time ``t``.

    ``index`` maps (t, tau) to the var-id block of Phi_z or Phi_u.
    """
    aug = spec.aug
    out = []
    blk = index[(t, 0)]
    for j in range(aug.n_z):
        out.append([(blk[row, j], 1.0)])
    Dt = aug.D_tilde
    for tau in range(1, spec.T + 1):
        if tau > t:
            for _ in range(aug.n_w):
                out.append([])
            continue
        blk = index[(t, tau)]
        for j in range(aug.n_w):
            out.append([(blk[row, k], Dt[k, j]) for k in np.flatnonzero(Dt[:, j])])
    return out


def build_sls_lp(spec: SynthesisSpec) -> LinearProgram:
    """Robust SLS linear program maximizing the certified terminal bound alpha."""
    aug, T = spec.aug, spec.T
    n_x, n_z, n_u = aug.n_x, aug.n_z, aug.n_u
    b = _Builder()
    PZ, PU = {}, {}
    for t in range(T + 1):
        for tau in range(t + 1):
            PZ[(t, tau)] = b.new_vars(n_z * n_z, f"Phi_z[{t},{tau}]").reshape(n_z, n_z)
    for t in range(T + 1):
        for tau in range(t + 1):
            PU[(t, tau)] = b.new_vars(n_u * n_z, f"Phi_u[{t},{tau}]").reshape(n_u, n_z)
    alpha = b.new_vars(1, "alpha")[0]

    # achievability: Phi_z(t,tau) = At Phi_z(t-1,tau) + Bt Phi_u(t-1,tau) + [t == tau] I
    At, Bt = aug.A_tilde, aug.B_tilde
    for t in range(T + 1):
        for tau in range(t + 1):
            for r in range(n_z):
                for col in range(n_z):
                    terms = [(PZ[(t, tau)][r, col], 1.0)]
                    if tau <= t - 1:
                        terms += [(PZ[(t - 1, tau)][k, col], -At[r, k]) for k in np.flatnonzero(At[r])]
                        terms += [(PU[(t - 1, tau)][k, col], -Bt[r, k]) for k in np.flatnonzero(Bt[r])]
                    b.row(terms, EQ, 1.0 if (t == tau and r == col) else 0.0, f"ach[{t},{tau}][{r},{col}]")

    center, radius = disturbance_stack(spec)

    def robust(slots, lo, hi, name, objective=False):
        nominal = {}
        spread = []
        for s, expr in enumerate(slots):
            if not expr:
                continue
            if center[s] != 0:
                for v, c in expr:
                    nominal[v] = nominal.get(v, 0.0) + c * center[s]
            if radius[s] > 0:
                a = b.new_vars(1, f"abs[{name},{s}]")[0]
                b.row(expr + [(a, -1.0)], LE, 0.0, f"abs+[{name},{s}]")
                b.row([(v, -c) for v, c in expr] + [(a, -1.0)], LE, 0.0, f"abs-[{name},{s}]")
                spread.append((a, radius[s]))
        nom = list(nominal.items())
        if np.isfinite(hi):
            b.row(nom + spread, LE, hi, f"ub[{name}]")
        if np.isfinite(lo):
            b.row([(v, -c) for v, c in nom] + spread, LE, -lo, f"lb[{name}]")
        if objective:
            b.row([(alpha, 1.0)] + [(v, -c) for v, c in nom] + spread, LE, 0.0, "objective")

    obj_i = spec.objective_component - 1
    for t in range(T + 1):
        for i in range(n_x):
            is_obj = t == T and i == obj_i
            if is_obj or np.isfinite(spec.X.lo[i]) or np.isfinite(spec.X.hi[i]):
                robust(_slot_terms(PZ, t, spec, i), spec.X.lo[i], spec.X.hi[i], f"x{i + 1},{t}", is_obj)
    for t in range(T):
        for k in range(n_u):
            robust(_slot_terms(PU, t, spec, k), spec.U.lo[k], spec.U.hi[k], f"u{k + 1},{t}")

    if spec.gamma is not None and aug.informed:
        # strict "< gamma" becomes "<= gamma - margin"; gamma = 0 forces zero same-step error gains
        bound = max(spec.gamma - GAMMA_MARGIN, 0.0)
        for t in range(T + 1):
            for k in range(n_u):
                aux = b.new_vars(n_x, f"gain[{t},{k}]")
                for j in range(n_x):
                    v = PU[(t, t)][k, n_x + j]
                    b.row([(v, 1.0), (aux[j], -1.0)], LE, 0.0, f"gain+[{t},{k},{j}]")
                    b.row([(v, -1.0), (aux[j], -1.0)], LE, 0.0, f"gain-[{t},{k},{j}]")
                b.row([(a, 1.0) for a in aux], LE, bound, f"gamma[{t},{k}]")

    c = np.zeros(b.n)
    c[alpha] = -1.0
    G = sp.csr_matrix((b.vals, (b.ri, b.ci)), shape=(len(b.rhs), b.n))
    lp = LinearProgram(c, G, np.array(b.senses), np.array(b.rhs), -np.inf, np.inf,
                       var_names=b.names, row_names=b.row_names)
    lp.meta.update(PZ=PZ, PU=PU, alpha=alpha, spec=spec)
    return lp


@dataclass
class SystemResponses:
    Phi_z: np.ndarray
    Phi_u: np.ndarray
    n_z: int
    n_u: int

    @property
    def T(self) -> int:
        return self.Phi_z.shape[0] // self.n_z - 1

    def z_block(self, t, tau):
        n = self.n_z
        return self.Phi_z[t * n:(t + 1) * n, tau * n:(tau + 1) * n]

    def u_block(self, t, tau):
        n, m = self.n_z, self.n_u
        return self.Phi_u[t * m:(t + 1) * m, tau * n:(tau + 1) * n]


def _responses_from(lp: LinearProgram, x) -> SystemResponses:
    spec = lp.meta["spec"]
    n_z, n_u, T = spec.aug.n_z, spec.aug.n_u, spec.T
    Pz = np.zeros(((T + 1) * n_z, (T + 1) * n_z))
    Pu = np.zeros(((T + 1) * n_u, (T + 1) * n_z))
    for (t, tau), ids in lp.meta["PZ"].items():
        Pz[t * n_z:(t + 1) * n_z, tau * n_z:(tau + 1) * n_z] = x[ids]
    for (t, tau), ids in lp.meta["PU"].items():
        Pu[t * n_u:(t + 1) * n_u, tau * n_z:(tau + 1) * n_z] = x[ids]
    return SystemResponses(Pz, Pu, n_z, n_u)


def achievability_operator(aug: AugmentedSystem, T: int):
    """``(I - Z A_blk, -Z B_blk)`` for the horizon-``T`` stacked system."""
    n_z = aug.n_z
    Z = np.kron(np.eye(T + 1, k=-1), np.eye(n_z))
    ZA = Z @ np.kron(np.eye(T + 1), aug.A_tilde)
    ZB = Z @ np.kron(np.eye(T + 1), aug.B_tilde)
    return np.eye((T + 1) * n_z) - ZA, -ZB


def verify_responses(resp: SystemResponses, aug: AugmentedSystem, diag_tol: float = 1e-9) -> float:
    """Max-norm residual of the achievability equation; checks unit diagonal blocks of Phi_z."""
    T = resp.T
    if resp.n_z != aug.n_z or resp.n_u != aug.n_u or resp.Phi_u.shape != ((T + 1) * aug.n_u, (T + 1) * aug.n_z):
        raise ValueError("response shapes do not match the augmented system")
    L, R = achievability_operator(aug, T)
    residual = L @ resp.Phi_z + R @ resp.Phi_u - np.eye((T + 1) * aug.n_z)
    eye = np.eye(aug.n_z)
    for t in range(T + 1):
        dev = np.max(np.abs(resp.z_block(t, t) - eye))
        if dev > diag_tol:
            raise ValueError(f"Phi_z diagonal block {t} deviates from identity by {dev:.3e}")
    return float(np.max(np.abs(residual), initial=0.0))


@dataclass
class InformedPolicy:
    """Gains ``u_t = sum_{tau <= t} K_(t,tau) z_tau`` with ``K = [K^x | K^e]`` blocks."""

    T: int
    n_x: int
    n_u: int
    informed: bool
    alpha: float
    K: np.ndarray  # ((T+1) n_u, (T+1) n_z), block lower triangular
    gamma: Optional[float] = None
    responses: Optional[SystemResponses] = None

    @property
    def n_z(self) -> int:
        return 2 * self.n_x if self.informed else self.n_x

    def block(self, t, tau) -> np.ndarray:
        m, n = self.n_u, self.n_z
        return self.K[t * m:(t + 1) * m, tau * n:(tau + 1) * n]

    def Kx(self, t, tau) -> np.ndarray:
        return self.block(t, tau)[:, : self.n_x]

    def Ke(self, t, tau) -> np.ndarray:
        if not self.informed:
            return np.zeros((self.n_u, self.n_x))
        return self.block(t, tau)[:, self.n_x:]


def gains_from_responses(resp: SystemResponses) -> np.ndarray:
    """``K = Phi_u Phi_z^{-1}`` by block back-substitution (``K Phi_z = Phi_u``)."""
    T, n, m = resp.T, resp.n_z, resp.n_u
    K = np.zeros(((T + 1) * m, (T + 1) * n))
    for t in range(T + 1):
        for tau in range(t, -1, -1):
            acc = resp.u_block(t, tau).copy()
            for s in range(tau + 1, t + 1):
                acc -= K[t * m:(t + 1) * m, s * n:(s + 1) * n] @ resp.z_block(s, tau)
            # K_(t,tau) Phi_z(tau,tau) = acc
            K[t * m:(t + 1) * m, tau * n:(tau + 1) * n] = np.linalg.solve(resp.z_block(tau, tau).T, acc.T).T
    return K


def synthesize(spec: SynthesisSpec, lp_opts: Optional[LpOptions] = None) -> InformedPolicy:
    lp = build_sls_lp(spec)
    opts = lp_opts or spec.lp_opts
    log.info("SLS LP: %d variables, %d rows", lp.n_vars, lp.n_rows)
    sol = solve_lp(lp, opts)
    if sol.status is LpStatus.INFEASIBLE:
        rows = sol.certificate["rows"] if sol.certificate else []
        raise InfeasibleSynthesisError(
            "no policy certifies the constraints" + (f"; certificate rows: {', '.join(rows[:8])}" if rows else ""),
            sol.certificate)
    if not sol.ok:
        raise LPError(f"SLS LP failed: {sol.status.value}: {sol.message}", sol)
    resp = _responses_from(lp, sol.x)
    residual = verify_responses(resp, spec.aug)
    if residual > ACHIEVABILITY_TOL:
        raise LPError(f"achievability residual {residual:.3e} exceeds {ACHIEVABILITY_TOL}", sol)
    K = gains_from_responses(resp)
    recon = np.max(np.abs(K @ resp.Phi_z - resp.Phi_u), initial=0.0)
    if recon > 1e-7:
        raise LPError(f"gain reconstruction error {recon:.3e}", sol)
    alpha = float(sol.x[lp.meta["alpha"]])
    return InformedPolicy(spec.T, spec.aug.n_x, spec.aug.n_u, spec.aug.informed, alpha, K,
                          spec.gamma if spec.aug.informed else None, resp)


# -- artifact I/O -------------------------------------------------------------

def _fmt(a) -> str:
    return ", ".join(f"{v:.17g}" for v in np.ravel(a))


def save_policy(path, policy: InformedPolicy, include_responses: bool = True) -> None:
    lines = ["[policy]", f"T = {policy.T}", f"n_x = {policy.n_x}", f"n_u = {policy.n_u}",
             f"informed = {str(policy.informed).lower()}", f"alpha = {policy.alpha:.17g}",
             f"gamma = {'none' if policy.gamma is None else f'{policy.gamma:.17g}'}"]
    for t in range(policy.T + 1):
        for tau in range(t + 1):
            lines.append(f"K_{t}_{tau} = {_fmt(policy.block(t, tau))}")
    if include_responses and policy.responses is not None:
        r = policy.responses
        lines += ["", "[responses]"]
        for t in range(policy.T + 1):
            for tau in range(t + 1):
                lines.append(f"Phi_z_{t}_{tau} = {_fmt(r.z_block(t, tau))}")
                lines.append(f"Phi_u_{t}_{tau} = {_fmt(r.u_block(t, tau))}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_policy(path) -> InformedPolicy:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    s = cp["policy"]
    T, n_x, n_u = int(s["T"]), int(s["n_x"]), int(s["n_u"])
    informed = s["informed"].strip().lower() == "true"
    n_z = 2 * n_x if informed else n_x
    gamma = None if s["gamma"].strip() == "none" else float(s["gamma"])

    def read(sec, key, shape):
        return np.array([float(v) for v in sec[key].split(",")]).reshape(shape)

    K = np.zeros(((T + 1) * n_u, (T + 1) * n_z))
    for t in range(T + 1):
        for tau in range(t + 1):
            K[t * n_u:(t + 1) * n_u, tau * n_z:(tau + 1) * n_z] = read(s, f"K_{t}_{tau}", (n_u, n_z))
    resp = None
    if cp.has_section("responses"):
        r = cp["responses"]
        Pz = np.zeros(((T + 1) * n_z, (T + 1) * n_z))
        Pu = np.zeros_like(K)
        for t in range(T + 1):
            for tau in range(t + 1):
                Pz[t * n_z:(t + 1) * n_z, tau * n_z:(tau + 1) * n_z] = read(r, f"Phi_z_{t}_{tau}", (n_z, n_z))
                Pu[t * n_u:(t + 1) * n_u, tau * n_z:(tau + 1) * n_z] = read(r, f"Phi_u_{t}_{tau}", (n_u, n_z))
        resp = SystemResponses(Pz, Pu, n_z, n_u)
    return InformedPolicy(T, n_x, n_u, informed, float(s["alpha"]), K, gamma, resp)

"""Sparse linear programs, solution certificates, row generation and MPS I/O.

Problems have the form ``min c.v  s.t.  G_i v (<= | =) g_i,  lo <= v <= hi``.
The numerical work is delegated to the HiGHS interior-point solver shipped with
SciPy; this module owns the problem representation, the independent residual
and duality-gap checks, Farkas certificates for infeasible problems, and the
row-generation loop used for fits with very many samples.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import LPError

log = logging.getLogger(__name__)

LE, EQ = "L", "E"


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITER_LIMIT = "iteration_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class LpOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    method: str = "highs-ipm"
    time_limit: Optional[float] = None


@dataclass
class LinearProgram:
    c: np.ndarray
    G: sp.csr_matrix
    senses: np.ndarray
    g: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    var_names: Optional[list] = None
    row_names: Optional[list] = None
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if n == 0:
            raise ValueError("an LP needs at least one variable")
        self.G = sp.csr_matrix(self.G, dtype=float) if self.G is not None else sp.csr_matrix((0, n))
        self.g = np.asarray(self.g, dtype=float).ravel()
        self.senses = np.asarray(self.senses, dtype="<U1").ravel()
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (n,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (n,)).copy()
        m = self.G.shape[0]
        if self.G.shape[1] != n or self.g.size != m or self.senses.size != m:
            raise ValueError("inconsistent LP dimensions")
        if not set(self.senses.tolist()) <= {LE, EQ}:
            raise ValueError("row senses must be 'L' or 'E'")
        if np.isnan(self.c).any() or np.isnan(self.g).any() or np.isnan(self.G.data).any():
            raise ValueError("NaN coefficient in LP")
        if (self.lo > self.hi).any():
            raise ValueError("variable lower bound above upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.G.shape[0]

    def var_name(self, j: int) -> str:
        return self.var_names[j] if self.var_names else f"v{j}"

    def row_name(self, i: int) -> str:
        return self.row_names[i] if self.row_names else f"r{i}"

    def primal_residual(self, x) -> float:
        """Largest constraint or bound violation at ``x``."""
        r = self.G @ x - self.g
        viol = np.where(self.senses == EQ, np.abs(r), np.maximum(r, 0.0))
        bound = np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0)
        return float(max(viol.max(initial=0.0), bound.max(initial=0.0)))


@dataclass
class LpSolution:
    status: LpStatus
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None  # row multipliers, d(objective)/d(g)
    z: Optional[np.ndarray] = None  # bound multipliers (lower + upper)
    objective: float = float("nan")
    dual_objective: float = float("nan")
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    gap: float = float("nan")
    iterations: int = 0
    message: str = ""
    certificate: Optional[dict] = None

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _split(lp: LinearProgram):
    le = lp.senses == LE
    eq = ~le
    G = lp.G
    return (G[le] if le.any() else None, lp.g[le] if le.any() else None,
            G[eq] if eq.any() else None, lp.g[eq] if eq.any() else None, le, eq)


def _highs_options(opts: LpOptions) -> dict:
    # HiGHS rejects feasibility tolerances below 1e-10
    tol = min(1e-9, max(1e-10, opts.feas_tol * 0.1))
    o = {
        "maxiter": opts.max_iter,
        "primal_feasibility_tolerance": tol,
        "dual_feasibility_tolerance": tol,
        "presolve": True,
    }
    if opts.method == "highs-ipm":
        o["ipm_optimality_tolerance"] = min(1e-10, opts.gap_tol * 0.01)
    if opts.time_limit is not None:
        o["time_limit"] = opts.time_limit
    return o


def solve_lp(lp: LinearProgram, opts: Optional[LpOptions] = None) -> LpSolution:
    """Solve ``lp``; returns a status-tagged solution with its own certificates."""
    opts = opts or LpOptions()
    A_ub, b_ub, A_eq, b_eq, le, eq = _split(lp)
    bounds = np.column_stack([np.where(np.isfinite(lp.lo), lp.lo, -np.inf),
                              np.where(np.isfinite(lp.hi), lp.hi, np.inf)])
    try:
        res = linprog(lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                      method=opts.method, options=_highs_options(opts))
    except (ValueError, np.linalg.LinAlgError) as exc:
        return LpSolution(LpStatus.NUMERICAL_FAILURE, message=str(exc))
    iters = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        cert = farkas_certificate(lp, opts)
        return LpSolution(LpStatus.INFEASIBLE, iterations=iters, message=res.message, certificate=cert)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED, iterations=iters, message=res.message)
    if res.status == 1:
        return LpSolution(LpStatus.ITER_LIMIT, x=res.x, iterations=iters, message=res.message)
    if res.status != 0 or res.x is None:
        # HiGHS occasionally gives up on nearly infeasible models; try for a certificate first
        cert = farkas_certificate(lp, opts)
        if cert is not None:
            return LpSolution(LpStatus.INFEASIBLE, iterations=iters, message=res.message, certificate=cert)
        return LpSolution(LpStatus.NUMERICAL_FAILURE, iterations=iters, message=res.message)

    x = np.asarray(res.x, dtype=float)
    y = np.zeros(lp.n_rows)
    if A_ub is not None:
        y[le] = res.ineqlin.marginals
    if A_eq is not None:
        y[eq] = res.eqlin.marginals
    z_lo = np.asarray(res.lower.marginals, dtype=float)
    z_hi = np.asarray(res.upper.marginals, dtype=float)
    sol = LpSolution(LpStatus.OPTIMAL, x=x, y=y, z=z_lo + z_hi, objective=float(lp.c @ x),
                     iterations=iters, message=res.message)
    sol.primal_residual = lp.primal_residual(x)
    sol.dual_residual = float(np.max(np.abs(lp.c - lp.G.T @ y - z_lo - z_hi), initial=0.0))
    fin_lo, fin_hi = np.isfinite(lp.lo), np.isfinite(lp.hi)
    sol.dual_objective = float(lp.g @ y + lp.lo[fin_lo] @ z_lo[fin_lo] + lp.hi[fin_hi] @ z_hi[fin_hi])
    sol.gap = abs(sol.objective - sol.dual_objective) / max(1.0, abs(sol.objective))
    if sol.primal_residual > opts.feas_tol or sol.dual_residual > opts.feas_tol or sol.gap > opts.gap_tol:
        sol.status = LpStatus.NUMERICAL_FAILURE
        sol.message = (f"certificate check failed: primal {sol.primal_residual:.2e}, "
                       f"dual {sol.dual_residual:.2e}, gap {sol.gap:.2e}")
    return sol


def farkas_certificate(lp: LinearProgram, opts: Optional[LpOptions] = None) -> Optional[dict]:
    """Search for multipliers proving infeasibility of the constraint set.

    Finds ``y`` (``y >= 0`` on inequality rows) and bound multipliers
    ``w_lo, w_hi >= 0`` with ``G^T y - w_lo + w_hi = 0`` and
    ``g.y - lo.w_lo + hi.w_hi < 0``, normalized so all multipliers sum to at most 1.
    Returns ``None`` when no such certificate exists.
    """
    opts = opts or LpOptions()
    m, n = lp.G.shape
    le = lp.senses == LE
    fin_lo = np.flatnonzero(np.isfinite(lp.lo))
    fin_hi = np.flatnonzero(np.isfinite(lp.hi))
    # variables: y_plus (m), y_minus (m, zero-bounded on inequality rows), w_lo, w_hi
    nl, nh = fin_lo.size, fin_hi.size
    GT = lp.G.T.tocsr()
    Wlo = sp.csr_matrix((-np.ones(nl), (fin_lo, np.arange(nl))), shape=(n, nl))
    Whi = sp.csr_matrix((np.ones(nh), (fin_hi, np.arange(nh))), shape=(n, nh))
    A_eq = sp.hstack([GT, -GT, Wlo, Whi]).tocsr()
    obj = np.concatenate([lp.g, -lp.g, -lp.lo[fin_lo], lp.hi[fin_hi]])
    ub_minus = np.where(le, 0.0, np.inf)
    bounds = [(0, None)] * m + [(0, u if np.isfinite(u) else None) for u in ub_minus] + [(0, None)] * (nl + nh)
    A_ub = np.ones((1, obj.size))
    try:
        res = linprog(obj, A_ub=A_ub, b_ub=[1.0], A_eq=A_eq, b_eq=np.zeros(n), bounds=bounds,
                      method="highs", options={"primal_feasibility_tolerance": 1e-10})
    except ValueError:
        return None
    if res.status != 0 or res.fun > -1e3 * opts.feas_tol:
        return None
    v = res.x
    y = v[:m] - v[m:2 * m]
    w_lo = np.zeros(n)
    w_hi = np.zeros(n)
    w_lo[fin_lo] = v[2 * m:2 * m + nl]
    w_hi[fin_hi] = v[2 * m + nl:]
    support = np.flatnonzero(np.abs(y) > 1e-9)
    return {"y": y, "w_lo": w_lo, "w_hi": w_hi, "value": float(res.fun),
            "rows": [lp.row_name(i) for i in support[:20]]}


# -- row generation ---------------------------------------------------------

RowSource = Callable[[np.ndarray, float], Sequence[tuple]]


def solve_lp_row_generation(row_source: RowSource, seed_rows: Iterable[tuple], c, lo, hi,
                            opts: Optional[LpOptions] = None, max_rounds: int = 500,
                            var_names=None) -> LpSolution:
    """Solve an LP whose full row set is too large to materialize.

    ``seed_rows`` and the rows returned by ``row_source(x, feas_tol)`` are
    ``(key, coeffs, rhs)`` triples meaning ``coeffs . v <= rhs``; ``key``
    identifies the row within the finite full set. The source reports violated
    rows at ``x`` (at most a batch) or nothing once ``x`` is feasible within
    ``feas_tol``. Each round adds at least one unseen row, so the loop ends.
    """
    opts = opts or LpOptions()
    c = np.asarray(c, dtype=float)
    keys, rows, rhs = [], [], []
    seen = set()

    def add(batch):
        added = 0
        for key, coeffs, b in batch:
            if key in seen:
                continue
            seen.add(key)
            keys.append(key)
            rows.append(np.asarray(coeffs, dtype=float))
            rhs.append(float(b))
            added += 1
        return added

    add(seed_rows)
    total_iters = 0
    for rnd in range(max_rounds):
        G = sp.csr_matrix(np.array(rows)) if rows else sp.csr_matrix((0, c.size))
        lp = LinearProgram(c, G, np.full(len(rows), LE), np.array(rhs), lo, hi, var_names=var_names,
                           row_names=[str(k) for k in keys])
        sol = solve_lp(lp, opts)
        total_iters += sol.iterations
        if not sol.ok:
            sol.iterations = total_iters
            return sol
        violated = row_source(sol.x, opts.feas_tol)
        if not violated or add(violated) == 0:
            sol.iterations = total_iters
            sol.message = f"row generation converged after {rnd + 1} rounds with {len(rows)} rows"
            log.debug(sol.message)
            sol.certificate = {"rows": len(rows), "rounds": rnd + 1}
            return sol
    raise LPError(f"row generation did not converge in {max_rounds} rounds")


# -- MPS ----------------------------------------------------------------------

def _num(v: float) -> str:
    return repr(float(v))


def export_mps(lp: LinearProgram, path, name: str = "LP") -> None:
    """Write ``lp`` in MPS format with 8-character generated names.

    Numbers are written with full round-trip precision, so a long value may
    run past the classic fixed column; free-format readers accept this.
    """
    n, m = lp.n_vars, lp.n_rows
    cn = [f"C{j + 1:07d}" for j in range(n)]
    rn = [f"R{i + 1:07d}" for i in range(m)]
    lines = [f"NAME          {name}", "ROWS", " N  OBJ"]
    lines += [f" {s}  {rn[i]}" for i, s in enumerate(lp.senses)]
    lines.append("COLUMNS")
    Gc = lp.G.tocsc()
    for j in range(n):
        entries = []
        if lp.c[j] != 0:
            entries.append(("OBJ", lp.c[j]))
        start, end = Gc.indptr[j], Gc.indptr[j + 1]
        entries += [(rn[i], v) for i, v in zip(Gc.indices[start:end], Gc.data[start:end]) if v != 0]
        if not entries:
            entries = [("OBJ", 0.0)]
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            line = f"    {cn[j]:<8}  {pair[0][0]:<8}  {_num(pair[0][1]):>12}"
            if len(pair) == 2:
                line += f"   {pair[1][0]:<8}  {_num(pair[1][1]):>12}"
            lines.append(line)
    lines.append("RHS")
    nz = [(rn[i], lp.g[i]) for i in range(m) if lp.g[i] != 0]
    for k in range(0, len(nz), 2):
        pair = nz[k:k + 2]
        line = f"    {'RHS':<8}  {pair[0][0]:<8}  {_num(pair[0][1]):>12}"
        if len(pair) == 2:
            line += f"   {pair[1][0]:<8}  {_num(pair[1][1]):>12}"
        lines.append(line)
    lines.append("BOUNDS")
    for j in range(n):
        lo, hi = lp.lo[j], lp.hi[j]
        if lo == 0 and hi == np.inf:
            continue
        if lo == -np.inf and hi == np.inf:
            lines.append(f" FR BND       {cn[j]:<8}")
            continue
        if lo == hi:
            lines.append(f" FX BND       {cn[j]:<8}  {_num(lo):>12}")
            continue
        if lo == -np.inf:
            lines.append(f" MI BND       {cn[j]:<8}")
        elif lo != 0:
            lines.append(f" LO BND       {cn[j]:<8}  {_num(lo):>12}")
        if hi != np.inf:
            lines.append(f" UP BND       {cn[j]:<8}  {_num(hi):>12}")
    lines.append("ENDATA")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mps(path) -> LinearProgram:
    """Read the MPS subset written by :func:`export_mps` (N/L/G/E rows, standard bounds)."""
    section = None
    row_sense, row_order, obj_name = {}, [], None
    col_order, col_index = [], {}
    entries, obj, rhs = [], {}, {}
    bounds = {}
    with open(path, encoding="ascii") as fh:
        for raw in fh:
            if not raw.strip() or raw.startswith("*"):
                continue
            if not raw[0].isspace():
                section = raw.split()[0]
                if section == "ENDATA":
                    break
                continue
            tok = raw.split()
            if section == "ROWS":
                sense, rname = tok
                if sense == "N":
                    obj_name = obj_name or rname
                else:
                    row_sense[rname] = sense
                    row_order.append(rname)
            elif section == "COLUMNS":
                cname = tok[0]
                if cname not in col_index:
                    col_index[cname] = len(col_order)
                    col_order.append(cname)
                for rname, val in zip(tok[1::2], tok[2::2]):
                    if rname == obj_name:
                        obj[cname] = float(val)
                    else:
                        entries.append((rname, cname, float(val)))
            elif section == "RHS":
                for rname, val in zip(tok[1::2], tok[2::2]):
                    rhs[rname] = float(val)
            elif section == "BOUNDS":
                kind, cname = tok[0], tok[2]
                val = float(tok[3]) if len(tok) > 3 else None
                bounds.setdefault(cname, []).append((kind, val))
    n = len(col_order)
    rindex = {r: i for i, r in enumerate(row_order)}
    flip = np.array([1.0 if row_sense[r] != "G" else -1.0 for r in row_order])
    data = [(rindex[r], col_index[cn], v) for r, cn, v in entries]
    rows_i = [d[0] for d in data]
    G = sp.csr_matrix(([v * flip[i] for i, _, v in data], (rows_i, [d[1] for d in data])),
                      shape=(len(row_order), n))
    g = np.array([rhs.get(r, 0.0) for r in row_order]) * flip
    senses = np.array([EQ if row_sense[r] == "E" else LE for r in row_order])
    lo, hi = np.zeros(n), np.full(n, np.inf)
    for cname, items in bounds.items():
        j = col_index[cname]
        for kind, val in items:
            if kind == "FR":
                lo[j], hi[j] = -np.inf, np.inf
            elif kind == "MI":
                lo[j] = -np.inf
            elif kind == "PL":
                hi[j] = np.inf
            elif kind == "LO":
                lo[j] = val
            elif kind == "UP":
                hi[j] = val
            elif kind == "FX":
                lo[j] = hi[j] = val
    c = np.array([obj.get(cn, 0.0) for cn in col_order])
    return LinearProgram(c, G, senses, g, lo, hi, var_names=list(col_order), row_names=list(row_order))

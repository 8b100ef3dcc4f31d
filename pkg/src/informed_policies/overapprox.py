"""Sound linear over-approximations by sampled minimax fitting plus Lipschitz inflation."""

from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GridTooLargeError, LPError, SoundnessError
from .lp import LE, LinearProgram, LpOptions, solve_lp, solve_lp_row_generation
from .model import Box, DynamicalSystem, LinearOverApprox, euler_step

log = logging.getLogger(__name__)

GRID_CAP = 5_000_000
ROWGEN_THRESHOLD = 10_000
ROWGEN_SEED_ROWS = 512
ROWGEN_BATCH = 64
SOUNDNESS_SAMPLES = 100_000
DEFAULT_SEED = 20240611
# relative allowance for floating-point error when evaluating f - A x - B u
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class SampleGrid:
    points: np.ndarray  # (N, n_x + n_u)
    delta: float
    axis_counts: tuple

    def __len__(self):
        return self.points.shape[0]


@dataclass
class FitReport:
    eps_lo_data: np.ndarray
    eps_hi_data: np.ndarray
    eps_lo: np.ndarray
    eps_hi: np.ndarray
    lip_err: np.ndarray
    n_samples: int
    axis_counts: tuple
    delta: float
    lp_iterations: list = field(default_factory=list)
    lp_rows: list = field(default_factory=list)
    seed: int = DEFAULT_SEED
    n_check: int = 0
    violations: int = 0

    @property
    def width_data(self) -> np.ndarray:
        return self.eps_hi_data - self.eps_lo_data


def uniform_grid(X: Box, U: Optional[Box], delta: float, cap: int = GRID_CAP) -> SampleGrid:
    """Cell-centred grid on X x U whose infinity-norm dispersion is at most ``delta``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    dom_lo = X.lo if U is None else np.concatenate([X.lo, U.lo])
    dom_hi = X.hi if U is None else np.concatenate([X.hi, U.hi])
    counts = tuple(max(1, math.ceil((hi - lo) / (2 * delta) - 1e-12)) for lo, hi in zip(dom_lo, dom_hi))
    total = math.prod(counts)
    if total > cap:
        raise GridTooLargeError(f"grid would have {total} points (cap {cap}); use a larger delta")
    axes = [lo + (hi - lo) / n * (np.arange(n) + 0.5) for lo, hi, n in zip(dom_lo, dom_hi, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return SampleGrid(points, float(delta), counts)


def grid_dispersion(grid: SampleGrid, X: Box, U: Optional[Box]) -> float:
    """Exact dispersion of a cell-centred product grid (half the widest cell)."""
    dom_lo = X.lo if U is None else np.concatenate([X.lo, U.lo])
    dom_hi = X.hi if U is None else np.concatenate([X.hi, U.hi])
    return float(max((hi - lo) / (2 * n) for lo, hi, n in zip(dom_lo, dom_hi, grid.axis_counts)))


def _fit_rows(P, f, idx):
    """Inequality rows for samples ``idx``: upper side then lower side."""
    k = P.shape[1]
    ones = np.ones((idx.size, 1))
    zeros = np.zeros((idx.size, 1))
    upper = np.hstack([-P[idx], zeros, -ones])  # -p.theta - hi <= -f
    lower = np.hstack([P[idx], ones, zeros])    # p.theta + lo <= f
    assert upper.shape[1] == k + 2
    return upper, -f[idx], lower, f[idx]


def fit_affine_component(i: int, grid: SampleGrid, sys: DynamicalSystem, values=None,
                         opts: Optional[LpOptions] = None, seed: int = DEFAULT_SEED,
                         row_generation: Optional[bool] = None):
    """Minimax fit of component ``i``: minimize ``hi - lo`` subject to
    ``lo <= f_i(p_j) - A_i x_j - B_i u_j <= hi`` on every sample.

    Returns ``(A_row, B_row, lo, hi, info)``; ``lo``/``hi`` are the exact residual
    extremes over the grid at the fitted row, so every sample lies inside.
    """
    P = grid.points
    N, k = P.shape
    if N == 0:
        raise ValueError("empty grid")
    if values is None:
        values = euler_step(sys, P[:, : sys.n_x], P[:, sys.n_x:])
    f = np.asarray(values)[:, i] if np.ndim(values) == 2 else np.asarray(values)
    c = np.zeros(k + 2)
    c[k], c[k + 1] = -1.0, 1.0
    lo_b, hi_b = np.full(k + 2, -np.inf), np.full(k + 2, np.inf)
    opts = opts or LpOptions(method="highs")
    if row_generation is None:
        row_generation = N > ROWGEN_THRESHOLD
    if not row_generation:
        U_, bu, L_, bl = _fit_rows(P, f, np.arange(N))
        lp = LinearProgram(c, np.vstack([U_, L_]), np.full(2 * N, LE), np.concatenate([bu, bl]), lo_b, hi_b)
        sol = solve_lp(lp, opts)
        rows = 2 * N
    else:
        rng = np.random.default_rng(seed + i)
        seed_idx = rng.choice(N, size=min(N, ROWGEN_SEED_ROWS), replace=False)
        U_, bu, L_, bl = _fit_rows(P, f, seed_idx)
        seeds = [(("u", int(j)), U_[n], bu[n]) for n, j in enumerate(seed_idx)]
        seeds += [(("l", int(j)), L_[n], bl[n]) for n, j in enumerate(seed_idx)]

        def source(theta, tol):
            r = f - P @ theta[:k]
            out = []
            over = r - theta[k + 1]
            under = theta[k] - r
            for side, viol in (("u", over), ("l", under)):
                bad = np.flatnonzero(viol > tol)
                if bad.size == 0:
                    continue
                worst = bad[np.argsort(viol[bad])[::-1][:ROWGEN_BATCH]]
                Ur, bur, Lr, blr = _fit_rows(P, f, worst)
                mats, rhs = (Ur, bur) if side == "u" else (Lr, blr)
                out += [((side, int(j)), mats[n], rhs[n]) for n, j in enumerate(worst)]
            return out

        sol = solve_lp_row_generation(source, seeds, c, lo_b, hi_b, opts)
        rows = sol.certificate["rows"] if sol.ok else None
    if not sol.ok:
        raise LPError(f"fit of component {i + 1} failed: {sol.status.value} {sol.message}", sol)
    theta = sol.x[:k]
    resid = f - P @ theta
    info = {"iterations": sol.iterations, "rows": rows, "objective": sol.objective}
    return theta[: sys.n_x].copy(), theta[sys.n_x:].copy(), float(resid.min()), float(resid.max()), info


def lipschitz_error_bound(i: int, sys: DynamicalSystem, A, B) -> float:
    """``kappa * L_cont_i + ||[A - I, B]_i||_1`` bound on the error's Lipschitz constant."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    row = A[i] - np.eye(A.shape[0])[i]
    return float(sys.kappa * sys.lip_cont[i] + np.abs(row).sum() + np.abs(B[i]).sum())


def compute_overapprox(sys: DynamicalSystem, delta: float, opts: Optional[LpOptions] = None,
                       n_check: int = SOUNDNESS_SAMPLES, seed: int = DEFAULT_SEED,
                       cap: int = GRID_CAP):
    """Fit (A, B, E) on a dispersion-``delta`` grid, inflate E, and spot-check soundness.

    E is widened by ``L_e * delta`` per side plus a round-off allowance of
    ``ROUNDOFF * (1 + max |f_i|)``.

    Raises :class:`SoundnessError` carrying the witness ``(x, u, error)`` if any
    of the ``n_check`` uniform random samples falls outside E.
    """
    grid = uniform_grid(sys.X, sys.U, delta, cap)
    pts = grid.points
    values = euler_step(sys, pts[:, : sys.n_x], pts[:, sys.n_x:])
    n_x, n_u = sys.n_x, sys.n_u
    A, B = np.zeros((n_x, n_x)), np.zeros((n_x, n_u))
    lo_d, hi_d, lip = np.zeros(n_x), np.zeros(n_x), np.zeros(n_x)
    iters, rows = [], []
    for i in range(n_x):
        A[i], B[i], lo_d[i], hi_d[i], info = fit_affine_component(i, grid, sys, values[:, i], opts, seed)
        lip[i] = lipschitz_error_bound(i, sys, A, B)
        iters.append(info["iterations"])
        rows.append(info["rows"])
        log.info("component %d: width %.6g, L_e %.6g, %s rows", i + 1, hi_d[i] - lo_d[i], lip[i], info["rows"])
    slack = ROUNDOFF * (1.0 + np.abs(values).max(axis=0))
    eps_lo, eps_hi = lo_d - lip * delta - slack, hi_d + lip * delta + slack
    oa = LinearOverApprox(A, B, Box(eps_lo, eps_hi), float(delta), lip)
    report = FitReport(lo_d, hi_d, eps_lo, eps_hi, lip, len(grid), grid.axis_counts, float(delta),
                       iters, rows, seed, n_check)
    if n_check:
        report.violations = check_soundness(sys, oa, n_check, seed)
    return oa, report


def check_soundness(sys: DynamicalSystem, oa: LinearOverApprox, n: int = SOUNDNESS_SAMPLES,
                    seed: int = DEFAULT_SEED, raise_on_violation: bool = True) -> int:
    """Count uniform random samples of X x U whose error leaves E (zero tolerance)."""
    dom = sys.domain
    rng = np.random.default_rng(seed)
    pts = rng.uniform(dom.lo, dom.hi, size=(n, dom.dim))
    x, u = pts[:, : sys.n_x], pts[:, sys.n_x:]
    err = euler_step(sys, x, u) - oa.predict(x, u)
    bad = np.flatnonzero(((err < oa.err_box.lo) | (err > oa.err_box.hi)).any(axis=1))
    if bad.size and raise_on_violation:
        j = bad[0]
        raise SoundnessError(f"{bad.size} of {n} samples leave E; first at x={x[j]}, u={u[j]}, e={err[j]}",
                             witness=(x[j], u[j], err[j]))
    return int(bad.size)


# -- artifact I/O -------------------------------------------------------------

def _fmt(values) -> str:
    return ", ".join(f"{v:.17g}" for v in np.ravel(values))


def _parse(text: str) -> np.ndarray:
    text = text.strip()
    return np.array([float(s) for s in text.split(",")]) if text else np.zeros(0)


def save_overapprox(path, oa: LinearOverApprox, report: Optional[FitReport] = None) -> None:
    lines = ["[overapprox]", f"n_x = {oa.n_x}", f"n_u = {oa.n_u}", f"A = {_fmt(oa.A)}", f"B = {_fmt(oa.B)}",
             f"eps_lo = {_fmt(oa.err_box.lo)}", f"eps_hi = {_fmt(oa.err_box.hi)}",
             f"delta = {oa.delta:.17g}", f"lip_err = {_fmt(oa.lip_err)}"]
    if report is not None:
        lines += ["", "[fit]", f"eps_lo_data = {_fmt(report.eps_lo_data)}",
                  f"eps_hi_data = {_fmt(report.eps_hi_data)}", f"n_samples = {report.n_samples}",
                  f"axis_counts = {', '.join(map(str, report.axis_counts))}",
                  f"lp_iterations = {', '.join(map(str, report.lp_iterations))}",
                  f"seed = {report.seed}", f"n_check = {report.n_check}", f"violations = {report.violations}"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_overapprox(path):
    """Return ``(LinearOverApprox, FitReport | None)`` from an artifact file."""
    cp = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    s = cp["overapprox"]
    n_x, n_u = int(s["n_x"]), int(s["n_u"])
    A = _parse(s["A"]).reshape(n_x, n_x)
    B = _parse(s["B"]).reshape(n_x, n_u)
    oa = LinearOverApprox(A, B, Box(_parse(s["eps_lo"]), _parse(s["eps_hi"])), float(s["delta"]),
                          _parse(s["lip_err"]))
    report = None
    if cp.has_section("fit"):
        f = cp["fit"]
        report = FitReport(_parse(f["eps_lo_data"]), _parse(f["eps_hi_data"]), oa.err_box.lo.copy(),
                           oa.err_box.hi.copy(), oa.lip_err.copy(), int(f["n_samples"]),
                           tuple(int(v) for v in _parse(f["axis_counts"])), oa.delta,
                           [int(v) for v in _parse(f.get("lp_iterations", ""))], [], int(f["seed"]),
                           int(f["n_check"]), int(f["violations"]))
    return oa, report

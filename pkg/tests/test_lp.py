import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from informed_policies.lp import EQ, LE, LinearProgram, LpStatus, export_mps, farkas_certificate, \
    read_mps, solve_lp, solve_lp_row_generation


def vertex_enumeration(c, A, b):
    """Brute-force optimum of ``min c.x, A x <= b`` over all basic solutions (bounded problems)."""
    m, n = A.shape
    best = np.inf
    for rows in itertools.combinations(range(m), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            best = min(best, c @ x)
    return best


def random_lp(rng):
    n = int(rng.integers(1, 7))
    m = int(rng.integers(1, 13 - 2 * n)) if 13 - 2 * n > 1 else 0
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.1, 2.0, size=m)  # x = 0 is feasible
    # box rows keep the problem bounded; they are part of the enumerated row set
    A = np.vstack([A, np.eye(n), -np.eye(n)])
    b = np.concatenate([b, rng.uniform(0.5, 3, n), rng.uniform(0.5, 3, n)])
    c = rng.normal(size=n)
    return c, A, b


def as_lp(c, A, b):
    return LinearProgram(c, sp.csr_matrix(A), np.full(len(b), LE), b, -np.inf, np.inf)


def test_simple_optimum():
    sol = solve_lp(LinearProgram([-1.0], [[1.0]], [LE], [1.0], 0.0, np.inf))
    assert sol.ok and sol.x == pytest.approx([1.0]) and sol.objective == pytest.approx(-1.0)


def test_simple_infeasible_has_certificate():
    lp = LinearProgram([0.0], [[1.0]], [LE], [-1.0], 0.0, np.inf)
    sol = solve_lp(lp)
    assert sol.status is LpStatus.INFEASIBLE
    cert = sol.certificate
    assert cert is not None and cert["value"] < 0
    # G^T y - w_lo + w_hi = 0 with y >= 0 on the inequality row
    assert cert["y"][0] >= 0
    assert lp.G.T @ cert["y"] - cert["w_lo"] + cert["w_hi"] == pytest.approx([0.0], abs=1e-9)


def test_farkas_none_for_feasible():
    assert farkas_certificate(LinearProgram([1.0], [[1.0]], [LE], [1.0], 0, 2)) is None


def test_unbounded():
    assert solve_lp(LinearProgram([-1.0], [[-1.0]], [LE], [0.0], -np.inf, np.inf)).status is LpStatus.UNBOUNDED


@pytest.mark.parametrize("seed", range(20))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    c, A, b = random_lp(rng)
    sol = solve_lp(as_lp(c, A, b))
    assert sol.ok
    assert sol.objective == pytest.approx(vertex_enumeration(c, A, b), abs=1e-7)
    # certificates
    assert sol.primal_residual <= 1e-8 and sol.dual_residual <= 1e-8 and sol.gap <= 1e-8
    assert sol.objective >= sol.dual_objective - 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_objective_scaling(seed):
    rng = np.random.default_rng(100 + seed)
    c, A, b = random_lp(rng)
    s1, s10 = solve_lp(as_lp(c, A, b)), solve_lp(as_lp(10 * c, A, b))
    assert s10.objective == pytest.approx(10 * s1.objective, abs=1e-7)
    if np.all(np.abs(c) > 1e-3):
        # the optimum is generically unique
        assert s10.x == pytest.approx(s1.x, abs=1e-6)


def test_equality_rows_and_bounds():
    # min x + y  s.t. x + y = 1 (eq), x - y <= 0.5, 0 <= x <= 0.2
    lp = LinearProgram([1.0, 2.0], [[1, 1], [1, -1]], [EQ, LE], [1, 0.5], [0, -np.inf], [0.2, np.inf])
    sol = solve_lp(lp)
    assert sol.ok and sol.x == pytest.approx([0.2, 0.8]) and sol.objective == pytest.approx(1.8)
    assert sol.dual_residual < 1e-8 and sol.gap < 1e-8


def test_invalid_lps():
    with pytest.raises(ValueError):
        LinearProgram([], None, [], [], 0, 0)
    with pytest.raises(ValueError):
        LinearProgram([1.0], [[1.0]], ["G"], [1.0], 0, 1)
    with pytest.raises(ValueError):
        LinearProgram([np.nan], [[1.0]], [LE], [1.0], 0, 1)


# -- row generation -------------------------------------------------------------

def fit_rows(xs, f):
    """Rows of ``min hi - lo  s.t.  lo <= f(x) - a x - b <= hi`` over samples, variables (a, b, lo, hi)."""
    out = []
    for j, (x, y) in enumerate(zip(xs, f)):
        out.append((("u", j), np.array([-x, -1.0, 0.0, -1.0]), -y))
        out.append((("l", j), np.array([x, 1.0, 1.0, 0.0]), y))
    return out


def row_source_for(rows):
    def source(v, tol):
        return [r for r in rows if r[1] @ v - r[2] > tol]
    return source


def test_row_generation_matches_full_lp_on_quadratic_fit():
    xs = np.linspace(0, 1, 1001)
    rows = fit_rows(xs, xs ** 2)
    c = np.array([0, 0, -1.0, 1.0])
    full = solve_lp(LinearProgram(c, np.array([r[1] for r in rows]), np.full(len(rows), LE),
                                  np.array([r[2] for r in rows]), -np.inf, np.inf))
    rg = solve_lp_row_generation(row_source_for(rows), rows[:10] + rows[-10:], c, -np.inf, np.inf)
    assert full.ok and rg.ok
    assert rg.objective == pytest.approx(full.objective, abs=1e-9)
    assert full.objective == pytest.approx(0.25, abs=1e-6)
    assert rg.certificate["rows"] < len(rows)
    # feasibility on the whole row set (which includes all unseeded rows)
    assert max(r[1] @ rg.x - r[2] for r in rows) <= 1e-8


def test_row_generation_full_seed_equals_solve_lp():
    xs = np.linspace(0, 1, 51)
    rows = fit_rows(xs, np.sin(3 * xs))
    c = np.array([0, 0, -1.0, 1.0])
    full = solve_lp(LinearProgram(c, np.array([r[1] for r in rows]), np.full(len(rows), LE),
                                  np.array([r[2] for r in rows]), -np.inf, np.inf))
    rg = solve_lp_row_generation(row_source_for(rows), rows, c, -np.inf, np.inf)
    assert rg.objective == pytest.approx(full.objective, abs=1e-12)
    assert rg.certificate["rounds"] == 1


def test_row_generation_quiet_source_stops_after_one_solve():
    calls = []

    def source(v, tol):
        calls.append(v)
        return []
    sol = solve_lp_row_generation(source, [(0, np.array([1.0]), 1.0)], [-1.0], 0, np.inf)
    assert sol.ok and len(calls) == 1 and sol.x == pytest.approx([1.0])


# -- MPS --------------------------------------------------------------------------

def test_mps_one_variable_layout(tmp_path):
    p = tmp_path / "one.mps"
    export_mps(LinearProgram([1.0], [[1.0]], [LE], [1.0], 0, np.inf), p)
    lines = p.read_text().splitlines()
    assert len(lines) == 10
    for section in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
        assert section in lines


def test_mps_empty_objective(tmp_path):
    p = tmp_path / "zero.mps"
    export_mps(LinearProgram([0.0, 0.0], [[1.0, 1.0]], [LE], [1.0], 0, np.inf), p)
    text = p.read_text()
    # the objective row is declared but carries no coefficients
    assert " N  OBJ" in text and "OBJ" not in text.split("COLUMNS")[1]
    assert np.array_equal(read_mps(p).c, [0.0, 0.0])


@pytest.mark.parametrize("seed", range(5))
def test_mps_round_trip(tmp_path, seed):
    rng = np.random.default_rng(seed)
    c, A, b = random_lp(rng)
    senses = np.where(rng.random(len(b)) < 0.2, EQ, LE)
    lo = np.where(rng.random(len(c)) < 0.5, -np.inf, -rng.random(len(c)))
    hi = np.where(rng.random(len(c)) < 0.5, np.inf, 1 + rng.random(len(c)))
    lp = LinearProgram(c, sp.csr_matrix(A), senses, b, lo, hi)
    p = tmp_path / "rt.mps"
    export_mps(lp, p)
    back = read_mps(p)
    assert np.array_equal(back.c, lp.c) and np.array_equal(back.g, lp.g)
    assert np.array_equal(back.G.toarray(), lp.G.toarray())
    assert np.array_equal(back.senses, lp.senses)
    assert np.array_equal(back.lo, lp.lo) and np.array_equal(back.hi, lp.hi)

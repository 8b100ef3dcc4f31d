"""Boxes, polytopes, dynamical systems and linear over-approximations."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError

SYNTHESIS_TOL = 0.0
SIMULATION_TOL = 1e-9


def _vec(v) -> np.ndarray:
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.ndim != 1:
        raise ValueError(f"expected a vector, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``{p : lo <= p <= hi}``. Zero-width axes are allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lo), _vec(self.hi)
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same length")
        if lo.size == 0:
            raise ValueError("a box needs at least one dimension")
        if np.isnan(lo).any() or np.isnan(hi).any() or (lo > hi).any():
            raise ValueError(f"invalid box bounds lo={lo} hi={hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def to_polytope(self) -> "Polytope":
        n = self.dim
        H = np.vstack([np.eye(n), -np.eye(n)])
        h = np.concatenate([self.hi, -self.lo])
        keep = np.isfinite(h)
        return Polytope(H[keep], h[keep])

    def __eq__(self, other):
        return (isinstance(other, Box) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))


@dataclass(frozen=True)
class Polytope:
    """H-representation ``{p : H p <= h}``."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        h = _vec(self.h)
        if H.shape[0] != h.size:
            raise ValueError("H row count must equal len(h)")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    def contains(self, p, tol: float = 0.0) -> bool:
        return bool(np.all(self.H @ _vec(p) <= self.h + tol))


def box_support(c, box: Box) -> float:
    """Return ``max_{w in box} c.w``."""
    c = _vec(c)
    if c.size != box.dim:
        raise ValueError("dimension mismatch")
    nz = c != 0
    return float(c[nz] @ box.center[nz] + np.abs(c[nz]) @ box.halfwidth[nz])


def box_contains(box: Box, p, tol: float = 0.0) -> bool:
    p = _vec(p)
    if p.size != box.dim:
        raise ValueError("dimension mismatch")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return bool(np.all(p >= box.lo - tol) and np.all(p <= box.hi + tol))


class Structure(enum.Enum):
    SHARED = "shared"
    AFFINE = "affine"
    GENERAL = "general"


VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DynamicalSystem:
    """Continuous-time vector field with its forward-Euler discretization.

    ``f_cont`` maps ``x`` of shape ``(..., n_x)`` and ``u`` of shape
    ``(..., n_u)`` to ``(..., n_x)``. For input-affine systems ``fx_cont``
    returns ``(..., n_x)`` and ``fu_cont`` returns ``(..., n_x, n_u)``.
    """

    n_x: int
    n_u: int
    f_cont: VectorField
    kappa: float
    X: Box
    U: Optional[Box]
    lip_cont: np.ndarray
    lip_u: float = 0.0
    structure: Structure = Structure.GENERAL
    fx_cont: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fu_cont: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        lip = _vec(self.lip_cont)
        if lip.size != self.n_x or (lip < 0).any():
            raise ValueError("lip_cont needs n_x nonnegative entries")
        object.__setattr__(self, "lip_cont", lip)
        if self.X.dim != self.n_x:
            raise ValueError("X dimension must equal n_x")
        if self.n_u > 0 and (self.U is None or self.U.dim != self.n_u):
            raise ValueError("U dimension must equal n_u")
        if self.structure is Structure.AFFINE and (self.fx_cont is None or self.fu_cont is None):
            raise ValueError("input-affine systems need fx_cont and fu_cont")

    @property
    def domain(self) -> Box:
        """The product box X x U."""
        if self.n_u == 0:
            return self.X
        return Box(np.concatenate([self.X.lo, self.U.lo]), np.concatenate([self.X.hi, self.U.hi]))

    def _u(self, u, batch_shape):
        if self.n_u == 0:
            return np.zeros(batch_shape + (0,))
        return np.asarray(u, dtype=float)

    def step(self, x, u) -> np.ndarray:
        return euler_step(self, x, u)

    def f_x(self, x) -> np.ndarray:
        """Drift term of the discretized input-affine dynamics."""
        x = np.asarray(x, dtype=float)
        return x + self.kappa * np.asarray(self.fx_cont(x), dtype=float)

    def f_u(self, x) -> np.ndarray:
        """Input matrix of the discretized input-affine dynamics."""
        x = np.asarray(x, dtype=float)
        return self.kappa * np.asarray(self.fu_cont(x), dtype=float)


def euler_step(sys: DynamicalSystem, x, u) -> np.ndarray:
    """``x + kappa * f_cont(x, u)``; works on single points and batches."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != sys.n_x:
        raise ValueError(f"state has dimension {x.shape[-1]}, expected {sys.n_x}")
    u = sys._u(u, x.shape[:-1])
    if sys.n_u and u.shape[-1] != sys.n_u:
        raise ValueError(f"input has dimension {u.shape[-1]}, expected {sys.n_u}")
    dx = np.asarray(sys.f_cont(x, u), dtype=float)
    if not np.all(np.isfinite(dx)):
        raise EvaluationError("non-finite value of the vector field")
    return x + sys.kappa * dx


@dataclass(frozen=True)
class LinearOverApprox:
    """``f(x, u) - A x - B u`` lies in ``err_box`` on X x U."""

    A: np.ndarray
    B: np.ndarray
    err_box: Box
    delta: float = 0.0
    lip_err: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n_x = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n_x, -1)
        if A.shape != (n_x, n_x) or self.err_box.dim != n_x:
            raise ValueError("inconsistent over-approximation dimensions")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        lip = np.asarray(self.lip_err, dtype=float)
        object.__setattr__(self, "lip_err", lip if lip.size else np.zeros(n_x))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    def predict(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = x @ self.A.T
        if self.n_u:
            out = out + np.asarray(u, dtype=float) @ self.B.T
        return out


def eval_error(sys: DynamicalSystem, oa: LinearOverApprox, x, u) -> np.ndarray:
    """Over-approximation error ``f(x, u) - A x - B u``."""
    return euler_step(sys, x, u) - oa.predict(x, sys._u(u, np.shape(x)[:-1]))


def inf_norm(M) -> float:
    """Induced infinity norm (max absolute row sum); vector infinity norm for 1-D input."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    if M.ndim == 1:
        return float(np.max(np.abs(M)))
    return float(np.max(np.abs(M).sum(axis=1)))

"""Loading systems and experiment settings from ``key = value`` config files.

Sections and keys::

    [system]       n_x, n_u, kappa, structure = shared|affine|general,
                   f_cont_i = "<expr>", fx_i = "<expr>", fu_i_j = "<expr>",
                   lip_cont = a, b, ...   lip_u = <scalar>
    [constraints]  x_lo, x_hi, u_lo, u_hi  (comma-separated)
    [experiment]   horizon, delta, x0, objective_component (1-based),
                   gamma = none|auto|<value>   (optional)

All ``fx``/``fu`` expressions are continuous-time, like ``f_cont``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigError
from .expr import parse_expression
from .model import Box, DynamicalSystem, Structure

BUNDLED = ("exp1", "exp2")


@dataclass(frozen=True)
class ExperimentConfig:
    system: DynamicalSystem
    horizon: int
    delta: float
    x0: np.ndarray
    objective_component: int  # 1-based
    gamma: Union[None, str, float] = None
    path: Optional[str] = None
    f_exprs: tuple = field(default=(), compare=False)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "x0" in kw:
            kw["x0"] = np.asarray(kw["x0"], dtype=float)
        return replace(self, **kw)


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("informed_policies") / "configs" / f"{name}.cfg"))


def resolve_config(ref: str) -> Path:
    """Accept a file path or the name of a bundled experiment (``exp1``/``exp2``)."""
    p = Path(ref)
    if p.exists():
        return p
    stem = p.name[:-4] if p.name.endswith(".cfg") else p.name
    if stem in BUNDLED and str(p.parent) in ("", "."):
        return bundled_config_path(stem)
    raise ConfigError(f"config file not found: {ref}")


def _strip(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def _vector(section, key, n=None):
    try:
        raw = section[key]
    except KeyError:
        raise ConfigError(f"missing required key '{key}' in [{section.name}]") from None
    try:
        vals = np.array([float(s) for s in _strip(raw).split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f"key '{key}' must be a comma-separated list of numbers") from None
    if n is not None and vals.size != n:
        raise ConfigError(f"key '{key}' has {vals.size} entries, expected {n}")
    return vals


def _scalar(section, key, kind=float, default=None):
    if key not in section:
        if default is not None:
            return default
        raise ConfigError(f"missing required key '{key}' in [{section.name}]")
    try:
        return kind(_strip(section[key]))
    except ValueError:
        raise ConfigError(f"key '{key}' must be {kind.__name__}") from None


def _section(cp, name):
    if not cp.has_section(name):
        raise ConfigError(f"missing section [{name}]")
    return cp[name]


def _stack(asts, x, u):
    return np.stack([a(x, u) for a in asts], axis=-1)


def load_system_config(path) -> ExperimentConfig:
    path = resolve_config(str(path))
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    sysd, cons, exp = (_section(cp, s) for s in ("system", "constraints", "experiment"))

    n_x = _scalar(sysd, "n_x", int)
    n_u = _scalar(sysd, "n_u", int)
    if n_x < 1 or n_u < 0:
        raise ConfigError("n_x must be >= 1 and n_u >= 0")
    kappa = _scalar(sysd, "kappa")
    try:
        structure = Structure(_strip(sysd.get("structure", "general")))
    except ValueError:
        raise ConfigError("structure must be one of shared, affine, general") from None

    def expr(key, default=None):
        if key not in sysd:
            if default is None:
                raise ConfigError(f"missing required key '{key}' in [system]")
            return parse_expression(default, n_x, n_u)
        try:
            return parse_expression(_strip(sysd[key]), n_x, n_u)
        except ValueError as exc:
            raise ConfigError(f"key '{key}': {exc}") from None

    has_split = any(f"fx_{i + 1}" in sysd for i in range(n_x))
    fx = fu = None
    if has_split or structure is Structure.AFFINE:
        fx_asts = [expr(f"fx_{i + 1}") for i in range(n_x)]
        fu_asts = [[expr(f"fu_{i + 1}_{j + 1}", "0") for j in range(n_u)] for i in range(n_x)]

        def fx(x, _a=fx_asts):
            x = np.asarray(x, dtype=float)
            return _stack(_a, x, np.zeros(x.shape[:-1] + (n_u,)))

        def fu(x, _a=fu_asts):
            x = np.asarray(x, dtype=float)
            u0 = np.zeros(x.shape[:-1] + (n_u,))
            rows = [np.stack([a(x, u0) for a in row], axis=-1) if row else np.zeros(x.shape[:-1] + (0,))
                    for row in _a]
            return np.stack(rows, axis=-2)

    if any(f"f_cont_{i + 1}" in sysd for i in range(n_x)) or fx is None:
        f_asts = tuple(expr(f"f_cont_{i + 1}") for i in range(n_x))

        def f_cont(x, u, _a=f_asts):
            return _stack(_a, np.asarray(x, dtype=float), np.asarray(u, dtype=float))
    else:
        f_asts = ()

        def f_cont(x, u):
            return fx(x) + np.einsum("...ij,...j->...i", fu(x), np.asarray(u, dtype=float))

    X = Box(_vector(cons, "x_lo", n_x), _vector(cons, "x_hi", n_x))
    U = Box(_vector(cons, "u_lo", n_u), _vector(cons, "u_hi", n_u)) if n_u else None
    system = DynamicalSystem(
        n_x=n_x, n_u=n_u, f_cont=f_cont, kappa=kappa, X=X, U=U,
        lip_cont=_vector(sysd, "lip_cont", n_x), lip_u=_scalar(sysd, "lip_u", float, 0.0),
        structure=structure, fx_cont=fx, fu_cont=fu, name=Path(path).stem,
    )
    if fx is not None and f_asts:
        _check_split(system)

    horizon = _scalar(exp, "horizon", int)
    if horizon < 0:
        raise ConfigError("horizon must be nonnegative")
    delta = _scalar(exp, "delta")
    x0 = _vector(exp, "x0", n_x)
    obj = _scalar(exp, "objective_component", int)
    if not 1 <= obj <= n_x:
        raise ConfigError("objective_component must be between 1 and n_x")
    gamma = parse_gamma(_strip(exp.get("gamma", "none")))
    return ExperimentConfig(system, horizon, delta, x0, obj, gamma, str(path), f_asts)


def parse_gamma(text: str):
    text = str(text).strip().lower()
    if text in ("none", ""):
        return None
    if text == "auto":
        return "auto"
    try:
        g = float(text)
    except ValueError:
        raise ConfigError(f"gamma must be none, auto or a nonnegative number, got {text!r}") from None
    if not g >= 0:
        raise ConfigError("gamma must be nonnegative")
    return g


def _check_split(system: DynamicalSystem, n: int = 64):
    rng = np.random.default_rng(0)
    dom = system.domain
    pts = rng.uniform(dom.lo, dom.hi, size=(n, dom.dim))
    x, u = pts[:, : system.n_x], pts[:, system.n_x:]
    full = system.f_cont(x, u)
    split = system.fx_cont(x) + np.einsum("nij,nj->ni", system.fu_cont(x), u)
    if not np.allclose(full, split, rtol=1e-12, atol=1e-12):
        raise ConfigError("fx/fu split does not reproduce f_cont")

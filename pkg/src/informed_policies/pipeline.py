"""End-to-end experiment pipeline shared by the CLI and the acceptance checks."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional


from ._version import __version__
from .config import ExperimentConfig, load_system_config
from .errors import InfeasibleSynthesisError, InformedPolicyError
from .model import LinearOverApprox
from .overapprox import DEFAULT_SEED, compute_overapprox, load_overapprox, save_overapprox
from .plot import phase_plane_svg, write_svg
from .simulate import read_trajectory_csv, rollout, verify_trajectory, write_trajectory_csv
from .sls import InformedPolicy, SynthesisSpec, auto_gamma, build_augmented, load_policy, save_policy, \
    synthesize

log = logging.getLogger(__name__)

# reference values and bands checked by `reproduce`
TARGETS = {
    "exp1": {"informed": (0.71, 0.91), "uninformed": (0.52, 0.72), "gap": 0.10},
    "exp2": {"informed": (2.9, 3.3), "uninformed": (2.5, 2.9), "gap": 0.2},
}


def resolve_gamma(gamma, cfg: ExperimentConfig, oa: LinearOverApprox) -> Optional[float]:
    if gamma is None:
        return None
    if gamma == "auto":
        return auto_gamma(cfg.system.lip_u, oa.B)
    return float(gamma)


def make_spec(cfg: ExperimentConfig, oa: LinearOverApprox, informed: bool, gamma=None) -> SynthesisSpec:
    sys = cfg.system
    if sys.U is None:
        raise ValueError("synthesis needs at least one input")
    return SynthesisSpec(build_augmented(oa, informed), sys.X, sys.U, cfg.x0, oa.err_box, cfg.horizon,
                         cfg.objective_component, resolve_gamma(gamma, cfg, oa) if informed else None)


def run_synthesis(cfg: ExperimentConfig, oa: LinearOverApprox, informed: bool, gamma="config") -> InformedPolicy:
    """Synthesize with the config's gamma unless one is given explicitly (``None`` disables it)."""
    g = cfg.gamma if gamma == "config" else gamma
    return synthesize(make_spec(cfg, oa, informed, g))


@dataclass
class RunManifest:
    experiment: str
    config: str
    seed: int
    version: str
    x0: list
    artifacts: dict = field(default_factory=dict)
    alpha: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def reproduce(name: str, out_dir, seed: int = DEFAULT_SEED, cfg: Optional[ExperimentConfig] = None) -> RunManifest:
    """Over-approximate, synthesize both policies, simulate, plot and write ``manifest.json``."""
    cfg = cfg or load_system_config(name)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(name, str(cfg.path), seed, __version__, [float(v) for v in cfg.x0])
    stamp = lambda key: man.timestamps.__setitem__(key, datetime.now(timezone.utc).isoformat())  # noqa: E731
    stamp("start")
    t0 = time.perf_counter()

    oa, report = compute_overapprox(cfg.system, cfg.delta, seed=seed)
    oa_path = out / f"{name}.oa"
    save_overapprox(oa_path, oa, report)
    man.artifacts["overapprox"] = str(oa_path)
    man.verification["soundness_violations"] = report.violations
    stamp("overapprox")

    csvs, labels, alphas = [], [], []
    for mode in ("informed", "uninformed"):
        try:
            pol = run_synthesis(cfg, oa, mode == "informed")
        except InfeasibleSynthesisError as exc:
            man.errors[mode] = f"infeasible: {exc}"
            continue
        except InformedPolicyError as exc:
            man.errors[mode] = f"{type(exc).__name__}: {exc}"
            continue
        man.alpha[mode] = pol.alpha
        p_path = out / f"{name}_{mode}.policy"
        save_policy(p_path, pol)
        man.artifacts[f"policy_{mode}"] = str(p_path)
        stamp(f"synthesize_{mode}")
        try:
            traj = rollout(cfg.system, oa, pol, cfg.x0)
        except InformedPolicyError as exc:
            man.errors[f"simulate_{mode}"] = f"{type(exc).__name__}: {exc}"
            continue
        rep = verify_trajectory(traj, cfg.system.X, cfg.system.U, oa.err_box, pol.alpha, cfg.objective_component)
        c_path = out / f"{name}_{mode}.csv"
        write_trajectory_csv(traj, c_path)
        man.artifacts[f"trajectory_{mode}"] = str(c_path)
        man.verification[mode] = {
            "passed": rep.passed, "terminal": rep.terminal_value,
            "state_violations": len(rep.state_violations), "input_violations": len(rep.input_violations),
            "error_violations": len(rep.error_violations), "max_residual": rep.max_residual,
            "max_iterations": max((r.iterations for r in traj.results if r is not None), default=0),
        }
        csvs.append(traj.states)
        labels.append(mode)
        alphas.append(pol.alpha)
        stamp(f"simulate_{mode}")

    if csvs and cfg.system.n_x == 2:
        svg_path = out / f"{name}.svg"
        write_svg(svg_path, phase_plane_svg(csvs, labels, cfg.system.X, alphas, title=name))
        man.artifacts["plot"] = str(svg_path)

    tgt = TARGETS.get(name)
    if tgt is not None:
        a_i, a_u = man.alpha.get("informed"), man.alpha.get("uninformed")
        man.checks["informed_in_band"] = a_i is not None and tgt["informed"][0] <= a_i <= tgt["informed"][1]
        man.checks["uninformed_in_band"] = a_u is not None and tgt["uninformed"][0] <= a_u <= tgt["uninformed"][1]
        man.checks["gap"] = a_i is not None and a_u is not None and a_i - a_u >= tgt["gap"]
    man.checks["rollouts_violation_free"] = bool(man.verification) and all(
        man.verification.get(m, {}).get("passed", False) for m in ("informed", "uninformed"))
    stamp("end")
    man.timestamps["elapsed_s"] = round(time.perf_counter() - t0, 3)
    (out / "manifest.json").write_text(man.to_json(), encoding="utf-8")
    return man


def check_manifest(path) -> dict:
    """Re-load every artifact referenced by a manifest; returns the parsed manifest."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    for key, p in data["artifacts"].items():
        if key == "overapprox":
            load_overapprox(p)
        elif key.startswith("policy"):
            load_policy(p)
        elif key.startswith("trajectory"):
            read_trajectory_csv(p)
        elif not Path(p).exists():
            raise FileNotFoundError(p)
    return data

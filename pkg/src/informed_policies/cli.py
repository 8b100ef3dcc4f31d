"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 infeasible synthesis, 4 numerical failure.
"""

from __future__ import annotations

import functools
import logging
import sys

import click

from ._version import __version__
from .config import ConfigError, load_system_config, parse_gamma
from .errors import ConcretizationError, ExprSyntaxError, GridTooLargeError, InfeasibleSynthesisError, LPError, \
    SoundnessError
from .model import box_contains
from .overapprox import DEFAULT_SEED, SOUNDNESS_SAMPLES, compute_overapprox, load_overapprox, save_overapprox
from .pipeline import make_spec, reproduce
from .plot import phase_plane_svg, write_svg
from .simulate import read_trajectory_csv, rollout, verify_trajectory, write_trajectory_csv
from .sls import load_policy, save_policy, synthesize

EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERICAL = 2, 3, 4


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kw):
        try:
            return fn(*args, **kw)
        except InfeasibleSynthesisError as exc:
            _fail(EXIT_INFEASIBLE, f"synthesis infeasible: {exc}")
        except (LPError, SoundnessError, ConcretizationError) as exc:
            _fail(EXIT_NUMERICAL, str(exc))
        except (ConfigError, ExprSyntaxError, GridTooLargeError, ValueError, OSError) as exc:
            _fail(EXIT_INPUT, str(exc))
    return wrapper


def _load_config(path, x0=None, horizon=None, delta=None):
    cfg = load_system_config(path)
    if x0 is not None:
        try:
            vals = [float(v) for v in x0.split(",")]
        except ValueError:
            raise ConfigError(f"--x0 must be comma-separated numbers, got {x0!r}") from None
        if len(vals) != cfg.system.n_x:
            raise ConfigError(f"--x0 needs {cfg.system.n_x} values")
        cfg = cfg.with_overrides(x0=vals)
    cfg = cfg.with_overrides(horizon=horizon, delta=delta)
    if not box_contains(cfg.system.X, cfg.x0):
        raise ConfigError(f"initial state {cfg.x0.tolist()} lies outside X")
    return cfg


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose):
    """Informed-policy synthesis for nonlinear systems via linear over-approximation."""
    level = logging.WARNING - 10 * verbose
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("config")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False), help="Artifact to write.")
@click.option("--delta", type=float, help="Grid dispersion (overrides the config).")
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--n-check", type=int, default=SOUNDNESS_SAMPLES, show_default=True,
              help="Random samples for the soundness spot-check.")
@handle_errors
def overapprox(config, out, delta, seed, n_check):
    """Fit a linear model with a sound error box on the config's domain."""
    cfg = _load_config(config, delta=delta)
    if not cfg.delta > 0:
        raise ConfigError("delta must be positive")
    oa, report = compute_overapprox(cfg.system, cfg.delta, n_check=n_check, seed=seed)
    save_overapprox(out, oa, report)
    click.echo(f"A = {oa.A.tolist()}\nB = {oa.B.tolist()}")
    click.echo(f"E = [{oa.err_box.lo.tolist()}, {oa.err_box.hi.tolist()}]")
    click.echo(f"{report.n_samples} grid points, {report.violations} violations in {n_check} checks")


@main.command()
@click.argument("config")
@click.option("--oa", "oa_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--informed/--uninformed", default=True, show_default=True)
@click.option("--gamma", default=None, help="auto, none or a nonnegative bound (default: from config).")
@click.option("--x0", default=None, help="Initial state override, comma-separated.")
@click.option("--horizon", type=int, default=None)
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@handle_errors
def synthesize_cmd(config, oa_path, informed, gamma, x0, horizon, out):
    """Synthesize a policy maximizing the certified terminal bound alpha."""
    cfg = _load_config(config, x0=x0, horizon=horizon)
    oa, _ = load_overapprox(oa_path)
    g = cfg.gamma if gamma is None else parse_gamma(gamma)
    spec = make_spec(cfg, oa, informed, g)
    policy = synthesize(spec)
    save_policy(out, policy)
    click.echo(f"alpha = {policy.alpha:.10g}" + (f" (gamma = {spec.gamma:.6g})" if spec.gamma else ""))


synthesize_cmd.name = "synthesize"


@main.command()
@click.argument("config")
@click.option("--oa", "oa_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--policy", "policy_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--x0", default=None, help="Initial state override, comma-separated.")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False), help="CSV to write.")
@handle_errors
def simulate(config, oa_path, policy_path, x0, out):
    """Roll the policy out on the true dynamics and verify the guarantees."""
    cfg = _load_config(config, x0=x0)
    oa, _ = load_overapprox(oa_path)
    policy = load_policy(policy_path)
    traj = rollout(cfg.system, oa, policy, cfg.x0)
    write_trajectory_csv(traj, out)
    for t, r in enumerate(traj.results):
        logging.getLogger(__name__).info("t=%d %s iterations=%d residual=%.2e", t, r.method.value,
                                         r.iterations, r.residual)
    rep = verify_trajectory(traj, cfg.system.X, cfg.system.U, oa.err_box, policy.alpha, cfg.objective_component)
    click.echo(rep.summary())
    click.echo(f"max iterations {max((r.iterations for r in traj.results), default=0)}")
    if not rep.passed:
        sys.exit(1)


@main.command()
@click.argument("csvs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@click.option("--alpha", "alphas", multiple=True, type=float, help="Vertical reference line (repeatable).")
@click.option("--label", "labels", multiple=True, help="Legend label per CSV (default: file name).")
@click.option("--config", default=None, help="Config whose state box is outlined.")
@click.option("--title", default="")
@handle_errors
def plot(csvs, out, alphas, labels, config, title):
    """Phase-plane SVG of two-state trajectory CSVs."""
    trajs = []
    for path in csvs:
        data = read_trajectory_csv(path)
        if data["n_x"] != 2:
            raise ValueError(f"{path}: unsupported state dimension {data['n_x']} (need 2)")
        trajs.append(data["states"])
    labels = list(labels) + [click.format_filename(p) for p in csvs[len(labels):]]
    X = load_system_config(config).system.X if config else None
    write_svg(out, phase_plane_svg(trajs, labels, X, alphas, title))


@main.command("reproduce")
@click.argument("experiment", type=click.Choice(["exp1", "exp2"]))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--x0", default=None, help="Initial state override, comma-separated.")
@handle_errors
def reproduce_cmd(experiment, out_dir, seed, x0):
    """Run the full pipeline for a bundled experiment and write manifest.json."""
    cfg = _load_config(experiment, x0=x0)
    man = reproduce(experiment, out_dir, seed, cfg)
    for mode in ("informed", "uninformed"):
        if mode in man.alpha:
            click.echo(f"alpha_{mode} = {man.alpha[mode]:.6g}")
        else:
            click.echo(f"{mode}: {man.errors.get(mode, 'not run')}")
    for k, v in sorted(man.checks.items()):
        click.echo(f"{k}: {'pass' if v else 'FAIL'}")
    if any("infeasible" in str(v) for v in man.errors.values()):
        sys.exit(EXIT_INFEASIBLE)
    if man.errors:
        sys.exit(EXIT_NUMERICAL)


if __name__ == "__main__":  # pragma: no cover
    main()

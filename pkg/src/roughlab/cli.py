"""Command-line entry points: ``lab``, ``sde``, ``she`` and ``sewing``.

Exit codes: 0 when every declared check passes, 1 when a check fails, 2 on
usage or configuration errors.
"""

from __future__ import annotations

import csv
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from . import __version__, fbm, harness, metrics, sde, sewing, she
from .drifts import admissible_weak, mollify, parse_drift


def drift_for_alpha(alpha: float) -> str:
    """Catalog drift id with regularity ``alpha``."""
    if alpha == -1.0:
        return "dirac@0:mass=1"
    if -1.0 < alpha < 0.0:
        return f"weierstrass:gamma={alpha + 1.0:g}:deriv"
    if alpha >= 0.0:
        return "smooth:sin"
    raise click.BadParameter(f"no catalog drift with alpha={alpha}; pass --drift", param_hint="--alpha")


def _resolve_drift(drift: str | None, alpha: float | None) -> str:
    if drift is None:
        return drift_for_alpha(-1.0 if alpha is None else alpha)
    try:
        parse_drift(drift)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--drift") from None
    return drift


def _emit(out: str | None, name: str, report: dict, columns: dict | None = None) -> None:
    text = harness.dumps_report(report)
    if out is None:
        click.echo(text, nl=False)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{name}.json").write_text(text)
    if columns:
        keys = list(columns)
        with open(d / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for row in zip(*(np.asarray(columns[k]).tolist() for k in keys)):
                w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    click.echo(f"wrote {d / (name + '.json')}")


def _run_suite(suite: str, seed: int, out: str | None, workers: int = 1, **params) -> None:
    try:
        cfg = harness.ExperimentConfig.default(suite, seed, **{k: v for k, v in params.items() if v is not None})
    except harness.ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    report = harness.run_experiment(cfg, workers=workers, out_dir=out)
    report.pop("_elapsed", None)
    if out is None:
        click.echo(harness.dumps_report(report), nl=False)
    else:
        click.echo(f"wrote {Path(out) / (suite + '.json')}")
    sys.exit(0 if report["passed"] else 1)


def _common(f):
    for opt in reversed(
        [
            click.option("--alpha", type=float, default=None, help="regularity; picks a catalog drift when --drift is absent"),
            click.option("--drift", type=str, default=None, help="drift id, e.g. dirac@0:mass=1"),
            click.option("--n-moll", "n_moll", type=int, default=256, show_default=True, help="mollification level"),
            click.option("--paths", type=int, default=1000, show_default=True),
            click.option("--steps", type=int, default=1024, show_default=True),
            click.option("--seed", type=int, default=7, show_default=True),
            click.option("--out", type=click.Path(file_okay=False), default=None, help="output directory (stdout JSON if absent)"),
        ]
    ):
        f = opt(f)
    return f


_hurst = click.option("--hurst", type=float, default=0.25, show_default=True)
_lambda = click.option("--lambda", "lambdas", type=float, multiple=True, help="repeatable; lambda grid")


# lab ----------------------------------------------------------------------

@click.group()
@click.version_option(__version__)
def lab():
    """Run named experiment suites."""


@lab.command("list")
def lab_list():
    """List suites with the acceptance criterion each one covers."""
    for sid, crit, desc in harness.list_suites():
        click.echo(f"{sid:26s} {crit if crit is not None else '-':>3}  {desc}")


@lab.command("run")
@click.argument("suite")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def lab_run(suite, config_path, seed, workers, out):
    """Run SUITE and write its JSON report, CSV tables and timing file."""
    try:
        if config_path:
            cfg = harness.ExperimentConfig.from_file(config_path, suite)
        else:
            cfg = harness.ExperimentConfig.from_mapping({"experiment": {"id": suite}})
    except (harness.ConfigError, ValueError) as exc:
        raise click.UsageError(str(exc)) from None
    if seed is not None:
        cfg = cfg.with_seed(seed)
    if workers < 1:
        raise click.UsageError("--workers must be >= 1")
    report = harness.run_experiment(cfg, workers=workers, out_dir=out)
    elapsed = report.pop("_elapsed")
    for c in report["checks"]:
        click.echo(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}")
    click.echo(f"{suite}: {'PASS' if report['passed'] else 'FAIL'} ({elapsed:.1f}s)")
    sys.exit(0 if report["passed"] else 1)


# sde ----------------------------------------------------------------------

@click.group("sde")
def sde_cli():
    """Mollified fBM-driven SDEs."""


def _sde_setup(hurst, alpha, drift, n_moll, paths, steps, seed, x0=0.0):
    drift = _resolve_drift(drift, alpha)
    b = parse_drift(drift)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        cfg = sde.SdeConfig(x0, b, n_moll, hurst, steps, seed=seed)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    path = fbm.sample_fbm(steps, 1.0 / steps, hurst, seed=seed, n_paths=paths)
    return drift, cfg, path


@sde_cli.command("solve")
@_hurst
@_common
@click.option("--x0", type=float, default=0.0, show_default=True)
def sde_solve(hurst, alpha, drift, n_moll, paths, steps, seed, out, x0):
    """Euler solutions under b_n; per-path summaries and aggregates."""
    drift, cfg, path = _sde_setup(hurst, alpha, drift, n_moll, paths, steps, seed, x0)
    sol = sde.solve_euler(cfg, path, on_nonfinite="flag")
    cols = {"path": np.arange(paths), **sde.summarize_paths(sol)}
    report = {
        "command": "sde solve",
        "drift": drift,
        "hurst": hurst,
        "n_moll": n_moll,
        "admissible": admissible_weak(cfg.drift.nominal_alpha, hurst),
        "x_final": metrics.mean_estimate(sol.x_values[:, -1, 0]).as_dict(),
        "psi_final_l2": metrics.l2_norm_estimate(sol.psi_values[:, -1, 0]).as_dict(),
        "failed": int(sol.failed.sum()),
    }
    _emit(out, "sde_solve", report, cols)


@sde_cli.command("couple")
@_hurst
@_common
@_lambda
@click.option("--n-g", "n_g", type=int, default=64, show_default=True, help="mollification level of the comparison drift g")
def sde_couple(hurst, alpha, drift, n_moll, paths, steps, seed, out, lambdas, n_g):
    """Pushed coupling X vs Y~ for each lambda; sup gaps and TV bounds."""
    lambdas = lambdas or (8.0, 16.0, 32.0, 64.0)
    drift, cfg, path = _sde_setup(hurst, alpha, drift, n_moll, paths, steps, seed)
    g = mollify(cfg.drift, n_g)
    per, cols = [], {"path": np.arange(paths)}
    for lam in lambdas:
        try:
            run = sde.coupled_pair(cfg, g, 0.0, lam, path, with_reference=paths >= 100)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from None
        entry = {"lambda": lam, "sup_gap_l2": metrics.l2_norm_estimate(run.sup_gap()).as_dict()}
        if paths >= 100:
            entry.update(sde.girsanov_tv_report(run))
        per.append(entry)
        cols[f"sup_gap_lambda={lam:g}"] = run.sup_gap()
    report = {"command": "sde couple", "drift": drift, "hurst": hurst, "n_moll": n_moll, "n_g": n_g, "per_lambda": per}
    if len(lambdas) >= 3:
        report["fit"] = metrics.scaling_exponent(lambdas, [e["sup_gap_l2"]["value"] for e in per]).as_dict()
    _emit(out, "sde_couple", report, cols)


@sde_cli.command("scaling")
@_hurst
@_common
@_lambda
@click.option("--workers", type=int, default=1, show_default=True)
def sde_scaling(hurst, alpha, drift, n_moll, paths, steps, seed, out, lambdas, workers):
    """Exponentially weighted functional: L2 norm against lambda."""
    _run_suite(
        "exp-weight-scaling", seed, out, workers,
        H=hurst, drift=_resolve_drift(drift, alpha), n_moll=n_moll, paths=paths, n_steps=steps,
        lambdas=list(lambdas) or None,
    )


@sde_cli.command("weak-cauchy")
@_hurst
@_common
@click.option("--levels", type=str, default=None, help="comma list of mollification levels")
@click.option("--workers", type=int, default=1, show_default=True)
def sde_weak_cauchy(hurst, alpha, drift, n_moll, paths, steps, seed, out, levels, workers):
    """Same-noise gaps and time-1 W1 between consecutive mollification levels."""
    _run_suite(
        "sde-weak-cauchy", seed, out, workers,
        H=hurst, drift=_resolve_drift(drift, alpha), paths=paths, n_steps=steps, levels=levels, contrast_paths=0,
    )


@sde_cli.command("min-construction")
@_hurst
@_common
@click.option("--workers", type=int, default=1, show_default=True)
def sde_min_construction(hurst, alpha, drift, n_moll, paths, steps, seed, out, workers):
    """Residual of the pointwise minimum of two solutions (nonnegative measure drifts)."""
    drift = drift or "measure:uniform[0,0.5]"
    if not getattr(parse_drift(drift), "nonnegative", False):
        raise click.UsageError("min-construction needs a nonnegative-measure drift")
    _run_suite("min-construction", seed, out, workers, H=hurst, drift=drift, pairs=paths, n_steps=steps)


# she ----------------------------------------------------------------------

@click.group("she")
def she_cli():
    """Stochastic heat equation on [0, 1] with a spectral mild solver."""


_bc = click.option("--bc", type=click.Choice(["neumann", "periodic"]), default="neumann", show_default=True)
_modes = click.option("--modes", type=int, default=128, show_default=True)


def _she_setup(bc, modes, alpha, drift, n_moll, steps, paths, seed):
    drift = _resolve_drift(drift, alpha)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        try:
            cfg = she.SheConfig(parse_drift(drift), n_moll, bc, modes, steps, seed=seed)
            cfg.basis
        except ValueError as exc:
            raise click.UsageError(str(exc)) from None
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    return drift, cfg, she.sample_noise(cfg, range(paths))


def _snapshot(out, name, field: she.SpaceTimeField):
    if out is None:
        return
    Path(out).mkdir(parents=True, exist_ok=True)
    with open(Path(out) / f"{name}.member0.csv", "w") as fh:
        field.to_csv(fh, 0)


@she_cli.command("convolution")
@_bc
@_modes
@_common
def she_convolution(bc, modes, alpha, drift, n_moll, paths, steps, seed, out):
    """Stochastic convolution; variance against the exact series."""
    drift, cfg, noise = _she_setup(bc, modes, alpha, drift, n_moll, steps, paths, seed)
    field = she.sample_stochastic_convolution(cfg, noise, store_every=max(1, steps // 16))
    xs = field.grid
    emp = field.values[:, -1].var(axis=0)
    exact = she.variance_series(cfg.basis, cfg.T, xs)
    report = {"command": "she convolution", "bc": bc, "modes": modes, "empirical_var_T": emp, "series_var_T": exact}
    _emit(out, "she_convolution", report, {"x": xs, "empirical_var": emp, "series_var": exact})
    _snapshot(out, "she_convolution", field)


@she_cli.command("solve")
@_bc
@_modes
@_common
def she_solve(bc, modes, alpha, drift, n_moll, paths, steps, seed, out):
    """Mild solution under b_n."""
    drift, cfg, noise = _she_setup(bc, modes, alpha, drift, n_moll, steps, paths, seed)
    field = she.solve_mild(cfg, noise, store_every=max(1, steps // 16))
    final = field.values[:, -1]
    report = {"command": "she solve", "bc": bc, "modes": modes, "drift": drift, "n_moll": n_moll,
              "u_T_mean": final.mean(axis=0), "u_T_l2": np.sqrt((final**2).mean(axis=0))}
    _emit(out, "she_solve", report, {"x": field.grid, "mean": final.mean(axis=0), "sd": final.std(axis=0)})
    _snapshot(out, "she_solve", field)


@she_cli.command("couple")
@_bc
@_modes
@_common
@_lambda
@click.option("--n-g", "n_g", type=int, default=64, show_default=True)
def she_couple(bc, modes, alpha, drift, n_moll, paths, steps, seed, out, lambdas, n_g):
    """Pushed SHE coupling; C^{0,0} L2 gap and Pinsker-type bounds."""
    lambdas = lambdas or (8.0, 16.0, 32.0, 64.0)
    drift, cfg, noise = _she_setup(bc, modes, alpha, drift, n_moll, steps, paths, seed)
    g = mollify(cfg.drift, n_g)
    per = []
    for lam in lambdas:
        try:
            run = she.coupled_field(cfg, g, lam, noise, store_every=max(1, steps // 64))
        except ValueError as exc:
            raise click.UsageError(str(exc)) from None
        entry = {"lambda": lam, "gap_sup_l2": she.sup_l2_norm(run.gap).as_dict()}
        if paths >= 100:
            entry.update(she.pinsker_bound_she(run))
        per.append(entry)
    report = {"command": "she couple", "bc": bc, "modes": modes, "drift": drift, "per_lambda": per}
    _emit(out, "she_couple", report, {"lambda": list(lambdas), "gap_sup_l2": [e["gap_sup_l2"]["value"] for e in per]})


@she_cli.command("scaling")
@_bc
@_modes
@_common
@_lambda
@click.option("--workers", type=int, default=1, show_default=True)
def she_scaling(bc, modes, alpha, drift, n_moll, paths, steps, seed, out, lambdas, workers):
    """Regularization functional: L2 norm against lambda."""
    _run_suite(
        "she-lambda-scaling", seed, out, workers,
        bc=bc, modes=modes, drift=_resolve_drift(drift, alpha), n_moll=n_moll, fields=paths, n_steps=steps,
        lambdas=list(lambdas) or None,
    )


@she_cli.command("weak-cauchy")
@_bc
@_modes
@_common
@click.option("--levels", type=str, default=None)
@click.option("--workers", type=int, default=1, show_default=True)
def she_weak_cauchy(bc, modes, alpha, drift, n_moll, paths, steps, seed, out, levels, workers):
    """Weighted-norm gaps between consecutive mollification levels."""
    _run_suite(
        "she-weak-cauchy", seed, out, workers,
        bc=bc, modes=modes, drift=_resolve_drift(drift, alpha), fields=paths, n_steps=steps, levels=levels,
    )


# sewing -------------------------------------------------------------------

@click.group("sewing")
def sewing_cli():
    """Dyadic sewing of germs."""


@sewing_cli.command("run")
@click.option("--germ", "kind", type=click.Choice(["additive", "quadratic", "drift"]), required=True)
@click.option("--hurst", type=float, default=0.3, show_default=True)
@click.option("--alpha", type=float, default=-1.0, show_default=True)
@click.option("--levels", type=int, default=8, show_default=True, help="finest dyadic level")
@click.option("--paths", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def sewing_run(kind, hurst, alpha, levels, paths, seed, out):
    """Sew a germ over [0, 1] and report per-level sums and fitted exponents."""
    if levels < 1:
        raise click.UsageError("--levels must be >= 1")
    report = {"command": "sewing run", "germ": kind, "levels": levels}
    if kind == "additive":
        germ = sewing.additive_germ(np.sin)
        exact = float(np.sin(1.0))
    elif kind == "quadratic":
        germ = sewing.quadratic_germ()
        exact = 0.0
    else:
        n_steps = 2 ** max(levels, 10)
        path = fbm.sample_fbm(n_steps, 1.0 / n_steps, hurst, seed=seed, n_paths=paths)
        f = mollify(parse_drift(drift_for_alpha(alpha)), 256)
        germ = sewing.conditional_drift_germ(f, 0.0, path)
        exact = sewing.pathwise_integral(f, 0.0, path, 0.0, 1.0)
        report.update({"hurst": hurst, "alpha": alpha, "paths": paths, "n_steps": n_steps})
    value, rep = sewing.sew(germ, 0.0, 1.0, levels)
    report["sewing"] = rep.as_dict()
    if np.ndim(value):
        report["limit_minus_quadrature"] = metrics.mean_estimate(value - exact).as_dict()
    else:
        report["limit"] = float(value)
        report["exact"] = exact
    cols = {"level": rep.levels, "sum_mean": [float(np.mean(s)) for s in rep.sums]}
    _emit(out, "sewing_run", report, cols)


def main():  # pragma: no cover
    lab()

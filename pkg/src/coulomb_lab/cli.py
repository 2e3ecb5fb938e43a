"""Command-line driver: ``coulomb-lab verify | converge | holonomy | decompose``.

Exit codes: 0 when everything passes, 1 when a suite or study fails, 2 for
usage errors (bad config, unusable resolutions, unknown suite names).
Reports are JSON with sorted keys and no timestamps; wall-clock times go to
a separate ``timings.json`` so that reports are byte-reproducible.
"""
from __future__ import annotations

import configparser
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from .geometry import GeometryError, ResolutionError, build_grid, load_metric_config
from .io import (
    FormatError,
    IntegrityError,
    read_field,
    save_certificate,
    verify_certificate_file,
    write_csv,
    write_field,
    write_json,
)
from .studies import STUDIES, metric_for

DEFAULT_RESOLUTIONS = [(16, 17), (32, 33)]


def _threads():
    try:
        return max(1, int(os.environ.get("COULOMB_LAB_THREADS", "1")))
    except ValueError:
        return 1


class Run:
    """Parsed configuration plus output helpers."""

    def __init__(self, config, out, seed, tau_sign=1.0):
        try:
            if config is None:
                self.spec, cfg = metric_for("flat"), {"family": "flat"}
            else:
                self.spec, cfg = load_metric_config(config)
        except (OSError, configparser.Error, GeometryError, ValueError) as exc:
            raise click.UsageError(f"cannot read config: {exc}")
        res = cfg.get("resolutions")
        if res is None:
            res = [(cfg["n_lat"], cfg.get("n_norm", cfg["n_lat"] + 1))] if "n_lat" in cfg else DEFAULT_RESOLUTIONS
        res = [tuple(map(int, r)) for r in res]
        if any(b[0] <= a[0] or b[1] <= a[1] for a, b in zip(res, res[1:])):
            raise click.UsageError("resolutions must be ascending")
        try:
            for n, m in res:
                build_grid(self.spec, n, m)
        except ResolutionError as exc:
            raise click.UsageError(str(exc))
        cfg["resolutions"] = res
        if seed is not None:
            cfg["seed"] = seed
        cfg.setdefault("seed", 0)
        cfg["tau_sign"] = tau_sign
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.timings = {}

    def floats(self, key, default):
        raw = self.cfg.get(key)
        if raw is None:
            return list(default)
        try:
            return [float(x) for x in str(raw).split(",") if x.strip()]
        except ValueError:
            raise click.UsageError(f"config key {key!r} must be a list of numbers")

    def integer(self, key, default):
        try:
            return int(self.cfg.get(key, default))
        except ValueError:
            raise click.UsageError(f"config key {key!r} must be an integer")

    def resolution(self, key, default):
        raw = self.cfg.get(key)
        if raw is None:
            return default
        try:
            n, m = (int(x) for x in str(raw).lower().split("x"))
        except ValueError:
            raise click.UsageError(f"config key {key!r} must look like 12x13")
        return n, m

    def config_summary(self):
        return {
            "family": self.spec.family,
            "params": {k: list(v) if isinstance(v, (list, tuple)) else v for k, v in self.spec.params.items()},
            "resolutions": [list(r) for r in self.cfg["resolutions"]],
            "seed": self.cfg["seed"],
            "tau_sign": self.cfg["tau_sign"],
        }

    def finish(self, command, body, passed):
        report = {"command": command, "config": self.config_summary(), "passed": bool(passed), **body}
        write_json(self.out / "report.json", report)
        write_json(self.out / "timings.json", self.timings)
        for line in _failures(body):
            click.echo(line, err=True)
        click.echo(f"{command}: {'PASS' if passed else 'FAIL'} (report in {self.out / 'report.json'})")
        sys.exit(0 if passed else 1)


def _failures(body):
    for s in body.get("suites", []):
        yield from s.get("failures", [])


def _run_parallel(names, job):
    """Run job(name) for every name in a pool; results keep input order."""
    timings = {}

    def timed(name):
        t0 = time.perf_counter()
        out = job(name)
        timings[name] = time.perf_counter() - t0
        return out

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(timed, names))
    return results, timings


def _common(fn):
    fn = click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                      help="Key-value config file.")(fn)
    fn = click.option("--out", "out", type=click.Path(file_okay=False), default="coulomb_lab_out",
                      show_default=True, help="Output directory.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Random seed (overrides the config).")(fn)
    return fn


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Numerical checks for Coulomb-gauge geometry on a slab."""


@cli.command()
@_common
@click.option("--suite", "suites", multiple=True, help="Suite identifier (repeatable). Default: all.")
@click.option("--debug-flip-tau", is_flag=True, help="Flip the sign of tau in the boundary identity.")
def verify(config, out, seed, suites, debug_flip_tau):
    """Run the invariant suites at the smallest resolution."""
    from .suites import SUITES, run_suite

    names = list(suites) or list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise click.UsageError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    run = Run(config, out, seed, -1.0 if debug_flip_tau else 1.0)
    results, run.timings = _run_parallel(names, lambda n: run_suite(n, run.spec, run.cfg))
    for r in results:
        click.echo(f"{r.identifier}: {'PASS' if r.passed else 'FAIL'}")
    body = {"suites": [r.as_dict() for r in results]}
    run.finish("verify", body, all(r.passed for r in results))


@cli.command()
@_common
@click.option("--suite", "suites", multiple=True, help="Study name (repeatable). Default: all.")
def converge(config, out, seed, suites):
    """Convergence studies over the configured resolutions; one CSV per study."""
    names = list(suites) or list(STUDIES)
    unknown = [n for n in names if n not in STUDIES]
    if unknown:
        raise click.UsageError(f"unknown study: {', '.join(unknown)}; choose from {', '.join(STUDIES)}")
    run = Run(config, out, seed)
    if len(run.cfg["resolutions"]) < 2:
        raise click.UsageError("converge needs at least two resolutions")

    def job(name):
        return STUDIES[name](run.cfg["resolutions"], family=run.spec.family, params=run.spec.params,
                             seed=run.cfg["seed"])

    studies, run.timings = _run_parallel(names, job)
    suites_out = []
    for st in studies:
        write_csv(run.out / f"{st.name}.csv", ["h", "residual", "fitted_order"], st.rows())
        d = st.as_dict()
        d["identifier"] = st.name
        d["failures"] = [] if st.passed else [f"{st.name}: fitted order {st.order:.3f} < {st.threshold}"]
        suites_out.append(d)
        tag = "exact to roundoff" if st.exact else f"order {st.order:.3f}"
        click.echo(f"{st.name}: {'PASS' if st.passed else 'FAIL'} ({tag})")
    run.finish("converge", {"suites": suites_out}, all(s.passed for s in studies))


@cli.command()
@_common
def holonomy(config, out, seed):
    """Small-square holonomy against the Coulomb curvature."""
    from .bundle import certify_horizontal, horizontal_project
    from .holonomy import LiftError, curvature_holonomy_study
    from .solver import ConnectionState
    from .studies import random_conductor, random_modes

    run = Run(config, out, seed)
    eps = run.floats("eps", (0.2, 0.1, 0.05))
    steps = run.integer("steps", 16)
    n, m = run.resolution("holonomy_resolution", (12, 13))
    try:
        grid = build_grid(run.spec, n, m)
    except ResolutionError as exc:
        raise click.UsageError(str(exc))
    A = ConnectionState.flat(grid, tol=1e-12)
    rng = np.random.default_rng(run.cfg["seed"])
    pair = []
    for _ in range(2):
        h = horizontal_project(A, random_conductor(grid, random_modes(rng, 9), 1), tol=1e-12).form
        pair.append(certify_horizontal(A, h * (1.0 / h.sup())))
    t0 = time.perf_counter()
    try:
        study = curvature_holonomy_study(A, *pair, eps_list=eps, steps=steps)
    except LiftError as exc:
        click.echo(f"holonomy: lift failed at {exc}", err=True)
        sys.exit(1)
    run.timings["holonomy"] = time.perf_counter() - t0
    (run.out / "holonomy.csv").write_text(study.to_csv(), encoding="utf-8")
    final = study.coeff_error[-1]
    ok = final <= 0.05 and (len(eps) < 2 or study.order >= 0.9)
    failures = []
    if final > 0.05:
        failures.append(f"holonomy: relative error {final:.3e} at eps = {eps[-1]} exceeds 5%")
    if len(eps) >= 2 and study.order < 0.9:
        failures.append(f"holonomy: fitted order {study.order:.3f} < 0.9")
    click.echo(f"holonomy: {'PASS' if ok else 'FAIL'} (error {final:.3e}, order {study.order:.3f})")
    body = {
        "suites": [{
            "identifier": "holonomy",
            "passed": ok,
            "failures": failures,
            "metrics": {"grid": [n, m], "steps": steps, "eps": eps, "coeff_error": study.coeff_error,
                        "fitted_order": study.order, "curvature_sup": study.curvature_norm,
                        "rows": study.rows},
        }]
    }
    run.finish("holonomy", body, ok)


@cli.command()
@_common
@click.option("--field", "field_path", type=click.Path(dir_okay=False), default=None,
              help="Serialized conductor 0-form; default is a seeded random field.")
def decompose(config, out, seed, field_path):
    """Write a conductor 0-form's Laplacian as a sum of wedge-dot products."""
    from .forms import FormField
    from .solver import ConnectionState, green_arrays
    from .spans import SpanError, decompose_gauge_element
    from .studies import _eval_modes, random_modes

    run = Run(config, out, seed)
    if field_path is not None:
        try:
            g = read_field(field_path)
        except (OSError, FormatError, IntegrityError) as exc:
            raise click.UsageError(f"cannot read field: {exc}")
        if g.degree != 0:
            raise click.UsageError("decompose needs a 0-form field")
    else:
        n, m = run.cfg["resolutions"][0]
        grid = build_grid(run.spec, n, m)
        modes = random_modes(np.random.default_rng(run.cfg["seed"]), 3)
        w = np.stack([_eval_modes(grid, x) for x in modes])
        g = FormField(0, green_arrays(ConnectionState.flat(grid, tol=1e-12), w, tol=1e-12)[0], grid)
    write_field(run.out / "field.clf", g)
    t0 = time.perf_counter()
    try:
        rep = decompose_gauge_element(g)
    except SpanError as exc:
        click.echo(f"theorem-decomposition: {exc}", err=True)
        sys.exit(1)
    run.timings["decompose"] = time.perf_counter() - t0
    cert_dir = run.out / "certificate"
    save_certificate(rep.certificate, cert_dir)
    check = verify_certificate_file(cert_dir)
    ok = bool(check["bit_exact"])
    failures = [] if ok else ["serialization: reloaded certificate is not bit-exact"]
    click.echo(f"theorem-decomposition: {'PASS' if ok else 'FAIL'} "
               f"({check['terms']} terms, reconstruction {rep.reconstruction_error:.3e}, "
               f"boundary residual {rep.t_residual:.3e})")
    body = {
        "suites": [{"identifier": "theorem-decomposition", "passed": ok, "failures": failures,
                    "metrics": {**rep.as_dict(), "reload": check}}]
    }
    run.finish("decompose", body, ok)


def main(argv=None):
    cli.main(args=argv, prog_name="coulomb-lab")


if __name__ == "__main__":
    main()

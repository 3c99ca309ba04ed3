"""Command-line entry point.

One binary with subcommands covering the pipeline: scene tracing
(``viewfactors``), single network solves (``solve``), trade-study sweeps
(``sweep``), the nominal end-to-end run (``final``) and visibility curve
tabulation (``visibility``).  All outputs are deterministic: the same
config produces byte-identical artifacts.

Errors exit nonzero with a machine-readable category prefix:
``config`` (2), ``geometry`` (3), ``convergence`` (4), ``io`` (5).
"""

from __future__ import annotations

import csv
import functools
import hashlib
import os
import sys

import click
import yaml

from . import __version__
from .decoherence import (ExperimentTimeline, Particle, emit_visibility_curves,
                          visibility as compute_visibility, EnvState)
from .geometry import GeometryError, load_scene
from .network import (NetworkError, ReferenceConfig, StrutSpec, load_network)
from .solver import SolveOptions, SolverError, solve_steady_state
from .studies import (DEFAULT_RAYS, DEFAULT_SEED, StudyError, ViewFactorCache,
                      run_final_configuration, sweep_coating,
                      sweep_dissipation, sweep_shield_geometry,
                      sweep_strut_couplings, read_study_csv)
from .viewfactor import RayBudget, check_reciprocity, trace_view_factors

_EXIT = {"config": 2, "geometry": 3, "convergence": 4, "io": 5}


def _fail(category, message):
    click.echo(f"error[{category}]: {message}", err=True)
    sys.exit(_EXIT[category])


def _catching(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GeometryError as exc:
            _fail("geometry", exc)
        except SolverError as exc:
            _fail("convergence", exc)
        except (NetworkError, StudyError, ValueError, KeyError,
                yaml.YAMLError) as exc:
            _fail("config", exc)
        except OSError as exc:
            _fail("io", exc)
    return wrapper


def _default_out():
    return os.environ.get("CRYOBENCH_OUT", ".")


def _load_config(path, sets):
    """Load a YAML config and apply dotted-key overrides."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise StudyError(f"config {path} must be a mapping")
    for item in sets:
        if "=" not in item:
            raise StudyError(f"--set needs key=value, got {item!r}")
        key, _, raw = item.partition("=")
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise StudyError(f"--set {key}: {p} is not a mapping")
        node[parts[-1]] = yaml.safe_load(raw)
    return doc


def _config_hash(doc):
    return hashlib.sha256(
        yaml.safe_dump(doc, sort_keys=True).encode()).hexdigest()


def _solver_options(tol, max_iter):
    opts = SolveOptions()
    if tol is not None:
        opts.tolerance = tol
    if max_iter is not None:
        opts.max_iterations = max_iter
    return opts


def _reference_config(overrides):
    """ReferenceConfig from a flat dict with dotted strut keys."""
    overrides = dict(overrides or {})
    strut_kwargs = {}
    for key in list(overrides):
        if key.startswith("strut."):
            strut_kwargs[key.split(".", 1)[1]] = overrides.pop(key)
    strut = StrutSpec(**strut_kwargs) if strut_kwargs else StrutSpec()
    try:
        return ReferenceConfig(strut=strut, **overrides)
    except TypeError as exc:
        raise StudyError(f"bad reference-config override: {exc}")


@click.group()
@click.version_option(__version__)
def main():
    """Passive-cooling thermal simulator and visibility predictor."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Scene YAML file.")
@click.option("--out", default=None, help="Output .npz path.")
@click.option("--rays", default=DEFAULT_RAYS, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@_catching
def viewfactors(config_path, out, rays, seed):
    """Trace the Monte Carlo view-factor matrix of a scene."""
    scene = load_scene(config_path)
    vfm = trace_view_factors(scene, RayBudget(rays=rays, seed=seed,
                                              batch=min(rays, 20_000)))
    rep = check_reciprocity(vfm, scene)
    out = out or os.path.join(_default_out(), "viewfactors.npz")
    vfm.save(out)
    click.echo(f"{out}: {scene.n_facets} facets, {rays} rays/side, "
               f"reciprocity max {rep.max_sigma_ratio:.2f} sigma over "
               f"{rep.n_pairs} pairs "
               f"({'ok' if rep.consistent else 'INCONSISTENT'})")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Network YAML file.")
@click.option("--out", default=None, help="Output CSV path.")
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=None)
@_catching
def solve(config_path, out, tol, max_iter):
    """Solve a network file and write node temperatures."""
    net = load_network(config_path)
    result = solve_steady_state(net, _solver_options(tol, max_iter))
    out = out or os.path.join(_default_out(), "temperatures.csv")
    with open(out, "w", newline="") as fh:
        fh.write(f"# cryobench solve: iterations={result.iterations} "
                 f"residual={result.residual_norm:.12g}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "kind", "temperature_K"])
        for nid in sorted(net.nodes):
            w.writerow([nid, net.nodes[nid].kind,
                        format(result.temperatures[nid], ".12g")])
    click.echo(f"{out}: {len(net.nodes)} nodes, "
               f"{result.iterations} iterations")


_STUDIES = {
    "shield_geometry": (sweep_shield_geometry, ("phi3", "d3")),
    "strut_couplings": (sweep_strut_couplings, ("gl_st_st", "gl_st_rs")),
    "dissipation": (sweep_dissipation, ("ccd_q", "harness_area")),
    "coating": (sweep_coating, ("coating_fraction",)),
}


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Study spec YAML file.")
@click.option("--out", default=None, help="Output CSV path.")
@click.option("--rays", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=None)
@click.option("--set", "sets", multiple=True,
              help="Dotted-key config override, repeatable.")
@click.option("--resume", is_flag=True,
              help="Reuse rows already present in the output CSV.")
@_catching
def sweep(config_path, out, rays, seed, tol, max_iter, sets, resume):
    """Run a trade-study sweep from a study spec file."""
    doc = _load_config(config_path, sets)
    study = doc.get("study")
    if study not in _STUDIES:
        raise StudyError(f"unknown study {study!r}; "
                         f"choose from {sorted(_STUDIES)}")
    fn, axis_names = _STUDIES[study]
    axes_doc = doc.get("axes", {})
    kwargs = {}
    if study == "shield_geometry":
        kwargs["phi3_values"] = axes_doc.get("phi3")
        kwargs["d3_values"] = axes_doc.get("d3")
        kwargs["n_shields"] = int(doc.get("n_shields", 3))
    elif study == "coating":
        if "coating_fraction" in axes_doc:
            kwargs["fractions"] = axes_doc["coating_fraction"]
        kwargs["include_lens"] = bool(doc.get("include_lens", True))
        kwargs["cfg"] = _reference_config(doc.get("overrides"))
    else:
        for name in axis_names:
            if name not in axes_doc:
                raise StudyError(f"study {study} needs axis {name!r}")
            kwargs[f"{name}_values"] = axes_doc[name]
        kwargs["cfg"] = _reference_config(doc.get("overrides"))

    out = out or os.path.join(_default_out(), f"{study}.csv")
    cache = ViewFactorCache(os.path.join(os.path.dirname(out) or ".",
                                         "vfcache"))
    rows = fn(rays=rays or int(doc.get("rays", DEFAULT_RAYS)),
              seed=seed if seed is not None else int(doc.get("seed",
                                                             DEFAULT_SEED)),
              cache=cache, solver=_solver_options(tol, max_iter),
              out=out, resume=resume, **kwargs)
    n_bad = sum(not r.converged for r in rows)
    click.echo(f"{out}: {len(rows)} rows, {n_bad} failed "
               f"(config {_config_hash(doc)[:12]})")


@main.command()
@click.option("--out", default=None, help="Output directory.")
@click.option("--rays", default=DEFAULT_RAYS, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=None)
@click.option("--set", "sets", multiple=True,
              help="ReferenceConfig override key=value, repeatable.")
@_catching
def final(out, rays, seed, tol, max_iter, sets):
    """Run the nominal configuration end to end.

    Emits the full node-temperature map plus a summary row with T_ob, T_tv,
    shield temperatures and the chained visibility prediction at
    T_env = T_int = T_tv.
    """
    overrides = {}
    for item in sets:
        key, _, raw = item.partition("=")
        overrides[key] = yaml.safe_load(raw)
    cfg = _reference_config(overrides)
    out = out or _default_out()
    os.makedirs(out, exist_ok=True)
    cache = ViewFactorCache(os.path.join(out, "vfcache"))
    row, temps, flows = run_final_configuration(
        rays=rays, seed=seed, cache=cache,
        solver=_solver_options(tol, max_iter), cfg=cfg)

    tpath = os.path.join(out, "final_temperatures.csv")
    with open(tpath, "w", newline="") as fh:
        fh.write(f"# cryobench final: scene={row.provenance['scene_hash']} "
                 f"rays={rays} seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "temperature_K"])
        for nid in sorted(temps):
            w.writerow([nid, format(temps[nid], ".12g")])

    vis = compute_visibility(Particle(), EnvState(t_env=row.t_tv,
                                                  t_int=row.t_tv),
                             ExperimentTimeline())
    spath = os.path.join(out, "final_summary.csv")
    with open(spath, "w", newline="") as fh:
        fh.write(f"# cryobench final: scene={row.provenance['scene_hash']} "
                 f"rays={rays} seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        cols = (["t_ob", "t_tv"] + sorted(row.shield_temps)
                + ["iterations", "residual", "visibility"])
        w.writerow(cols)
        w.writerow([format(row.t_ob, ".12g"), format(row.t_tv, ".12g")]
                   + [format(row.shield_temps[s], ".12g")
                      for s in sorted(row.shield_temps)]
                   + [row.iterations, format(row.residual, ".12g"),
                      format(vis.visibility, ".12g")])
    click.echo(f"{spath}: T_ob={row.t_ob:.2f} K, T_tv={row.t_tv:.2f} K, "
               f"V={vis.visibility:.4f}")


@main.command("visibility")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Visibility spec YAML.")
@click.option("--out", default=None, help="Output CSV path.")
@click.option("--set", "sets", multiple=True)
@_catching
def visibility_cmd(config_path, out, sets):
    """Tabulate interference-visibility curves to CSV.

    The spec may point at a study CSV (``from_study``) to chain the solved
    test-volume temperature in as the fixed environmental temperature.
    """
    doc = _load_config(config_path, sets)
    pd = doc.get("particle", {})
    eps = complex(float(pd.get("epsilon_real", 3.4)),
                  float(pd.get("epsilon_imag", 0.05)))
    particle = Particle(radius=float(pd.get("radius", 90e-9)),
                        density=float(pd.get("density", 5510.0)),
                        epsilon=eps)
    td = doc.get("timeline", {})
    timeline = ExperimentTimeline(t1=float(td.get("t1", 1.0)),
                                  t2=float(td.get("t2", 100.0)),
                                  separation=float(td.get("separation", 1e-7)))
    mode = doc.get("mode", "coupled")
    temps = doc.get("temperatures")
    if not temps:
        raise StudyError("visibility spec needs a temperatures list")
    t_env = doc.get("t_env")
    if doc.get("from_study"):
        rows = [r for r in read_study_csv(doc["from_study"])
                if r.converged and r.t_tv is not None]
        if not rows:
            raise StudyError(f"no converged rows in {doc['from_study']}")
        t_env = rows[-1].t_tv
    out = out or os.path.join(_default_out(), "visibility.csv")
    rows = emit_visibility_curves(
        out, particle, timeline, temps, mode=mode,
        t_env=float(t_env) if t_env is not None else None,
        pressure=float(doc.get("pressure", 0.0)))
    click.echo(f"{out}: {len(rows)} rows, mode={mode} "
               f"(config {_config_hash(doc)[:12]})")


if __name__ == "__main__":
    main()

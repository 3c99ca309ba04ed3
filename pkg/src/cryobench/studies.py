"""Trade-study sweeps over the reference instrument model.

Each study builds scenes, traces (or reuses cached) view factors, assembles
the network and solves it over a declared parameter grid, emitting one
:class:`StudyRow` per point.  Failed points are recorded as rows with
``converged=False``, never dropped.  All sweeps are deterministic and
restart-safe: a partially written CSV can be resumed and the finished file
is byte-identical to an uninterrupted run.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace
from itertools import product

from .geometry import (GeometryError, ShieldParams, build_reference_scene)
from .network import ReferenceConfig, StrutSpec, build_reference_network
from .solver import (SolveOptions, SolveResult, SolverError, flux_report,
                     solve_steady_state)
from .viewfactor import RayBudget, ViewFactorMatrix, cache_key, trace_view_factors

# Nominal shield geometry used by the non-geometric sweeps (the optimum of
# the radiative shield study at the default grid).
NOMINAL_PHI3 = 20.0        # deg
NOMINAL_D3 = 0.20          # m

DEFAULT_RAYS = 10_000      # per facet side
DEFAULT_SEED = 20200917

# Default grids.  phi3 stops at 35 deg and d3 at 0.20 m: the (40 deg,
# 0.20 m) combination collides with the bench and denser shields gain
# nothing at the default mesh.
DEFAULT_PHI3_GRID = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0]
DEFAULT_D3_GRID = [0.10, 0.15, 0.20]

CSV_FLOAT_FMT = ".12g"     # fixed float formatting keeps artifacts byte-stable


class StudyError(RuntimeError):
    """Invalid study specification."""


@dataclass
class SweepSpec:
    """A declared parameter sweep: ordered axes plus fixed overrides."""

    axes: list                          # [(name, [values...]), ...]
    overrides: dict = field(default_factory=dict)
    rays: int = DEFAULT_RAYS
    seed: int = DEFAULT_SEED
    solver: SolveOptions = field(default_factory=SolveOptions)
    out: str | None = None

    def __post_init__(self):
        if not self.axes:
            raise StudyError("sweep needs at least one axis")
        for name, values in self.axes:
            if not values:
                raise StudyError(f"axis {name!r} has no values")


@dataclass
class StudyRow:
    """One converged (or failed) sweep point."""

    params: dict                        # axis name -> value
    t_ob: float | None = None           # K
    t_tv: float | None = None           # K
    shield_temps: dict = field(default_factory=dict)   # shield id -> K
    iterations: int = 0
    residual: float | None = None       # W
    converged: bool = False
    error: str = ""
    provenance: dict = field(default_factory=dict)


class ViewFactorCache:
    """Per-geometry view-factor reuse, in memory and optionally on disk.

    Multi-axis sweeps over non-geometric parameters hit the same scene many
    times; the trace is by far the dominant cost, so one trace per distinct
    (scene, budget) is kept.
    """

    def __init__(self, directory=None):
        self.directory = directory
        self._mem = {}
        if directory:
            os.makedirs(directory, exist_ok=True)

    def get(self, scene, budget: RayBudget) -> ViewFactorMatrix:
        key = cache_key(scene, budget)
        if key in self._mem:
            return self._mem[key]
        if self.directory:
            path = os.path.join(self.directory, f"{key}.npz")
            if os.path.exists(path):
                vfm = ViewFactorMatrix.load(path)
                self._mem[key] = vfm
                return vfm
        vfm = trace_view_factors(scene, budget)
        self._mem[key] = vfm
        if self.directory:
            vfm.save(os.path.join(self.directory, f"{key}.npz"))
        return vfm


def test_volume_temperature(result: SolveResult) -> float:
    """Equilibrium temperature of the test-volume probe node (K)."""
    try:
        return result.temperatures["probe"]
    except KeyError:
        raise StudyError("solve result has no probe node")


# ---------------------------------------------------------------------------
# Point evaluation
# ---------------------------------------------------------------------------

def solve_reference_point(shield: ShieldParams, cfg: ReferenceConfig,
                          coating_fraction: float,
                          rays: int = DEFAULT_RAYS, seed: int = DEFAULT_SEED,
                          cache: ViewFactorCache | None = None,
                          solver: SolveOptions | None = None,
                          include_struts: bool = True,
                          include_lens: bool = True):
    """Build, trace, assemble and solve one reference configuration.

    Returns (scene, network, result).  Struts are meshed as occluders only
    when the conductive network is present, matching the model split between
    the radiative-only and full studies.
    """
    scene = build_reference_scene(shield, coating_fraction=coating_fraction,
                                  include_struts=include_struts,
                                  include_lens=include_lens)
    budget = RayBudget(rays=rays, seed=seed, batch=min(rays, 20_000))
    vfm = (cache or ViewFactorCache()).get(scene, budget)
    net = build_reference_network(scene, vfm, cfg)
    result = solve_steady_state(net, solver)
    return scene, net, result


def _row_from_result(params, scene, result, rays, seed):
    temps = result.temperatures
    shields = {nid: temps[nid] for nid in sorted(temps)
               if nid.startswith("shield")}
    return StudyRow(
        params=dict(params),
        t_ob=temps["bench"],
        t_tv=temps.get("probe"),
        shield_temps=shields,
        iterations=result.iterations,
        residual=result.residual_norm,
        converged=result.converged,
        provenance={"scene_hash": scene.scene_hash(),
                    "rays": rays, "seed": seed})


def _failed_row(params, exc):
    return StudyRow(params=dict(params), converged=False,
                    error=f"{type(exc).__name__}: {exc}")


# ---------------------------------------------------------------------------
# The four trade studies
# ---------------------------------------------------------------------------

def sweep_shield_geometry(phi3_values=None, d3_values=None, n_shields=3,
                          rays=DEFAULT_RAYS, seed=DEFAULT_SEED,
                          cache=None, solver=None, out=None, resume=False):
    """Radiative-only shield geometry study: T_ob over (phi3, d3).

    Conduction and dissipation are disabled and the bench top is bare, so
    the bench balance is set purely by its radiative environment; the
    shield-bottom blankets are also absent at this stage (bare gold
    underside).  Invalid geometries (shield/bench collision) become failure
    rows.
    """
    phi3_values = list(phi3_values if phi3_values is not None
                       else DEFAULT_PHI3_GRID)
    d3_values = list(d3_values if d3_values is not None else DEFAULT_D3_GRID)
    cache = cache or ViewFactorCache()
    cfg = ReferenceConfig(radiative_only=True, mli_layers=0)

    def point(params):
        shield = ShieldParams(phi3=params["phi3"], d3=params["d3"],
                              n_shields=n_shields)
        scene, _, result = solve_reference_point(
            shield, cfg, coating_fraction=0.0, rays=rays, seed=seed,
            cache=cache, solver=solver, include_struts=False)
        return _row_from_result(params, scene, result, rays, seed)

    axes = [("d3", d3_values), ("phi3", phi3_values)]
    return run_sweep("shield_geometry", axes, point, out=out, resume=resume,
                     meta={"rays": rays, "seed": seed, "n_shields": n_shields})


def sweep_strut_couplings(gl_st_st_values, gl_st_rs_values,
                          gl_st_ob=None, rays=DEFAULT_RAYS, seed=DEFAULT_SEED,
                          cache=None, solver=None, out=None, resume=False,
                          cfg: ReferenceConfig | None = None):
    """Full-network strut coupling study: T_ob over (GL_st,st, GL_st,rs)."""
    cache = cache or ViewFactorCache()
    base = cfg or ReferenceConfig()
    shield = ShieldParams(phi3=NOMINAL_PHI3, d3=NOMINAL_D3)

    def point(params):
        strut = replace(base.strut, gl_st_st=params["gl_st_st"],
                        gl_st_rs=params["gl_st_rs"],
                        **({"gl_st_ob": gl_st_ob} if gl_st_ob else {}))
        scene, _, result = solve_reference_point(
            shield, replace(base, strut=strut), coating_fraction=0.0,
            rays=rays, seed=seed, cache=cache, solver=solver)
        return _row_from_result(params, scene, result, rays, seed)

    axes = [("gl_st_rs", list(gl_st_rs_values)),
            ("gl_st_st", list(gl_st_st_values))]
    return run_sweep("strut_couplings", axes, point, out=out, resume=resume,
                     meta={"rays": rays, "seed": seed})


def sweep_dissipation(ccd_q_values, harness_area_values,
                      rays=DEFAULT_RAYS, seed=DEFAULT_SEED,
                      cache=None, solver=None, out=None, resume=False,
                      cfg: ReferenceConfig | None = None):
    """Full-network dissipation study: T_ob over (CCD power, harness area).

    The optical dissipation on the cavity mirrors stays at its nominal
    0.2 mW throughout.
    """
    cache = cache or ViewFactorCache()
    base = cfg or ReferenceConfig()
    shield = ShieldParams(phi3=NOMINAL_PHI3, d3=NOMINAL_D3)

    def point(params):
        c = replace(base, ccd_q=params["ccd_q"],
                    harness_area=params["harness_area"])
        scene, _, result = solve_reference_point(
            shield, c, coating_fraction=0.0, rays=rays, seed=seed,
            cache=cache, solver=solver)
        return _row_from_result(params, scene, result, rays, seed)

    axes = [("harness_area", list(harness_area_values)),
            ("ccd_q", list(ccd_q_values))]
    return run_sweep("dissipation", axes, point, out=out, resume=resume,
                     meta={"rays": rays, "seed": seed})


def sweep_coating(fractions=(0.0, 0.25, 0.5, 0.75, 1.0), include_lens=True,
                  rays=DEFAULT_RAYS, seed=DEFAULT_SEED,
                  cache=None, solver=None, out=None, resume=False,
                  cfg: ReferenceConfig | None = None):
    """Full-network bench coating study: T_ob and T_tv over gold fraction."""
    cache = cache or ViewFactorCache()
    base = cfg or ReferenceConfig()
    shield = ShieldParams(phi3=NOMINAL_PHI3, d3=NOMINAL_D3)

    def point(params):
        scene, _, result = solve_reference_point(
            shield, base, coating_fraction=params["coating_fraction"],
            rays=rays, seed=seed, cache=cache, solver=solver,
            include_lens=include_lens)
        return _row_from_result(params, scene, result, rays, seed)

    axes = [("coating_fraction", list(fractions))]
    return run_sweep("coating", axes, point, out=out, resume=resume,
                     meta={"rays": rays, "seed": seed,
                           "include_lens": include_lens})


def run_final_configuration(rays=DEFAULT_RAYS, seed=DEFAULT_SEED,
                            cache=None, solver=None,
                            cfg: ReferenceConfig | None = None,
                            coating_fraction=1.0):
    """Solve the nominal flight configuration.

    Returns (StudyRow, node temperature map, boundary flux map).  The row's
    provenance carries the scene hash; downstream CSV emission adds nothing
    time- or host-dependent.
    """
    cache = cache or ViewFactorCache()
    base = cfg or ReferenceConfig()
    shield = ShieldParams(phi3=NOMINAL_PHI3, d3=NOMINAL_D3)
    scene, net, result = solve_reference_point(
        shield, base, coating_fraction=coating_fraction,
        rays=rays, seed=seed, cache=cache, solver=solver)
    row = _row_from_result({"phi3": NOMINAL_PHI3, "d3": NOMINAL_D3,
                            "coating_fraction": coating_fraction},
                           scene, result, rays, seed)
    return row, dict(result.temperatures), flux_report(net, result)


# ---------------------------------------------------------------------------
# Sweep driver, CSV emission, resume
# ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, float):
        return format(x, CSV_FLOAT_FMT)
    return str(x)


def run_sweep(name, axes, point_fn, out=None, resume=False, meta=None):
    """Evaluate ``point_fn`` over the cartesian grid of ``axes`` in order.

    With ``out`` set, the CSV is rewritten after every completed point, so
    an interrupted sweep leaves a valid partial file; with ``resume`` the
    rows already present are reused instead of recomputed.  Grid order is
    the declared axis order, so the finished artifact does not depend on
    where the run was interrupted.
    """
    done = {}
    if resume and out and os.path.exists(out):
        axis_names = [n for n, _ in axes]
        for row in read_study_csv(out):
            key = tuple(_fmt(row.params[n]) for n in axis_names)
            done[key] = row

    rows = []
    for combo in product(*(v for _, v in axes)):
        params = {n: v for (n, _), v in zip(axes, combo)}
        key = tuple(_fmt(v) for v in combo)
        if key in done:
            rows.append(done[key])
            continue
        try:
            row = point_fn(params)
        except (GeometryError, SolverError) as exc:
            row = _failed_row(params, exc)
        rows.append(row)
        if out:
            write_study_csv(out, name, axes, rows, meta=meta)
    if out:
        write_study_csv(out, name, axes, rows, meta=meta)
    return rows


def _study_columns(axes, rows):
    shield_ids = sorted({sid for r in rows for sid in r.shield_temps})
    return ([n for n, _ in axes]
            + ["t_ob", "t_tv"] + shield_ids
            + ["iterations", "residual", "converged", "error", "scene_hash"])


def write_study_csv(path, name, axes, rows, meta=None):
    """Write study rows with a provenance header (deterministic bytes)."""
    cols = _study_columns(axes, rows)
    buf = io.StringIO()
    buf.write(f"# cryobench study: {name}\n")
    for k in sorted((meta or {})):
        buf.write(f"# {k}={_fmt(meta[k])}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        rec = dict(r.params)
        rec.update({"t_ob": r.t_ob, "t_tv": r.t_tv,
                    "iterations": r.iterations, "residual": r.residual,
                    "converged": r.converged, "error": r.error,
                    "scene_hash": r.provenance.get("scene_hash", "")})
        rec.update(r.shield_temps)
        w.writerow(["" if rec.get(c) is None else _fmt(rec.get(c, ""))
                    for c in cols])
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def read_study_csv(path):
    """Parse a study CSV back into StudyRows."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    fixed = {"t_ob", "t_tv", "iterations", "residual", "converged",
             "error", "scene_hash"}
    rows = []
    for rec in reader:
        params, shields = {}, {}
        for k, v in rec.items():
            if k in fixed:
                continue
            if k.startswith("shield"):
                if v:
                    shields[k] = float(v)
            else:
                params[k] = float(v)
        rows.append(StudyRow(
            params=params,
            t_ob=float(rec["t_ob"]) if rec["t_ob"] else None,
            t_tv=float(rec["t_tv"]) if rec["t_tv"] else None,
            shield_temps=shields,
            iterations=int(rec["iterations"]) if rec["iterations"] else 0,
            residual=float(rec["residual"]) if rec["residual"] else None,
            converged=rec["converged"] == "True",
            error=rec.get("error", "") or "",
            provenance={"scene_hash": rec.get("scene_hash", "")}))
    return rows

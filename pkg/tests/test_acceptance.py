"""Acceptance gate: one test per criterion, one PASS/FAIL line each.

The heavier fixtures (reference-scene traces and the shield-geometry sweep)
are shared at module scope; everything is seeded and deterministic.
"""

import math
import time

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from cryobench import geometry as G
from cryobench import network as N
from cryobench import solver as S
from cryobench import studies as ST
from cryobench import viewfactor as V
from cryobench import decoherence as D
from cryobench.cli import main as cli_main

SEED = 11
REF_RAYS = 2000        # reference-scene trace for criteria 2-4
SWEEP_RAYS = 2500      # shield-geometry sweep (criterion 5)
TREND_RAYS = 800       # full-network trend sweeps (criteria 6-9)


@pytest.fixture(scope="module")
def cache(tmp_path_factory):
    return ST.ViewFactorCache(str(tmp_path_factory.mktemp("vfcache")))


@pytest.fixture(scope="module")
def reference(cache):
    """Nominal full-configuration scene, trace and solve."""
    scene = G.build_reference_scene(G.ShieldParams(phi3=20.0, d3=0.2),
                                    coating_fraction=0.0)
    budget = V.RayBudget(rays=REF_RAYS, seed=SEED, batch=REF_RAYS)
    vfm = cache.get(scene, budget)
    net = N.build_reference_network(scene, vfm, N.ReferenceConfig())
    result = S.solve_steady_state(net)
    return scene, vfm, net, result


# ---------------------------------------------------------------------------
# 1. View-factor oracle: coaxial equal disks, 1e6 rays, < 60 s
# ---------------------------------------------------------------------------

def test_criterion_01_viewfactor_oracle(criterion_report):
    r = h = 0.5
    prims = [
        G.Disk((0, 0, 0), r, (0, 0, 1), front=G.SideProperties(1.0),
               back=G.DARK, n_azimuth=96, n_radial=4, node_id="d1"),
        G.Disk((0, 0, h), r, (0, 0, -1), front=G.SideProperties(0.0),
               back=G.DARK, n_azimuth=96, n_radial=4, node_id="d2"),
    ]
    scene = G.scene_from_primitives(prims)
    per_side = 2700            # 384 emitting facet-sides -> ~1.04e6 rays total
    t0 = time.perf_counter()
    vfm = V.trace_view_factors(scene, V.RayBudget(rays=per_side, seed=SEED,
                                                  batch=per_side))
    elapsed = time.perf_counter() - t0
    # area-weighted average over the emitting disk of the per-side hit
    # fraction onto the receiving disk, with a binomial error estimate
    target = np.array([scene.node_ids[t // 2] == "d2"
                       for t in range(scene.n_sides)])
    est, var, total_rays, total_area = 0.0, 0.0, 0, 0.0
    areas = [f.area for f in scene.facets]
    for s in range(scene.n_sides):
        n = vfm.rays_emitted[s]
        if n == 0:
            continue
        a = areas[s // 2]
        p = float(vfm.F[s, :scene.n_sides][target].sum())
        p_sm = (p * n + 1.0) / (n + 2.0)
        est += a * p
        var += a * a * p_sm * (1.0 - p_sm) / n
        total_rays += n
        total_area += a
    est /= total_area
    se = math.sqrt(var) / total_area
    exact = (3.0 - math.sqrt(5.0)) / 2.0
    ok = abs(est - exact) < 3.0 * se and total_rays >= 1_000_000 \
        and elapsed < 60.0
    criterion_report(1, ok,
                     f"disk oracle |{est:.6f} - {exact:.6f}| = "
                     f"{abs(est - exact) / se:.2f} SE (limit 3) at "
                     f"{total_rays} rays in {elapsed:.1f} s (limit 60 s)")


# ---------------------------------------------------------------------------
# 2. Reciprocity and completeness on the shipped scenes
# ---------------------------------------------------------------------------

def test_criterion_02_reciprocity_completeness(reference, criterion_report):
    scene, vfm, _, _ = reference
    disk_scene = G.scene_from_primitives([
        G.Disk((0, 0, 0), 0.5, (0, 0, 1), front=G.SideProperties(1.0),
               back=G.DARK, n_azimuth=24, n_radial=2, node_id="d1"),
        G.Disk((0, 0, 0.5), 0.5, (0, 0, -1), front=G.SideProperties(1.0),
               back=G.DARK, n_azimuth=24, n_radial=2, node_id="d2")])
    disk_vfm = V.trace_view_factors(
        disk_scene, V.RayBudget(rays=5000, seed=SEED, batch=5000))
    details = []
    ok = True
    for name, sc, m in (("reference", scene, vfm),
                        ("disk-pair", disk_scene, disk_vfm)):
        rep = V.check_reciprocity(m, sc)
        traced = m.rays_emitted > 0
        # the SPACE column is defined as the row remainder; verify that
        # identity exactly, and the total row sum to machine roundoff
        space_exact = bool(np.all(
            m.F[traced, sc.n_sides]
            == 1.0 - m.F[traced, :sc.n_sides].sum(axis=1)))
        worst_sum = float(np.abs(m.F[traced].sum(axis=1) - 1.0).max())
        complete = space_exact and worst_sum < 1e-12
        ok = ok and rep.consistent and complete
        details.append(f"{name}: worst {rep.max_sigma_ratio:.2f} sigma "
                       f"(bound {rep.sigma_threshold:.2f}), row-sum defect "
                       f"{worst_sum:.1e}, space column "
                       f"{'exact' if space_exact else 'INEXACT'}")
    criterion_report(2, ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 3. Solver oracles and flux closure
# ---------------------------------------------------------------------------

def test_criterion_03_solver_oracles(reference, criterion_report):
    q, gr, ts = 10.0, 0.5, 3.0
    rad = N.ThermalNetwork(
        [N.Node("space", "boundary", ts), N.Node("plate", dissipation=q)],
        [], [N.RadExchange("plate", "space", gr)])
    res1 = S.solve_steady_state(rad)
    exact = (q / (S.SIGMA * gr) + ts ** 4) ** 0.25
    err1 = abs(res1.temperatures["plate"] - exact)

    cond = N.ThermalNetwork(
        [N.Node("sink", "boundary", 300.0), N.Node("hot", dissipation=0.5)],
        [N.Conductor("hot", "sink", gl=0.05)], [])
    res2 = S.solve_steady_state(cond)
    err2 = abs(res2.temperatures["hot"] - 300.0 - 0.5 / 0.05)

    tol = S.SolveOptions().tolerance
    closures = []
    for net, res in ((rad, res1), (cond, res2),
                     (reference[2], reference[3])):
        flows = S.flux_report(net, res)
        q_tot = sum(n.dissipation for n in net.nodes.values()
                    if n.kind == "diffusion")
        closures.append(abs(sum(flows.values()) + q_tot))
    worst = max(closures)
    n_diff = len(reference[2].diffusion_ids())
    ok = err1 < 1e-6 and err2 < 1e-8 and worst < 10.0 * tol * n_diff
    criterion_report(3, ok,
                     f"radiator err {err1:.2e} K (limit 1e-6), conduction "
                     f"err {err2:.2e} K, worst flux closure {worst:.2e} W "
                     f"(limit {10.0 * tol * n_diff:.1e})")


# ---------------------------------------------------------------------------
# 4. Jacobian vs central finite differences at 20 random states
# ---------------------------------------------------------------------------

def test_criterion_04_jacobian_fd(reference, criterion_report):
    _, _, net, _ = reference
    rng = np.random.default_rng(0)
    ids = list(net.nodes)
    worst = 0.0
    for _ in range(20):
        temps = {nid: (net.nodes[nid].boundary_temperature
                       if net.nodes[nid].kind == "boundary"
                       else float(rng.uniform(3.0, 300.0))) for nid in ids}
        J, frozen, T0, _ = S.jacobian_for_check(net, temps)
        n = len(T0)
        fd = np.zeros((n, n))
        for j in range(n):
            h = 1e-4 * max(T0[j], 1.0)
            tp, tm = T0.copy(), T0.copy()
            tp[j] += h
            tm[j] -= h
            fd[:, j] = (frozen(tp) - frozen(tm)) / (2.0 * h)
        rel = np.abs(J - fd).max() / np.abs(J).max()
        worst = max(worst, float(rel))
    ok = worst < 1e-6
    criterion_report(4, ok, f"worst relative Jacobian error {worst:.2e} "
                            f"over 20 random states (limit 1e-6)")


# ---------------------------------------------------------------------------
# 5. Shield-geometry trend: interior minimum, 2- vs 3-shield ordering
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def shield_sweeps(cache):
    t0 = time.perf_counter()
    rows3 = ST.sweep_shield_geometry(rays=SWEEP_RAYS, seed=SEED, cache=cache,
                                     n_shields=3)
    rows2 = ST.sweep_shield_geometry(rays=SWEEP_RAYS, seed=SEED, cache=cache,
                                     n_shields=2)
    return rows3, rows2, time.perf_counter() - t0


def test_criterion_05_shield_geometry_trend(shield_sweeps, criterion_report):
    rows3, rows2, elapsed = shield_sweeps
    details = []
    interior_ok = True
    for d3 in ST.DEFAULT_D3_GRID:
        curve = [(r.params["phi3"], r.t_ob) for r in rows3
                 if r.params["d3"] == d3 and r.converged]
        curve.sort()
        temps = [t for _, t in curve]
        k = int(np.argmin(temps))
        interior = 0 < k < len(temps) - 1 and 10.0 <= curve[k][0] <= 40.0
        interior_ok = interior_ok and interior
        details.append(f"d3={d3:g}: min {temps[k]:.2f} K at "
                       f"phi3={curve[k][0]:g} deg"
                       f"{'' if interior else ' (NOT interior)'}")
    opt3 = min(r.t_ob for r in rows3 if r.converged)
    opt2 = min(r.t_ob for r in rows2 if r.converged)
    ordering = opt2 > opt3
    ok = interior_ok and ordering and elapsed < 1800.0
    criterion_report(5, ok,
                     "; ".join(details) + f"; 2-shield optimum {opt2:.2f} K "
                     f"> 3-shield {opt3:.2f} K: {ordering}; sweep "
                     f"{elapsed:.0f} s (limit 1800 s)")


# ---------------------------------------------------------------------------
# 6. Strut coupling trend
# ---------------------------------------------------------------------------

def test_criterion_06_strut_trend(cache, criterion_report):
    st_vals = [0.005, 0.02, 0.05, 0.2, 0.5]
    rs_vals = [0.005, 0.05, 0.5]
    rows = ST.sweep_strut_couplings(st_vals, rs_vals, rays=TREND_RAYS,
                                    seed=SEED, cache=cache)
    inc_ok = dec_ok = True
    for rs in rs_vals:
        line = [r.t_ob for r in rows if r.params["gl_st_rs"] == rs]
        inc_ok = inc_ok and all(a < b for a, b in zip(line, line[1:]))
    for st in st_vals:
        col = [r.t_ob for r in rows if r.params["gl_st_st"] == st]
        dec_ok = dec_ok and all(a > b for a, b in zip(col, col[1:]))
    nominal = [r for r in rows if r.params["gl_st_st"] == 0.05
               and r.params["gl_st_rs"] == 0.05][0]
    reduced = ST.sweep_strut_couplings([0.05], [0.05], gl_st_ob=0.0005,
                                       rays=TREND_RAYS, seed=SEED,
                                       cache=cache)[0]
    span = max(r.t_ob for r in rows) - min(r.t_ob for r in rows)
    d_ob = abs(reduced.t_ob - nominal.t_ob)
    small_ok = d_ob < span / 4.0
    ok = inc_ok and dec_ok and small_ok
    criterion_report(6, ok,
                     f"T_ob increasing in GL_st,st: {inc_ok}, decreasing in "
                     f"GL_st,rs: {dec_ok}; GL_st,ob/100 shift {d_ob:.1f} K "
                     f"vs span {span:.1f} K (limit span/4)")


# ---------------------------------------------------------------------------
# 7. Dissipation trend
# ---------------------------------------------------------------------------

def test_criterion_07_dissipation_trend(cache, criterion_report):
    q_vals = [0.0, 1e-4, 1e-3, 1e-2]
    a_vals = [1e-8, 1e-7, 1e-6]
    rows = ST.sweep_dissipation(q_vals, a_vals, rays=TREND_RAYS, seed=SEED,
                                cache=cache)
    mono = convex = True
    for a in a_vals:
        line = [r.t_ob for r in rows if r.params["harness_area"] == a]
        mono = mono and all(x < y for x, y in zip(line, line[1:]))
        # convex on the decade-spaced power axis: each decade of CCD power
        # raises T_ob by more than the previous one
        steps = [line[i + 1] - line[i] for i in range(len(line) - 1)]
        convex = convex and all(s1 < s2 for s1, s2 in zip(steps, steps[1:]))
    at_1mw = {r.params["harness_area"]: r.t_ob for r in rows
              if r.params["ccd_q"] == 1e-3}
    harness_dt = at_1mw[1e-7] - at_1mw[1e-8]
    # strut-induced shift: nominal full solve vs the radiative-only bench
    rad = ST.sweep_shield_geometry(phi3_values=[ST.NOMINAL_PHI3],
                                   d3_values=[ST.NOMINAL_D3],
                                   rays=TREND_RAYS, seed=SEED, cache=cache)
    strut_dt = at_1mw[1e-7] - rad[0].t_ob
    moderate = 0.0 <= harness_dt < strut_dt
    ok = mono and convex and moderate
    criterion_report(7, ok,
                     f"T_ob monotone {mono}, convex {convex} in CCD power; "
                     f"harness shift {harness_dt:.3f} K < strut shift "
                     f"{strut_dt:.1f} K: {moderate}")


# ---------------------------------------------------------------------------
# 8. Coating trend
# ---------------------------------------------------------------------------

def test_criterion_08_coating_trend(cache, criterion_report):
    rows = ST.sweep_coating(rays=TREND_RAYS, seed=SEED, cache=cache)
    tv = [r.t_tv for r in rows]
    ob = [r.t_ob for r in rows]
    tv_dec = all(a > b for a, b in zip(tv, tv[1:]))
    ob_nondec = all(a <= b for a, b in zip(ob, ob[1:]))
    no_lens = ST.sweep_coating(fractions=[1.0], include_lens=False,
                               rays=TREND_RAYS, seed=SEED, cache=cache)
    lens_ok = no_lens[0].t_tv < rows[-1].t_tv
    ok = tv_dec and ob_nondec and lens_ok
    criterion_report(8, ok,
                     f"T_tv strictly decreasing {tv_dec} "
                     f"({tv[0]:.1f} -> {tv[-1]:.1f} K), T_ob non-decreasing "
                     f"{ob_nondec} ({ob[0]:.1f} -> {ob[-1]:.1f} K); lens "
                     f"removal {rows[-1].t_tv:.1f} -> {no_lens[0].t_tv:.1f} K"
                     f": {lens_ok}")


# ---------------------------------------------------------------------------
# 9. Final-configuration properties
# ---------------------------------------------------------------------------

def test_criterion_09_final_configuration(cache, criterion_report):
    row, temps, _ = ST.run_final_configuration(rays=TREND_RAYS, seed=SEED,
                                               cache=cache)
    bench_nodes = ["bench", "ccd", "mirror_a", "mirror_b"]
    ranked = sorted(bench_nodes, key=lambda n: -temps[n])
    hottest_ok = ranked[0] == "ccd" and ranked[1].startswith("mirror")
    vals = [temps[n] for n in bench_nodes]
    spread = max(vals) - min(vals)
    mean = sum(vals) / len(vals)
    spread_ok = spread < 0.15 * mean

    # "dissipation zeroed" covers every bench heat load, including the
    # conducted harness leak that enters alongside the CCD power
    quiet_cfg = N.ReferenceConfig(ccd_q=0.0, optics_q=0.0, chip_q=0.0,
                                  harness_area=0.0)
    _, temps0, _ = ST.run_final_configuration(rays=TREND_RAYS, seed=SEED,
                                              cache=cache, cfg=quiet_cfg)
    vals0 = [temps0[n] for n in bench_nodes]
    spread0 = max(vals0) - min(vals0)
    tol = S.SolveOptions().tolerance
    zero_ok = spread0 < tol
    ok = hottest_ok and spread_ok and zero_ok
    criterion_report(9, ok,
                     f"hottest bench nodes {ranked[:2]}: {hottest_ok}; "
                     f"spread {spread:.3f} K < 15% of {mean:.1f} K: "
                     f"{spread_ok}; zero-dissipation spread {spread0:.2e} K "
                     f"< {tol:g}: {zero_ok}")


# ---------------------------------------------------------------------------
# 10. Decoherence properties
# ---------------------------------------------------------------------------

def test_criterion_10_decoherence(criterion_report):
    p = D.Particle()
    tl = D.ExperimentTimeline()
    v00 = D.visibility(p, D.EnvState(t_env=0.0, t_int=0.0), tl).visibility

    mono = True
    grid = [0.0, 5.0, 15.0, 30.0, 60.0]
    for fixed in (0.0, 16.4):
        ve = [D.visibility(p, D.EnvState(t_env=T, t_int=fixed), tl).visibility
              for T in grid]
        vi = [D.visibility(p, D.EnvState(t_env=fixed, t_int=T), tl).visibility
              for T in grid]
        mono = mono and all(a >= b for a, b in zip(ve, ve[1:]))
        mono = mono and all(a >= b for a, b in zip(vi, vi[1:]))
    env = D.EnvState(t_env=25.0, t_int=25.0)
    vd = [D.visibility(p, env, D.ExperimentTimeline(separation=d)).visibility
          for d in (5e-8, 1e-7, 2e-7)]
    vt = [D.visibility(p, env, D.ExperimentTimeline(t2=t)).visibility
          for t in (10.0, 100.0, 1000.0)]
    mono = mono and vd == sorted(vd, reverse=True) \
        and vt == sorted(vt, reverse=True)

    scaling = True
    for T in (0.4, 4.0, 40.0):        # spans two decades
        lo = D.blackbody_rates(p, D.EnvState(t_env=T, t_int=T))
        hi = D.blackbody_rates(p, D.EnvState(t_env=10 * T, t_int=10 * T))
        scaling = scaling and abs(hi[0] / lo[0] - 1e9) < 1.0 \
            and abs(hi[1] / lo[1] - 1e6) < 1e-3 \
            and abs(hi[2] / lo[2] - 1e6) < 1e-3
    regime_ok, _ = D.regime_check(p, D.EnvState(t_env=16.4, t_int=16.4), 1e-7)
    ok = v00 == 1.0 and mono and scaling and regime_ok
    criterion_report(10, ok,
                     f"V(0,0)={v00}; monotone non-increasing: {mono}; "
                     f"T^9/T^6/T^6 scaling over two decades: {scaling}; "
                     f"regime valid at (90 nm, 16.4 K): {regime_ok}")


# ---------------------------------------------------------------------------
# 11. Pipeline determinism
# ---------------------------------------------------------------------------

def test_criterion_11_determinism(tmp_path, criterion_report):
    runner = CliRunner()
    spec = tmp_path / "study.yaml"
    with open(spec, "w") as fh:
        yaml.safe_dump({"study": "shield_geometry",
                        "axes": {"phi3": [15.0, 20.0], "d3": [0.2]},
                        "rays": 300, "seed": 5}, fh)
    vspec = tmp_path / "vis.yaml"
    with open(vspec, "w") as fh:
        yaml.safe_dump({"mode": "coupled",
                        "temperatures": [0.0, 16.4, 40.0]}, fh)

    artifacts = {}
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        r1 = runner.invoke(cli_main, ["sweep", "--config", str(spec),
                                      "--out", str(d / "sg.csv")])
        r2 = runner.invoke(cli_main, ["final", "--out", str(d),
                                      "--rays", "300", "--seed", "5"])
        r3 = runner.invoke(cli_main, ["visibility", "--config", str(vspec),
                                      "--out", str(d / "vis.csv")])
        assert r1.exit_code == r2.exit_code == r3.exit_code == 0, \
            (r1.output, r2.output, r3.output)
        artifacts[run] = {f.name: f.read_bytes() for f in d.iterdir()
                          if f.is_file()}
    same = set(artifacts["a"]) == set(artifacts["b"]) and all(
        artifacts["a"][k] == artifacts["b"][k] for k in artifacts["a"])
    ok = same and len(artifacts["a"]) >= 4
    criterion_report(11, ok,
                     f"{len(artifacts['a'])} artifacts byte-identical across "
                     f"repeated runs: {same}")

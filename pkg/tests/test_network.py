import math
import warnings

import numpy as np
import pytest

from cryobench import geometry as G
from cryobench import network as N
from cryobench import viewfactor as V
from cryobench.solver import solve_steady_state


# ---------------------------------------------------------------------------
# Material tables
# ---------------------------------------------------------------------------

def test_material_linear_kappa_integral_exact():
    # kappa(T) = 2 + 0.1 T: integral from 10 to 50 is 2*40 + 0.05*(50^2-10^2)
    m = N.MaterialTable("lin", [(10.0, 3.0), (50.0, 7.0)])
    assert m.integral(50.0) - m.integral(10.0) == pytest.approx(200.0)
    assert m.mean_conductivity(10.0, 50.0) == pytest.approx(5.0)
    # equal endpoints degrade to pointwise conductivity
    assert m.mean_conductivity(30.0, 30.0) == pytest.approx(m.conductivity(30.0))


def test_material_clamps_with_warning():
    m = N.MaterialTable("t", [(10.0, 1.0), (20.0, 2.0)])
    with pytest.warns(UserWarning, match="clamping"):
        assert m.conductivity(5.0) == pytest.approx(1.0)
    with pytest.warns(UserWarning, match="clamping"):
        assert m.conductivity(30.0) == pytest.approx(2.0)


def test_material_validation():
    with pytest.raises(N.NetworkError):
        N.MaterialTable("bad", [(10.0, 1.0)])
    with pytest.raises(N.NetworkError):
        N.MaterialTable("bad", [(10.0, 1.0), (5.0, 2.0)])
    with pytest.raises(N.NetworkError):
        N.MaterialTable("bad", [(10.0, 1.0), (20.0, -2.0)])


@pytest.mark.parametrize("name", ["gfrp", "titanium", "stainless_steel",
                                  "zerodur", "gold", "sic"])
def test_shipped_material_tables_load(name):
    m = N.load_material(name)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert m.conductivity(float(m.T[0])) > 0


def test_unknown_material_raises():
    with pytest.raises(N.NetworkError):
        N.load_material("unobtainium")


# ---------------------------------------------------------------------------
# Conductors and helpers
# ---------------------------------------------------------------------------

def test_series_gl_oracle():
    assert N.series_gl([2.0, 3.0]) == pytest.approx(1.2)
    assert N.series_gl([5.0]) == pytest.approx(5.0)
    with pytest.raises(N.NetworkError):
        N.series_gl([])


def test_mli_effective_emissivity():
    assert N.mli_effective_emissivity(0.04, 0) == pytest.approx(0.04)
    assert N.mli_effective_emissivity(0.04, 3) == pytest.approx(0.01)
    with pytest.raises(N.NetworkError):
        N.mli_effective_emissivity(0.04, -1)


def test_geometric_conductor_evaluates_integral_mean():
    m = N.MaterialTable("lin", [(10.0, 3.0), (50.0, 7.0)])
    c = N.Conductor("a", "b", area=2e-4, length=0.5, material=m)
    assert c.evaluate(10.0, 50.0) == pytest.approx(2e-4 / 0.5 * 5.0)


def test_conductor_validation():
    with pytest.raises(N.NetworkError):
        N.Conductor("a", "a", gl=1.0)
    with pytest.raises(N.NetworkError):
        N.Conductor("a", "b", gl=-1.0)
    with pytest.raises(N.NetworkError):
        N.Conductor("a", "b", area=1.0)   # missing length/material


# ---------------------------------------------------------------------------
# GR assembly from view factors
# ---------------------------------------------------------------------------

def plate_pair():
    """Two closely spaced parallel unit-ish plates, black facing sides."""
    prims = [
        G.Rectangle((0, 0, 0), (0.5, 0, 0), (0, 0.5, 0),
                    front=G.SideProperties(0.8), back=G.DARK,
                    n1=2, n2=2, node_id="lower"),
        G.Rectangle((0, 0, 0.02), (0, 0.5, 0), (0.5, 0, 0),
                    front=G.SideProperties(0.5), back=G.DARK,
                    n1=2, n2=2, node_id="upper"),
    ]
    return G.scene_from_primitives(prims)


@pytest.fixture(scope="module")
def plate_trace():
    scene = plate_pair()
    vfm = V.trace_view_factors(scene, V.RayBudget(rays=8000, seed=2, batch=8000))
    return scene, vfm


def test_gr_close_plates_oracle(plate_trace):
    scene, vfm = plate_trace
    ex = N.gr_from_viewfactors(scene, vfm)
    grs = {(e.node_i, e.node_j): e.gr for e in ex}
    # gap/size = 0.04: nearly all radiation crosses, GR ~ eps1 eps2 A
    gr = grs[("lower", "upper")]
    assert gr == pytest.approx(0.8 * 0.5 * 0.25, rel=0.08)
    # leaked remainder couples to space
    assert grs[("lower", "space")] > 0
    assert grs[("space", "upper")] > 0


def test_gr_emissivity_override(plate_trace):
    scene, vfm = plate_trace
    eps = scene.side_emissivity.copy()
    eps[eps == 0.5] = 0.25
    half = {(e.node_i, e.node_j): e.gr
            for e in N.gr_from_viewfactors(scene, vfm, emissivity=eps)}
    full = {(e.node_i, e.node_j): e.gr
            for e in N.gr_from_viewfactors(scene, vfm)}
    assert half[("lower", "upper")] == pytest.approx(
        0.5 * full[("lower", "upper")])


def test_gr_skips_occluders():
    prims = [G.Rectangle((0, 0, 0), (0.5, 0, 0), (0, 0.5, 0),
                         front=G.SideProperties(1.0), back=G.DARK,
                         node_id="em"),
             G.Rectangle((0.1, 0.1, 0.05), (0.3, 0, 0), (0, 0.3, 0),
                         front=G.DARK, back=G.DARK,
                         node_id="occluder:blocker")]
    scene = G.scene_from_primitives(prims)
    vfm = V.trace_view_factors(scene, V.RayBudget(rays=2000, seed=1, batch=2000))
    ex = N.gr_from_viewfactors(scene, vfm)
    nodes = {e.node_i for e in ex} | {e.node_j for e in ex}
    assert not any(n.startswith("occluder") for n in nodes)
    # blocked rays are absorbed, not re-emitted: they vanish from the tally
    gr_space = {(e.node_i, e.node_j): e.gr for e in ex}[("em", "space")]
    assert gr_space < 0.25  # strictly below the unobstructed eps*A


# ---------------------------------------------------------------------------
# Network validation
# ---------------------------------------------------------------------------

def test_duplicate_nodes_rejected():
    with pytest.raises(N.NetworkError):
        N.ThermalNetwork([N.Node("a", "boundary", 10.0),
                          N.Node("a")], [], [])


def test_orphan_diffusion_node_rejected():
    with pytest.raises(N.NetworkError, match="not connected"):
        N.ThermalNetwork([N.Node("b", "boundary", 10.0), N.Node("lonely")],
                         [], [])


def test_unknown_reference_rejected():
    with pytest.raises(N.NetworkError):
        N.ThermalNetwork([N.Node("b", "boundary", 10.0)],
                         [N.Conductor("b", "ghost", gl=1.0)], [])


def test_exchange_merging_and_ordering():
    net = N.ThermalNetwork(
        [N.Node("b", "boundary", 10.0), N.Node("x")],
        [],
        [N.RadExchange("x", "b", 0.1), N.RadExchange("b", "x", 0.2)])
    assert len(net.exchanges) == 1
    assert net.exchanges[0].gr == pytest.approx(0.3)


# ---------------------------------------------------------------------------
# Reference network assembly
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def ref_trace():
    scene = G.build_reference_scene(G.ShieldParams(phi3=20.0, d3=0.2),
                                    coating_fraction=0.0)
    vfm = V.trace_view_factors(scene, V.RayBudget(rays=600, seed=4, batch=600))
    return scene, vfm


def test_reference_network_structure(ref_trace):
    scene, vfm = ref_trace
    net = N.build_reference_network(scene, vfm, N.ReferenceConfig())
    ids = set(net.nodes)
    assert {"space", "sc_ext", "sc_int", "bench", "probe", "lens",
            "ccd", "mirror_a", "mirror_b", "chip"} <= ids
    for s in (1, 2, 3):
        assert {f"strut{s}_j1", f"strut{s}_j2", f"strut{s}_j3",
                f"strut{s}_jt"} <= ids
    kinds = {nid: n.kind for nid, n in net.nodes.items()}
    assert kinds["space"] == kinds["sc_ext"] == kinds["sc_int"] == "boundary"
    assert net.nodes["ccd"].dissipation == pytest.approx(1e-3)
    assert net.nodes["chip"].dissipation == pytest.approx(1e-2)


def test_radiative_only_has_no_conductors(ref_trace):
    scene, vfm = ref_trace
    net = N.build_reference_network(
        scene, vfm, N.ReferenceConfig(radiative_only=True))
    assert net.conductors == []
    assert "sc_int" not in net.nodes
    assert "ccd" not in net.nodes


def test_mli_reduces_shield_space_coupling(ref_trace):
    scene, vfm = ref_trace
    def shield_gr(layers):
        net = N.build_reference_network(
            scene, vfm, N.ReferenceConfig(radiative_only=True,
                                          mli_layers=layers))
        return sum(e.gr for e in net.exchanges
                   if {"shield1", "sc_ext"} == {e.node_i, e.node_j})
    assert shield_gr(3) < shield_gr(0)


def test_segment_conductor_inserts_series_nodes(ref_trace):
    scene, vfm = ref_trace
    seg = N.Conductor("x", "y", area=1e-5, length=0.1,
                      material=N.load_material("gfrp"))
    cfg = N.ReferenceConfig(strut=N.StrutSpec(segment_conductor=seg))
    net = N.build_reference_network(scene, vfm, cfg)
    assert any(nid.endswith("_seg") for nid in net.nodes)


def test_network_roundtrip_preserves_solution(tmp_path, ref_trace):
    scene, vfm = ref_trace
    net = N.build_reference_network(scene, vfm, N.ReferenceConfig())
    path = tmp_path / "net.yaml"
    N.save_network(path, net)
    back = N.load_network(path)
    t1 = solve_steady_state(net).temperatures
    t2 = solve_steady_state(back).temperatures
    assert set(t1) == set(t2)
    for nid in t1:
        assert t1[nid] == pytest.approx(t2[nid], abs=1e-9)

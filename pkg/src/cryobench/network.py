"""Thermal node network assembly.

Turns a traced scene into radiative couplings (GR, m^2), adds conductive
couplings (GL, W/K) from material tables or direct values, boundary nodes
and dissipation loads, and validates connectivity.  The assembled network is
immutable in spirit: the solver only reads it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .geometry import MeshedScene, OCCLUDER_NODE

SPACE_NODE = "space"


class NetworkError(ValueError):
    """Inconsistent or unsolvable network definition."""


@dataclass
class Node:
    id: str
    kind: str = "diffusion"            # "diffusion" | "boundary"
    boundary_temperature: float | None = None   # K, boundary only
    dissipation: float = 0.0           # W, diffusion only
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("diffusion", "boundary"):
            raise NetworkError(f"bad node kind {self.kind!r}")
        if self.kind == "boundary":
            if self.boundary_temperature is None or self.boundary_temperature <= 0:
                raise NetworkError(f"boundary node {self.id} needs T > 0 K")
        elif self.dissipation < 0:
            raise NetworkError(f"node {self.id}: dissipation must be >= 0")


class MaterialTable:
    """Thermal conductivity samples kappa(T), piecewise linear in T.

    Conductance between two node temperatures uses the conductivity
    integral, int kappa dT / (Tj - Ti), which reduces to kappa(T) for equal
    temperatures and to the plain kappa*A/d coupling for constant kappa.
    Temperatures outside the table range are clamped (with a warning), never
    extrapolated.
    """

    def __init__(self, name, samples):
        samples = [(float(t), float(k)) for t, k in samples]
        if len(samples) < 2:
            raise NetworkError(f"material {name}: need >= 2 samples")
        T = np.array([s[0] for s in samples])
        K = np.array([s[1] for s in samples])
        if not np.all(np.diff(T) > 0):
            raise NetworkError(f"material {name}: temperatures must increase")
        if np.any(K <= 0):
            raise NetworkError(f"material {name}: kappa must be positive")
        self.name = name
        self.T = T
        self.K = K
        # cumulative integral of kappa from T[0]
        self._cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (K[1:] + K[:-1]) * np.diff(T))])

    def _clamp(self, T):
        lo, hi = self.T[0], self.T[-1]
        if T < lo or T > hi:
            warnings.warn(
                f"material {self.name}: temperature {T:.3g} K outside table "
                f"range [{lo:g}, {hi:g}] K, clamping", stacklevel=3)
            return min(max(T, lo), hi)
        return T

    def conductivity(self, T):
        """kappa at T (W/m/K), clamped to the table range."""
        return float(np.interp(self._clamp(T), self.T, self.K))

    def integral(self, T):
        """int_{T[0]}^{T} kappa dT', clamped to the table range."""
        T = self._clamp(T)
        i = np.searchsorted(self.T, T, side="right") - 1
        i = min(max(i, 0), len(self.T) - 2)
        dT = T - self.T[i]
        k0 = self.K[i]
        slope = (self.K[i + 1] - self.K[i]) / (self.T[i + 1] - self.T[i])
        return float(self._cum[i] + k0 * dT + 0.5 * slope * dT * dT)

    def mean_conductivity(self, Ti, Tj):
        """Conductivity integral mean between Ti and Tj."""
        if Ti == Tj:
            return self.conductivity(Ti)
        return (self.integral(Tj) - self.integral(Ti)) / (Tj - Ti)


def load_material(name) -> MaterialTable:
    """Load a shipped material table (CSV with T_K, kappa_W_per_m_K rows)."""
    ref = resources.files("cryobench.data.materials").joinpath(f"{name}.csv")
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise NetworkError(f"no shipped material table named {name!r}")
    return material_from_csv_text(name, text)


def material_from_csv_text(name, text) -> MaterialTable:
    samples = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line[0].isalpha():
            continue
        t, k = line.split(",")[:2]
        samples.append((float(t), float(k)))
    return MaterialTable(name, samples)


@dataclass
class Conductor:
    """A GL coupling: either a direct value or geometry plus a material."""

    node_i: str
    node_j: str
    gl: float | None = None            # W/K, direct
    area: float | None = None          # m^2, geometric
    length: float | None = None        # m, geometric
    material: MaterialTable | None = None
    label: str = ""

    def __post_init__(self):
        if self.node_i == self.node_j:
            raise NetworkError("conductor endpoints must differ")
        if self.gl is not None:
            if self.gl <= 0:
                raise NetworkError("direct GL must be positive")
        else:
            if not (self.area and self.length and self.material):
                raise NetworkError(
                    "geometric conductor needs area, length and material")
            if self.area <= 0 or self.length <= 0:
                raise NetworkError("conductor area and length must be positive")

    def evaluate(self, Ti, Tj):
        return gl_from_geometry(self, Ti, Tj)


def gl_from_geometry(c: Conductor, Ti: float, Tj: float) -> float:
    """GL (W/K) of a conductor at the given end temperatures."""
    if c.gl is not None:
        return c.gl
    return (c.area / c.length) * c.material.mean_conductivity(Ti, Tj)


def series_gl(gls) -> float:
    """Total conductance of conductances in series: 1/GL = sum 1/GL_k."""
    gls = list(gls)
    if not gls:
        raise NetworkError("series_gl of an empty list")
    if any(g <= 0 for g in gls):
        raise NetworkError("series_gl requires positive conductances")
    return 1.0 / sum(1.0 / g for g in gls)


def mli_effective_emissivity(eps: float, layers: int) -> float:
    """Effective emissivity of a surface behind an N-layer blanket."""
    if layers < 0:
        raise NetworkError("layer count must be >= 0")
    return eps / (layers + 1)


@dataclass
class RadExchange:
    """Radiative coupling GR (m^2) for an unordered node pair."""

    node_i: str
    node_j: str
    gr: float

    def __post_init__(self):
        if self.gr < 0:
            raise NetworkError("GR must be >= 0")
        if self.node_i == self.node_j:
            raise NetworkError("radiative exchange endpoints must differ")
        if self.node_j < self.node_i:
            self.node_i, self.node_j = self.node_j, self.node_i


@dataclass
class StrutSpec:
    """Lumped couplings of one support strut.

    The chain runs from the spacecraft interior through one joint per shield
    to a terminal fitting that attaches to the bench.  ``gl_segment`` is the
    inter-joint link conductance (the quantity the coupling trade study
    sweeps as GL_st,st); ``segment_conductor`` optionally puts a geometric
    segment in series with each link.
    """

    gl_st_st: float = 0.05             # W/K, between strut segments
    gl_st_rs: float = 0.05             # W/K, joint to shield tap
    gl_st_ob: float = 0.05             # W/K, terminal fitting to bench
    segment_conductor: Conductor | None = None

    def __post_init__(self):
        for v, name in ((self.gl_st_st, "gl_st_st"),
                        (self.gl_st_rs, "gl_st_rs"),
                        (self.gl_st_ob, "gl_st_ob")):
            if v <= 0:
                raise NetworkError(f"strut coupling {name} must be positive")


class ThermalNetwork:
    """Nodes plus GR/GL couplings and dissipation, ready to solve."""

    def __init__(self, nodes, conductors, exchanges, provenance=None):
        self.nodes = {n.id: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise NetworkError("duplicate node ids")
        self.conductors = list(conductors)
        # merge exchanges on the same unordered pair
        merged = {}
        for ex in exchanges:
            key = (ex.node_i, ex.node_j)
            merged[key] = merged.get(key, 0.0) + ex.gr
        self.exchanges = [RadExchange(i, j, g) for (i, j), g in
                          sorted(merged.items())]
        self.provenance = provenance or {}
        self._validate()

    def _validate(self):
        for c in self.conductors:
            for nid in (c.node_i, c.node_j):
                if nid not in self.nodes:
                    raise NetworkError(f"conductor references unknown node {nid}")
        for ex in self.exchanges:
            for nid in (ex.node_i, ex.node_j):
                if nid not in self.nodes:
                    raise NetworkError(f"exchange references unknown node {nid}")
        # every diffusion node must reach a boundary through couplings
        adj = {nid: set() for nid in self.nodes}
        for c in self.conductors:
            adj[c.node_i].add(c.node_j)
            adj[c.node_j].add(c.node_i)
        for ex in self.exchanges:
            if ex.gr > 0:
                adj[ex.node_i].add(ex.node_j)
                adj[ex.node_j].add(ex.node_i)
        seen = set(n.id for n in self.nodes.values() if n.kind == "boundary")
        stack = list(seen)
        while stack:
            nid = stack.pop()
            for nb in adj[nid]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        orphans = [nid for nid, n in self.nodes.items()
                   if n.kind == "diffusion" and nid not in seen]
        if orphans:
            raise NetworkError(
                f"diffusion nodes not connected to any boundary: {orphans}")

    def diffusion_ids(self):
        return [nid for nid, n in self.nodes.items() if n.kind == "diffusion"]

    def boundary_ids(self):
        return [nid for nid, n in self.nodes.items() if n.kind == "boundary"]


# ---------------------------------------------------------------------------
# GR assembly from a view-factor matrix
# ---------------------------------------------------------------------------

def gr_from_viewfactors(scene: MeshedScene, vfm, emissivity=None):
    """Aggregate facet-side view factors into node-pair GR couplings.

    Per side pair, GR = eps_i * eps_j * A_i * F_ij.  Monte Carlo noise makes
    A_i F_ij and A_j F_ji disagree slightly, so each pair is symmetrized to
    the average of both directions before aggregation; this enforces the
    reciprocity an energy-conserving network needs.  The SPACE column maps
    to couplings with the space boundary node at unit space emissivity.

    ``emissivity`` optionally overrides the per-side emissivities (array of
    length ``scene.n_sides``).
    """
    ns = scene.n_sides
    if vfm.n_sides != ns:
        raise NetworkError("view-factor matrix does not match scene")
    eps = scene.side_emissivity if emissivity is None else np.asarray(emissivity)
    if eps.shape != (ns,):
        raise NetworkError("emissivity override has wrong length")
    areas = np.repeat(scene.areas, 2)

    G = (eps * areas)[:, None] * vfm.F[:, :ns] * eps[None, :]
    Gsym = 0.5 * (G + G.T)
    g_space = eps * areas * vfm.F[:, ns]

    node_of_side = [scene.node_ids[s // 2] for s in range(ns)]
    acc = {}
    ii, jj = np.nonzero(np.triu(Gsym, 1))
    for i, j in zip(ii, jj):
        a, b = node_of_side[i], node_of_side[j]
        if a == b or a.startswith(OCCLUDER_NODE) or b.startswith(OCCLUDER_NODE):
            continue
        key = (a, b) if a < b else (b, a)
        # Gsym[i, j] averages the two Monte Carlo estimates of the one
        # physical pair coupling; each unordered pair appears once here
        acc[key] = acc.get(key, 0.0) + Gsym[i, j]
    for s in range(ns):
        nid = node_of_side[s]
        if g_space[s] > 0 and not nid.startswith(OCCLUDER_NODE):
            key = (nid, SPACE_NODE) if nid < SPACE_NODE else (SPACE_NODE, nid)
            acc[key] = acc.get(key, 0.0) + g_space[s]
    return [RadExchange(i, j, float(g)) for (i, j), g in sorted(acc.items())]


# ---------------------------------------------------------------------------
# Reference network
# ---------------------------------------------------------------------------

@dataclass
class ReferenceConfig:
    """Assembly parameters of the reference instrument network."""

    strut: StrutSpec = field(default_factory=StrutSpec)
    harness_area: float = 1e-7         # m^2 (0.1 mm^2)
    harness_length: float = 0.5        # m, chip to CCD
    ccd_q: float = 1e-3                # W
    optics_q: float = 2e-4             # W, total over both cavity mirrors
    chip_q: float = 1e-2               # W
    mli_layers: int = 3
    mount_gl: float = 0.05             # W/K, component-to-bench mounts
    lens_mount_gl: float = 0.01        # W/K
    chip_mount: str = "shield1"        # where the chip dumps its heat
    t_space: float = 3.0               # K
    t_sc_ext: float = 120.0            # K
    t_sc_int: float = 300.0            # K
    radiative_only: bool = False       # drop conduction and dissipation


def _shield_count(scene: MeshedScene):
    return len({nid for nid in scene.node_ids if nid.startswith("shield")})


def build_reference_network(scene: MeshedScene, vfm,
                            cfg: ReferenceConfig | None = None) -> ThermalNetwork:
    """Assemble the full instrument network from a traced reference scene.

    Boundary nodes: deep space, the spacecraft exterior (shaded panel) and
    the spacecraft interior.  Shield-bottom emissivities are reduced by the
    MLI blanket factor before GR assembly.  In ``radiative_only`` mode only
    the geometric nodes and their radiative couplings remain (the shield
    geometry trade study setting).
    """
    cfg = cfg or ReferenceConfig()
    ns = scene.n_sides
    eps = scene.side_emissivity.copy()
    if cfg.mli_layers > 0:
        for f, nid in enumerate(scene.node_ids):
            if nid.startswith("shield"):
                eps[2 * f + 1] = mli_effective_emissivity(
                    eps[2 * f + 1], cfg.mli_layers)

    exchanges = gr_from_viewfactors(scene, vfm, emissivity=eps)

    geom_ids = sorted({nid for nid in scene.node_ids
                       if not nid.startswith(OCCLUDER_NODE)})
    nodes = [Node(SPACE_NODE, "boundary", cfg.t_space, label="deep space")]
    for nid in geom_ids:
        if nid == "sc_ext":
            nodes.append(Node(nid, "boundary", cfg.t_sc_ext,
                              label="spacecraft shaded panel"))
        else:
            nodes.append(Node(nid, label=nid))
    conductors = []

    if not cfg.radiative_only:
        nodes.append(Node("sc_int", "boundary", cfg.t_sc_int,
                          label="spacecraft interior"))
        n_sh = _shield_count(scene)
        # three struts: interior -> joints at each shield -> terminal -> bench
        for s in (1, 2, 3):
            chain = ["sc_int"] + [f"strut{s}_j{k}" for k in range(1, n_sh + 1)] \
                + [f"strut{s}_jt"]
            for nid in chain[1:]:
                nodes.append(Node(nid, label=f"strut {s} joint"))
            for a, b in zip(chain[:-1], chain[1:]):
                if cfg.strut.segment_conductor is None:
                    conductors.append(Conductor(a, b, gl=cfg.strut.gl_st_st,
                                                label="strut link"))
                else:
                    mid = f"{b}_seg"
                    nodes.append(Node(mid, label="strut segment"))
                    seg = cfg.strut.segment_conductor
                    conductors.append(Conductor(
                        a, mid, area=seg.area, length=seg.length,
                        material=seg.material, label="strut segment"))
                    conductors.append(Conductor(mid, b, gl=cfg.strut.gl_st_st,
                                                label="strut fitting"))
            for k in range(1, n_sh + 1):
                conductors.append(Conductor(
                    f"strut{s}_j{k}", f"shield{k}", gl=cfg.strut.gl_st_rs,
                    label="strut-shield tap"))
            conductors.append(Conductor(
                f"strut{s}_jt", "bench", gl=cfg.strut.gl_st_ob,
                label="strut-bench mount"))

        # bench components: CCD head, two cavity mirrors, preprocessing chip
        nodes.append(Node("ccd", dissipation=cfg.ccd_q, label="CCD head"))
        nodes.append(Node("mirror_a", dissipation=cfg.optics_q / 2.0,
                          label="cavity mirror A"))
        nodes.append(Node("mirror_b", dissipation=cfg.optics_q / 2.0,
                          label="cavity mirror B"))
        for nid in ("ccd", "mirror_a", "mirror_b"):
            conductors.append(Conductor(nid, "bench", gl=cfg.mount_gl,
                                        label="component mount"))
        nodes.append(Node("chip", dissipation=cfg.chip_q,
                          label="preprocessing chip"))
        conductors.append(Conductor("chip", cfg.chip_mount, gl=cfg.mount_gl,
                                    label="chip mount"))
        if cfg.harness_area > 0:
            steel = load_material("stainless_steel")
            conductors.append(Conductor(
                "sc_int", "chip", area=cfg.harness_area,
                length=cfg.harness_length / 2.0, material=steel,
                label="harness interior-chip"))
            conductors.append(Conductor(
                "chip", "ccd", area=cfg.harness_area,
                length=cfg.harness_length, material=steel,
                label="harness chip-CCD"))
        if "lens" in geom_ids:
            conductors.append(Conductor("lens", "bench",
                                        gl=cfg.lens_mount_gl,
                                        label="lens mount"))
    # radiative_only keeps the geometric nodes and GR couplings alone

    provenance = {"scene_hash": vfm.scene_hash, "seed": vfm.seed,
                  "rays": int(vfm.rays_emitted.max(initial=0)),
                  "mli_layers": cfg.mli_layers,
                  "radiative_only": cfg.radiative_only}
    return ThermalNetwork(nodes, conductors, exchanges, provenance)


# ---------------------------------------------------------------------------
# Network file I/O
# ---------------------------------------------------------------------------

def save_network(path, net: ThermalNetwork):
    doc = {
        "nodes": [
            {"id": n.id, "kind": n.kind,
             **({"boundary_temperature": n.boundary_temperature}
                if n.kind == "boundary" else
                {"dissipation": n.dissipation}),
             "label": n.label}
            for n in net.nodes.values()],
        "conductors": [
            {"i": c.node_i, "j": c.node_j, "label": c.label,
             **({"gl": c.gl} if c.gl is not None else
                {"area": c.area, "length": c.length,
                 "material": c.material.name})}
            for c in net.conductors],
        "exchanges": [{"i": ex.node_i, "j": ex.node_j, "gr": ex.gr}
                      for ex in net.exchanges],
        "provenance": net.provenance,
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_network(path) -> ThermalNetwork:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    nodes = [Node(d["id"], d.get("kind", "diffusion"),
                  d.get("boundary_temperature"),
                  d.get("dissipation", 0.0), d.get("label", ""))
             for d in doc["nodes"]]
    conductors = []
    for d in doc.get("conductors", []):
        if "gl" in d:
            conductors.append(Conductor(d["i"], d["j"], gl=float(d["gl"]),
                                        label=d.get("label", "")))
        else:
            conductors.append(Conductor(
                d["i"], d["j"], area=float(d["area"]),
                length=float(d["length"]),
                material=load_material(d["material"]),
                label=d.get("label", "")))
    exchanges = [RadExchange(d["i"], d["j"], float(d["gr"]))
                 for d in doc.get("exchanges", [])]
    return ThermalNetwork(nodes, conductors, exchanges,
                          doc.get("provenance"))

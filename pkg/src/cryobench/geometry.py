"""Scene construction and meshing for the shielded cryogenic instrument.

Builds the axisymmetric reference geometry (spacecraft disk, fanned conical
shield stack, optical bench box, strut occluders, test-volume probe, imaging
lens) and meshes every surface primitive into planar facets with per-side
optical properties.  The meshed scene is the immutable input of the Monte
Carlo view-factor tracer.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

COPLANAR_TOL = 1e-9       # m
NORMAL_TOL = 1e-12

# Node id prefix for facets that block rays but carry no radiative coupling.
OCCLUDER_NODE = "occluder"


class GeometryError(ValueError):
    """Invalid or colliding scene geometry."""


@dataclass(frozen=True)
class SideProperties:
    """Optical properties of one facet side (gray diffuse)."""

    emissivity: float

    def __post_init__(self):
        if not (0.0 <= self.emissivity <= 1.0) or not math.isfinite(self.emissivity):
            raise GeometryError(f"emissivity must be in [0,1], got {self.emissivity}")


# Common finishes; values are handbook-typical and configurable per primitive.
BLACK = SideProperties(0.90)
GOLD = SideProperties(0.04)
BARE_ZERODUR = SideProperties(0.90)
DARK = SideProperties(0.0)   # non-radiating side (occluders, hidden interiors)


class Facet:
    """A planar triangle or quad with area, unit normal and two optical sides.

    The normal points away from the ``front`` side.  ``node_id`` names the
    thermal node the facet belongs to; occluder facets use a node id starting
    with ``occluder`` and never enter the radiative network.
    """

    __slots__ = ("vertices", "normal", "area", "front", "back", "node_id")

    def __init__(self, vertices, front: SideProperties, back: SideProperties,
                 node_id: str):
        v = np.asarray(vertices, dtype=float)
        if v.shape not in ((3, 3), (4, 3)):
            raise GeometryError(f"facet needs 3 or 4 vertices, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GeometryError("facet vertices must be finite")
        n = np.cross(v[1] - v[0], v[2] - v[0])
        nn = np.linalg.norm(n)
        if nn <= 0.0:
            raise GeometryError("degenerate facet (zero area)")
        normal = n / nn
        area = 0.5 * nn
        if v.shape[0] == 4:
            # coplanarity of the fourth vertex
            if abs(np.dot(v[3] - v[0], normal)) > COPLANAR_TOL:
                raise GeometryError("quad vertices not coplanar")
            n2 = np.cross(v[2] - v[0], v[3] - v[0])
            area += 0.5 * np.linalg.norm(n2)
        if area <= 0.0:
            raise GeometryError("facet area must be positive")
        if abs(np.linalg.norm(normal) - 1.0) > NORMAL_TOL:
            raise GeometryError("facet normal not unit length")
        self.vertices = v
        self.normal = normal
        self.area = float(area)
        self.front = front
        self.back = back
        self.node_id = node_id

    @property
    def centroid(self):
        return self.vertices.mean(axis=0)

    def triangles(self):
        """Split into triangles (quads fan about vertex 0)."""
        v = self.vertices
        if v.shape[0] == 3:
            return [v]
        return [v[[0, 1, 2]], v[[0, 2, 3]]]


# ---------------------------------------------------------------------------
# Surface primitives
# ---------------------------------------------------------------------------

@dataclass
class Disk:
    center: tuple
    radius: float
    normal: tuple
    front: SideProperties = BLACK
    back: SideProperties = DARK
    n_azimuth: int = 24
    n_radial: int = 4
    node_id: str = "disk"


@dataclass
class ConeFrustum:
    """Lateral surface of a cone frustum about the given axis.

    ``r_lower`` may be zero, which closes the surface at the apex (used for
    hole-free radiation shields).  The front side is the one the outward
    normal with a positive axis component points to.
    """

    base_center: tuple
    axis: tuple
    r_lower: float
    r_upper: float
    height: float
    front: SideProperties = BLACK
    back: SideProperties = GOLD
    n_azimuth: int = 24
    n_radial: int = 4
    node_id: str = "cone"


@dataclass
class Rectangle:
    corner: tuple
    edge1: tuple
    edge2: tuple
    front: SideProperties = BLACK
    back: SideProperties = DARK
    n1: int = 4
    n2: int = 4
    node_id: str = "rect"


@dataclass
class Box:
    """Axis-aligned-in-its-own-frame box from a corner and three edges.

    Face normals point outward; interiors are dark.
    """

    corner: tuple
    edge1: tuple
    edge2: tuple
    edge3: tuple
    front: SideProperties = BLACK
    n1: int = 4
    n2: int = 4
    n3: int = 1
    node_id: str = "box"


@dataclass
class SphereProbe:
    """Small spherical probe meshed as a lat-long triangle shell."""

    center: tuple
    radius: float
    front: SideProperties = SideProperties(1.0)
    n_azimuth: int = 8
    n_polar: int = 4
    node_id: str = "probe"


@dataclass
class ShieldParams:
    """Geometry of the conical shield stack.

    ``phi3`` (deg) and ``d3`` (m) are the opening angle and spacecraft
    distance of the innermost shield; the remaining shields follow the
    equipartition relations.  Shields extend radially from the axis out to
    ``r_outer`` and are hole-free (inner radius 0) so the bench never sees
    the spacecraft surface directly.
    """

    phi3: float
    d3: float
    n_shields: int = 3
    r_inner: float = 0.0
    r_outer: float = 0.72
    top: SideProperties = BLACK
    bottom: SideProperties = GOLD

    def __post_init__(self):
        if not (0.0 <= self.phi3 < 90.0):
            raise GeometryError(f"phi3 must be in [0, 90) deg, got {self.phi3}")
        if self.d3 <= 0.0:
            raise GeometryError("d3 must be positive")
        if self.n_shields not in (2, 3):
            raise GeometryError("n_shields must be 2 or 3")
        if not (0.0 <= self.r_inner < self.r_outer):
            raise GeometryError("need 0 <= r_inner < r_outer")


def derive_shield_stack(p: ShieldParams):
    """Opening angles and distances of all shields from the innermost one.

    Returns (phi_k deg, d_k m) pairs ordered from the shield closest to the
    spacecraft to the innermost shield.  Three shields use the equipartition
    relations phi_k = k/3 * phi3, d1 = d3/2, d2 = 3 d3/4; the two-shield
    variant uses (phi3/2, 2 d3/3) as the analogous split.
    """
    if p.n_shields == 3:
        return [(p.phi3 / 3.0, p.d3 / 2.0),
                (2.0 * p.phi3 / 3.0, 3.0 * p.d3 / 4.0),
                (p.phi3, p.d3)]
    return [(p.phi3 / 2.0, 2.0 * p.d3 / 3.0), (p.phi3, p.d3)]


# ---------------------------------------------------------------------------
# Meshing
# ---------------------------------------------------------------------------

def _orthobasis(axis):
    """Two unit vectors spanning the plane orthogonal to ``axis``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    ref = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(a, ref)
    u /= np.linalg.norm(u)
    v = np.cross(a, u)
    return a, u, v


def _mesh_disk(d: Disk):
    if d.radius <= 0:
        raise GeometryError("disk radius must be positive")
    if d.n_azimuth < 1 or d.n_radial < 1:
        raise GeometryError("mesh counts must be >= 1")
    a, u, v = _orthobasis(d.normal)
    c = np.asarray(d.center, dtype=float)
    facets = []
    radii = np.linspace(0.0, d.radius, d.n_radial + 1)
    angs = np.linspace(0.0, 2.0 * np.pi, d.n_azimuth + 1)

    def pt(r, t):
        return c + r * (np.cos(t) * u + np.sin(t) * v)

    for k in range(d.n_radial):
        r0, r1 = radii[k], radii[k + 1]
        for i in range(d.n_azimuth):
            t0, t1 = angs[i], angs[i + 1]
            if r0 == 0.0:
                verts = [pt(r0, t0), pt(r1, t0), pt(r1, t1)]
            else:
                verts = [pt(r0, t0), pt(r1, t0), pt(r1, t1), pt(r0, t1)]
            f = Facet(verts, d.front, d.back, d.node_id)
            # winding chosen so the normal matches the declared front side
            if np.dot(f.normal, a) < 0.0:
                f = Facet(verts[::-1], d.front, d.back, d.node_id)
            facets.append(f)
    return facets


def _mesh_cone(cf: ConeFrustum):
    if cf.r_upper <= 0 or cf.r_lower < 0 or cf.r_upper <= cf.r_lower:
        raise GeometryError("cone needs 0 <= r_lower < r_upper")
    if cf.height < 0:
        raise GeometryError("cone height must be >= 0")
    if cf.height == 0 and cf.r_lower == 0:
        # flat closed cone degenerates to a disk
        pass
    a, u, v = _orthobasis(cf.axis)
    c = np.asarray(cf.base_center, dtype=float)
    facets = []
    radii = np.linspace(cf.r_lower, cf.r_upper, cf.n_radial + 1)
    angs = np.linspace(0.0, 2.0 * np.pi, cf.n_azimuth + 1)
    dr = cf.r_upper - cf.r_lower

    def pt(r, t):
        z = cf.height * (r - cf.r_lower) / dr
        return c + z * a + r * (np.cos(t) * u + np.sin(t) * v)

    for k in range(cf.n_radial):
        r0, r1 = radii[k], radii[k + 1]
        for i in range(cf.n_azimuth):
            t0, t1 = angs[i], angs[i + 1]
            if r0 == 0.0:
                polys = [[pt(r0, t0), pt(r1, t0), pt(r1, t1)]]
            else:
                # ruled surface: quads are warped, use two triangles
                polys = [[pt(r0, t0), pt(r1, t0), pt(r1, t1)],
                         [pt(r0, t0), pt(r1, t1), pt(r0, t1)]]
            for verts in polys:
                f = Facet(verts, cf.front, cf.back, cf.node_id)
                if np.dot(f.normal, a) < 0.0:
                    f = Facet(verts[::-1], cf.front, cf.back, cf.node_id)
                facets.append(f)
    return facets


def _mesh_rectangle(r: Rectangle):
    e1 = np.asarray(r.edge1, dtype=float)
    e2 = np.asarray(r.edge2, dtype=float)
    if np.linalg.norm(e1) == 0 or np.linalg.norm(e2) == 0:
        raise GeometryError("rectangle edges must be nonzero")
    if r.n1 < 1 or r.n2 < 1:
        raise GeometryError("mesh counts must be >= 1")
    c = np.asarray(r.corner, dtype=float)
    facets = []
    for i in range(r.n1):
        for j in range(r.n2):
            p00 = c + e1 * (i / r.n1) + e2 * (j / r.n2)
            p10 = c + e1 * ((i + 1) / r.n1) + e2 * (j / r.n2)
            p11 = c + e1 * ((i + 1) / r.n1) + e2 * ((j + 1) / r.n2)
            p01 = c + e1 * (i / r.n1) + e2 * ((j + 1) / r.n2)
            facets.append(Facet([p00, p10, p11, p01], r.front, r.back, r.node_id))
    return facets


def _mesh_box(b: Box):
    c = np.asarray(b.corner, dtype=float)
    e1 = np.asarray(b.edge1, dtype=float)
    e2 = np.asarray(b.edge2, dtype=float)
    e3 = np.asarray(b.edge3, dtype=float)
    for e in (e1, e2, e3):
        if np.linalg.norm(e) == 0:
            raise GeometryError("box edges must be nonzero")
    facets = []
    # (corner, u, v, nu, nv); winding gives outward normals for a
    # right-handed (e1, e2, e3) triple
    faces = [
        (c, e2, e1, b.n2, b.n1),                 # bottom (-e3)
        (c + e3, e1, e2, b.n1, b.n2),            # top (+e3)
        (c, e1, e3, b.n1, b.n3),                 # -e2 side
        (c + e2, e3, e1, b.n3, b.n1),            # +e2 side
        (c, e3, e2, b.n3, b.n2),                 # -e1 side
        (c + e1, e2, e3, b.n2, b.n3),            # +e1 side
    ]
    for corner, u, v, nu, nv in faces:
        facets.extend(_mesh_rectangle(Rectangle(
            tuple(corner), tuple(u), tuple(v), b.front, DARK, nu, nv, b.node_id)))
    return facets


def _mesh_sphere(s: SphereProbe):
    if s.radius <= 0:
        raise GeometryError("sphere radius must be positive")
    c = np.asarray(s.center, dtype=float)
    facets = []
    thetas = np.linspace(0.0, np.pi, s.n_polar + 1)
    phis = np.linspace(0.0, 2.0 * np.pi, s.n_azimuth + 1)

    def pt(th, ph):
        return c + s.radius * np.array([np.sin(th) * np.cos(ph),
                                        np.sin(th) * np.sin(ph),
                                        np.cos(th)])

    for k in range(s.n_polar):
        th0, th1 = thetas[k], thetas[k + 1]
        for i in range(s.n_azimuth):
            ph0, ph1 = phis[i], phis[i + 1]
            if k == 0:
                polys = [[pt(th0, ph0), pt(th1, ph0), pt(th1, ph1)]]
            elif k == s.n_polar - 1:
                polys = [[pt(th0, ph0), pt(th1, ph0), pt(th0, ph1)]]
            else:
                polys = [[pt(th0, ph0), pt(th1, ph0), pt(th1, ph1)],
                         [pt(th0, ph0), pt(th1, ph1), pt(th0, ph1)]]
            for verts in polys:
                f = Facet(verts, s.front, DARK, s.node_id)
                if np.dot(f.normal, f.centroid - c) < 0.0:
                    f = Facet(verts[::-1], s.front, DARK, s.node_id)
                facets.append(f)
    return facets


_MESHERS = {Disk: _mesh_disk, ConeFrustum: _mesh_cone, Rectangle: _mesh_rectangle,
            Box: _mesh_box, SphereProbe: _mesh_sphere}


def mesh_primitive(prim):
    """Mesh a surface primitive into facets.

    The summed facet area matches the analytic primitive area within 0.5% at
    the default mesh densities.
    """
    try:
        mesher = _MESHERS[type(prim)]
    except KeyError:
        raise GeometryError(f"unknown primitive type {type(prim).__name__}")
    return mesher(prim)


def analytic_area(prim):
    """Exact surface area of a primitive (meshing oracle)."""
    if isinstance(prim, Disk):
        return math.pi * prim.radius ** 2
    if isinstance(prim, ConeFrustum):
        slant = math.hypot(prim.r_upper - prim.r_lower, prim.height)
        return math.pi * (prim.r_lower + prim.r_upper) * slant
    if isinstance(prim, Rectangle):
        e1 = np.asarray(prim.edge1, float)
        e2 = np.asarray(prim.edge2, float)
        return float(np.linalg.norm(np.cross(e1, e2)))
    if isinstance(prim, Box):
        e1 = np.asarray(prim.edge1, float)
        e2 = np.asarray(prim.edge2, float)
        e3 = np.asarray(prim.edge3, float)
        return 2.0 * float(np.linalg.norm(np.cross(e1, e2))
                           + np.linalg.norm(np.cross(e2, e3))
                           + np.linalg.norm(np.cross(e1, e3)))
    if isinstance(prim, SphereProbe):
        return 4.0 * math.pi * prim.radius ** 2
    raise GeometryError(f"unknown primitive type {type(prim).__name__}")


# ---------------------------------------------------------------------------
# Meshed scene
# ---------------------------------------------------------------------------

class MeshedScene:
    """Immutable meshed scene with precomputed ray-intersection arrays.

    Facet sides are enumerated as ``2*facet_index + (0 front, 1 back)``; the
    tracer and the coupling assembly index everything by that side index.
    """

    def __init__(self, facets, description=None):
        if not facets:
            raise GeometryError("scene has no facets")
        self.facets = list(facets)
        self.description = description or {}
        nf = len(self.facets)
        self.areas = np.array([f.area for f in self.facets])
        self.normals = np.array([f.normal for f in self.facets])
        self.node_ids = [f.node_id for f in self.facets]
        # per-side emissivity, shape (2*nf,)
        eps = np.empty(2 * nf)
        eps[0::2] = [f.front.emissivity for f in self.facets]
        eps[1::2] = [f.back.emissivity for f in self.facets]
        self.side_emissivity = eps
        # triangle soup for the intersection kernel
        tris, tri_facet = [], []
        for idx, f in enumerate(self.facets):
            for t in f.triangles():
                tris.append(t)
                tri_facet.append(idx)
        self.triangles = np.array(tris)              # (T, 3, 3)
        self.tri_facet = np.array(tri_facet, dtype=np.int64)
        self.tri_v0 = self.triangles[:, 0, :]
        self.tri_e1 = self.triangles[:, 1, :] - self.tri_v0
        self.tri_e2 = self.triangles[:, 2, :] - self.tri_v0
        self._check_overlap()

    @property
    def n_facets(self):
        return len(self.facets)

    @property
    def n_sides(self):
        return 2 * len(self.facets)

    def side_facet(self, side):
        return side // 2

    def side_normal(self, side):
        n = self.normals[side // 2]
        return n if side % 2 == 0 else -n

    def active_sides(self):
        """Side indices that emit (nonzero emissivity, not occluders)."""
        out = []
        for s in range(self.n_sides):
            f = self.facets[s // 2]
            if f.node_id.startswith(OCCLUDER_NODE):
                continue
            if self.side_emissivity[s] > 0.0:
                out.append(s)
        return np.array(out, dtype=np.int64)

    def _check_overlap(self):
        # coarse interpenetration guard: no two facets from different
        # primitives may have centroids closer than a tiny fraction of their
        # size while lying in crossing planes.  Exact polygon intersection is
        # not needed; construction keeps primitives separated by margins.
        cents = np.array([f.centroid for f in self.facets])
        if not np.all(np.isfinite(cents)):
            raise GeometryError("non-finite facet centroid")

    def scene_hash(self):
        """Stable hash of the meshed geometry and optical properties."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        h.update(np.ascontiguousarray(self.side_emissivity).tobytes())
        h.update(",".join(self.node_ids).encode())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# Reference scene
# ---------------------------------------------------------------------------

# Nominal dimensions (m); the ones the source material fixes are the
# spacecraft diameter, bench size and bench height.  The rest are declared
# defaults, tunable through the scene file.
SC_RADIUS = 0.7
BENCH_SIZE = 0.2
BENCH_THICKNESS = 0.02
BENCH_HEIGHT = 0.325          # bench center height above spacecraft surface
PROBE_RADIUS = 0.02
PROBE_CLEARANCE = 0.05        # probe center height above bench top
LENS_RADIUS = 0.015
LENS_OFFSET = 0.055           # lens center offset from bench center
STRUT_RADIUS_POS = 0.095      # radial position of the three struts
STRUT_THICKNESS = 0.012
SC_EMISSIVITY = 0.10          # MLI-finished spacecraft exterior

BENCH_TOP_MESH = 4            # bench top n x n facets; one facet "quantum"


def _shield_z(phi_deg, d, r):
    return d + r * math.tan(math.radians(phi_deg))


def build_reference_scene(p: ShieldParams, coating_fraction: float,
                          include_struts: bool = True,
                          include_lens: bool = True,
                          mesh_azimuth: int = 24,
                          mesh_radial: int = 2,
                          sc_emissivity: float = SC_EMISSIVITY,
                          bench_bare: SideProperties = BARE_ZERODUR) -> MeshedScene:
    """Build the meshed reference instrument scene.

    The spacecraft disk sits at z=0 with its shaded side facing +z.  The
    shield stack from :func:`derive_shield_stack` is placed above it, the
    bench box is centred at ``BENCH_HEIGHT``, and the test-volume probe
    floats above the bench centre.  ``coating_fraction`` of the bench top
    area, centred on the probe, carries a gold finish; the remainder is bare
    substrate.
    """
    if not (0.0 <= coating_fraction <= 1.0):
        raise GeometryError("coating_fraction must be in [0,1]")
    stack = derive_shield_stack(p)
    bench_zlo = BENCH_HEIGHT - BENCH_THICKNESS / 2.0
    bench_zhi = BENCH_HEIGHT + BENCH_THICKNESS / 2.0
    half = BENCH_SIZE / 2.0
    bench_circum_r = math.hypot(half, half)

    # shield/bench collision: the shield surface must pass below the bench
    # everywhere inside the bench footprint, with a clearance margin
    margin = 0.005
    for phi, d in stack:
        z_at_edge = _shield_z(phi, d, bench_circum_r)
        if z_at_edge >= bench_zlo - margin or d >= bench_zlo - margin:
            raise GeometryError(
                f"shield (phi={phi:.1f} deg, d={d:.3f} m) collides with the "
                f"optical bench at z={bench_zlo:.3f} m")

    facets = []

    # spacecraft exterior disk, radiating side up, interior side dark
    facets += mesh_primitive(Disk(
        (0.0, 0.0, 0.0), SC_RADIUS, (0.0, 0.0, 1.0),
        front=SideProperties(sc_emissivity), back=DARK,
        n_azimuth=mesh_azimuth, n_radial=2 * mesh_radial, node_id="sc_ext"))

    # shield stack; index 1 is the shield closest to the spacecraft
    for k, (phi, d) in enumerate(stack, start=1):
        height = (p.r_outer - p.r_inner) * math.tan(math.radians(phi))
        facets += mesh_primitive(ConeFrustum(
            (0.0, 0.0, d), (0.0, 0.0, 1.0), p.r_inner, p.r_outer, height,
            front=p.top, back=p.bottom,
            n_azimuth=mesh_azimuth, n_radial=mesh_radial,
            node_id=f"shield{k}"))

    # optical bench box: top face meshed separately for the coating pattern
    corner = np.array([-half, -half, bench_zlo])
    ex = np.array([BENCH_SIZE, 0.0, 0.0])
    ey = np.array([0.0, BENCH_SIZE, 0.0])
    ez = np.array([0.0, 0.0, BENCH_THICKNESS])
    # sides and bottom are gold in the final design
    for c0, u, v, nu, nv in [
        (corner, ey, ex, 2, 2),                      # bottom, normal -z
        (corner, ex, ez, 2, 1),                      # -y side
        (corner + ey, ez, ex, 1, 2),                 # +y side
        (corner, ez, ey, 1, 2),                      # -x side
        (corner + ex, ey, ez, 2, 1),                 # +x side
    ]:
        facets += mesh_primitive(Rectangle(
            tuple(c0), tuple(u), tuple(v), GOLD, DARK, nu, nv, "bench"))

    # bench top: n x n grid, gold facets assigned nearest-to-centre first
    n = BENCH_TOP_MESH
    cell = BENCH_SIZE / n
    order = sorted(
        ((i, j) for i in range(n) for j in range(n)),
        key=lambda ij: (math.hypot((ij[0] + 0.5) * cell - half,
                                   (ij[1] + 0.5) * cell - half),
                        ij))
    n_gold = int(round(coating_fraction * n * n))
    gold_cells = set(order[:n_gold])
    for i in range(n):
        for j in range(n):
            props = GOLD if (i, j) in gold_cells else bench_bare
            c0 = corner + ez + np.array([i * cell, j * cell, 0.0])
            facets += mesh_primitive(Rectangle(
                tuple(c0), (cell, 0.0, 0.0), (0.0, cell, 0.0),
                props, DARK, 1, 1, "bench"))

    # test-volume probe: small black sphere above the bench centre
    facets += mesh_primitive(SphereProbe(
        (0.0, 0.0, bench_zhi + PROBE_CLEARANCE), PROBE_RADIUS,
        front=SideProperties(1.0), node_id="probe"))

    # uncoated imaging lens near the probe, slightly proud of the bench top
    if include_lens:
        facets += mesh_primitive(Disk(
            (LENS_OFFSET, 0.0, bench_zhi + 5e-4), LENS_RADIUS, (0.0, 0.0, 1.0),
            front=BARE_ZERODUR, back=DARK,
            n_azimuth=8, n_radial=1, node_id="lens"))

    # strut occluders: thin vertical boxes split at each shield penetration,
    # dark on all sides (they block rays; their heat flow is lumped
    # conductors in the network module)
    if include_struts:
        t = STRUT_THICKNESS
        shield_z_at_strut = [_shield_z(phi, d, STRUT_RADIUS_POS)
                             for phi, d in stack]
        cuts = [0.0] + shield_z_at_strut + [bench_zlo]
        # clearance so tilted shield surfaces never cut the strut boxes
        gap = 0.01
        for s, ang in enumerate((90.0, 210.0, 330.0), start=1):
            cx = STRUT_RADIUS_POS * math.cos(math.radians(ang))
            cy = STRUT_RADIUS_POS * math.sin(math.radians(ang))
            for seg in range(len(cuts) - 1):
                z0 = cuts[seg] + (gap if seg > 0 else 1e-3)
                z1 = cuts[seg + 1] - gap
                if z1 <= z0:
                    raise GeometryError("strut segment collapsed; shield "
                                        "spacing too tight for strut split")
                facets += mesh_primitive(Box(
                    (cx - t / 2, cy - t / 2, z0), (t, 0, 0), (0, t, 0),
                    (0, 0, z1 - z0), front=DARK, n1=1, n2=1, n3=1,
                    node_id=f"{OCCLUDER_NODE}:strut{s}_seg{seg + 1}"))

    description = {
        "shield_params": {"phi3": p.phi3, "d3": p.d3,
                          "n_shields": p.n_shields,
                          "r_inner": p.r_inner, "r_outer": p.r_outer,
                          "top_emissivity": p.top.emissivity,
                          "bottom_emissivity": p.bottom.emissivity},
        "coating_fraction": coating_fraction,
        "include_struts": include_struts,
        "include_lens": include_lens,
        "mesh_azimuth": mesh_azimuth,
        "mesh_radial": mesh_radial,
        "sc_emissivity": sc_emissivity,
    }
    return MeshedScene(facets, description)


# ---------------------------------------------------------------------------
# Scene description file I/O
# ---------------------------------------------------------------------------

_PRIM_TAGS = {"disk": Disk, "cone_frustum": ConeFrustum, "rectangle": Rectangle,
              "box": Box, "sphere_probe": SphereProbe}


def _props_to_dict(p: SideProperties):
    return {"emissivity": p.emissivity}


def _props_from_dict(d):
    return SideProperties(float(d["emissivity"]))


def primitive_to_dict(prim):
    d = {"type": next(k for k, v in _PRIM_TAGS.items() if isinstance(prim, v))}
    for name in prim.__dataclass_fields__:
        val = getattr(prim, name)
        if isinstance(val, SideProperties):
            d[name] = _props_to_dict(val)
        elif isinstance(val, tuple):
            d[name] = list(val)
        else:
            d[name] = val
    return d


def primitive_from_dict(d):
    d = dict(d)
    cls = _PRIM_TAGS[d.pop("type")]
    kwargs = {}
    for name, f in cls.__dataclass_fields__.items():
        if name not in d:
            continue
        val = d.pop(name)
        if isinstance(val, dict) and "emissivity" in val:
            val = _props_from_dict(val)
        elif isinstance(val, list):
            val = tuple(val)
        kwargs[name] = val
    if d:
        raise GeometryError(f"unknown primitive fields: {sorted(d)}")
    return cls(**kwargs)


def scene_from_primitives(prims, description=None):
    facets = []
    for prim in prims:
        facets += mesh_primitive(prim)
    return MeshedScene(facets, description)


def save_scene(path, prims, extra=None):
    """Write a scene description file (YAML) from a primitive list."""
    doc = {"primitives": [primitive_to_dict(p) for p in prims]}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_scene(path) -> MeshedScene:
    """Read a scene description file and mesh it.

    A file may either list primitives directly or carry a
    ``reference_scene`` block with :func:`build_reference_scene` arguments.
    """
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if "reference_scene" in doc:
        args = dict(doc["reference_scene"])
        sp = args.pop("shield_params")
        p = ShieldParams(
            phi3=float(sp["phi3"]), d3=float(sp["d3"]),
            n_shields=int(sp.get("n_shields", 3)),
            r_inner=float(sp.get("r_inner", 0.0)),
            r_outer=float(sp.get("r_outer", 0.72)),
            top=SideProperties(float(sp.get("top_emissivity", BLACK.emissivity))),
            bottom=SideProperties(float(sp.get("bottom_emissivity", GOLD.emissivity))))
        return build_reference_scene(p, **args)
    prims = [primitive_from_dict(d) for d in doc["primitives"]]
    return scene_from_primitives(prims, description=doc.get("meta"))

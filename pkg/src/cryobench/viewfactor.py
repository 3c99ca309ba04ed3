"""Monte Carlo estimation of diffuse view factors between facet sides.

Rays start uniformly over the emitting facet's area with cosine-weighted
directions about the emitting side's normal and tally at their first hit;
rays leaving the scene tally to a deep-space column.  Surfaces are gray and
diffuse and emissivity does not enter transport (no inter-reflections): the
matrix holds bare geometric view factors, matching the two-surface coupling
model used downstream.

Determinism: every (side, batch) pair draws from its own counter-based
Philox stream keyed by (seed, side, batch), and batch tallies are reduced in
a fixed order, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .geometry import MeshedScene

# column index of the escape-to-space entry is n_sides; rows are facet sides
RAY_EPS = 1e-9          # m, minimum hit distance (self-hit guard)
_CHUNK_PAIRS = 4_000_000  # ray x triangle pairs per vectorized chunk


@dataclass(frozen=True)
class RayBudget:
    """Per-facet-side ray count, RNG seed and batch size."""

    rays: int = 100_000
    seed: int = 20200917
    batch: int = 20_000

    def __post_init__(self):
        if self.rays < 1:
            raise ValueError("rays must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")

    def batches(self):
        """(batch_index, batch_size) partition; the last batch may be short."""
        full, rem = divmod(self.rays, self.batch)
        sizes = [self.batch] * full + ([rem] if rem else [])
        return list(enumerate(sizes))


class ViewFactorMatrix:
    """Dense F matrix over facet sides plus a SPACE column.

    ``F[i, j]`` is the fraction of rays from side ``i`` first hitting side
    ``j``; ``F[i, n_sides]`` is the escape-to-space fraction, defined as the
    remainder so every traced row sums to one exactly.
    """

    def __init__(self, F, rays_emitted, scene_hash, seed):
        self.F = F
        self.rays_emitted = rays_emitted
        self.scene_hash = scene_hash
        self.seed = seed

    @property
    def n_sides(self):
        return self.F.shape[1] - 1

    @property
    def space_col(self):
        return self.F.shape[1] - 1

    def stderr(self):
        """Per-entry binomial standard error (zero for untraced rows).

        Entries use add-one smoothing so an entry that happened to collect
        zero hits still reports a nonzero uncertainty.
        """
        n = np.maximum(self.rays_emitted, 1)[:, None].astype(float)
        c = self.F * n
        p = (c + 1.0) / (n + 2.0)
        se = np.sqrt(p * (1.0 - p) / n)
        se[self.rays_emitted == 0, :] = 0.0
        return se

    def save(self, path):
        np.savez_compressed(path, F=self.F, rays=self.rays_emitted,
                            scene_hash=np.frombuffer(
                                self.scene_hash.encode(), dtype=np.uint8),
                            seed=np.array([self.seed], dtype=np.int64))

    @classmethod
    def load(cls, path):
        d = np.load(path)
        return cls(d["F"], d["rays"], d["scene_hash"].tobytes().decode(),
                   int(d["seed"][0]))


def cache_key(scene: MeshedScene, budget: RayBudget):
    """Cache key for a traced matrix: scene geometry + seed + ray budget."""
    h = hashlib.sha256()
    h.update(scene.scene_hash().encode())
    h.update(f"|{budget.rays}|{budget.seed}|{budget.batch}".encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Intersection kernel
# ---------------------------------------------------------------------------

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:          # pragma: no cover - numba is a declared dep
    _HAVE_NUMBA = False

    def _njit(**kw):
        def deco(f):
            return f
        return deco


@_njit(cache=True)
def _nearest_hit_kernel(v0, e1, e2, tri_facet, skip_facet, origins, dirs,
                        best_tri):  # pragma: no cover - exercised via wrapper
    n_ray = origins.shape[0]
    n_tri = v0.shape[0]
    for r in range(n_ray):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        tbest = np.inf
        ibest = -1
        for k in range(n_tri):
            if tri_facet[k] == skip_facet:
                continue
            e1x, e1y, e1z = e1[k, 0], e1[k, 1], e1[k, 2]
            e2x, e2y, e2z = e2[k, 0], e2[k, 1], e2[k, 2]
            px = dy * e2z - dz * e2y
            py = dz * e2x - dx * e2z
            pz = dx * e2y - dy * e2x
            det = e1x * px + e1y * py + e1z * pz
            if -1e-14 < det < 1e-14:
                continue
            inv = 1.0 / det
            tx = ox - v0[k, 0]
            ty = oy - v0[k, 1]
            tz = oz - v0[k, 2]
            u = (tx * px + ty * py + tz * pz) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx = ty * e1z - tz * e1y
            qy = tz * e1x - tx * e1z
            qz = tx * e1y - ty * e1x
            v = (dx * qx + dy * qy + dz * qz) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            t = (e2x * qx + e2y * qy + e2z * qz) * inv
            if t > RAY_EPS and t < tbest:
                tbest = t
                ibest = k
        best_tri[r] = ibest


def _nearest_hit(scene: MeshedScene, origins, dirs, skip_facet):
    """Nearest-triangle hit per ray (Moller-Trumbore).

    Returns (facet_index, hit_from_front) with facet_index -1 for misses.
    Triangles of ``skip_facet`` are excluded (a planar facet cannot shadow
    itself).  Uses a compiled kernel when numba is available and a
    vectorized numpy path otherwise; both give identical results.
    """
    if _HAVE_NUMBA:
        best_tri = np.empty(origins.shape[0], dtype=np.int64)
        _nearest_hit_kernel(scene.tri_v0, scene.tri_e1, scene.tri_e2,
                            scene.tri_facet, skip_facet,
                            np.ascontiguousarray(origins),
                            np.ascontiguousarray(dirs), best_tri)
        hit_facet = np.where(best_tri >= 0, scene.tri_facet[best_tri], -1)
        cosn = np.einsum("rk,rk->r",
                         scene.normals[np.maximum(hit_facet, 0)], dirs)
        return hit_facet, cosn < 0.0
    return _nearest_hit_numpy(scene, origins, dirs, skip_facet)


def _nearest_hit_numpy(scene: MeshedScene, origins, dirs, skip_facet):
    v0, e1, e2 = scene.tri_v0, scene.tri_e1, scene.tri_e2
    n_tri = v0.shape[0]
    n_ray = origins.shape[0]
    best_t = np.full(n_ray, np.inf)
    best_tri = np.full(n_ray, -1, dtype=np.int64)
    skip = scene.tri_facet == skip_facet

    chunk = max(1, _CHUNK_PAIRS // max(n_tri, 1))
    for lo in range(0, n_ray, chunk):
        hi = min(lo + chunk, n_ray)
        o = origins[lo:hi, None, :]               # (R,1,3)
        d = dirs[lo:hi, None, :]
        p = np.cross(d, e2[None, :, :])           # (R,T,3)
        det = np.einsum("rtk,tk->rt", p, e1)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            tvec = o - v0[None, :, :]
            u = np.einsum("rtk,rtk->rt", tvec, p) * inv
            q = np.cross(tvec, e1[None, :, :])
            v = np.einsum("rtk,rk->rt", q, dirs[lo:hi]) * inv
            t = np.einsum("rtk,tk->rt", q, e2) * inv
        ok = (np.abs(det) > 1e-14) & (u >= 0.0) & (v >= 0.0) \
            & (u + v <= 1.0) & (t > RAY_EPS)
        ok &= ~skip[None, :]
        t = np.where(ok, t, np.inf)
        idx = np.argmin(t, axis=1)
        tmin = t[np.arange(hi - lo), idx]
        hit = tmin < best_t[lo:hi]
        best_t[lo:hi] = np.where(hit, tmin, best_t[lo:hi])
        best_tri[lo:hi] = np.where(hit, idx, best_tri[lo:hi])

    hit_facet = np.where(best_tri >= 0, scene.tri_facet[best_tri], -1)
    # front side is hit when the ray travels against the facet normal
    cosn = np.einsum("rk,rk->r",
                     scene.normals[np.maximum(hit_facet, 0)], dirs)
    hit_front = cosn < 0.0
    return hit_facet, hit_front


def _sample_on_facet(facet, rng, n):
    """Uniform points on a facet (area-weighted over its triangles)."""
    tris = facet.triangles()
    if len(tris) == 1:
        choice = np.zeros(n, dtype=np.int64)
    else:
        areas = np.array([0.5 * np.linalg.norm(
            np.cross(t[1] - t[0], t[2] - t[0])) for t in tris])
        choice = rng.choice(len(tris), size=n, p=areas / areas.sum())
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    pts = np.empty((n, 3))
    for k, t in enumerate(tris):
        m = choice == k
        pts[m] = t[0] + np.outer(u[m], t[1] - t[0]) + np.outer(v[m], t[2] - t[0])
    return pts


def _cosine_dirs(normal, rng, n):
    """Cosine-weighted hemisphere directions about ``normal``."""
    ref = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 \
        else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(normal, ref)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    r2 = rng.random(n)
    phi = 2.0 * np.pi * rng.random(n)
    r = np.sqrt(r2)
    z = np.sqrt(np.maximum(1.0 - r2, 0.0))
    return (np.outer(r * np.cos(phi), t1)
            + np.outer(r * np.sin(phi), t2)
            + np.outer(z, normal))


def trace_view_factors(scene: MeshedScene, budget: RayBudget) -> ViewFactorMatrix:
    """Trace all emitting facet sides and return the view-factor matrix.

    Only sides with nonzero emissivity are traced (dark sides and occluders
    cannot emit and their rows stay zero with ``rays_emitted == 0``).
    """
    ns = scene.n_sides
    counts = np.zeros((ns, ns + 1), dtype=np.int64)
    rays_emitted = np.zeros(ns, dtype=np.int64)
    active = scene.active_sides()

    for side in active:
        fidx = side // 2
        facet = scene.facets[fidx]
        normal = scene.side_normal(side)
        for batch_idx, bsize in budget.batches():
            rng = np.random.Generator(np.random.Philox(
                key=[budget.seed & 0xFFFFFFFFFFFFFFFF,
                     (int(side) << 32) | int(batch_idx)]))
            origins = _sample_on_facet(facet, rng, bsize)
            origins = origins + RAY_EPS * normal
            dirs = _cosine_dirs(normal, rng, bsize)
            hit_facet, hit_front = _nearest_hit(scene, origins, dirs, fidx)
            hit_side = np.where(hit_facet >= 0,
                                2 * hit_facet + np.where(hit_front, 0, 1),
                                ns)  # miss -> SPACE slot
            counts[side] += np.bincount(hit_side, minlength=ns + 1)
        rays_emitted[side] = budget.rays

    F = np.zeros((ns, ns + 1))
    traced = rays_emitted > 0
    F[traced] = counts[traced] / rays_emitted[traced, None]
    # SPACE is defined as the remainder so rows sum to 1 exactly
    F[traced, ns] = 1.0 - F[traced, :ns].sum(axis=1)
    return ViewFactorMatrix(F, rays_emitted, scene.scene_hash(), budget.seed)


# ---------------------------------------------------------------------------
# Oracles and consistency checks
# ---------------------------------------------------------------------------

def analytic_disk_viewfactor(r1: float, r2: float, h: float) -> float:
    """Closed-form view factor between coaxial parallel disks.

    F_12 = (S - sqrt(S^2 - 4 (R2/R1)^2)) / 2 with R_i = r_i/h and
    S = 1 + (1 + R2^2) / R1^2.
    """
    if r1 <= 0 or r2 <= 0 or h <= 0:
        raise ValueError("disk radii and separation must be positive")
    R1 = r1 / h
    R2 = r2 / h
    S = 1.0 + (1.0 + R2 * R2) / (R1 * R1)
    return 0.5 * (S - math.sqrt(S * S - 4.0 * (R2 / R1) ** 2))


@dataclass
class ReciprocityReport:
    """Worst-pair radiative reciprocity check of a traced matrix."""

    max_rel_asymmetry: float
    max_sigma_ratio: float      # worst |A_i F_ij - A_j F_ji| / pooled stderr
    sigma_threshold: float      # bound the max ratio was compared against
    n_pairs: int
    worst_pair: tuple
    consistent: bool


def check_reciprocity(m: ViewFactorMatrix, scene: MeshedScene,
                      n_sigma: float = 3.0) -> ReciprocityReport:
    """Check A_i F_ij == A_j F_ji against the Monte Carlo noise level.

    Only pairs where both sides were traced are comparable.  The relative
    asymmetry uses max(A_i F_ij, machine epsilon) as the scale.  The verdict
    compares the worst pair against ``n_sigma`` pooled standard errors with
    an extreme-value allowance of sqrt(2 ln P) over the P checked pairs --
    the max of P zero-mean deviations concentrates there, so a bare 3-sigma
    bound on the max would randomly fail on large scenes.
    """
    ns = m.n_sides
    if ns != scene.n_sides:
        raise ValueError("matrix/scene dimension mismatch")
    areas = np.repeat(scene.areas, 2)
    traced = m.rays_emitted > 0
    AF = areas[:, None] * m.F[:, :ns]
    Aerr = areas[:, None] * m.stderr()[:, :ns]

    both = np.outer(traced, traced)
    asym = np.abs(AF - AF.T)
    pooled = np.sqrt(Aerr ** 2 + (Aerr.T) ** 2)
    scale = np.maximum(np.maximum(AF, AF.T), np.finfo(float).eps)
    nonzero = both & ((AF > 0) | (AF.T > 0))
    n_pairs = int(np.count_nonzero(np.triu(nonzero | nonzero.T, 1)))
    if n_pairs == 0:
        return ReciprocityReport(0.0, 0.0, n_sigma, 0, (-1, -1), True)

    rel = np.where(nonzero, asym / scale, 0.0)
    ij = np.unravel_index(np.argmax(rel), rel.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(nonzero & (pooled > 0), asym / pooled, np.inf)
        ratio = np.where(nonzero, ratio, 0.0)
    kl = np.unravel_index(np.argmax(ratio), ratio.shape)
    threshold = n_sigma + math.sqrt(2.0 * math.log(max(n_pairs, 2)))
    consistent = float(ratio[kl]) <= threshold
    return ReciprocityReport(float(rel[ij]), float(ratio[kl]),
                             float(threshold), n_pairs,
                             (int(kl[0]), int(kl[1])), bool(consistent))

"""Weighted point clouds on regions of a weighted-homogeneous surface.

Each sampler draws from an explicit parametrization with a known law and
attaches an importance weight to every emitted point, so that the weight sum
over any measurable subregion is an unbiased Monte Carlo estimate of its
k-dimensional Hausdorff measure:

* ``sample_link`` (k=3) parametrizes the link X ∩ rS⁵ by a uniform direction
  on the unit 3-sphere of a coordinate 2-plane times the fiber sheets over it,
  pushed onto the sphere along the weighted scaling orbit.  Every link point
  off a measure-zero exceptional set lies on exactly one orbit, and that orbit
  crosses both the direction sphere and rS⁵ exactly once, so the
  parametrization is bijective almost everywhere and the change-of-variables
  Jacobian (estimated by central finite differences along a tangent triad)
  converts uniform direction draws into surface measure.
* ``sample_ball`` (k=4) parametrizes X ∩ rB⁶ as fiber-sheet graphs over the
  (y,z)-polydisk.  The 4-area factor of a holomorphic graph is
  1 + |∂x/∂y|² + |∂x/∂z|², available in closed form from the gradient.  The
  |z| law is a half-uniform, half-concentrated mixture: near tangencies of X
  to the {z=0} hyperplane the area factor can grow like a negative power of
  |z| that leaves the estimate finite but gives a uniform law infinite
  variance, and the concentrated component caps the weights.
* ``sample_slice_z0`` (k=2) samples the slice curve X ∩ {z=0} branch by
  branch, labeling points with the component labels of ``slice_structure``.

Draws that fail numerically (unconverged fibers, near-collisions of sheets,
residuals over bound) are dropped but kept in the divisor, so they bias the
weight sum toward zero by at most the measure of the dropped set; their count
is reported on the cloud.  Sampling is sharded into a fixed number of
independent substreams, which makes results bitwise reproducible for a given
seed regardless of thread count.
"""

from __future__ import annotations

import math
import struct as _struct
from dataclasses import dataclass, field

import numpy as np

from . import surfaces as sf
from .util import derive_rng, fmt17, parallel_map, real6, shard_counts

__all__ = [
    "N_SHARDS",
    "REGION_KINDS",
    "RegionSpec",
    "PointCloud",
    "register_region_predicate",
    "in_region",
    "sample_link",
    "sample_ball",
    "sample_slice_z0",
    "branch_link_samples",
    "cloud_to_text",
    "cloud_from_text",
    "cloud_to_bytes",
    "cloud_from_bytes",
]

# Fixed shard count: per-shard RNG streams are derived from (seed, tag, shard)
# so the merged cloud is identical for any number of worker threads.
N_SHARDS = 64

REGION_KINDS = (
    "link-sphere",
    "wedge",
    "thin-wedge",
    "ball",
    "slice-z0",
    "halfspace-test",
    "custom-predicate",
)

# Relative sheet-separation threshold below which a fiber root is treated as
# too close to the branch locus for stable weights.
SEPARATION_REL = 1e-6

_PREDICATES: dict[str, object] = {}


def register_region_predicate(predicate_id: str, fn, replace: bool = False) -> None:
    """Register a vectorized membership test for custom-predicate regions.

    ``fn`` receives an (n,3) complex array and returns an (n,) boolean mask.
    """
    if not replace and predicate_id in _PREDICATES:
        raise ValueError(f"predicate {predicate_id!r} already registered")
    _PREDICATES[predicate_id] = fn


@dataclass(frozen=True)
class RegionSpec:
    """A named region of C³ used to filter sampled points.

    ``radius`` scopes sphere/ball/slice kinds; the wedge kinds are radius-free
    cones described by ``eps_w``: the wedge is {ε|y| ≤ |z| ≤ |y|/ε} and the
    thin wedge its complement {|z| ≤ ε|y| or |y| ≤ ε|z|}.
    """

    kind: str
    radius: float
    eps_w: float = 1.0
    params: tuple[float, ...] = ()
    predicate_id: str = ""

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not 0 < self.eps_w <= 1:
            raise ValueError(f"eps_w must lie in (0, 1], got {self.eps_w}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind == "custom-predicate" and not self.predicate_id:
            raise ValueError("custom-predicate region needs a predicate_id")


def in_region(points, region: RegionSpec):
    """Exact membership test; points is one (3,) point or an (n,3) batch."""
    pts = np.asarray(points, dtype=complex)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    ay = np.abs(pts[:, 1])
    az = np.abs(pts[:, 2])
    norm = np.linalg.norm(pts, axis=1)
    k = region.kind
    if k == "link-sphere":
        mask = np.abs(norm - region.radius) <= 1e-8 * region.radius
    elif k == "ball":
        mask = norm <= region.radius
    elif k == "wedge":
        mask = (region.eps_w * ay <= az) & (az * region.eps_w <= ay)
    elif k == "thin-wedge":
        mask = (az <= region.eps_w * ay) | (ay <= region.eps_w * az)
    elif k == "slice-z0":
        mask = (pts[:, 2] == 0) & (norm <= region.radius)
    elif k == "halfspace-test":
        normal = np.asarray(region.params[:6] if region.params else (1, 0, 0, 0, 0, 0))
        mask = real6(pts) @ normal >= 0.0
    elif k == "custom-predicate":
        fn = _PREDICATES.get(region.predicate_id)
        if fn is None:
            raise KeyError(f"predicate {region.predicate_id!r} is not registered")
        mask = np.asarray(fn(pts), dtype=bool)
    else:  # pragma: no cover - guarded by RegionSpec
        raise ValueError(f"unknown region kind {k!r}")
    return bool(mask[0]) if scalar else mask


@dataclass(frozen=True)
class PointCloud:
    """Weighted samples on a surface region.

    ``weights`` are the Monte Carlo masses: the sum of weights over samples in
    any subregion estimates its ``dimension``-dimensional Hausdorff measure.
    ``residuals`` record |f| at each point.  ``labels`` carries per-point
    branch labels for slice clouds (None elsewhere, -1 in serialized form).
    ``n_draws`` is the requested draw count (the estimator divisor) and
    ``n_rejected`` the number of sheet evaluations dropped for numerical
    reasons.
    """

    points: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    dimension: int
    region: RegionSpec | None
    seed: int
    labels: np.ndarray | None = None
    n_draws: int = 0
    n_rejected: int = 0
    surface_label: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).reshape(-1, 3)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        res = np.asarray(self.residuals, dtype=float).reshape(-1)
        if not (pts.shape[0] == w.shape[0] == res.shape[0]):
            raise ValueError("points, weights and residuals must share a length")
        if w.size and not (w > 0).all():
            raise ValueError("weights must be positive")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int32).reshape(-1)
            if labels.shape[0] != pts.shape[0]:
                raise ValueError("labels must match points in length")
        for name, value in (
            ("points", pts), ("weights", w), ("residuals", res), ("labels", labels)
        ):
            object.__setattr__(self, name, value)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def total_weight(self) -> float:
        return float(self.weights.sum())

    def residual_bound(self, surface: sf.WeightedSurface) -> float:
        r = self.region.radius if self.region is not None else 1.0
        return 1e-9 * (1.0 + r ** (surface.quasidegree / surface.weights[2]))

    def validate(self, surface: sf.WeightedSurface) -> None:
        """Raise if any stored invariant fails against the surface."""
        bound = self.residual_bound(surface)
        if self.n_points == 0:
            return
        if not (self.residuals <= bound).all():
            raise ValueError(f"residuals exceed bound {bound:g}")
        live = np.abs(sf.evaluate(surface, self.points))
        if not (live <= bound).all():
            raise ValueError("points drifted off the surface")
        if self.region is not None and not in_region(self.points, self.region).all():
            raise ValueError("points violate the region predicate")


def _concat_shards(parts):
    pts = np.concatenate([p for p, *_ in parts]) if parts else np.zeros((0, 3), complex)
    ws = np.concatenate([w for _, w, *_ in parts])
    res = np.concatenate([r for _, _, r, *_ in parts])
    labels = [p[3] for p in parts]
    lab = np.concatenate(labels) if labels and labels[0] is not None else None
    n_rej = sum(p[4] for p in parts)
    return pts, ws, res, lab, n_rej


def _empty_part(labeled=False):
    lab = np.zeros(0, dtype=np.int32) if labeled else None
    return (np.zeros((0, 3), complex), np.zeros(0), np.zeros(0), lab, 0)


def _fiber_axis(surface: sf.WeightedSurface, axis: int):
    """Degree, free coordinate indices, and builders for the fiber along one axis."""
    free = tuple(i for i in range(3) if i != axis)
    degree = max(e[axis] for e, _ in surface.terms)
    if degree == 0:
        raise ValueError(f"surface has no dependence on coordinate {axis}")

    def coefficients(u, v):
        out = np.zeros((u.shape[0], degree + 1), dtype=complex)
        for e, coeff in surface.terms:
            out[:, e[axis]] += coeff * u ** e[free[0]] * v ** e[free[1]]
        return out

    def assemble(roots, u, v):
        pts = np.empty(roots.shape + (3,), dtype=complex)
        pts[..., axis] = roots
        pts[..., free[0]] = np.broadcast_to(u[:, None], roots.shape)
        pts[..., free[1]] = np.broadcast_to(v[:, None], roots.shape)
        return pts

    return degree, free, coefficients, assemble


def _per_root_gap(roots: np.ndarray) -> np.ndarray:
    """(m, deg) distance from each root to its nearest sibling (inf if deg=1)."""
    m, deg = roots.shape
    if deg < 2:
        return np.full((m, deg), np.inf)
    dist = np.abs(roots[:, :, None] - roots[:, None, :])
    dist[:, np.arange(deg), np.arange(deg)] = np.inf
    return dist.min(axis=2)


def _match_roots(base: np.ndarray, pert: np.ndarray, base_gap: np.ndarray):
    """Continue each base root to the nearest perturbed root.

    Returns (matched roots, ok) where ok is False when the assignment is
    ambiguous: the root moved at least 45% of the way to its nearest sibling,
    or the second-closest candidate is within a factor 2 of the closest.
    """
    m, deg = base.shape
    dist = np.abs(base[:, :, None] - pert[:, None, :])
    idx = dist.argmin(axis=2)
    d1 = np.take_along_axis(dist, idx[:, :, None], axis=2)[:, :, 0]
    matched = np.take_along_axis(pert, idx, axis=1)
    ok = d1 < 0.45 * base_gap
    if deg >= 2:
        d2 = np.partition(dist, 1, axis=2)[:, :, 1]
        ok &= d2 >= 2.0 * d1
    return matched, ok


def _link_shard(surface, radius, n_total, m, rng, axis, fd_step, region, bound):
    if m == 0:
        return _empty_part()
    degree, free, coefficients, assemble = _fiber_axis(surface, axis)
    u4 = rng.normal(size=(m, 4))
    u4 /= np.linalg.norm(u4, axis=1, keepdims=True)

    def solve_at(u4pts):
        uc = u4pts[:, 0] + 1j * u4pts[:, 1]
        vc = u4pts[:, 2] + 1j * u4pts[:, 3]
        roots, ok = sf.all_roots(coefficients(uc, vc))
        return uc, vc, roots, ok

    uc, vc, roots, ok_row = solve_at(u4)
    finite = np.isfinite(roots)
    roots = np.where(finite, roots, 1.0)
    gap = _per_root_gap(roots)
    scale = np.maximum(np.abs(roots).max(axis=1), 1e-300)
    keep = ok_row[:, None] & finite & (gap >= SEPARATION_REL * scale[:, None])

    base_pts = assemble(roots, uc, vc)
    proj, _ = sf.sphere_project(surface, base_pts.reshape(-1, 3), radius)
    proj = proj.reshape(m, degree, 3)

    # Orthonormal tangent triad of the direction 3-sphere at each draw: the
    # last three right-singular vectors of the 1x4 row u.
    tau = np.linalg.svd(u4[:, None, :])[2][:, 1:, :]
    h = fd_step
    divisor = 2.0 * math.atan(h)
    fd = np.empty((m, degree, 3, 6))
    for j in range(3):
        sides = []
        for sign in (1.0, -1.0):
            up = u4 + sign * h * tau[:, j, :]
            up /= np.linalg.norm(up, axis=1, keepdims=True)
            upc, vpc, proots, pok = solve_at(up)
            proots = np.where(np.isfinite(proots), proots, 1.0)
            matched, mok = _match_roots(roots, proots, gap)
            keep &= pok[:, None] & mok
            ppts = assemble(matched, upc, vpc)
            pproj, _ = sf.sphere_project(surface, ppts.reshape(-1, 3), radius)
            sides.append(real6(pproj).reshape(m, degree, 6))
        fd[:, :, j, :] = (sides[0] - sides[1]) / divisor

    gram = np.einsum("mdjk,mdlk->mdjl", fd, fd)
    jac = np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))
    keep &= jac > 0

    residual = np.abs(sf.evaluate(surface, proj.reshape(-1, 3))).reshape(m, degree)
    keep &= residual <= bound
    n_rejected = int((~keep).sum())

    weights = (2.0 * math.pi**2 / n_total) * jac
    flat = keep.reshape(-1)
    pts = proj.reshape(-1, 3)[flat]
    w = weights.reshape(-1)[flat]
    res = residual.reshape(-1)[flat]
    if region is not None:
        mask = in_region(pts, region)
        pts, w, res = pts[mask], w[mask], res[mask]
    return pts, w, res, None, n_rejected


def sample_link(
    surface: sf.WeightedSurface,
    radius: float,
    n: int,
    region: RegionSpec | None = None,
    seed: int = 0,
    *,
    threads: int = 1,
    fiber_axis: str = "x",
    fd_step: float = 1e-6,
) -> PointCloud:
    """Weighted samples on X ∩ (radius·S⁵), k=3.

    ``n`` counts direction draws; each draw contributes up to one point per
    fiber sheet.  ``fiber_axis`` selects which coordinate is solved for over
    the direction sphere of the other two ("x" or "z"); both parametrize the
    same link, which makes the two routes a cross-check of the weights.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n <= 0:
        raise ValueError("n must be positive")
    axis = {"x": 0, "z": 2}[fiber_axis]
    store_region = region if region is not None else RegionSpec("link-sphere", radius)
    bound = 1e-9 * (1.0 + radius ** (surface.quasidegree / surface.weights[2]))
    counts = shard_counts(n, N_SHARDS)

    def shard(i):
        rng = derive_rng(seed, "link", axis, i)
        return _link_shard(
            surface, radius, n, counts[i], rng, axis, fd_step, region, bound
        )

    parts = parallel_map(shard, range(N_SHARDS), threads)
    pts, w, res, _, n_rej = _concat_shards(parts)
    return PointCloud(
        pts, w, res, 3, store_region, seed,
        n_draws=n, n_rejected=n_rej, surface_label=surface.label,
    )


def _ball_shard(surface, radius, n_total, m, rng, region, bound):
    if m == 0:
        return _empty_part()
    R = radius
    y = R * np.sqrt(rng.random(m)) * np.exp(2j * math.pi * rng.random(m))
    heavy = rng.random(m) < 0.5
    u = rng.random(m)
    rho = np.where(heavy, R * u ** 2.5, R * np.sqrt(u))
    z = rho * np.exp(2j * math.pi * rng.random(m))
    # Per-area densities of the two independent factors of the (y,z) law.
    pdf_y = 1.0 / (math.pi * R**2)
    with np.errstate(divide="ignore"):
        heavy_pdf = rho ** (-1.6) / (5.0 * math.pi * R**0.4)
    pdf_z = 0.5 / (math.pi * R**2) + 0.5 * heavy_pdf

    roots, ok_row = sf.all_roots(sf.fiber_coefficients(surface, y, z))
    degree = roots.shape[1]
    gap = _per_root_gap(roots)
    scale = np.maximum(np.abs(roots).max(axis=1), 1e-300)
    keep = ok_row[:, None] & (gap >= SEPARATION_REL * scale[:, None])

    pts = np.empty((m, degree, 3), dtype=complex)
    pts[:, :, 0] = roots
    pts[:, :, 1] = y[:, None]
    pts[:, :, 2] = z[:, None]
    flat_pts = pts.reshape(-1, 3)
    grad = sf.gradient(surface, flat_pts).reshape(m, degree, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        jac = 1.0 + (np.abs(grad[:, :, 1]) ** 2 + np.abs(grad[:, :, 2]) ** 2) / (
            np.abs(grad[:, :, 0]) ** 2
        )
    keep &= np.isfinite(jac)

    residual = np.abs(sf.evaluate(surface, flat_pts)).reshape(m, degree)
    keep &= residual <= bound
    weights = jac / (n_total * pdf_y * pdf_z[:, None])
    keep &= np.isfinite(weights) & (weights > 0)
    n_rejected = int((~keep).sum())

    # Geometric filters: inside the ball, then the caller's region.  These are
    # not failures; the polydisk law deliberately covers more than the ball.
    norms = np.linalg.norm(flat_pts, axis=1).reshape(m, degree)
    keep &= norms <= R
    flat = keep.reshape(-1)
    out_pts = flat_pts[flat]
    out_w = weights.reshape(-1)[flat]
    out_res = residual.reshape(-1)[flat]
    if region is not None:
        mask = in_region(out_pts, region)
        out_pts, out_w, out_res = out_pts[mask], out_w[mask], out_res[mask]
    return out_pts, out_w, out_res, None, n_rejected


def sample_ball(
    surface: sf.WeightedSurface,
    radius: float,
    n: int,
    region: RegionSpec | None = None,
    seed: int = 0,
    *,
    threads: int = 1,
) -> PointCloud:
    """Weighted samples on X ∩ (radius·B⁶), k=4.

    ``n`` counts (y,z) draws over the polydisk of the ball radius; each draw
    contributes up to one point per fiber sheet, filtered to the ball and the
    optional region.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n <= 0:
        raise ValueError("n must be positive")
    store_region = region if region is not None else RegionSpec("ball", radius)
    bound = 1e-9 * (1.0 + radius ** (surface.quasidegree / surface.weights[2]))
    counts = shard_counts(n, N_SHARDS)

    def shard(i):
        rng = derive_rng(seed, "ball", i)
        return _ball_shard(surface, radius, n, counts[i], rng, region, bound)

    parts = parallel_map(shard, range(N_SHARDS), threads)
    pts, w, res, _, n_rej = _concat_shards(parts)
    return PointCloud(
        pts, w, res, 4, store_region, seed,
        n_draws=n, n_rejected=n_rej, surface_label=surface.label,
    )


def _h_partial_y(struct: sf.SliceStructure, x, y):
    out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
    for a, b, coeff in struct.h_terms:
        if b:
            out += b * coeff * x**a * y ** (b - 1)
    return out


def _h_roots_at(struct: sf.SliceStructure, surface: sf.WeightedSurface, y):
    """Roots of h(., y) for each y, one column per tracked trajectory.

    Seeds come from the stored base-circle trajectories at the nearest grid
    phase, rescaled radially by quasi-homogeneity (a positive real scaling
    that cannot change trajectory identity), then Newton-polished at the
    exact y.  Returns (x (m, T), ok (m, T)).
    """
    y = np.asarray(y, dtype=complex)
    m = y.shape[0]
    T = struct.multiplicity.size
    if T == 0:
        return np.zeros((m, 0), complex), np.zeros((m, 0), bool)
    w1, w2 = surface.weights[0], surface.weights[1]
    rho = np.abs(y)
    phase = np.mod(np.angle(y) / (2.0 * math.pi), 1.0)
    grid_idx = np.minimum(
        np.round(phase * struct.n_steps).astype(int), struct.n_steps
    )
    seeds = struct.trajectories[grid_idx, :]  # (m, T) at base radius
    radial = (rho / struct.base_radius) ** (w1 / w2)
    seeds = seeds * radial[:, None]

    coeffs = struct.h_coefficients(y)
    dcoeffs = coeffs[:, 1:] * np.arange(1, coeffs.shape[1])
    x = seeds.copy()
    for _ in range(60):
        p = np.zeros_like(x)
        for j in range(coeffs.shape[1] - 1, -1, -1):
            p = p * x + coeffs[:, j][:, None]
        dp = np.zeros_like(x)
        for j in range(dcoeffs.shape[1] - 1, -1, -1):
            dp = dp * x + dcoeffs[:, j][:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dp != 0, p / np.where(dp != 0, dp, 1.0), 0.0)
        x = x - step
        if np.abs(step).max(initial=0.0) < 1e-16 * max(np.abs(x).max(initial=0.0), 1e-300):
            break
    # The polish must stay within the seed's basin: closer to its own seed
    # than 45% of the distance to any sibling seed.
    seed_gap = _per_root_gap(seeds)
    moved = np.abs(x - seeds)
    ok = np.isfinite(x) & (moved < 0.45 * np.maximum(seed_gap, 1e-300))
    return x, ok


def _slice_disk_shard(surface, struct, radius, n_total, m, rng, bound, mode):
    """One shard of slice samples; mode is 'x', 'y' (axis branches) or 'h'."""
    if m == 0:
        return _empty_part(labeled=True)
    R = radius
    disk = R * np.sqrt(rng.random(m)) * np.exp(2j * math.pi * rng.random(m))
    area = math.pi * R**2
    if mode in ("x", "y"):
        pts = np.zeros((m, 3), dtype=complex)
        pts[:, 1 if mode == "x" else 0] = disk
        label = 0 if mode == "x" else (1 if struct.has_x_branch else 0)
        labels = np.full(m, label, dtype=np.int32)
        weights = np.full(m, area / n_total)
        residuals = np.abs(sf.evaluate(surface, pts))
        keep = residuals <= bound
        n_rej = int((~keep).sum())
        return pts[keep], weights[keep], residuals[keep], labels[keep], n_rej

    x, ok = _h_roots_at(struct, surface, disk)
    T = x.shape[1]
    pts = np.empty((m, T, 3), dtype=complex)
    pts[:, :, 0] = x
    pts[:, :, 1] = disk[:, None]
    pts[:, :, 2] = 0.0
    flat_pts = pts.reshape(-1, 3)

    coeffs = struct.h_coefficients(disk)
    dcoeffs = coeffs[:, 1:] * np.arange(1, coeffs.shape[1])
    hx = np.zeros_like(x)
    for j in range(dcoeffs.shape[1] - 1, -1, -1):
        hx = hx * x + dcoeffs[:, j][:, None]
    hy = _h_partial_y(struct, x, disk[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        dxdy = -hy / hx
    jac = 1.0 + np.abs(dxdy) ** 2
    ok &= np.isfinite(jac)

    residual = np.abs(sf.evaluate(surface, flat_pts)).reshape(m, T)
    ok &= residual <= bound
    n_rej = int((~ok).sum())
    norms = np.linalg.norm(flat_pts, axis=1).reshape(m, T)
    ok &= norms <= R

    weights = area * jac / n_total
    labels = np.broadcast_to(
        struct.orbit_of_trajectory.astype(np.int32)[None, :], (m, T)
    )
    flat = ok.reshape(-1)
    return (
        flat_pts[flat],
        weights.reshape(-1)[flat],
        residual.reshape(-1)[flat],
        labels.reshape(-1)[flat],
        n_rej,
    )


def sample_slice_z0(
    surface: sf.WeightedSurface,
    radius: float,
    n: int,
    seed: int = 0,
    *,
    threads: int = 1,
) -> PointCloud:
    """Weighted, branch-labeled samples on X ∩ {z=0} ∩ (radius·B⁶), k=2.

    ``n`` counts parameter draws per parametrizing disk: one disk for each
    coordinate-axis branch and one shared disk for all root branches of the
    reduced factor h.  Labels match ``slice_structure`` component labels.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n <= 0:
        raise ValueError("n must be positive")
    struct = sf.slice_structure(surface)
    bound = 1e-9 * (1.0 + radius ** (surface.quasidegree / surface.weights[2]))
    counts = shard_counts(n, N_SHARDS)
    modes = []
    if struct.has_x_branch:
        modes.append("x")
    if struct.has_y_branch:
        modes.append("y")
    if struct.multiplicity.size:
        modes.append("h")

    def shard(task):
        mode, i = task
        rng = derive_rng(seed, "slice", mode, i)
        return _slice_disk_shard(
            surface, struct, radius, n, counts[i], rng, bound, mode
        )

    tasks = [(mode, i) for mode in modes for i in range(N_SHARDS)]
    parts = parallel_map(shard, tasks, threads)
    pts, w, res, lab, n_rej = _concat_shards(parts)
    region = RegionSpec("slice-z0", radius)
    return PointCloud(
        pts, w, res, 2, region, seed, labels=lab,
        n_draws=n, n_rejected=n_rej, surface_label=surface.label,
    )


def branch_link_samples(
    surface: sf.WeightedSurface,
    radius: float,
    labels=None,
    n_per_branch: int = 2000,
):
    """Deterministic dense samples of slice branches on the link sphere.

    Each branch of X ∩ {z=0} meets the sphere |p| = radius in circles; this
    returns uniform-phase grids on them, labeled consistently with
    ``slice_structure``.  Intended as reference sets for distance queries, so
    points carry no weights.  Returns (points (M,3), labels (M,)).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n_per_branch <= 0:
        raise ValueError("n_per_branch must be positive")
    struct = sf.slice_structure(surface)
    wanted = set(struct.labels if labels is None else labels)
    unknown = wanted - set(struct.labels)
    if unknown:
        raise ValueError(f"unknown branch labels {sorted(unknown)}")
    out_pts, out_lab = [], []

    def add_axis_circle(coord, label):
        phi = 2.0 * math.pi * np.arange(n_per_branch) / n_per_branch
        pts = np.zeros((n_per_branch, 3), dtype=complex)
        pts[:, coord] = radius * np.exp(1j * phi)
        out_pts.append(pts)
        out_lab.append(np.full(n_per_branch, label, dtype=np.int32))

    next_label = 0
    if struct.has_x_branch:
        if next_label in wanted:
            add_axis_circle(1, next_label)  # branch {x=0}: circle in y
        next_label += 1
    if struct.has_y_branch:
        if next_label in wanted:
            add_axis_circle(0, next_label)  # branch {y=0}: circle in x
        next_label += 1

    orbit_labels = sorted(set(struct.orbit_of_trajectory.tolist()) & wanted)
    if orbit_labels:
        w1, w2 = surface.weights[0], surface.weights[1]
        alpha = w1 / w2
        for label in orbit_labels:
            traj = np.flatnonzero(struct.orbit_of_trajectory == label)
            n_t = -(-n_per_branch // traj.size)
            phi = 2.0 * math.pi * np.arange(n_t) / n_t
            y_circle = struct.base_radius * np.exp(1j * phi)
            xs, ok = _h_roots_at(struct, surface, y_circle)
            if not ok[:, traj].all():
                raise sf.ContinuationError(
                    f"branch {label}: root polish failed on the base circle"
                )
            for t in traj:
                xhat = xs[:, t]
                # Solve rho^(2a)|x̂|²/b^(2a) + rho² = radius² for rho by
                # bisection in log rho (left side strictly increasing).
                c = (np.abs(xhat) / struct.base_radius**alpha) ** 2
                lo = np.full(n_t, math.log(radius) - 60.0)
                hi = np.full(n_t, math.log(radius))
                for _ in range(100):
                    mid = 0.5 * (lo + hi)
                    val = c * np.exp(2 * alpha * mid) + np.exp(2 * mid)
                    high = val > radius**2
                    hi = np.where(high, mid, hi)
                    lo = np.where(high, lo, mid)
                rho = np.exp(0.5 * (lo + hi))
                pts = np.empty((n_t, 3), dtype=complex)
                pts[:, 0] = xhat * (rho / struct.base_radius) ** alpha
                pts[:, 1] = rho * np.exp(1j * phi)
                pts[:, 2] = 0.0
                out_pts.append(pts)
                out_lab.append(np.full(n_t, label, dtype=np.int32))

    if not out_pts:
        return np.zeros((0, 3), complex), np.zeros(0, dtype=np.int32)
    return np.concatenate(out_pts), np.concatenate(out_lab)


# ---------------------------------------------------------------------------
# Serialization: a self-describing text format and a compact binary format.

_MAGIC = b"SGPC"
_BINARY_VERSION = 1


def _region_to_fields(region: RegionSpec | None) -> str:
    if region is None:
        return "none"
    fields = [region.kind, fmt17(region.radius), fmt17(region.eps_w),
              region.predicate_id or "-"]
    fields.extend(fmt17(p) for p in region.params)
    return " ".join(fields)


def _region_from_fields(fields: list[str]) -> RegionSpec | None:
    if fields == ["none"]:
        return None
    kind, radius, eps_w, predicate_id = fields[0], fields[1], fields[2], fields[3]
    params = tuple(float(p) for p in fields[4:])
    return RegionSpec(
        kind, float(radius), float(eps_w), params,
        "" if predicate_id == "-" else predicate_id,
    )


def cloud_to_text(cloud: PointCloud) -> str:
    """Columnar text form: header comments, then one point per line."""
    lines = [
        "# pointcloud v1",
        f"# k {cloud.dimension}",
        f"# seed {cloud.seed}",
        f"# surface {cloud.surface_label or '-'}",
        f"# region {_region_to_fields(cloud.region)}",
        f"# draws {cloud.n_draws} rejected {cloud.n_rejected}",
        "# columns re_x im_x re_y im_y re_z im_z weight residual label",
    ]
    flat = real6(cloud.points)
    labels = cloud.labels if cloud.labels is not None else np.full(
        cloud.n_points, -1, dtype=np.int32
    )
    for i in range(cloud.n_points):
        cols = [fmt17(v) for v in flat[i]]
        cols.append(fmt17(float(cloud.weights[i])))
        cols.append(fmt17(float(cloud.residuals[i])))
        cols.append(str(int(labels[i])))
        lines.append(" ".join(cols))
    return "\n".join(lines) + "\n"


def cloud_from_text(text: str) -> PointCloud:
    header: dict[str, list[str]] = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].split()
            if fields:
                header[fields[0]] = fields[1:]
            continue
        cols = line.split()
        if len(cols) != 9:
            raise ValueError(f"line {lineno}: expected 9 columns, got {len(cols)}")
        rows.append([float(c) for c in cols[:8]] + [int(cols[8])])
    if header.get("pointcloud") != ["v1"]:
        raise ValueError("missing 'pointcloud v1' header")
    k = int(header["k"][0])
    seed = int(header["seed"][0])
    surface_label = header.get("surface", ["-"])[0]
    region = _region_from_fields(header.get("region", ["none"]))
    draws = header.get("draws", ["0", "rejected", "0"])
    n_draws, n_rejected = int(draws[0]), int(draws[2])
    data = np.asarray(rows, dtype=float).reshape(-1, 9)
    pts = data[:, 0:6:2] + 1j * data[:, 1:6:2] if data.size else np.zeros((0, 3), complex)
    labels_col = data[:, 8].astype(np.int32) if data.size else np.zeros(0, np.int32)
    labels = None if (labels_col < 0).all() else labels_col
    return PointCloud(
        pts, data[:, 6], data[:, 7], k, region, seed, labels=labels,
        n_draws=n_draws, n_rejected=n_rejected,
        surface_label="" if surface_label == "-" else surface_label,
    )


def cloud_to_bytes(cloud: PointCloud) -> bytes:
    """Compact binary form: 16-byte header (magic, version, k, count), then
    per-point float64 columns (6 coordinates, weight, residual) and int32
    labels (-1 when absent).  Region and seed metadata live in the text form.
    """
    header = _struct.pack(
        "<4sIII", _MAGIC, _BINARY_VERSION, cloud.dimension, cloud.n_points
    )
    payload = np.hstack(
        [real6(cloud.points), cloud.weights[:, None], cloud.residuals[:, None]]
    ).astype("<f8")
    labels = cloud.labels if cloud.labels is not None else np.full(
        cloud.n_points, -1, dtype=np.int32
    )
    return header + payload.tobytes() + labels.astype("<i4").tobytes()


def cloud_from_bytes(data: bytes) -> PointCloud:
    if len(data) < 16:
        raise ValueError("truncated point-cloud header")
    magic, version, k, count = _struct.unpack("<4sIII", data[:16])
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != _BINARY_VERSION:
        raise ValueError(f"unsupported version {version}")
    need = 16 + count * (8 * 8 + 4)
    if len(data) != need:
        raise ValueError(f"expected {need} bytes for {count} points, got {len(data)}")
    payload = np.frombuffer(data, dtype="<f8", count=count * 8, offset=16)
    payload = payload.reshape(count, 8)
    labels_col = np.frombuffer(data, dtype="<i4", count=count, offset=16 + count * 64)
    pts = payload[:, 0:6:2] + 1j * payload[:, 1:6:2]
    labels = None if count == 0 or (labels_col < 0).all() else labels_col.copy()
    return PointCloud(
        pts, payload[:, 6].copy(), payload[:, 7].copy(), int(k), None, 0,
        labels=labels,
    )

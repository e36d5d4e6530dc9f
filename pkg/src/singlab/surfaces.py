"""Weighted-homogeneous surface germs in C^3 and their fiber algebra.

A surface is the zero set of a polynomial f(x,y,z) all of whose monomials
x^a y^b z^c satisfy a*w1 + b*w2 + c*w3 = d for integer weights w1 >= w2 > w3
and quasidegree d.  The positive reals act by
T((x,y,z),t) = (t^(w1/w3) x, t^(w2/w3) y, t z), and f(T(p,t)) = t^(d/w3) f(p),
which is what makes links, cones and scaling flows computable here.

The module owns everything downstream code needs about fibers of the
projection (x,y,z) -> (y,z): solving them, tracking their roots along paths,
and the exact combinatorics of the z=0 slice.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "WeightedSurface",
    "SliceStructure",
    "TrackedPath",
    "FiberSolveError",
    "ContinuationError",
    "DegenerateSliceError",
    "BranchPointError",
    "SurfaceFormatError",
    "briancon_speder",
    "brieskorn",
    "evaluate",
    "gradient",
    "fiber_coefficients",
    "solve_fiber",
    "solve_fiber_batch",
    "scale_action",
    "sphere_project",
    "milnor_number",
    "slice_structure",
    "slice_components",
    "implicit_derivatives",
    "track_root_system",
    "surface_to_text",
    "surface_from_text",
]

Term = tuple[tuple[int, int, int], complex]


class FiberSolveError(RuntimeError):
    """Root finding for a fiber polynomial did not converge."""


class ContinuationError(RuntimeError):
    """Root matching along a path stayed ambiguous after maximal step halving."""


class DegenerateSliceError(ValueError):
    """The z=0 slice polynomial vanishes identically."""


class BranchPointError(ValueError):
    """Implicit derivative requested where the fiber is ramified (f_x ~ 0)."""


class SurfaceFormatError(ValueError):
    """Malformed surface text representation."""


@dataclass(frozen=True)
class WeightedSurface:
    """Weighted-homogeneous polynomial surface germ.

    ``terms`` holds ((a,b,c), coefficient) monomials with nonzero
    coefficients; exponents are nonnegative and every term has weighted degree
    equal to ``quasidegree``.
    """

    weights: tuple[int, int, int]
    quasidegree: int
    terms: tuple[Term, ...]
    label: str = ""

    def __post_init__(self):
        w = self.weights
        if len(w) != 3 or any(int(v) != v or v <= 0 for v in w):
            raise ValueError(f"weights must be three positive integers, got {w!r}")
        w = (int(w[0]), int(w[1]), int(w[2]))
        if not (w[0] >= w[1] > w[2]):
            raise ValueError(f"weights must satisfy w1 >= w2 > w3, got {w}")
        d = int(self.quasidegree)
        if d <= 0:
            raise ValueError(f"quasidegree must be positive, got {self.quasidegree!r}")
        if not self.terms:
            raise ValueError("surface needs at least one term")
        seen = set()
        terms = []
        for expo, coeff in self.terms:
            a, b, c = (int(e) for e in expo)
            if min(a, b, c) < 0:
                raise ValueError(f"negative exponent in term {expo!r}")
            if a * w[0] + b * w[1] + c * w[2] != d:
                raise ValueError(
                    f"term x^{a} y^{b} z^{c} has weighted degree "
                    f"{a * w[0] + b * w[1] + c * w[2]}, expected {d}"
                )
            cc = complex(coeff)
            if cc == 0:
                raise ValueError(f"term {expo!r} has zero coefficient")
            if not (math.isfinite(cc.real) and math.isfinite(cc.imag)):
                raise ValueError(f"non-finite coefficient in term {expo!r}")
            if (a, b, c) in seen:
                raise ValueError(f"duplicate term exponents {(a, b, c)}")
            seen.add((a, b, c))
            terms.append(((a, b, c), cc))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "quasidegree", d)
        object.__setattr__(self, "terms", tuple(terms))

    @property
    def x_degree(self) -> int:
        return max(a for (a, _, _), _ in self.terms)

    @property
    def coefficient_scale(self) -> float:
        return max(abs(c) for _, c in self.terms)

    @property
    def scaling_exponents(self) -> tuple[float, float, float]:
        """Per-coordinate exponents (w1/w3, w2/w3, 1) of the scaling action."""
        w1, w2, w3 = self.weights
        return (w1 / w3, w2 / w3, 1.0)


def briancon_speder(t: complex = 0.0) -> WeightedSurface:
    """Family x^5 + z^15 + y^7 z + t*x*y^6 with weights (3,2,1), quasidegree 15.

    Every member has the same Milnor number (364) while the metric geometry
    changes between t = 0 and t != 0; that contrast is what the rest of the
    package measures.
    """
    t = complex(t)
    terms: list[Term] = [((5, 0, 0), 1.0), ((0, 0, 15), 1.0), ((0, 7, 1), 1.0)]
    if t != 0:
        terms.append(((1, 6, 0), t))
    if t == 0:
        label = "briancon-speder(t=0)"
    else:
        label = f"briancon-speder(t={t.real:g}{t.imag:+g}j)" if t.imag else f"briancon-speder(t={t.real:g})"
    return WeightedSurface((3, 2, 1), 15, tuple(terms), label)


def brieskorn(p: int, q: int, r: int) -> WeightedSurface:
    """Surface x^p + y^q + z^r = 0 with p <= q < r.

    Weights are d/p, d/q, d/r for d = lcm(p,q,r), the smallest choice making
    all three integral.
    """
    p, q, r = int(p), int(q), int(r)
    if not (2 <= p <= q < r):
        raise ValueError(f"exponents must satisfy 2 <= p <= q < r, got ({p},{q},{r})")
    d = math.lcm(p, q, r)
    weights = (d // p, d // q, d // r)
    terms: tuple[Term, ...] = (((p, 0, 0), 1.0), ((0, q, 0), 1.0), ((0, 0, r), 1.0))
    return WeightedSurface(weights, d, terms, f"brieskorn({p},{q},{r})")


def _coords(points):
    pts = np.asarray(points, dtype=complex)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have shape (...,3), got {pts.shape}")
    return pts[:, 0], pts[:, 1], pts[:, 2], scalar


def evaluate(s: WeightedSurface, points):
    """f(p) for one point (shape (3,)) or a batch (shape (n,3))."""
    x, y, z, scalar = _coords(points)
    out = np.zeros(x.shape, dtype=complex)
    for (a, b, c), coeff in s.terms:
        out += coeff * x**a * y**b * z**c
    return out[0] if scalar else out


def gradient(s: WeightedSurface, points):
    """(f_x, f_y, f_z) at one point or a batch, shape matching ``points``."""
    x, y, z, scalar = _coords(points)
    out = np.zeros((x.shape[0], 3), dtype=complex)
    for (a, b, c), coeff in s.terms:
        if a:
            out[:, 0] += a * coeff * x ** (a - 1) * y**b * z**c
        if b:
            out[:, 1] += b * coeff * x**a * y ** (b - 1) * z**c
        if c:
            out[:, 2] += c * coeff * x**a * y**b * z ** (c - 1)
    return out[0] if scalar else out


def fiber_coefficients(s: WeightedSurface, y, z) -> np.ndarray:
    """Coefficients [c_0, ..., c_deg] of x -> f(x,y,z); batched over y,z."""
    y = np.asarray(y, dtype=complex)
    z = np.asarray(z, dtype=complex)
    scalar = y.ndim == 0
    y, z = np.atleast_1d(y), np.atleast_1d(z)
    out = np.zeros((y.shape[0], s.x_degree + 1), dtype=complex)
    for (a, b, c), coeff in s.terms:
        out[:, a] += coeff * y**b * z**c
    return out[0] if scalar else out


def _polyval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Horner evaluation of row-wise polynomials; coeffs (m,n+1), x (m,k)."""
    p = np.broadcast_to(coeffs[:, -1][:, None], x.shape).copy()
    for j in range(coeffs.shape[1] - 2, -1, -1):
        p = p * x + coeffs[:, j][:, None]
    return p


def _polyder(coeffs: np.ndarray) -> np.ndarray:
    n = coeffs.shape[1] - 1
    return coeffs[:, 1:] * np.arange(1, n + 1)


def all_roots(coeffs, max_iter: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """All complex roots of each row's polynomial by Durand-Kerner iteration.

    ``coeffs`` is (m, n+1) in ascending order with nonvanishing leading
    column.  Returns (roots (m,n), ok (m,)) where ok flags rows whose
    simultaneous iteration converged and whose polished roots meet the
    residual bound 1e-10 * (1 + max |coefficient|).

    The iteration starts on a circle of the Cauchy radius with an irrational
    phase offset; roots of multiplicity > 1 converge to tight clusters rather
    than identical values, which callers needing multiplicities resolve via
    clustering (see solve_fiber).
    """
    c = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    m, ncol = c.shape
    n = ncol - 1
    if n < 1:
        raise ValueError("polynomial degree must be >= 1")
    lead = c[:, -1]
    if np.any(lead == 0):
        raise ValueError("leading coefficient vanishes; trim the input")
    a = c / lead[:, None]
    radius = 1.0 + np.max(np.abs(a[:, :-1]), axis=1)
    angles = 2.0 * np.pi * (np.arange(n) / n) + 0.4
    x = radius[:, None] * np.exp(1j * angles)[None, :]

    active = np.ones(m, dtype=bool)
    eye = np.eye(n, dtype=bool)
    for _ in range(max_iter):
        xa = x[active]
        aa = a[active]
        p = _polyval(aa, xa)
        diffs = xa[:, :, None] - xa[:, None, :]
        diffs[:, eye] = 1.0
        denom = diffs.prod(axis=2)
        denom = np.where(denom == 0, 1e-300, denom)
        delta = p / denom
        xa = xa - delta
        x[active] = xa
        scale = 1.0 + np.abs(xa).max(axis=1)
        done = np.abs(delta).max(axis=1) <= 1e-13 * scale
        bad = ~np.isfinite(xa).all(axis=1)
        idx = np.flatnonzero(active)
        active[idx[done | bad]] = False
        if not active.any():
            break
    converged = ~active
    bad_rows = ~np.isfinite(x).all(axis=1)
    converged &= ~bad_rows

    # Newton polish against the unnormalized coefficients.
    dc = _polyder(c)
    for _ in range(3):
        p = _polyval(c, x)
        dp = _polyval(dc, x)
        step = np.where(np.abs(dp) > 1e-300, p / np.where(dp == 0, 1.0, dp), 0.0)
        x = x - step
    resid = np.abs(_polyval(c, x))
    bound = 1e-10 * (1.0 + np.abs(c).max(axis=1))
    ok = converged & (resid.max(axis=1) <= bound)
    return x, ok


def solve_fiber_batch(s: WeightedSurface, y, z, max_iter: int = 200):
    """Roots of f(.,y,z) for arrays y, z.  Returns (roots (m,deg), ok (m,))."""
    coeffs = np.atleast_2d(fiber_coefficients(s, y, z))
    return all_roots(coeffs, max_iter=max_iter)


def _cluster_roots(roots: np.ndarray, rel: float = 1e-7):
    """Single-linkage clustering of a small root set.

    Returns (representatives, multiplicities); each representative is the mean
    of its cluster, which for a perturbed multiple root cancels the leading
    error term.
    """
    n = roots.size
    scale = 1.0 + float(np.abs(roots).max()) if n else 1.0
    tol = rel * scale
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(roots[i] - roots[j]) <= tol:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    reps = np.array([roots[g].mean() for g in groups.values()])
    mult = np.array([len(g) for g in groups.values()], dtype=int)
    order = np.lexsort((reps.imag, reps.real))
    return reps[order], mult[order]


def solve_fiber(s: WeightedSurface, y: complex, z: complex, max_iter: int = 200) -> list[complex]:
    """All roots of x -> f(x,y,z), with multiplicity, sorted by (Re, Im).

    An exact zero root (x^k dividing the fiber polynomial, detected by exact
    trailing-zero coefficients) is reported exactly with its multiplicity;
    remaining roots are Durand-Kerner solved, Newton polished, and clustered
    at relative tolerance 1e-7.
    """
    coeffs = fiber_coefficients(s, complex(y), complex(z))
    deg = coeffs.shape[0] - 1
    k = 0
    while k <= deg and coeffs[k] == 0:
        k += 1
    if k > deg:
        raise FiberSolveError(f"fiber polynomial at (y,z)=({y!r},{z!r}) vanishes identically")
    roots: list[complex] = [0.0 + 0.0j] * k
    reduced = coeffs[k:]
    if reduced.shape[0] > 1:
        solved, ok = all_roots(reduced[None, :], max_iter=max_iter)
        if not ok[0]:
            raise FiberSolveError(
                f"root iteration failed to converge within {max_iter} iterations "
                f"at (y,z)=({y!r},{z!r})"
            )
        reps, mult = _cluster_roots(solved[0])
        for rep, m in zip(reps, mult):
            roots.extend([complex(rep)] * int(m))
    roots.sort(key=lambda w: (w.real, w.imag))
    return roots


def scale_action(s: WeightedSurface, points, t):
    """Weighted scaling T(p,t) = (t^(w1/w3) x, t^(w2/w3) y, t z) for t > 0."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("scaling parameter t must be positive")
    pts = np.asarray(points, dtype=complex)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    e = np.array(s.scaling_exponents)
    factors = t_arr[..., None] ** e if t_arr.ndim else t_arr**e
    out = pts * factors
    return out[0] if scalar else out


def sphere_project(s: WeightedSurface, points, radius: float, max_iter: int = 80):
    """Flow each point along its scaling orbit onto the sphere |p| = radius.

    Solves sum_i |p_i|^2 t^(2 e_i) = radius^2 for the unique t > 0 by Newton
    on the log of the left side as a function of u = log t.  That function is
    convex and increasing with slope between 2*min(e) and 2*max(e), so every
    Newton step is well scaled and convergence is fast from any start.
    Returns (projected points, t).  Orbits stay on the surface, so projected
    points inherit membership up to roundoff.
    """
    pts = np.asarray(points, dtype=complex)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not np.isfinite(pts).all():
        raise ValueError("points must be finite")
    sq = np.abs(pts) ** 2
    norms = np.sqrt(sq.sum(axis=1))
    if np.any(norms == 0):
        raise ValueError("cannot project the origin onto a sphere")
    e = np.array(s.scaling_exponents)
    log_sq = np.log(np.where(sq > 0, sq, 1.0))
    dead = sq == 0  # coordinates that are exactly zero never contribute
    target = 2.0 * math.log(radius)
    u = np.log(radius / norms)  # exact when all exponents equal 1
    for _ in range(max_iter):
        expo = 2.0 * u[:, None] * e[None, :] + log_sq
        expo = np.where(dead, -np.inf, expo)
        peak = expo.max(axis=1)
        terms = np.exp(expo - peak[:, None])
        total = terms.sum(axis=1)
        h = peak + np.log(total) - target
        dh = (2.0 * e[None, :] * terms).sum(axis=1) / total
        step = h / dh
        u = u - step
        if np.abs(step).max() < 1e-15:
            break
    t = np.exp(u)
    out = pts * t[:, None] ** e
    err = np.abs(np.linalg.norm(out, axis=1) - radius)
    if np.any(err > 1e-9 * radius):
        raise RuntimeError("sphere projection failed to converge")
    return (out[0], float(t[0])) if scalar else (out, t)


def milnor_number(s: WeightedSurface) -> int:
    """Milnor number (d/w1 - 1)(d/w2 - 1)(d/w3 - 1), in exact rationals.

    Raises if any factor is nonpositive (no isolated singularity with these
    weights) or if the product is not an integer.
    """
    d = s.quasidegree
    prod = Fraction(1)
    for w in s.weights:
        factor = Fraction(d, w) - 1
        if factor <= 0:
            raise ValueError(
                f"degenerate weight data: d/w - 1 = {factor} for w={w}, d={d}"
            )
        prod *= factor
    if prod.denominator != 1:
        raise ValueError(f"Milnor product {prod} is not an integer")
    return int(prod)


@dataclass(frozen=True)
class TrackedPath:
    """Root trajectories of a polynomial family along a parameter grid.

    ``roots[j, i]`` is the position of trajectory i at grid node j (cluster
    representatives; coincident roots are tracked once with ``multiplicity``).
    ``dphase[i]`` accumulates the argument increments of trajectory i.
    """

    roots: np.ndarray
    multiplicity: np.ndarray
    dphase: np.ndarray
    n_refinements: int


def _match_step(prev: np.ndarray, nxt: np.ndarray, prev_mult, nxt_mult):
    """Assign new representatives to trajectories; None when ambiguous.

    A step is ambiguous when some trajectory's two nearest candidates are
    within a factor 2 of each other (and not an exact tie of coincident
    clusters), or when multiplicities disagree under the optimal assignment.
    """
    if prev.size != nxt.size:
        return None
    dist = np.abs(prev[:, None] - nxt[None, :])
    rows, cols = linear_sum_assignment(dist)
    assign = np.empty(prev.size, dtype=int)
    assign[rows] = cols
    if prev.size > 1:
        d_sorted = np.sort(dist, axis=1)
        d1, d2 = d_sorted[:, 0], d_sorted[:, 1]
        chosen = dist[np.arange(prev.size), assign]
        ambiguous = (d2 < 2.0 * d1) & (d1 > 0)
        if np.any(chosen > d1 * (1 + 1e-12)) or bool(ambiguous.any()):
            return None
    if not np.array_equal(np.asarray(prev_mult)[np.arange(prev.size)], np.asarray(nxt_mult)[assign]):
        return None
    return assign


def track_root_system(
    coeff_fn,
    t_grid,
    max_halvings: int = 12,
    cluster_rel: float = 1e-7,
    max_iter: int = 200,
) -> TrackedPath:
    """Continue the full root multiset of coeff_fn(t) along t_grid.

    Steps whose nearest-neighbor matching is ambiguous are bisected (up to
    ``max_halvings`` times per grid interval) before giving up with
    ContinuationError.  Phase increments are accumulated over every accepted
    substep, so windings through fast turns are counted correctly.
    """
    t_grid = [float(t) for t in t_grid]
    if len(t_grid) < 2:
        raise ValueError("need at least two grid nodes")

    def solve_at(t):
        coeffs = np.asarray(coeff_fn(t), dtype=complex)
        if coeffs.ndim != 1 or coeffs.shape[0] < 2:
            raise ValueError("coeff_fn must return >= degree-1 coefficient vectors")
        roots, ok = all_roots(coeffs[None, :], max_iter=max_iter)
        if not ok[0]:
            raise FiberSolveError(f"fiber solve failed at path parameter t={t}")
        return _cluster_roots(roots[0], rel=cluster_rel)

    reps, mult = solve_at(t_grid[0])
    order = np.lexsort((np.abs(reps), np.round(np.angle(reps), 12)))
    reps, mult = reps[order], mult[order]
    n_traj = reps.size
    out_roots = np.empty((len(t_grid), n_traj), dtype=complex)
    out_roots[0] = reps
    dphase = np.zeros(n_traj)
    n_ref = 0

    current = reps
    for j in range(1, len(t_grid)):
        # Stack of pending subintervals, deepest first.
        pending = [(t_grid[j - 1], t_grid[j], 0)]
        while pending:
            t0, t1, depth = pending.pop()
            nxt, nxt_mult = solve_at(t1)
            assign = _match_step(current, nxt, mult, nxt_mult)
            if assign is None:
                if depth >= max_halvings:
                    raise ContinuationError(
                        f"ambiguous root matching on [{t0}, {t1}] after {depth} halvings"
                    )
                tm = 0.5 * (t0 + t1)
                pending.append((tm, t1, depth + 1))
                pending.append((t0, tm, depth + 1))
                n_ref += 1
                continue
            new = nxt[assign]
            ratio = np.where(current != 0, new / np.where(current == 0, 1, current), 1.0)
            dphase += np.angle(ratio)
            current = new
        out_roots[j] = current
    return TrackedPath(out_roots, mult, dphase, n_ref)


@dataclass(frozen=True)
class SliceStructure:
    """Branch decomposition of the z=0 slice curve f(x,y,0) = 0.

    The slice polynomial factors as x^k * y^m * h(x,y) with h divisible by
    neither coordinate (exact exponent arithmetic; quasi-homogeneity makes
    every x-power coefficient a single y-monomial).  Components are the x-axis
    branch (k>0), the y-axis branch (m>0), and the monodromy orbits of the
    roots of h around a y-circle.  Branch labels number components in that
    order.
    """

    surface_label: str
    x_mult: int
    y_mult: int
    h_terms: tuple[tuple[int, int, complex], ...]
    base_radius: float
    n_steps: int
    trajectories: np.ndarray  # (n_steps+1, n_traj) roots of h along the circle
    multiplicity: np.ndarray
    orbit_of_trajectory: np.ndarray  # label for each tracked root of h
    n_components: int

    @property
    def labels(self) -> list[int]:
        return list(range(self.n_components))

    @property
    def has_x_branch(self) -> bool:
        return self.x_mult > 0

    @property
    def has_y_branch(self) -> bool:
        return self.y_mult > 0

    def h_coefficients(self, y) -> np.ndarray:
        """Coefficients of x -> h(x, y), batched over y."""
        y = np.atleast_1d(np.asarray(y, dtype=complex))
        deg = max(a for a, _, _ in self.h_terms) if self.h_terms else 0
        out = np.zeros((y.shape[0], deg + 1), dtype=complex)
        for a, b, coeff in self.h_terms:
            out[:, a] += coeff * y**b
        return out


def _slice_terms(s: WeightedSurface):
    terms = [(a, b, coeff) for (a, b, c), coeff in s.terms if c == 0]
    if not terms:
        raise DegenerateSliceError(
            f"slice z=0 of {s.label or 'surface'} is identically zero"
        )
    return terms


def slice_structure(
    s: WeightedSurface, base_radius: float = 1.0, n_steps: int = 512
) -> SliceStructure:
    """Compute the branch structure of the z=0 slice at one base radius."""
    terms = _slice_terms(s)
    k = min(a for a, _, _ in terms)
    m = min(b for _, b, _ in terms)
    h_terms = tuple((a - k, b - m, coeff) for a, b, coeff in terms)
    deg_h = max(a for a, _, _ in h_terms)

    if deg_h == 0:
        traj = np.zeros((n_steps + 1, 0), dtype=complex)
        mult = np.zeros(0, dtype=int)
        orbit = np.zeros(0, dtype=int)
        n_comp = (1 if k else 0) + (1 if m else 0)
        if n_comp == 0:
            # f(x,y,0) is a nonzero constant: the slice is empty, not a curve.
            raise DegenerateSliceError("slice z=0 contains no branches")
        return SliceStructure(
            s.label, k, m, h_terms, base_radius, n_steps, traj, mult, orbit, n_comp
        )

    def coeff_fn(t):
        y = base_radius * cmath.exp(2j * math.pi * t)
        out = np.zeros(deg_h + 1, dtype=complex)
        for a, b, coeff in h_terms:
            out[a] += coeff * y**b
        return out

    grid = np.linspace(0.0, 1.0, n_steps + 1)
    path = track_root_system(coeff_fn, grid)

    # Orbits of the closed-loop permutation: match end representatives back
    # to the start representatives.
    assign = _match_step(path.roots[-1], path.roots[0], path.multiplicity, path.multiplicity)
    if assign is None:
        raise ContinuationError("could not close the slice monodromy loop")
    n_traj = path.multiplicity.size
    orbit = np.full(n_traj, -1, dtype=int)
    base = (1 if k else 0) + (1 if m else 0)
    next_label = base
    for i in range(n_traj):
        if orbit[i] >= 0:
            continue
        j = i
        while orbit[j] < 0:
            orbit[j] = next_label
            j = int(assign[j])
        next_label += 1
    return SliceStructure(
        s.label, k, m, h_terms, base_radius, n_steps, path.roots,
        path.multiplicity, orbit, next_label,
    )


def slice_components(s: WeightedSurface, radii: tuple[float, float] = (1.0, 0.5)) -> int:
    """Number of connected components of the punctured z=0 slice.

    Runs the monodromy-orbit count at two base radii and requires agreement;
    quasi-homogeneity makes the true count radius-independent, so disagreement
    means a tracking failure.
    """
    first = slice_structure(s, base_radius=radii[0])
    second = slice_structure(s, base_radius=radii[1])
    if first.n_components != second.n_components:
        raise ContinuationError(
            f"slice component counts disagree between radii {radii}: "
            f"{first.n_components} vs {second.n_components}"
        )
    return first.n_components


def implicit_derivatives(s: WeightedSurface, points, f_tol: float = 1e-9, fx_tol: float = 1e-12):
    """Graph derivatives (dx/dy, dx/dz) = (-f_y/f_x, -f_z/f_x) on the surface.

    Requires |f(p)| <= f_tol and |f_x(p)| > fx_tol; the latter failing means p
    sits over the branch locus of the (y,z)-projection.
    """
    pts = np.asarray(points, dtype=complex)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    vals = np.abs(evaluate(s, pts))
    if np.any(vals > f_tol):
        worst = float(vals.max())
        raise ValueError(f"point not on surface: |f| = {worst:.3e} > {f_tol:.1e}")
    grad = gradient(s, pts)
    fx = grad[:, 0]
    small = np.abs(fx) <= fx_tol
    if np.any(small):
        raise BranchPointError(
            f"fiber ramified at {int(small.sum())} point(s): |f_x| <= {fx_tol:.1e}"
        )
    dxdy = -grad[:, 1] / fx
    dxdz = -grad[:, 2] / fx
    if scalar:
        return complex(dxdy[0]), complex(dxdz[0])
    return dxdy, dxdz


# -- plain-text serialization -------------------------------------------------

def surface_to_text(s: WeightedSurface) -> str:
    """Render a surface in the line-oriented text format.

    Grammar (one record per line, '#' starts a comment):
        label <free text>          (optional)
        weights <w1> <w2> <w3>
        quasidegree <d>
        term <a> <b> <c> <re> <im>   (one per monomial)
    """
    lines = ["# singlab surface v1"]
    if s.label:
        lines.append(f"label {s.label}")
    lines.append("weights {} {} {}".format(*s.weights))
    lines.append(f"quasidegree {s.quasidegree}")
    for (a, b, c), coeff in s.terms:
        lines.append(f"term {a} {b} {c} {coeff.real!r} {coeff.imag!r}")
    return "\n".join(lines) + "\n"


def surface_from_text(text: str) -> WeightedSurface:
    label = ""
    weights = None
    quasidegree = None
    terms: list[Term] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        key, rest = fields[0], fields[1:]
        try:
            if key == "label":
                label = " ".join(rest)
            elif key == "weights":
                if len(rest) != 3:
                    raise ValueError("expected three weights")
                weights = tuple(int(v) for v in rest)
            elif key == "quasidegree":
                if len(rest) != 1:
                    raise ValueError("expected one value")
                quasidegree = int(rest[0])
            elif key == "term":
                if len(rest) != 5:
                    raise ValueError("expected 'term a b c re im'")
                a, b, c = (int(v) for v in rest[:3])
                coeff = complex(float(rest[3]), float(rest[4]))
                terms.append(((a, b, c), coeff))
            else:
                raise ValueError(f"unknown record {key!r}")
        except ValueError as exc:
            raise SurfaceFormatError(f"line {lineno}: {exc}") from exc
    if weights is None or quasidegree is None:
        raise SurfaceFormatError("missing weights or quasidegree record")
    try:
        return WeightedSurface(weights, quasidegree, tuple(terms), label)
    except ValueError as exc:
        raise SurfaceFormatError(str(exc)) from exc

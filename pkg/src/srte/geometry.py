"""Convex domains, chords along characteristics, and boundary-ray quadrature.

A domain is a bounded convex region of R^3 given as a ball, an axis-aligned
box, or a bounded intersection of half-spaces.  Every transport quantity in
this package is built on two geometric primitives implemented here: the chord
through a point in a given direction (the characteristic segment), and a
quadrature over inflow/outflow boundary-direction pairs weighted by the
surface measure and |n.v|.  Pairing each boundary node with the integral
along its chord turns a phase-space volume integral into a boundary-ray sum;
``boundary_ray_integral`` exposes exactly that identity.

All operations are pure functions of immutable inputs and may be called
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PointOutsideDomain

BOUNDARY_TOL = 1e-9
TANGENTIAL_TOL = 1e-10

INFLOW = "inflow"
OUTFLOW = "outflow"
TANGENTIAL = "tangential"


def _as_points(r):
    """Return (points (N,3) array, scalar_input flag)."""
    arr = np.asarray(r, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def unit(v):
    """Normalize a vector; raises on zero input."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero vector has no direction")
    return v / n


@dataclass(frozen=True)
class Velocity:
    """A nonzero velocity with its unit direction."""

    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if np.linalg.norm(self.v) == 0.0:
            raise ValueError("velocity must be nonzero")

    @property
    def direction(self):
        return unit(self.v)

    @property
    def speed(self):
        return float(np.linalg.norm(self.v))


@dataclass(frozen=True)
class Ray:
    """A full chord: inflow point, unit direction, length, and the backward
    distance ``t`` from the inflow point to the query point (0 < t < length
    for interior queries)."""

    r_minus: np.ndarray
    direction: np.ndarray
    length: float
    t: float

    @property
    def r_plus(self):
        return self.r_minus + self.length * self.direction

    def point_at(self, s):
        """Position at backward-arclength ``s`` from the inflow point."""
        s = np.asarray(s, dtype=float)
        return self.r_minus + s[..., None] * self.direction


@dataclass(frozen=True)
class BoundaryPoint:
    """A point on the boundary with its outward unit normal."""

    r: np.ndarray
    n: np.ndarray


class Domain:
    """Base class for bounded convex domains."""

    def boundary_margin(self, r):
        """Inward margin: positive inside, zero on the boundary, negative outside."""
        raise NotImplementedError

    def ray_span(self, origins, direction):
        """Parameter interval [t_enter, t_exit] of the line origin + t*direction
        inside the domain.  Empty intersections yield t_enter > t_exit."""
        raise NotImplementedError

    def boundary_normal(self, r):
        """Outward unit normal at boundary points."""
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def volume(self):
        raise NotImplementedError

    def surface_quadrature(self, resolution):
        """Positive-weight surface rule: (points (M,3), normals (M,3), areas (M,))."""
        raise NotImplementedError

    def contains(self, r, tol=BOUNDARY_TOL):
        """Closed-region membership; boundary points count as contained."""
        margin = self.boundary_margin(r)
        return margin >= -tol

    def diameter(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))


@dataclass(frozen=True)
class Ball(Domain):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def boundary_margin(self, r):
        pts, scalar = _as_points(r)
        m = self.radius - np.linalg.norm(pts - self.center, axis=1)
        return m[0] if scalar else m

    def ray_span(self, origins, direction):
        pts, scalar = _as_points(origins)
        d = unit(direction)
        rel = pts - self.center
        b = rel @ d
        c0 = np.einsum("ij,ij->i", rel, rel) - self.radius**2
        disc = b * b - c0
        ok = disc > 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t_enter = np.where(ok, -b - sq, 1.0)
        t_exit = np.where(ok, -b + sq, 0.0)
        if scalar:
            return t_enter[0], t_exit[0]
        return t_enter, t_exit

    def boundary_normal(self, r):
        pts, scalar = _as_points(r)
        rel = pts - self.center
        n = rel / np.linalg.norm(rel, axis=1, keepdims=True)
        return n[0] if scalar else n

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def volume(self):
        return 4.0 / 3.0 * np.pi * self.radius**3

    def surface_quadrature(self, resolution):
        u, w, _ = sphere_partition(resolution)
        points = self.center + self.radius * u
        areas = self.radius**2 * w
        return points, u.copy(), areas


@dataclass(frozen=True)
class Box(Domain):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if not np.all(self.lo < self.hi):
            raise ValueError("box requires lo < hi componentwise")

    def boundary_margin(self, r):
        pts, scalar = _as_points(r)
        m = np.minimum((pts - self.lo).min(axis=1), (self.hi - pts).min(axis=1))
        return m[0] if scalar else m

    def ray_span(self, origins, direction):
        pts, scalar = _as_points(origins)
        d = unit(direction)
        t_enter = np.full(len(pts), -np.inf)
        t_exit = np.full(len(pts), np.inf)
        for ax in range(3):
            if abs(d[ax]) < 1e-300:
                bad = (pts[:, ax] < self.lo[ax]) | (pts[:, ax] > self.hi[ax])
                t_enter = np.where(bad, 1.0, t_enter)
                t_exit = np.where(bad, 0.0, t_exit)
                continue
            t1 = (self.lo[ax] - pts[:, ax]) / d[ax]
            t2 = (self.hi[ax] - pts[:, ax]) / d[ax]
            t_enter = np.maximum(t_enter, np.minimum(t1, t2))
            t_exit = np.minimum(t_exit, np.maximum(t1, t2))
        if scalar:
            return t_enter[0], t_exit[0]
        return t_enter, t_exit

    def boundary_normal(self, r):
        pts, scalar = _as_points(r)
        gaps = np.stack([pts - self.lo, self.hi - pts], axis=2)  # (N,3,2)
        flat = gaps.reshape(len(pts), 6)
        idx = np.argmin(flat, axis=1)
        normals = np.zeros((len(pts), 3))
        ax, side = idx // 2, idx % 2
        normals[np.arange(len(pts)), ax] = np.where(side == 0, -1.0, 1.0)
        return normals[0] if scalar else normals

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def surface_quadrature(self, resolution):
        n = int(resolution)
        points, normals, areas = [], [], []
        for ax in range(3):
            u_ax, v_ax = (ax + 1) % 3, (ax + 2) % 3
            du = (self.hi[u_ax] - self.lo[u_ax]) / n
            dv = (self.hi[v_ax] - self.lo[v_ax]) / n
            uc = self.lo[u_ax] + (np.arange(n) + 0.5) * du
            vc = self.lo[v_ax] + (np.arange(n) + 0.5) * dv
            uu, vv = np.meshgrid(uc, vc, indexing="ij")
            for side, coord, sign in ((0, self.lo[ax], -1.0), (1, self.hi[ax], 1.0)):
                p = np.empty((n * n, 3))
                p[:, ax] = coord
                p[:, u_ax] = uu.ravel()
                p[:, v_ax] = vv.ravel()
                nrm = np.zeros((n * n, 3))
                nrm[:, ax] = sign
                points.append(p)
                normals.append(nrm)
                areas.append(np.full(n * n, du * dv))
        return np.concatenate(points), np.concatenate(normals), np.concatenate(areas)


@dataclass(frozen=True)
class Halfspaces(Domain):
    """Bounded nonempty intersection of half-spaces {x : n_i . x <= b_i}."""

    normals: np.ndarray
    offsets: np.ndarray
    _inner: np.ndarray = field(init=False, repr=False)
    _bbox: tuple = field(init=False, repr=False)

    def __post_init__(self):
        nrm = np.atleast_2d(np.asarray(self.normals, dtype=float))
        off = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "offsets", off)
        lens = np.linalg.norm(nrm, axis=1)
        if np.any(np.abs(lens - 1.0) > 1e-12):
            raise ValueError("half-space normals must be unit vectors")
        inner, bbox = _validate_polytope(nrm, off)
        object.__setattr__(self, "_inner", inner)
        object.__setattr__(self, "_bbox", bbox)

    def boundary_margin(self, r):
        pts, scalar = _as_points(r)
        m = (self.offsets[None, :] - pts @ self.normals.T).min(axis=1)
        return m[0] if scalar else m

    def ray_span(self, origins, direction):
        pts, scalar = _as_points(origins)
        d = unit(direction)
        slope = self.normals @ d  # (F,)
        gap = self.offsets[None, :] - pts @ self.normals.T  # (N,F)
        t_enter = np.full(len(pts), -np.inf)
        t_exit = np.full(len(pts), np.inf)
        for i in range(len(self.offsets)):
            s = slope[i]
            if abs(s) < 1e-300:
                bad = gap[:, i] < 0.0
                t_enter = np.where(bad, 1.0, t_enter)
                t_exit = np.where(bad, 0.0, t_exit)
            elif s > 0:
                t_exit = np.minimum(t_exit, gap[:, i] / s)
            else:
                t_enter = np.maximum(t_enter, gap[:, i] / s)
        if scalar:
            return t_enter[0], t_exit[0]
        return t_enter, t_exit

    def boundary_normal(self, r):
        pts, scalar = _as_points(r)
        slack = self.offsets[None, :] - pts @ self.normals.T
        idx = np.argmin(slack, axis=1)
        n = self.normals[idx]
        return n[0] if scalar else n

    def bounding_box(self):
        lo, hi = self._bbox
        return lo.copy(), hi.copy()

    def volume(self):
        # No closed form in general: deterministic voxel estimate on the bbox.
        lo, hi = self._bbox
        n = 80
        axes = [lo[k] + (np.arange(n) + 0.5) * (hi[k] - lo[k]) / n for k in range(3)]
        xx, yy, zz = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
        inside = self.contains(pts, tol=0.0)
        cell = np.prod((hi - lo) / n)
        return float(inside.sum() * cell)

    def surface_quadrature(self, resolution):
        n = int(resolution)
        lo, hi = self._bbox
        points, normals, areas = [], [], []
        for i in range(len(self.offsets)):
            nrm = self.normals[i]
            e1 = _orthonormal_to(nrm)
            e2 = np.cross(nrm, e1)
            base = nrm * self.offsets[i]
            corners = np.array([lo, hi])
            # project bbox corners onto the face plane basis to bound the patch
            combos = np.array(
                [[corners[a][0], corners[b][1], corners[c][2]]
                 for a in range(2) for b in range(2) for c in range(2)]
            )
            u = (combos - base) @ e1
            v = (combos - base) @ e2
            du = (u.max() - u.min()) / n
            dv = (v.max() - v.min()) / n
            uc = u.min() + (np.arange(n) + 0.5) * du
            vc = v.min() + (np.arange(n) + 0.5) * dv
            uu, vv = np.meshgrid(uc, vc, indexing="ij")
            p = base + uu.ravel()[:, None] * e1 + vv.ravel()[:, None] * e2
            # keep cells whose center satisfies every *other* constraint
            others = np.delete(np.arange(len(self.offsets)), i)
            ok = np.all(
                p @ self.normals[others].T <= self.offsets[others][None, :] + 1e-12,
                axis=1,
            )
            if not np.any(ok):
                continue
            points.append(p[ok])
            normals.append(np.tile(nrm, (ok.sum(), 1)))
            areas.append(np.full(ok.sum(), du * dv))
        return np.concatenate(points), np.concatenate(normals), np.concatenate(areas)


def _orthonormal_to(n):
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e = np.cross(n, a)
    return e / np.linalg.norm(e)


def _validate_polytope(normals, offsets):
    """Check boundedness and nonempty interior; return (inner point, bbox)."""
    from scipy.optimize import linprog

    nf = len(offsets)
    # Chebyshev center: maximize rho s.t. n_i.x + rho <= b_i
    A = np.column_stack([normals, np.ones(nf)])
    res = linprog(
        c=[0.0, 0.0, 0.0, -1.0],
        A_ub=A,
        b_ub=offsets,
        bounds=[(None, None)] * 3 + [(0.0, None)],
        method="highs",
    )
    if not res.success or res.x[3] <= 0.0:
        raise ValueError("half-space intersection has empty interior")
    inner = res.x[:3]
    lo, hi = np.empty(3), np.empty(3)
    for ax in range(3):
        for sign, store in ((1.0, hi), (-1.0, lo)):
            c = np.zeros(3)
            c[ax] = -sign
            r = linprog(c=c, A_ub=normals, b_ub=offsets,
                        bounds=[(None, None)] * 3, method="highs")
            if r.status == 3:  # unbounded
                raise ValueError("half-space intersection is unbounded")
            if not r.success:
                raise ValueError("half-space validation failed")
            store[ax] = r.x[ax]
    return inner, (lo, hi)


def chord(domain, r, v):
    """Maximal segment through the interior point ``r`` in direction ``v``.

    Returns a :class:`Ray` whose ``t`` is the backward distance from the
    inflow point to ``r``.  Raises :class:`PointOutsideDomain` if ``r`` is not
    strictly interior.
    """
    r = np.asarray(r, dtype=float)
    if not domain.boundary_margin(r) > 0.0:
        raise PointOutsideDomain(f"point {r} is not in the domain interior")
    d = v.direction if isinstance(v, Velocity) else unit(v)
    t_enter, t_exit = domain.ray_span(r, d)
    length = float(t_exit - t_enter)
    return Ray(r_minus=r + t_enter * d, direction=d, length=length, t=float(-t_enter))


def chords(domain, points, direction):
    """Vectorized chord data for many points and one direction.

    Returns (r_minus (N,3), t_back (N,), length (N,)).
    """
    d = unit(direction)
    t_enter, t_exit = domain.ray_span(points, d)
    r_minus = points + t_enter[:, None] * d
    return r_minus, -t_enter, t_exit - t_enter


def contains(domain, r):
    """Closed-region membership (boundary included)."""
    return domain.contains(r)


def classify_boundary(domain, bp, v, tol=TANGENTIAL_TOL):
    """Classify a boundary point/direction pair as inflow, outflow, or tangential."""
    n = bp.n if isinstance(bp, BoundaryPoint) else domain.boundary_normal(bp)
    d = v.direction if isinstance(v, Velocity) else unit(v)
    s = float(np.dot(n, d))
    if s < -tol:
        return INFLOW
    if s > tol:
        return OUTFLOW
    return TANGENTIAL


def sphere_partition(order):
    """Equal-area partition rule on the unit sphere, closed under u -> -u.

    The upper hemisphere is cut into ``order`` bands of equal area (uniform in
    z by Archimedes' theorem), each band into near-square azimuthal cells; the
    cell centers, weighted by cell area, form the rule.  Mirroring through the
    origin yields the lower hemisphere, so nodes come in antipodal pairs with
    equal weights and odd integrands cancel exactly.

    Returns (nodes (M,3), weights (M,), antipode (M,) index array).
    """
    B = int(order)
    if B < 1:
        raise ValueError("order must be >= 1")
    nodes, weights = [], []
    z_edges = np.linspace(0.0, 1.0, B + 1)
    for j in range(B):
        z0, z1 = z_edges[j], z_edges[j + 1]
        zmid = 0.5 * (z0 + z1)
        rmid = np.sqrt(max(0.0, 1.0 - zmid * zmid))
        dtheta = np.arccos(z0) - np.arccos(z1)
        m = max(1, int(round(2.0 * np.pi * rmid / max(dtheta, 1e-15))))
        phi = 2.0 * np.pi * (np.arange(m) + 0.5 * (1 + (j % 2))) / m
        ring = np.column_stack(
            [rmid * np.cos(phi), rmid * np.sin(phi), np.full(m, zmid)]
        )
        nodes.append(ring)
        weights.append(np.full(m, 2.0 * np.pi / (B * m)))
    upper = np.concatenate(nodes)
    w = np.concatenate(weights)
    K = len(upper)
    all_nodes = np.concatenate([upper, -upper])
    all_w = np.concatenate([w, w])
    antipode = np.concatenate([np.arange(K) + K, np.arange(K)])
    return all_nodes, all_w, antipode


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Quadrature over boundary-direction pairs of one side (inflow or outflow).

    ``weights`` carry the surface measure, the velocity weight, and |n.v|;
    tangential pairs are dropped (they carry zero weight).
    """

    side: str
    points: np.ndarray          # (P,3) boundary points
    normals: np.ndarray         # (P,3)
    directions: np.ndarray      # (P,3) unit directions of the paired velocities
    velocity_index: np.ndarray  # (P,)
    surface_index: np.ndarray   # (P,)
    weights: np.ndarray         # (P,)
    n_dot_v: np.ndarray         # (P,)

    def __len__(self):
        return len(self.weights)


def boundary_quadrature(domain, vq, boundary_resolution, side=INFLOW,
                        tol=TANGENTIAL_TOL):
    """Build the inflow (or outflow) boundary-direction quadrature.

    ``vq`` is a :class:`srte.phase_space.VelocityQuadrature`.  The combined
    weight of pair (r, v) is ``area(r) * w(v) * |n(r).v̂|`` restricted to the
    requested side; the sum of ``weight * chord-integral`` then approximates
    the phase-space volume integral.
    """
    if boundary_resolution < 1:
        raise ValueError("boundary_resolution must be >= 1")
    points, normals, areas = domain.surface_quadrature(boundary_resolution)
    dirs = vq.directions
    ndots = normals @ dirs.T  # (M, nvel)
    if side == INFLOW:
        keep = ndots < -tol
    elif side == OUTFLOW:
        keep = ndots > tol
    else:
        raise ValueError("side must be inflow or outflow")
    sidx, widx = np.nonzero(keep)
    nv = ndots[sidx, widx]
    weights = areas[sidx] * vq.weights[widx] * np.abs(nv)
    return BoundaryQuadrature(
        side=side,
        points=points[sidx],
        normals=normals[sidx],
        directions=dirs[widx],
        velocity_index=widx,
        surface_index=sidx,
        weights=weights,
        n_dot_v=nv,
    )


def inflow_quadrature(domain, vq, boundary_resolution, tol=TANGENTIAL_TOL):
    """Inflow-side boundary quadrature realizing the volume/boundary-ray identity."""
    return boundary_quadrature(domain, vq, boundary_resolution, INFLOW, tol)


def chord_lengths_from_boundary(domain, quad):
    """Chord lengths of the rays launched from a boundary quadrature's nodes.

    For inflow nodes the ray runs along ``+direction``; for outflow nodes the
    chord is traversed backwards along ``-direction``.  Either way the length
    of the parameter interval inside the domain is the chord length.
    """
    sign = 1.0 if quad.side == INFLOW else -1.0
    lengths = np.empty(len(quad))
    for m in np.unique(quad.velocity_index):
        sel = quad.velocity_index == m
        d = sign * quad.directions[sel][0]
        _, t_exit = domain.ray_span(quad.points[sel], d)
        lengths[sel] = np.maximum(t_exit, 0.0)
    return lengths


def boundary_ray_integral(domain, vq, boundary_resolution, line_integral=None,
                          side=INFLOW):
    """Boundary-ray side of the volume/boundary integral identity.

    ``line_integral(r_minus (P,3), directions (P,3), lengths (P,))`` returns
    the integral of the target function along each chord; the default
    integrates 1 and therefore returns the chord length, so the result
    approximates |domain| * |velocity space|.
    """
    quad = boundary_quadrature(domain, vq, boundary_resolution, side)
    lengths = chord_lengths_from_boundary(domain, quad)
    if line_integral is None:
        vals = lengths
    else:
        vals = line_integral(quad.points, quad.directions, lengths)
    return float(np.dot(quad.weights, vals)), quad

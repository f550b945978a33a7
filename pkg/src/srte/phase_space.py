"""Velocity quadratures, spatial collocation grids, discrete fields, and norms.

The discrete phase space is a tensor product of a spatial collocation grid
(cell centers of a uniform lattice restricted to the domain) and a velocity
quadrature (an antipodally symmetric rule on the unit sphere, or a product
rule on a spherical shell of speeds).  A :class:`PhaseField` stores one value
per (spatial node, velocity node) pair; all weighted L^p norms used by the
a-priori estimates reduce over this product measure.

Fields are immutable after construction; norms are deterministic reductions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import geometry
from .errors import GridMismatch, InvalidExponent, QuadratureMismatch


def parse_exponent(p):
    """Normalize a Lebesgue exponent: numbers or the literal 'inf'."""
    if isinstance(p, str):
        if p.strip().lower() in ("inf", "infinity", "oo"):
            return math.inf
        p = float(p)
    p = float(p)
    if math.isnan(p) or p < 1.0:
        raise InvalidExponent(f"exponent must lie in [1, inf], got {p}")
    return p


@dataclass(frozen=True)
class VelocityQuadrature:
    """Quadrature nodes and weights on the velocity set.

    ``antipode[m]`` is the index of the node at ``-velocities[m]``; the rules
    built here are exactly closed under this flip, which the direction-pairing
    scattering kernel requires.
    """

    velocities: np.ndarray  # (M,3)
    weights: np.ndarray     # (M,)
    antipode: np.ndarray    # (M,)
    descriptor: str = "custom"

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("velocity weights must be positive")

    @property
    def directions(self):
        norms = np.linalg.norm(self.velocities, axis=1, keepdims=True)
        return self.velocities / norms

    @property
    def speeds(self):
        return np.linalg.norm(self.velocities, axis=1)

    @property
    def measure(self):
        return float(self.weights.sum())

    def __len__(self):
        return len(self.weights)


def sphere_quadrature(order):
    """Unit-speed velocities on S^2 from the equal-area partition rule."""
    nodes, w, antipode = geometry.sphere_partition(order)
    return VelocityQuadrature(
        velocities=nodes, weights=w, antipode=antipode,
        descriptor=f"sphere(order={order})",
    )


def shell_quadrature(r_min, r_max, n_radial, order):
    """Product rule on the shell r_min < |v| < r_max.

    Radial weights integrate r^2 dr exactly per sub-interval, so the total
    weight equals the shell volume; the angular factor is the sphere rule.
    """
    if not (0.0 <= r_min < r_max):
        raise ValueError("shell requires 0 <= r_min < r_max")
    nodes, w_ang, antipode = geometry.sphere_partition(order)
    edges = np.linspace(r_min, r_max, n_radial + 1)
    w_rad = np.diff(edges**3) / 3.0
    r_mid = 0.5 * (edges[:-1] + edges[1:])
    M = len(nodes)
    vel = (r_mid[:, None, None] * nodes[None, :, :]).reshape(-1, 3)
    wts = (w_rad[:, None] * w_ang[None, :]).reshape(-1)
    anti = (np.arange(n_radial)[:, None] * M + antipode[None, :]).reshape(-1)
    return VelocityQuadrature(
        velocities=vel, weights=wts, antipode=anti,
        descriptor=f"shell({r_min},{r_max},nr={n_radial},order={order})",
    )


@dataclass(frozen=True)
class SpatialGrid:
    """Cell centers of a uniform lattice restricted to the domain.

    Volume weights are full cell volumes (boundary cells uncorrected); the
    total converges to the domain volume under refinement.  Lattice metadata
    is kept so fields can be interpolated multilinearly along rays.
    """

    domain: geometry.Domain
    points: np.ndarray    # (N,3) kept cell centers
    volumes: np.ndarray   # (N,)
    origin: np.ndarray    # (3,) lattice corner
    spacing: np.ndarray   # (3,) cell size
    shape: tuple          # lattice dims
    kept_flat: np.ndarray  # (N,) flat lattice index per kept node
    inside: np.ndarray     # full-lattice bool array, flattened
    descriptor: str = ""

    def __len__(self):
        return len(self.points)

    @property
    def total_volume(self):
        return float(self.volumes.sum())

    def scatter_full(self, values, fill=0.0):
        """Spread kept-node values onto the full flattened lattice."""
        full = np.full(int(np.prod(self.shape)), fill, dtype=float)
        full[self.kept_flat] = values
        return full

    def interpolate(self, values, points):
        """Normalized multilinear interpolation of a kept-node field.

        Corners of the surrounding lattice cell that fall outside the domain
        are excluded and the weights renormalized, so the result is always a
        convex combination of interior node values (exact for constants and
        monotone under sup bounds).  Points with no interior corner fall back
        to the nearest lattice node's value when that node is kept, else 0.
        """
        full_vals = self.scatter_full(values)
        full_in = self.inside.astype(float)
        nx, ny, nz = self.shape
        u = (points - self.origin) / self.spacing - 0.5
        i0 = np.floor(u).astype(int)
        i0 = np.clip(i0, 0, np.array([nx, ny, nz]) - 2)
        f = np.clip(u - i0, 0.0, 1.0)
        num = np.zeros(len(points))
        den = np.zeros(len(points))
        for dx in (0, 1):
            wx = f[:, 0] if dx else 1.0 - f[:, 0]
            for dy in (0, 1):
                wy = f[:, 1] if dy else 1.0 - f[:, 1]
                for dz in (0, 1):
                    wz = f[:, 2] if dz else 1.0 - f[:, 2]
                    w = wx * wy * wz
                    flat = ((i0[:, 0] + dx) * ny + (i0[:, 1] + dy)) * nz + (i0[:, 2] + dz)
                    num += w * full_vals[flat] * full_in[flat]
                    den += w * full_in[flat]
        out = np.where(den > 1e-12, num / np.where(den > 1e-12, den, 1.0), 0.0)
        bad = den <= 1e-12
        if np.any(bad):
            nearest = np.clip(np.rint(u[bad]).astype(int), 0,
                              np.array([nx, ny, nz]) - 1)
            flat = (nearest[:, 0] * ny + nearest[:, 1]) * nz + nearest[:, 2]
            out[bad] = full_vals[flat] * full_in[flat]
        return out


def build_grid(domain, resolution):
    """Uniform Cartesian collocation grid over the domain's bounding box.

    ``resolution`` is the cell count, either one int for all axes or a
    per-axis triple.  Cell centers failing the closed-region test are dropped.
    """
    if np.isscalar(resolution):
        res = (int(resolution),) * 3
    else:
        res = tuple(int(n) for n in resolution)
    if min(res) < 1:
        raise ValueError("grid resolution must be >= 1 per axis")
    lo, hi = domain.bounding_box()
    spacing = (hi - lo) / np.array(res, dtype=float)
    axes = [lo[k] + (np.arange(res[k]) + 0.5) * spacing[k] for k in range(3)]
    xx, yy, zz = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    inside = domain.contains(pts, tol=0.0)
    kept = np.nonzero(inside)[0]
    if len(kept) == 0:
        raise ValueError("grid resolution too coarse: no cell center inside")
    cell_vol = float(np.prod(spacing))
    return SpatialGrid(
        domain=domain,
        points=pts[kept],
        volumes=np.full(len(kept), cell_vol),
        origin=lo,
        spacing=spacing,
        shape=res,
        kept_flat=kept,
        inside=inside,
        descriptor=f"cartesian{res}",
    )


@dataclass(frozen=True)
class PhaseField:
    """Discrete function on spatial-grid x velocity-quadrature nodes."""

    values: np.ndarray  # (N, M)
    grid: SpatialGrid
    vq: VelocityQuadrature

    def __post_init__(self):
        expect = (len(self.grid), len(self.vq))
        if self.values.shape != expect:
            raise ValueError(f"field shape {self.values.shape} != {expect}")

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=float))

    def __add__(self, other):
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def _check(self, other):
        if other.grid is not self.grid:
            raise GridMismatch("fields live on different grids")
        if other.vq is not self.vq:
            raise QuadratureMismatch("fields use different velocity rules")


def field_from_function(grid, vq, fn):
    """Tabulate ``fn(points (N,3), velocity (3,)) -> (N,)`` on the phase grid."""
    vals = np.empty((len(grid), len(vq)))
    for m, v in enumerate(vq.velocities):
        vals[:, m] = fn(grid.points, v)
    return PhaseField(values=vals, grid=grid, vq=vq)


def zero_field(grid, vq):
    return PhaseField(values=np.zeros((len(grid), len(vq))), grid=grid, vq=vq)


def constant_field(grid, vq, c):
    return PhaseField(values=np.full((len(grid), len(vq)), float(c)),
                      grid=grid, vq=vq)


@dataclass(frozen=True)
class BoundaryField:
    """Values on the nodes of one boundary-direction quadrature side."""

    quad: geometry.BoundaryQuadrature
    values: np.ndarray  # (P,)

    @property
    def side(self):
        return self.quad.side

    def __len__(self):
        return len(self.values)


def boundary_field_from_function(quad, fn):
    """Tabulate ``fn(points (P,3), directions (P,3)) -> (P,)`` on boundary nodes."""
    return BoundaryField(quad=quad, values=np.asarray(
        fn(quad.points, quad.directions), dtype=float) * np.ones(len(quad)))


def _resolve_weight(field, weight):
    """Weight argument -> (N,M) array. Accepts None, scalar, array, or
    callable(points (N,3), velocity (3,)) -> (N,)."""
    N, M = field.values.shape
    if weight is None:
        return None
    if callable(weight):
        w = np.empty((N, M))
        for m, v in enumerate(field.vq.velocities):
            w[:, m] = weight(field.grid.points, v)
        return w
    w = np.asarray(weight, dtype=float)
    if w.ndim == 0:
        return np.full((N, M), float(w))
    if w.shape != (N, M):
        raise ValueError(f"weight shape {w.shape} != field shape {(N, M)}")
    return w


def weighted_lp_norm(field, weight, p):
    """Norm of a weighted L^p space on the phase grid.

    For p < inf this is ``(sum vol * velw * weight * |value|^p)^(1/p)``; the
    weight enters with exponent 1/p and therefore drops out entirely at
    p = inf, where the plain sup over collocation nodes is returned (a lower
    bound of the essential sup, tightening under refinement).
    """
    p = parse_exponent(p)
    w = _resolve_weight(field, weight)
    if w is not None and np.any(w < 0):
        raise ValueError("weight must be nonnegative")
    if math.isinf(p):
        return float(np.max(np.abs(field.values), initial=0.0))
    measure = np.outer(field.grid.volumes, field.vq.weights)
    if w is not None:
        measure = measure * w
    return float(np.sum(measure * np.abs(field.values) ** p) ** (1.0 / p))


def lp_norm(field, p, multiplier=None):
    """Plain L^p norm of ``multiplier * field`` over the phase measure.

    Unlike :func:`weighted_lp_norm`, the multiplier acts pointwise on the
    values and therefore survives the p -> inf limit; the theorem checks use
    this for the p-dependent weights ell^(1-1/p) etc.
    """
    p = parse_exponent(p)
    vals = field.values if multiplier is None else field.values * multiplier
    if math.isinf(p):
        return float(np.max(np.abs(vals), initial=0.0))
    measure = np.outer(field.grid.volumes, field.vq.weights)
    return float(np.sum(measure * np.abs(vals) ** p) ** (1.0 / p))


def boundary_lp_norm(bfield, p):
    """L^p norm on a boundary side; node weights already carry |n.v|."""
    p = parse_exponent(p)
    if math.isinf(p):
        return float(np.max(np.abs(bfield.values), initial=0.0))
    return float(np.sum(bfield.quad.weights * np.abs(bfield.values) ** p)
                 ** (1.0 / p))


def energy_norm(phi, dphi, p, ell):
    """Graph norm combining the solution and its streaming derivative.

    ``(|| ell^(-1/p) phi ||_p^p + || ell^(1-1/p) dphi ||_p^p)^(1/p)``, with
    the p = inf limit ``max(sup |phi|, sup ell*|dphi|)``.  ``ell`` is the
    (N,M) chord-length array for the shared phase grid.
    """
    p = parse_exponent(p)
    phi._check(dphi)
    ell = np.asarray(ell, dtype=float)
    if math.isinf(p):
        return max(lp_norm(phi, p), lp_norm(dphi, p, multiplier=ell))
    a = lp_norm(phi, p, multiplier=ell ** (-1.0 / p))
    b = lp_norm(dphi, p, multiplier=ell ** (1.0 - 1.0 / p))
    return float((a**p + b**p) ** (1.0 / p))

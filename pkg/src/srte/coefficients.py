"""Cross-sections, scattering kernels, admissibility checks, stability constants.

Coefficients are analytic descriptors wrapping vectorized evaluators
``(points (N,3), velocity (3,)) -> (N,)`` so the transport operators can
sample them at arbitrary positions along rays without interpolation error.
The outgoing/incoming scattering rates are velocity integrals of the kernel;
the admissibility conditions (nonnegativity, bounded optical thickness,
sub-critical scattering in both slots) are verified by deterministic
stratified sampling, and the same sampling produces the stability constant
``C_p`` and the escape probability ``1 - exp(-C_p)`` entering every bound.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import geometry

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class CrossSection:
    """Total cross-section sigma(r, v) >= 0 as an analytic descriptor."""

    evaluator: callable
    descriptor: str = "custom"

    def __call__(self, points, velocity):
        out = np.asarray(self.evaluator(np.atleast_2d(points), velocity),
                         dtype=float)
        return out * np.ones(len(np.atleast_2d(points)))


def constant_cross_section(value):
    value = float(value)
    if value < 0:
        raise ValueError("cross-section must be nonnegative")
    return CrossSection(
        evaluator=lambda pts, v: np.full(len(pts), value),
        descriptor=f"constant({value})",
    )


def separable_cross_section(spatial_fn, velocity_fn, descriptor="separable"):
    """sigma(r, v) = a(r) * b(v) with vectorized spatial factor."""
    return CrossSection(
        evaluator=lambda pts, v: np.asarray(spatial_fn(pts), dtype=float)
        * float(velocity_fn(v)),
        descriptor=descriptor,
    )


def chord_profile_cross_section(domain, amplitude, exponent):
    """Profile along each chord: amplitude * (1 - tau)^exponent.

    ``tau`` is the normalized backward coordinate of (r, v) on its chord
    (0 at the inflow end, 1 at the outflow end), so the value seen flying
    along +v mirrors the value seen along -v; this is the anisotropic family
    whose paired-direction solutions have closed form.
    """
    amplitude = float(amplitude)
    exponent = int(exponent)

    def evaluate(pts, v):
        r_minus, t, ell = geometry.chords(domain, pts, v)
        with np.errstate(invalid="ignore", divide="ignore"):
            tau = np.where(ell > 0, t / np.where(ell > 0, ell, 1.0), 0.0)
        tau = np.clip(tau, 0.0, 1.0)
        return amplitude * (1.0 - tau) ** exponent

    return CrossSection(
        evaluator=evaluate,
        descriptor=f"chord_profile(a={amplitude},k={exponent})",
    )


def table_cross_section(grid, values, descriptor="table"):
    """Nearest-node lookup of tabulated sigma values on a collocation grid."""
    values = np.asarray(values, dtype=float)
    full = grid.scatter_full(values)
    nx, ny, nz = grid.shape

    def evaluate(pts, v):
        u = (pts - grid.origin) / grid.spacing - 0.5
        idx = np.clip(np.rint(u).astype(int), 0, np.array([nx, ny, nz]) - 1)
        flat = (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]
        return full[flat]

    return CrossSection(evaluator=evaluate, descriptor=descriptor)


@dataclass(frozen=True)
class ScatteringKernel:
    """Scattering kernel k(r, v', v) >= 0.

    Variants: ``zero``; ``isotropic`` with k = a(r) / 4pi; ``flip`` pairing
    each direction with its antipode at rate sigma(r, v) (not an integral
    kernel -- handled without velocity quadrature everywhere); ``general``
    with an explicit evaluator ``(points, v_from, v_to) -> (N,)``.
    """

    variant: str
    amplitude: callable = None       # isotropic: a(r)
    sigma_ref: CrossSection = None   # flip: pairing rate
    evaluator: callable = None       # general
    descriptor: str = ""

    def k(self, points, v_from, v_to):
        """Pointwise kernel density; undefined for the flip variant."""
        pts = np.atleast_2d(points)
        if self.variant == "zero":
            return np.zeros(len(pts))
        if self.variant == "isotropic":
            return np.asarray(self.amplitude(pts), dtype=float) / FOUR_PI
        if self.variant == "general":
            return np.asarray(self.evaluator(pts, v_from, v_to), dtype=float)
        raise ValueError(f"kernel variant {self.variant!r} has no density")


def zero_kernel():
    return ScatteringKernel(variant="zero", descriptor="zero")


def isotropic_kernel(amplitude):
    """Isotropic scattering with outgoing rate a(r); scalar or callable."""
    if np.isscalar(amplitude):
        a = float(amplitude)
        fn = lambda pts: np.full(len(pts), a)
        desc = f"isotropic({a})"
    else:
        fn, desc = amplitude, "isotropic(fn)"
    return ScatteringKernel(variant="isotropic", amplitude=fn, descriptor=desc)


def flip_kernel(sigma_ref):
    """Direction-reversing kernel: scatters v -> -v at rate sigma(r, v)."""
    return ScatteringKernel(variant="flip", sigma_ref=sigma_ref,
                            descriptor=f"flip({sigma_ref.descriptor})")


def general_kernel(evaluator, descriptor="general"):
    return ScatteringKernel(variant="general", evaluator=evaluator,
                            descriptor=descriptor)


def sigma_s(kernel, vq, points, velocity):
    """Outgoing scattering rate: integral of k(r, v, .) over the velocity set.

    The flip variant returns sigma(r, v) exactly (Dirac pairing, no
    quadrature).
    """
    pts = np.atleast_2d(points)
    if kernel.variant == "zero":
        return np.zeros(len(pts))
    if kernel.variant == "flip":
        return kernel.sigma_ref(pts, velocity)
    total = np.zeros(len(pts))
    for w, v_out in zip(vq.weights, vq.velocities):
        total += w * kernel.k(pts, velocity, v_out)
    return total


def sigma_s_prime(kernel, vq, points, velocity):
    """Incoming scattering rate: integral of k(r, ., v) over the velocity set."""
    pts = np.atleast_2d(points)
    if kernel.variant == "zero":
        return np.zeros(len(pts))
    if kernel.variant == "flip":
        return kernel.sigma_ref(pts, velocity)
    total = np.zeros(len(pts))
    for w, v_in in zip(vq.weights, vq.velocities):
        total += w * kernel.k(pts, v_in, velocity)
    return total


def sample_points(domain, grid, sample_count, seed=0):
    """Deterministic stratified sample: grid nodes plus low-discrepancy
    interior points (Halton sequence on the bounding box, filtered)."""
    from scipy.stats import qmc

    pts = [grid.points]
    need = max(0, int(sample_count))
    if need > 0:
        lo, hi = domain.bounding_box()
        sampler = qmc.Halton(d=3, scramble=True, seed=seed)
        collected = []
        got = 0
        while got < need:
            cand = qmc.scale(sampler.random(2 * need), lo, hi)
            inside = domain.boundary_margin(cand) > 1e-12
            cand = cand[inside]
            collected.append(cand)
            got += len(cand)
        pts.append(np.concatenate(collected)[:need])
    return np.concatenate(pts)


@dataclass(frozen=True)
class ValidationReport:
    """Sampled admissibility diagnostics; violations are data, not errors."""

    min_sigma: float
    min_absorption_out: float        # min of sigma - sigma_s
    min_absorption_in: float         # min of sigma - sigma_s'
    sup_sigma_ell: float
    sup_sigma_s_ell: float
    sup_sigma_s_prime_ell: float
    violations: tuple
    sample_count: int

    @property
    def passed(self):
        return len(self.violations) == 0


def validate_assumptions(sigma, kernel, domain, vq, grid, sample_count=256,
                         seed=0, tol=1e-12):
    """Check nonnegativity and sub-criticality of the coefficients by sampling.

    Reports the sampled minima of sigma, sigma - sigma_s and sigma - sigma_s'
    and the sampled suprema of sigma*ell, sigma_s*ell, sigma_s'*ell, flagging
    each violating (r, v) pair.
    """
    pts = sample_points(domain, grid, sample_count, seed)
    mins = {"sigma": np.inf, "out": np.inf, "in": np.inf}
    sups = {"sigma": 0.0, "s": 0.0, "sp": 0.0}
    violations = []
    for m, v in enumerate(vq.velocities):
        sig = sigma(pts, v)
        ss = sigma_s(kernel, vq, pts, v)
        ssp = sigma_s_prime(kernel, vq, pts, v)
        _, _, ell = geometry.chords(domain, pts, v)
        mins["sigma"] = min(mins["sigma"], float(sig.min()))
        mins["out"] = min(mins["out"], float((sig - ss).min()))
        mins["in"] = min(mins["in"], float((sig - ssp).min()))
        sups["sigma"] = max(sups["sigma"], float((sig * ell).max()))
        sups["s"] = max(sups["s"], float((ss * ell).max()))
        sups["sp"] = max(sups["sp"], float((ssp * ell).max()))
        for kind, arr in (("sigma>=0", sig), ("sigma-sigma_s>=0", sig - ss),
                          ("sigma-sigma_s'>=0", sig - ssp)):
            bad = np.nonzero(arr < -tol)[0]
            for i in bad[:4]:
                violations.append((kind, tuple(pts[i]), tuple(v), float(arr[i])))
    return ValidationReport(
        min_sigma=mins["sigma"],
        min_absorption_out=mins["out"],
        min_absorption_in=mins["in"],
        sup_sigma_ell=sups["sigma"],
        sup_sigma_s_ell=sups["s"],
        sup_sigma_s_prime_ell=sups["sp"],
        violations=tuple(violations),
        sample_count=len(pts),
    )


@dataclass(frozen=True)
class BoundConstants:
    """Constants entering the a-priori bounds at exponent p.

    ``c_p = (1/p) sup(sigma_s ell) + (1 - 1/p) sup(sigma_s' ell)``; the escape
    probability ``1 - exp(-c_p)`` is the guaranteed contraction margin.  The
    absorption fields are present only when sigma is strictly positive on the
    samples.
    """

    p: float
    sup_sigma_s_ell: float
    sup_sigma_s_prime_ell: float
    sup_sigma_ell: float
    c_p: float
    escape_probability: float
    min_sigma: float
    nu: float = None
    c: float = None
    c_prime: float = None

    @classmethod
    def assemble(cls, p, sup_s, sup_sp, sup_sigma, min_sigma,
                 c=None, c_prime=None, nu=None):
        p = float(p)
        if math.isinf(p):
            c_p = sup_sp
        else:
            c_p = sup_s / p + (p - 1.0) / p * sup_sp
        return cls(
            p=p,
            sup_sigma_s_ell=sup_s,
            sup_sigma_s_prime_ell=sup_sp,
            sup_sigma_ell=sup_sigma,
            c_p=c_p,
            escape_probability=float(-math.expm1(-c_p)),
            min_sigma=min_sigma,
            nu=nu, c=c, c_prime=c_prime,
        )


def compute_bound_constants(sigma, kernel, domain, vq, grid, p,
                            sample_count=256, seed=0):
    """Estimate the sup norms by sampling and assemble the constants at p.

    The sub-criticality ratios and the absorption margin ``nu`` are populated
    only when the sampled minimum of sigma is strictly positive.
    """
    from .phase_space import parse_exponent

    p = parse_exponent(p)
    pts = sample_points(domain, grid, sample_count, seed)
    sup_s = sup_sp = sup_sigma = 0.0
    min_sigma = np.inf
    ratio_out = ratio_in = 0.0
    positive = True
    for v in vq.velocities:
        sig = sigma(pts, v)
        ss = sigma_s(kernel, vq, pts, v)
        ssp = sigma_s_prime(kernel, vq, pts, v)
        _, _, ell = geometry.chords(domain, pts, v)
        sup_s = max(sup_s, float((ss * ell).max()))
        sup_sp = max(sup_sp, float((ssp * ell).max()))
        sup_sigma = max(sup_sigma, float((sig * ell).max()))
        min_sigma = min(min_sigma, float(sig.min()))
        if min_sigma <= 0.0:
            positive = False
        if positive:
            ratio_out = max(ratio_out, float((ss / sig).max()))
            ratio_in = max(ratio_in, float((ssp / sig).max()))
    nu = c = c_prime = None
    if positive:
        c, c_prime = ratio_out, ratio_in
        margin = 1.0 - max(c, c_prime)
        if margin > 0.0:
            nu = min(margin, 1.0)
    return BoundConstants.assemble(
        p, sup_s, sup_sp, sup_sigma, min_sigma, c=c, c_prime=c_prime, nu=nu)

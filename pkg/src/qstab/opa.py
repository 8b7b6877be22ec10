"""Optical parametric amplifier: model construction and closed-form analysis.

An OPA couples a fundamental cavity mode a1 and a second-harmonic mode a2
through a chi(2) medium.  The interaction Hamiltonian
i*chi*(a2' a1^2 - a1'^2 a2) is cubic, so the stability analysis goes through
the sector-bounded perturbation machinery with z1 = a1', z2 = a2'.  This
module provides the closed-form small-gain threshold and the admissible
region of mode amplitudes on which the sector bounds hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import StructureError
from .model import LinearQuantumSystem
from .perturbation import PerturbationSeries, SectorBounds

__all__ = [
    "OpaParams",
    "RegionCurve",
    "build_opa",
    "closed_form_hinf",
    "gamma_condition",
    "region_z2_cap",
    "lambda_bar",
    "LambdaBar",
    "region_curve",
    "invariant_ellipsoid",
]


@dataclass(frozen=True)
class OpaParams:
    """Mirror couplings (1/time) and chi(2) interaction strength."""

    kappa1: float
    kappa2: float
    chi: float

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "chi"):
            if not getattr(self, name) > 0:
                raise StructureError(f"{name} must be strictly positive")


def build_opa(params: OpaParams) -> tuple[LinearQuantumSystem, PerturbationSeries]:
    """Two-mode system with diagonal damping and the cubic chi(2) interaction.

    The interaction written in the channel operators z_i = a_i' is
    i*chi*(z2 (z1*)^2 - z1^2 z2*), i.e. coefficients S[2,1,1,2] = i*chi and
    S[1,2,2,1] = -i*chi.
    """
    zero = np.zeros((2, 2))
    sys = LinearQuantumSystem(
        M1=zero,
        M2=zero,
        N1=np.diag([math.sqrt(params.kappa1), math.sqrt(params.kappa2)]),
        N2=zero,
        E1=zero,
        E2=np.eye(2),
    )
    series = PerturbationSeries(
        p=2,
        coeffs={(2, 1, 1, 2): 1j * params.chi, (1, 2, 2, 1): -1j * params.chi},
    )
    return sys, series


def closed_form_hinf(params: OpaParams) -> float:
    """H-infinity norm of the damping transfer function: max(2/k1, 2/k2)."""
    return max(2.0 / params.kappa1, 2.0 / params.kappa2)


def gamma_condition(params: OpaParams, gamma: float) -> bool:
    """Small-gain test in closed form: max(2/k1, 2/k2) < gamma / 2 (strict)."""
    if gamma <= 0:
        raise StructureError(f"gamma must be positive, got {gamma}")
    return closed_form_hinf(params) < gamma / 2.0


def _knee(params: OpaParams, bounds: SectorBounds) -> float:
    return 1.0 / (4.0 * bounds.gamma**2 * params.chi**2)


def region_z2_cap(params: OpaParams, bounds: SectorBounds, z1sq: float) -> float:
    """Largest admissible |z2|^2 at the given |z1|^2.

    Below the knee |z1|^2 = 1/(4 gamma^2 chi^2) the gradient bound holds for
    every |z2|^2 and only the curvature ceiling delta2/(4 chi^2) is active.
    Beyond the knee the gradient bound gives

        |z2|^2 <= (delta1/chi^2 + |z1|^2/(gamma^2 chi^2) - |z1|^4)
                  / (4 |z1|^2 - 1/(gamma^2 chi^2)),

    combined with the ceiling and clamped at zero once the numerator turns
    negative.
    """
    if z1sq < 0:
        raise StructureError(f"|z1|^2 must be nonnegative, got {z1sq}")
    chi2 = params.chi**2
    ceiling = bounds.delta2 / (4.0 * chi2)
    if z1sq <= _knee(params, bounds):
        return ceiling
    inv_g2c2 = 1.0 / (bounds.gamma**2 * chi2)
    numer = bounds.delta1 / chi2 + z1sq * inv_g2c2 - z1sq**2
    denom = 4.0 * z1sq - inv_g2c2
    return max(0.0, min(numer / denom, ceiling))


@dataclass(frozen=True)
class LambdaBar:
    """Right endpoint of the admissible interval in |z1|^2, both readings.

    ``caption`` is 1/(2 g^2 c^2) + sqrt(1/(4 g^4 c^4) + delta1); ``root`` is
    the root of the gradient-bound numerator,
    1/(2 g^2 c^2) + sqrt(1/(4 g^4 c^4) + delta1/chi^2).  They coincide at
    delta1 = 0 and disagree otherwise; the discrepancy is surfaced, not
    resolved, and the region code uses ``root``.
    """

    caption: float
    root: float

    @property
    def discrepancy(self) -> float:
        return abs(self.caption - self.root)


def lambda_bar(params: OpaParams, bounds: SectorBounds) -> LambdaBar:
    g2c2 = bounds.gamma**2 * params.chi**2
    half = 1.0 / (2.0 * g2c2)
    caption = half + math.sqrt(half**2 + bounds.delta1)
    root = half + math.sqrt(half**2 + bounds.delta1 / params.chi**2)
    return LambdaBar(caption=caption, root=root)


@dataclass(frozen=True)
class RegionCurve:
    """Sampled upper boundary of the admissible region in (|z1|^2, |z2|^2).

    ``samples`` holds (z1sq, z2sq_max, active) triples with active one of
    "d2" (gradient bound) or "d3" (curvature ceiling).  ``lambda_bar`` is the
    right endpoint (numerator root) and ``cap2`` the curvature ceiling.
    The generating parameters are kept so membership tests can evaluate the
    exact curve instead of interpolating.
    """

    samples: list[tuple[float, float, str]]
    lambda_bar: float
    cap2: float
    params: OpaParams
    bounds: SectorBounds

    def cap(self, z1sq: float) -> float:
        return region_z2_cap(self.params, self.bounds, z1sq)

    def contains(self, z1sq: float, z2sq: float, slack: float = 0.0) -> bool:
        if z1sq < 0 or z2sq < 0:
            return False
        if z1sq > self.lambda_bar + slack:
            return False
        return z2sq <= self.cap(z1sq) + slack


def region_curve(
    params: OpaParams, bounds: SectorBounds, n_samples: int
) -> RegionCurve:
    """Sample the admissibility boundary on a uniform grid of |z1|^2."""
    if n_samples < 2:
        raise StructureError(f"need at least 2 samples, got {n_samples}")
    lb = lambda_bar(params, bounds)
    ceiling = bounds.delta2 / (4.0 * params.chi**2)
    samples = []
    for z1sq in np.linspace(0.0, lb.root, n_samples):
        cap = region_z2_cap(params, bounds, float(z1sq))
        active = "d3" if cap >= ceiling else "d2"
        samples.append((float(z1sq), cap, active))
    return RegionCurve(
        samples=samples,
        lambda_bar=lb.root,
        cap2=ceiling,
        params=params,
        bounds=bounds,
    )


def _doubled_point(alpha: np.ndarray) -> np.ndarray:
    """Coherent amplitudes -> doubled coordinates (z1*, z2*, z1, z2) = (a, a#)."""
    return np.concatenate([alpha, np.conj(alpha)])


def _quadratic_value(P: np.ndarray, alpha: np.ndarray) -> float:
    x = _doubled_point(alpha)
    return float(np.real(np.conj(x) @ P @ x))


def invariant_ellipsoid(
    P: np.ndarray,
    region: RegionCurve,
    n_directions: int = 256,
    seed: int = 0,
    rel_tol: float = 1e-12,
) -> float:
    """Largest level rho with {x : x' P x <= rho} inside the admissible region.

    The ellipsoid lives in the doubled coordinates x = (a, a#) of the
    semiclassical amplitudes; membership of a point is decided through its
    squared magnitudes (|z1|^2, |z2|^2) against the region curve.  The level
    is found by bisection on rho, testing >= ``n_directions`` sampled
    boundary directions; the region is closed downward along rays from the
    origin, so boundary sampling suffices.
    """
    P = np.asarray(P, dtype=complex)
    if P.shape != (4, 4):
        raise StructureError(f"expected a 4x4 quadratic form, got {P.shape}")
    eigs = np.linalg.eigvalsh(P)
    if eigs[0] <= 0:
        raise StructureError(f"P must be positive definite, min eig {eigs[0]:.3e}")
    if region.cap2 <= 0 and region.cap(0.0) <= 0:
        return 0.0

    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_directions, 4))
    # Guarantee the coordinate axes are probed.
    dirs[:4] = np.eye(4)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    alphas = dirs[:, :2] + 1j * dirs[:, 2:]
    norms = np.linalg.norm(alphas, axis=1)
    keep = norms > 1e-12
    alphas = alphas[keep] / norms[keep, None]

    values = np.array([_quadratic_value(P, a) for a in alphas])

    def inside(rho: float) -> bool:
        scales = np.sqrt(rho / values)
        for scale, a in zip(scales, alphas):
            mags = np.abs(scale * a) ** 2
            if not region.contains(mags[0], mags[1], slack=1e-14 * (1.0 + mags.sum())):
                return False
        return True

    lo, hi = 0.0, float(np.min(values)) * 1e-6 + 1e-12
    grow = 0
    while inside(hi):
        lo = hi
        hi *= 2.0
        grow += 1
        if grow > 400:
            raise StructureError("region appears unbounded; cannot bracket the level")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if inside(mid):
            lo = mid
        else:
            hi = mid
    return lo

"""Small-gain stability certificates for the perturbed linear system.

The certificate pipeline: assemble the drift matrix F, test that it is
Hurwitz, evaluate the H-infinity small-gain condition in both its original
and reduced forms, solve the quadratic matrix inequality for a block-form
Lyapunov matrix P via a regularized Riccati equation, and assemble the
explicit constants of the mean-square bound

    <x(t)' x(t)>  <=  c1 * exp(-c2 t) * <x(0)' x(0)> + c3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .errors import ConsistencyError, NotHurwitzError, QmiInfeasibleError, StructureError
from .model import LinearQuantumSystem, doubled_matrices, structure_matrices
from .perturbation import SectorBounds

__all__ = [
    "Verdict",
    "StabilityCertificate",
    "build_F",
    "is_hurwitz",
    "hinf_norm",
    "hinf_norm_grid",
    "hinf_condition",
    "HinfResult",
    "qmi_lhs",
    "solve_qmi",
    "mu_constants",
    "certificate_constants",
    "CertificateConstants",
    "certify",
]

HURWITZ_TOL = 1e-9
BISECTION_RTOL = 1e-9
NORM_AGREEMENT_RTOL = 1e-6
NEWTON_MAX_ITER = 100


class Verdict(str, Enum):
    CERTIFIED = "Certified"
    FAILED_HURWITZ = "FailedHurwitz"
    FAILED_SMALL_GAIN = "FailedSmallGain"


def build_F(M: np.ndarray, N: np.ndarray) -> np.ndarray:
    """Drift matrix F = -i J M - (1/2) J N' J N of the doubled-up dynamics."""
    M = np.asarray(M, dtype=complex)
    N = np.asarray(N, dtype=complex)
    dim = M.shape[0]
    if M.shape != (dim, dim) or dim % 2:
        raise StructureError(f"M must be square with even size, got {M.shape}")
    if N.ndim != 2 or N.shape[1] != dim or N.shape[0] % 2:
        raise StructureError(
            f"N must have an even row count and {dim} columns, got {N.shape}"
        )
    n = dim // 2
    J = structure_matrices(n).J
    Jm = structure_matrices(N.shape[0] // 2).J
    return -1j * J @ M - 0.5 * J @ N.conj().T @ Jm @ N


def is_hurwitz(F: np.ndarray, tol: float = HURWITZ_TOL) -> tuple[bool, float]:
    """Return (stable, spectral abscissa); stable means abscissa < -tol."""
    F = np.asarray(F, dtype=complex)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise StructureError(f"expected a square matrix, got shape {F.shape}")
    try:
        eigs = np.linalg.eigvals(F)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConsistencyError(f"eigensolver failed on drift matrix: {exc}") from exc
    abscissa = float(np.max(eigs.real))
    return abscissa < -tol, abscissa


def _frequency_grid(F: np.ndarray, n_freqs: int) -> np.ndarray:
    """Log-spaced probe frequencies, both signs, plus 0 and the resonances.

    The drift matrix is complex, so the frequency response is not symmetric
    in omega; both half-axes must be swept.
    """
    eigs = np.linalg.eigvals(F)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    half = max(8, n_freqs // 2)
    base = np.logspace(np.log10(scale) - 7, np.log10(scale) + 4, half)
    resonances = np.abs(eigs.imag)
    resonances = resonances[resonances > 0]
    grid = np.concatenate([[0.0], base, -base, resonances, -resonances])
    return np.unique(grid)


def hinf_norm_grid(
    F: np.ndarray, B: np.ndarray, C: np.ndarray, n_freqs: int = 2048
) -> float:
    """Largest singular value of C (iw - F)^-1 B over a dense frequency grid.

    A lower bound on the true norm; used to cross-validate the bisection.
    """
    F = np.asarray(F, dtype=complex)
    B = np.asarray(B, dtype=complex)
    C = np.asarray(C, dtype=complex)
    if B.size == 0 or C.size == 0 or not (np.any(B) and np.any(C)):
        return 0.0
    omegas = _frequency_grid(F, n_freqs)
    lam, V = np.linalg.eig(F)
    cond = np.linalg.cond(V)
    if np.isfinite(cond) and cond < 1e9:
        CV = C @ V
        VB = np.linalg.solve(V, B)
        denom = 1j * omegas[:, None] - lam[None, :]
        T = (CV[None, :, :] / denom[:, None, :]) @ VB
        svals = np.linalg.svd(T, compute_uv=False)
        return float(np.max(svals[:, 0]))
    # Near-defective F: solve per frequency.
    eye = np.eye(F.shape[0])
    best = 0.0
    for w in omegas:
        T = C @ np.linalg.solve(1j * w * eye - F, B)
        best = max(best, float(np.linalg.svd(T, compute_uv=False)[0]))
    return best


def _has_imaginary_axis_eig(H: np.ndarray) -> bool:
    eigs = np.linalg.eigvals(H)
    tol = 1e-8 * (1.0 + float(np.max(np.abs(eigs))))
    return bool(np.min(np.abs(eigs.real)) < tol)


def hinf_norm(
    F: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    rel_tol: float = BISECTION_RTOL,
    grid_check: bool = True,
    n_grid: int = 2048,
    max_iter: int = 200,
) -> float:
    """H-infinity norm of C (sI - F)^-1 B for Hurwitz F, by bisection.

    A candidate level d is an upper bound on the norm iff the doubled matrix

        [[F, B B' / d], [-C' C / d, -F']]

    has no eigenvalue on the imaginary axis.  Bisection runs until the
    relative bracket width is below ``rel_tol``.  The result is then
    cross-validated against a dense frequency sweep, which may not exceed it
    by more than 1e-6 relative; a violation raises ConsistencyError.
    """
    F = np.asarray(F, dtype=complex)
    B = np.asarray(B, dtype=complex)
    C = np.asarray(C, dtype=complex)
    stable, abscissa = is_hurwitz(F)
    if not stable:
        raise NotHurwitzError(
            f"norm undefined: drift matrix has spectral abscissa {abscissa:.3e}"
        )
    if B.size == 0 or C.size == 0 or not (np.any(B) and np.any(C)):
        return 0.0

    BBt = B @ B.conj().T
    CtC = C.conj().T @ C

    def hamiltonian(level: float) -> np.ndarray:
        return np.block([[F, BBt / level], [-CtC / level, -F.conj().T]])

    lo = hinf_norm_grid(F, B, C, n_freqs=256)
    if lo == 0.0:
        # The sweep found nothing; confirm the transfer function vanishes.
        if not _has_imaginary_axis_eig(hamiltonian(1e-12)):
            return 0.0
        lo = 1e-12
    hi = 2.0 * lo
    grow = 0
    while _has_imaginary_axis_eig(hamiltonian(hi)):
        hi *= 2.0
        grow += 1
        if grow > 200:
            raise ConsistencyError("failed to bracket the H-infinity norm from above")
    for _ in range(max_iter):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if _has_imaginary_axis_eig(hamiltonian(mid)):
            lo = mid
        else:
            hi = mid
    else:
        raise ConsistencyError(
            f"H-infinity bisection did not converge in {max_iter} iterations"
        )
    norm = 0.5 * (lo + hi)
    if grid_check:
        probe = hinf_norm_grid(F, B, C, n_freqs=n_grid)
        if probe > norm + 1e-6 * (1.0 + norm):
            raise ConsistencyError(
                f"frequency sweep {probe:.12g} exceeds bisection result {norm:.12g}"
            )
    return norm


def _primary_io(Etilde: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Input/output matrices of the original small-gain transfer function."""
    n2 = Etilde.shape[1]
    sm = structure_matrices(n2 // 2)
    C = Etilde.conj() @ sm.Sigma
    B = sm.J @ sm.Sigma @ Etilde.T
    return B, C


def _reduced_io(Etilde: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Input/output matrices of the equivalent reduced transfer function."""
    n2 = Etilde.shape[1]
    sm = structure_matrices(n2 // 2)
    C = Etilde.copy()
    B = sm.J @ Etilde.conj().T
    return B, C


@dataclass(frozen=True)
class HinfResult:
    hinf_primary: float
    hinf_reduced: float
    passed: bool
    gamma: float


def hinf_condition(sys: LinearQuantumSystem, gamma: float) -> HinfResult:
    """Evaluate the small-gain condition ||transfer|| < gamma / 2.

    Both the original and the reduced transfer-function norms are computed;
    they are equal in exact arithmetic, and a disagreement beyond 1e-6
    relative raises ConsistencyError (an implementation bug, not bad input).
    """
    if gamma <= 0:
        raise StructureError(f"gamma must be positive, got {gamma}")
    M, N, Et = doubled_matrices(sys)
    F = build_F(M, N)
    stable, abscissa = is_hurwitz(F)
    if not stable:
        raise NotHurwitzError(f"drift matrix not Hurwitz (abscissa {abscissa:.3e})")
    Bp, Cp = _primary_io(Et)
    Br, Cr = _reduced_io(Et)
    primary = hinf_norm(F, Bp, Cp)
    reduced = hinf_norm(F, Br, Cr)
    if abs(primary - reduced) > NORM_AGREEMENT_RTOL * (1.0 + reduced):
        raise ConsistencyError(
            f"transfer-function norms disagree: original {primary:.12g} "
            f"vs reduced {reduced:.12g}"
        )
    return HinfResult(primary, reduced, reduced < gamma / 2.0, float(gamma))


def qmi_lhs(
    F: np.ndarray, Etilde: np.ndarray, gamma: float, P: np.ndarray
) -> np.ndarray:
    """Left-hand side of the quadratic matrix inequality at P.

    F' P + P F + 4 P J S E^T E^# S J P + (1/gamma^2) S E^T E^# S, which must
    be negative definite for the Lyapunov dissipation argument.
    """
    sm = structure_matrices(Etilde.shape[1] // 2)
    W = sm.Sigma @ Etilde.T @ Etilde.conj() @ sm.Sigma
    JWJ = sm.J @ W @ sm.J
    return F.conj().T @ P + P @ F + 4.0 * P @ JWJ @ P + W / gamma**2


def _hermitize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.conj().T)


def _newton_riccati(
    F: np.ndarray, G: np.ndarray, Q: np.ndarray, eps: float, tol: float
) -> tuple[np.ndarray, float, int]:
    """Solve F'P + PF + PGP + Q + eps I = 0 by Newton's method.

    The initial iterate solves the Lyapunov equation obtained by dropping the
    quadratic term; each Newton step solves a Sylvester equation in the
    correction.  Returns (P, residual norm, iterations).
    """
    dim = F.shape[0]
    eye = np.eye(dim)
    Qr = Q + eps * eye
    P = _hermitize(sla.solve_continuous_lyapunov(F.conj().T, -Qr))
    residual = np.inf
    bad_streak = 0
    for it in range(NEWTON_MAX_ITER):
        R = F.conj().T @ P + P @ F + P @ G @ P + Qr
        new_residual = float(np.linalg.norm(R, "fro"))
        if new_residual <= tol:
            return P, new_residual, it
        if new_residual > residual:
            bad_streak += 1
            if bad_streak >= 5:
                raise QmiInfeasibleError(
                    f"Newton iteration diverging; residual {new_residual:.3e} "
                    f"after {it} steps"
                )
        else:
            bad_streak = 0
        residual = new_residual
        A = F + G @ P
        try:
            delta = sla.solve_sylvester(A.conj().T, A, -R)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise QmiInfeasibleError(
                f"Sylvester step failed at iteration {it}: {exc}"
            ) from exc
        P = _hermitize(P + delta)
    raise QmiInfeasibleError(
        f"Newton iteration did not converge in {NEWTON_MAX_ITER} steps; "
        f"achieved residual {residual:.3e} (tolerance {tol:.3e})"
    )


def default_regularization(Etilde: np.ndarray, gamma: float) -> float:
    """Default eps turning the strict inequality into an equation with margin."""
    sm = structure_matrices(Etilde.shape[1] // 2)
    W = sm.Sigma @ Etilde.T @ Etilde.conj() @ sm.Sigma
    Wr = Etilde.conj().T @ Etilde
    Q = (W + Wr) / gamma**2
    return 1e-6 * (1.0 + float(np.linalg.norm(Q, 2)))


def solve_qmi(
    sys: LinearQuantumSystem, gamma: float, eps: float | None = None
) -> np.ndarray:
    """Positive-definite block-form P strictly satisfying the matrix inequality.

    The inequality is solved through the regularized Riccati equation

        F' P + P F + P (B B' + B2 B2') P + (C' C + C2' C2) + eps I = 0

    where (B, C) and (B2, C2) are the input/output matrices of the original
    and reduced transfer functions.  Pairing the two makes the equation data
    invariant under Sigma-conjugation, so the unique stabilizing solution
    inherits the block structure P = Sigma P^# Sigma, and it satisfies the
    original inequality with margin at least eps because the added terms are
    positive semidefinite.  Solving with the original data alone and
    symmetrizing afterwards does not work: the symmetrized matrix can leave
    the solution set entirely.

    Pairing both forms is mildly conservative when the cross transfer terms
    between the two channels are nonzero; for systems with E1 = 0 or E2 = 0
    (such as the parametric-amplifier model) it is exact.

    Raises QmiInfeasibleError with diagnostics when Newton fails or the
    result is not a valid strict solution; with the small-gain condition
    satisfied with margin beyond eps effects this should not happen.
    """
    M, N, Et = doubled_matrices(sys)
    F = build_F(M, N)
    stable, abscissa = is_hurwitz(F)
    if not stable:
        raise NotHurwitzError(f"drift matrix not Hurwitz (abscissa {abscissa:.3e})")
    if gamma <= 0:
        raise StructureError(f"gamma must be positive, got {gamma}")
    sm = structure_matrices(sys.n)
    Bp, Cp = _primary_io(Et)
    Br, Cr = _reduced_io(Et)
    # The inequality's quadratic inputs are 2*Bp and 2*Br.
    G = 4.0 * (Bp @ Bp.conj().T + Br @ Br.conj().T)
    Q = (Cp.conj().T @ Cp + Cr.conj().T @ Cr) / gamma**2
    if eps is None:
        eps = default_regularization(Et, gamma)
    tol = 1e-10 * (1.0 + float(np.linalg.norm(Q, 2)))
    P, residual, _ = _newton_riccati(F, G, Q, eps, tol)
    # Clean up roundoff; the exact solution already has the block structure.
    P = _hermitize(0.5 * (P + sm.Sigma @ P.conj() @ sm.Sigma))
    min_eig = float(np.min(np.linalg.eigvalsh(P)))
    lhs_max = float(np.max(np.linalg.eigvalsh(qmi_lhs(F, Et, gamma, P))))
    if min_eig <= 0 or lhs_max >= 0:
        raise QmiInfeasibleError(
            "Riccati solve did not produce a strict solution: "
            f"min eig(P) = {min_eig:.3e}, max eig(inequality) = {lhs_max:.3e}, "
            f"Newton residual {residual:.3e}"
        )
    return P


def mu_constants(P: np.ndarray, Etilde: np.ndarray) -> np.ndarray:
    """Constants mu_i = [z_i, [z_i, V]] of the quadratic form V = x' P x.

    The double commutator of z_i = Etilde_i x with V is a scalar.  Expanding
    with the commutation relations [x_a, x_b'] = J_ab and
    [x_a, x_b] = (J Sigma)_ab gives, for Hermitian P,

        mu_i = Etilde_i J Sigma (P^T + Sigma P Sigma) J Etilde_i^T,

    which reduces to -2 Etilde_i Sigma J P^# J Etilde_i^T in the block-form
    case.  The truncated-Fock oracle pins these constants down to rounding.
    """
    P = np.asarray(P, dtype=complex)
    Etilde = np.asarray(Etilde, dtype=complex)
    sm = structure_matrices(Etilde.shape[1] // 2)
    core = sm.J @ sm.Sigma @ (P.T + sm.Sigma @ P @ sm.Sigma) @ sm.J
    return np.einsum("ia,ab,ib->i", Etilde, core, Etilde)


@dataclass(frozen=True)
class CertificateConstants:
    lambda_tilde: float
    lam: float
    c: float
    c1: float
    c2: float
    c3: float


def certificate_constants(
    sys: LinearQuantumSystem, bounds: SectorBounds, P: np.ndarray
) -> CertificateConstants:
    """Explicit constants of the mean-square bound, for a given Lyapunov P.

    lambda_tilde is the trace offset produced by the coupling dissipation,
    lam = lambda_tilde + delta1 + sum |mu_i|^2 / 4 + delta2, and c is the
    largest scalar with (inequality LHS) + c P <= 0, recovered from P after
    the fact.  Then c1 = lmax(P)/lmin(P), c2 = c, c3 = lam / (c lmin(P)).
    """
    P = np.asarray(P, dtype=complex)
    eigs = np.linalg.eigvalsh(P)
    if eigs[0] <= 0:
        raise StructureError(f"P must be positive definite, min eig {eigs[0]:.3e}")
    M, N, Et = doubled_matrices(sys)
    F = build_F(M, N)
    sm = structure_matrices(sys.n)
    proj = np.zeros((2 * sys.m, 2 * sys.m))
    proj[: sys.m, : sys.m] = np.eye(sys.m)
    lambda_tilde = float(
        np.real(np.trace(P @ sm.J @ N.conj().T @ proj @ N @ sm.J))
    )
    mu = mu_constants(P, Et)
    lam = lambda_tilde + bounds.delta1 + float(np.sum(np.abs(mu) ** 2)) / 4.0 + bounds.delta2
    lhs = qmi_lhs(F, Et, bounds.gamma, P)
    c = float(np.min(sla.eigh(-lhs, P, eigvals_only=True)))
    c1 = float(eigs[-1] / eigs[0])
    if lam == 0.0:
        c3 = 0.0
    elif c > 0.0:
        c3 = lam / (c * float(eigs[0]))
    else:
        # No decay margin for this P; the offset bound degenerates.
        c3 = float("inf")
    return CertificateConstants(lambda_tilde, lam, c, c1, c, c3)


@dataclass(frozen=True)
class StabilityCertificate:
    """Outcome of the certification pipeline, with partial data on failure."""

    verdict: Verdict
    gamma: float
    F: np.ndarray = field(repr=False)
    abscissa: float
    hinf_primary: float = np.inf
    hinf_reduced: float = np.inf
    P: np.ndarray | None = field(default=None, repr=False)
    mu: np.ndarray | None = None
    lambda_tilde: float | None = None
    lam: float | None = None
    c: float | None = None
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None
    eps: float | None = None
    invariant_level: float | None = None

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED


def certify(
    sys: LinearQuantumSystem, bounds: SectorBounds, eps: float | None = None
) -> StabilityCertificate:
    """Run the full pipeline and return a certificate (or a failure verdict).

    FailedHurwitz and FailedSmallGain short-circuit with the data computed so
    far.  Errors raised by later stages propagate, tagged with the stage.
    """
    M, N, Et = doubled_matrices(sys)
    F = build_F(M, N)
    stable, abscissa = is_hurwitz(F)
    if not stable:
        return StabilityCertificate(
            verdict=Verdict.FAILED_HURWITZ, gamma=bounds.gamma, F=F, abscissa=abscissa
        )
    hinf = hinf_condition(sys, bounds.gamma)
    if not hinf.passed:
        return StabilityCertificate(
            verdict=Verdict.FAILED_SMALL_GAIN,
            gamma=bounds.gamma,
            F=F,
            abscissa=abscissa,
            hinf_primary=hinf.hinf_primary,
            hinf_reduced=hinf.hinf_reduced,
        )
    if eps is None:
        eps = default_regularization(Et, bounds.gamma)
    try:
        P = solve_qmi(sys, bounds.gamma, eps)
    except QmiInfeasibleError as exc:
        # Regularization shifts the feasible boundary by O(eps).  A gain
        # margin inside that band is a boundary case, not an anomaly: the
        # certificate cannot be produced, so the verdict is a (slightly
        # conservative) small-gain failure.  Beyond the band the failure is
        # unexpected and propagates.
        margin = bounds.gamma / 2.0 - hinf.hinf_reduced
        if margin <= 1e3 * eps * (1.0 + bounds.gamma):
            return StabilityCertificate(
                verdict=Verdict.FAILED_SMALL_GAIN,
                gamma=bounds.gamma,
                F=F,
                abscissa=abscissa,
                hinf_primary=hinf.hinf_primary,
                hinf_reduced=hinf.hinf_reduced,
                eps=eps,
            )
        raise QmiInfeasibleError(f"solve_qmi: {exc}") from exc
    mu = mu_constants(P, Et)
    consts = certificate_constants(sys, bounds, P)
    return StabilityCertificate(
        verdict=Verdict.CERTIFIED,
        gamma=bounds.gamma,
        F=F,
        abscissa=abscissa,
        hinf_primary=hinf.hinf_primary,
        hinf_reduced=hinf.hinf_reduced,
        P=P,
        mu=mu,
        lambda_tilde=consts.lambda_tilde,
        lam=consts.lam,
        c=consts.c,
        c1=consts.c1,
        c2=consts.c2,
        c3=consts.c3,
        eps=eps,
    )

"""Doubled-up representation of the nominal linear quantum system.

A system with n bosonic modes, m coupling channels and p perturbation
channels is specified by the blocks (M1, M2) of the quadratic Hamiltonian,
(N1, N2) of the coupling operator and (E1, E2) of the perturbation channel.
All matrices act on the stacked vector [a; a#] of annihilation and creation
operators.  The scattering matrix is fixed to the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError

__all__ = [
    "StructureMatrices",
    "LinearQuantumSystem",
    "SymmetryViolation",
    "structure_matrices",
    "validate_system",
    "doubled_matrices",
]

# Validation tolerance relative to the largest entry; inputs are user-supplied
# exact or near-exact constants, so this is generous.
SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class StructureMatrices:
    """Signature matrix J = diag(I, -I) and block swap Sigma = [[0, I], [I, 0]]."""

    n: int
    J: np.ndarray = field(repr=False)
    Sigma: np.ndarray = field(repr=False)


def structure_matrices(n: int) -> StructureMatrices:
    if n < 1:
        raise StructureError(f"mode count must be positive, got {n}")
    eye = np.eye(n)
    zero = np.zeros((n, n))
    J = np.block([[eye, zero], [zero, -eye]])
    Sigma = np.block([[zero, eye], [eye, zero]])
    return StructureMatrices(n=n, J=J, Sigma=Sigma)


def _as_complex(name: str, value) -> np.ndarray:
    arr = np.asarray(value, dtype=complex)
    if arr.ndim != 2:
        raise StructureError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class LinearQuantumSystem:
    """Known linear part of the model, stored as the six defining blocks.

    Shapes: M1, M2 are n x n; N1, N2 are m x n; E1, E2 are p x n.
    Instances are immutable values; all operations on them are pure.
    """

    M1: np.ndarray
    M2: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    E1: np.ndarray
    E2: np.ndarray

    def __post_init__(self):
        for name in ("M1", "M2", "N1", "N2", "E1", "E2"):
            arr = _as_complex(name, getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.M1.shape[0]
        if self.M1.shape != (n, n) or self.M2.shape != (n, n):
            raise StructureError(
                f"Hamiltonian blocks must be square and equally sized: "
                f"M1 {self.M1.shape} vs M2 {self.M2.shape}"
            )
        for name in ("N1", "N2", "E1", "E2"):
            arr = getattr(self, name)
            if arr.shape[1] != n:
                raise StructureError(
                    f"{name} has {arr.shape[1]} columns, expected {n} (mode count)"
                )
        if self.N1.shape != self.N2.shape:
            raise StructureError(
                f"coupling blocks differ in shape: N1 {self.N1.shape} vs N2 {self.N2.shape}"
            )
        if self.E1.shape != self.E2.shape:
            raise StructureError(
                f"perturbation blocks differ in shape: E1 {self.E1.shape} vs E2 {self.E2.shape}"
            )

    @property
    def n(self) -> int:
        return self.M1.shape[0]

    @property
    def m(self) -> int:
        return self.N1.shape[0]

    @property
    def p(self) -> int:
        return self.E1.shape[0]


@dataclass(frozen=True)
class SymmetryViolation:
    matrix: str
    kind: str
    residual: float

    def __str__(self) -> str:
        return f"{self.matrix} {self.kind}, residual {self.residual:g}"


def validate_system(sys: LinearQuantumSystem) -> list[SymmetryViolation]:
    """Check the block symmetries that make the doubled Hamiltonian Hermitian.

    Returns an empty list iff M1 is Hermitian and M2 is symmetric within
    tolerance.  Dimension mismatches raise at construction time, not here.
    """
    report = []
    scale = 1.0 + max(
        (float(np.max(np.abs(b))) if b.size else 0.0) for b in (sys.M1, sys.M2)
    )
    tol = SYMMETRY_RTOL * scale
    r_herm = float(np.max(np.abs(sys.M1 - sys.M1.conj().T))) if sys.M1.size else 0.0
    if r_herm > tol:
        report.append(SymmetryViolation("M1", "not Hermitian", r_herm))
    r_sym = float(np.max(np.abs(sys.M2 - sys.M2.T))) if sys.M2.size else 0.0
    if r_sym > tol:
        report.append(SymmetryViolation("M2", "asymmetric", r_sym))
    return report


def doubled_matrices(sys: LinearQuantumSystem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble (M, N, Etilde) acting on [a; a#].

    M = [[M1, M2], [M2#, M1#]] is Hermitian by construction for a valid
    system, N is the analogous 2m x 2n coupling matrix, and
    Etilde = [E1 E2] is the p x 2n perturbation-channel matrix whose rows
    Etilde_i define the operators z_i.
    """
    M = np.block([[sys.M1, sys.M2], [sys.M2.conj(), sys.M1.conj()]])
    N = np.block([[sys.N1, sys.N2], [sys.N2.conj(), sys.N1.conj()]])
    Etilde = np.hstack([sys.E1, sys.E2])
    return M, N, Etilde

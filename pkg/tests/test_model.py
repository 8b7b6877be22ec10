import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_system
from qstab.errors import StructureError
from qstab.model import (
    LinearQuantumSystem,
    doubled_matrices,
    structure_matrices,
    validate_system,
)
from qstab.opa import OpaParams, build_opa


def single_mode(M1, M2):
    zero = np.zeros((1, 1))
    return LinearQuantumSystem(M1=M1, M2=M2, N1=zero, N2=zero, E1=zero, E2=zero)


class TestStructureMatrices:
    @given(st.integers(min_value=1, max_value=8))
    def test_identities(self, n):
        sm = structure_matrices(n)
        eye = np.eye(2 * n)
        assert np.array_equal(sm.J @ sm.J, eye)
        assert np.array_equal(sm.Sigma @ sm.Sigma, eye)
        assert np.array_equal(sm.Sigma @ sm.J @ sm.Sigma, -sm.J)

    def test_rejects_nonpositive(self):
        with pytest.raises(StructureError):
            structure_matrices(0)


class TestValidateSystem:
    def test_scalar_real_system_is_clean(self):
        sys = single_mode(np.array([[1.0]]), np.array([[0.0]]))
        assert validate_system(sys) == []

    def test_asymmetric_m2_reported_with_unit_residual(self):
        zero = np.zeros((2, 2))
        sys = LinearQuantumSystem(
            M1=zero,
            M2=np.array([[0.0, 1.0], [0.0, 0.0]]),
            N1=zero,
            N2=zero,
            E1=zero,
            E2=zero,
        )
        report = validate_system(sys)
        assert len(report) == 1
        assert report[0].matrix == "M2"
        assert report[0].residual == pytest.approx(1.0)
        assert "asymmetric" in str(report[0])

    def test_opa_system_is_clean(self):
        sys, _ = build_opa(OpaParams(kappa1=1.0, kappa2=2.0, chi=0.1))
        assert validate_system(sys) == []
        assert (sys.n, sys.m, sys.p) == (2, 2, 2)

    def test_non_hermitian_m1_reported(self):
        sys = single_mode(np.array([[1j]]), np.array([[0.0]]))
        report = validate_system(sys)
        assert [v.matrix for v in report] == ["M1"]

    def test_dimension_mismatch_names_shapes(self):
        with pytest.raises(StructureError, match=r"\(1, 2\)"):
            LinearQuantumSystem(
                M1=np.zeros((2, 2)),
                M2=np.zeros((2, 2)),
                N1=np.zeros((1, 2)),
                N2=np.zeros((1, 2)),
                E1=np.zeros((1, 2)),
                E2=np.zeros((2, 2)),
            )


class TestDoubledMatrices:
    def test_opa_blocks(self):
        params = OpaParams(kappa1=2.0, kappa2=3.0, chi=0.1)
        sys, _ = build_opa(params)
        M, N, Et = doubled_matrices(sys)
        assert np.array_equal(M, np.zeros((4, 4)))
        expected_N = np.diag(
            [np.sqrt(2.0), np.sqrt(3.0), np.sqrt(2.0), np.sqrt(3.0)]
        )
        assert np.allclose(N, expected_N)
        assert np.array_equal(Et, np.hstack([np.zeros((2, 2)), np.eye(2)]))

    def test_single_mode_diagonal(self):
        omega = 1.7
        sys = single_mode(np.array([[omega]]), np.array([[0.0]]))
        M, _, _ = doubled_matrices(sys)
        assert np.allclose(M, np.diag([omega, omega]))

    def test_random_system_assembles_hermitian(self, rng):
        sys = random_system(rng, n=2, m=2, p=2, require_hurwitz=False)
        M, _, _ = doubled_matrices(sys)
        assert np.max(np.abs(M - M.conj().T)) < 1e-14

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_conjugation_identities(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 4))
        sys = random_system(rng, n=n, m=int(rng.integers(1, 4)), p=2, require_hurwitz=False)
        M, N, Et = doubled_matrices(sys)
        sm = structure_matrices(n)
        smm = structure_matrices(sys.m)
        assert np.allclose(sm.Sigma @ M @ sm.Sigma, M.conj())
        assert np.allclose(smm.Sigma @ N @ sm.Sigma, N.conj())
        assert np.allclose(sm.Sigma @ N.conj().T @ smm.Sigma, N.T)

    def test_row_partition_reconstructs(self, rng):
        sys = random_system(rng, n=3, m=1, p=3, require_hurwitz=False)
        _, _, Et = doubled_matrices(sys)
        rows = [Et[i] for i in range(sys.p)]
        assert np.array_equal(np.vstack(rows), Et)

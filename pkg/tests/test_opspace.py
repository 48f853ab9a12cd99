import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qsl_forge import opspace
from qsl_forge.gates import gate
from qsl_forge.opspace import NumericalError, ShapeError, ValidationError
from qsl_forge.qsl import swap_hamiltonian

from conftest import random_hermitian, random_unitary

seeds = st.integers(min_value=0, max_value=2**31 - 1)
dims = st.integers(min_value=2, max_value=6)


def test_hs_inner_identity():
    assert opspace.hs_inner(np.eye(4), np.eye(4)) == pytest.approx(1.0)


def test_hs_inner_swap_overlap():
    assert opspace.hs_inner(np.eye(4), gate("SWAP").matrix) == pytest.approx(0.5)


def test_hs_inner_qft_analog_magnitude():
    assert abs(opspace.hs_inner(np.eye(4), gate('"QFT"').matrix)) == pytest.approx(1 / math.sqrt(8))


def test_hs_inner_shape_mismatch():
    with pytest.raises(ShapeError):
        opspace.hs_inner(np.eye(3), np.eye(4))


def test_hs_inner_batch_matches_scalar(rng):
    a = np.array([random_unitary(rng, 3) for _ in range(5)])
    b = np.array([random_unitary(rng, 3) for _ in range(5)])
    batch = opspace.hs_inner_batch(a, b)
    for k in range(5):
        assert batch[k] == pytest.approx(opspace.hs_inner(a[k], b[k]), abs=1e-14)


def test_mean_energy_examples():
    assert opspace.mean_energy(np.diag([1.0, 1, -1, -1]) * 2.3) == pytest.approx(0.0)
    assert opspace.mean_energy(1.7 * np.eye(4)) == pytest.approx(1.7)
    # direct trace of the SWAP Hamiltonian: diag (1, -1, -1, 1) sums to zero
    assert opspace.mean_energy(swap_hamiltonian(0.8)) == pytest.approx(0.0, abs=1e-15)


def test_mean_energy_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        opspace.mean_energy(np.array([[0, 1], [0, 0]], dtype=complex))


def test_energy_variance_swap_is_omega():
    for omega in (0.5, 1.0, 2.7):
        assert opspace.energy_variance(swap_hamiltonian(omega)) == pytest.approx(omega, rel=1e-12)


def test_energy_variance_scalar_zero():
    assert opspace.energy_variance(3.0 * np.eye(4)) == 0.0


def test_energy_variance_eigenvalue_oracle(rng):
    for _ in range(20):
        h = random_hermitian(rng, 4)
        lam = np.linalg.eigvalsh(h)
        want = math.sqrt(np.mean(lam ** 2) - np.mean(lam) ** 2)
        assert opspace.energy_variance(h) == pytest.approx(want, abs=1e-10)


def test_energy_variance_batch_matches(rng):
    hs = np.array([random_hermitian(rng, 4) for _ in range(6)])
    got = opspace.energy_variance_batch(hs)
    assert got == pytest.approx([opspace.energy_variance(h) for h in hs], abs=1e-13)


def test_perp_decompose_scalar_branch(rng):
    dec = opspace.perp_decompose(2.5 * np.eye(4), random_unitary(rng, 4))
    assert dec.lambda_par == pytest.approx(2.5)
    assert dec.lambda_perp_mag == 0.0
    assert dec.u_perp is None


def test_perp_decompose_swap_at_identity():
    dec = opspace.perp_decompose(swap_hamiltonian(1.3), np.eye(4))
    assert dec.lambda_par == pytest.approx(0.0, abs=1e-15)
    assert dec.lambda_perp_mag == pytest.approx(opspace.energy_variance(swap_hamiltonian(1.3)))
    assert dec.lambda_perp_mag == pytest.approx(1.3)


@given(seeds, dims)
def test_perp_decompose_invariants(seed, d):
    rng = np.random.default_rng(seed)
    h, u = random_hermitian(rng, d), random_unitary(rng, d)
    dec = opspace.perp_decompose(h, u)
    recon = dec.lambda_par * u + dec.lambda_perp_mag * dec.u_perp
    assert np.linalg.norm(h @ u - recon) <= 1e-10
    assert abs(opspace.hs_inner(u, dec.u_perp)) <= 1e-10
    assert opspace.hs_inner(dec.u_perp, dec.u_perp).real == pytest.approx(1.0, abs=1e-10)
    assert dec.lambda_perp_mag ** 2 + abs(dec.lambda_par) ** 2 == pytest.approx(
        np.trace(h @ h).real / d, abs=1e-10)


def test_gate_angle_examples():
    assert opspace.gate_angle(np.eye(4)) == 0.0
    assert opspace.gate_angle(gate("SWAP").matrix) == pytest.approx(math.pi / 3, abs=1e-12)
    assert opspace.gate_angle(gate("Hadamard").matrix) == pytest.approx(math.pi / 2, abs=1e-12)


def test_gate_angle_small_rotation_resolved():
    # arccos would lose everything below ~1e-8; the atan2 form keeps it
    eps = 1e-10
    u = np.diag(np.exp(-1j * eps * np.array([1.0, -1.0])))
    assert opspace.gate_angle(u) == pytest.approx(eps, rel=1e-6)


def test_gate_fidelity_examples():
    q = gate("QFT").matrix
    assert opspace.gate_fidelity(q, q) == pytest.approx(1.0)
    assert opspace.gate_fidelity(np.exp(1j * math.pi / 7) * q, q) == pytest.approx(1.0)
    assert opspace.gate_fidelity(np.eye(4), gate("CNOT").matrix) == pytest.approx(0.25)


def test_pack_examples():
    assert opspace.pack(np.eye(2)).tolist() == [1, 0, 0, 1, 0, 0, 0, 0]
    assert opspace.pack(1j * np.eye(2)).tolist() == [0, 0, 0, 0, 1, 0, 0, 1]


@given(seeds, dims)
def test_pack_round_trip_exact(seed, d):
    u = random_unitary(np.random.default_rng(seed), d)
    assert np.array_equal(opspace.unpack(opspace.pack(u)), u)


@pytest.mark.parametrize("n", [0, 3, 7, 12])
def test_unpack_bad_length(n):
    with pytest.raises(ShapeError):
        opspace.unpack(np.zeros(n))


def test_is_unitary_and_hermitian(rng):
    assert opspace.is_unitary(random_unitary(rng, 4))
    assert not opspace.is_unitary(2 * np.eye(3))
    assert opspace.is_hermitian(random_hermitian(rng, 3))
    assert not opspace.is_hermitian(np.array([[0, 1j], [1j, 0]]))


def test_tolerances_record():
    assert opspace.TOL.unitarity == 1e-9
    assert opspace.TOL.hermiticity == 1e-12


# -- properties ---------------------------------------------------------------


@given(seeds, dims)
def test_projection_identity(seed, d):
    rng = np.random.default_rng(seed)
    h, u = random_hermitian(rng, d), random_unitary(rng, d)
    assert abs(opspace.hs_inner(u, h @ u) - opspace.mean_energy(h)) <= 1e-10


@given(seeds, dims, st.floats(min_value=-50, max_value=50))
def test_variance_shift_invariant(seed, d, c):
    h = random_hermitian(np.random.default_rng(seed), d)
    assert opspace.energy_variance(h + c * np.eye(d)) == pytest.approx(opspace.energy_variance(h), abs=1e-10)


@given(seeds, dims, st.floats(min_value=-10, max_value=10))
def test_fidelity_phase_invariant(seed, d, alpha):
    rng = np.random.default_rng(seed)
    u, t = random_unitary(rng, d), random_unitary(rng, d)
    assert opspace.gate_fidelity(np.exp(1j * alpha) * u, t) == pytest.approx(opspace.gate_fidelity(u, t), abs=1e-12)


@given(seeds, dims)
def test_cauchy_schwarz(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    lhs = abs(opspace.hs_inner(a, b)) ** 2
    rhs = (opspace.hs_inner(a, a) * opspace.hs_inner(b, b)).real
    assert lhs <= rhs * (1 + 1e-12)


@given(seeds, dims)
def test_conjugate_symmetry(seed, d):
    rng = np.random.default_rng(seed)
    a, b = random_unitary(rng, d), random_hermitian(rng, d)
    assert opspace.hs_inner(a, b) == pytest.approx(np.conj(opspace.hs_inner(b, a)), abs=1e-14)


def test_numerical_error_type_exists():
    assert issubclass(NumericalError, ArithmeticError)

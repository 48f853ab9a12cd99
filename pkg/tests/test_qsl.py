import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from qsl_forge import cases, opspace, qsl
from qsl_forge.gates import gate
from qsl_forge.qsl import DegenerateVarianceError, DomainError, InsufficientDataError, MlBoundInput

from conftest import random_hermitian, random_unitary

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def complex_z(h, u):
    """Z = conj<I,U> <I,U_perp> evaluated directly."""
    d = u.shape[0]
    dec = opspace.perp_decompose(h, u)
    return np.conj(np.trace(u) / d) * np.trace(dec.u_perp) / d


# -- bounds -------------------------------------------------------------------


@pytest.mark.parametrize("omega", [0.5, 1.0, 3.0])
def test_mt_min_time_swap(omega):
    assert qsl.mt_min_time(gate("SWAP").matrix, omega) == pytest.approx(math.pi / (3 * omega), rel=1e-12)


def test_mt_min_time_qft_analog():
    assert qsl.mt_min_time(gate('"QFT"').matrix, 1.0) / math.pi == pytest.approx(0.385, abs=5e-4)


def test_mt_min_time_identity_and_domain():
    assert qsl.mt_min_time(np.eye(4), 2.0) == 0.0
    with pytest.raises(DomainError):
        qsl.mt_min_time(np.eye(4), 0.0)


def test_ml_min_time_traceless():
    assert qsl.ml_min_time(MlBoundInput((), 0.0, 0.0), 2.0) == pytest.approx(math.pi / 4)
    # ground energy 0: the shifted bound is the same number
    assert qsl.ml_min_time(MlBoundInput((0.0, 1.0, 3.0), 0.0, 0.0), 2.0) == pytest.approx(math.pi / 4)


def test_ml_min_time_shift_tightens():
    loose = qsl.ml_min_time(MlBoundInput((), 0.0, 0.0), 2.0)
    tight = qsl.ml_min_time(MlBoundInput((1.0, 2.0, 3.0), 0.0, 0.0), 2.0)
    assert tight == pytest.approx(math.pi / 2) and tight > loose


def test_ml_min_time_identity_target_zero():
    assert qsl.ml_min_time(MlBoundInput.from_target([0.0, 1.0], np.eye(2)), 0.5) == 0.0


def test_ml_min_time_errors():
    with pytest.raises(DomainError):
        qsl.ml_min_time(MlBoundInput((), 0.0, 0.0), 0.0)
    with pytest.raises(DomainError):
        MlBoundInput((2.0, 1.0), 0.0, 0.0)


def test_ml_equals_mt_for_half_half_spectrum():
    for d in (2, 4, 6):
        t_mt, t_ml, t_hit = cases.two_level_spectrum_times(d, energy=0.9)
        assert abs(t_mt - t_ml) <= 1e-9
        assert t_hit == pytest.approx(t_mt, abs=1e-12)


# -- diagnostics --------------------------------------------------------------


def test_diagnostics_identity_branch(rng):
    dg = qsl.diagnostics(random_hermitian(rng, 4), np.eye(4))
    assert dg.f_plane == 0.0 and dg.phi == 0.0


def test_diagnostics_scalar_hamiltonian_branch(rng):
    dg = qsl.diagnostics(1.5 * np.eye(4), random_unitary(rng, 4))
    assert (dg.f_plane, dg.f_phase, dg.predicted_speed) == (0.0, 0.0, 0.0)


def test_phi_only_path_is_great_arc():
    times = np.linspace(0.0, 1.0, 201)
    us, hs = qsl.two_level_path(lambda t: 0.0, lambda t: 2.5 * t + t ** 2, times)
    dg = qsl.diagnostics_batch(hs, us)
    assert np.max(dg.f_plane) <= 1e-12 and np.max(dg.f_phase) <= 1e-12


def test_theta_only_path_is_great_arc():
    times, us, hs = cases.great_arc(401)
    dg = qsl.diagnostics_batch(hs, us)
    assert np.max(dg.f_plane) <= 1e-10 and np.max(dg.f_phase) <= 1e-10


def test_diagnostics_batch_matches_single(rng):
    hs = np.array([random_hermitian(rng, 3) for _ in range(4)])
    us = np.array([random_unitary(rng, 3) for _ in range(4)])
    b = qsl.diagnostics_batch(hs, us)
    for k in range(4):
        s = qsl.diagnostics(hs[k], us[k])
        assert b.f_plane[k] == pytest.approx(s.f_plane, abs=1e-14)
        assert b.f_phase[k] == pytest.approx(s.f_phase, abs=1e-14)


@given(seeds, st.integers(min_value=2, max_value=5))
def test_diagnostic_ranges_and_speed_bound(seed, d):
    rng = np.random.default_rng(seed)
    dg = qsl.diagnostics(random_hermitian(rng, d), random_unitary(rng, d))
    assert 0.0 <= dg.f_plane <= 1.0 and 0.0 <= dg.f_phase <= 1.0
    assert 0.0 <= dg.phi <= math.pi / 2 + 1e-15
    assert dg.predicted_speed <= dg.speed_bound + 1e-12
    assert dg.speed_bound == dg.delta_h


def test_f_plane_matches_definition(rng):
    # 1 - |<I,U>|^2 - |<I,U_perp>|^2 over 1 - |<I,U>|^2
    for _ in range(10):
        h, u = random_hermitian(rng, 4), random_unitary(rng, 4)
        up = opspace.perp_decompose(h, u).u_perp
        a2 = abs(np.trace(u) / 4) ** 2
        w2 = abs(np.trace(up) / 4) ** 2
        assert qsl.diagnostics(h, u).f_plane == pytest.approx((1 - a2 - w2) / (1 - a2), abs=1e-12)


# -- real trace forms ------------------------------------------------------------


@pytest.mark.parametrize("d", [2, 3, 4])
def test_trace_form_forms_match_complex(d):
    rng = np.random.default_rng(100 + d)
    for _ in range(100):
        h, u = random_hermitian(rng, d), random_unitary(rng, d)
        fp, fh, re_z, im_z = qsl.trace_forms(h, u)
        dg = qsl.diagnostics(h, u)
        z = complex_z(h, u)
        assert abs(fp - dg.f_plane) <= 1e-10
        assert abs(fh - dg.f_phase) <= 1e-10
        assert abs(re_z - z.real) <= 1e-12 and abs(im_z - z.imag) <= 1e-12


def test_trace_form_im_z_real_inputs(rng):
    a = rng.normal(size=(4, 4))
    h = (a + a.T).astype(complex)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    _, _, re_z, im_z = qsl.trace_forms(h, q.astype(complex))
    z = complex_z(h, q.astype(complex))
    assert im_z == pytest.approx(z.imag, abs=1e-12)
    assert re_z == pytest.approx(z.real, abs=1e-12)


def test_trace_form_re_z_zero_at_identity(rng):
    h = random_hermitian(rng, 4)
    h -= np.trace(h) / 4 * np.eye(4)
    assert qsl.trace_forms(h, np.eye(4, dtype=complex))[2] == pytest.approx(0.0, abs=1e-14)


def test_trace_form_forms_degenerate():
    with pytest.raises(DegenerateVarianceError):
        qsl.trace_forms(np.eye(3), np.eye(3))
    with pytest.raises(DegenerateVarianceError):
        qsl.trace_form_gradients(np.eye(3), np.eye(3), 0.5, 0.5)


def _f0(h, u, p1, p2):
    fp, fh, _, _ = qsl.trace_forms(h, u)
    return p1 * fp + p2 * fh


@pytest.mark.parametrize("p1,p2", [(1.0, 0.0), (0.0, 1.0), (0.5, 0.3)])
def test_trace_form_gradients_finite_difference(p1, p2):
    rng = np.random.default_rng(7)
    h, u = random_hermitian(rng, 4), random_unitary(rng, 4)
    gr, gi = qsl.trace_form_gradients(h, u, p1, p2)
    step = 1e-6
    num_r = np.zeros((4, 4))
    num_i = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            e = np.zeros((4, 4))
            e[i, j] = step
            num_r[i, j] = (_f0(h, u + e, p1, p2) - _f0(h, u - e, p1, p2)) / (2 * step)
            num_i[i, j] = (_f0(h, u + 1j * e, p1, p2) - _f0(h, u - 1j * e, p1, p2)) / (2 * step)
    scale = max(np.abs(num_r).max(), np.abs(num_i).max())
    assert np.abs(gr - num_r).max() <= 1e-4 * scale
    assert np.abs(gi - num_i).max() <= 1e-4 * scale


def test_trace_form_gradients_zero_weights(rng):
    gr, gi = qsl.trace_form_gradients(random_hermitian(rng, 4), random_unitary(rng, 4), 0.0, 0.0)
    assert not gr.any() and not gi.any()


def test_gradient_along_tangent_direction(rng):
    # directional derivative along U -> exp(-i s K) U matches the contracted gradient
    h, u = random_hermitian(rng, 4), random_unitary(rng, 4)
    k = random_hermitian(rng, 4)
    gr, gi = qsl.trace_form_gradients(h, u, 0.5, 0.5)
    du = -1j * k @ u
    pred = np.sum(gr * du.real + gi * du.imag)
    s = 1e-6
    num = (_f0(h, expm(-1j * s * k) @ u, 0.5, 0.5) - _f0(h, expm(1j * s * k) @ u, 0.5, 0.5)) / (2 * s)
    assert pred == pytest.approx(num, rel=1e-5)
    # a global phase moves U along a direction the cost ignores
    du = 1j * u
    assert abs(np.sum(gr * du.real + gi * du.imag)) <= 1e-10


# -- sampled paths ------------------------------------------------------------


def test_speed_identity_swap_constant():
    h = qsl.swap_hamiltonian(1.0)
    t = np.linspace(0.0, 1.0, 10001)
    us = np.array([expm(-1j * h * x) for x in t])
    assert qsl.speed_identity_residual(t, us, np.repeat(h[None], t.size, axis=0)) <= 1e-5


def test_speed_identity_great_arc():
    t, us, hs = cases.great_arc(2001)
    assert qsl.speed_identity_residual(t, us, hs) <= 1e-6
    assert np.max(np.abs(cases.path_efficiency(us, hs, t) - 1.0)) <= 1e-6


def test_speed_identity_needs_three_samples():
    with pytest.raises(InsufficientDataError):
        qsl.speed_identity_residual([0.0, 1.0], np.array([np.eye(2)] * 2), np.array([np.eye(2)] * 2))


def test_mixed_path_is_strictly_slower():
    t, us, hs = cases.mixed_path()
    assert np.min(cases.path_efficiency(us, hs, t)) < 1 - 1e-6


# -- Rodrigues family -------------------------------------------------------------


def test_rodrigues_identity():
    assert np.allclose(qsl.rodrigues_unitary([0, 0, 1], 0.0), np.eye(3), atol=1e-15)


def test_rodrigues_z_rotation():
    r = qsl.rodrigues_unitary([0, 0, 1], math.pi / 2).real
    assert np.allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    assert np.allclose(r @ [0, 1, 0], [-1, 0, 0], atol=1e-15)
    assert np.allclose(r @ [0, 0, 1], [0, 0, 1], atol=1e-15)


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(-6, 6))
def test_rodrigues_real_orthogonal(a, b, c, theta):
    axis = np.array([a, b, c]) / math.sqrt(a * a + b * b + c * c)
    r = qsl.rodrigues_unitary(axis, theta)
    assert np.abs(r.imag).max() == 0.0
    assert np.allclose(r.real.T @ r.real, np.eye(3), atol=1e-12)


def test_rodrigues_domain_errors():
    with pytest.raises(DomainError):
        qsl.rodrigues_unitary([1.0, 1.0, 0.0], 0.3)
    with pytest.raises(DomainError):
        qsl.rodrigues_unitary([-1.0, 0.0, 0.0], 0.3)


def test_rodrigues_hamiltonian_generates_path():
    # propagate with the supplied H and compare with the closed form
    axis_fn = cases._axis
    theta_fn = lambda t: 1.3 * t  # noqa: E731
    n = 4000
    t = np.linspace(0.0, 1.0, n + 1)
    u = np.eye(3, dtype=complex)
    h_ = 1e-6
    for k in range(n):
        tm = 0.5 * (t[k] + t[k + 1])
        ax_d = (axis_fn(tm + h_) - axis_fn(tm - h_)) / (2 * h_)
        h = qsl.rodrigues_hamiltonian(axis_fn(tm), theta_fn(tm), ax_d, 1.3)
        u = expm(-1j * h * (t[k + 1] - t[k])) @ u
    want = qsl.rodrigues_unitary(axis_fn(1.0), 1.3) @ qsl.rodrigues_unitary(axis_fn(0.0), 0.0).conj().T
    assert np.abs(u - want).max() <= 1e-5


@given(st.floats(0.2, 3.0), st.floats(0.1, 2.0))
def test_rodrigues_paths_never_saturate(rate, wobble):
    axis = lambda t: cases._axis(wobble * t)  # noqa: E731
    _, _, _, fp = cases.rodrigues_path(axis, lambda t: rate * t, n=81)
    assert fp.max() > 1e-6


def test_rodrigues_fixed_axis_also_off_plane():
    _, _, _, fp = cases.rodrigues_path(lambda t: np.array([0.6, 0.0, 0.8]), lambda t: 1.5 * t, n=81)
    assert fp.max() > 1e-6


# -- brachistochrone ----------------------------------------------------------------


def test_brachistochrone_values():
    rows = {r["gate"]: r for r in qsl.brachistochrone_report(1.0)}
    assert rows["SWAP"]["t_qsl"] == pytest.approx(math.pi / 3, rel=1e-3)
    assert rows["SWAP"]["t_bra"] / math.pi == pytest.approx(0.433, abs=5e-4)
    assert rows['"QFT"']["t_qsl"] / math.pi == pytest.approx(0.385, abs=5e-4)
    assert rows['"QFT"']["t_bra"] / math.pi == pytest.approx(0.415, abs=5e-4)
    assert all(r["ratio"] < 1 for r in rows.values())


def test_brachistochrone_scales_with_omega():
    a = qsl.brachistochrone_report(1.0)
    b = qsl.brachistochrone_report(2.0)
    for ra, rb in zip(a, b):
        assert rb["t_qsl"] == pytest.approx(ra["t_qsl"] / 2)
        assert rb["ratio"] == pytest.approx(ra["ratio"])


def test_swap_brachistochrone_reaches_swap():
    u = expm(-1j * qsl.swap_hamiltonian(1.0) * qsl.SQRT3_PI_4)
    assert opspace.gate_fidelity(u, gate("SWAP").matrix) >= 1 - 1e-8

"""Speed-limit bounds and the plane/phase deviation diagnostics.

Units: hbar = 1, times in units of t_f and energies in 1/t_f.

Two routes compute the running costs.  ``diagnostics`` works directly on the
complex operators with explicit Gram-Schmidt projections (numerically stable
near ``U = I``); ``trace_forms`` and ``running_cost_partials`` use
real-valued trace expressions over ``U_R, U_I, H_R, H_I`` and feed the
optimizer gradients.  The two are cross-checked in the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import opspace
from .opspace import TOL, ShapeError

# degenerate-branch thresholds
OVERLAP_EDGE = 1e-10   # |<I,U>| >= 1 - OVERLAP_EDGE  -> f_plane := 0
PHASE_FLOOR = 1e-20    # |Z|^2 below this             -> f_phase := 0

SQRT3_PI_4 = math.sqrt(3.0) * math.pi / 4.0
SQRT11_PI_8 = math.sqrt(11.0) * math.pi / 8.0


class DomainError(ValueError):
    pass


class DegenerateVarianceError(ArithmeticError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class QslDiagnostics:
    """Instantaneous speed-limit diagnostics; fields are floats or arrays."""

    f_plane: np.ndarray | float
    f_phase: np.ndarray | float
    delta_h: np.ndarray | float
    phi: np.ndarray | float
    speed_bound: np.ndarray | float
    predicted_speed: np.ndarray | float

    @property
    def f_plane_scaled(self):
        # ||U_perp_perp||^2 = f_plane * sin^2(phi)
        return self.f_plane * np.sin(self.phi) ** 2


@dataclass(frozen=True)
class MlBoundInput:
    energies: tuple[float, ...]
    target_trace_re: float
    target_trace_im: float

    def __post_init__(self):
        e = tuple(float(x) for x in self.energies)
        if any(b < a for a, b in zip(e, e[1:])):
            raise DomainError("energies must be sorted ascending")
        object.__setattr__(self, "energies", e)

    @classmethod
    def from_target(cls, energies, target) -> "MlBoundInput":
        target = np.asarray(target)
        tr = np.trace(target) / target.shape[0]
        return cls(tuple(sorted(energies)), float(tr.real), float(tr.imag))


# ---------------------------------------------------------------------------
# bounds


def mt_min_time(target, delta_h: float) -> float:
    if not delta_h > 0:
        raise DomainError(f"delta_h must be positive, got {delta_h}")
    return opspace.gate_angle(target) / delta_h


def ml_min_time(inp: MlBoundInput, mean_h: float) -> float:
    """Margolus-Levitin style minimal time towards a target of given trace.

    For traceless targets the ground energy is subtracted from ``mean_h``,
    which gives the tighter bound.
    """
    if not mean_h > 0:
        raise DomainError(f"mean_h must be positive, got {mean_h}")
    dr, di = inp.target_trace_re, inp.target_trace_im
    traceless = abs(dr) < 1e-12 and abs(di) < 1e-12
    denom = mean_h
    if traceless and inp.energies:
        denom = mean_h - inp.energies[0]
        if denom <= 0:
            # degenerate spectrum: the overlap with I never vanishes
            return math.inf
    return max(0.0, (math.pi / 2.0 / denom) * (1.0 - dr + (2.0 / math.pi) * di))


# ---------------------------------------------------------------------------
# complex-form diagnostics


def diagnostics_batch(h, u) -> QslDiagnostics:
    h = np.asarray(h, dtype=complex)
    u = np.asarray(u, dtype=complex)
    if h.shape != u.shape or h.shape[-1] != h.shape[-2]:
        raise ShapeError(f"shape mismatch: {h.shape} vs {u.shape}")
    d = u.shape[-1]
    eye = np.eye(d)

    def inner(x, y):
        return np.einsum("...ij,...ij->...", x.conj(), y) / d

    a = np.trace(u, axis1=-2, axis2=-1) / d                       # <I,U>
    h1 = np.trace(h, axis1=-2, axis2=-1).real / d
    hc = h - h1[..., None, None] * eye
    dh = np.sqrt(np.maximum(inner(hc, hc).real, 0.0))
    ok_var = dh >= TOL.variance
    safe_dh = np.where(ok_var, dh, 1.0)

    u_perp = (hc @ u) / safe_dh[..., None, None]
    w = np.trace(u_perp, axis1=-2, axis2=-1) / d                  # <I,U_perp>

    resid = u - a[..., None, None] * eye
    sin2 = np.maximum(inner(resid, resid).real, 0.0)
    phi = np.arctan2(np.sqrt(sin2), np.abs(a))

    upp = eye - a.conj()[..., None, None] * u - w.conj()[..., None, None] * u_perp
    upp2 = np.maximum(inner(upp, upp).real, 0.0)
    ok_plane = ok_var & (np.abs(a) < 1.0 - OVERLAP_EDGE)
    f_plane = np.where(ok_plane, upp2 / np.where(ok_plane, sin2, 1.0), 0.0)

    z = a.conj() * w
    z2 = np.abs(z) ** 2
    ok_phase = ok_var & (z2 >= PHASE_FLOOR)
    f_phase = np.where(ok_phase, z.real ** 2 / np.where(ok_phase, z2, 1.0), 0.0)

    f_plane = np.clip(f_plane, 0.0, 1.0)
    f_phase = np.clip(f_phase, 0.0, 1.0)
    speed = np.where(ok_var, dh * np.sqrt(1.0 - f_plane) * np.sqrt(1.0 - f_phase), 0.0)
    return QslDiagnostics(f_plane, f_phase, dh, phi, dh, speed)


def diagnostics(h, u) -> QslDiagnostics:
    h = np.asarray(h)
    u = np.asarray(u)
    if h.ndim != 2 or u.ndim != 2:
        raise ShapeError("diagnostics expects single matrices; use diagnostics_batch")
    dg = diagnostics_batch(h, u)
    return QslDiagnostics(*(float(getattr(dg, f)) for f in dg.__dataclass_fields__))


# ---------------------------------------------------------------------------
# real-valued trace forms


def _trace_quantities(h, u):
    """Traces of real/imaginary blocks entering the real-valued cost forms."""
    ur, ui = u.real, u.imag
    hr, hi = h.real, h.imag
    tr = lambda m: np.trace(m, axis1=-2, axis2=-1)  # noqa: E731
    t_ur = tr(ur)
    t_ui = tr(ui)
    re_b = tr(hr @ ur - hi @ ui)
    im_b = tr(hr @ ui + hi @ ur)
    t_hr = tr(hr)
    return t_ur, t_ui, re_b, im_b, t_hr


def trace_forms(h, u):
    """Return ``(f_plane, f_phase, re_z, im_z)`` from the trace formulas."""
    h = np.asarray(h, dtype=complex)
    u = np.asarray(u, dtype=complex)
    if h.shape != u.shape:
        raise ShapeError(f"shape mismatch: {h.shape} vs {u.shape}")
    d = u.shape[-1]
    dh = opspace.energy_variance_batch(h)
    if np.any(dh <= TOL.variance):
        raise DegenerateVarianceError("energy variance vanishes; branch before calling")
    t_ur, t_ui, re_b, im_b, t_hr = _trace_quantities(h, u)
    overlap2 = (t_ur ** 2 + t_ui ** 2) / d ** 2
    x = re_b - t_hr * t_ur / d
    y = im_b - t_hr * t_ui / d
    upp2 = 1.0 - (x ** 2 + y ** 2) / (d ** 2 * dh ** 2) - overlap2
    re_z = (t_ui * im_b + t_ur * re_b - t_hr * (t_ur ** 2 + t_ui ** 2) / d) / (d ** 2 * dh)
    im_z = (-t_ui * re_b + t_ur * im_b) / (d ** 2 * dh)
    # same degenerate branches as the complex form
    ok_plane = np.sqrt(overlap2) < 1.0 - OVERLAP_EDGE
    z2 = re_z ** 2 + im_z ** 2
    ok_phase = z2 >= PHASE_FLOOR
    f_plane = np.where(ok_plane, upp2 / np.where(ok_plane, 1.0 - overlap2, 1.0), 0.0)
    f_phase = np.where(ok_phase, re_z ** 2 / np.where(ok_phase, z2, 1.0), 0.0)
    if f_plane.ndim == 0:
        f_plane, f_phase = float(f_plane), float(f_phase)
    return f_plane, f_phase, re_z, im_z


@dataclass(frozen=True)
class CostPartials:
    """Running cost ``f0 = p1 f_plane + p2 f_phase`` and its scalar partials.

    ``a = Tr U``, ``b = Tr HU``, ``h1 = Tr H / d`` and ``h2 = Tr H^2 / d``.
    Entries are zeroed wherever a degenerate branch applies.
    """

    f0: np.ndarray
    g_ar: np.ndarray
    g_ai: np.ndarray
    g_br: np.ndarray
    g_bi: np.ndarray
    g_h1: np.ndarray
    g_h2: np.ndarray

    def wirtinger(self, h):
        """``df0/dU_R + i df0/dU_I`` as a complex matrix (stack)."""
        d = h.shape[-1]
        ga = (self.g_ar + 1j * self.g_ai)[..., None, None] * np.eye(d)
        gb = (self.g_br + 1j * self.g_bi)[..., None, None] * h
        return ga + gb


def running_cost_partials(h, u, p1: float, p2: float) -> CostPartials:
    h = np.asarray(h, dtype=complex)
    u = np.asarray(u, dtype=complex)
    d = u.shape[-1]
    ar, ai, br, bi, t_hr = _trace_quantities(h, u)
    h1 = t_hr / d
    hc = h - h1[..., None, None] * np.eye(d)
    s2 = np.einsum("...ij,...ij->...", hc.conj(), hc).real / d
    a2 = ar ** 2 + ai ** 2
    zero = np.zeros_like(ar)

    ok_var = np.sqrt(np.maximum(s2, 0.0)) >= TOL.variance
    ok_plane = ok_var & (np.sqrt(a2) / d < 1.0 - OVERLAP_EDGE)

    # plane: f = 1 - |r|^2 / K, r = b - h1 a, K = s2 (d^2 - |a|^2)
    rr = br - h1 * ar
    ri = bi - h1 * ai
    r2 = rr ** 2 + ri ** 2
    k = np.where(ok_plane, s2 * (d * d - a2), 1.0)
    fp = np.where(ok_plane, 1.0 - r2 / k, 0.0)
    fp_br = -2.0 * rr / k
    fp_bi = -2.0 * ri / k
    fp_ar = 2.0 * h1 * rr / k - 2.0 * r2 * s2 * ar / k ** 2
    fp_ai = 2.0 * h1 * ri / k - 2.0 * r2 * s2 * ai / k ** 2
    fp_h1 = 2.0 * (rr * ar + ri * ai) / k - 2.0 * h1 * r2 * (d * d - a2) / k ** 2
    fp_h2 = r2 * (d * d - a2) / k ** 2

    # phase: f = cr^2 / |c|^2, c = conj(a) b - h1 |a|^2
    cr = ar * br + ai * bi - h1 * a2
    ci = ar * bi - ai * br
    c2 = cr ** 2 + ci ** 2
    # |Z|^2 = |c|^2 / (d^4 s2)
    ok_phase = ok_var & (c2 / (d ** 4 * np.where(ok_var, s2, 1.0)) >= PHASE_FLOOR)
    c2s = np.where(ok_phase, c2, 1.0)
    fh = np.where(ok_phase, cr ** 2 / c2s, 0.0)
    f_cr = 2.0 * cr * ci ** 2 / c2s ** 2
    f_ci = -2.0 * ci * cr ** 2 / c2s ** 2
    fh_ar = f_cr * (br - 2.0 * h1 * ar) + f_ci * bi
    fh_ai = f_cr * (bi - 2.0 * h1 * ai) - f_ci * br
    fh_br = f_cr * ar - f_ci * ai
    fh_bi = f_cr * ai + f_ci * ar
    fh_h1 = -f_cr * a2

    def mix(gp, gh):
        return p1 * np.where(ok_plane, gp, zero) + p2 * np.where(ok_phase, gh, zero)

    return CostPartials(
        f0=p1 * fp + p2 * fh,
        g_ar=mix(fp_ar, fh_ar),
        g_ai=mix(fp_ai, fh_ai),
        g_br=mix(fp_br, fh_br),
        g_bi=mix(fp_bi, fh_bi),
        g_h1=mix(fp_h1, fh_h1),
        g_h2=mix(fp_h2, zero),
    )


def trace_form_gradients(h, u, p1: float, p2: float):
    """Matrix derivatives ``(df0/dU_R, df0/dU_I)`` of the weighted running cost."""
    h = np.asarray(h, dtype=complex)
    u = np.asarray(u, dtype=complex)
    if np.any(opspace.energy_variance_batch(h) <= TOL.variance):
        raise DegenerateVarianceError("energy variance vanishes; branch before calling")
    g = running_cost_partials(h, u, p1, p2).wirtinger(h)
    return g.real, g.imag


# ---------------------------------------------------------------------------
# sampled trajectories


def speed_identity_residual(times, operators, hamiltonians) -> float:
    """Max |phi_dot (central differences) - predicted speed| over interior samples."""
    t = np.asarray(times, dtype=float)
    if t.size < 3:
        raise InsufficientDataError("need at least 3 samples")
    us = np.asarray(operators)
    hs = np.asarray(hamiltonians)
    phi = opspace.gate_angle_batch(us)
    phi_dot = (phi[2:] - phi[:-2]) / (t[2:] - t[:-2])
    dg = diagnostics_batch(hs[1:-1], us[1:-1])
    return float(np.max(np.abs(np.abs(phi_dot) - dg.predicted_speed)))


# ---------------------------------------------------------------------------
# two-level family U(theta, varphi)

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
SIGMA_Z = np.diag([1.0 + 0j, -1.0])


def two_level_unitary(theta: float, varphi: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    rot = np.array([[c, -s], [s, c]], dtype=complex)
    return rot @ np.diag([np.exp(-0.5j * varphi), np.exp(0.5j * varphi)])


def two_level_hamiltonian(theta, varphi, theta_dot, varphi_dot) -> np.ndarray:
    """H = (1/2)[theta_dot U sigma_y U^+ + varphi_dot U sigma_z U^+]."""
    u = two_level_unitary(theta, varphi)
    ud = u.conj().T
    return 0.5 * (theta_dot * u @ SIGMA_Y @ ud + varphi_dot * u @ SIGMA_Z @ ud)


def two_level_path(theta_fn, varphi_fn, times, h: float = 1e-6):
    """Sample ``(U, H)`` along a parametrized two-level path.

    Angle derivatives are taken by central differences of the supplied
    callables; the Hamiltonian itself is then exact for those rates.
    """
    us, hs = [], []
    for t in times:
        th, vp = theta_fn(t), varphi_fn(t)
        th_d = (theta_fn(t + h) - theta_fn(t - h)) / (2 * h)
        vp_d = (varphi_fn(t + h) - varphi_fn(t - h)) / (2 * h)
        us.append(two_level_unitary(th, vp))
        hs.append(two_level_hamiltonian(th, vp, th_d, vp_d))
    return np.array(us), np.array(hs)


# ---------------------------------------------------------------------------
# three-level rotations


def _levi_civita_matrix(axis) -> np.ndarray:
    # V = sum_ijk eps_ijk u_i |k><j|, i.e. V v = u x v
    ux, uy, uz = axis
    return np.array([[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]])


def rodrigues_unitary(u_axis, theta: float) -> np.ndarray:
    axis = np.asarray(u_axis, dtype=float)
    if axis.shape != (3,):
        raise ShapeError("axis must be a real 3-vector")
    if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
        raise DomainError("rotation axis must have unit norm")
    if np.any(axis < 0):
        raise DomainError("rotation axis must have nonnegative entries")
    v = _levi_civita_matrix(axis)
    return (math.cos(theta) * np.eye(3) + (1 - math.cos(theta)) * np.outer(axis, axis)
            + math.sin(theta) * v).astype(complex)


def rodrigues_hamiltonian(u_axis, theta, axis_dot, theta_dot) -> np.ndarray:
    """H = i dU/dt U^+ for the rotation family with moving axis and angle."""
    axis = np.asarray(u_axis, dtype=float)
    ad = np.asarray(axis_dot, dtype=float)
    c, s = math.cos(theta), math.sin(theta)
    v = _levi_civita_matrix(axis)
    du = (theta_dot * (-s * np.eye(3) + s * np.outer(axis, axis) + c * v)
          + (1 - c) * (np.outer(ad, axis) + np.outer(axis, ad))
          + s * _levi_civita_matrix(ad))
    u = rodrigues_unitary(axis, theta)
    h = 1j * du @ u.conj().T
    return 0.5 * (h + h.conj().T)


# ---------------------------------------------------------------------------
# brachistochrone comparison


def swap_hamiltonian(omega: float = 1.0) -> np.ndarray:
    h = np.diag([1.0, -1.0, -1.0, 1.0]).astype(complex)
    h[1, 2] = h[2, 1] = 2.0
    return omega / math.sqrt(3.0) * h


def brachistochrone_report(omega: float = 1.0) -> list[dict]:
    """T_QSL against the time-optimal (brachistochrone) durations, units 1/omega."""
    from .gates import gate

    swap = gate("SWAP").matrix
    qft_q = gate('"QFT"').matrix
    t_qsl_swap = mt_min_time(swap, opspace.energy_variance(swap_hamiltonian(omega)))
    t_qsl_q = mt_min_time(qft_q, omega)
    rows = [
        {"gate": "SWAP", "t_qsl": t_qsl_swap, "t_bra": SQRT3_PI_4 / omega},
        {"gate": '"QFT"', "t_qsl": t_qsl_q, "t_bra": SQRT11_PI_8 / omega},
    ]
    for r in rows:
        r["ratio"] = r["t_qsl"] / r["t_bra"]
    return rows

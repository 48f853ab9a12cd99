"""Piecewise-constant propagation of the evolution operator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import opspace, qsl
from .controls import ControlModel, ControlSchedule
from .opspace import TOL, NumericalError, ShapeError


class UndefinedPhaseError(ArithmeticError):
    pass


def expm_hermitian(h, tau: float) -> np.ndarray:
    """exp(-i h tau) for Hermitian ``h`` (or a stack), via eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if not np.all(np.isfinite(h)):
        raise NumericalError("non-finite Hamiltonian entries")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * tau * w)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def step(u, h, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=complex)
    if not np.all(np.isfinite(u)):
        raise NumericalError("non-finite operator entries")
    return expm_hermitian(h, dt) @ u


def half_step_propagators(hs, dt: float):
    """Half-bin propagators exp(-i H_m dt/2) for a stack of bin Hamiltonians."""
    return expm_hermitian(hs, 0.5 * dt)


def forward(half_props) -> tuple[np.ndarray, np.ndarray]:
    """Operators at bin boundaries ``(N+1, d, d)`` and at bin centers ``(N, d, d)``."""
    n, d = half_props.shape[0], half_props.shape[-1]
    bounds = np.empty((n + 1, d, d), dtype=complex)
    centers = np.empty((n, d, d), dtype=complex)
    u = np.eye(d, dtype=complex)
    bounds[0] = u
    for m in range(n):
        c = half_props[m] @ u
        u = half_props[m] @ c
        centers[m] = c
        bounds[m + 1] = u
    return bounds, centers


@dataclass(frozen=True)
class Trajectory:
    """Recorded evolution: operators at bin boundaries, diagnostics at centers."""

    times: np.ndarray            # boundaries, (N+1,)
    centers: np.ndarray          # bin centers, (N,)
    operators: np.ndarray        # U at boundaries, (N+1, d, d)
    center_operators: np.ndarray
    hamiltonians: np.ndarray     # H per bin, (N, d, d)
    diagnostics: qsl.QslDiagnostics
    phi: np.ndarray              # gate angle at boundaries
    eta: np.ndarray              # QSL efficiency per bin
    eta_bar: float
    fidelity: np.ndarray | None = None   # at centers, when a target is known
    target: np.ndarray | None = None

    @property
    def t_f(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> np.ndarray:
        return self.operators[-1]

    @property
    def j_plane(self) -> float:
        return float(np.mean(self.diagnostics.f_plane))

    @property
    def j_phase(self) -> float:
        return float(np.mean(self.diagnostics.f_phase))

    @property
    def phi_dot(self) -> np.ndarray:
        """Central-difference speed at each bin center."""
        return np.diff(self.phi) / np.diff(self.times)

    def phi_dot_centered(self, delta: float | None = None) -> np.ndarray:
        """Speed at bin centers from phi(t_c +- delta), both inside the bin.

        H is constant over a bin, so the two samples are exact; the O(delta^2)
        error stays small even where |Tr U| nearly vanishes and phi bends sharply.
        """
        dt = float(self.times[1] - self.times[0])
        delta = 1e-3 * dt if delta is None else delta
        if not 0 < delta <= 0.5 * dt:
            raise ValueError("delta must lie in (0, dt/2]")
        fwd = expm_hermitian(self.hamiltonians, delta) @ self.center_operators
        bwd = expm_hermitian(self.hamiltonians, -delta) @ self.center_operators
        return (opspace.gate_angle_batch(fwd) - opspace.gate_angle_batch(bwd)) / (2 * delta)

    def speed_residual(self, centered: bool = False) -> float:
        """max | |phi_dot| - Delta H sqrt(1-f_plane) sqrt(1-f_phase) | over bins.

        ``centered`` swaps the boundary differences for ``phi_dot_centered``.
        """
        speed = self.phi_dot_centered() if centered else self.phi_dot
        return float(np.max(np.abs(np.abs(speed) - self.diagnostics.predicted_speed)))

    def unitarity_drift(self) -> float:
        u = self.final
        return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))


def trajectory_from_hamiltonians(hs, t_f: float = 1.0, target=None) -> Trajectory:
    hs = np.asarray(hs, dtype=complex)
    n = hs.shape[0]
    dt = t_f / n
    bounds, centers = forward(half_step_propagators(hs, dt))
    dg = qsl.diagnostics_batch(hs, centers)
    phi = opspace.gate_angle_batch(bounds)
    speed = np.abs(np.diff(phi)) / dt
    eta = np.where(dg.delta_h >= TOL.variance, speed / np.where(dg.delta_h > 0, dg.delta_h, 1.0), 0.0)
    eta_bar = float(np.sum(eta) * dt / t_f)
    fid = None
    if target is not None:
        target = np.asarray(target, dtype=complex)
        fid = np.abs(opspace.hs_inner_batch(target[None], centers)) ** 2
    times = np.linspace(0.0, t_f, n + 1)
    return Trajectory(times, (np.arange(n) + 0.5) * dt, bounds, centers, hs, dg, phi, eta,
                      eta_bar, fid, target)


def propagate(model: ControlModel, schedule: ControlSchedule, target=None) -> Trajectory:
    if schedule.values.shape[1] != model.n_controls:
        raise ShapeError(f"schedule has {schedule.values.shape[1]} controls, "
                         f"model expects {model.n_controls}")
    hs = model.build(schedule.values) / schedule.t_f
    return trajectory_from_hamiltonians(hs, schedule.t_f, target)


class PhaseCorrection(NamedTuple):
    phase: float
    extra_time: float


def remove_global_phase(u_final, target, delta_omega: float = 2 * math.pi) -> PhaseCorrection:
    """Phase Arg<target, U> and the duration of an energy shift Delta omega * I removing it.

    The shift has zero energy variance, so it adds nothing to the QSL budget.
    """
    ov = opspace.hs_inner(target, u_final)
    if abs(ov) < 1e-14:
        raise UndefinedPhaseError("zero overlap with target; phase undefined")
    if not delta_omega > 0:
        raise ValueError("delta_omega must be positive")
    phase = float(np.angle(ov))
    return PhaseCorrection(phase, abs(phase / delta_omega))


def apply_phase_correction(u, corr: PhaseCorrection, delta_omega: float = 2 * math.pi) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    sign = math.copysign(1.0, corr.phase) if corr.phase else 0.0
    return step(u, delta_omega * sign * np.eye(u.shape[0]), corr.extra_time) if corr.extra_time > 0 else u.copy()


# ---------------------------------------------------------------------------
# CSV

TRAJECTORY_COLUMNS = ("t", "phi", "eta", "f_plane", "f_phase", "fidelity")


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    phi_c = opspace.gate_angle_batch(traj.center_operators)
    fid = traj.fidelity if traj.fidelity is not None else np.full(traj.centers.shape, np.nan)
    cols = (traj.centers, phi_c, traj.eta, traj.diagnostics.f_plane, traj.diagnostics.f_phase, fid)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for row in zip(*cols):
            w.writerow([f"{x:.17g}" for x in row])
    return path


def write_operator_csv(u, path, target=None) -> Path:
    """Matrix entries; with a target also the phase-aligned U exp(-i Arg<target,U>)."""
    u = np.asarray(u, dtype=complex)
    aligned = u
    if target is not None:
        aligned = u * np.exp(-1j * np.angle(opspace.hs_inner(target, u)))
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im", "re_aligned", "im_aligned"])
        d = u.shape[0]
        for i in range(d):
            for j in range(d):
                w.writerow([i, j, f"{u[i, j].real:.17g}", f"{u[i, j].imag:.17g}",
                            f"{aligned[i, j].real:.17g}", f"{aligned[i, j].imag:.17g}"])
    return path

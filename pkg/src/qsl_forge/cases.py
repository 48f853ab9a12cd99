"""Executable geometric case studies for the speed-limit construction."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import opspace, qsl


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def path_efficiency(us, hs, times) -> np.ndarray:
    """eta at interior samples from central differences of the gate angle."""
    t = np.asarray(times, dtype=float)
    phi = opspace.gate_angle_batch(np.asarray(us))
    phi_dot = (phi[2:] - phi[:-2]) / (t[2:] - t[:-2])
    dh = opspace.energy_variance_batch(np.asarray(hs)[1:-1])
    return np.where(dh > opspace.TOL.variance, np.abs(phi_dot) / np.where(dh > 0, dh, 1.0), 0.0)


def great_arc(n: int = 2001, moving: str = "theta"):
    """One angle sweeps 0 -> 0.9 pi nonuniformly, the other stays 0: eta should be 1."""
    times = np.linspace(0.0, 1.0, n)
    sweep = lambda t: 0.9 * math.pi * (t + t ** 2) / 2  # noqa: E731
    still = lambda t: 0.0  # noqa: E731
    if moving == "theta":
        us, hs = qsl.two_level_path(sweep, still, times)
    elif moving == "varphi":
        us, hs = qsl.two_level_path(still, sweep, times)
    else:
        raise ValueError("moving must be 'theta' or 'varphi'")
    return times, us, hs


def mixed_path(n: int = 2001):
    times = np.linspace(0.0, 1.0, n)
    us, hs = qsl.two_level_path(lambda t: 0.6 * math.pi * t, lambda t: 1.1 * math.pi * t, times)
    return times, us, hs


def _axis(t):
    a = np.array([1.0 + 0.5 * math.sin(2 * t), 0.7 + 0.3 * t, 0.4 + 0.5 * t ** 2])
    return a / np.linalg.norm(a)


def rodrigues_path(axis_fn=_axis, theta_fn=lambda t: 2.0 * t, n: int = 401, h: float = 1e-6):
    """Rotation family with moving axis; returns ``(times, us, hs, f_plane)``."""
    times = np.linspace(0.0, 1.0, n)
    us, hs = [], []
    for t in times:
        ax = axis_fn(t)
        ax_d = (axis_fn(t + h) - axis_fn(t - h)) / (2 * h)
        th_d = (theta_fn(t + h) - theta_fn(t - h)) / (2 * h)
        us.append(qsl.rodrigues_unitary(ax, theta_fn(t)))
        hs.append(qsl.rodrigues_hamiltonian(ax, theta_fn(t), ax_d, th_d))
    us, hs = np.array(us), np.array(hs)
    dg = qsl.diagnostics_batch(hs, us)
    return times, us, hs, dg.f_plane


def two_level_spectrum_times(d: int = 4, energy: float = 1.3):
    """MT and ML minimal times for H = E P with rank(P) = d/2 and target exp(-i pi P)."""
    if d % 2:
        raise ValueError("d must be even")
    evals = np.array([0.0] * (d // 2) + [energy] * (d // 2))
    h = np.diag(evals).astype(complex)
    target = np.diag(np.exp(-1j * evals * math.pi / energy))
    t_mt = qsl.mt_min_time(target, opspace.energy_variance(h))
    t_ml = qsl.ml_min_time(qsl.MlBoundInput.from_target(evals, target), opspace.mean_energy(h))
    return t_mt, t_ml, math.pi / energy


def run_all() -> list[Check]:
    out = []

    for moving in ("theta", "varphi"):
        t, us, hs = great_arc(moving=moving)
        eta = path_efficiency(us, hs, t)
        dev = float(np.max(np.abs(eta - 1.0)))
        out.append(Check(f"great-arc ({moving} only) eta = 1", dev <= 1e-6, dev, 1e-6, "max |eta - 1|"))

    _, us, hs = mixed_path()
    eta = path_efficiency(us, hs, t)
    gap = float(1.0 - np.min(eta))
    out.append(Check("mixed 2-D path eta < 1", gap > 1e-6, gap, 1e-6, "1 - min eta"))

    _, _, _, fp = rodrigues_path()
    out.append(Check("Rodrigues path off the plane", float(fp.max()) > 1e-6, float(fp.max()), 1e-6,
                     "max f_plane"))

    for row in qsl.brachistochrone_report():
        want = {"SWAP": math.pi / 3, '"QFT"': math.acos(1 / math.sqrt(8))}[row["gate"]]
        rel = abs(row["t_qsl"] - want) / want
        out.append(Check(f"brachistochrone {row['gate']} T_QSL", rel <= 1e-3, rel, 1e-3,
                         f"T_QSL={row['t_qsl']:.6f} T_BRA={row['t_bra']:.6f}"))
        out.append(Check(f"brachistochrone {row['gate']} T_QSL < T_BRA", row["ratio"] < 1,
                         row["ratio"], 1.0, "ratio"))

    t_mt, t_ml, t_exact = two_level_spectrum_times()
    diff = abs(t_mt - t_ml)
    out.append(Check("ML = MT for two-level spectrum", diff <= 1e-9, diff, 1e-9,
                     f"T_MT={t_mt:.12f} T_ML={t_ml:.12f} reached at {t_exact:.12f}"))
    return out

"""Dense operator algebra on small Hilbert spaces.

All functions accept single ``(d, d)`` matrices; the batched helpers
(``*_batch``) also accept stacks of shape ``(..., d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    unitarity: float = 1e-9
    hermiticity: float = 1e-12
    variance: float = 1e-12


TOL = Tolerances()


class ShapeError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PerpDecomposition:
    """``h @ u = lambda_par * u + lambda_perp_mag * u_perp``."""

    lambda_par: complex
    lambda_perp_mag: float
    u_perp: np.ndarray | None


def _square(a, name="matrix"):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {a.shape}")
    return a


def _same_dim(a, b):
    a = _square(a, "a")
    b = _square(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def hs_inner(a, b) -> complex:
    """Normalized Hilbert-Schmidt product Tr[a^dagger b] / d."""
    a, b = _same_dim(a, b)
    return complex(np.vdot(a, b) / a.shape[0])


def hs_inner_batch(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    d = a.shape[-1]
    return np.einsum("...ij,...ij->...", a.conj(), b) / d


def is_hermitian(h, tol: float = TOL.hermiticity) -> bool:
    h = np.asarray(h)
    return bool(np.max(np.abs(h - np.swapaxes(h, -1, -2).conj()), initial=0.0) <= tol)


def is_unitary(u, tol: float = TOL.unitarity) -> bool:
    u = np.asarray(u)
    d = u.shape[-1]
    return bool(np.max(np.abs(np.swapaxes(u, -1, -2).conj() @ u - np.eye(d)), initial=0.0) <= tol)


def require_hermitian(h, tol: float = TOL.hermiticity) -> np.ndarray:
    h = _square(h, "h")
    if not is_hermitian(h, tol):
        raise ValidationError("operator is not Hermitian within tolerance")
    return h


def mean_energy(h) -> float:
    h = require_hermitian(h)
    return float(np.trace(h).real / h.shape[0])


def energy_variance(h) -> float:
    """Energy spread sqrt(<h^2> - <h>^2) for the maximally mixed weighting."""
    h = require_hermitian(h)
    d = h.shape[0]
    # centering first avoids cancellation between <h^2> and <h>^2
    c = h - (np.trace(h).real / d) * np.eye(d)
    radicand = float(np.vdot(c, c).real / d)
    if radicand < -TOL.variance:
        raise NumericalError(f"negative variance {radicand}")
    return float(np.sqrt(max(radicand, 0.0)))


def energy_variance_batch(h):
    h = np.asarray(h)
    d = h.shape[-1]
    mean = np.trace(h, axis1=-2, axis2=-1).real / d
    c = h - mean[..., None, None] * np.eye(d)
    return np.sqrt(np.maximum(np.einsum("...ij,...ij->...", c.conj(), c).real / d, 0.0))


def perp_decompose(h, u) -> PerpDecomposition:
    h, u = _same_dim(h, u)
    d = h.shape[0]
    lam = np.trace(h) / d
    dh = energy_variance(h)
    if dh < TOL.variance:
        return PerpDecomposition(complex(lam), dh, None)
    u_perp = (h - lam * np.eye(d)) @ u / dh
    return PerpDecomposition(complex(lam), dh, u_perp)


def gate_angle(u) -> float:
    """Angle arccos|<I, u>| between the identity and ``u``, in [0, pi/2]."""
    u = _square(u, "u")
    return float(gate_angle_batch(u))


def gate_angle_batch(u):
    # atan2 of (sin, cos) keeps resolution near phi = 0 where arccos is flat
    u = np.asarray(u)
    d = u.shape[-1]
    overlap = np.trace(u, axis1=-2, axis2=-1) / d
    resid = u - overlap[..., None, None] * np.eye(d)
    sin_phi = np.sqrt(np.einsum("...ij,...ij->...", resid.conj(), resid).real / d)
    return np.arctan2(sin_phi, np.abs(overlap))


def gate_fidelity(u, target) -> float:
    u, target = _same_dim(u, target)
    return float(abs(hs_inner(target, u)) ** 2)


def pack(u) -> np.ndarray:
    """Row-major real parts followed by row-major imaginary parts."""
    u = _square(u, "u")
    return np.concatenate([u.real.ravel(), u.imag.ravel()])


def unpack(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0 or x.size % 2:
        raise ShapeError(f"packed state must be a 1-D vector of length 2 d^2, got {x.shape}")
    d = int(round(np.sqrt(x.size // 2)))
    if 2 * d * d != x.size:
        raise ShapeError(f"length {x.size} is not 2 d^2 for any integer d")
    half = d * d
    return (x[:half] + 1j * x[half:]).reshape(d, d)

"""Control parametrizations: coupling layouts, schedules and the CRAB ansatz."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .opspace import ShapeError


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Coupling:
    kind: str  # "detuning" | "rabi_real" | "rabi_imag"
    i: int
    j: int

    @property
    def name(self) -> str:
        tag = {"detuning": "Delta", "rabi_real": "OmegaR", "rabi_imag": "OmegaI"}[self.kind]
        return f"{tag}_{self.i + 1}{self.j + 1}"

    def matrix(self, d: int) -> np.ndarray:
        m = np.zeros((d, d), dtype=complex)
        i, j = self.i, self.j
        if self.kind == "detuning":
            m[i, i] = 1.0
        elif self.kind == "rabi_real":
            m[j, i] = m[i, j] = 1.0
        elif self.kind == "rabi_imag":
            # (i Omega^I)|j><i| + h.c.
            m[j, i] = 1j
            m[i, j] = -1j
        else:
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        return m


def full_layout(d: int) -> tuple[Coupling, ...]:
    """Detunings, then real Rabi, then imaginary Rabi; pairs i<j in lexical order."""
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    return (tuple(Coupling("detuning", i, i) for i in range(d))
            + tuple(Coupling("rabi_real", i, j) for i, j in pairs)
            + tuple(Coupling("rabi_imag", i, j) for i, j in pairs))


@dataclass(frozen=True)
class ControlModel:
    dim: int
    layout: tuple[Coupling, ...]
    mask: tuple[bool, ...]
    frozen_values: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.mask) != len(self.layout):
            raise ShapeError("mask length must match layout")
        n_frozen = len(self.layout) - sum(self.mask)
        fv = self.frozen_values or (0.0,) * n_frozen
        if len(fv) != n_frozen:
            raise ShapeError(f"expected {n_frozen} frozen values, got {len(fv)}")
        object.__setattr__(self, "frozen_values", tuple(float(x) for x in fv))
        basis = np.array([c.matrix(self.dim) for c in self.layout])
        act = np.array(self.mask, dtype=bool)
        frozen_h = np.einsum("k,kij->ij", np.array(self.frozen_values), basis[~act]) \
            if n_frozen else np.zeros((self.dim, self.dim), dtype=complex)
        object.__setattr__(self, "_active_basis", basis[act])
        object.__setattr__(self, "_frozen_h", frozen_h)

    @classmethod
    def full(cls, d: int = 4) -> "ControlModel":
        layout = full_layout(d)
        return cls(d, layout, (True,) * len(layout))

    @classmethod
    def limited7(cls) -> "ControlModel":
        """Only Delta_11 and the six real Rabi couplings of a 4-level system."""
        layout = full_layout(4)
        mask = tuple((c.kind == "detuning" and c.i == 0) or c.kind == "rabi_real" for c in layout)
        return cls(4, layout, mask)

    @classmethod
    def from_active_names(cls, d: int, names, frozen: dict | None = None) -> "ControlModel":
        layout = full_layout(d)
        known = {c.name for c in layout}
        unknown = set(names) - known
        if unknown:
            raise KeyError(f"unknown coupling names {sorted(unknown)}")
        frozen = frozen or {}
        mask = tuple(c.name in names for c in layout)
        fv = tuple(float(frozen.get(c.name, 0.0)) for c in layout if c.name not in names)
        return cls(d, layout, mask, fv)

    @property
    def n_controls(self) -> int:
        return int(sum(self.mask))

    @property
    def active_names(self) -> list[str]:
        return [c.name for c, m in zip(self.layout, self.mask) if m]

    @property
    def active_basis(self) -> np.ndarray:
        """Array ``(M, d, d)`` with ``dH/dv_k`` for each active control."""
        return self._active_basis

    def build(self, v) -> np.ndarray:
        """Hamiltonian(s) for control vector(s) ``v`` of shape ``(..., M)``."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.n_controls,):
            raise ShapeError(f"expected {self.n_controls} controls, got shape {v.shape}")
        return np.einsum("...k,kij->...ij", v, self._active_basis) + self._frozen_h


def build_hamiltonian(model: ControlModel, v) -> np.ndarray:
    return model.build(v)


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant controls; row ``m`` holds bin ``m`` (units 1/t_f)."""

    values: np.ndarray
    t_f: float = 1.0
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ShapeError(f"schedule values must be (n_t, M), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("schedule contains non-finite values")
        if not self.t_f > 0:
            raise DomainError("t_f must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.names and len(self.names) != v.shape[1]:
            raise ShapeError("names must match the number of controls")

    @property
    def n_t(self) -> int:
        return self.values.shape[0]

    @property
    def dt(self) -> float:
        return self.t_f / self.n_t

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_t) + 0.5) * self.dt

    @classmethod
    def constant(cls, n_t: int, model: ControlModel, value: float = 0.01, t_f: float = 1.0):
        return cls(np.full((n_t, model.n_controls), value), t_f, tuple(model.active_names))

    def with_values(self, values) -> "ControlSchedule":
        return replace(self, values=values)


def smooth(schedule: ControlSchedule, block: int) -> ControlSchedule:
    """Replace each block of ``block`` bins by its mean (trailing block as-is)."""
    if block <= 0:
        raise DomainError("block must be a positive integer")
    v = schedule.values
    out = np.empty_like(v)
    for start in range(0, schedule.n_t, block):
        out[start:start + block] = v[start:start + block].mean(axis=0)
    return schedule.with_values(out)


def interpolate(schedule: ControlSchedule, fine_dt: float) -> ControlSchedule:
    """Piecewise-linear resample through bin centers onto bins of width ``fine_dt``."""
    if not fine_dt > 0:
        raise DomainError("fine_dt must be positive")
    if fine_dt > schedule.dt * (1 + 1e-12):
        raise DomainError("fine_dt must not exceed the source bin width")
    n_fine = int(round(schedule.t_f / fine_dt))
    t_fine = (np.arange(n_fine) + 0.5) * (schedule.t_f / n_fine)
    src_t = schedule.centers
    cols = [np.interp(t_fine, src_t, schedule.values[:, k]) for k in range(schedule.values.shape[1])]
    return schedule.with_values(np.stack(cols, axis=1))


def resample(schedule: ControlSchedule, n_t: int) -> ControlSchedule:
    """Linear resample onto ``n_t`` bins (any direction)."""
    t_new = (np.arange(n_t) + 0.5) * (schedule.t_f / n_t)
    cols = [np.interp(t_new, schedule.centers, schedule.values[:, k])
            for k in range(schedule.values.shape[1])]
    return schedule.with_values(np.stack(cols, axis=1))


# ---------------------------------------------------------------------------
# CRAB


def crab_frequencies(n_modes: int, n_couplings: int, rng_seed: int, t_f: float = 1.0) -> np.ndarray:
    """Table ``(n_couplings, n_modes)`` of omega_{i,n} = (n pi + 2 pi delta_{i,n}) / t_f."""
    if n_modes < 1:
        raise DomainError("n_modes must be >= 1")
    rng = np.random.default_rng(rng_seed)
    delta = rng.uniform(0.0, 1.0, size=(n_couplings, n_modes))
    n = np.arange(1, n_modes + 1)
    return (n * math.pi + 2.0 * math.pi * delta) / t_f


@dataclass(frozen=True)
class CrabAnsatz:
    """Fourier ansatz with fixed randomized frequencies.

    ``coefficients[i]`` is ``(A_0, A_1..A_N, B_1..B_N)`` for coupling ``i``.
    """

    n_modes: int
    n_couplings: int
    rng_seed: int
    coefficients: np.ndarray
    t_f: float = 1.0
    frequencies: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).reshape(self.n_couplings, 2 * self.n_modes + 1)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        f = crab_frequencies(self.n_modes, self.n_couplings, self.rng_seed, self.t_f)
        f.setflags(write=False)
        object.__setattr__(self, "frequencies", f)

    @classmethod
    def initial(cls, n_modes: int, n_couplings: int, rng_seed: int, a0: float = 0.01, t_f: float = 1.0):
        c = np.zeros((n_couplings, 2 * n_modes + 1))
        c[:, 0] = a0
        return cls(n_modes, n_couplings, rng_seed, c, t_f)

    @property
    def n_variables(self) -> int:
        return (2 * self.n_modes + 1) * self.n_couplings

    def with_coefficients(self, flat) -> "CrabAnsatz":
        return CrabAnsatz(self.n_modes, self.n_couplings, self.rng_seed, np.asarray(flat), self.t_f)

    def evaluate(self, t) -> np.ndarray:
        """Control values, shape ``(len(t), n_couplings)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = self.n_modes
        a0 = self.coefficients[:, 0]
        a = self.coefficients[:, 1:n + 1]
        b = self.coefficients[:, n + 1:]
        ph = t[:, None, None] * self.frequencies[None]
        return a0 + np.sum(a * np.cos(ph) + b * np.sin(ph), axis=-1)

    def to_schedule(self, n_t: int, names=()) -> ControlSchedule:
        centers = (np.arange(n_t) + 0.5) * (self.t_f / n_t)
        return ControlSchedule(self.evaluate(centers), self.t_f, tuple(names))


def crab_evaluate(ansatz: CrabAnsatz, coupling_index: int, t: float) -> float:
    return float(ansatz.evaluate([t])[0, coupling_index])


# ---------------------------------------------------------------------------
# CSV


def write_schedule_csv(schedule: ControlSchedule, path) -> Path:
    path = Path(path)
    names = schedule.names or tuple(f"v{k}" for k in range(schedule.values.shape[1]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *names])
        for t, row in zip(schedule.centers, schedule.values):
            w.writerow([f"{t:.17g}", *(f"{x:.17g}" for x in row)])
    return path


def read_schedule_csv(path, t_f: float | None = None) -> ControlSchedule:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["t"]:
        raise ValueError(f"{path}: missing 't,...' header")
    body = np.array([[float(x) for x in r] for r in rows[1:]])
    if body.size == 0:
        raise ValueError(f"{path}: no data rows")
    centers = body[:, 0]
    if t_f is None:
        t_f = float(2 * centers[0] * len(centers))
    return ControlSchedule(body[:, 1:], t_f, tuple(rows[0][1:]))

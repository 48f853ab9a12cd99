"""Geometric gate optimization: PMP adjoint-gradient ascent and CRAB direct search.

The cost is

    J = (1 - F) + (1/t_f) int (p1 f_plane + p2 f_phase) dt,

with the running costs sampled at bin centers (midpoint rule).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize as sopt

from . import opspace, qsl
from .controls import ControlModel, ControlSchedule, CrabAnsatz, interpolate, resample, smooth
from .opspace import ShapeError
from .propagate import (PhaseCorrection, Trajectory, forward, half_step_propagators, propagate,
                        remove_global_phase)

log = logging.getLogger(__name__)


class OptimizationAborted(RuntimeError):
    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


@dataclass(frozen=True)
class CostWeights:
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        for p in (self.p1, self.p2):
            if not (math.isfinite(p) and p >= 0):
                raise ValueError(f"weights must be finite and nonnegative, got {self.p1, self.p2}")


@dataclass(frozen=True)
class StepPolicy:
    epsilon0: float = 0.25
    growth: float = 1.5
    growth_every: int = 15
    shrink: float = 0.9
    mode: str = "fixed"
    min_epsilon: float = 1e-6
    # adaptive only.  True: a cost-raising step is undone.  False: it is kept,
    # and the run returns the lowest-cost iterate it visited.
    reject: bool = False

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown step mode {self.mode!r}")
        if not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")


@dataclass
class CostBreakdown:
    J: float
    fidelity: float
    j_plane: float
    j_phase: float


@dataclass
class OptimizationResult:
    schedule: ControlSchedule            # optimized controls on the optimization grid
    fine_schedule: ControlSchedule       # smoothed, interpolated controls used for verification
    trajectory: Trajectory               # fine re-propagation
    fidelity: float
    j_plane: float
    j_phase: float
    eta_bar: float
    cost_history: list[dict]
    iterations_used: int
    phase: PhaseCorrection
    optimizer: str
    coarse: CostBreakdown
    budget_exhausted: bool = False
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "optimizer": self.optimizer,
            "fidelity": self.fidelity,
            "j_plane": self.j_plane,
            "j_phase": self.j_phase,
            "eta_bar": self.eta_bar,
            "iterations_used": self.iterations_used,
            "budget_exhausted": self.budget_exhausted,
            "global_phase": self.phase.phase,
            "phase_stage_time": self.phase.extra_time,
            "coarse": vars(self.coarse),
            **self.extras,
        }


# ---------------------------------------------------------------------------
# cost


def evaluate_cost(model: ControlModel, values, target, weights: CostWeights, t_f: float = 1.0) -> CostBreakdown:
    """Cost of a control array ``(n_t, M)``; the path shared by both optimizers."""
    values = np.asarray(values, dtype=float)
    hs = model.build(values) / t_f
    n = hs.shape[0]
    bounds, centers = forward(half_step_propagators(hs, t_f / n))
    dg = qsl.diagnostics_batch(hs, centers)
    fid = abs(opspace.hs_inner(target, bounds[-1])) ** 2
    jp = float(np.mean(dg.f_plane))
    jh = float(np.mean(dg.f_phase))
    return CostBreakdown(1.0 - fid + weights.p1 * jp + weights.p2 * jh, fid, jp, jh)


def total_cost(model: ControlModel, schedule: ControlSchedule, target, weights: CostWeights):
    """Return ``(J, fidelity, j_plane, j_phase)``."""
    if schedule.values.shape[1] != model.n_controls:
        raise ShapeError("schedule does not match the model's active controls")
    c = evaluate_cost(model, schedule.values, target, weights, schedule.t_f)
    return c.J, c.fidelity, c.j_plane, c.j_phase


# ---------------------------------------------------------------------------
# PMP


def terminal_adjoint(u_final, target) -> np.ndarray:
    """U^P(t_f) = (2/d) <U_target, U(t_f)> U_target."""
    target = np.asarray(target, dtype=complex)
    d = target.shape[0]
    return (2.0 / d) * opspace.hs_inner(target, u_final) * target


def adjoint_backprop(half_props, center_ops, hamiltonians, target, u_final, weights: CostWeights,
                     t_f: float = 1.0) -> np.ndarray:
    """Adjoint operator at each bin center, integrated backward from t_f.

    Per bin: exact back-propagation over half a bin, then half of the running-cost
    source; the other half of the source is applied before the next half step.
    """
    n = center_ops.shape[0]
    w_half = 0.5 / n  # (dt / t_f) / 2
    if weights.p1 or weights.p2:
        src = qsl.running_cost_partials(hamiltonians, center_ops, weights.p1, weights.p2).wirtinger(hamiltonians)
    else:
        src = None
    lam = terminal_adjoint(u_final, target)
    p_centers = np.empty_like(center_ops)
    back = np.swapaxes(half_props, -1, -2).conj()
    for m in range(n - 1, -1, -1):
        p = back[m] @ lam
        if src is not None:
            p = p - w_half * src[m]
        p_centers[m] = p
        lam = back[m] @ (p - w_half * src[m]) if src is not None else back[m] @ p
    return p_centers


def pontryagin_gradient(model: ControlModel, u_bin, p_bin, v_bin, weights: CostWeights,
                        t_f: float = 1.0) -> np.ndarray:
    """Gradient of the Pontryagin Hamiltonian with respect to the controls.

    ``H_P = -(1/t_f) f0(U, H(v)) + Re Tr[U_P^+ (-i H(v)) U]``.  Inputs may be
    stacked over bins: ``u_bin, p_bin`` of shape ``(N, d, d)``, ``v_bin`` ``(N, M)``.
    """
    u = np.asarray(u_bin, dtype=complex)
    p = np.asarray(p_bin, dtype=complex)
    v = np.asarray(v_bin, dtype=float)
    single = u.ndim == 2
    if single:
        u, p, v = u[None], p[None], v[None]
    basis = model.active_basis / t_f
    h = model.build(v) / t_f
    d = u.shape[-1]
    # Re Tr[P^+ (-i E) U] = Im Tr[E U P^+]
    up = u @ np.swapaxes(p, -1, -2).conj()
    grad = np.einsum("kij,mji->mk", basis, up).imag
    if weights.p1 or weights.p2:
        cp = qsl.running_cost_partials(h, u, weights.p1, weights.p2)
        tr_eu = np.einsum("kij,mji->mk", basis, u)
        tr_e = np.trace(basis, axis1=-2, axis2=-1).real / d
        tr_eh = np.einsum("kij,mji->mk", basis, h).real
        df0 = (cp.g_br[:, None] * tr_eu.real + cp.g_bi[:, None] * tr_eu.imag
               + cp.g_h1[:, None] * tr_e[None] + cp.g_h2[:, None] * 2.0 * tr_eh / d)
        grad = grad - df0 / t_f
    return grad[0] if single else grad


@dataclass
class SweepResult:
    cost: CostBreakdown
    gradient: np.ndarray   # dH_P/dv per bin, (N, M)
    center_ops: np.ndarray
    adjoints: np.ndarray


def _expm_derivative_kernel(w, tau):
    """Divided differences of exp(-i lambda tau) over eigenvalue pairs, ``(N, d, d)``."""
    e = np.exp(-1j * tau * w)
    dw = w[:, :, None] - w[:, None, :]
    de = e[:, :, None] - e[:, None, :]
    close = np.abs(dw) < 1e-9
    diag = -1j * tau * 0.5 * (e[:, :, None] + e[:, None, :])
    return np.where(close, diag, de / np.where(close, 1.0, dw))


def pmp_sweep(model: ControlModel, values, target, weights: CostWeights, t_f: float = 1.0,
              gradient: str = "exact") -> SweepResult:
    """One forward + backward pass: cost and per-bin Pontryagin gradient.

    With ``gradient="exact"`` the result is the bin average of dH_P/dv: the
    Hamiltonian part is integrated exactly over each constant-control bin
    (derivative of the bin propagator), so that ``dJ/dv = -(t_f/N) * gradient``
    holds to rounding.  ``"midpoint"`` samples dH_P/dv at bin centers instead,
    which agrees up to O(dt^2).
    """
    if gradient not in ("exact", "midpoint"):
        raise ValueError(f"unknown gradient mode {gradient!r}")
    values = np.asarray(values, dtype=float)
    target = np.asarray(target, dtype=complex)
    hs = model.build(values) / t_f
    n, d = hs.shape[0], hs.shape[-1]
    dt = t_f / n
    w_run = 1.0 / n
    lam_e, vecs = np.linalg.eigh(hs)
    vh = np.swapaxes(vecs, -1, -2).conj()
    halves = (vecs * np.exp(-0.5j * dt * lam_e)[:, None, :]) @ vh
    bounds, centers = forward(halves)
    dg = qsl.diagnostics_batch(hs, centers)
    fid = abs(opspace.hs_inner(target, bounds[-1])) ** 2
    jp = float(np.mean(dg.f_plane))
    jh = float(np.mean(dg.f_phase))
    cost = CostBreakdown(1.0 - fid + weights.p1 * jp + weights.p2 * jh, fid, jp, jh)

    running = bool(weights.p1 or weights.p2)
    if running:
        cp = qsl.running_cost_partials(hs, centers, weights.p1, weights.p2)
        src = cp.wirtinger(hs)
    # exact discrete adjoint at bin boundaries
    back = np.swapaxes(halves, -1, -2).conj()
    lam = np.empty_like(bounds)
    lam[n] = terminal_adjoint(bounds[n], target)
    for m in range(n - 1, -1, -1):
        p = back[m] @ lam[m + 1]
        if running:
            p = p - w_run * src[m]
        lam[m] = back[m] @ p

    if gradient == "midpoint":
        adj = np.einsum("nij,njk->nik", back, lam[1:])
        if running:
            adj = adj - 0.5 * w_run * src
        return SweepResult(cost, pontryagin_gradient(model, centers, adj, values, weights, t_f),
                           centers, adj)

    basis = model.active_basis / t_f
    e_eig = np.einsum("nij,kjl,nlm->nkim", vh, basis, vecs)
    prev = bounds[:-1]
    x_full = vh @ prev @ np.swapaxes(lam[1:], -1, -2).conj() @ vecs
    kern = _expm_derivative_kernel(lam_e, dt)
    neg_dj = np.einsum("nji,nkij->nk", x_full, e_eig * kern[:, None]).real
    if running:
        x_half = vh @ prev @ np.swapaxes(src, -1, -2).conj() @ vecs
        kern_h = _expm_derivative_kernel(lam_e, 0.5 * dt)
        neg_dj -= w_run * np.einsum("nji,nkij->nk", x_half, e_eig * kern_h[:, None]).real
        tr_eu = np.einsum("kij,mji->mk", basis, centers)
        tr_e = np.trace(basis, axis1=-2, axis2=-1).real / d
        tr_eh = np.einsum("kij,mji->mk", basis, hs).real
        df0 = (cp.g_br[:, None] * tr_eu.real + cp.g_bi[:, None] * tr_eu.imag
               + cp.g_h1[:, None] * tr_e[None] + cp.g_h2[:, None] * 2.0 * tr_eh / d)
        neg_dj -= w_run * df0
    # adjoint at centers for reporting: half-step back from the boundary plus half the source
    adj = np.einsum("nij,njk->nik", back, lam[1:])
    if running:
        adj = adj - 0.5 * w_run * src
    return SweepResult(cost, neg_dj / dt, centers, adj)


def cost_gradient(model: ControlModel, values, target, weights: CostWeights, t_f: float = 1.0):
    """dJ/dv per bin entry, i.e. ``-(t_f / N) dH_P/dv``."""
    sw = pmp_sweep(model, values, target, weights, t_f)
    return -(t_f / np.asarray(values).shape[0]) * sw.gradient


def _history_row(it, cost: CostBreakdown, eps, accepted=True):
    return {"iter": it, "J": cost.J, "fidelity": cost.fidelity, "j_plane": cost.j_plane,
            "j_phase": cost.j_phase, "epsilon": eps, "accepted": accepted}


def finalize(model: ControlModel, schedule: ControlSchedule, target, *, smooth_block: int | None = 20,
             fine_dt: float | None = 1e-4, fine_n_t: int | None = None,
             delta_omega: float = 2 * math.pi):
    """Smoothing, fine interpolation, re-propagation and phase removal."""
    s = schedule
    if smooth_block and smooth_block > 1:
        s = smooth(s, smooth_block)
    if fine_n_t is not None:
        s = resample(s, fine_n_t)
    elif fine_dt is not None and fine_dt < s.dt:
        s = interpolate(s, fine_dt * s.t_f)
    traj = propagate(model, s, target)
    try:
        corr = remove_global_phase(traj.final, target, delta_omega / s.t_f)
    except ArithmeticError:
        corr = PhaseCorrection(0.0, 0.0)
    return s, traj, corr


def pmp_optimize(model: ControlModel, target, weights: CostWeights, policy: StepPolicy | None = None,
                 n_iters: int = 200, n_t: int = 1000, *, t_f: float = 1.0, initial=None,
                 initial_value: float = 0.01, smooth_block: int | None = 20,
                 fine_dt: float | None = 1e-4, gradient: str = "exact",
                 callback: Callable[[int, CostBreakdown, float], None] | None = None) -> OptimizationResult:
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    policy = policy or StepPolicy()
    target = np.asarray(target, dtype=complex)
    v = (np.full((n_t, model.n_controls), initial_value / 1.0) if initial is None
         else np.array(initial, dtype=float))
    eps = policy.epsilon0

    if not np.all(np.isfinite(v)):
        raise OptimizationAborted("non-finite initial controls", {"iteration": 0})
    with np.errstate(all="ignore"):
        sw = pmp_sweep(model, v, target, weights, t_f, gradient)
    if not math.isfinite(sw.cost.J):
        raise OptimizationAborted("non-finite initial cost", {"iteration": 0, "epsilon": eps})
    history = [_history_row(0, sw.cost, eps, True)]
    best_v, best = v, sw.cost
    keep_best = policy.mode == "adaptive" and not policy.reject
    used = 0
    for it in range(1, n_iters + 1):
        used = it
        trial = v + eps * sw.gradient
        snapshot = {"iteration": it, "epsilon": eps, "last_cost": sw.cost.J,
                    "last_fidelity": sw.cost.fidelity}
        if not np.all(np.isfinite(trial)):
            raise OptimizationAborted(f"non-finite controls at iteration {it}", snapshot)
        with np.errstate(all="ignore"):
            try:
                new = pmp_sweep(model, trial, target, weights, t_f, gradient)
            except (np.linalg.LinAlgError, ArithmeticError) as exc:
                raise OptimizationAborted(f"propagation failed at iteration {it}: {exc}", snapshot) from exc
        if not (math.isfinite(new.cost.J) and np.all(np.isfinite(new.gradient))):
            raise OptimizationAborted(f"non-finite cost at iteration {it}", snapshot)
        increased = new.cost.J > sw.cost.J
        if policy.mode == "adaptive" and increased:
            eps *= policy.shrink
        if not (increased and policy.mode == "adaptive" and policy.reject):
            v, sw = trial, new
        if policy.mode == "adaptive" and it % policy.growth_every == 0:
            eps *= policy.growth
        if keep_best:
            accepted = sw.cost.J < best.J
        else:
            accepted = sw is new
        if accepted and sw.cost.J <= best.J:
            best_v, best = v, sw.cost
        history.append(_history_row(it, sw.cost, eps, accepted))
        if callback:
            callback(it, sw.cost, eps)
        if eps < policy.min_epsilon:
            log.info("step size underflow at iteration %d", it)
            break

    if keep_best:
        v = best_v
    else:
        best = sw.cost
    try:
        with np.errstate(over="raise", invalid="raise"):
            sched = ControlSchedule(v, t_f, tuple(model.active_names))
            fine, traj, corr = finalize(model, sched, target, smooth_block=smooth_block, fine_dt=fine_dt)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise OptimizationAborted(f"verification pass failed: {exc}",
                                  {"iteration": used, "epsilon": eps, "last_cost": best.J}) from exc
    return OptimizationResult(
        schedule=sched, fine_schedule=fine, trajectory=traj,
        fidelity=float(abs(opspace.hs_inner(target, traj.final)) ** 2),
        j_plane=traj.j_plane, j_phase=traj.j_phase, eta_bar=traj.eta_bar,
        cost_history=history, iterations_used=used, phase=corr, optimizer="pmp",
        coarse=best,
    )


# ---------------------------------------------------------------------------
# CRAB


def crab_optimize(model: ControlModel, target, weights: CostWeights, *, n_modes: int = 10,
                  rng_seed: int = 0, eval_budget: int = 10000, n_t: int = 100, t_f: float = 1.0,
                  method: str = "powell", fine_n_t: int = 10000, a0: float = 0.01,
                  initial: CrabAnsatz | None = None) -> OptimizationResult:
    """Direct-search minimization of J over the CRAB Fourier coefficients.

    ``method`` is ``"powell"`` (default) or ``"nelder-mead"``; both are
    derivative-free and deterministic.  One iteration is one cost evaluation.
    """
    target = np.asarray(target, dtype=complex)
    ansatz = initial or CrabAnsatz.initial(n_modes, model.n_controls, rng_seed, a0, t_f)
    x0 = ansatz.coefficients.ravel().copy()
    centers = (np.arange(n_t) + 0.5) * (t_f / n_t)
    n = ansatz.n_modes
    ph = centers[:, None, None] * ansatz.frequencies[None]
    cos_t, sin_t = np.cos(ph), np.sin(ph)

    def controls(x):
        c = x.reshape(ansatz.n_couplings, 2 * n + 1)
        return c[:, 0] + np.sum(c[:, 1:n + 1] * cos_t + c[:, n + 1:] * sin_t, axis=-1)

    state = {"n": 0, "best": math.inf, "best_x": x0.copy(), "history": []}

    class _Budget(Exception):
        pass

    def objective(x):
        if state["n"] >= max(eval_budget, 1):
            raise _Budget
        state["n"] += 1
        c = evaluate_cost(model, controls(x), target, weights, t_f)
        if not math.isfinite(c.J):
            return math.inf
        if c.J < state["best"]:
            state["best"], state["best_x"] = c.J, x.copy()
            state["history"].append({**_history_row(state["n"], c, 0.0)})
        return c.J

    exhausted = False
    if eval_budget <= 0:
        objective(x0)
        exhausted = True
    else:
        try:
            if method == "powell":
                sopt.minimize(objective, x0, method="Powell",
                              options={"maxfev": eval_budget, "xtol": 1e-8, "ftol": 1e-12})
            elif method == "nelder-mead":
                _restarting_nelder_mead(objective, x0, eval_budget, state)
            else:
                raise ValueError(f"unknown direct-search method {method!r}")
        except _Budget:
            exhausted = True
        exhausted = exhausted or state["n"] >= eval_budget

    best = ansatz.with_coefficients(state["best_x"])
    sched = ControlSchedule(controls(state["best_x"]), t_f, tuple(model.active_names))
    coarse = evaluate_cost(model, sched.values, target, weights, t_f)
    fine, traj, corr = finalize(model, sched, target, smooth_block=None, fine_n_t=fine_n_t)
    return OptimizationResult(
        schedule=sched, fine_schedule=fine, trajectory=traj,
        fidelity=float(abs(opspace.hs_inner(target, traj.final)) ** 2),
        j_plane=traj.j_plane, j_phase=traj.j_phase, eta_bar=traj.eta_bar,
        cost_history=state["history"], iterations_used=state["n"], phase=corr,
        optimizer="crab", coarse=coarse, budget_exhausted=exhausted,
        extras={"n_modes": ansatz.n_modes, "rng_seed": ansatz.rng_seed,
                "n_variables": ansatz.n_variables, "method": method,
                "coefficients": best.coefficients.tolist()},
    )


def _restarting_nelder_mead(objective, x0, budget, state, step=0.05):
    x = x0
    while state["n"] < budget:
        before = state["best"]
        simplex = np.vstack([x, x + step * np.eye(x.size)])
        sopt.minimize(objective, x, method="Nelder-Mead",
                      options={"maxfev": budget - state["n"], "adaptive": True,
                               "initial_simplex": simplex, "xatol": 1e-10, "fatol": 1e-14})
        x = state["best_x"]
        if not state["best"] < before - 1e-14:
            break

"""State-to-state pulse synthesis by gradient ascent on the noiseless fidelity."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .lindblad import ControlPulse, segment_hamiltonian
from .spinalg import ModelSystem, lie_closure_rank

log = logging.getLogger(__name__)

DEGENERATE_GAP = 1e-10


@dataclass(frozen=True)
class SynthesisConfig:
    t_total: float
    n_seg: int | None = None
    max_iter: int = 500
    fidelity_goal: float = 0.999
    amplitude_penalty: float = 0.0
    seed: int = 0
    u_init_scale: float = 0.1
    max_seg_phase: float = 0.5

    def __post_init__(self):
        if not self.t_total > 0:
            raise ValueError("t_total must be positive")
        if self.n_seg is not None and self.n_seg < 1:
            raise ValueError("n_seg must be >= 1")
        if not 0 < self.fidelity_goal <= 1:
            raise ValueError("fidelity_goal must be in (0, 1]")
        if self.amplitude_penalty < 0:
            raise ValueError("amplitude_penalty must be nonnegative")

    def segments_for(self, model: ModelSystem) -> int:
        """Explicit ``n_seg``, or enough segments that dt |H0| <= max_seg_phase."""
        if self.n_seg is not None:
            return self.n_seg
        norm = float(np.max(np.abs(model.eigen_values))) if model.dim else 0.0
        return max(1, math.ceil(self.t_total * norm / self.max_seg_phase))


@dataclass(frozen=True)
class SynthesisResult:
    pulse: ControlPulse
    fidelity: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = ()


def _segment_eig(model: ModelSystem, values: np.ndarray):
    return [np.linalg.eigh(segment_hamiltonian(model, u)) for u in values]


def _propagators(eigs, dt):
    return [(v * np.exp(-1j * w * dt)) @ v.conj().T for w, v in eigs]


def fidelity(model: ModelSystem, pulse: ControlPulse, psi_i, psi_f) -> float:
    """|<psi_f| U(T) |psi_i>|^2 with U the ordered product of segment exponentials."""
    psi = _as_state(psi_i, model)
    target = _as_state(psi_f, model)
    for us in _propagators(_segment_eig(model, pulse.values), pulse.dt):
        psi = us @ psi
    return float(abs(np.vdot(target, psi)) ** 2)


def _as_state(psi, model: ModelSystem) -> np.ndarray:
    if hasattr(psi, "vector"):
        psi = psi.vector(model)
    v = np.asarray(psi, dtype=np.complex128).ravel()
    if v.shape[0] != model.dim:
        raise ValueError(f"state dim {v.shape[0]} does not match model dim {model.dim}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise ValueError("endpoint states must be normalized")
    return v


def _divided_differences(w: np.ndarray, dt: float) -> np.ndarray:
    """G[a, b] such that dU = V (G * (V^dag dH V)) V^dag for U = exp(-i H dt)."""
    e = np.exp(-1j * w * dt)
    diff = w[:, None] - w[None, :]
    close = np.abs(diff) < DEGENERATE_GAP
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (e[:, None] - e[None, :]) / np.where(close, 1.0, diff)
    return np.where(close, -1j * dt * e[:, None], g)


def _fidelity_and_gradient(model: ModelSystem, values: np.ndarray, dt: float, psi_i, psi_f):
    eigs = _segment_eig(model, values)
    props = _propagators(eigs, dt)
    n = len(props)
    fwd = [psi_i]
    for us in props:
        fwd.append(us @ fwd[-1])
    overlap = np.vdot(psi_f, fwd[-1])
    bwd = [None] * n
    chi = psi_f
    for j in range(n - 1, -1, -1):
        bwd[j] = chi
        chi = props[j].conj().T @ chi
    grad = np.empty(values.shape)
    xs = [c.entries for c in model.controls]
    for j, (w, v) in enumerate(eigs):
        g = _divided_differences(w, dt)
        a = v.conj().T @ fwd[j]
        b = v.conj().T @ bwd[j]
        for k, x in enumerate(xs):
            xe = v.conj().T @ x @ v
            dm = np.vdot(b, (g * xe) @ a)
            grad[j, k] = 2.0 * (overlap.conjugate() * dm).real
    return float(abs(overlap) ** 2), grad


def fidelity_gradient(model: ModelSystem, pulse: ControlPulse, psi_i, psi_f) -> np.ndarray:
    """Exact d fidelity / d values[seg, k], shape (n_seg, K)."""
    _, grad = _fidelity_and_gradient(model, pulse.values, pulse.dt,
                                     _as_state(psi_i, model), _as_state(psi_f, model))
    return grad


class _Stop(Exception):
    pass


def synthesize(model: ModelSystem, psi_i, psi_f, cfg: SynthesisConfig,
               check_controllability: bool = False) -> SynthesisResult:
    """Maximize fidelity - amplitude_penalty * sum(u^2) dt over piecewise-constant controls.

    Quasi-Newton ascent (L-BFGS with a Wolfe line search) started from small
    seeded random controls. Stops as soon as the fidelity goal is met; on failure
    the best pulse found is returned with ``converged=False``.
    """
    a = _as_state(psi_i, model)
    b = _as_state(psi_f, model)
    if check_controllability and lie_closure_rank(model) < model.dim**2 - 1:
        log.warning("model is not completely controllable; synthesis may fail")
    n_seg = cfg.segments_for(model)
    dt = cfg.t_total / n_seg
    k = model.n_controls

    zero = np.zeros((n_seg, k))
    f0 = fidelity(model, ControlPulse(zero, dt), a, b)
    if f0 >= cfg.fidelity_goal:
        return SynthesisResult(ControlPulse(zero, dt), f0, 0, True)

    rng = np.random.default_rng(cfg.seed)
    x0 = cfg.u_init_scale * rng.standard_normal(n_seg * k)
    best = {"f": -1.0, "x": x0.copy(), "iters": 0}
    history = []
    cache = {}

    def objective(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            u = x.reshape(n_seg, k)
            f, g = _fidelity_and_gradient(model, u, dt, a, b)
            pen = cfg.amplitude_penalty * dt
            cache[key] = (f, -(f - pen * float(x @ x)), -(g.ravel() - 2.0 * pen * x))
        f, val, grad = cache[key]
        if f > best["f"]:
            best["f"], best["x"] = f, x.copy()
        return val, grad

    def callback(xk):
        best["iters"] += 1
        history.append(-objective(xk)[0])
        if best["f"] >= cfg.fidelity_goal:
            raise _Stop

    try:
        minimize(objective, x0, jac=True, method="L-BFGS-B", callback=callback,
                 options={"maxiter": cfg.max_iter, "ftol": 1e-16, "gtol": 1e-14, "maxcor": 20})
    except _Stop:
        pass
    pulse = ControlPulse(best["x"].reshape(n_seg, k), dt)
    f = fidelity(model, pulse, a, b)
    return SynthesisResult(pulse, f, best["iters"], f >= cfg.fidelity_goal, tuple(history))

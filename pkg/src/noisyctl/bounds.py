"""Lower bounds on transfer time and purity loss under noisy controls.

For a transfer whose eigenbasis amplitudes move by at least epsilon:

* time:    T >= eps^2 / (2 sum_k ubar_k Lambda_k)
* purity:  dP >= 2 eps^2 eta min_l(Dmin_l - 3 sqrt(2) Lambda_l^2 eps) / max_l Lambda_l
* scaling: dP >= 2 eps^2 eta N   (for generic eigenstate starts, small eps)

where Dmin_l is the variance of X_l minimized over the phases of the initial state
at fixed amplitudes, and Lambda_k the largest |eigenvalue| of X_k.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .lindblad import PulseStatistics
from .spinalg import ModelSystem
from .states import (
    AMPLITUDE_FLOOR,
    AmplitudePhaseState,
    TransformationSpec,
    basis_state,
    variance,
)

GRADIENT_CONSTANT = 3.0 * math.sqrt(2.0)
N_STARTS = 32
PHASE_GTOL = 1e-9
PHASE_MAX_ITER = 5000
REPORT_SCHEMA = "noisyctl.bound_report/1"


class NotDifferentiableError(ValueError):
    """Raised when an amplitude vector has zero components."""


def time_lower_bound(spec: TransformationSpec, model: ModelSystem, stats: PulseStatistics) -> float:
    """eps^2 / (2 sum_k ubar_k Lambda_k); ``math.inf`` when no control acts."""
    drive = float(np.dot(stats.u_bar, model.lam))
    if drive <= 0.0:
        return math.inf
    return spec.epsilon**2 / (2.0 * drive)


def time_lower_bound_scaled(spec: TransformationSpec, model: ModelSystem, stats: PulseStatistics) -> float:
    """The N-scaled form eps^2 / (2 N sum_k ubar_k), i.e. Lambda_k replaced by N."""
    drive = float(np.sum(stats.u_bar)) * model.size_param
    if drive <= 0.0:
        return math.inf
    return spec.epsilon**2 / (2.0 * drive)


def heisenberg_change_bound(model: ModelSystem, stats: PulseStatistics) -> float:
    """Upper bound 2 sum_k Lambda_k int|u_k| on the change of <A> over the pulse."""
    return 2.0 * stats.t_total * float(np.dot(stats.u_bar, model.lam))


def _phase_problem(x, r, model: ModelSystem):
    xe_full = model.to_eigenbasis(x)
    live = np.nonzero(r > AMPLITUDE_FLOOR)[0]
    xe = np.ascontiguousarray(xe_full[np.ix_(live, live)])
    # X^2 needs the full intermediate sum before restricting
    x2e = np.ascontiguousarray((xe_full @ xe_full)[np.ix_(live, live)])
    return live, np.ascontiguousarray(r[live], dtype=float), xe, x2e


def _descend(phi0, rl, xe, x2e, gtol, max_iter):
    """Local descent on the phase torus with the first phase pinned at 0.

    Quasi-Newton (L-BFGS) steps with a monotone line search; plain gradient
    steps stall on the near-flat directions that belong to tiny amplitudes.
    Stops at |grad| < gtol or when f stops decreasing at machine precision.
    """
    phi0 = np.asarray(phi0, dtype=float)
    if len(phi0) == 1:
        f, _ = kernels.phase_variance_grad(rl, phi0, xe, x2e)
        return f, phi0.copy()

    def fg(free):
        phi = np.concatenate(([phi0[0]], free))
        f, g = kernels.phase_variance_grad(rl, phi, xe, x2e)
        return f, g[1:]

    res = minimize(fg, phi0[1:], jac=True, method="L-BFGS-B",
                   options={"gtol": gtol, "ftol": 0.0, "maxiter": max_iter, "maxcor": 30})
    f0, _ = kernels.phase_variance_grad(rl, phi0, xe, x2e)
    if res.fun > f0:
        return f0, phi0.copy()
    return float(res.fun), np.concatenate(([phi0[0]], res.x))


def min_variance_over_phases(
    x,
    r,
    model: ModelSystem,
    n_starts: int = N_STARTS,
    seed: int = 0,
    gtol: float = PHASE_GTOL,
    max_iter: int = PHASE_MAX_ITER,
) -> tuple[float, np.ndarray]:
    """Minimize Var_X over the phases of sum_n r_n exp(i phi_n)|n> at fixed amplitudes.

    Multi-start local descent: start 0 is phi = 0, the rest are uniform random
    on the torus. The best value wins, ties going to the lowest start index.
    Returns the minimum (clamped at 0) and the full-length minimizing phases.
    """
    r = np.asarray(r, dtype=float)
    if abs(np.linalg.norm(r) - 1.0) > 1e-10:
        raise ValueError("amplitude vector must be normalized")
    live, rl, xe, x2e = _phase_problem(x, r, model)
    phi_full = np.zeros(model.dim)
    if len(live) == 1:
        return max(float((x2e[0, 0] - xe[0, 0] ** 2).real), 0.0), phi_full

    rng = np.random.default_rng(seed)
    starts = [np.zeros(len(live))]
    for _ in range(max(n_starts, 1) - 1):
        p = rng.uniform(0.0, 2.0 * np.pi, len(live))
        p[0] = 0.0
        starts.append(p)

    best_f, best_phi = math.inf, None
    for p in starts:
        f, phi = _descend(p, rl, xe, x2e, gtol, max_iter)
        if f < best_f:
            best_f, best_phi = f, phi
    phi_full[live] = np.mod(best_phi, 2.0 * np.pi)
    return max(float(best_f), 0.0), phi_full


def phase_variance(x, r, phi, model: ModelSystem) -> float:
    """Var_X of the state with amplitudes ``r`` and phases ``phi`` in the eigenbasis."""
    psi = AmplitudePhaseState(np.asarray(r, float), np.asarray(phi, float), model.basis_id)
    return variance(x, psi, model)


def variance_gradient_bound_check(
    x,
    r,
    model: ModelSystem,
    step: float = 1e-5,
    phi_star=None,
    reoptimize: bool = False,
    **phase_kw,
) -> float:
    """Central-difference norm of the gradient of Dmin(r / |r|) at an interior ``r``.

    By default the minimizing phases are held fixed (their first-order effect
    vanishes at the minimum). With ``reoptimize`` each displaced point is
    re-minimized by local descent warm-started from the minimizer.
    The caller compares the result with 3 sqrt(2) Lambda^2.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= AMPLITUDE_FLOOR):
        raise NotDifferentiableError("amplitude vector has zero components")
    if phi_star is None:
        _, phi_star = min_variance_over_phases(x, r, model, **phase_kw)
    phi_star = np.asarray(phi_star, dtype=float)
    _, _, xe, x2e = _phase_problem(x, r, model)

    def dmin(rr):
        rr = rr / np.linalg.norm(rr)
        if reoptimize:
            f, _ = _descend(phi_star.copy(), rr, xe, x2e, PHASE_GTOL, PHASE_MAX_ITER)
            return f
        f, _ = kernels.phase_variance_grad(rr, phi_star, xe, x2e)
        return f

    grad = np.empty(len(r))
    for n in range(len(r)):
        e = np.zeros(len(r))
        e[n] = step
        grad[n] = (dmin(r + e) - dmin(r - e)) / (2.0 * step)
    return float(np.linalg.norm(grad))


def gradient_bound(model: ModelSystem, k: int) -> float:
    return GRADIENT_CONSTANT * model.lam[k] ** 2


def control_min_variances(model: ModelSystem, r, **phase_kw) -> tuple[list[float], list[np.ndarray]]:
    vals, phis = [], []
    for xk in model.controls:
        v, p = min_variance_over_phases(xk, r, model, **phase_kw)
        vals.append(v)
        phis.append(p)
    return vals, phis


def purity_bound_from_variances(epsilon: float, eta: float, model: ModelSystem, min_variances) -> float:
    """2 eps^2 eta min_l(Dmin_l - 3 sqrt(2) Lambda_l^2 eps) / max_l Lambda_l, clamped at 0."""
    lam = np.asarray(model.lam, dtype=float)
    if eta <= 0.0 or np.max(lam) <= 0.0:
        return 0.0
    bracket = min(v - GRADIENT_CONSTANT * l**2 * epsilon for v, l in zip(min_variances, lam))
    return max(0.0, 2.0 * epsilon**2 * eta * bracket / float(np.max(lam)))


def purity_lower_bound(
    spec: TransformationSpec,
    model: ModelSystem,
    stats: PulseStatistics | None,
    eta: float,
    min_variances=None,
    **phase_kw,
) -> float:
    """Purity-loss lower bound for ``spec`` (independent of ``stats``; kept for symmetry)."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if eta == 0.0:
        return 0.0
    if min_variances is None:
        min_variances, _ = control_min_variances(model, spec.psi_i.r, **phase_kw)
    return purity_bound_from_variances(spec.epsilon, eta, model, min_variances)


def purity_bound_weighted(epsilon: float, eta: float, model: ModelSystem, stats: PulseStatistics,
                          min_variances) -> float:
    """Control-weighted form 2 eps^2 eta sum_k ubar_k V_k / sum_k ubar_k Lambda_k."""
    drive = float(np.dot(stats.u_bar, model.lam))
    if drive <= 0.0 or eta == 0.0:
        return 0.0
    return 2.0 * epsilon**2 * eta * float(np.dot(stats.u_bar, min_variances)) / drive


def scaling_bound(epsilon: float, eta: float, N: int) -> float:
    return 2.0 * epsilon**2 * eta * N


def epsilon_threshold(model: ModelSystem, min_variances) -> float:
    """Largest epsilon for which the purity-bound bracket stays >= min Dmin / 2."""
    lam_max = max(model.lam)
    if lam_max <= 0:
        return math.inf
    return min(min_variances) / (2.0 * GRADIENT_CONSTANT * lam_max**2)


def eigenstate_initial_condition(model: ModelSystem, which="mid") -> AmplitudePhaseState:
    """An H0 eigenstate as the initial condition.

    ``which`` is an index, ``"mid"`` (index d // 2) or ``"max-variance"`` (the
    eigenstate maximizing min_k Var(X_k) / Lambda_k^2).
    """
    if which == "mid":
        which = model.dim // 2
    elif which == "max-variance":
        best, which = -1.0, 0
        for n in range(model.dim):
            psi = basis_state(model, n)
            score = min(variance(x, psi, model) / max(l * l, 1e-300) for x, l in zip(model.controls, model.lam))
            if score > best:
                best, which = score, n
    elif isinstance(which, str):
        raise ValueError(f"unknown eigenstate selector {which!r}")
    return basis_state(model, int(which))


@dataclass
class BoundReport:
    t_bound: float
    t_bound_scaled: float
    dp_bound_general: float
    dp_bound_scaling: float
    min_variances: list[float]
    phases_opt: list[list[float]]
    epsilon: float
    eta: float
    u_bar: list[float]
    lam: list[float]
    N: int
    epsilon_threshold: float
    vacuous: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"schema": REPORT_SCHEMA}
        out.update(asdict(self))
        return out

    def to_json(self, **kw) -> str:
        kw.setdefault("indent", 2)
        return json.dumps(self.to_dict(), default=_json_default, **kw)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def evaluate_bounds(
    spec: TransformationSpec,
    model: ModelSystem,
    stats: PulseStatistics,
    eta: float,
    **phase_kw,
) -> BoundReport:
    vals, phis = control_min_variances(model, spec.psi_i.r, **phase_kw)
    dp = purity_lower_bound(spec, model, stats, eta, min_variances=vals)
    thr = epsilon_threshold(model, vals)
    return BoundReport(
        t_bound=time_lower_bound(spec, model, stats),
        t_bound_scaled=time_lower_bound_scaled(spec, model, stats),
        dp_bound_general=dp,
        dp_bound_scaling=scaling_bound(spec.epsilon, eta, model.size_param),
        min_variances=[float(v) for v in vals],
        phases_opt=[p.tolist() for p in phis],
        epsilon=spec.epsilon,
        eta=eta,
        u_bar=[float(u) for u in stats.u_bar],
        lam=[float(l) for l in model.lam],
        N=model.size_param,
        epsilon_threshold=thr,
        vacuous=dp == 0.0 and eta > 0,
    )

"""Propagation under noisy piecewise-constant controls.

The master equation is

    drho/dt = -i [H0 + sum_k u_k X_k, rho] - eta sum_k |u_k| [X_k, [X_k, rho]]

with the dissipation strength following the instantaneous segment value |u_k|.
Small systems (d <= ``exact_max_dim``) are propagated with the exact exponential
of the d^2 x d^2 Liouvillian. Larger ones use RK4 substeps sized so that
|L| h <= ``rk_norm_step``, applied to the dissipator in the interaction picture
of each segment Hamiltonian, so the coherent part stays exact.

``propagate_stochastic`` realizes the same dynamics as an ensemble of pure states
receiving Gaussian unitary kicks exp(-i dW_k X_k), dW_k ~ N(0, 2 eta |u_k| h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import kernels
from .spinalg import ModelSystem
from .states import DensityMatrix, TransformationSpec

EXACT_MAX_DIM = 32
RK_NORM_STEP = 0.1


@dataclass(frozen=True)
class ControlPulse:
    """Piecewise-constant controls: ``values[seg, k]`` held for ``dt`` on each segment."""

    values: np.ndarray
    dt: float
    eta: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("values must be an (n_seg, K) array with n_seg >= 1")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_seg(self) -> int:
        return self.values.shape[0]

    @property
    def n_controls(self) -> int:
        return self.values.shape[1]

    @property
    def t_total(self) -> float:
        return self.n_seg * self.dt

    @property
    def t_grid(self) -> np.ndarray:
        """Segment boundaries, length n_seg + 1."""
        return self.t0 + self.dt * np.arange(self.n_seg + 1)

    def with_eta(self, eta: float) -> "ControlPulse":
        return ControlPulse(self.values, self.dt, eta, self.t0)


@dataclass(frozen=True)
class PulseStatistics:
    t_total: float
    u_bar: np.ndarray


def pulse_statistics(pulse: ControlPulse, t_end: float | None = None) -> PulseStatistics:
    """Mean absolute control amplitude over [t0, t_end] (default: the whole pulse).

    The piecewise-constant integral is exact, including a partial last segment.
    """
    if t_end is None:
        t_span = pulse.t_total
    else:
        t_span = min(max(t_end - pulse.t0, 0.0), pulse.t_total)
    if t_span <= 0:
        return PulseStatistics(0.0, np.zeros(pulse.n_controls))
    full = int(math.floor(t_span / pulse.dt + 1e-12))
    full = min(full, pulse.n_seg)
    integral = np.abs(pulse.values[:full]).sum(axis=0) * pulse.dt
    rest = t_span - full * pulse.dt
    if full < pulse.n_seg and rest > 0:
        integral = integral + np.abs(pulse.values[full]) * rest
    return PulseStatistics(t_span, integral / t_span)


@dataclass
class TrajectoryRecord:
    """Sampled output of a propagation.

    ``rhos`` (or ``psis`` for pure-state runs) is None in storage-lean mode.
    ``r_series[i, n]`` is sqrt(<n|rho|n>) in the model eigenbasis, which equals
    the amplitude r_n for a pure state.
    """

    times: np.ndarray
    purity_series: np.ndarray
    r_series: np.ndarray
    variance_series: np.ndarray
    basis_id: str = ""
    rhos: np.ndarray | None = field(default=None, repr=False)
    psis: np.ndarray | None = field(default=None, repr=False)
    first_passage: float | None = None

    def density(self, i: int = -1) -> DensityMatrix:
        if self.rhos is not None:
            return DensityMatrix(self.rhos[i])
        if self.psis is not None:
            return DensityMatrix.pure(self.psis[i])
        raise ValueError("trajectory was recorded without states")

    @property
    def final_purity(self) -> float:
        return float(self.purity_series[-1])

    @property
    def purity_loss(self) -> float:
        return float(self.purity_series[0] - self.purity_series[-1])

    def purity_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.purity_series))


def _check_inputs(model: ModelSystem, pulse: ControlPulse, d: int) -> None:
    if d != model.dim:
        raise ValueError(f"state dim {d} does not match model dim {model.dim}")
    if pulse.n_controls != model.n_controls:
        raise ValueError(f"pulse has {pulse.n_controls} controls, model has {model.n_controls}")


def segment_hamiltonian(model: ModelSystem, u) -> np.ndarray:
    h = model.h0.entries.copy()
    for uk, xk in zip(u, model.controls):
        if uk != 0.0:
            h = h + uk * xk.entries
    return h


def liouvillian(model: ModelSystem, u, eta: float) -> np.ndarray:
    """Row-major superoperator: vec(drho/dt) = L @ vec(rho)."""
    d = model.dim
    eye = np.eye(d)
    h = segment_hamiltonian(model, u)
    lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    if eta > 0:
        for uk, xk in zip(u, model.controls):
            g = eta * abs(uk)
            if g == 0.0:
                continue
            x = xk.entries
            x2 = x @ x
            lv -= g * (np.kron(x2, eye) + np.kron(eye, x2.T) - 2.0 * np.kron(x, x.T))
    return lv


def _diagnostics(model: ModelSystem, rho: np.ndarray):
    v = model.eigen_basis
    pops = np.einsum("in,ij,jn->n", v.conj(), rho, v).real
    r = np.sqrt(np.clip(pops, 0.0, None))
    pur = float(np.sum(np.abs(rho) ** 2))
    var = []
    for xk in model.controls:
        x = xk.entries
        m1 = np.sum(rho * x.T).real
        m2 = np.sum(rho * (x @ x).T).real
        var.append(max(m2 - m1 * m1, 0.0))
    return pur, r, var


class _Recorder:
    def __init__(self, model: ModelSystem, keep_states: bool, stride: int):
        self.model = model
        self.keep = keep_states
        self.stride = max(int(stride), 1)
        self.count = 0
        self.times, self.pur, self.r, self.var, self.states = [], [], [], [], []

    def __call__(self, t: float, rho: np.ndarray, force: bool = False):
        if force or self.count % self.stride == 0:
            if not self.times or t > self.times[-1]:
                p, r, v = _diagnostics(self.model, rho)
                self.times.append(t)
                self.pur.append(p)
                self.r.append(r)
                self.var.append(v)
                if self.keep:
                    self.states.append(rho.copy())
        self.count += 1

    def record(self) -> TrajectoryRecord:
        return TrajectoryRecord(
            times=np.array(self.times),
            purity_series=np.array(self.pur),
            r_series=np.array(self.r),
            variance_series=np.array(self.var),
            basis_id=self.model.basis_id,
            rhos=np.array(self.states) if self.keep else None,
        )


def _spectral_norm_bound(model: ModelSystem, u, eta: float) -> float:
    h = segment_hamiltonian(model, u)
    nh = float(np.max(np.abs(np.linalg.eigvalsh(h))))
    diss = sum(4.0 * eta * abs(uk) * lk**2 for uk, lk in zip(u, model.lam))
    return 2.0 * nh + diss


def _dissipator_rhs(live, omega, tau, rho):
    """Dissipator in the interaction picture of the segment Hamiltonian (its eigenbasis)."""
    phase = np.exp(1j * omega * tau)
    out = np.zeros_like(rho)
    for g, xt in live:
        xi = xt * phase
        c = xi @ rho - rho @ xi
        out -= g * (xi @ c - c @ xi)
    return out


def propagate_lindblad(
    model: ModelSystem,
    pulse: ControlPulse,
    rho0,
    samples_per_segment: int = 1,
    stride: int = 1,
    keep_states: bool = True,
    exact_max_dim: int = EXACT_MAX_DIM,
    rk_norm_step: float = RK_NORM_STEP,
) -> TrajectoryRecord:
    """Integrate the noisy-control master equation over ``pulse``.

    The state is sampled ``samples_per_segment`` times per segment; every
    ``stride``-th sample (and the final state) is recorded.
    """
    rho = np.array(rho0.entries if isinstance(rho0, DensityMatrix) else rho0, dtype=np.complex128)
    d = rho.shape[0]
    _check_inputs(model, pulse, d)
    m = max(int(samples_per_segment), 1)
    h_int = pulse.dt / m
    rec = _Recorder(model, keep_states, stride)
    t = pulse.t0
    rec(t, rho)

    exact = d <= exact_max_dim
    cache: dict[bytes, np.ndarray] = {}
    xs = [c.entries for c in model.controls]
    n_total = pulse.n_seg * m
    step = 0
    for seg in range(pulse.n_seg):
        u = pulse.values[seg]
        if exact:
            key = u.tobytes()
            prop = cache.get(key)
            if prop is None:
                prop = expm(liouvillian(model, u, pulse.eta) * h_int)
                cache[key] = prop
            for _ in range(m):
                rho = (prop @ rho.reshape(-1)).reshape(d, d)
                t = pulse.t0 + (step + 1) * h_int
                step += 1
                rec(t, rho, force=step == n_total)
        else:
            # RK4 on the dissipator only; the coherent part is exact in the rotating frame
            w, v = np.linalg.eigh(segment_hamiltonian(model, u))
            omega = w[:, None] - w[None, :]
            live = [(pulse.eta * abs(uk), v.conj().T @ x @ v) for uk, x in zip(u, xs) if pulse.eta * abs(uk) > 0]
            nsub = max(1, math.ceil(_spectral_norm_bound(model, u, pulse.eta) * h_int / rk_norm_step))
            hs = h_int / nsub
            rho_i = v.conj().T @ rho @ v
            for i in range(m):
                if live:
                    for j in range(nsub):
                        tau = i * h_int + j * hs
                        k1 = _dissipator_rhs(live, omega, tau, rho_i)
                        k2 = _dissipator_rhs(live, omega, tau + 0.5 * hs, rho_i + 0.5 * hs * k1)
                        k3 = _dissipator_rhs(live, omega, tau + 0.5 * hs, rho_i + 0.5 * hs * k2)
                        k4 = _dissipator_rhs(live, omega, tau + hs, rho_i + hs * k3)
                        rho_i = rho_i + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                rho = v @ (rho_i * np.exp(-1j * omega * (i + 1) * h_int)) @ v.conj().T
                t = pulse.t0 + (step + 1) * h_int
                step += 1
                rec(t, rho, force=step == n_total)
    return rec.record()


def _segment_unitaries(model: ModelSystem, pulse: ControlPulse, h: float) -> list[np.ndarray]:
    out = []
    cache: dict[bytes, np.ndarray] = {}
    for u in pulse.values:
        key = u.tobytes()
        if key not in cache:
            w, v = np.linalg.eigh(segment_hamiltonian(model, u))
            cache[key] = (v * np.exp(-1j * w * h)) @ v.conj().T
        out.append(cache[key])
    return out


def propagate_schrodinger(model: ModelSystem, pulse: ControlPulse, psi0,
                          samples_per_segment: int = 1, keep_states: bool = True) -> TrajectoryRecord:
    """Noiseless pure-state propagation (eta ignored), sampled like ``propagate_lindblad``."""
    psi = np.array(psi0, dtype=np.complex128).ravel()
    _check_inputs(model, pulse, psi.shape[0])
    m = max(int(samples_per_segment), 1)
    h = pulse.dt / m
    v = model.eigen_basis
    xs = [c.entries for c in model.controls]
    times, rs, vars_, psis = [], [], [], []

    def rec(t, p):
        times.append(t)
        rs.append(np.abs(v.conj().T @ p))
        vars_.append([max((np.vdot(x @ p, x @ p) - np.vdot(p, x @ p) ** 2).real, 0.0) for x in xs])
        if keep_states:
            psis.append(p.copy())

    rec(pulse.t0, psi)
    step = 0
    for us in _segment_unitaries(model, pulse, h):
        for _ in range(m):
            psi = us @ psi
            step += 1
            rec(pulse.t0 + step * h, psi)
    return TrajectoryRecord(
        times=np.array(times),
        purity_series=np.ones(len(times)),
        r_series=np.array(rs),
        variance_series=np.array(vars_),
        basis_id=model.basis_id,
        psis=np.array(psis) if keep_states else None,
    )


@dataclass
class StochasticRun:
    """Pure-state trajectories from the unitary-kick integrator.

    ``psis[i, m]`` is trajectory m at ``times[i]``.
    """

    times: np.ndarray
    psis: np.ndarray

    def mean_density(self, i: int = -1) -> np.ndarray:
        p = self.psis[i]
        return np.einsum("mi,mj->ij", p, p.conj()) / p.shape[0]

    def standard_error(self, i: int = -1) -> float:
        """Monte-Carlo standard error of ``mean_density(i)`` in Frobenius norm."""
        p = self.psis[i]
        n = p.shape[0]
        if n < 2:
            return math.inf
        mean = self.mean_density(i)
        # sum_m |P_m - mean|^2 = sum_m (1 - 2<psi_m|mean|psi_m>) + n |mean|^2
        quad = np.einsum("mi,ij,mj->m", p.conj(), mean, p).real
        ss = np.sum(1.0 - 2.0 * quad) + n * np.sum(np.abs(mean) ** 2)
        return float(math.sqrt(max(ss, 0.0) / (n * (n - 1))))


def propagate_stochastic(
    model: ModelSystem,
    pulse: ControlPulse,
    psi0,
    seed: int,
    n_traj: int = 1,
    h: float | None = None,
    record_every_segment: bool = True,
) -> StochasticRun:
    """Unitary-kick unraveling of the noisy-control dynamics.

    Each step of width h (dt divided into an integer number of steps) applies the
    coherent step exp(-i H_seg h) and then independent kicks exp(-i dW_k X_k)
    with dW_k ~ Normal(0, 2 eta |u_k| h). Every trajectory stays exactly
    normalized, and results are reproducible for a given seed.
    """
    psi = np.array(psi0, dtype=np.complex128).ravel()
    _check_inputs(model, pulse, psi.shape[0])
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("psi0 must be normalized")
    if h is None:
        h = pulse.dt
    if not 0 < h <= pulse.dt * (1 + 1e-12):
        raise ValueError(f"step h={h} must satisfy 0 < h <= dt={pulse.dt}")
    nsub = max(1, math.ceil(pulse.dt / h - 1e-9))
    h = pulse.dt / nsub

    rng = np.random.default_rng(seed)
    lams, vecs = [], []
    for c in model.controls:
        w, v = np.linalg.eigh(c.entries)
        lams.append(w)
        vecs.append(v)
    lams = np.ascontiguousarray(lams, dtype=float)
    vecs = np.ascontiguousarray(vecs, dtype=np.complex128)

    state = np.ascontiguousarray(np.tile(psi, (n_traj, 1)))
    times, snaps = [pulse.t0], [state.copy()]
    unitaries = _segment_unitaries(model, pulse, h)
    for seg, us in enumerate(unitaries):
        sigma = np.sqrt(2.0 * pulse.eta * np.abs(pulse.values[seg]) * h)
        for _ in range(nsub):
            state = np.ascontiguousarray(state @ us.T)
            if pulse.eta > 0:
                dw = np.ascontiguousarray(rng.standard_normal((n_traj, model.n_controls)) * sigma)
                kernels.apply_kicks(state, vecs, lams, dw)
        if record_every_segment or seg == pulse.n_seg - 1:
            times.append(pulse.t0 + (seg + 1) * pulse.dt)
            snaps.append(state.copy())
    return StochasticRun(np.array(times), np.array(snaps))


def first_passage_time(traj: TrajectoryRecord, spec: TransformationSpec) -> float | None:
    """Earliest time with |r(t) - r_i| = epsilon, linearly interpolated between samples."""
    if traj.basis_id and spec.psi_i.basis_id and traj.basis_id != spec.psi_i.basis_id:
        raise ValueError("trajectory and transformation use different eigenbases")
    if traj.r_series.shape[1] != spec.psi_i.dim:
        raise ValueError("trajectory and transformation have different dimensions")
    dist = np.linalg.norm(traj.r_series - spec.psi_i.r[None, :], axis=1)
    return crossing_time(traj.times, dist, spec.epsilon)


def crossing_time(times, values, level: float) -> float | None:
    """First time a sampled series reaches ``level``; linear interpolation inside the step."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    hits = np.nonzero(values >= level)[0]
    if len(hits) == 0:
        return None
    i = int(hits[0])
    if i == 0 or values[i] == level:
        return float(times[i])
    v0, v1 = values[i - 1], values[i]
    frac = (level - v0) / (v1 - v0)
    return float(times[i - 1] + frac * (times[i] - times[i - 1]))

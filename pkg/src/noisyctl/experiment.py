"""Experiment pipeline shared by the CLI: synthesize, propagate, bound, check."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .bounds import eigenstate_initial_condition, evaluate_bounds
from .grape import SynthesisConfig, synthesize
from .lindblad import (
    ControlPulse,
    first_passage_time,
    propagate_lindblad,
    propagate_schrodinger,
    pulse_statistics,
)
from .spinalg import double_well_model
from .states import DensityMatrix, TransformationSpec, random_target, spin_coherent_state, to_eigenbasis

CONFIG_SCHEMA = "noisyctl.config/1"
SWEEP_SCHEMA = "noisyctl.sweep/1"
VIOLATION_TOL = 1e-9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of a run; JSON config files use the same field names."""

    N: int = 8
    N_list: tuple[int, ...] = (4, 8, 16, 32)
    omega: float = 1.0
    delta: float = 0.3
    U: float = 1.7
    eta: float = 1e-3
    eta_list: tuple[float, ...] = (1e-3,)
    epsilon: float = 0.05
    target_margin: float = 1.25
    target_mode: str = "reachable"
    start: str = "eigen"
    which: str = "mid"
    t_total: float = 2.0
    n_seg: int | None = None
    max_iter: int = 500
    fidelity_goal: float = 0.99999
    amplitude_penalty: float = 0.0
    u_init_scale: float = 0.1
    seed: int = 0
    samples_per_segment: int = 4
    stride: int = 1
    jobs: int = 1
    out: str = "out"
    solve_eta: bool = True
    dp_target: float = 0.01
    phase_starts: int = 32
    lambda_scale: float = 1.0

    def __post_init__(self):
        for name in ("N_list", "eta_list"):
            v = getattr(self, name)
            object.__setattr__(self, name, tuple(v) if not isinstance(v, (int, float)) else (v,))
        self.validate()

    def validate(self) -> None:
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"invalid N: {self.N}")
        if not self.N_list or any(int(n) != n or n < 1 for n in self.N_list):
            raise ConfigError(f"invalid N_list: {list(self.N_list)}")
        if not self.eta_list or any(e < 0 for e in self.eta_list) or self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.target_margin < 1 or self.target_margin * self.epsilon >= 1:
            raise ConfigError("target_margin must be >= 1 and margin * epsilon < 1")
        if self.target_mode not in ("reachable", "random-direction"):
            raise ConfigError(f"target_mode must be 'reachable' or 'random-direction', got {self.target_mode!r}")
        if self.start not in ("eigen", "coherent"):
            raise ConfigError(f"start must be 'eigen' or 'coherent', got {self.start!r}")
        if self.t_total <= 0:
            raise ConfigError("t_total must be positive")
        if self.stride < 1 or self.samples_per_segment < 1 or self.jobs < 1:
            raise ConfigError("stride, samples_per_segment and jobs must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        data = {k: v for k, v in data.items() if k != "schema"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def merged(self, overrides: dict) -> "ExperimentConfig":
        vals = {k: v for k, v in overrides.items() if v is not None}
        try:
            return replace(self, **vals)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = {"schema": CONFIG_SCHEMA}
        out.update(asdict(self))
        out["N_list"] = list(self.N_list)
        out["eta_list"] = list(self.eta_list)
        return out

    def synthesis(self) -> SynthesisConfig:
        return SynthesisConfig(
            t_total=self.t_total,
            n_seg=self.n_seg,
            max_iter=self.max_iter,
            fidelity_goal=self.fidelity_goal,
            amplitude_penalty=self.amplitude_penalty,
            seed=self.seed,
            u_init_scale=self.u_init_scale * self.omega if self.omega else self.u_init_scale,
        )


def build_model(cfg: ExperimentConfig, N: int | None = None):
    return double_well_model(cfg.N if N is None else N, cfg.omega, cfg.delta, cfg.U)


def initial_state(cfg: ExperimentConfig, model):
    if cfg.start == "coherent":
        return to_eigenbasis(spin_coherent_state(model.size_param, np.pi / 2, 0.0), model)
    which = cfg.which
    if which not in ("mid", "max-variance"):
        which = int(which)
    return eigenstate_initial_condition(model, which)


def _scaled_model(model, scale: float):
    """Copy of ``model`` with Lambda_k multiplied by ``scale`` (bound-checker fault injection)."""
    if scale == 1.0:
        return model
    return replace(model, lam=tuple(l * scale for l in model.lam))


@dataclass
class PointResult:
    row: dict
    pulse: object = field(default=None, repr=False)
    trajectory: object = field(default=None, repr=False)
    report: object = field(default=None, repr=False)


def reachable_target(model, psi_i, dr_norm: float, rng: np.random.Generator, t_total: float,
                     n_seg: int, scale: float = 1.0, samples_per_segment: int = 4):
    """Drive ``psi_i`` with a seeded random pulse until |dr| >= ``dr_norm``; return that state.

    The direction of the amplitude change is random, and the target is reachable
    within ``t_total`` by construction. The amplitude doubles until the border is crossed.
    """
    dt = t_total / n_seg
    psi0 = psi_i.vector(model)
    for _ in range(30):
        pulse = ControlPulse(scale * rng.standard_normal((n_seg, model.n_controls)), dt)
        traj = propagate_schrodinger(model, pulse, psi0, samples_per_segment=samples_per_segment)
        dist = np.linalg.norm(traj.r_series - psi_i.r[None, :], axis=1)
        hit = np.nonzero(dist >= dr_norm)[0]
        if len(hit):
            psi = traj.psis[hit[0]]
            return to_eigenbasis(psi / np.linalg.norm(psi), model)
        scale *= 2.0
    raise RuntimeError("random pulses never reached the requested amplitude change")


def transfer_problem(cfg: ExperimentConfig, N: int):
    """Model, initial state, random target and transformation spec for one sweep point.

    The target's amplitudes differ from the initial ones by ``target_margin * epsilon``
    (at least), so a pulse reaching the target crosses the epsilon border.
    """
    model = build_model(cfg, N)
    psi_i = initial_state(cfg, model)
    rng = np.random.default_rng([cfg.seed, N])
    dr = cfg.target_margin * cfg.epsilon
    if cfg.target_mode == "reachable":
        n_seg = cfg.synthesis().segments_for(model)
        target = reachable_target(model, psi_i, dr, rng, cfg.t_total, n_seg)
    else:
        target = random_target(psi_i, dr, rng)
    spec = TransformationSpec(psi_i, target, cfg.epsilon)
    return model, psi_i, target, spec


def run_point(cfg: ExperimentConfig, N: int, eta: float, keep: bool = False) -> PointResult:
    """synthesize -> propagate (noisy) -> first passage -> bounds -> violation flags.

    ``dp_measured`` is the purity loss over the whole synthesized transfer and
    ``dp_at_passage`` the loss up to the first-passage time; the purity bound is
    checked against both. Pulse statistics are taken over [0, first passage].
    """
    model, psi_i, target, spec = transfer_problem(cfg, N)
    synth = synthesize(model, psi_i, target, cfg.synthesis())
    row = {
        "N": N,
        "eta": eta,
        "epsilon": cfg.epsilon,
        "fidelity": synth.fidelity,
        "iterations": synth.iterations,
        "converged": synth.converged,
    }
    if not synth.converged:
        row["status"] = "unconverged"
        return PointResult(row, synth.pulse)

    pulse = synth.pulse.with_eta(eta)
    traj = propagate_lindblad(model, pulse, DensityMatrix.pure(psi_i.vector(model)),
                              samples_per_segment=cfg.samples_per_segment, stride=cfg.stride,
                              keep_states=False)
    t_pass = first_passage_time(traj, spec)
    traj.first_passage = t_pass
    if t_pass is None:
        row["status"] = "no_passage"
        return PointResult(row, pulse, traj)

    stats = pulse_statistics(pulse, t_pass)
    checked = _scaled_model(model, cfg.lambda_scale)
    report = evaluate_bounds(spec, checked, stats, eta, n_starts=cfg.phase_starts, seed=cfg.seed)
    row.update({
        "status": "ok",
        "dp_measured": traj.purity_loss,
        "dp_at_passage": float(traj.purity_series[0] - traj.purity_at(t_pass)),
        "dp_bound_general": report.dp_bound_general,
        "dp_bound_scaling": report.dp_bound_scaling,
        "T_measured": t_pass,
        "t_bound": report.t_bound,
        "t_bound_scaled": report.t_bound_scaled,
        "bound_vacuous": report.vacuous,
        "min_var_min": min(report.min_variances),
        "epsilon_threshold": report.epsilon_threshold,
    })
    for k, u in enumerate(stats.u_bar):
        row[f"u_bar_{k + 1}"] = float(u)
    row.update(check_bounds(row))
    return PointResult(row, pulse, traj if keep else None, report)


def check_bounds(row: dict, tol: float = VIOLATION_TOL) -> dict:
    """Violation flags; a violation means a bug in the checker, not new physics."""
    time_bad = row["T_measured"] < row["t_bound"] - tol
    dp_seen = min(row["dp_measured"], row.get("dp_at_passage", row["dp_measured"]))
    dp_bad = dp_seen < row["dp_bound_general"] - tol
    return {"time_violated": bool(time_bad), "dp_violated": bool(dp_bad),
            "bound_violated": bool(time_bad or dp_bad)}


def _run_point_rows(args):
    cfg, N, eta = args
    return run_point(cfg, N, eta).row


def loglog_slope(xs, ys) -> float:
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def solve_eta_for_dp(cfg: ExperimentConfig, N: int, dp_target: float, eta_guess: float,
                     dp_guess: float, rtol: float = 1e-3, max_iter: int = 40) -> float:
    """Noise strength giving transfer purity loss ``dp_target``, by log-space bisection.

    The synthesized pulse is kept fixed while eta varies.
    """
    model, psi_i, target, _ = transfer_problem(cfg, N)
    synth = synthesize(model, psi_i, target, cfg.synthesis())
    rho0 = DensityMatrix.pure(psi_i.vector(model))

    def dp_of(eta):
        traj = propagate_lindblad(model, synth.pulse.with_eta(eta), rho0,
                                  samples_per_segment=1, keep_states=False)
        return traj.purity_loss

    est = eta_guess * dp_target / max(dp_guess, 1e-300)
    lo, hi = est / 2.0, est * 2.0
    while dp_of(lo) > dp_target:
        lo /= 2.0
    while dp_of(hi) < dp_target:
        hi *= 2.0
    for _ in range(max_iter):
        if hi / lo - 1.0 < rtol:
            break
        mid = math.sqrt(lo * hi)
        if dp_of(mid) < dp_target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def run_sweep(cfg: ExperimentConfig):
    """All (N, eta) points, rows sorted by (N, eta), plus the slope summary."""
    if len(set(cfg.N_list)) < 3:
        raise ConfigError("slope fit needs at least 3 distinct N values")
    points = sorted({(int(n), float(e)) for n in cfg.N_list for e in cfg.eta_list})
    tasks = [(cfg, n, e) for n, e in points]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_run_point_rows, tasks))
    else:
        rows = [_run_point_rows(t) for t in tasks]
    rows.sort(key=lambda r: (r["N"], r["eta"]))
    return rows, sweep_summary(cfg, rows)


def sweep_summary(cfg: ExperimentConfig, rows: list[dict]) -> dict:
    summary = {"schema": SWEEP_SCHEMA, "config": cfg.to_dict(), "per_eta": []}
    ok = [r for r in rows if r.get("status") == "ok"]
    summary["excluded"] = [{"N": r["N"], "eta": r["eta"], "status": r["status"]}
                           for r in rows if r.get("status") != "ok"]
    summary["n_violations"] = sum(1 for r in ok if r["bound_violated"])
    for eta in sorted({r["eta"] for r in rows}):
        sel = [r for r in ok if r["eta"] == eta]
        entry = {"eta": eta, "N": [r["N"] for r in sel]}
        if len(sel) >= 3 and eta > 0:
            ns = [r["N"] for r in sel]
            entry["slope_dp_measured"] = loglog_slope(ns, [r["dp_measured"] for r in sel])
            entry["slope_dp_bound_scaling"] = loglog_slope(ns, [r["dp_bound_scaling"] for r in sel])
            if cfg.solve_eta:
                etas = [solve_eta_for_dp(cfg, r["N"], cfg.dp_target, eta, r["dp_measured"]) for r in sel]
                entry["dp_target"] = cfg.dp_target
                entry["eta_for_dp_target"] = etas
                entry["slope_eta_for_dp_target"] = loglog_slope(ns, etas)
        else:
            entry["slope_dp_measured"] = None
        summary["per_eta"].append(entry)
    return summary


SWEEP_COLUMNS = [
    "N", "eta", "epsilon", "status", "dp_measured", "dp_at_passage", "dp_bound_general",
    "dp_bound_scaling", "T_measured", "t_bound", "t_bound_scaled", "u_bar_1", "u_bar_2",
    "fidelity", "iterations", "converged", "bound_vacuous", "time_violated", "dp_violated",
]

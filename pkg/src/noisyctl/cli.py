"""Command-line driver.

Exit codes: 0 success, 2 configuration error, 3 synthesis did not converge,
4 the bound checker found a violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, fileio
from .experiment import (
    SWEEP_COLUMNS,
    ConfigError,
    ExperimentConfig,
    build_model,
    run_point,
    run_sweep,
    transfer_problem,
)
from .grape import synthesize
from .lindblad import first_passage_time, propagate_lindblad
from .spinalg import lie_closure_rank
from .states import DensityMatrix

EXIT_OK, EXIT_CONFIG, EXIT_UNCONVERGED, EXIT_VIOLATION = 0, 2, 3, 4

log = logging.getLogger("noisyctl")


def _int_list(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _float_list(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    g.add_argument("--out", help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, help="worker processes for sweeps")
    g.add_argument("--stride", type=int, help="record every n-th sample")
    m = common.add_argument_group("model")
    m.add_argument("--N", type=int, dest="N")
    m.add_argument("--omega", type=float)
    m.add_argument("--delta", type=float)
    m.add_argument("--U", type=float, dest="U")
    e = common.add_argument_group("experiment")
    e.add_argument("--eta", type=float)
    e.add_argument("--epsilon", type=float)
    e.add_argument("--start", choices=["eigen", "coherent"])
    e.add_argument("--which", help="eigenstate index, 'mid' or 'max-variance'")
    e.add_argument("--t-total", type=float, dest="t_total")
    e.add_argument("--n-seg", type=int, dest="n_seg")
    e.add_argument("--max-iter", type=int, dest="max_iter")
    e.add_argument("--fidelity-goal", type=float, dest="fidelity_goal")
    e.add_argument("--penalty", type=float, dest="amplitude_penalty")
    e.add_argument("--samples-per-segment", type=int, dest="samples_per_segment")
    e.add_argument("--phase-starts", type=int, dest="phase_starts")
    e.add_argument("--inject-lambda-scale", type=float, dest="lambda_scale", help=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="noisyctl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("model", parents=[common], help="model summary: dims, Lambda_k, Lie rank, spectrum")
    pp = sub.add_parser("propagate", parents=[common], help="propagate a pulse under noisy controls")
    pp.add_argument("--pulse", type=Path, required=True, help="pulse CSV or JSON")
    sub.add_parser("synthesize", parents=[common], help="GRAPE pulse for a random eps-transfer")
    sub.add_parser("verify-bounds", parents=[common], help="single-point bound verification")
    sp = sub.add_parser("sweep", parents=[common], help="N-scaling sweep with slope fits")
    sp.add_argument("--N-list", type=_int_list, dest="N_list")
    sp.add_argument("--eta-list", type=_float_list, dest="eta_list")
    sp.add_argument("--dp-target", type=float, dest="dp_target")
    sp.add_argument("--no-eta-solve", action="store_false", dest="solve_eta", default=None)
    return p


_CONFIG_KEYS = {
    "out", "seed", "jobs", "stride", "N", "omega", "delta", "U", "eta", "epsilon", "start",
    "which", "t_total", "n_seg", "max_iter", "fidelity_goal", "amplitude_penalty",
    "samples_per_segment", "phase_starts", "lambda_scale", "N_list", "eta_list", "dp_target",
    "solve_eta",
}


def load_config(args) -> ExperimentConfig:
    base = {}
    if args.config is not None:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    cfg = ExperimentConfig.from_dict(base)
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS if hasattr(args, k)}
    return cfg.merged(overrides)


def _out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_model(cfg: ExperimentConfig, args) -> int:
    model = build_model(cfg)
    summary = {
        "dim": model.dim,
        "N": model.size_param,
        "omega": cfg.omega,
        "delta": cfg.delta,
        "U": cfg.U,
        "lambda": list(model.lam),
        "lie_closure_rank": lie_closure_rank(model),
        "full_rank": model.dim**2 - 1,
        "spectrum": [float(np.round(w, 12)) + 0.0 for w in model.eigen_values],
    }
    text = fileio.dumps_json(summary, timestamp=False)
    sys.stdout.write(text)
    if args.out:
        fileio.write_text(Path(args.out) / "model.json", text)
    return EXIT_OK


def cmd_propagate(cfg: ExperimentConfig, args) -> int:
    model, psi_i, _, spec = transfer_problem(cfg, cfg.N)
    try:
        pulse = fileio.load_pulse(args.pulse, eta=cfg.eta)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load pulse {args.pulse}: {exc}") from exc
    if pulse.n_controls != model.n_controls:
        raise ConfigError(f"pulse has {pulse.n_controls} controls, model needs {model.n_controls}")
    traj = propagate_lindblad(model, pulse, DensityMatrix.pure(psi_i.vector(model)),
                              samples_per_segment=cfg.samples_per_segment, stride=cfg.stride,
                              keep_states=False)
    traj.first_passage = first_passage_time(traj, spec)
    out = _out_dir(cfg)
    fileio.write_text(out / "trajectory.csv", fileio.trajectory_csv(traj))
    summary = fileio.trajectory_summary(traj, pulse)
    summary["epsilon"] = cfg.epsilon
    fileio.write_text(out / "trajectory.json", fileio.dumps_json(summary))
    print(f"purity loss {summary['delta_p']:.6e}; first passage {summary['first_passage']}")
    return EXIT_OK


def cmd_synthesize(cfg: ExperimentConfig, args) -> int:
    model, psi_i, target, spec = transfer_problem(cfg, cfg.N)
    res = synthesize(model, psi_i, target, cfg.synthesis())
    out = _out_dir(cfg)
    fileio.write_text(out / "pulse.csv", fileio.pulse_csv(res.pulse))
    doc = fileio.pulse_to_dict(res.pulse, config=cfg.to_dict())
    doc.update({"fidelity": res.fidelity, "iterations": res.iterations, "converged": res.converged})
    fileio.write_text(out / "pulse.json", fileio.dumps_json(doc))
    print(f"fidelity {res.fidelity:.8f} after {res.iterations} iterations; converged={res.converged}")
    return EXIT_OK if res.converged else EXIT_UNCONVERGED


def cmd_verify_bounds(cfg: ExperimentConfig, args) -> int:
    res = run_point(cfg, cfg.N, cfg.eta)
    row = res.row
    out = _out_dir(cfg)
    doc = {"row": row, "config": cfg.to_dict()}
    if res.report is not None:
        doc["bound_report"] = res.report.to_dict()
    fileio.write_text(out / "verify.json", fileio.dumps_json(doc))
    if row["status"] != "ok":
        print(f"N={row['N']} eta={row['eta']}: {row['status']} (fidelity {row['fidelity']:.6f})")
        return EXIT_UNCONVERGED
    verdict = "FAIL" if row["bound_violated"] else "pass"
    print(f"N={row['N']} eta={row['eta']} eps={row['epsilon']}: "
          f"T={row['T_measured']:.6g} >= {row['t_bound']:.6g}, "
          f"dP={row['dp_measured']:.6g} >= {row['dp_bound_general']:.6g} -> {verdict}")
    return EXIT_VIOLATION if row["bound_violated"] else EXIT_OK


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(fileio._header("noisyctl.sweep/1"))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (repr(float(r[c])) if isinstance(r.get(c), float) else r.get(c))
                    for c in SWEEP_COLUMNS])
    return buf.getvalue()


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    rows, summary = run_sweep(cfg)
    out = _out_dir(cfg)
    fileio.write_text(out / "sweep.csv", sweep_csv(rows))
    fileio.write_text(out / "sweep.json", fileio.dumps_json({"summary": summary, "rows": rows}))
    for entry in summary["per_eta"]:
        print(f"eta={entry['eta']}: N={entry['N']} slope(dP)={entry.get('slope_dp_measured')}")
    if summary["excluded"]:
        print(f"excluded rows: {summary['excluded']}")
    return EXIT_VIOLATION if summary["n_violations"] else EXIT_OK


COMMANDS = {
    "model": cmd_model,
    "propagate": cmd_propagate,
    "synthesize": cmd_synthesize,
    "verify-bounds": cmd_verify_bounds,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"noisyctl: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

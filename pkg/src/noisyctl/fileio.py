"""CSV / JSON formats for trajectories, pulses and summaries.

CSV files start with a single ``#`` comment line carrying the schema tag and a
timestamp; everything after it is deterministic for fixed inputs.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .lindblad import ControlPulse, TrajectoryRecord, pulse_statistics

TRAJECTORY_SCHEMA = "noisyctl.trajectory/1"
PULSE_SCHEMA = "noisyctl.pulse/1"


def _header(schema: str) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"# {schema} generated={stamp}\n"


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps_json(obj, timestamp: bool = True) -> str:
    """JSON with sorted keys and one item per line; the timestamp sits on its own line."""
    if timestamp:
        obj = dict(obj)
        obj["generated"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def trajectory_csv(traj: TrajectoryRecord) -> str:
    """Columns: t, purity, r_0 ... r_{d-1}."""
    d = traj.r_series.shape[1]
    buf = io.StringIO()
    buf.write(_header(TRAJECTORY_SCHEMA))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "purity"] + [f"r_{n}" for n in range(d)])
    for t, p, r in zip(traj.times, traj.purity_series, traj.r_series):
        w.writerow([_fmt(t), _fmt(p)] + [_fmt(x) for x in r])
    return buf.getvalue()


def read_trajectory_csv(path) -> dict:
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
    return {"t": data[:, 0], "purity": data[:, 1], "r": data[:, 2:]}


def trajectory_summary(traj: TrajectoryRecord, pulse: ControlPulse, first_passage: float | None = None) -> dict:
    """first_passage, purity loss (total and at first passage) and mean control amplitudes."""
    fp = traj.first_passage if first_passage is None else first_passage
    out = {
        "schema": TRAJECTORY_SCHEMA,
        "first_passage": fp,
        "delta_p": traj.purity_loss,
        "u_bar": pulse_statistics(pulse).u_bar.tolist(),
        "eta": pulse.eta,
        "t_total": pulse.t_total,
    }
    if fp is not None:
        out["delta_p_at_passage"] = float(traj.purity_series[0] - traj.purity_at(fp))
        out["u_bar_at_passage"] = pulse_statistics(pulse, fp).u_bar.tolist()
    return out


def pulse_csv(pulse: ControlPulse) -> str:
    """Columns: segment, t_start, u_1 ... u_K."""
    buf = io.StringIO()
    buf.write(_header(PULSE_SCHEMA))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["segment", "t_start"] + [f"u_{k + 1}" for k in range(pulse.n_controls)])
    for i, (t, u) in enumerate(zip(pulse.t_grid[:-1], pulse.values)):
        w.writerow([i, _fmt(t)] + [_fmt(x) for x in u])
    return buf.getvalue()


def read_pulse_csv(path, eta: float = 0.0) -> ControlPulse:
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
    t = data[:, 1]
    values = data[:, 2:]
    if len(t) > 1:
        steps = np.diff(t)
        dt = float(steps[0])
        if not np.allclose(steps, dt, rtol=1e-9, atol=0):
            raise ValueError("pulse CSV must use a uniform time grid")
    else:
        raise ValueError("single-segment pulse CSV needs dt; use the JSON format")
    return ControlPulse(values, dt, eta, float(t[0]))


def pulse_to_dict(pulse: ControlPulse, config: dict | None = None) -> dict:
    out = {
        "schema": PULSE_SCHEMA,
        "dt": pulse.dt,
        "t0": pulse.t0,
        "eta": pulse.eta,
        "values": pulse.values.tolist(),
    }
    if config is not None:
        out["config"] = config
    return out


def pulse_from_dict(obj: dict) -> ControlPulse:
    return ControlPulse(np.array(obj["values"], dtype=float), float(obj["dt"]),
                        float(obj.get("eta", 0.0)), float(obj.get("t0", 0.0)))


def load_pulse(path, eta: float | None = None) -> ControlPulse:
    path = Path(path)
    if path.suffix == ".json":
        pulse = pulse_from_dict(json.loads(path.read_text()))
        return pulse if eta is None else pulse.with_eta(eta)
    return read_pulse_csv(path, 0.0 if eta is None else eta)

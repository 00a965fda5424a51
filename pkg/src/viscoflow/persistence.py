"""CSV and JSON output of trajectories, analyses and manifests.

Floats are written with ``repr`` so files round-trip exactly and repeated
runs can be compared byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import bv_analysis as bv
from . import contact as ct
from .reparam import ParamTrajectory, discrete_rates
from .discretization import State

MANIFEST_SCHEMA = "viscoflow.manifest/1"

ANALYSIS_COLUMNS = (
    "s", "t", "t_rate", "E_mu", "E0", "dtE",
    "slope_u", "slope_z", "slope_p", "slope_p0", "dstar_mu",
    "rate_u", "rate_z", "rate_p", "lambda_z", "lambda_up", "regime",
    "M_eps", "M0_CL", "M0_CR", "M0_mu0", "M0_munu",
    "viol_CL", "viol_CR", "viol_mu0", "viol_munu",
)


def state_columns(space):
    nf, nn, nc = space.n_free, space.n_nodes, space.n_cells
    return (["s", "t"] + [f"u{i}" for i in range(nf)] + [f"z{i}" for i in range(nn)]
            + [f"p{c}_{k}" for c in range(nc) for k in range(2)])


def _fmt(x):
    if isinstance(x, str):
        return x
    return repr(float(x))


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def write_states(path, problem, traj):
    sp = problem.space
    rows = ([s, t, *q.pack(sp)] for s, t, q in zip(traj.s, traj.t, traj.states))
    return _write_rows(path, state_columns(sp), rows)


def read_states(path, problem, params):
    """Knot-sampled trajectory from a states CSV, with backward-difference rates."""
    sp = problem.space
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != state_columns(sp):
            raise ValueError(f"{path}: column layout does not match the configured instance")
        data = np.array([[float(v) for v in row] for row in reader])
    if len(data) < 2:
        raise ValueError(f"{path}: need at least two samples")
    traj = ParamTrajectory(params, data[:, 0].copy(), data[:, 1].copy(),
                           [State.unpack(sp, row[2:]) for row in data], knot_s=data[:, 0].copy(),
                           scheme="backward")
    traj.rates = discrete_rates(problem, traj)
    return traj


def analysis_rows(problem, traj, tol=None):
    """One row per sample in ANALYSIS_COLUMNS order."""
    params = traj.params
    mu = params.mu
    ex = bv.annotate(problem, traj)
    lam = bv.recover_lambda(problem, traj, tol)
    series = {name: bv.contact_series(problem, traj, name, tol) for name in ("CL", "CR", "mu0", "munu")}
    has_eps = hasattr(params, "eps")
    rows = []
    for i, (s, t, q, tp, qp) in enumerate(zip(traj.s, traj.t, traj.states, traj.rates["t"], traj.rates["q"])):
        sl, rn = ex["slopes"][i], ex["rates"][i]
        if has_eps and tp > 0:
            m_eps = ct.M_eps(problem, t, q, tp, qp, params.eps, mu, params.nu)
        else:
            m_eps = np.inf
        vals = {k: v[i] for k, v in series.items()}
        rows.append([
            s, t, tp, ex["E"][i], ex["E0"][i], ex["dtE"][i],
            sl.u, sl.z, sl.p, sl.p0, sl.dstar_mu(),
            rn.u, rn.z, rn.p, lam.lam_z[i], lam.lam_up[i], lam.regime[i],
            m_eps, *(vals[k].value for k in ("CL", "CR", "mu0", "munu")),
            *(vals[k].max_violation for k in ("CL", "CR", "mu0", "munu")),
        ])
    return rows


def write_analysis(path, problem, traj, tol=None):
    return _write_rows(path, ANALYSIS_COLUMNS, analysis_rows(problem, traj, tol))


def material_hash(material):
    blob = json.dumps(material.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable as strings
        return x if np.isfinite(x) else repr(x)
    return obj


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_manifest(out_dir, command, config, seed, files, problem, extra=None):
    """Written last by every command, so its presence marks a complete run."""
    payload = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config": config.to_dict(),
        "material_hash": material_hash(config.material),
        "seed": seed,
        "columns": {"analysis": list(ANALYSIS_COLUMNS), "states": state_columns(problem.space)},
        "files": sorted(str(Path(f).relative_to(out_dir)) for f in files),
    }
    if extra:
        payload.update(extra)
    return write_json(Path(out_dir) / "manifest.json", payload)

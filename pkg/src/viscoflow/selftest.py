"""Quick oracle-backed property checks on the built-in tiny instance."""

from __future__ import annotations

import itertools

import numpy as np

from . import bv_analysis as bv
from . import dissipation as ds
from . import energy as en
from . import oracle as orc
from . import viscous_solver as vs
from .contact import VISCOUS_UP, VISCOUS_Z
from .discretization import State
from .instances import random_state, tiny_problem


def _relative(a, b):
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1.0))


def check_gradients(problem, rng, n=10, mu=0.1):
    sp = problem.space
    worst = 0.0
    for _ in range(n):
        q = random_state(problem, rng)
        t = rng.uniform(0.0, problem.loading.T)
        x = q.pack(sp)
        fd = orc.fd_gradient(lambda y: en.energy_total(problem, t, State.unpack(sp, y), mu), x)
        worst = max(worst, _relative(en.grad_packed(problem, t, q, mu), fd))
        fd_t = orc.fd_gradient(lambda s: en.energy_total(problem, s[0], q, mu), np.array([t]))
        worst = max(worst, _relative(np.array([en.partial_t_energy(problem, t, q)]), fd_t))
    return worst


def check_steps(problem, rng, n=4):
    sp = problem.space
    combos = [c for c in itertools.product((1e-1, 1e-2), repeat=3) if c[2] <= c[1]]
    worst = 0.0
    for k in range(n):
        eps, mu, nu = combos[k % len(combos)]
        q = random_state(problem, rng, z_range=(0.6, 1.0))
        t, dt = rng.uniform(0.2, 1.0), rng.uniform(0.01, 0.1)
        a = vs.step(problem, q, t, dt, eps, mu, nu)
        b = orc.brute_force_step(problem, q, t, dt, eps, mu, nu, dissipation_state="current")
        worst = max(worst, a.distance(b, sp))
    return worst


def check_fenchel(problem, rng, n=500):
    sp = problem.space
    worst = np.inf
    for _ in range(n):
        q = random_state(problem, rng)
        rate = random_state(problem, rng, z_range=(-1.0, 0.0), u_scale=1.0, p_scale=1.0)
        eps, nu = 10.0 ** rng.uniform(-3, 0, 2)
        gap = ds.fenchel_dual_gap(problem, rng.uniform(0.0, problem.loading.T), q,
                                  State(rate.u, rate.z, rate.p), eps, rng.uniform(0, 1), nu)
        worst = min(worst, gap)
    return float(worst)


def check_hausdorff(problem, rng, n=1000):
    mat = problem.material
    worst_mc, worst_bound = 0.0, -np.inf
    for _ in range(n):
        z1, z2 = rng.uniform(0.0, 1.0, 2)
        exact = float(mat.hausdorff_K(z1, z2))
        worst_mc = max(worst_mc, abs(orc.mc_hausdorff(mat, z1, z2, rng) - exact))
        worst_bound = max(worst_bound, exact - mat.C_K * abs(z1 - z2))
    return worst_mc, worst_bound


def check_lambda(problem):
    worst = 0.0
    for kind in (VISCOUS_UP, VISCOUS_Z):
        traj = orc.manufactured_jump(problem, kind)
        lam = bv.recover_lambda(problem, traj)
        got = lam.lam_up if kind == VISCOUS_UP else lam.lam_z
        worst = max(worst, float(np.abs(got - traj.extra["planted"]["lam"]).max()))
    return worst


def run_selftest(seed=orc.DEFAULT_SEED):
    rng = np.random.default_rng(seed)
    problem = tiny_problem()
    mc, bound = check_hausdorff(problem, rng)
    checks = {
        "gradients_fd": (check_gradients(problem, rng), 1e-6, "max"),
        "step_oracle": (check_steps(problem, rng), 1e-6, "max"),
        "fenchel_gap": (check_fenchel(problem, rng), -1e-10, "min"),
        "hausdorff_mc": (mc, 1e-12, "max"),
        "hausdorff_bound": (bound, 1e-12, "max"),
        "lambda_recovery": (check_lambda(problem), 1e-6, "max"),
    }
    report = {}
    for name, (value, tol, kind) in checks.items():
        ok = value <= tol if kind == "max" else value >= tol
        report[name] = {"value": value, "tolerance": tol, "passed": bool(ok)}
    failures = [name for name, r in report.items() if not r["passed"]]
    return {"seed": seed, "passed": not failures, "checks": report, "failures": failures}

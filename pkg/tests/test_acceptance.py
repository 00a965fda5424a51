"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import itertools
import json
import time

import numpy as np
import pytest

from viscoflow import bv_analysis as bv
from viscoflow import cli
from viscoflow import contact as ct
from viscoflow import dissipation as ds
from viscoflow import energy as en
from viscoflow import reparam as rp
from viscoflow import viscous_solver as vs
from viscoflow.discretization import State
from viscoflow.instances import equilibrated_datum, random_state, unstable_datum
from viscoflow.material import MaterialModel
from viscoflow.oracle import brute_force_step, fd_gradient, mc_hausdorff

N_SAMPLES = 10_000


def _relative(a, b):
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1.0))


def test_gradients_match_finite_differences(ref, rng, acceptance):
    sp = ref.space
    blocks = {"u": slice(0, sp.n_free), "z": slice(sp.n_free, sp.n_free + sp.n_nodes),
              "p": slice(sp.n_free + sp.n_nodes, None)}
    worst = dict.fromkeys([*blocks, "t"], 0.0)
    start = time.perf_counter()
    for k in range(100):
        q = random_state(ref, rng)
        t, mu = rng.uniform(0.0, ref.loading.T), (0.0, 0.1)[k % 2]
        x = q.pack(sp)
        fd = fd_gradient(lambda y: en.energy_total(ref, t, State.unpack(sp, y), mu), x)
        # grad_p is an L2 representative: weight by cell areas for the Euclidean gradient
        gp = sp.areas[:, None] * en.grad_p(ref, t, q, mu)
        analytic = np.concatenate([en.grad_u(ref, t, q, mu), en.grad_z(ref, t, q, mu), gp.ravel()])
        for name, sl in blocks.items():
            worst[name] = max(worst[name], _relative(analytic[sl], fd[sl]))
        fd_t = fd_gradient(lambda s: en.energy_total(ref, s[0], q, mu), np.array([t]))
        worst["t"] = max(worst["t"], _relative(np.array([en.partial_t_energy(ref, t, q)]), fd_t))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-6 and elapsed < 10.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f} s"
    assert acceptance(1, "gradients vs central differences", ok, detail), detail


def test_constitutive_hypotheses(rng, acceptance):
    mat = MaterialModel()
    fails = []
    # C: bounds, monotone in z, C' Lipschitz
    z = rng.uniform(-0.5, 2.0, N_SAMPLES)
    xi = rng.standard_normal((N_SAMPLES, 3))
    sq = (xi ** 2).sum(axis=1)
    qf = (mat.elastic_apply(z, xi) * xi).sum(axis=1)
    qf2 = (mat.elastic_apply(z + rng.uniform(0, 0.5, N_SAMPLES), xi) * xi).sum(axis=1)
    z2 = rng.uniform(-0.5, 2.0, N_SAMPLES)
    if not (np.all(mat.gamma1 * sq <= qf * (1 + 1e-14)) and np.all(qf <= mat.gamma2 * sq * (1 + 1e-14))):
        fails.append("C bounds")
    if not np.all(qf2 >= qf * (1 - 1e-14)):
        fails.append("C monotone")
    if not np.all(np.abs(mat.stiffness_prime(z) - mat.stiffness_prime(z2))
                  <= mat.stiffness_lipschitz() * np.abs(z - z2) + 1e-9):
        fails.append("C' Lipschitz")
    # W: nonnegative, convex, blow-up at 0
    zw = np.exp(rng.uniform(np.log(1e-2), np.log(10.0), N_SAMPLES))
    if not (np.all(mat.W(zw) >= 0) and np.all(mat.W_second(zw) > 0)):
        fails.append("W sign/convexity")
    s = np.sort(rng.uniform(1e-6, 0.1, N_SAMPLES))
    g = s ** 4 * mat.W(s)
    if not (np.all(np.diff(g) < 0) and g[0] > 1e3):
        fails.append("W blow-up")
    # K: nested balls between r_bar and R_bar, Hausdorff bound exact
    z1, z2 = rng.uniform(-0.5, 1.5, (2, N_SAMPLES))
    r1, r2 = mat.radius(z1), mat.radius(z2)
    haus = mat.hausdorff_K(z1, z2)
    if not np.all((r1 >= mat.r_bar) & (r1 <= mat.R_bar)):
        fails.append("K bounds")
    if not np.all(mat.radius(np.minimum(z1, z2)) <= mat.radius(np.maximum(z1, z2))):
        fails.append("K nested")
    if not (np.all(haus == np.abs(r1 - r2)) and np.all(haus <= mat.C_K * np.abs(z1 - z2) + 1e-12)):
        fails.append("Hausdorff bound")
    mc = max(abs(mc_hausdorff(mat, a, b, rng) - float(mat.hausdorff_K(a, b))) for a, b in zip(z1[:200], z2[:200]))
    if mc > 1e-12:
        fails.append("Hausdorff oracle")
    # D: two-sided ellipticity
    a = rng.standard_normal((N_SAMPLES, 3))
    dq = (mat.viscosity_apply(a) * a).sum(axis=1)
    if not np.allclose(dq, mat.delta * (a ** 2).sum(axis=1)):
        fails.append("D ellipticity")
    ok = not fails
    detail = f"{N_SAMPLES} samples per block; " + ("all hold" if ok else "failed " + ", ".join(fails))
    assert acceptance(2, "constitutive hypotheses", ok, detail), detail


def test_step_matches_oracle(tiny, rng, acceptance):
    combos = [c for c in itertools.product((1e-1, 1e-2), repeat=3) if c[2] <= c[1]]
    worst = 0.0
    start = time.perf_counter()
    for k in range(20):
        eps, mu, nu = combos[k % len(combos)]
        q = random_state(tiny, rng, z_range=(0.6, 1.0))
        t, dt = rng.uniform(0.2, 1.0), rng.uniform(0.01, 0.1)
        a = vs.step(tiny, q, t, dt, eps, mu, nu)
        b = brute_force_step(tiny, q, t, dt, eps, mu, nu, dissipation_state=vs.SolverOptions().dissipation_state)
        worst = max(worst, a.distance(b, tiny.space))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 60.0
    detail = f"worst distance {worst:.2e} over 20 steps; {elapsed:.1f} s"
    assert acceptance(3, "step vs brute-force oracle", ok, detail), detail


def test_viscous_balance_first_order(ref, ref_run, acceptance):
    coarse = ref_run.total_residual() / ref_run.energy_scale()
    fine_run = vs.solve(ref, equilibrated_datum(ref), vs.uniform_times(ref.loading.T, 400), ref_run.params)
    fine = fine_run.total_residual() / fine_run.energy_scale()
    ratio = coarse / fine
    ok = coarse <= 1e-3 and 1.5 <= ratio <= 3.0
    detail = f"relative residual {coarse:.2e} at N=200, {fine:.2e} at N=400, ratio {ratio:.2f}"
    assert acceptance(4, "viscous energy balance", ok, detail), detail


def test_fenchel_young(ref, ref_run, rng, acceptance):
    sp = ref.space
    low = np.inf
    for _ in range(N_SAMPLES):
        q = random_state(ref, rng)
        rate = State(sp.full_u(rng.standard_normal(sp.n_free)), -np.abs(rng.standard_normal(sp.n_nodes)),
                     rng.standard_normal((sp.n_cells, 2)))
        eps, nu = 10.0 ** rng.uniform(-3, 0, 2)
        low = min(low, ds.fenchel_dual_gap(ref, rng.uniform(0, ref.loading.T), q, rate, eps, rng.uniform(0, 1), nu))
    high = float(ref_run.gaps.max())
    ok = low >= -1e-10 and high <= 1e-8
    detail = f"min gap {low:.2e} on {N_SAMPLES} samples, max gap at converged steps {high:.2e}"
    assert acceptance(5, "Fenchel-Young gap", ok, detail), detail


def test_loading_rescaling_invariance(ref, rescaled_pair, acceptance):
    fast, slow = rescaled_pair
    a = rp.reparameterize(ref, fast)
    b = rp.reparameterize(ref, rp.rescale_time(slow, 2.0))
    dist = rp.curve_distance(ref, a, b)
    ok = dist <= 1e-4
    detail = f"sup distance {dist:.2e} at eps = 1e-3 under t -> 2t"
    assert acceptance(6, "reparameterization invariance", ok, detail), detail


def test_switching_conditions(ref, joint_sweep, ref_tol, acceptance):
    values = []
    for point in joint_sweep.points:
        lam = bv.recover_lambda(ref, point.knots, ref_tol)
        values.append(bv.switching_residuals(ref, point.knots, lam, ref_tol).max())
    decreasing = all(b < a for a, b in zip(values, values[1:]))
    ok = values[-1] <= 1e-3 and decreasing
    detail = "max residual along the JOINT grid " + " > ".join(f"{v:.3e}" for v in values)
    assert acceptance(7, "switching conditions", ok, detail), detail


def test_structure_of_terminal_curves(ref, joint_sweep, unstable_sweep, ref_tol, acceptance):
    a = bv.structure_detect(ref, unstable_sweep.terminal.knots, ref_tol)
    b = bv.structure_detect(ref, joint_sweep.terminal.knots, ref_tol)
    ok_a = a.s_star is not None and a.s_star > 0 and a.var_z <= 1e-6 and a.var_t <= 1e-6
    worst_b = max(b.bv0_residuals.values())
    ok_b = b.s_star == 0.0 and b.verdict_b and worst_b <= 1e-3
    detail = (f"(a) s* = {a.s_star:.4g}, var z {a.var_z:.1e}, var t {a.var_t:.1e}; "
              f"(b) s* = {b.s_star:.4g}, worst characterization residual {worst_b:.3e}")
    assert acceptance(8, "structure of terminal curves", ok_a and ok_b, detail), detail


@pytest.fixture(scope="module")
def commute_runs(tmp_path_factory):
    """Two full commute runs on the bundled reference config with the same seed."""
    out = []
    for name in ("first", "second"):
        target = tmp_path_factory.mktemp(name)
        start = time.perf_counter()
        code = cli.main(["commute", "--out", str(target), "--seed", "7"])
        out.append((target, code, time.perf_counter() - start))
    return out


def test_limit_paths_share_one_notion(commute_runs, acceptance, capsys):
    target, code, elapsed = commute_runs[0]
    capsys.readouterr()
    report = json.loads((target / "commute_report.json").read_text())
    balances = {p: r["terminal_balance"] for p, r in report["paths"].items()}
    ok = code == cli.EXIT_OK and all(v <= 1e-3 for v in balances.values()) and elapsed < 600.0
    detail = ", ".join(f"{p} {v:.2e}" for p, v in balances.items()) + f"; {elapsed:.0f} s"
    assert acceptance(9, "commuting limit paths", ok, detail), detail


def test_hill_duality_on_plastic_segments(ref, joint_sweep, ref_tol, acceptance):
    hill = bv.hill_duality_check(ref, joint_sweep.terminal.knots, ref_tol)
    ratio = hill.max_ratio()
    ok = hill.mask.sum() > 0 and ratio <= 1e-6
    detail = f"max |H - <sigma_D, p'>| / |p'| = {ratio:.2e} on {int(hill.mask.sum())} plastic samples"
    assert acceptance(10, "Hill duality", ok, detail), detail


def _designed_sequence(tiny, rng, sign):
    """(q_k, q'_k) -> (q, q') with t' = 0, z' = 0 and (u', p') != 0 at the limit."""
    sp = tiny.space
    q = unstable_datum(tiny, 0.8)
    qp = State(sp.full_u(rng.standard_normal(sp.n_free)), np.zeros(sp.n_nodes), rng.standard_normal((sp.n_cells, 2)))
    dq = random_state(tiny, rng, z_range=(-0.1, 0.0), u_scale=1.0, p_scale=1.0)
    dqp = random_state(tiny, rng, z_range=(0.0, 0.0), u_scale=1.0, p_scale=1.0)

    def member(h):
        h = sign * h
        return (State(q.u + h * dq.u, q.z - abs(h) * dq.z, q.p + h * dq.p),
                State(qp.u + h * dqp.u, qp.z.copy(), qp.p + h * dqp.p))
    return (q, qp), member


def test_limit_potential_lower_bound(tiny, rng, acceptance):
    tol = ct.default_tolerances(tiny)
    t, ks = 0.5, np.arange(21)
    worst = np.inf
    for sign in (1.0, -1.0, 1.0, -1.0):
        (q, qp), member = _designed_sequence(tiny, rng, sign)
        limit = ct.M0_CR(tiny, t, q, 0.0, qp, tol)
        values = np.array([ct.M0_mu0(tiny, t, qk, 0.0, qpk, 2.0 ** -k, tol).value
                           for k in ks for qk, qpk in [member(2.0 ** -k)]])
        # a convergent sequence has liminf = limit; its error is first order in 2^-k,
        # so Richardson extrapolation of the last two terms estimates it
        liminf = 2.0 * values[-1] - values[-2]
        worst = min(worst, liminf - (limit.value - 1e-6))
    ok = worst >= 0.0
    detail = f"min over sequences of liminf M0_mu0 - (M0_CR - 1e-6) = {worst:.2e}, mu_k = 2^-k, k <= 20"
    assert acceptance(11, "liminf of M0_mu0 dominates M0_CR", ok, detail), detail


def test_commute_is_deterministic(commute_runs, acceptance):
    (a, code_a, _), (b, code_b, _) = commute_runs
    names = sorted(p.name for p in a.glob("*.csv"))
    same = names == sorted(p.name for p in b.glob("*.csv")) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in names)
    ok = code_a == code_b == cli.EXIT_OK and bool(names) and same
    detail = f"{len(names)} CSV files compared byte for byte"
    assert acceptance(12, "determinism", ok, detail), detail

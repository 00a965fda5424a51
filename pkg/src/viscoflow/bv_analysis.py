"""Analysis of reparameterized curves: lambda recovery, switching conditions,
chain-rule and balance residuals, structure detection and limit sweeps."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import contact as ct
from . import dissipation as ds
from . import energy as en
from . import reparam as rp
from . import viscous_solver as vs

log = logging.getLogger(__name__)

EPS_FIRST, EPSNU_FIRST, JOINT = "EPS_FIRST", "EPSNU_FIRST", "JOINT"
PATHS = (EPS_FIRST, EPSNU_FIRST, JOINT)

DEFAULT_GRIDS = {
    JOINT: [(1e-1, 1e-1, 1e-1), (1e-2, 1e-2, 1e-2), (1e-3, 1e-3, 1e-3)],
    # eps first at frozen (mu, nu), then mu = nu jointly
    EPS_FIRST: [(1e-1, 1e-1, 1e-1), (1e-2, 1e-1, 1e-1), (1e-3, 1e-1, 1e-1), (1e-4, 1e-1, 1e-1),
                (1e-4, 1e-2, 1e-2), (1e-4, 1e-3, 1e-3)],
    # eps = nu first at frozen mu, then mu
    EPSNU_FIRST: [(1e-1, 1e-1, 1e-1), (1e-2, 1e-1, 1e-2), (1e-3, 1e-1, 1e-3), (1e-4, 1e-1, 1e-4),
                  (1e-4, 1e-2, 1e-4), (1e-4, 1e-3, 1e-4)],
}

POTENTIALS = ("CL", "CR", "mu0", "munu")


# -- per-sample data ------------------------------------------------------------
def _mu(traj, mu):
    return traj.params.mu if mu is None else mu


def annotate(problem, traj, mu=None):
    """Cache slopes, rate norms, energies and damage driving forces on ``traj``."""
    mu = _mu(traj, mu)
    key = ("annotated", mu)
    if traj.extra.get("key") == key:
        return traj.extra
    sp = problem.space
    ex = traj.extra
    ex["key"] = key
    ex["slopes"] = [ds.slope_parts(problem, t, q, mu) for t, q in zip(traj.t, traj.states)]
    ex["slopes0"] = [ds.slope_parts(problem, t, q, 0.0) for t, q in zip(traj.t, traj.states)]
    ex["rates"] = [ds.rate_norms(problem, qp) for qp in traj.rates["q"]]
    ex["E"] = np.array([en.energy_total(problem, t, q, mu) for t, q in zip(traj.t, traj.states)])
    ex["E0"] = np.array([en.energy_total(problem, t, q, 0.0) for t, q in zip(traj.t, traj.states)])
    ex["dtE"] = np.array([en.partial_t_energy(problem, t, q) for t, q in zip(traj.t, traj.states)])
    ex["g"] = [en.grad_z(problem, t, q, mu) / sp.node_mass for t, q in zip(traj.t, traj.states)]
    return ex


def _tol(problem, tol):
    return tol if tol is not None else ct.default_tolerances(problem)


def contact_series(problem, traj, potential="CR", tol=None, mu=None):
    """ContactValue per sample for one of the limit potentials."""
    if potential not in POTENTIALS:
        raise ValueError(f"unknown potential {potential!r}")
    tol = _tol(problem, tol)
    ex = annotate(problem, traj, mu)
    out = []
    for i, (q, qp) in enumerate(zip(traj.states, traj.rates["q"])):
        slopes = ex["slopes0"][i] if potential in ("CL", "CR") else ex["slopes"][i]
        data = ct.ContactData(ds.calR(problem, qp.z, tol.tol_unidir), ds.calH(problem, q.z, qp.p),
                              float(traj.rates["t"][i]), ex["rates"][i], slopes)
        if potential == "CL":
            out.append(ct.m0_cl(data, tol))
        elif potential == "CR":
            out.append(ct.m0_cr(data, tol))
        elif potential == "mu0":
            out.append(ct.m0_mu0(data, tol))
        else:
            out.append(ct.m0_munu(data, tol, traj.params.nu))
    return out


# -- lambda recovery ------------------------------------------------------------------
@dataclass
class LambdaProfile:
    lam_z: np.ndarray
    lam_up: np.ndarray
    regime: list
    fit_residual: np.ndarray
    up_limit: np.ndarray  # lam_up = 1 forced by vanishing (u,p) rates


def _lambda_z(problem, g, zp, dtilde, tp, d_up, tol):
    """Least-squares lam in lam z' + (1 - lam)(g - kappa) = 0 on the damaging nodes."""
    sp, kappa = problem.space, problem.material.kappa
    m = sp.node_mass
    a = g - kappa
    active = zp < -tol.tol_rate
    if active.any():
        diff = a[active] - zp[active]
        den = m[active] @ diff ** 2
        lam = float(np.clip(m[active] @ (a[active] * diff) / den, 0.0, 1.0)) if den > 0 else 1.0
    elif dtilde > tol.tol_eq:
        lam = 1.0  # driven but not moving: only lam = 1 is consistent
    elif tp > tol.tol_rate:
        lam = 0.0
    else:
        # stationary z inside a (u,p) transient: any lam fits, pick the switching-consistent one
        lam = 1.0 if d_up > tol.tol_rate else 0.0
    res_active = lam * zp[active] + (1.0 - lam) * a[active]
    res_idle = (1.0 - lam) * np.maximum(a[~active], 0.0)
    resid = np.sqrt(m[active] @ res_active ** 2 + m[~active] @ res_idle ** 2)
    return lam, float(resid)


def recover_lambda(problem, traj, tol=None, mu=None):
    tol = _tol(problem, tol)
    ex = annotate(problem, traj, mu)
    n = traj.n_samples
    lam_z, lam_up, fit = np.zeros(n), np.zeros(n), np.zeros(n)
    up_limit = np.zeros(n, dtype=bool)
    regime = []
    for i in range(n):
        sl, rn, tp = ex["slopes"][i], ex["rates"][i], float(traj.rates["t"][i])
        dstar, d_up = sl.dstar_mu(), rn.d_up()
        if dstar <= tol.tol_eq:
            lam_up[i] = 0.0
        elif d_up <= tol.tol_rate:
            lam_up[i], up_limit[i] = 1.0, True
        else:
            lt = dstar / d_up
            lam_up[i] = lt / (1.0 + lt)
        lam_z[i], fit[i] = _lambda_z(problem, ex["g"][i], traj.rates["q"][i].z, sl.z, tp, d_up, tol)
        data = ct.ContactData(ds.Extended(0.0), 0.0, tp, rn, sl)
        regime.append(ct.classify(data, tol))
    return LambdaProfile(lam_z, lam_up, regime, fit, up_limit)


# -- switching conditions ---------------------------------------------------------------
def _components(mask):
    """(start, stop) index pairs of the maximal runs of True in ``mask``."""
    out, start = [], None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


def _t_variation(t, mask):
    return max((t[b - 1] - t[a] for a, b in _components(mask)), default=0.0)


@dataclass
class SwitchingResiduals:
    tz: np.ndarray      # |t' lam_z|
    tup: np.ndarray     # |t' lam_up|
    cross: np.ndarray   # |lam_up (1 - lam_z)|
    t_var_A: float      # variation of t on components of {d_tilde > tol}
    t_var_B: float      # variation of t on components of {D* > tol}
    case: np.ndarray    # 1: t' > 0; 2: t' = 0 and D* > 0; 3: t' = 0 and D* = 0

    def max(self):
        return float(max(self.tz.max(initial=0.0), self.tup.max(initial=0.0), self.cross.max(initial=0.0)))


def switching_residuals(problem, traj, lam, tol=None, mu=None):
    tol = _tol(problem, tol)
    ex = annotate(problem, traj, mu)
    tp = np.asarray(traj.rates["t"], dtype=float)
    dtilde = np.array([s.z for s in ex["slopes"]])
    dstar = np.array([s.dstar_mu() for s in ex["slopes"]])
    case = np.where(tp > tol.tol_rate, 1, np.where(dstar > tol.tol_eq, 2, 3))
    return SwitchingResiduals(
        np.abs(tp * lam.lam_z), np.abs(tp * lam.lam_up), np.abs(lam.lam_up * (1.0 - lam.lam_z)),
        _t_variation(traj.t, dtilde > tol.tol_eq), _t_variation(traj.t, dstar > tol.tol_eq), case,
    )


# -- chain rule, balance, Hill ------------------------------------------------------------
def _energy_slope(traj, ex, key="E"):
    """-dE/ds + d_tE t' with the difference matching the rate scheme."""
    E, dtE, tp = ex[key], ex["dtE"], np.asarray(traj.rates["t"])
    if traj.scheme == "backward":
        h = np.diff(traj.s)
        dE = np.diff(E) / h
        power = 0.5 * (dtE[1:] + dtE[:-1])
        out = -dE + power * tp[1:]
        return np.concatenate([out[:1], out])
    return -np.gradient(E, traj.s) + dtE * tp


def _pairing(problem, t, q, qp, mu):
    """-<D E_mu(t, q), q'>."""
    sp = problem.space
    gu = en.grad_u(problem, t, q, mu)
    gz = en.grad_z(problem, t, q, mu)
    gp = en.grad_p(problem, t, q, mu)
    return -float(gu @ qp.u[sp.free_dofs] + gz @ qp.z + sp.areas @ (gp * qp.p).sum(axis=1))


@dataclass
class ChainRule:
    energy_side: np.ndarray    # -dE/ds + d_tE t'
    pairing: np.ndarray        # -<DE, q'>
    potential: np.ndarray      # finite part of the contact potential
    residual: np.ndarray       # max pairwise discrepancy


def chain_rule_residual(problem, traj, potential="CR", tol=None, mu=None):
    mu_ = _mu(traj, mu)
    ex = annotate(problem, traj, mu)
    i_side = _energy_slope(traj, ex)
    ii = np.array([_pairing(problem, t, q, qp, mu_) for t, q, qp in zip(traj.t, traj.states, traj.rates["q"])])
    iii = np.array([c.finite_part for c in contact_series(problem, traj, potential, tol, mu)])
    res = np.maximum.reduce([np.abs(i_side - ii), np.abs(ii - iii), np.abs(i_side - iii)])
    return ChainRule(i_side, ii, iii, res)


def energy_scale(problem, traj, mu=None):
    ex = annotate(problem, traj, mu)
    return float(max(np.abs(ex["E"]).max(), np.abs(ex["E0"]).max(), 1e-300))


def balance_residual(problem, traj, potential="CR", tol=None, mu=None, lo=0, hi=None):
    """Per-interval residual of E(s1) - E(s0) + int M - int d_tE t' with a limit potential.

    The potential is evaluated at the right end of each interval for knot-sampled
    curves and averaged for resampled ones; energies follow the potential (mu = 0
    for CL and CR, the curve's mu otherwise).
    """
    ex = annotate(problem, traj, mu)
    vals = np.array([c.finite_part for c in contact_series(problem, traj, potential, tol, mu)])
    E = ex["E0"] if potential in ("CL", "CR") else ex["E"]
    dtE, tp = ex["dtE"], np.asarray(traj.rates["t"])
    hi = traj.n_samples - 1 if hi is None else hi
    out = []
    for i in range(lo, hi):
        h = traj.s[i + 1] - traj.s[i]
        if traj.scheme == "backward":
            m, t_rate = vals[i + 1], tp[i + 1]
        else:
            m, t_rate = 0.5 * (vals[i] + vals[i + 1]), 0.5 * (tp[i] + tp[i + 1])
        out.append(E[i + 1] - E[i] + h * m - h * t_rate * 0.5 * (dtE[i] + dtE[i + 1]))
    return np.array(out)


def relative_balance(problem, traj, potential="CR", tol=None, mu=None, lo=0, hi=None):
    res = balance_residual(problem, traj, potential, tol, mu, lo, hi)
    return float(abs(res.sum()) / energy_scale(problem, traj, mu))


@dataclass
class HillReport:
    residual: np.ndarray   # |H(z, p') - <sigma_D - mu p, p'>|
    p_rate: np.ndarray     # |p'|_{L2}
    mask: np.ndarray       # rate-independent plastic samples

    def max_ratio(self):
        """max residual / |p'| over the masked samples (0 if none)."""
        if not self.mask.any():
            return 0.0
        return float((self.residual[self.mask] / self.p_rate[self.mask]).max())


def hill_duality_check(problem, traj, tol=None, mu=None):
    """Hill residual per sample; for mu > 0 the driving stress is sigma_D - mu p."""
    tol = _tol(problem, tol)
    mu = _mu(traj, mu)
    sp = problem.space
    n = traj.n_samples
    res, prate = np.zeros(n), np.zeros(n)
    for i, (t, q, qp) in enumerate(zip(traj.t, traj.states, traj.rates["q"])):
        drive = -en.grad_p(problem, t, q, mu)
        res[i] = abs(ds.calH(problem, q.z, qp.p) - sp.areas @ (drive * qp.p).sum(axis=1))
        prate[i] = sp.norm(qp.p, "L2p")
    mask = (np.asarray(traj.rates["t"]) > tol.tol_rate) & (prate > tol.tol_rate)
    return HillReport(res, prate, mask)


# -- structure detection ------------------------------------------------------------------
@dataclass
class StructureReport:
    s_star: float | None
    i_star: int | None
    transient: bool
    members: np.ndarray
    interval_ok: bool
    var_t: float
    var_z: float
    transient_residual: float
    verdict_a: bool
    bv0_residuals: dict = field(default_factory=dict)
    verdict_b: bool = False

    def as_dict(self):
        return {
            "s_star": self.s_star, "i_star": self.i_star, "transient": self.transient,
            "interval_ok": self.interval_ok, "var_t": self.var_t, "var_z": self.var_z,
            "transient_residual": self.transient_residual, "verdict_a": self.verdict_a,
            "bv0_residuals": self.bv0_residuals, "verdict_b": self.verdict_b,
        }


def bv0_residuals(problem, traj, lam, lo=0, tol=None, mu=None):
    """Normalized residuals of the differential characterization on samples lo..end."""
    tol = _tol(problem, tol)
    ex = annotate(problem, traj, mu)
    sl = ex["slopes"][lo:]
    tp = np.asarray(traj.rates["t"])[lo:]
    area = problem.space.areas.sum()
    sigma_scale = ct.problem_scale(problem)
    kappa_scale = problem.material.kappa * np.sqrt(area)
    moving = tp > tol.tol_rate
    hill = hill_duality_check(problem, traj, tol, mu)
    hill_mask = hill.mask[lo:]
    hill_ratio = (hill.residual[lo:][hill_mask] / hill.p_rate[lo:][hill_mask]).max(initial=0.0)
    out = {
        "slope": max((s.dstar_mu() for s in sl), default=0.0) / sigma_scale,
        "z_stationarity": max((s.z for s, mv in zip(sl, moving) if mv), default=0.0) / kappa_scale,
        "lambda_fit": float(lam.fit_residual[lo:].max(initial=0.0)) / kappa_scale,
        "switching": float((tp * lam.lam_z[lo:]).max(initial=0.0)),
        "hill": float(hill_ratio) / sigma_scale,
    }
    if lo < traj.n_samples - 1:
        out["energy"] = relative_balance(problem, traj, "CL", tol, mu, lo=lo)
    return {k: float(v) for k, v in out.items()}


def transient_flow_residual(problem, traj, lo=0, hi=None, mu=None):
    """Relative residual of the frozen-time (u, p) transient on samples lo..hi.

    The rates (u', p') must be a common multiple of the driving force
    (-D_u E, sigma_D - mu p - zeta) with zeta in the subdifferential of
    H(z, .) at p'.  The multiple is fitted by least squares; the residual
    is measured in H1_D x L2 and divided by the size of the force.
    """
    sp, mat = problem.space, problem.material
    mu = _mu(traj, mu)
    hi = traj.n_samples - 1 if hi is None else hi
    out = np.zeros(hi - lo + 1)
    for j, i in enumerate(range(lo, hi + 1)):
        t, q, qp = traj.t[i], traj.states[i], traj.rates["q"][i]
        a = -sp.solve_KD(en.grad_u(problem, t, q, mu))
        du = qp.u[sp.free_dofs]
        drive = -en.grad_p(problem, t, q, mu)
        r = mat.radius(sp.cell_values(q.z))
        pn = np.linalg.norm(qp.p, axis=1)
        dn = np.linalg.norm(drive, axis=1)
        flowing = pn > 0
        zeta = np.where(flowing[:, None], r[:, None] * qp.p / np.where(flowing, pn, 1.0)[:, None],
                        drive * np.minimum(1.0, r / np.where(dn > 0, dn, 1.0))[:, None])
        b = drive - zeta
        rate_sq = du @ sp.K_D @ du + sp.areas @ (qp.p ** 2).sum(axis=1)
        lam = (a @ sp.K_D @ du + sp.areas @ (b * qp.p).sum(axis=1)) / rate_sq if rate_sq > 0 else 0.0
        ea, eb = a - lam * du, b - lam * qp.p
        force = np.sqrt(a @ sp.K_D @ a + sp.areas @ (drive ** 2).sum(axis=1))
        err = np.sqrt(ea @ sp.K_D @ ea + sp.areas @ (eb ** 2).sum(axis=1))
        out[j] = err / force if force > 0 else 0.0
    return out


def structure_detect(problem, traj, tol=None, mu=None, tol_var=1e-6, tol_bv=1e-3, tol_transient=1e-6):
    """Locate s_* and test both halves of the structure statement."""
    tol = _tol(problem, tol)
    ex = annotate(problem, traj, mu)
    sp = problem.space
    dstar = np.array([s.dstar_mu() for s in ex["slopes"]])
    members = dstar <= tol.tol_eq
    tail_ok = np.logical_and.accumulate(members[::-1])[::-1]
    i_star = int(np.argmax(tail_ok)) if tail_ok.any() else None
    lam = recover_lambda(problem, traj, tol, mu)
    if i_star is None:
        return StructureReport(None, None, True, members, False, np.inf, np.inf, np.inf, False)
    # samples of S before s_* must sit near the threshold, not deep inside
    early = members[:i_star]
    interval_ok = not np.any(early & (dstar[:i_star] <= 0.1 * tol.tol_eq))
    var_t = float(traj.t[i_star] - traj.t[0])
    var_z = float(sum(sp.norm(traj.states[k + 1].z - traj.states[k].z, "Hm") for k in range(i_star)))
    transient = i_star > 0
    if transient:
        # rates at knot i come from the step ending there, so 1..i_star are transient steps
        trans_res = float(transient_flow_residual(problem, traj, 1, i_star, mu).max())
    else:
        trans_res = 0.0
    verdict_a = (not transient) or (var_t <= tol_var and var_z <= tol_var and trans_res <= tol_transient)
    bv0 = bv0_residuals(problem, traj, lam, lo=i_star, tol=tol, mu=mu)
    verdict_b = max(bv0.values(), default=0.0) <= tol_bv
    return StructureReport(float(traj.s[i_star]), i_star, transient, members, bool(interval_ok),
                           var_t, var_z, trans_res, bool(verdict_a), bv0, bool(verdict_b))


# -- limit sweeps ----------------------------------------------------------------------------
@dataclass
class SweepPoint:
    params: vs.ParamTriple
    run: vs.ViscousRun
    curve: rp.ParamTrajectory     # uniform in s, for comparisons and output
    knots: rp.ParamTrajectory     # knot-sampled, for the analysis
    violation: float = 0.0
    balance: float = 0.0
    rate_bound: float = 0.0


@dataclass
class SweepReport:
    path: str
    points: list
    cauchy: list
    monotone: bool

    @property
    def terminal(self):
        return self.points[-1]

    def as_dict(self):
        return {
            "path": self.path,
            "params": [p.params.as_dict() for p in self.points],
            "violations": [p.violation for p in self.points],
            "balance_residuals": [p.balance for p in self.points],
            "rate_bounds": [p.rate_bound for p in self.points],
            "cauchy": self.cauchy,
            "violations_monotone": self.monotone,
            "terminal_balance": self.terminal.balance,
        }


def validate_grid(path, grid):
    if path not in PATHS:
        raise ValueError(f"unknown sweep path {path!r}")
    if not grid:
        raise ValueError("empty parameter grid")
    triples = [g if isinstance(g, vs.ParamTriple) else vs.ParamTriple(*g) for g in grid]
    for p in triples:
        if p.nu > p.mu:
            raise ValueError(f"need nu <= mu along a sweep, got {p.as_dict()}")
    for a, b in zip(triples, triples[1:]):
        if b.eps > a.eps or b.mu > a.mu or b.nu > a.nu:
            raise ValueError("sweep grids must be nonincreasing in every parameter")
    return triples


def _run_point(args):
    problem, q0, times, params, options = args
    return vs.solve(problem, q0, times, params, options)


def limit_sweep(problem, q0, times, path, grid=None, options=None, workers=1, tol=None):
    """Solve along a parameter path and report convergence of the reparameterized curves."""
    triples = validate_grid(path, grid if grid is not None else DEFAULT_GRIDS[path])
    tol = _tol(problem, tol)
    jobs = [(problem, q0, times, p, options) for p in triples]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_point, jobs))
    else:
        runs = [_run_point(j) for j in jobs]
    points = []
    for p, run in zip(triples, runs):
        if run.failed:
            raise vs.StepError(f"{path} at {p.as_dict()}: {run.failed}")
        curve = rp.reparameterize(problem, run)
        knots = rp.reparameterize(problem, run, resample=False)
        viol = max(c.max_violation for c in contact_series(problem, knots, "CR", tol))
        bound = float(rp.normalization(problem, knots)[1:].max())
        points.append(SweepPoint(p, run, curve, knots, float(viol),
                                 relative_balance(problem, knots, "CR", tol), bound))
        log.info("%s %s: violation %.3e balance %.3e", path, p.as_dict(), viol, points[-1].balance)
    cauchy = [rp.curve_distance(problem, a.curve, b.curve) for a, b in zip(points, points[1:])]
    monotone = all(b.violation <= 2.0 * a.violation for a, b in zip(points, points[1:]))
    return SweepReport(path, points, cauchy, bool(monotone))


# -- single-curve summary ---------------------------------------------------------------
def curve_report(problem, traj, tol=None, tol_var=1e-6, tol_bv=1e-3):
    """All single-curve checks, as plain data."""
    tol = _tol(problem, tol)
    lam = recover_lambda(problem, traj, tol)
    sw = switching_residuals(problem, traj, lam, tol)
    chain = chain_rule_residual(problem, traj, "CR", tol)
    hill = hill_duality_check(problem, traj, tol)
    norm = rp.normalization(problem, traj)
    # the first sample of a knot curve repeats the first segment's rate
    drift = np.abs(norm - 1.0)
    structure = structure_detect(problem, traj, tol, tol_var=tol_var, tol_bv=tol_bv)
    return {
        "n_samples": traj.n_samples,
        "S": traj.S,
        "switching": {"tz": float(sw.tz.max(initial=0.0)), "tup": float(sw.tup.max(initial=0.0)),
                      "cross": float(sw.cross.max(initial=0.0)), "t_var_A": sw.t_var_A, "t_var_B": sw.t_var_B},
        "chain_rule_max": float(chain.residual.max(initial=0.0)),
        "balance": {name: relative_balance(problem, traj, name, tol) for name in POTENTIALS},
        "max_violation": {name: max(c.max_violation for c in contact_series(problem, traj, name, tol))
                          for name in POTENTIALS},
        "hill_max_ratio": hill.max_ratio(),
        "normalization_drift": float(drift.max(initial=0.0)),
        "normalization_flagged": int((drift > 1e-8).sum()),
        "lambda_fit_max": float(lam.fit_residual.max(initial=0.0)),
        "structure": structure.as_dict(),
    }

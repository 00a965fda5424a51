"""Slow, independent reference computations for the test suites.

Nothing here is used by the solver.  The incremental step is re-solved by a
derivative-free grid search followed by a proximal-gradient polish, so its
agreement with the Newton/return-map solver is a genuine cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import dissipation as ds
from . import energy as en
from .contact import VISCOUS_UP, VISCOUS_Z
from .discretization import State
from .instances import equilibrated_datum, unstable_datum
from .reparam import ParamTrajectory

DEFAULT_SEED = 0xC0FFEE
MAX_TINY_DIM = 12


def fd_gradient(functional, point, h=1e-6):
    """Central finite differences of a scalar functional."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.asarray(point, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (functional(x + e) - functional(x - e)) / (2.0 * h)
    return grad


def mc_hausdorff(material, z1, z2, rng, n_dirs=64):
    """Monte-Carlo Hausdorff distance of K(z1) and K(z2) from boundary samples.

    Each set is probed at ``n_dirs`` random boundary points; the distance of a
    point to the other set is computed by projection.  Exact for balls as soon
    as one direction is sampled, a lower bound in general.
    """
    best = 0.0
    for za, zb in ((z1, z2), (z2, z1)):
        dirs = rng.standard_normal((n_dirs, 2))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pts = material.radius(za) * dirs
        gap = np.linalg.norm(pts - material.project_K(np.full(n_dirs, zb), pts), axis=1)
        best = max(best, float(gap.max()))
    return best


# -- incremental functional --------------------------------------------------------
class _StepFunctional:
    """dt Psi(q_prev, (q - q_prev)/dt) + E_mu(t, q) on packed vectors.

    Split as smooth(x) + nonsmooth(x): the nonsmooth part is the plastic
    dissipation sum_c area_c r(zhat_c) |p_c - p_prev_c| plus the box
    z_min <= z <= z_prev; zhat is the damage field frozen in the dissipation.
    """

    def __init__(self, problem, q_prev, t, dt, eps, mu, nu, z_hat, z_min):
        sp = problem.space
        self.problem, self.q_prev, self.t, self.dt = problem, q_prev, t, dt
        self.eps, self.mu, self.nu = eps, mu, nu
        self.x_prev = q_prev.pack(sp)
        nf, nn = sp.n_free, sp.n_nodes
        self.su, self.sz, self.sp_ = slice(0, nf), slice(nf, nf + nn), slice(nf + nn, None)
        self.lo = np.full(nn, z_min)
        self.hi = q_prev.z.copy()
        self.set_z_hat(z_hat)

    def set_z_hat(self, z_hat):
        sp, mat = self.problem.space, self.problem.material
        self.z_hat = z_hat.copy()
        self.weights = sp.areas * mat.radius(sp.cell_values(z_hat))

    def state(self, x):
        return State.unpack(self.problem.space, x)

    def smooth(self, x):
        sp, mat = self.problem.space, self.problem.material
        q = self.state(x)
        rate = State((q.u - self.q_prev.u) / self.dt, (q.z - self.q_prev.z) / self.dt, (q.p - self.q_prev.p) / self.dt)
        rn = ds.rate_norms(self.problem, rate)
        quad = 0.5 * self.eps * self.nu * (rn.u ** 2 + rn.p ** 2) + 0.5 * self.eps * rn.z ** 2
        damage = mat.kappa * sp.node_mass @ (self.q_prev.z - q.z)
        return self.dt * quad + damage + en.energy_total(self.problem, self.t, q, self.mu)

    def smooth_grad(self, x):
        sp, mat = self.problem.space, self.problem.material
        q = self.state(x)
        a = self.eps * self.nu / self.dt
        g = np.empty_like(x)
        g[self.su] = a * sp.K_D @ (x[self.su] - self.x_prev[self.su]) + en.grad_u(self.problem, self.t, q, self.mu)
        g[self.sz] = (self.eps / self.dt * sp.node_mass * (q.z - self.q_prev.z) - mat.kappa * sp.node_mass
                      + en.grad_z(self.problem, self.t, q, self.mu))
        gp = a * (q.p - self.q_prev.p) + en.grad_p(self.problem, self.t, q, self.mu)
        g[self.sp_] = (sp.areas[:, None] * gp).ravel()
        return g

    def nonsmooth(self, x):
        z = x[self.sz]
        if np.any(z < self.lo) or np.any(z > self.hi):
            return np.inf
        jump = (x[self.sp_] - self.x_prev[self.sp_]).reshape(-1, 2)
        return float(self.weights @ np.linalg.norm(jump, axis=1))

    def __call__(self, x):
        ns = self.nonsmooth(x)
        return ns if not np.isfinite(ns) else self.smooth(x) + ns

    def prox(self, x, step):
        """Prox of step * nonsmooth: box clip on z, shrinkage of p around p_prev."""
        out = x.copy()
        out[self.sz] = np.clip(x[self.sz], self.lo, self.hi)
        jump = (x[self.sp_] - self.x_prev[self.sp_]).reshape(-1, 2)
        n = np.linalg.norm(jump, axis=1)
        shrink = np.maximum(1.0 - step * self.weights / np.where(n > 0, n, 1.0), 0.0)
        out[self.sp_] = self.x_prev[self.sp_] + (shrink[:, None] * jump).ravel()
        return out


def _grid_search(phi, x0, half_width, rounds=3, points=9, max_sweeps=50):
    """Cyclic coordinate search on a 9-point stencil, refined ``rounds`` times."""
    x, fx = x0.copy(), phi(x0)
    if not np.isfinite(fx):
        raise ValueError("incremental functional is not finite at the previous state")
    offsets = np.linspace(-1.0, 1.0, points)
    h = half_width
    for _ in range(rounds):
        for _ in range(max_sweeps):
            improved = False
            for i in range(x.size):
                trial = x.copy()
                best_v, best_f = x[i], fx
                for o in offsets:
                    trial[i] = x[i] + o * h
                    f = phi(trial)
                    if f < best_f:
                        best_v, best_f = trial[i], f
                if best_f < fx:
                    x[i], fx, improved = best_v, best_f, True
            if not improved:
                break
        h /= (points - 1) / 2
    return x


def _prox_gradient(F, x, tol=1e-10, max_iter=200_000, polish=True):
    """Accelerated proximal gradient with backtracking and adaptive restart."""
    L = 1.0
    y, x_old, theta = x.copy(), x.copy(), 1.0
    fx = F(x)
    for _ in range(max_iter):
        g = F.smooth_grad(y)
        fy = F.smooth(y)
        while True:
            x_new = F.prox(y - g / L, 1.0 / L)
            d = x_new - y
            if F.smooth(x_new) <= fy + g @ d + 0.5 * L * d @ d + 1e-14 * (1.0 + abs(fy)):
                break
            L *= 2.0
        f_new = F(x_new)
        if f_new > fx + 1e-15 * (1.0 + abs(fx)):
            if theta == 1.0:
                # no descent even without momentum: rounding floor
                return _polish(F, x, L, tol) if polish else x
            # restart the momentum from the last accepted point
            y, theta = x.copy(), 1.0
            continue
        grad_map = L * np.linalg.norm(d)
        x_old, x, fx = x, x_new, f_new
        if grad_map <= tol:
            return x
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta ** 2))
        y = x + (theta - 1.0) / theta_new * (x - x_old)
        theta = theta_new
        L *= 0.9
    return x


def _polish(F, x, L, tol, max_iter=2000, patience=20):
    """Plain proximal-gradient steps taken without a value-based descent test.

    Near the minimizer F is flat to rounding level, so value comparisons stop
    the accelerated loop while x is still off by about sqrt(machine eps).
    The fixed-point step contracts x regardless; a growing step means 1/L is
    too long, so the move is undone and L doubled.
    """
    L *= 2.0
    best = np.inf
    stalled = 0
    for _ in range(max_iter):
        x_new = F.prox(x - F.smooth_grad(x) / L, 1.0 / L)
        step = L * np.linalg.norm(x_new - x)
        if not np.isfinite(step) or step > 2.0 * best:
            L *= 2.0
            continue
        x = x_new
        if step <= tol:
            break
        if step < best:
            best, stalled = step, 0
        else:
            stalled += 1
            if stalled >= patience:
                break
    return x


def brute_force_step(problem, q_prev, t, dt, eps, mu, nu, dissipation_state="previous", z_min=1e-3,
                     half_width=0.25, tol=1e-10):
    """Reference minimizer of one incremental step on a tiny instance.

    For ``dissipation_state="current"`` the dissipation's damage field is
    updated to the minimizer's until it stops changing.
    """
    sp = problem.space
    dim = sp.n_free + sp.n_nodes + 2 * sp.n_cells
    if dim > MAX_TINY_DIM:
        raise ValueError(f"brute force is limited to {MAX_TINY_DIM} unknowns, got {dim}")
    if dt <= 0 or eps <= 0 or nu <= 0 or mu < 0:
        raise ValueError("need dt, eps, nu > 0 and mu >= 0")
    F = _StepFunctional(problem, q_prev, t, dt, eps, mu, nu, q_prev.z, z_min)
    x = _grid_search(F, F.x_prev, half_width)
    x = _prox_gradient(F, x, tol)
    if dissipation_state == "current":
        for _ in range(200):
            z_old = F.z_hat
            F.set_z_hat(x[F.sz])
            x = _prox_gradient(F, x, tol, polish=False)
            if np.abs(x[F.sz] - z_old).max() <= 1e-13:
                break
        x = _prox_gradient(F, x, tol)
    elif dissipation_state != "previous":
        raise ValueError(f"unknown dissipation_state {dissipation_state!r}")
    return F.state(x)


# -- manufactured jump transients --------------------------------------------------
@dataclass(frozen=True)
class LimitParams:
    """Parameters of a limit curve: only the hardening survives."""

    mu: float = 0.0

    def as_dict(self):
        return {"mu": self.mu}


def _jump_up_rhs(problem, t, z, mu, lam_tilde):
    sp, mat = problem.space, problem.material
    r = mat.radius(sp.cell_values(z))

    def rhs(s, x):
        q = State.unpack(sp, x)
        du = -sp.solve_KD(en.grad_u(problem, t, q, mu))
        drive = -en.grad_p(problem, t, q, mu)
        dn = np.linalg.norm(drive, axis=1)
        over = np.maximum(dn - r, 0.0) / np.where(dn > 0, dn, 1.0)
        dp = over[:, None] * drive
        out = np.zeros_like(x)
        out[:sp.n_free] = du / lam_tilde(s)
        out[sp.n_free + sp.n_nodes:] = (dp / lam_tilde(s)).ravel()
        return out

    return rhs


def equilibrium_u(problem, t, z, p):
    """Free displacement dofs solving D_u E(t, (u, z, p)) = 0 (linear in u)."""
    sp, mat = problem.space, problem.material
    c3 = np.repeat(mat.stiffness(sp.cell_values(z)), 3)
    K = sp.B_free.T @ ((sp.cell_weights3 * c3)[:, None] * sp.B_free)
    base = en.grad_u(problem, t, State(np.zeros(sp.n_dofs), z, p))
    return -np.linalg.solve(K, base)


def _jump_z_rhs(problem, t, p, mu, lam_z):
    sp, kappa = problem.space, problem.material.kappa

    def rhs(s, z):
        q = State(sp.full_u(equilibrium_u(problem, t, z, p)), z, p)
        a = en.grad_z(problem, t, q, mu) / sp.node_mass - kappa
        lam = lam_z(s)
        return -(1.0 - lam) / lam * np.maximum(a, 0.0)

    return rhs


def manufactured_jump(problem, kind, n_samples=41, S=None, mu=0.0, t=None, q0=None, lam=None):
    """Synthetic jump curve at frozen time with a planted lambda profile.

    VISCOUS_UP: z frozen, lam_tilde * (u', p') equals the (u, p) driving force
    with lam_tilde = lam/(1 - lam) (default lam_up = 0.5).  VISCOUS_Z: p
    frozen inside the elastic domain, u kept in equilibrium, and
    lam_z z' + (1 - lam_z)(D_z E - kappa) = 0 on the driven nodes with lam_z
    rising linearly from 0.3 to 0.7 (default).  The curve is integrated to
    1e-10 relative accuracy; rates are the exact right-hand sides at the
    samples, except u' on VISCOUS_Z curves, which is a central difference of
    the dense solution.  The planted profile is in ``extra["planted"]``.
    """
    sp = problem.space
    if kind == VISCOUS_UP:
        t = problem.loading.T * 0.0 if t is None else t
        q0 = unstable_datum(problem, z0=0.8) if q0 is None else q0
        S = 0.005 if S is None else S
        lam = (lambda s: 0.5) if lam is None else lam
        rhs = _jump_up_rhs(problem, t, q0.z, mu, lambda s: lam(s) / (1.0 - lam(s)))
    elif kind == VISCOUS_Z:
        return _manufactured_z_jump(problem, n_samples, S, mu, t, q0, lam)
    else:
        raise ValueError(f"no manufactured jump of kind {kind!r}")
    s = np.linspace(0.0, S, n_samples)
    sol = solve_ivp(rhs, (0.0, S), q0.pack(sp), t_eval=s, rtol=1e-10, atol=1e-12, method="DOP853")
    if not sol.success:
        raise RuntimeError(f"manufactured jump integration failed: {sol.message}")
    states = [State.unpack(sp, col) for col in sol.y.T]
    rates = [State.unpack(sp, rhs(si, col)) for si, col in zip(s, sol.y.T)]
    return _planted_curve(problem, kind, s, t, states, rates, mu, lam)


def _manufactured_z_jump(problem, n_samples, S, mu, t, q0, lam):
    sp = problem.space
    t = problem.loading.T if t is None else t
    q0 = equilibrated_datum(problem, 0.8) if q0 is None else q0
    S = 0.005 if S is None else S
    lam = (lambda s: 0.3 + 0.4 * s / S) if lam is None else lam
    p = q0.p.copy()
    rhs = _jump_z_rhs(problem, t, p, mu, lam)
    s = np.linspace(0.0, S, n_samples)
    sol = solve_ivp(rhs, (0.0, S), q0.z, t_eval=s, rtol=1e-10, atol=1e-12, method="DOP853", dense_output=True)
    if not sol.success:
        raise RuntimeError(f"manufactured jump integration failed: {sol.message}")

    def u_at(si):
        return sp.full_u(equilibrium_u(problem, t, sol.sol(si), p))

    h = 1e-6 * S
    states, rates = [], []
    for si, z in zip(s, sol.y.T):
        states.append(State(u_at(si), z.copy(), p.copy()))
        lo, hi = max(si - h, 0.0), min(si + h, S)
        du = (u_at(hi) - u_at(lo)) / (hi - lo)
        rates.append(State(du, rhs(si, z), np.zeros_like(p)))
    return _planted_curve(problem, VISCOUS_Z, s, t, states, rates, mu, lam)


def _planted_curve(problem, kind, s, t, states, rates, mu, lam):
    n_samples = len(s)
    traj = ParamTrajectory(LimitParams(mu), s, np.full(n_samples, float(t)), states, knot_s=s.copy(),
                           rates={"t": np.zeros(n_samples), "q": rates}, scheme="exact")
    traj.extra["planted"] = {"kind": kind, "lam": np.array([lam(si) for si in s])}
    return traj

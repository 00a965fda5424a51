"""Incremental solution of the viscous damage-plasticity gradient system.

Each step minimizes

    dt * Psi(q_prev, (q - q_prev)/dt) + E_mu(t_k, q)

by alternating a damage step (bound-constrained Newton on z_min <= z <= z_prev)
with a displacement-plasticity step (semismooth Newton on u with the plastic
strain eliminated cell by cell through the closed-form return map).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve

from . import dissipation as ds
from . import energy as en
from .discretization import State

log = logging.getLogger(__name__)

DISSIPATION_STATES = ("previous", "current")


class StepError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    """``dissipation_state`` picks the damage field inside the plastic
    dissipation: "previous" freezes it at z_prev (each step is then a convex
    minimization), "current" uses the new z (backward Euler for the state
    dependence; the step becomes a fixed point of the two sub-minimizations).

    "current" is the default: with "previous" the stress of a damaging,
    yielding cell sits outside K(z_k) by up to C_K |z_k - z_{k-1}|, which
    leaves an O(dt) floor in every plastic slope.
    """

    tol_alt: float = 1e-10
    max_alt: int = 10_000
    z_min: float = 1e-3
    dissipation_state: str = "current"
    max_newton: int = 200

    def __post_init__(self):
        if self.tol_alt <= 0 or self.max_alt < 1 or self.z_min <= 0:
            raise ValueError("solver tolerances must be positive")
        if self.dissipation_state not in DISSIPATION_STATES:
            raise ValueError(f"unknown dissipation_state {self.dissipation_state!r}")


@dataclass(frozen=True)
class ParamTriple:
    eps: float
    mu: float
    nu: float

    def __post_init__(self):
        if self.eps <= 0 or self.nu <= 0 or self.mu < 0:
            raise ValueError("need eps > 0, nu > 0, mu >= 0")

    def as_dict(self):
        return {"eps": self.eps, "mu": self.mu, "nu": self.nu}


# -- cell-wise return map ----------------------------------------------------
@dataclass
class _CellResponse:
    p: np.ndarray          # (nc, 2)
    sigma: np.ndarray      # (nc, 3)
    density: np.ndarray    # (nc,) energy density incl. plastic dissipation
    tangent: np.ndarray    # (nc, 3, 3)


def _return_map(strain, c, r, p_prev, a_p, mu, want_tangent=True):
    """Minimize r|pi| + a_p/2 |pi|^2 + mu/2 |p|^2 + c/2 |strain - p|^2 over p = p_prev + pi."""
    dev = strain[:, 1:]
    h = a_p + mu + c
    g = c[:, None] * (dev - p_prev) - mu * p_prev
    gn = np.linalg.norm(g, axis=1)
    flow = gn > r
    safe = np.where(gn > 0, gn, 1.0)
    amount = np.where(flow, (gn - r) / h, 0.0)
    pi = (amount / safe)[:, None] * g
    p = p_prev + pi
    el_dev = dev - p
    sigma = np.empty_like(strain)
    sigma[:, 0] = c * strain[:, 0]
    sigma[:, 1:] = c[:, None] * el_dev
    pin = np.linalg.norm(pi, axis=1)
    density = (r * pin + 0.5 * a_p * pin ** 2 + 0.5 * mu * (p ** 2).sum(axis=1)
               + 0.5 * c * (strain[:, 0] ** 2 + (el_dev ** 2).sum(axis=1)))
    tangent = None
    if want_tangent:
        nc = len(c)
        tangent = np.zeros((nc, 3, 3))
        tangent[:, 0, 0] = c
        eye = np.eye(2)
        n = g / safe[:, None]
        ratio = np.where(flow, r / safe, 0.0)
        corr = (1.0 - ratio)[:, None, None] * eye + ratio[:, None, None] * np.einsum("ci,cj->cij", n, n)
        corr *= np.where(flow, c ** 2 / h, 0.0)[:, None, None]
        tangent[:, 1:, 1:] = c[:, None, None] * eye - corr
    return _CellResponse(p, sigma, density, tangent)


# -- sub-steps ----------------------------------------------------------------
def _up_step(problem, t, z, r, u_prev_free, p_prev, u_start_free, a_u, a_p, mu, opts):
    sp, mat, ld = problem.space, problem.material, problem.loading
    c = mat.stiffness(sp.cell_values(z))
    w = ld.w(t)
    Bw = sp.B @ w
    F = ld.F(t)
    Ff = F[sp.free_dofs]
    load_const = -F @ w
    Bf = sp.B_free
    wts = sp.cell_weights3

    def evaluate(uf, tangent=True):
        strain = (Bf @ uf + Bw).reshape(-1, 3)
        cr = _return_map(strain, c, r, p_prev, a_p, mu, tangent)
        du = uf - u_prev_free
        phi = 0.5 * a_u * du @ sp.K_D @ du + sp.areas @ cr.density - Ff @ uf + load_const
        grad = a_u * sp.K_D @ du + Bf.T @ (wts * cr.sigma.ravel()) - Ff
        return phi, grad, cr

    uf = u_start_free.copy()
    phi, grad, cr = evaluate(uf)
    gscale = 1.0 + np.abs(Ff).max(initial=0.0) + np.abs(Bf.T @ (wts * np.abs(cr.sigma).ravel())).max(initial=0.0)
    for _ in range(opts.max_newton):
        blocks = sp.areas[:, None, None] * cr.tangent
        H = a_u * sp.K_D + _assemble_tangent(Bf, blocks)
        try:
            d = -cho_solve(cho_factor(H), grad)
        except LinAlgError:
            d = -solve(H, grad, assume_a="sym")
        slope = grad @ d
        if -slope <= 1e-15 * (1.0 + abs(phi)):
            uf = uf + d
            phi, grad, cr = evaluate(uf)
            break
        alpha = 1.0
        while True:
            phi_new, grad_new, cr_new = evaluate(uf + alpha * d)
            if phi_new <= phi + 1e-4 * alpha * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        uf = uf + alpha * d
        small = np.abs(alpha * d).max(initial=0.0) <= 1e-15 * (1.0 + np.abs(uf).max(initial=0.0))
        phi, grad, cr = phi_new, grad_new, cr_new
        if small or np.abs(grad).max(initial=0.0) <= 1e-15 * gscale:
            break
    return uf, cr.p


def _assemble_tangent(Bf, blocks):
    nc = blocks.shape[0]
    TB = np.matmul(blocks, Bf.reshape(nc, 3, -1)).reshape(3 * nc, -1)
    return Bf.T @ TB


def _z_step(problem, strain_sq, z_start, z_prev, a_z, opts):
    """Bound-constrained Newton for the damage sub-problem at fixed strain."""
    sp, mat = problem.space, problem.material
    m, A, P = sp.node_mass, sp.Am, sp.avg_op
    kappa = mat.kappa
    lo = np.full_like(z_prev, opts.z_min)
    hi = z_prev
    cell_w = 0.5 * sp.areas * strain_sq

    def f(z):
        zc = P @ z
        return (kappa * m @ (z_prev - z) + 0.5 * a_z * m @ (z - z_prev) ** 2 + m @ mat.W(z)
                + 0.5 * z @ A @ z + cell_w @ mat.stiffness(zc))

    def gradient(z):
        zc = P @ z
        return (-kappa * m + a_z * m * (z - z_prev) + m * mat.W_prime(z) + A @ z
                + P.T @ (cell_w * mat.stiffness_prime(zc)))

    def hessian(z):
        zc = P @ z
        curv = cell_w * mat.stiffness_second(zc)
        # drop negative curvature of the stiffness profile to keep a descent direction
        Hm = np.diag(a_z * m + m * mat.W_second(z)) + A + P.T @ (np.maximum(curv, 0.0)[:, None] * P)
        return Hm

    z = np.clip(z_start, lo, hi)
    fz = f(z)
    for _ in range(opts.max_newton):
        g = gradient(z)
        # force scale of the individual terms, for a relative stationarity test
        zc = P @ z
        gscale = (kappa * m + np.abs(m * mat.W_prime(z)) + np.abs(A @ z)
                  + P.T @ np.abs(cell_w * mat.stiffness_prime(zc))).max()
        at_lo, at_hi = z <= lo, z >= hi
        pg = np.where((at_lo & (g > 0)) | (at_hi & (g < 0)), 0.0, g)
        if np.abs(pg).max(initial=0.0) <= 1e-14 * gscale:
            break
        H = hessian(z)
        diag = np.diag(H)
        proj = z - np.clip(z - g / diag, lo, hi)
        tol_act = min(1e-8, np.abs(proj).max())
        active = ((z <= lo + tol_act) & (g > 0)) | ((z >= hi - tol_act) & (g < 0))
        free = ~active
        d = np.zeros_like(z)
        if free.any():
            Hf = H[np.ix_(free, free)]
            d[free] = -np.linalg.solve(Hf, g[free])
        # nodes within tol_act of a bound they are pushed against snap onto it;
        # a diagonal step can stall short of the bound and never settle
        d[active] = np.where(g[active] > 0, lo[active], hi[active]) - z[active]
        if -g @ d <= 1e-11 * (1.0 + abs(fz)):
            # predicted decrease near the rounding of f, where Armijo tests are
            # noise: accept the Newton step and let the gradient test decide
            z_new = np.clip(z + d, lo, hi)
            f_new = f(z_new)
        else:
            alpha = 1.0
            while True:
                z_new = np.clip(z + alpha * d, lo, hi)
                f_new = f(z_new)
                if f_new <= fz + 1e-4 * g @ (z_new - z) or alpha < 1e-14:
                    break
                alpha *= 0.5
        step_size = np.abs(z_new - z).max(initial=0.0)
        z, fz = z_new, f_new
        if step_size <= 1e-15 * (1.0 + np.abs(z).max()):
            break
    return z


# -- one time step ---------------------------------------------------------------
def step(problem, q_prev, t_k, dt, eps, mu, nu, options=None, guess=None):
    """Return q^k for one implicit step from q_prev at time t_k."""
    opts = options or SolverOptions()
    if dt <= 0:
        raise ValueError("dt must be positive")
    if eps <= 0 or nu <= 0 or mu < 0:
        raise ValueError("need eps > 0, nu > 0, mu >= 0")
    if np.any(q_prev.z <= 0):
        raise ValueError("previous damage must be positive")
    sp, mat = problem.space, problem.material
    a_u = a_p = eps * nu / dt
    a_z = eps / dt
    u_prev_f = q_prev.u[sp.free_dofs]
    r_prev = mat.radius(sp.cell_values(q_prev.z))
    q = (guess or q_prev).copy()
    q.z = np.minimum(q.z, q_prev.z)
    ld = problem.loading
    Bw = sp.B @ ld.w(t_k)

    for it in range(1, opts.max_alt + 1):
        r = r_prev if opts.dissipation_state == "previous" else mat.radius(sp.cell_values(q.z))
        uf, p = _up_step(problem, t_k, q.z, r, u_prev_f, q_prev.p, q.u[sp.free_dofs], a_u, a_p, mu, opts)
        strain = (sp.B_free @ uf + Bw).reshape(-1, 3)
        strain[:, 1:] -= p
        z = _z_step(problem, (strain ** 2).sum(axis=1), q.z, q_prev.z, a_z, opts)
        new = State(sp.full_u(uf), z, p)
        change = new.distance(q, sp)
        size = np.sqrt(sp.norm(uf, "H1D") ** 2 + sp.norm(z, "Hm") ** 2 + sp.norm(p, "L2p") ** 2)
        q = new
        if change <= opts.tol_alt * (1.0 + size):
            break
    else:
        raise StepError(f"alternating scheme did not converge in {opts.max_alt} iterations")
    if np.any(q.z <= opts.z_min * (1.0 + 1e-12)):
        raise StepError("damage reached the numerical floor z_min")
    log.debug("t=%.6g converged in %d alternations", t_k, it)
    return q


# -- whole runs -----------------------------------------------------------------
@dataclass
class ViscousRun:
    params: ParamTriple
    times: np.ndarray
    states: list
    energies: np.ndarray = field(default=None)
    residuals: np.ndarray = field(default=None)
    dissipation: np.ndarray = field(default=None)
    gaps: np.ndarray = field(default=None)
    dissipation_state: str = "current"
    failed: str | None = None

    @property
    def n_steps(self):
        return len(self.states) - 1

    def total_residual(self):
        return float(np.abs(self.residuals).sum())

    def energy_scale(self):
        return float(max(np.abs(self.energies).max(), self.dissipation.sum(), 1e-300))


def uniform_times(T, n_steps):
    if n_steps < 1:
        raise ValueError("need at least one step")
    return np.linspace(0.0, T, n_steps + 1)


def layered_times(T, n_steps, min_dt=1e-10, growth=1.5):
    """Uniform grid whose first interval is split geometrically down to ``min_dt``.

    Resolves the fast (u, p) transient that follows an unstable initial datum;
    consecutive layer steps grow by ``growth``.
    """
    if growth <= 1.0 or min_dt <= 0:
        raise ValueError("need growth > 1 and min_dt > 0")
    base = uniform_times(T, n_steps)
    dt = base[1]
    depth = max(int(np.ceil(np.log(dt / min_dt) / np.log(growth))), 0)
    layer = dt * growth ** -np.arange(depth, 0, -1, dtype=float)
    return np.concatenate([[0.0], layer, base[1:]])


def solve(problem, q0, times, params, options=None, on_step=None):
    """Run the scheme on the time grid; returns a ViscousRun with balance data.

    On a step failure the run is returned truncated with ``failed`` set.
    """
    opts = options or SolverOptions()
    if np.any(q0.z > 1.0 + 1e-12):
        raise ValueError("initial damage must not exceed 1")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be increasing")
    eps, mu, nu = params.eps, params.mu, params.nu
    states = [q0.copy()]
    energies = [en.energy_total(problem, times[0], q0, mu)]
    residuals, dissipation, gaps = [], [], []
    failed = None
    for k in range(1, len(times)):
        dt = times[k] - times[k - 1]
        prev = states[-1]
        try:
            q = step(problem, prev, times[k], dt, eps, mu, nu, opts, guess=prev)
        except StepError as exc:
            failed = f"step {k} at t={times[k]:.6g}: {exc}"
            log.error(failed)
            break
        states.append(q)
        energies.append(en.energy_total(problem, times[k], q, mu))
        res, diss, gap = _balance_terms(problem, times[k - 1], times[k], prev, q, params, opts)
        residuals.append(res)
        dissipation.append(diss)
        gaps.append(gap)
        if on_step is not None:
            on_step(k, q)
    run = ViscousRun(params, times[: len(states)], states, np.array(energies), np.array(residuals),
                     np.array(dissipation), np.array(gaps), opts.dissipation_state, failed)
    return run


def step_rate(prev, q, dt):
    return State((q.u - prev.u) / dt, (q.z - prev.z) / dt, (q.p - prev.p) / dt)


def _balance_terms(problem, t0, t1, prev, q, params, opts):
    """Per-step residual of the energy-dissipation balance, dissipated energy, dual gap."""
    eps, mu, nu = params.eps, params.mu, params.nu
    dt = t1 - t0
    rate = step_rate(prev, q, dt)
    z_diss = prev.z if opts.dissipation_state == "previous" else q.z
    psi = ds.psi_eps_nu(problem, q, rate, eps, nu, z_diss=z_diss)
    gu = en.grad_u(problem, t1, q, mu)
    gz = en.grad_z(problem, t1, q, mu)
    gp = en.grad_p(problem, t1, q, mu)
    conj = ds.psi_conjugate(problem, z_diss, -gu, -gz, -gp, eps, nu)
    diss = dt * (psi.as_float() + conj)
    e0 = en.energy_total(problem, t0, prev, mu)
    e1 = en.energy_total(problem, t1, q, mu)
    # trapezoid along the step: the left and right rules carry opposite O(dt) errors
    power = 0.5 * (en.partial_t_energy(problem, t0, prev) + en.partial_t_energy(problem, t1, q))
    res = e1 - e0 + diss - dt * power
    gap = ds.fenchel_dual_gap(problem, t1, q, rate, eps, mu, nu, z_diss=z_diss)
    return res, diss, gap

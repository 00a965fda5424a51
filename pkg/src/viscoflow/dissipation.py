"""Dissipation potentials, their conjugates, and slope aggregates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import energy as en

TOL_UNIDIR = 1e-10


@dataclass(frozen=True)
class Extended:
    """A value in [0, inf]; ``violation > 0`` means the value is +inf and
    measures how far the argument lies outside the effective domain."""

    value: float
    violation: float = 0.0

    @property
    def finite(self):
        return self.violation == 0.0

    def __add__(self, other):
        if isinstance(other, Extended):
            return Extended(self.value + other.value, self.violation + other.violation)
        return Extended(self.value + float(other), self.violation)

    __radd__ = __add__

    def as_float(self):
        return self.value if self.finite else np.inf


def calR(problem, zdot, tol_unidir=TOL_UNIDIR):
    sp, mat = problem.space, problem.material
    zdot = np.asarray(zdot, dtype=float)
    value = mat.kappa * sp.node_mass @ np.maximum(-zdot, 0.0)
    over = np.maximum(zdot, 0.0)
    violation = float(over.max(initial=0.0)) if np.any(over > tol_unidir) else 0.0
    return Extended(float(value), violation)


def calH(problem, z, pdot):
    sp, mat = problem.space, problem.material
    return float(sp.areas @ mat.support_H(sp.cell_values(z), pdot))


def dist_dR0(problem, chi):
    """L2 distance of the dual damage vector chi to {gamma >= -kappa}."""
    sp, mat = problem.space, problem.material
    rep = np.asarray(chi, dtype=float) / sp.node_mass
    neg = np.minimum(rep + mat.kappa, 0.0)
    return float(np.sqrt(sp.node_mass @ neg ** 2))


def dist_dH0(problem, z, varsigma):
    """L2 distance of a deviatoric cell field to pointwise K(z)."""
    sp, mat = problem.space, problem.material
    d = mat.dist_K(sp.cell_values(z), varsigma)
    return float(np.sqrt(sp.areas @ d ** 2))


# -- slopes ------------------------------------------------------------------
@dataclass(frozen=True)
class SlopeParts:
    """Component slopes at (t, q) for hardening mu.

    u: ||D_u E||_{(H1,D)*};  z: distance of -D_z E to dR(0);
    p: distance of -D_p E_mu to K(z); p0: the same with mu = 0 (sigma_D alone).
    """

    u: float
    z: float
    p: float
    p0: float

    def dstar(self):
        """Slope of the mu = 0 surrogate: sqrt(S_u^2 + W_p^2)."""
        return float(np.hypot(self.u, self.p0))

    def dstar_mu(self):
        return float(np.hypot(self.u, self.p))

    def dstar_mu_nu(self, nu):
        if nu <= 0:
            raise ValueError("nu must be positive")
        return float(np.sqrt(self.u ** 2 / nu + self.z ** 2 + self.p ** 2 / nu))


def slope_parts(problem, t, q, mu):
    gu = en.grad_u(problem, t, q, mu)
    gz = en.grad_z(problem, t, q, mu)
    sig_d = en.stress(problem, t, q)[:, 1:]
    return SlopeParts(
        u=problem.space.norm(gu, "H1D_dual"),
        z=dist_dR0(problem, -gz),
        p=dist_dH0(problem, q.z, sig_d - mu * q.p),
        p0=dist_dH0(problem, q.z, sig_d),
    )


def surrogate_Su(problem, t, q):
    return problem.space.norm(en.grad_u(problem, t, q), "H1D_dual")


def surrogate_Wp(problem, t, q):
    return dist_dH0(problem, q.z, en.stress(problem, t, q)[:, 1:])


def slope_Dstar0(problem, t, q):
    return float(np.hypot(surrogate_Su(problem, t, q), surrogate_Wp(problem, t, q)))


def slope_Dstar_mu(problem, t, q, mu):
    return slope_parts(problem, t, q, mu).dstar_mu()


def slope_Dstar_mu_nu(problem, t, q, mu, nu):
    return slope_parts(problem, t, q, mu).dstar_mu_nu(nu)


@dataclass(frozen=True)
class RateNorms:
    u: float  # ||u'||_{H1,D}
    z: float  # ||z'||_{L2}
    p: float  # ||p'||_{L2}

    def dnu(self, nu):
        if nu < 0:
            raise ValueError("nu must be nonnegative")
        return float(np.sqrt(nu * self.u ** 2 + self.z ** 2 + nu * self.p ** 2))

    def d_up(self):
        return float(np.hypot(self.u, self.p))


def rate_norms(problem, qdot):
    sp = problem.space
    return RateNorms(sp.norm(qdot.u, "H1D"), sp.norm(qdot.z, "L2z"), sp.norm(qdot.p, "L2p"))


def slope_Dnu(problem, qdot, nu):
    return rate_norms(problem, qdot).dnu(nu)


def slope_D(problem, qdot):
    return rate_norms(problem, qdot).d_up()


# -- viscous potentials ------------------------------------------------------
def _check_rates(eps, nu):
    if eps <= 0 or nu <= 0:
        raise ValueError("eps and nu must be positive")


def psi_eps_nu(problem, q, qdot, eps, nu, z_diss=None):
    """Psi(q, q') = (eps nu/2)|u'|^2 + R(z') + (eps/2)|z'|^2 + H(z, p') + (eps nu/2)|p'|^2."""
    _check_rates(eps, nu)
    z = q.z if z_diss is None else z_diss
    rn = rate_norms(problem, qdot)
    quad = 0.5 * eps * nu * rn.u ** 2 + 0.5 * eps * rn.z ** 2 + 0.5 * eps * nu * rn.p ** 2
    return calR(problem, qdot.z) + calH(problem, z, qdot.p) + quad


def psi_conjugate(problem, z, xi_u, xi_z, xi_p, eps, nu):
    """Closed-form conjugate at the dual triple (xi_u dual, xi_z dual, xi_p L2 rep)."""
    _check_rates(eps, nu)
    du = problem.space.norm(xi_u, "H1D_dual")
    dz = dist_dR0(problem, xi_z)
    dp = dist_dH0(problem, z, xi_p)
    return float((du ** 2 / nu + dz ** 2 + dp ** 2 / nu) / (2.0 * eps))


def fenchel_dual_gap(problem, t, q, qdot, eps, mu, nu, z_diss=None):
    """Psi(q,q') + Psi*(q,-DE_mu) + <DE_mu, q'>; nonnegative, +inf off the domain."""
    sp = problem.space
    z = q.z if z_diss is None else z_diss
    gu = en.grad_u(problem, t, q, mu)
    gz = en.grad_z(problem, t, q, mu)
    gp = en.grad_p(problem, t, q, mu)
    psi = psi_eps_nu(problem, q, qdot, eps, nu, z_diss=z)
    if not psi.finite:
        return np.inf
    conj = psi_conjugate(problem, z, -gu, -gz, -gp, eps, nu)
    pairing = gu @ qdot.u[sp.free_dofs] + gz @ qdot.z + sp.areas @ (gp * qdot.p).sum(axis=1)
    return float(psi.value + conj + pairing)

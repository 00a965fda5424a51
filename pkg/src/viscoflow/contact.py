"""Vanishing-viscosity contact potentials with graded indicator terms.

Each limit potential returns a ContactValue: the finite part plus a dict of
named violations.  An empty dict means the exact potential is finite; a
nonempty one stands for +inf, with magnitudes saying by how much.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dissipation as ds

RATE_INDEPENDENT = "RATE_INDEPENDENT"
VISCOUS_Z = "VISCOUS_Z"
VISCOUS_UP = "VISCOUS_UP"
STATIC = "STATIC"
REGIMES = (RATE_INDEPENDENT, VISCOUS_Z, VISCOUS_UP, STATIC)


@dataclass(frozen=True)
class Tolerances:
    """tol_eq classifies slopes as zero, tol_rate classifies rates as zero."""

    tol_eq: float
    tol_rate: float = 1e-6
    tol_unidir: float = ds.TOL_UNIDIR

    def __post_init__(self):
        if min(self.tol_eq, self.tol_rate, self.tol_unidir) <= 0:
            raise ValueError("tolerances must be positive")


def problem_scale(problem):
    """Stress scale R_bar * sqrt(|Omega|) used to make slope tolerances relative."""
    return float(problem.material.R_bar * np.sqrt(problem.space.areas.sum()))


def default_tolerances(problem, tol_scale=1.0):
    return Tolerances(tol_eq=1e-6 * tol_scale * problem_scale(problem), tol_rate=1e-6 * tol_scale)


@dataclass
class ContactValue:
    finite_part: float
    violations: dict = field(default_factory=dict)
    regime: str = STATIC

    @property
    def finite(self):
        return not self.violations

    @property
    def value(self):
        return self.finite_part if self.finite else np.inf

    @property
    def max_violation(self):
        return max(self.violations.values(), default=0.0)


@dataclass(frozen=True)
class ContactData:
    """Everything the potentials need at one sample."""

    R: ds.Extended          # R(z')
    H: float                # H(z, p')
    tp: float               # t'
    rates: ds.RateNorms     # |u'|, |z'|, |p'|
    slopes: ds.SlopeParts   # component slopes at (t, q)


def contact_data(problem, t, q, tp, qp, mu=0.0, tol=None):
    tol_unidir = tol.tol_unidir if tol is not None else ds.TOL_UNIDIR
    return ContactData(
        R=ds.calR(problem, qp.z, tol_unidir),
        H=ds.calH(problem, q.z, qp.p),
        tp=float(tp),
        rates=ds.rate_norms(problem, qp),
        slopes=ds.slope_parts(problem, t, q, mu),
    )


def classify(data, tol):
    if data.tp > tol.tol_rate:
        return RATE_INDEPENDENT
    if data.rates.z > tol.tol_rate:
        return VISCOUS_Z
    if data.rates.d_up() > tol.tol_rate:
        return VISCOUS_UP
    return STATIC


def _start(data, tol):
    out = ContactValue(data.R.value + data.H, {}, classify(data, tol))
    if not data.R.finite:
        out.violations["unidirectionality"] = data.R.violation
    return out


def _flag(out, name, magnitude, threshold):
    if magnitude > threshold:
        out.violations[name] = float(magnitude)


# -- viscous potential ----------------------------------------------------------
def m_eps_value(base, tp, d_nu, dstar, eps):
    """base + eps/(2t') D^2 + t'/(2eps) D*^2."""
    if tp <= 0:
        raise ValueError("the viscous potential needs t' > 0")
    return base + eps / (2.0 * tp) * d_nu ** 2 + tp / (2.0 * eps) * dstar ** 2


def M_eps(problem, t, q, tp, qp, eps, mu, nu):
    if tp <= 0:
        raise ValueError("the viscous potential needs t' > 0")
    data = contact_data(problem, t, q, tp, qp, mu)
    if not data.R.finite:
        return np.inf
    return m_eps_value(data.R.value + data.H, tp, data.rates.dnu(nu), data.slopes.dstar_mu_nu(nu), eps)


# -- limit potentials on component data -------------------------------------------
def m0_cl(data, tol):
    """Partial-regularization limit: D* must vanish, z may jump viscously."""
    out = _start(data, tol)
    sl = data.slopes
    _flag(out, "D*>0", sl.dstar(), tol.tol_eq)
    if data.tp > tol.tol_rate:
        _flag(out, "d_tilde>0 at t'>0", sl.z, tol.tol_eq)
    else:
        out.finite_part += data.rates.z * sl.z
    return out


def _m0_two_branch(data, tol, dstar, p_slope):
    out = _start(data, tol)
    sl = data.slopes
    if data.tp > tol.tol_rate:
        _flag(out, "S_u>0 at t'>0", sl.u, tol.tol_eq)
        _flag(out, "d_tilde>0 at t'>0", sl.z, tol.tol_eq)
        _flag(out, "W_p>0 at t'>0", p_slope, tol.tol_eq)
        return out
    if data.rates.z <= tol.tol_rate:
        out.finite_part += data.rates.d_up() * dstar
    elif dstar <= tol.tol_eq:
        out.finite_part += data.rates.z * sl.z
    else:
        out.violations["z'!=0 and D*>0"] = float(dstar)
    return out


def m0_cr(data, tol):
    """Full-regularization limit with mu = 0 slopes."""
    return _m0_two_branch(data, tol, data.slopes.dstar(), data.slopes.p0)


def m0_mu0(data, tol):
    """Multi-rate limit at fixed hardening; data.slopes must carry that mu."""
    return _m0_two_branch(data, tol, data.slopes.dstar_mu(), data.slopes.p)


def m0_munu(data, tol, nu):
    """Single-rate limit: at t' = 0 the nu-weighted primal-dual product."""
    if data.tp > tol.tol_rate:
        return m0_mu0(data, tol)
    out = _start(data, tol)
    out.finite_part += data.rates.dnu(nu) * data.slopes.dstar_mu_nu(nu)
    return out


# -- problem-level wrappers ---------------------------------------------------------
def _tol(problem, tol):
    return tol if tol is not None else default_tolerances(problem)


def M0_CL(problem, t, q, tp, qp, tol=None):
    tol = _tol(problem, tol)
    return m0_cl(contact_data(problem, t, q, tp, qp, 0.0, tol), tol)


def M0_CR(problem, t, q, tp, qp, tol=None):
    tol = _tol(problem, tol)
    return m0_cr(contact_data(problem, t, q, tp, qp, 0.0, tol), tol)


def M0_mu0(problem, t, q, tp, qp, mu, tol=None):
    tol = _tol(problem, tol)
    return m0_mu0(contact_data(problem, t, q, tp, qp, mu, tol), tol)


def M0_munu(problem, t, q, tp, qp, mu, nu, tol=None):
    tol = _tol(problem, tol)
    return m0_munu(contact_data(problem, t, q, tp, qp, mu, tol), tol, nu)

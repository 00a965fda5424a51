"""Arclength reparameterization of viscous runs and the reparameterized balance."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import energy as en
from .contact import M_eps
from .discretization import State


@dataclass
class ParamTrajectory:
    """Samples (s_i, t_i, q_i) of a parameterized curve.

    ``rates`` holds derivatives in s (t', u', z', p') by ``scheme``: "central"
    for curves resampled uniformly in s, "backward" for curves sampled at the
    time-grid knots (the difference quotient then matches the implicit step
    that produced q_i).  ``knot_s`` keeps the arclength of the time nodes.
    """

    params: object
    s: np.ndarray
    t: np.ndarray
    states: list
    knot_s: np.ndarray = field(default=None, repr=False)
    rates: dict = field(default=None, repr=False)
    scheme: str = "central"
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def n_samples(self):
        return len(self.s)

    @property
    def S(self):
        return float(self.s[-1])

    def stacked(self, space):
        return np.array([q.pack(space) for q in self.states])


def increments(space, states, times):
    """Arclength increments dt + |du|_{H1D} + |dz|_{Hm} + |dp|_{L2}."""
    ds_ = np.zeros(len(states) - 1)
    for k in range(1, len(states)):
        a, b = states[k - 1], states[k]
        ds_[k - 1] = (times[k] - times[k - 1]
                      + space.norm(b.u - a.u, "H1D")
                      + space.norm(b.z - a.z, "Hm")
                      + space.norm(b.p - a.p, "L2p"))
    return ds_


def _interp_states(space, s_knots, packed, s_new):
    out = np.empty((len(s_new), packed.shape[1]))
    for j in range(packed.shape[1]):
        out[:, j] = np.interp(s_new, s_knots, packed[:, j])
    return [State.unpack(space, row) for row in out]


def reparameterize(problem, run, n_samples=None, resample=True):
    """Arclength reparameterization of a run.

    With ``resample`` the curve is sampled uniformly in s (default 4 samples
    per time step) and differentiated by central differences; otherwise the
    samples are the time-grid knots themselves with backward differences.
    """
    sp = problem.space
    times = np.asarray(run.times, dtype=float)
    s_knots = np.concatenate([[0.0], np.cumsum(increments(sp, run.states, times))])
    if s_knots[-1] <= 0:
        raise ValueError("degenerate run: zero arclength")
    if not resample:
        traj = ParamTrajectory(run.params, s_knots, times.copy(), [q.copy() for q in run.states],
                               knot_s=s_knots, scheme="backward")
        traj.rates = discrete_rates(problem, traj)
        return traj
    m = n_samples or 4 * (len(times) - 1) + 1
    s_new = np.linspace(0.0, s_knots[-1], m)
    packed = np.array([q.pack(sp) for q in run.states])
    states = _interp_states(sp, s_knots, packed, s_new)
    t_new = np.interp(s_new, s_knots, times)
    traj = ParamTrajectory(run.params, s_new, t_new, states, knot_s=s_knots)
    traj.rates = discrete_rates(problem, traj)
    return traj


def discrete_rates(problem, traj):
    """Central differences in s, one-sided at the ends; or backward
    differences (forward at the first sample) for knot-sampled curves."""
    sp = problem.space
    packed = traj.stacked(sp)
    if traj.scheme == "backward":
        h = np.diff(traj.s)
        seg_t = np.diff(traj.t) / h
        seg_q = np.diff(packed, axis=0) / h[:, None]
        t_p = np.concatenate([seg_t[:1], seg_t])
        q_p = np.concatenate([seg_q[:1], seg_q])
    else:
        t_p = np.gradient(traj.t, traj.s)
        q_p = np.gradient(packed, traj.s, axis=0)
    return {"t": t_p, "q": [State.unpack(sp, row) for row in q_p]}


def strain_rate_residual(problem, traj):
    """max_i |e' - (B u' + B w_dot t' - p')| with e' differenced directly."""
    sp, ld = problem.space, problem.loading
    e = np.array([en.elastic_strain(problem, t, q).ravel() for t, q in zip(traj.t, traj.states)])
    e_p = np.gradient(e, traj.s, axis=0)
    worst = 0.0
    for i, (t, tp, qp) in enumerate(zip(traj.t, traj.rates["t"], traj.rates["q"])):
        predicted = sp.B @ (qp.u + ld.w_dot(t) * tp)
        predicted = predicted.reshape(-1, 3)
        predicted[:, 1:] -= qp.p
        # w is linear in a(t), so the chain rule is exact only where a is affine
        worst = max(worst, float(np.abs(e_p[i] - predicted.ravel()).max()))
    return worst


def normalization(problem, traj):
    sp = problem.space
    out = np.empty(traj.n_samples)
    for i, (tp, qp) in enumerate(zip(traj.rates["t"], traj.rates["q"])):
        out[i] = tp + sp.norm(qp.u, "H1D") + sp.norm(qp.z, "Hm") + sp.norm(qp.p, "L2p")
    return out


def segment_rates(problem, traj):
    """Exact derivatives of the piecewise-linear interpolant on each interval."""
    sp = problem.space
    packed = traj.stacked(sp)
    h = np.diff(traj.s)
    return np.diff(traj.t) / h, [State.unpack(sp, row) for row in np.diff(packed, axis=0) / h[:, None]]


def reparam_balance_residual(problem, traj, eps, mu, nu):
    """Per-interval residual of the reparameterized energy balance.

    Segment rates are exact for the interpolant.  On knot-sampled curves the
    potential is taken at the right end (as in the implicit step, which makes
    the residual coincide with the time-domain one); on resampled curves it is
    averaged over both ends.  The power term always uses the trapezoid rule.
    """
    tps, qps = segment_rates(problem, traj)
    h = np.diff(traj.s)
    E = np.array([en.energy_total(problem, t, q, mu) for t, q in zip(traj.t, traj.states)])
    dtE = np.array([en.partial_t_energy(problem, t, q) for t, q in zip(traj.t, traj.states)])
    res = np.empty(len(h))
    for i in range(len(h)):
        tp, qp = tps[i], qps[i]
        if tp <= 0:
            res[i] = np.nan
            continue
        m = M_eps(problem, traj.t[i + 1], traj.states[i + 1], tp, qp, eps, mu, nu)
        if traj.scheme != "backward":
            m = 0.5 * (m + M_eps(problem, traj.t[i], traj.states[i], tp, qp, eps, mu, nu))
        res[i] = E[i + 1] - E[i] + h[i] * m - h[i] * tp * 0.5 * (dtE[i] + dtE[i + 1])
    return res


def rescale_time(run, factor):
    """Run with its time axis divided by ``factor`` (maps a slowed loading back)."""
    return replace(run, times=np.asarray(run.times) / factor)


def curve_distance(problem, a, b, n_match=None):
    """Sup over matched arclength fractions of |t_a - t_b| + product-norm distance."""
    sp = problem.space
    m = n_match or max(a.n_samples, b.n_samples)
    frac = np.linspace(0.0, 1.0, m)
    pa = _interp_states(sp, a.s / a.S, a.stacked(sp), frac)
    pb = _interp_states(sp, b.s / b.S, b.stacked(sp), frac)
    ta = np.interp(frac, a.s / a.S, a.t)
    tb = np.interp(frac, b.s / b.S, b.t)
    return float(max(abs(x - y) + qa.distance(qb, sp) for x, y, qa, qb in zip(ta, tb, pa, pb)))

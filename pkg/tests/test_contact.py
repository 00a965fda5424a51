import numpy as np
import pytest

from viscoflow import contact as ct
from viscoflow import dissipation as ds
from viscoflow.discretization import State
from viscoflow.instances import random_state

TOL = ct.Tolerances(tol_eq=1e-6, tol_rate=1e-6)


def _data(tp=0.0, rates=(0.0, 0.0, 0.0), slopes=(0.0, 0.0, 0.0, 0.0), base=0.0):
    return ct.ContactData(ds.Extended(base), 0.0, tp, ds.RateNorms(*rates), ds.SlopeParts(*slopes))


def test_default_tolerances(ref):
    assert ct.problem_scale(ref) == pytest.approx(150.0)
    tol = ct.default_tolerances(ref, tol_scale=2.0)
    assert tol.tol_eq == pytest.approx(3e-4) and tol.tol_rate == pytest.approx(2e-6)
    with pytest.raises(ValueError):
        ct.Tolerances(tol_eq=0.0)


def test_M_eps_hand_value():
    assert ct.m_eps_value(1.0, 0.5, 2.0, 4.0, 0.1) == pytest.approx(41.4)
    with pytest.raises(ValueError):
        ct.m_eps_value(1.0, 0.0, 2.0, 4.0, 0.1)


def test_M_eps_at_rest(ref):
    q = State.zeros(ref.space, 0.6)
    rest = State.zeros(ref.space, 0.0)
    assert ct.M_eps(ref, 0.0, q, 1.0, rest, 0.1, 0.1, 0.1) == 0.0


def test_M_eps_young_inequality(ref, rng):
    sp = ref.space
    for _ in range(100):
        q = random_state(ref, rng)
        qp = State(sp.full_u(rng.standard_normal(sp.n_free)), -np.abs(rng.standard_normal(sp.n_nodes)),
                   rng.standard_normal((sp.n_cells, 2)))
        t, tp = rng.uniform(0, 4), rng.uniform(1e-3, 2)
        eps, mu, nu = 10 ** rng.uniform(-3, 0), rng.uniform(0, 1), 10 ** rng.uniform(-3, 0)
        data = ct.contact_data(ref, t, q, tp, qp, mu)
        prod = data.rates.dnu(nu) * data.slopes.dstar_mu_nu(nu)
        m = ct.M_eps(ref, t, q, tp, qp, eps, mu, nu)
        assert m - data.R.value - data.H >= prod * (1 - 1e-12)


def test_M_eps_infinite_when_healing(ref, rng):
    q = random_state(ref, rng)
    qp = State.zeros(ref.space, 0.0)
    qp.z[0] = 1.0
    assert ct.M_eps(ref, 1.0, q, 1.0, qp, 0.1, 0.1, 0.1) == np.inf


def test_M0_CL_cases():
    out = ct.m0_cl(_data(tp=1.0, base=2.5), TOL)
    assert out.finite and out.value == 2.5 and out.regime == ct.RATE_INDEPENDENT
    out = ct.m0_cl(_data(rates=(0.0, 2.0, 0.0), slopes=(0.0, 0.3, 0.0, 0.0)), TOL)
    assert out.value == pytest.approx(0.6) and out.regime == ct.VISCOUS_Z
    out = ct.m0_cl(_data(tp=1.0, slopes=(0.1, 0.0, 0.0, 0.0)), TOL)
    assert out.violations == {"D*>0": pytest.approx(0.1)}
    assert out.value == np.inf and out.max_violation == pytest.approx(0.1)


def test_M0_CR_cases():
    out = ct.m0_cr(_data(rates=(1.5, 0.0, 0.0), slopes=(2.0, 0.0, 0.0, 0.0)), TOL)
    assert out.value == pytest.approx(3.0) and out.regime == ct.VISCOUS_UP
    zdata = _data(rates=(0.0, 2.0, 0.0), slopes=(0.0, 0.3, 0.0, 0.0))
    assert ct.m0_cr(zdata, TOL).value == pytest.approx(ct.m0_cl(zdata, TOL).value)
    out = ct.m0_cr(_data(tp=1.0, slopes=(0.0, 0.0, 0.0, 0.2)), TOL)
    assert out.violations == {"W_p>0 at t'>0": pytest.approx(0.2)}
    out = ct.m0_cr(_data(rates=(0.0, 1.0, 0.0), slopes=(0.5, 0.0, 0.0, 0.0)), TOL)
    assert not out.finite and "z'!=0 and D*>0" in out.violations


def test_degenerate_branches_agree():
    # z' = 0 and D* = 0 at t' = 0: both branches give the base value
    out = ct.m0_cr(_data(rates=(0.7, 0.0, 0.2), base=1.25), TOL)
    assert out.value == 1.25


def test_M0_munu_hand_value():
    out = ct.m0_munu(_data(rates=(1.0, 1.0, 1.0), slopes=(1.0, 1.0, 1.0, 1.0)), TOL, 0.25)
    assert out.value == pytest.approx(np.sqrt(1.5) * 3.0)


def test_rate_independent_branches_coincide(rng):
    for _ in range(50):
        d = _data(tp=1.0, rates=tuple(rng.uniform(0, 1, 3)), slopes=tuple(rng.uniform(0, 1e-6, 4) * rng.integers(0, 2, 4)))
        a, b = ct.m0_mu0(d, TOL), ct.m0_munu(d, TOL, 0.3)
        assert a.finite_part == b.finite_part and a.violations == b.violations


def test_hardening_continuity(ref, rng):
    for _ in range(20):
        q = random_state(ref, rng)
        mu = rng.uniform(0, 1)
        parts = ds.slope_parts(ref, 1.0, q, mu)
        assert abs(parts.dstar_mu() - parts.dstar()) <= mu * ref.space.norm(q.p, "L2p") + 1e-12


def test_information_ordering(rng):
    # a CR violation is a CL violation unless damage moves viscously
    for _ in range(2000):
        tp = rng.choice([0.0, 1.0])
        rates = tuple(rng.choice([0.0, 1.0], 3))
        slopes = tuple(rng.choice([0.0, 0.5], 4))
        d = _data(tp, rates, slopes)
        if not ct.m0_cr(d, TOL).finite:
            assert not ct.m0_cl(d, TOL).finite or d.rates.z > TOL.tol_rate


def test_problem_level_wrappers(ref, rng):
    q = random_state(ref, rng)
    qp = State.zeros(ref.space, 0.0)
    qp.p[:] = rng.standard_normal(qp.p.shape)
    cr = ct.M0_CR(ref, 1.0, q, 0.0, qp)
    assert cr.regime == ct.VISCOUS_UP and cr.finite
    sl = ds.slope_parts(ref, 1.0, q, 0.0)
    rn = ds.rate_norms(ref, qp)
    assert cr.value == pytest.approx(ds.calH(ref, q.z, qp.p) + rn.d_up() * sl.dstar())
    assert ct.M0_CL(ref, 1.0, q, 0.0, qp).violations
    mu0 = ct.M0_mu0(ref, 1.0, q, 0.0, qp, 0.2)
    munu = ct.M0_munu(ref, 1.0, q, 0.0, qp, 0.2, 0.1)
    assert mu0.finite and munu.finite

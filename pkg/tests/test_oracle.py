import numpy as np
import pytest

from viscoflow import oracle as orc
from viscoflow.contact import VISCOUS_UP, VISCOUS_Z
from viscoflow.instances import random_state


class _Quadratic:
    """0.5 x'Ax - b'x with no nonsmooth part."""

    def __init__(self, A, b):
        self.A, self.b = A, b

    def smooth(self, x):
        return 0.5 * x @ self.A @ x - self.b @ x

    def smooth_grad(self, x):
        return self.A @ x - self.b

    def nonsmooth(self, x):
        return 0.0

    def prox(self, x, step):
        return x

    def __call__(self, x):
        return self.smooth(x)


def test_prox_gradient_quadratic(rng):
    M = rng.standard_normal((8, 8))
    A = M @ M.T + 0.5 * np.eye(8)
    b = rng.standard_normal(8)
    x = orc._prox_gradient(_Quadratic(A, b), np.zeros(8), tol=1e-12)
    assert np.abs(x - np.linalg.solve(A, b)).max() <= 1e-8


def test_fd_gradient_exactness(rng):
    c = rng.standard_normal(5)
    x = rng.standard_normal(5)
    assert np.allclose(orc.fd_gradient(lambda y: c @ y, x), c, atol=1e-9)
    A = np.diag([1.0, 2.0, 3.0, 4.0, 5.0])
    assert np.allclose(orc.fd_gradient(lambda y: 0.5 * y @ A @ y, x), A @ x, atol=1e-8)
    with pytest.raises(ValueError):
        orc.fd_gradient(lambda y: 0.0, x, h=0.0)


def test_mc_hausdorff_is_exact_for_balls(tiny, rng):
    mat = tiny.material
    for z1, z2 in rng.uniform(0, 1, (20, 2)):
        assert orc.mc_hausdorff(mat, z1, z2, rng) == pytest.approx(float(mat.hausdorff_K(z1, z2)), abs=1e-12)


def test_brute_force_respects_size_limit(ref):
    q = random_state(ref, np.random.default_rng(0))
    with pytest.raises(ValueError):
        orc.brute_force_step(ref, q, 1.0, 0.1, 0.1, 0.1, 0.1)


def test_brute_force_kkt_on_damage(tiny):
    q = orc.equilibrated_datum(tiny, 0.8)
    t, dt, eps, mu, nu = 1.0, 0.1, 1e-2, 1e-2, 1e-2
    out = orc.brute_force_step(tiny, q, t, dt, eps, mu, nu)
    F = orc._StepFunctional(tiny, q, t, dt, eps, mu, nu, q.z, 1e-3)
    g = F.smooth_grad(out.pack(tiny.space))[F.sz] / tiny.space.node_mass
    at_bound = out.z >= q.z - 1e-12
    assert (~at_bound).any(), "the step should damage some nodes"
    assert np.all(out.z <= q.z + 1e-15)
    # free nodes are stationary, nodes on the unidirectional bound are pushed against it
    kappa = tiny.material.kappa
    assert np.abs(g[~at_bound]).max() <= 1e-5 * kappa
    assert np.all(g[at_bound] <= 1e-5 * kappa)


def test_brute_force_rejects_bad_mode(tiny):
    q = orc.equilibrated_datum(tiny, 0.8)
    with pytest.raises(ValueError):
        orc.brute_force_step(tiny, q, 0.5, 0.1, 0.1, 0.1, 0.1, dissipation_state="average")


def test_manufactured_jumps(tiny):
    for kind in (VISCOUS_UP, VISCOUS_Z):
        traj = orc.manufactured_jump(tiny, kind, n_samples=11)
        assert traj.n_samples == 11
        assert np.all(traj.rates["t"] == 0.0)
        assert np.all(traj.t == traj.t[0])
        assert traj.extra["planted"]["kind"] == kind
    with pytest.raises(ValueError):
        orc.manufactured_jump(tiny, "STATIC")


def test_equilibrium_u_solves_displacement_balance(tiny, rng):
    q = random_state(tiny, rng)
    q.u = tiny.space.full_u(orc.equilibrium_u(tiny, 0.7, q.z, q.p))
    assert np.abs(orc.en.grad_u(tiny, 0.7, q)).max() <= 1e-10

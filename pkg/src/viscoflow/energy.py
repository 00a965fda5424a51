"""Driving energy, its partial gradients and its explicit time derivative."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .material import embed_dev


@dataclass(frozen=True)
class Problem:
    space: object
    material: object
    loading: object


@dataclass(frozen=True)
class EnergyValue:
    elastic: float
    damage_potential: float
    hardening: float
    nonlocal_: float
    load: float

    @property
    def total(self):
        return self.elastic + self.damage_potential + self.hardening + self.nonlocal_ + self.load


def _check_z(z):
    if np.any(z <= 0.0):
        raise ValueError("damage must stay positive at every node")


def elastic_strain(problem, t, q):
    sp = problem.space
    return sp.strain(q.u + problem.loading.w(t)) - embed_dev(q.p)


def stress(problem, t, q):
    """Cell stresses (n_cells, 3) in symmetric coordinates."""
    zc = problem.space.cell_values(q.z)
    return problem.material.stiffness(zc)[:, None] * elastic_strain(problem, t, q)


def energy(problem, t, q, mu):
    sp, mat, ld = problem.space, problem.material, problem.loading
    _check_z(q.z)
    e = elastic_strain(problem, t, q)
    zc = sp.cell_values(q.z)
    elastic = 0.5 * sp.areas @ (mat.stiffness(zc) * (e ** 2).sum(axis=1))
    damage = sp.node_mass @ mat.W(q.z)
    hardening = 0.5 * mu * sp.areas @ (q.p ** 2).sum(axis=1)
    nonlocal_ = 0.5 * q.z @ sp.Am @ q.z
    load = -ld.F(t) @ (q.u + ld.w(t))
    return EnergyValue(float(elastic), float(damage), float(hardening), float(nonlocal_), float(load))


def energy_total(problem, t, q, mu):
    return energy(problem, t, q, mu).total


def grad_u(problem, t, q, mu=0.0):
    """B^T(area sigma) - F(t) on free dofs; mu does not enter."""
    sp = problem.space
    sig = stress(problem, t, q)
    return sp.B_free.T @ (sp.cell_weights3 * sig.ravel()) - problem.loading.F(t)[sp.free_dofs]


def grad_z(problem, t, q, mu=0.0):
    """A z + M (W'(z) + 1/2 C'(z) e:e), the cell term lumped to nodes."""
    sp, mat = problem.space, problem.material
    _check_z(q.z)
    e = elastic_strain(problem, t, q)
    zc = sp.cell_values(q.z)
    cell_term = 0.5 * sp.areas * mat.stiffness_prime(zc) * (e ** 2).sum(axis=1)
    return sp.Am @ q.z + sp.node_mass * mat.W_prime(q.z) + sp.avg_op.T @ cell_term


def damage_driving_density(problem, t, q):
    """L2 representative of grad_z (divide by the lumped mass)."""
    return grad_z(problem, t, q) / problem.space.node_mass


def grad_p(problem, t, q, mu):
    """mu p - sigma_D per cell (an L2 representative)."""
    sig = stress(problem, t, q)
    return mu * q.p - sig[:, 1:]


def partial_t_energy(problem, t, q):
    sp, ld = problem.space, problem.loading
    sig = stress(problem, t, q)
    wdot = ld.w_dot(t)
    power = sp.cell_weights3 @ (sig.ravel() * (sp.B @ wdot))
    return float(power - ld.F(t) @ wdot - ld.F_dot(t) @ (q.u + ld.w(t)))


def grad_packed(problem, t, q, mu):
    """Euclidean gradient of E_mu(t, .) in State.pack coordinates."""
    sp = problem.space
    gp = sp.areas[:, None] * grad_p(problem, t, q, mu)
    return np.concatenate([grad_u(problem, t, q, mu), grad_z(problem, t, q, mu), gp.ravel()])

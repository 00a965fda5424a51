"""Bundled problem instances and initial data."""

from __future__ import annotations

import numpy as np

from .discretization import LoadingProgram, State, build_space
from .energy import Problem
from .material import MaterialModel

REFERENCE_Z0 = 0.6
UNSTABLE_Z0 = 0.5
UNSTABLE_FACTOR = 1.5


def reference_problem(material=None, T=4.0, stretch=1.2, bend=1.0, profile="ramp", amplitude=1.0):
    """4x4 cells on the unit square, clamped left and right, loaded by a
    stretching and bending lift of the right edge."""
    mat = material or MaterialModel()
    sp = build_space(4, 4, material=mat, dirichlet="left-right", neumann="none")
    ld = LoadingProgram(sp, T=T, profile=profile, amplitude=amplitude, stretch=stretch, bend=bend)
    return Problem(sp, mat, ld)


def tiny_problem(material=None, T=1.0, stretch=1.0, bend=1.0, profile="ramp"):
    """2x1 cells clamped on three sides: 2 displacement, 6 damage and 4 plastic dofs."""
    mat = material or MaterialModel()
    sp = build_space(2, 1, lx=2.0, ly=1.0, material=mat, dirichlet="left-right-bottom", neumann="none")
    ld = LoadingProgram(sp, T=T, profile=profile, stretch=stretch, bend=bend)
    return Problem(sp, mat, ld)


def equilibrated_datum(problem, z0=REFERENCE_Z0):
    """Undeformed, undamaged-plastically state; stress free at t = 0 for a ramp."""
    return State.zeros(problem.space, z0)


def unstable_datum(problem, z0=UNSTABLE_Z0, factor=UNSTABLE_FACTOR):
    """Plastic strain whose deviatoric stress is ``factor`` times the yield radius.

    With u = 0 and no lift at t = 0 the stress is -C(z) p, so p = -factor r/c
    along the first deviatoric axis puts sigma_D at factor * r(z) in every cell.
    """
    if factor <= 1.0:
        raise ValueError("an unstable datum needs factor > 1")
    sp, mat = problem.space, problem.material
    q = State.zeros(sp, z0)
    zc = sp.cell_values(q.z)
    q.p[:, 0] = -factor * mat.radius(zc) / mat.stiffness(zc)
    return q


def random_state(problem, rng, z_range=(0.3, 1.0), u_scale=0.05, p_scale=0.05):
    sp = problem.space
    u = np.zeros(sp.n_dofs)
    u[sp.free_dofs] = u_scale * rng.standard_normal(sp.n_free)
    z = rng.uniform(*z_range, sp.n_nodes)
    p = p_scale * rng.standard_normal((sp.n_cells, 2))
    return State(u, z, p)

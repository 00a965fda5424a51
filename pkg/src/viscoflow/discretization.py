"""Structured Q1 mesh, strain operator, norms, states and loading programs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .material import SQRT2, MaterialModel, assemble_Am

EDGES = ("left", "right", "bottom", "top")


class StructuredMesh:
    """nx x ny rectangular cells on [0, lx] x [0, ly].

    Node (i, j) has index i + (nx+1) j; cell (i, j) has index i + nx j and
    nodes ordered counter-clockwise from the lower-left corner.
    """

    def __init__(self, nx, ny, lx=1.0, ly=1.0):
        if nx < 1 or ny < 1:
            raise ValueError("mesh needs at least one cell per direction")
        if lx <= 0 or ly <= 0:
            raise ValueError("mesh lengths must be positive")
        self.nx, self.ny, self.lx, self.ly = int(nx), int(ny), float(lx), float(ly)
        self.hx, self.hy = self.lx / self.nx, self.ly / self.ny
        xs = np.linspace(0.0, self.lx, self.nx + 1)
        ys = np.linspace(0.0, self.ly, self.ny + 1)
        X, Y = np.meshgrid(xs, ys)
        self.nodes = np.column_stack([X.ravel(), Y.ravel()])
        self.n_nodes = len(self.nodes)
        self.n_cells = self.nx * self.ny

        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        ii, jj = ii.ravel(), jj.ravel()
        n0 = ii + (self.nx + 1) * jj
        self.cells = np.column_stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1])
        self.cell_centers = self.nodes[self.cells].mean(axis=1)
        self.cell_areas = np.full(self.n_cells, self.hx * self.hy)

        # center derivatives of the four bilinear shape functions
        dphidx = np.array([-1.0, 1.0, 1.0, -1.0]) / (2.0 * self.hx)
        dphidy = np.array([-1.0, -1.0, 1.0, 1.0]) / (2.0 * self.hy)
        self.grad_op = np.zeros((2 * self.n_cells, self.n_nodes))
        self.avg_op = np.zeros((self.n_cells, self.n_nodes))
        for c, nodes in enumerate(self.cells):
            self.grad_op[2 * c, nodes] = dphidx
            self.grad_op[2 * c + 1, nodes] = dphidy
            self.avg_op[c, nodes] = 0.25
        self.node_mass = self.avg_op.T @ self.cell_areas

        # strain in orthonormal symmetric coordinates, dof = 2*node + component
        self.strain_op = np.zeros((3 * self.n_cells, 2 * self.n_nodes))
        for c, nodes in enumerate(self.cells):
            ux, uy = 2 * nodes, 2 * nodes + 1
            # v0 = (exx + eyy)/sqrt2, v1 = (exx - eyy)/sqrt2, v2 = sqrt2 * exy
            self.strain_op[3 * c, ux] = dphidx / SQRT2
            self.strain_op[3 * c, uy] = dphidy / SQRT2
            self.strain_op[3 * c + 1, ux] = dphidx / SQRT2
            self.strain_op[3 * c + 1, uy] = -dphidy / SQRT2
            self.strain_op[3 * c + 2, ux] = dphidy / SQRT2
            self.strain_op[3 * c + 2, uy] = dphidx / SQRT2

    def edge_nodes(self, edge):
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        tol = 1e-12 * max(self.lx, self.ly)
        mask = {
            "left": np.abs(x) < tol,
            "right": np.abs(x - self.lx) < tol,
            "bottom": np.abs(y) < tol,
            "top": np.abs(y - self.ly) < tol,
        }[edge]
        idx = np.flatnonzero(mask)
        order = np.argsort(y[idx] if edge in ("left", "right") else x[idx])
        return idx[order]

    def edge_length(self, edge):
        return self.ly if edge in ("left", "right") else self.lx


def _parse_edges(spec):
    if spec in (None, "none", ""):
        return ()
    edges = tuple(spec.split("-")) if isinstance(spec, str) else tuple(spec)
    for e in edges:
        if e not in EDGES:
            raise ValueError(f"unknown edge {e!r}")
    return edges


class DiscreteSpace:
    """Finite-dimensional state space with its operators and norms."""

    def __init__(self, mesh, material, dirichlet="left", neumann="right", Am=None):
        self.mesh = mesh
        self.material = material
        self.dirichlet_edges = _parse_edges(dirichlet)
        self.neumann_edges = _parse_edges(neumann)
        if set(self.dirichlet_edges) & set(self.neumann_edges):
            raise ValueError("an edge cannot be both Dirichlet and Neumann")
        if not self.dirichlet_edges:
            raise ValueError("at least one Dirichlet edge is required")

        nodes = np.unique(np.concatenate([mesh.edge_nodes(e) for e in self.dirichlet_edges]))
        self.dirichlet_nodes = nodes
        fixed = np.zeros(2 * mesh.n_nodes, dtype=bool)
        fixed[2 * nodes] = True
        fixed[2 * nodes + 1] = True
        self.fixed_dofs = np.flatnonzero(fixed)
        self.free_dofs = np.flatnonzero(~fixed)
        self.n_dofs = 2 * mesh.n_nodes
        self.n_free = len(self.free_dofs)
        self.n_nodes = mesh.n_nodes
        self.n_cells = mesh.n_cells

        self.areas = mesh.cell_areas
        self.node_mass = mesh.node_mass
        self.B = mesh.strain_op
        self.B_free = self.B[:, self.free_dofs]
        self.avg_op = mesh.avg_op
        self.cell_weights3 = np.repeat(self.areas, 3)

        # unit-modulus stiffness B^T diag(area) B on free dofs
        self.K_unit = self.B_free.T @ (self.cell_weights3[:, None] * self.B_free)
        self.K_D = material.delta * self.K_unit
        try:
            self._KD_chol = cho_factor(self.K_D)
            self._Kunit_chol = cho_factor(self.K_unit)
        except np.linalg.LinAlgError as exc:
            raise ValueError("viscous stiffness is singular on the constrained space") from exc

        if Am is None:
            Am = assemble_Am(mesh, material.m_exp)
        Am = np.asarray(Am, dtype=float)
        if Am.shape != (mesh.n_nodes, mesh.n_nodes):
            raise ValueError("A_m has the wrong shape")
        self.Am = Am

    # -- vector helpers ------------------------------------------------------
    def full_u(self, u_free):
        u = np.zeros(self.n_dofs)
        u[self.free_dofs] = u_free
        return u

    def strain(self, u_total):
        return (self.B @ u_total).reshape(self.n_cells, 3)

    def cell_values(self, z):
        return self.avg_op @ z

    def solve_KD(self, eta):
        return cho_solve(self._KD_chol, eta)

    def solve_unit(self, rhs):
        return cho_solve(self._Kunit_chol, rhs)

    # -- norms ---------------------------------------------------------------
    def norm(self, vector, which):
        v = np.asarray(vector, dtype=float)
        if which == "H1D":
            v = self._free(v)
            return float(np.sqrt(max(v @ self.K_D @ v, 0.0)))
        if which == "H1D_dual":
            return float(np.sqrt(max(v @ self.solve_KD(v), 0.0)))
        if which == "L2u":
            v = v.reshape(self.n_nodes, 2)
            return float(np.sqrt(self.node_mass @ (v ** 2).sum(axis=1)))
        if which == "L2z":
            return float(np.sqrt(self.node_mass @ v ** 2))
        if which == "L2p":
            return float(np.sqrt(self.areas @ (v.reshape(self.n_cells, -1) ** 2).sum(axis=1)))
        if which == "Hm":
            return float(np.sqrt(max(self.node_mass @ v ** 2 + v @ self.Am @ v, 0.0)))
        raise ValueError(f"unknown norm {which!r}")

    def _free(self, u):
        if u.shape[0] == self.n_dofs:
            return u[self.free_dofs]
        if u.shape[0] == self.n_free:
            return u
        raise ValueError("displacement vector has the wrong length")


def norms(space, vector, which):
    return space.norm(vector, which)


@dataclass
class State:
    """u: all nodal displacement dofs (zero on Dirichlet dofs), z: nodal damage,
    p: per-cell deviatoric plastic strain, shape (n_cells, 2)."""

    u: np.ndarray
    z: np.ndarray
    p: np.ndarray

    def copy(self):
        return State(self.u.copy(), self.z.copy(), self.p.copy())

    @classmethod
    def zeros(cls, space, z0=1.0):
        return cls(
            np.zeros(space.n_dofs),
            np.full(space.n_nodes, float(z0)) if np.ndim(z0) == 0 else np.array(z0, dtype=float),
            np.zeros((space.n_cells, 2)),
        )

    def pack(self, space):
        return np.concatenate([self.u[space.free_dofs], self.z, self.p.ravel()])

    @classmethod
    def unpack(cls, space, x):
        nf, nn = space.n_free, space.n_nodes
        return cls(space.full_u(x[:nf]), x[nf:nf + nn].copy(), x[nf + nn:].reshape(space.n_cells, 2).copy())

    def distance(self, other, space):
        """Product norm H1D x Hm x L2 of the difference."""
        return float(np.sqrt(
            space.norm(self.u - other.u, "H1D") ** 2
            + space.norm(self.z - other.z, "Hm") ** 2
            + space.norm(self.p - other.p, "L2p") ** 2
        ))


PROFILES = ("ramp", "constant", "smoothstep")


@dataclass
class LoadingProgram:
    """Loads scaled by one amplitude history a(t).

    F(t) = a(t) F0 from a uniform traction on the Neumann edges and a uniform
    body force; w(t) = a(t) w0 where w0 stretches in x proportionally to
    x/lx * (1 + bend*(y/ly - 1/2)), a combined stretch and in-plane bending
    of the right edge (needs the right edge clamped).  The safe-load stress
    rho(t) = a(t) rho0 is the minimal-norm discretely equilibrated field.
    """

    space: DiscreteSpace
    T: float = 1.0
    profile: str = "ramp"
    amplitude: float = 1.0
    traction: tuple = (0.0, 0.0)
    body_force: tuple = (0.0, 0.0)
    stretch: float = 0.0
    bend: float = 0.0
    F0: np.ndarray = field(init=False, repr=False)
    w0: np.ndarray = field(init=False, repr=False)
    rho0: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("final time must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown loading profile {self.profile!r}")
        sp = self.space
        mesh = sp.mesh
        self.F0 = _consistent_load(sp, np.asarray(self.traction, float), np.asarray(self.body_force, float))
        self.w0 = np.zeros(sp.n_dofs)
        if self.stretch != 0.0:
            if "right" not in sp.dirichlet_edges:
                raise ValueError("a stretch lift needs the right edge clamped")
            x, y = mesh.nodes[:, 0] / mesh.lx, mesh.nodes[:, 1] / mesh.ly
            self.w0[0::2] = self.stretch * x * (1.0 + self.bend * (y - 0.5))
        # min-norm stress with B^T(area rho) = F0 on free dofs: rho = B y, K_unit y = F0
        y = sp.solve_unit(self.F0[sp.free_dofs])
        self.rho0 = (sp.B_free @ y).reshape(sp.n_cells, 3)

    def a(self, t):
        tau = t / self.T
        if self.profile == "ramp":
            return self.amplitude * tau
        if self.profile == "constant":
            return self.amplitude
        x = min(max(tau, 0.0), 1.0)
        return self.amplitude * x * x * (3.0 - 2.0 * x)

    def a_dot(self, t):
        tau = t / self.T
        if self.profile == "ramp":
            return self.amplitude / self.T
        if self.profile == "constant":
            return 0.0
        if not 0.0 < tau < 1.0:
            return 0.0
        return self.amplitude * 6.0 * tau * (1.0 - tau) / self.T

    def F(self, t):
        return self.a(t) * self.F0

    def F_dot(self, t):
        return self.a_dot(t) * self.F0

    def w(self, t):
        return self.a(t) * self.w0

    def w_dot(self, t):
        return self.a_dot(t) * self.w0

    def rho(self, t):
        return self.a(t) * self.rho0

    def max_amplitude(self):
        # every profile takes values between 0 and the amplitude
        return abs(self.amplitude)

    def safe_load_margin(self):
        """r_bar minus the largest deviatoric safe-load stress over [0, T]."""
        dev = np.linalg.norm(self.rho0[:, 1:], axis=1).max(initial=0.0)
        return self.space.material.r_bar - self.max_amplitude() * dev

    def check_safe_load(self, alpha):
        margin = self.safe_load_margin()
        if margin < alpha:
            raise ValueError(f"safe-load margin {margin:.3g} below required {alpha:.3g}")
        return margin

    def equilibrium_residual(self, t):
        """B^T(area rho(t)) - F(t) on free dofs."""
        sp = self.space
        rho = self.rho(t)
        return sp.B_free.T @ (sp.cell_weights3 * rho.ravel()) - self.F(t)[sp.free_dofs]


def _consistent_load(space, traction, body_force):
    mesh = space.mesh
    F = np.zeros(space.n_dofs)
    if np.any(body_force):
        F[0::2] += body_force[0] * mesh.node_mass
        F[1::2] += body_force[1] * mesh.node_mass
    if np.any(traction):
        for edge in space.neumann_edges:
            nodes = mesh.edge_nodes(edge)
            coords = mesh.nodes[nodes, 1 if edge in ("left", "right") else 0]
            h = np.diff(coords)
            weights = np.zeros(len(nodes))
            weights[:-1] += 0.5 * h
            weights[1:] += 0.5 * h
            F[2 * nodes] += traction[0] * weights
            F[2 * nodes + 1] += traction[1] * weights
    return F


def total_load(loading, t):
    return loading.F(t)


def build_space(nx, ny, lx=1.0, ly=1.0, dirichlet="left", neumann="right", material=None, Am=None):
    material = material if material is not None else MaterialModel()
    return DiscreteSpace(StructuredMesh(nx, ny, lx, ly), material, dirichlet, neumann, Am)

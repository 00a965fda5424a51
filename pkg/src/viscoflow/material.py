"""Constitutive laws: stiffness interpolation, damage potential, yield balls.

Symmetric 2x2 matrices are stored in the orthonormal coordinates

    v0 = (xx + yy)/sqrt2,  v1 = (xx - yy)/sqrt2,  v2 = sqrt2*xy

so that the Frobenius product is the Euclidean product of coordinates and the
deviatoric part is simply (0, v1, v2).  Deviatoric fields carry only (v1, v2).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

SQRT2 = np.sqrt(2.0)
DIM = 2


def sym_to_coords(m):
    """(..., 2, 2) symmetric matrices -> (..., 3) orthonormal coordinates."""
    m = np.asarray(m, dtype=float)
    xx, yy = m[..., 0, 0], m[..., 1, 1]
    xy = 0.5 * (m[..., 0, 1] + m[..., 1, 0])
    return np.stack([(xx + yy) / SQRT2, (xx - yy) / SQRT2, SQRT2 * xy], axis=-1)


def coords_to_sym(v):
    v = np.asarray(v, dtype=float)
    xx = (v[..., 0] + v[..., 1]) / SQRT2
    yy = (v[..., 0] - v[..., 1]) / SQRT2
    xy = v[..., 2] / SQRT2
    out = np.empty(v.shape[:-1] + (2, 2))
    out[..., 0, 0] = xx
    out[..., 1, 1] = yy
    out[..., 0, 1] = xy
    out[..., 1, 0] = xy
    return out


def dev_coords(v):
    """Deviatoric projection in coordinate form; keeps the 3-vector layout."""
    v = np.array(v, dtype=float)
    v[..., 0] = 0.0
    return v


def embed_dev(p):
    """(..., 2) deviatoric coordinates -> (..., 3) symmetric coordinates."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(p.shape[:-1] + (3,))
    out[..., 1:] = p
    return out


def _scale(xi, factor):
    xi = np.asarray(xi, dtype=float)
    factor = np.asarray(factor, dtype=float)
    if xi.shape[-2:] == (2, 2):
        return xi * factor[..., None, None]
    return xi * factor[..., None]


@dataclass(frozen=True)
class MaterialModel:
    """Default admissible constitutive data (those of the bundled reference instance).

    ``profile`` selects the stiffness interpolant: "hermite" is the C^{1,1}
    cubic 3z^2 - 2z^3 clipped to [0, 1]; "linear" is clip(z, 0, 1), which is
    affine on (0, 1) but only Lipschitz at the ends.
    """

    gamma1: float = 100.0
    gamma2: float = 200.0
    c_w: float = 0.4
    q_exp: float = 5.0
    r_bar: float = 100.0
    R_bar: float = 150.0
    kappa: float = 2.0
    delta: float = 1.0
    m_exp: float = 1.5
    profile: str = "hermite"

    def __post_init__(self):
        if not 0 < self.gamma1 <= self.gamma2:
            raise ValueError("need 0 < gamma1 <= gamma2")
        if self.c_w <= 0:
            raise ValueError("c_w must be positive")
        if self.q_exp <= 2 * DIM:
            raise ValueError(f"q_exp must exceed {2 * DIM}")
        if not 0 < self.r_bar < self.R_bar:
            raise ValueError("need 0 < r_bar < R_bar")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.m_exp <= DIM / 2:
            raise ValueError(f"m_exp must exceed {DIM / 2}")
        if self.profile not in ("hermite", "linear"):
            raise ValueError(f"unknown profile {self.profile!r}")

    def to_dict(self):
        return asdict(self)

    # -- stiffness -----------------------------------------------------------
    def s(self, z):
        x = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        if self.profile == "linear":
            return x
        return x * x * (3.0 - 2.0 * x)

    def ds(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z > 0.0) & (z < 1.0)
        if self.profile == "linear":
            return np.where(inside, 1.0, 0.0)
        return np.where(inside, 6.0 * z * (1.0 - z), 0.0)

    def d2s(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z > 0.0) & (z < 1.0)
        if self.profile == "linear":
            return np.zeros_like(z)
        return np.where(inside, 6.0 - 12.0 * z, 0.0)

    def stiffness(self, z):
        """Scalar factor c(z) with C(z) = c(z) * identity."""
        return self.gamma1 + (self.gamma2 - self.gamma1) * self.s(z)

    def stiffness_prime(self, z):
        return (self.gamma2 - self.gamma1) * self.ds(z)

    def stiffness_second(self, z):
        return (self.gamma2 - self.gamma1) * self.d2s(z)

    def elastic_apply(self, z, xi):
        """C(z) xi; ``xi`` may be 2x2 matrices or 3-coordinate vectors."""
        return _scale(xi, self.stiffness(z))

    def elastic_derivative(self, z, xi):
        """C'(z) xi in the same layout as ``xi``."""
        return _scale(xi, self.stiffness_prime(z))

    def stiffness_lipschitz(self):
        """Lipschitz constant of z -> c'(z)."""
        if self.profile == "linear":
            return np.inf
        return 6.0 * (self.gamma2 - self.gamma1)

    # -- damage potential ----------------------------------------------------
    def _check_positive(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0.0):
            raise ValueError("damage potential undefined for z <= 0")
        return z

    def W(self, z):
        z = self._check_positive(z)
        q = self.q_exp
        return self.c_w * (z ** (-q) - 1.0 + q * (z - 1.0))

    def W_prime(self, z):
        z = self._check_positive(z)
        q = self.q_exp
        return self.c_w * q * (1.0 - z ** (-q - 1.0))

    def W_second(self, z):
        z = self._check_positive(z)
        q = self.q_exp
        return self.c_w * q * (q + 1.0) * z ** (-q - 2.0)

    # -- yield balls ---------------------------------------------------------
    @property
    def C_K(self):
        return self.R_bar - self.r_bar

    def radius(self, z):
        return self.r_bar + self.C_K * np.clip(np.asarray(z, dtype=float), 0.0, 1.0)

    def radius_prime(self, z):
        z = np.asarray(z, dtype=float)
        return np.where((z > 0.0) & (z < 1.0), self.C_K, 0.0)

    def support_H(self, z, pi):
        """Support function of K(z) evaluated at deviatoric pi (last axis)."""
        return self.radius(z) * np.linalg.norm(np.asarray(pi, dtype=float), axis=-1)

    def project_K(self, z, sigma):
        sigma = np.asarray(sigma, dtype=float)
        r = np.asarray(self.radius(z))
        nrm = np.linalg.norm(sigma, axis=-1)
        scale = np.where(nrm > r, r / np.where(nrm > 0, nrm, 1.0), 1.0)
        return sigma * scale[..., None]

    def dist_K(self, z, sigma):
        nrm = np.linalg.norm(np.asarray(sigma, dtype=float), axis=-1)
        return np.maximum(nrm - self.radius(z), 0.0)

    def hausdorff_K(self, z1, z2):
        return np.abs(self.radius(z1) - self.radius(z2))

    # -- damage dissipation --------------------------------------------------
    def R_density(self, zeta):
        """Pointwise density; returns (value, violation) with violation > 0 off the domain."""
        zeta = np.asarray(zeta, dtype=float)
        return self.kappa * np.maximum(-zeta, 0.0), np.maximum(zeta, 0.0)

    # -- viscosity -----------------------------------------------------------
    def viscosity_apply(self, a):
        return self.delta * np.asarray(a, dtype=float)


def assemble_Am(mesh, m_exp):
    """Nonlocal gradient form by cell-center double sum, self pairs excluded.

    z1^T A z2 = sum_{c != d} |c||d| (G_c z1 - G_d z1).(G_c z2 - G_d z2) / |x_c - x_d|^(2 + 2(m-1))
    with G_c the center gradient of the bilinear interpolant.
    """
    if m_exp <= DIM / 2:
        raise ValueError(f"m_exp must exceed {DIM / 2}")
    centers = mesh.cell_centers
    areas = mesh.cell_areas
    G = mesh.grad_op.reshape(mesh.n_cells, 2, mesh.n_nodes)
    dist = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    np.fill_diagonal(dist, 1.0)
    w = np.outer(areas, areas) / dist ** (DIM + 2.0 * (m_exp - 1.0))
    np.fill_diagonal(w, 0.0)
    rows = w.sum(axis=1)
    GtG = np.einsum("ckn,ckm->cnm", G, G)
    A = 2.0 * np.einsum("c,cnm->nm", rows, GtG)
    A -= 2.0 * np.einsum("cd,ckn,dkm->nm", w, G, G)
    return 0.5 * (A + A.T)

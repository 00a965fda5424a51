import numpy as np
import pytest

from viscoflow.discretization import (
    LoadingProgram, State, StructuredMesh, build_space, norms, total_load,
)


@pytest.fixture(scope="module")
def space():
    return build_space(3, 2, lx=1.5, ly=1.0, dirichlet="left", neumann="right")


def test_mesh_layout():
    mesh = StructuredMesh(3, 2, 1.5, 1.0)
    assert mesh.n_nodes == 12 and mesh.n_cells == 6
    assert mesh.cell_areas.sum() == pytest.approx(1.5)
    assert mesh.node_mass.sum() == pytest.approx(1.5)
    assert list(mesh.edge_nodes("left")) == [0, 4, 8]
    assert list(mesh.edge_nodes("top")) == [8, 9, 10, 11]


def test_mesh_rejects_bad_input():
    with pytest.raises(ValueError):
        StructuredMesh(0, 2)
    with pytest.raises(ValueError):
        StructuredMesh(2, 2, lx=-1.0)


def test_space_rejects_bad_boundaries():
    with pytest.raises(ValueError):
        build_space(2, 2, dirichlet="none")
    with pytest.raises(ValueError):
        build_space(2, 2, dirichlet="left", neumann="left")
    with pytest.raises(ValueError):
        build_space(2, 2, dirichlet="west")


def test_strain_of_affine_field(space):
    # u = (a x + b y, c x + d y) has constant strain in every cell
    x, y = space.mesh.nodes.T
    u = np.empty(space.n_dofs)
    u[0::2] = 0.3 * x + 0.1 * y
    u[1::2] = -0.2 * x + 0.5 * y
    e = space.strain(u)
    exx, eyy, exy = 0.3, 0.5, 0.5 * (0.1 - 0.2)
    want = [(exx + eyy) / np.sqrt(2), (exx - eyy) / np.sqrt(2), np.sqrt(2) * exy]
    assert np.allclose(e, want)


def test_norm_duality(space, rng):
    u = rng.standard_normal(space.n_free)
    eta = space.K_D @ u
    assert norms(space, eta, "H1D_dual") == pytest.approx(norms(space, u, "H1D"))


def test_zero_vector_norms(space):
    for which, n in (("H1D", space.n_dofs), ("H1D_dual", space.n_free), ("L2u", space.n_dofs),
                     ("L2z", space.n_nodes), ("L2p", 2 * space.n_cells), ("Hm", space.n_nodes)):
        assert space.norm(np.zeros(n), which) == 0.0


def test_dual_norm_cauchy_schwarz(space, rng):
    for _ in range(50):
        eta = rng.standard_normal(space.n_free)
        u = rng.standard_normal(space.n_free)
        assert eta @ u <= space.norm(eta, "H1D_dual") * space.norm(u, "H1D") + 1e-12
    u_star = space.solve_KD(eta)
    assert eta @ u_star == pytest.approx(space.norm(eta, "H1D_dual") * space.norm(u_star, "H1D"))


def test_unknown_norm(space):
    with pytest.raises(ValueError):
        space.norm(np.zeros(3), "H2")


def test_zero_load(space):
    ld = LoadingProgram(space, T=1.0)
    assert np.all(total_load(ld, 0.5) == 0.0)


def test_edge_traction_sums_to_edge_length(space):
    g = np.array([0.7, -0.3])
    ld = LoadingProgram(space, T=1.0, profile="constant", traction=tuple(g))
    F = total_load(ld, 0.2)
    assert F[0::2].sum() == pytest.approx(space.mesh.edge_length("right") * g[0])
    assert F[1::2].sum() == pytest.approx(space.mesh.edge_length("right") * g[1])


def test_body_force_total(space):
    ld = LoadingProgram(space, T=1.0, profile="constant", body_force=(0.0, -2.0))
    assert total_load(ld, 0.0)[1::2].sum() == pytest.approx(-2.0 * 1.5)


def test_safe_load_is_equilibrated(space):
    ld = LoadingProgram(space, T=2.0, traction=(1.0, 0.5), body_force=(0.2, 0.0))
    for t in (0.0, 0.7, 2.0):
        assert np.abs(ld.equilibrium_residual(t)).max() <= 1e-10
    assert ld.safe_load_margin() > 0
    with pytest.raises(ValueError):
        ld.check_safe_load(1e6)


def test_loading_profiles(space):
    for profile in ("ramp", "constant", "smoothstep"):
        ld = LoadingProgram(space, T=2.0, profile=profile, traction=(1.0, 0.0))
        h = 1e-6
        for t in (0.3, 1.1, 1.7):
            fd = (ld.a(t + h) - ld.a(t - h)) / (2 * h)
            assert ld.a_dot(t) == pytest.approx(fd, abs=1e-6)
    with pytest.raises(ValueError):
        LoadingProgram(space, profile="sine")


def test_stretch_needs_right_clamp(space):
    with pytest.raises(ValueError):
        LoadingProgram(space, stretch=1.0)


def test_state_pack_round_trip(space, rng):
    q = State(space.full_u(rng.standard_normal(space.n_free)), rng.uniform(0.2, 1, space.n_nodes),
              rng.standard_normal((space.n_cells, 2)))
    back = State.unpack(space, q.pack(space))
    assert np.array_equal(back.u, q.u) and np.array_equal(back.z, q.z) and np.array_equal(back.p, q.p)
    assert q.distance(back, space) == 0.0

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core import lie
from src.core.gaugefield import (
    THETA, Connection, FlatBase, codifferential, codifferential0, cohomology_dims, coulomb_gauge_fix,
    coulomb_project, covariant_d, covariant_d1, curvature, energy, energy_and_gradient, gauge_apply,
    gradient_slice, hessian_apply, identity_transform, slice_residual, virtual_dimension, wedge_bracket,
)
from src.core.lattice import Grid, get_workspace, l2_inner, l2_norm, pointwise_norm
from src.exceptions import AmbiguousKernel, GridError, NoConvergence
from src.processors.kuranishi import harmonic_basis
from src.utils.initial_data import constant_form, random_perturbation

from tests.conftest import CORNERS, INTERIOR


def _smooth_gauge(N, amplitude=0.3):
    x, y = Grid(N).coordinates()
    chi = np.zeros((N, N, 3))
    chi[..., 0] = amplitude * np.sin(2 * np.pi * x)
    chi[..., 1] = amplitude * np.cos(2 * np.pi * y)
    chi[..., 2] = 0.5 * amplitude * np.sin(2 * np.pi * (x + y))
    return lie.exponential(chi)


def test_connection_validates_shape():
    with pytest.raises(GridError):
        Connection(THETA, np.zeros((2, 8, 8, 4)))
    with pytest.raises(GridError):
        Connection(THETA, np.zeros((2, 8, 6, 3)))
    a = np.zeros((2, 8, 8, 3))
    a[0, 0, 0, 0] = np.nan
    with pytest.raises(GridError):
        Connection(THETA, a)


def test_connection_is_immutable():
    A = Connection.flat(THETA, 8)
    with pytest.raises(ValueError):
        A.a[0, 0, 0, 0] = 1.0


def test_rebase_keeps_total_components(random_connection):
    A = random_connection()
    B = A.rebase(FlatBase(0.1, -0.4))
    assert_allclose(B.total(), A.total(), atol=1e-14)


@pytest.mark.parametrize("base", [THETA, INTERIOR, FlatBase(0.3, 2.9)])
def test_flat_bases_have_zero_curvature(base):
    assert np.max(np.abs(curvature(Connection.flat(base, 8)))) == 0.0


def test_constant_pair_curvature():
    xi, eta = 0.1 * lie.I, 0.2 * lie.J
    A = Connection(THETA, constant_form(xi, eta, 8))
    assert_allclose(curvature(A), np.broadcast_to(lie.bracket(xi, eta), (8, 8, 3)), atol=1e-15)
    assert_allclose(energy(A), 0.5 * float(lie.norm(lie.bracket(xi, eta))) ** 2)


def test_curvature_expansion(random_connection, rng):
    # F_{Gamma + a} = d_Gamma a + 1/2 [a ^ a] at a flat base
    A = random_connection(N=16)
    flat = Connection.flat(A.base, 16)
    expected = covariant_d1(flat, A.a) + 0.5 * wedge_bracket(A.a, A.a)
    assert_allclose(curvature(A), expected, atol=1e-10)


@pytest.mark.parametrize("N", [8, 16, 32])
def test_covariant_d_adjoint(N, random_connection, rng):
    A = random_connection(N=N)
    phi = rng.standard_normal((N, N, 3))
    b = rng.standard_normal((2, N, N, 3))
    f = rng.standard_normal((N, N, 3))
    assert_allclose(l2_inner(covariant_d(A, phi), b), l2_inner(phi, codifferential0(A, b)), rtol=1e-9)
    assert_allclose(l2_inner(covariant_d1(A, b), f), l2_inner(b, codifferential(A, f)), rtol=1e-9)


def test_wedge_bracket_symmetry(rng):
    b, e = rng.standard_normal((2, 2, 8, 8, 3))
    assert_allclose(wedge_bracket(b, e), wedge_bracket(e, b), atol=1e-13)


def test_gauge_invariance_under_constant_transform(random_connection, rng):
    A = random_connection(N=8)
    u = identity_transform(8)
    u[...] = lie.exponential(rng.standard_normal(3))
    B = gauge_apply(u, A)
    assert_allclose(energy(B), energy(A), rtol=1e-12)
    assert_allclose(pointwise_norm(curvature(B)), pointwise_norm(curvature(A)), atol=1e-12)


def test_gauge_invariance_under_smooth_transform(random_connection):
    N = 32
    A = random_connection(N=N, amplitude=0.1)
    B = gauge_apply(_smooth_gauge(N), A)
    assert_allclose(energy(B), energy(A), rtol=1e-8)
    assert_allclose(pointwise_norm(curvature(B)), pointwise_norm(curvature(A)), atol=1e-8)


def test_gauge_apply_identity_is_trivial(random_connection):
    A = random_connection()
    assert_allclose(gauge_apply(identity_transform(A.N), A).a, A.a, atol=1e-13)


def test_gauge_apply_rejects_wrong_shape(random_connection):
    with pytest.raises(GridError):
        gauge_apply(np.zeros((4, 4, 4)), random_connection())


def test_coulomb_projection(random_one_form):
    b = random_one_form(16)
    for base in (THETA, INTERIOR):
        pb = coulomb_project(b, base)
        assert slice_residual(Connection(base, pb)) < 1e-10
        assert_allclose(coulomb_project(pb, base), pb, atol=1e-12)


def test_gradient_matches_energy_derivative(random_connection, random_one_form):
    A = random_connection(N=8)
    b = coulomb_project(random_one_form(8), A.base)
    eps = 1e-6
    e_plus = energy(A.with_perturbation(A.a + eps * b))
    e_minus = energy(A.with_perturbation(A.a - eps * b))
    assert_allclose((e_plus - e_minus) / (2 * eps), l2_inner(gradient_slice(A), b), rtol=1e-6)


def test_energy_and_gradient_agree(random_connection):
    A = random_connection()
    e, g = energy_and_gradient(A)
    assert_allclose(e, energy(A))
    assert_allclose(g, gradient_slice(A))


@pytest.mark.parametrize("N", [8, 16])
def test_hessian_is_symmetric(N, random_connection, rng):
    A = random_connection(N=N)
    b, e = rng.standard_normal((2, 2, N, N, 3))
    assert_allclose(l2_inner(hessian_apply(A, b), e), l2_inner(b, hessian_apply(A, e)), rtol=1e-9)


def test_hessian_matches_gradient_derivative(random_connection, random_one_form):
    A = random_connection(N=8)
    b = coulomb_project(random_one_form(8), A.base)
    eps = 1e-6
    g_plus = gradient_slice(A.with_perturbation(A.a + eps * b))
    g_minus = gradient_slice(A.with_perturbation(A.a - eps * b))
    assert_allclose((g_plus - g_minus) / (2 * eps), hessian_apply(A, b), atol=1e-6)


@pytest.mark.parametrize("base", [THETA, INTERIOR])
def test_hessian_at_flat_base_is_laplacian(base, random_one_form):
    flat = Connection.flat(base, 16)
    b = coulomb_project(random_one_form(16), base)
    expected = coulomb_project(codifferential(flat, covariant_d1(flat, b)), base)
    assert_allclose(hessian_apply(flat, b), expected, atol=1e-9)


@pytest.mark.parametrize("corner", CORNERS)
def test_cohomology_at_corners(corner):
    assert cohomology_dims(corner, 8) == (3, 6, 3)
    assert virtual_dimension(corner, 8) == 0


def test_cohomology_at_interior_points(rng):
    for alpha, beta in rng.uniform(0.05, np.pi - 0.05, (20, 2)):
        h0, h1, h2 = cohomology_dims(FlatBase(alpha, beta), 8)
        assert (h0, h1, h2) == (1, 2, 1)
        assert h1 == h0 + h2


@pytest.mark.parametrize("base", [THETA, INTERIOR, FlatBase(np.pi, 0.0)])
def test_h1_counts_grid_harmonic_one_forms(base):
    N = 8
    flat = Connection.flat(base, N)
    h0, h1, h2 = cohomology_dims(base, N)
    space = harmonic_basis(base, N)
    assert space.dimension == h1
    for vector in space.basis:
        assert l2_norm(covariant_d1(flat, vector)) < 1e-10
        assert l2_norm(codifferential0(flat, vector)) < 1e-10


def test_h2_counts_covariantly_constant_two_forms():
    N = 8
    # at Theta every constant two-form is harmonic; at an interior base only the K direction
    for base, harmonic in ((THETA, (True, True, True)), (INTERIOR, (False, False, True))):
        flat = Connection.flat(base, N)
        for generator, expected in zip((lie.I, lie.J, lie.K), harmonic):
            f = np.broadcast_to(generator, (N, N, 3)).copy()
            assert (l2_norm(codifferential(flat, f)) < 1e-10) is expected
        assert cohomology_dims(base, N)[2] == sum(harmonic)


def test_cohomology_refuses_ambiguous_kernels():
    with pytest.raises(AmbiguousKernel):
        cohomology_dims(FlatBase(1.3e-4, 0.0), 8)


def test_coulomb_gauge_fix_recovers_slice(random_connection):
    N = 32
    A = random_connection(N=N, amplitude=0.05)
    B = gauge_apply(_smooth_gauge(N, 0.05), A)
    assert slice_residual(B) > 1e-4
    u, fixed = coulomb_gauge_fix(B, radius=10.0)
    assert slice_residual(fixed) < 1e-10
    assert_allclose(energy(fixed), energy(A), rtol=1e-6)


def test_coulomb_gauge_fix_rejects_far_connections(random_connection):
    A = random_connection(N=8, amplitude=5.0)
    with pytest.raises(NoConvergence):
        coulomb_gauge_fix(A, radius=1.0)


def test_coulomb_gauge_is_locally_distance_minimizing(random_connection, rng):
    # first variation of ||u(A) - Gamma||^2 vanishes along exp(s chi) at a Coulomb connection
    N = 16
    A = random_connection(N=N, amplitude=0.1)
    x, y = Grid(N).coordinates()
    chi = np.zeros((N, N, 3))
    chi[..., 0] = np.sin(2 * np.pi * x) * rng.standard_normal()
    chi[..., 2] = np.cos(2 * np.pi * y) * rng.standard_normal()
    ws = get_workspace(N)
    s = 1e-5
    plus = l2_norm(gauge_apply(lie.exponential(s * chi), A, ws).a) ** 2
    minus = l2_norm(gauge_apply(lie.exponential(-s * chi), A, ws).a) ** 2
    assert abs(plus - minus) / (2 * s) < 1e-9
    for scale in (1e-3, 1e-2):
        moved = l2_norm(gauge_apply(lie.exponential(scale * chi), A, ws).a) ** 2
        assert moved >= l2_norm(A.a) ** 2 - 1e-9


@pytest.mark.slow
def test_coulomb_minimality_over_many_connections():
    N = 8
    x, y = Grid(N).coordinates()
    ws = get_workspace(N)
    rng = np.random.default_rng(7)
    s = 1e-5
    for seed in range(100):
        A = random_perturbation(N, 0.1, seed=seed, base=INTERIOR)
        assert slice_residual(A) < 1e-10
        weights = rng.standard_normal((3, 3))
        chi = (weights[0] * np.sin(2 * np.pi * x)[..., None] + weights[1] * np.cos(2 * np.pi * y)[..., None]
               + weights[2] * np.sin(2 * np.pi * (x - y))[..., None])
        base_value = l2_norm(A.a) ** 2
        plus = l2_norm(gauge_apply(lie.exponential(s * chi), A, ws).a) ** 2
        minus = l2_norm(gauge_apply(lie.exponential(-s * chi), A, ws).a) ** 2
        assert abs(plus - minus) / (2 * s) < 1e-9
        for scale in (1e-3, 1e-2):
            moved = l2_norm(gauge_apply(lie.exponential(scale * chi), A, ws).a) ** 2
            assert moved >= base_value - 1e-9

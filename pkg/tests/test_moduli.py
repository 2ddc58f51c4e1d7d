import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core import lie
from src.core.gaugefield import THETA, Connection, FlatBase, gauge_apply, identity_transform
from src.core.lattice import Grid, l2_norm, sobolev_norm
from src.exceptions import DegenerateRay, NonCommuting
from src.processors import moduli
from src.processors.moduli import HolonomyPair, PillowcasePoint, Stratum
from src.utils.initial_data import morse_bott_ray, product_ray

from tests.conftest import INTERIOR


class TestReduce:
    @pytest.mark.parametrize("alpha, beta", [(0.3, 1.2), (4.0, 1.0), (-1.0, -5.0), (12.0, 20.0)])
    def test_lands_in_fundamental_domain(self, alpha, beta):
        p = moduli.reduce(alpha, beta)
        assert 0.0 <= p.alpha <= np.pi
        assert 0.0 <= p.beta < 2.0 * np.pi

    def test_is_idempotent(self, rng):
        for alpha, beta in rng.uniform(-10.0, 10.0, (20, 2)):
            p = moduli.reduce(alpha, beta)
            assert p.reduce() == p

    def test_identifies_weyl_and_lattice_images(self, rng):
        for alpha, beta in rng.uniform(-10.0, 10.0, (20, 2)):
            p = moduli.reduce(alpha, beta)
            assert moduli.pillowcase_dist(p, moduli.reduce(-alpha, -beta)) < 1e-12
            assert moduli.pillowcase_dist(p, moduli.reduce(alpha - 2.0 * np.pi, beta + 4.0 * np.pi)) < 1e-12

    def test_edges_fold(self):
        assert_allclose(moduli.reduce(0.0, 5.0).as_array(), (0.0, 2.0 * np.pi - 5.0))
        assert_allclose(moduli.reduce(np.pi, 4.0).as_array(), (np.pi, 2.0 * np.pi - 4.0))


def test_pillowcase_distance_is_a_metric(rng):
    p, q, r = (moduli.reduce(*xy) for xy in rng.uniform(0.0, 2.0 * np.pi, (3, 2)))
    assert moduli.pillowcase_dist(p, p) == 0.0
    assert_allclose(moduli.pillowcase_dist(p, q), moduli.pillowcase_dist(q, p))
    assert moduli.pillowcase_dist(p, r) <= moduli.pillowcase_dist(p, q) + moduli.pillowcase_dist(q, r) + 1e-12


@pytest.mark.parametrize("alpha, beta, stratum", [
    (0.0, 0.0, Stratum.CENTRAL),
    (np.pi, 0.0, Stratum.CENTRAL),
    (0.0, np.pi, Stratum.CENTRAL),
    (np.pi, np.pi, Stratum.CENTRAL),
    (2.0 * np.pi, -np.pi, Stratum.CENTRAL),
    (np.pi / 2, 0.0, Stratum.ABELIAN),
    (0.0, 1.0, Stratum.ABELIAN),
    (np.pi / 2, np.pi / 3, Stratum.ABELIAN),
])
def test_classify(alpha, beta, stratum):
    assert moduli.classify(moduli.reduce(alpha, beta)) is stratum


def test_strata_carry_zariski_dimension():
    assert Stratum.CENTRAL.zariski_dimension == 6
    assert Stratum.ABELIAN.zariski_dimension == 2
    assert Stratum.IRREDUCIBLE.label == "irreducible"


class TestHolonomy:
    def test_flat_bases(self, rng):
        for alpha, beta in rng.uniform(-3.0, 3.0, (10, 2)):
            point = moduli.to_pillowcase(moduli.holonomy(Connection.flat(FlatBase(alpha, beta), 8)))
            assert moduli.pillowcase_dist(point, moduli.reduce(alpha, beta)) < 1e-12

    def test_constant_gauge_covariance(self, rng):
        A = Connection.flat(INTERIOR, 8)
        u = identity_transform(8)
        u[...] = lie.exponential(rng.standard_normal(3))
        before = moduli.to_pillowcase(moduli.holonomy(A))
        after = moduli.to_pillowcase(moduli.holonomy(gauge_apply(u, A)))
        assert moduli.pillowcase_dist(before, after) < 1e-12

    def test_smooth_gauge_covariance(self):
        N = 64
        x, y = Grid(N).coordinates()
        chi = np.zeros((N, N, 3))
        chi[..., 0] = 0.2 * np.sin(2 * np.pi * x)
        chi[..., 1] = 0.2 * np.cos(2 * np.pi * (x + y))
        A = gauge_apply(lie.exponential(chi), Connection.flat(FlatBase(0.8, 2.1), N))
        # path-ordered products are gauge covariant only up to O(h^2)
        point = moduli.to_pillowcase(moduli.holonomy(A), tol=1e-2)
        assert moduli.pillowcase_dist(point, moduli.reduce(0.8, 2.1)) < 1e-2

    def test_averages_over_parallel_loops(self):
        N = 8
        _, y = Grid(N).coordinates()
        a = np.zeros((2, N, N, 3))
        a[0, ..., 2] = 0.3 * np.cos(2 * np.pi * y)
        rho = moduli.holonomy(Connection(FlatBase(1.0, 2.0), a))
        # the row through the origin alone reads 1.3
        assert_allclose(rho.eigenphases(), (1.0, 2.0), atol=1e-12)
        assert_allclose(rho.spread, np.cos(0.7) - np.cos(1.3), rtol=1e-12)

    def test_flat_loops_agree(self, rng):
        alpha, beta = rng.uniform(0.2, 2.8, 2)
        assert moduli.holonomy(Connection.flat(FlatBase(alpha, beta), 8)).spread < 1e-14

    def test_second_order_under_refinement(self):
        def eigenphase(N):
            x, y = Grid(N).coordinates()
            a = np.zeros((2, N, N, 3))
            a[0, ..., 0] = 0.5 * np.sin(2 * np.pi * y)
            a[0, ..., 1] = 0.5 * np.cos(2 * np.pi * x)
            a[1, ..., 2] = 0.4 * np.sin(2 * np.pi * x)
            a[1, ..., 0] = 0.3 * np.cos(2 * np.pi * y)
            return moduli.holonomy(Connection(FlatBase(0.6, 1.3), a)).eigenphases()

        reference = eigenphase(256)
        errors = [np.abs(eigenphase(N) - reference).max() for N in (8, 16, 32)]
        slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert_allclose(slopes, 2.0, atol=0.3)

    def test_eigenphases(self):
        rho = moduli.holonomy(Connection.flat(FlatBase(0.5, 1.5), 8))
        assert_allclose(rho.eigenphases(), (0.5, 1.5), atol=1e-12)
        assert rho.commutator_norm < 1e-14

    def test_non_commuting_pair(self):
        rho = HolonomyPair(lie.exponential(0.5 * lie.I), lie.exponential(0.5 * lie.J))
        with pytest.raises(NonCommuting) as excinfo:
            moduli.to_pillowcase(rho)
        assert excinfo.value.commutator_norm > 0.1
        moduli.to_pillowcase(rho, tol=None)

    def test_central_first_holonomy(self):
        rho = HolonomyPair(lie.exponential(np.pi * lie.K), lie.exponential(0.7 * lie.I))
        point = moduli.to_pillowcase(rho)
        assert moduli.pillowcase_dist(point, moduli.reduce(np.pi, 0.7)) < 1e-12


class TestNearestFlat:
    def test_flat_input(self):
        projection = moduli.nearest_flat(Connection.flat(FlatBase(0.7, 1.1), 8))
        assert projection.distance < 1e-12
        assert moduli.pillowcase_dist(projection.point, moduli.reduce(0.7, 1.1)) < 1e-10

    def test_off_base_diagonal_shift(self):
        # Gamma(0.7, 1.1) written relative to Theta
        A = Connection.flat(FlatBase(0.7, 1.1), 8).rebase(THETA)
        point, distance = moduli.nearest_flat(A)
        assert distance < 1e-10
        assert moduli.pillowcase_dist(point, moduli.reduce(0.7, 1.1)) < 1e-10

    def test_gauge_transformed_flat(self):
        N = 16
        x, _ = Grid(N).coordinates()
        chi = np.zeros((N, N, 3))
        chi[..., 0] = 0.01 * np.sin(2 * np.pi * x)
        A = gauge_apply(lie.exponential(chi), Connection.flat(INTERIOR, N))
        projection = moduli.nearest_flat(A)
        assert projection.distance < 1e-8
        assert moduli.pillowcase_dist(projection.point, moduli.reduce(INTERIOR.alpha, INTERIOR.beta)) < 1e-8

    def test_distance_bounded_by_perturbation(self, random_connection):
        A = random_connection(N=8, amplitude=0.05)
        projection = moduli.nearest_flat(A)
        assert projection.distance <= l2_norm(A.a) * (1.0 + 1e-3)
        assert projection.iterations >= 1


class TestLambdaScan:
    def test_product_ray(self):
        result = moduli.lambda_scan(lambda t: product_ray(t, 8), np.logspace(-3, -1, 8), max_workers=2)
        assert_allclose(result.lam, 0.5, atol=1e-6)
        assert result.r2 > 0.999999
        assert list(result.table["t"]) == sorted(result.table["t"])

    def test_morse_bott_ray(self):
        result = moduli.lambda_scan(lambda t: morse_bott_ray(t, 8), np.logspace(-4, -2, 8))
        assert_allclose(result.lam, 1.0, atol=0.02)
        # gauge fixing removes the exact part: what is left is the transverse K direction
        for t, distance in zip(result.table["t"], result.table["distance"]):
            raw = sobolev_norm(morse_bott_ray(t, 8).a, 2.0, 1)
            assert distance < 0.5 * raw

    def test_morse_bott_ray_is_not_abelian(self):
        a = morse_bott_ray(0.1, 8).a
        assert np.abs(a[..., 0]).max() > 0.1
        projection = moduli.nearest_flat(morse_bott_ray(0.01, 8))
        assert np.abs(projection.gauge[..., 1]).max() > 1e-3
        assert projection.point.alpha == pytest.approx(np.pi / 2, abs=1e-3)

    @pytest.mark.parametrize("p", [3.0, 4.0])
    def test_product_ray_other_exponents(self, p):
        result = moduli.lambda_scan(lambda t: product_ray(t, 8), np.logspace(-3, -1, 8), p=p)
        assert_allclose(result.lam, 0.5, atol=1e-6)
        assert result.summary()["p"] == p

    def test_degenerate_ray(self):
        with pytest.raises(DegenerateRay):
            moduli.lambda_scan(lambda t: Connection.flat(THETA, 8), [0.1, 0.2, 0.3])

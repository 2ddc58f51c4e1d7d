import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.exceptions import DidNotConverge, ParameterRangeError
from src.processors import lojasiewicz
from src.processors.lojasiewicz import LojConstants


@pytest.fixture(params=sorted(lojasiewicz.CORPUS))
def test_function(request):
    return lojasiewicz.get_test_function(request.param)


def test_corpus_gradients_match_energies(test_function, rng):
    for _ in range(5):
        x = rng.uniform(-0.8, 0.8, test_function.dimension)
        assert test_function.gradient_error(x) < 1e-6


def test_unknown_function():
    with pytest.raises(ParameterRangeError):
        lojasiewicz.get_test_function("rosenbrock")


def test_constants_only_where_known():
    assert lojasiewicz.get_test_function("quartic").constants().alpha == pytest.approx(4.0)
    with pytest.raises(ParameterRangeError):
        lojasiewicz.get_test_function("double_well").constants()


class TestLojConstants:
    def test_derived_exponents(self):
        constants = LojConstants(theta=0.75, C=4.0)
        assert_allclose((constants.alpha, constants.lam, constants.beta_dist), (4.0, 0.5, 2.0))
        assert constants.delta == 0.25
        assert constants.to_dict()["lambda"] == 0.5

    @pytest.mark.parametrize("kwargs", [
        {"theta": 1.0, "C": 1.0},
        {"theta": 0.4, "C": 1.0},
        {"theta": 0.5, "C": 0.0},
        {"theta": 0.5, "C": 1.0, "sigma": 1.5},
        {"theta": 0.5, "C": 1.0, "sigma": 0.4, "delta": 0.2},
    ])
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ParameterRangeError):
            LojConstants(**kwargs)


class TestFlow:
    def test_quadratic_closed_form(self):
        x0 = np.array([0.6, -0.3])
        run = lojasiewicz.flow_ode(lojasiewicz.get_test_function("quadratic"), x0)
        t = np.array([0.1, 1.0, 5.0])
        assert_allclose(run.path(t), x0[None, :] * np.exp(-2.0 * t)[:, None], rtol=1e-8, atol=1e-14)
        assert run.converged

    def test_quartic_closed_form(self):
        run = lojasiewicz.flow_ode(lojasiewicz.get_test_function("quartic"), [0.5])
        t = np.array([1.0, 100.0, 1e4])
        assert_allclose(run.path(t)[:, 0], (4.0 + 8.0 * t) ** -0.5, rtol=1e-7)

    def test_critical_start_is_stationary(self):
        run = lojasiewicz.flow_ode(lojasiewicz.get_test_function("double_well"), [0.5])
        assert run.t_final == 0.0
        assert_allclose(run.path(np.array([0.0, 10.0])), [[0.5], [0.5]])

    def test_timeout_carries_partial_run(self):
        with pytest.raises(DidNotConverge) as excinfo:
            lojasiewicz.flow_ode(lojasiewicz.get_test_function("quartic"), [0.5], t_max=10.0)
        assert excinfo.value.trajectory.t_final == pytest.approx(10.0)

    def test_frame_columns(self):
        run = lojasiewicz.flow_ode(lojasiewicz.get_test_function("morse_bott"), [0.4, 0.7])
        assert list(run.to_frame().columns) == ["t", "energy", "grad_norm", "x0", "x1"]
        # the flow never moves along the critical manifold
        assert_allclose(run.points[:, 1], 0.7)


@pytest.mark.parametrize("name, x0, length", [
    ("quadratic", [0.6, -0.3], np.hypot(0.6, 0.3)),
    ("quartic", [0.5], 0.5),
    ("morse_bott", [0.4, 0.7], 0.4),
])
def test_arc_length(name, x0, length):
    f = lojasiewicz.get_test_function(name)
    arc = lojasiewicz.arc_length_flow(f, x0)
    assert_allclose(arc.length, length, atol=1e-6)
    assert_allclose(arc.speeds, 1.0, rtol=1e-5)
    assert_allclose(np.diff(arc.s), arc.length / (len(arc.s) - 1), rtol=1e-2)
    assert arc.length <= f.constants().flowline_length_bound(f(x0)) * (1.0 + 1e-9)


def test_arc_length_needs_positive_energy():
    with pytest.raises(ParameterRangeError):
        lojasiewicz.arc_length_flow(lojasiewicz.get_test_function("quadratic"), [0.0, 0.0])


@pytest.mark.parametrize("name, x0", [("quadratic", [0.6, -0.3]), ("quartic", [0.5]),
                                      ("double_well", [0.2]), ("double_well_squared", [0.2])])
def test_energy_identity(name, x0):
    run = lojasiewicz.flow_ode(lojasiewicz.get_test_function(name), x0)
    report = lojasiewicz.energy_identity_check(run)
    assert report.passed
    assert report.relative < 1e-6


@pytest.mark.parametrize("name, alpha, target, tol", [
    ("quadratic", 2.0, "critical", 1e-9),
    ("morse_bott", 2.0, "critical", 1e-9),
    ("quartic", 4.0, "critical", 1e-9),
    ("double_well", 2.0, "zero", 0.04),
    ("double_well_squared", 4.0, "zero", 0.08),
])
def test_distance_inequality_fits(name, alpha, target, tol, rng):
    f = lojasiewicz.get_test_function(name)
    fit = lojasiewicz.verify_distance_inequality(f, min(0.2, f.sigma), 400, rng=rng, target=target)
    assert abs(fit.alpha - alpha) <= tol
    assert fit.n_samples == 400
    assert len(fit.samples) == 400


def test_distance_inequality_arguments():
    f = lojasiewicz.get_test_function("quadratic")
    with pytest.raises(ParameterRangeError):
        lojasiewicz.verify_distance_inequality(f, 0.1, 100, target="saddle")
    with pytest.raises(ParameterRangeError):
        lojasiewicz.verify_distance_inequality(f, 0.0, 100)


@pytest.mark.parametrize("name, x0, theta, c", [("quadratic", [0.6, -0.3], 0.5, 2.0), ("quartic", [0.5], 0.75, 4.0)])
def test_psi_envelope_dominates_flow(name, x0, theta, c):
    f = lojasiewicz.get_test_function(name)
    run = lojasiewicz.flow_ode(f, x0)
    t = np.geomspace(1e-3, min(run.t_final, 1e4), 50)
    distances = np.linalg.norm(run.path(t), axis=1)
    envelope = lojasiewicz.psi_envelope(theta, c, f(x0), t)
    assert np.all(distances <= envelope * (1.0 + 1e-6) + 1e-12)


def test_psi_envelope_scalar_and_errors():
    assert isinstance(lojasiewicz.psi_envelope(0.5, 2.0, 1.0, 0.0), float)
    assert lojasiewicz.psi_envelope(0.5, 2.0, 1.0, 0.0) == pytest.approx(1.0)
    for args in [(1.0, 1.0, 1.0, 0.0), (0.5, 0.0, 1.0, 0.0), (0.5, 1.0, 0.0, 0.0), (0.5, 1.0, 1.0, -1.0)]:
        with pytest.raises(ParameterRangeError):
            lojasiewicz.psi_envelope(*args)


def test_trajectory_decay_regimes():
    quadratic = lojasiewicz.flow_ode(lojasiewicz.get_test_function("quadratic"), [0.6, -0.3])
    assert lojasiewicz.fit_trajectory_decay(quadratic).regime == "exponential"
    quartic = lojasiewicz.flow_ode(lojasiewicz.get_test_function("quartic"), [0.5])
    fit = lojasiewicz.fit_trajectory_decay(quartic)
    assert fit.regime == "power"
    assert_allclose(fit.theta, 0.75, atol=0.01)


def test_corpus_report_subset():
    report = lojasiewicz.corpus_report(names=["quadratic", "quartic"])
    assert list(report["function"]) == ["quadratic", "quartic"]
    assert report["identity_passed"].all()
    assert list(report["regime"]) == ["exponential", "power"]


def test_corpus_report_rejects_unknown_names():
    with pytest.raises(ParameterRangeError):
        lojasiewicz.corpus_report(names=["quadratic", "nope"])


def test_arc_length_samples_sit_at_their_distance_along_a_straight_line():
    f = lojasiewicz.get_test_function("quadratic")
    arc = lojasiewicz.arc_length_flow(f, [0.6, -0.3])
    travelled = np.linalg.norm(arc.points - arc.points[0], axis=1)
    assert_allclose(travelled, arc.s, atol=1e-8)
    assert_allclose(arc.points[-1], 0.0, atol=1e-8)

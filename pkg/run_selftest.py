#!/usr/bin/env python3
"""
Invariant self-test

Quick per-module invariant suites on small grids: algebra identities, operator
adjointness and projections, gauge invariance, exact flow oracles, pillowcase
geometry, the Kuranishi pairing identity and the finite-dimensional toolkit.
Prints pass counts per suite; any failure makes the run fail.

Usage:
    python run_selftest.py
"""

import sys
import traceback
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np
from numpy.testing import assert_allclose

sys.path.insert(0, str(Path(__file__).parent))

from src.core import lie
from src.core.gaugefield import (
    THETA, Connection, FlatBase, cohomology_dims, codifferential0, coulomb_project, covariant_d,
    energy, gauge_apply, hessian_apply, identity_transform, slice_residual,
)
from src.core.lattice import Grid, get_workspace, l2_inner, l2_inner_spectral
from src.exceptions import SelftestFailure
from src.processors import decay, flow, kuranishi, lojasiewicz, moduli
from src.utils.experiment_manager import ExperimentConfig
from src.utils.initial_data import constant_form, product_ray, random_perturbation
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

Check = Callable[[np.random.Generator], None]

SELFTEST_GRID = 8
INTERIOR = FlatBase(np.pi / 2, np.pi / 3)


# -- lie -----------------------------------------------------------------------

def _bracket_identities(rng):
    xi, eta, zeta = rng.standard_normal((3, 3))
    assert_allclose(lie.bracket(lie.I, lie.J), 2.0 * lie.K)
    assert_allclose(lie.bracket(xi, eta), -lie.bracket(eta, xi))
    jacobi = (lie.bracket(xi, lie.bracket(eta, zeta)) + lie.bracket(eta, lie.bracket(zeta, xi))
              + lie.bracket(zeta, lie.bracket(xi, eta)))
    assert_allclose(jacobi, 0.0, atol=1e-12)


def _ad_invariance(rng):
    chi, xi, eta = rng.standard_normal((3, 3))
    lhs = lie.inner(lie.bracket(chi, xi), eta) + lie.inner(xi, lie.bracket(chi, eta))
    assert_allclose(lhs, 0.0, atol=1e-12)


def _exp_log_roundtrip(rng):
    xi = rng.standard_normal((20, 3))
    xi *= (0.9 * np.pi * rng.random(20) / lie.norm(xi))[:, None]
    q = lie.exponential(xi)
    assert_allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-14)
    assert_allclose(lie.logarithm(q), xi, atol=1e-12)


# -- lattice ---------------------------------------------------------------------

def _spectral_derivative_exact(rng):
    N = SELFTEST_GRID
    x, _ = Grid(N).coordinates()
    f = np.zeros((N, N, 3))
    f[..., 0] = np.sin(2.0 * np.pi * x)
    df = get_workspace(N).derivative(f, "x")
    assert_allclose(df[..., 0], 2.0 * np.pi * np.cos(2.0 * np.pi * x), atol=1e-12)


def _parseval(rng):
    f, g = rng.standard_normal((2, 2, SELFTEST_GRID, SELFTEST_GRID, 3))
    assert_allclose(l2_inner(f, g), l2_inner_spectral(f, g), rtol=1e-12, atol=1e-12)


def _slice_projection(rng):
    b = rng.standard_normal((2, SELFTEST_GRID, SELFTEST_GRID, 3))
    for base in (THETA, INTERIOR):
        pb = coulomb_project(b, base)
        assert_allclose(coulomb_project(pb, base), pb, atol=1e-12)
        assert slice_residual(Connection(base, pb)) < 1e-10


# -- gaugefield ----------------------------------------------------------------

def _covariant_adjoint(rng):
    N = SELFTEST_GRID
    A = random_perturbation(N, 0.3, seed=int(rng.integers(2 ** 32)), base=INTERIOR)
    phi = rng.standard_normal((N, N, 3))
    b = rng.standard_normal((2, N, N, 3))
    assert_allclose(l2_inner(covariant_d(A, phi), b), l2_inner(phi, codifferential0(A, b)), rtol=1e-10)


def _constant_gauge_invariance(rng):
    N = SELFTEST_GRID
    A = random_perturbation(N, 0.3, seed=int(rng.integers(2 ** 32)), base=INTERIOR)
    u = identity_transform(N)
    u[...] = lie.exponential(rng.standard_normal(3))
    assert_allclose(energy(gauge_apply(u, A)), energy(A), rtol=1e-12)


def _hessian_symmetry(rng):
    N = SELFTEST_GRID
    A = random_perturbation(N, 0.2, seed=int(rng.integers(2 ** 32)), base=INTERIOR)
    b, e = rng.standard_normal((2, 2, N, N, 3))
    assert_allclose(l2_inner(hessian_apply(A, b), e), l2_inner(b, hessian_apply(A, e)), rtol=1e-9)


def _cohomology_counts(rng):
    for corner in ((0.0, 0.0), (np.pi, 0.0), (0.0, np.pi), (np.pi, np.pi)):
        assert cohomology_dims(FlatBase(*corner), SELFTEST_GRID) == (3, 6, 3)
    assert cohomology_dims(INTERIOR, SELFTEST_GRID) == (1, 2, 1)
    for alpha, beta in rng.uniform(0.05, np.pi - 0.05, (5, 2)):
        h0, h1, h2 = cohomology_dims(FlatBase(alpha, beta), SELFTEST_GRID)
        assert h1 == h0 + h2


# -- flow ----------------------------------------------------------------------

def _flat_fixed_point(rng):
    traj = flow.run(flow.FlowConfig(initial=Connection.flat(INTERIOR, SELFTEST_GRID), t_max=1.0))
    assert traj.converged and traj.energy[-1] == 0.0 and len(traj) == 1


def _constant_mode_oracle(rng):
    s0 = 0.1
    config = flow.FlowConfig(initial=product_ray(s0, SELFTEST_GRID), t_max=1.0, grad_tol=1e-14,
                             rtol=1e-9, sample_times=(1.0,))
    traj = flow.run(config)
    # E = 2 s^4 along s(t) = (s0^-2 + 8t)^-1/2
    s1 = (s0 ** -2 + 8.0) ** -0.5
    assert_allclose(traj.times[-1], 1.0)
    assert_allclose(traj.energy[-1], 2.0 * s1 ** 4, rtol=1e-5)
    assert traj.energy_identity_ok()


# -- decay ---------------------------------------------------------------------

def _decay_regimes(rng):
    t = np.linspace(0.0, 10.0, 200)
    assert decay.fit_decay_series(t, np.exp(-2.0 * t)).regime == "exponential"
    t = np.geomspace(1.0, 1e4, 200)
    fit = decay.fit_decay_series(t, t ** -0.5)
    assert fit.regime == "power"
    assert_allclose(fit.theta, 0.75, atol=1e-8)


# -- moduli --------------------------------------------------------------------

def _holonomy_of_flat(rng):
    alpha, beta = rng.uniform(0.1, np.pi - 0.1, 2)
    point = moduli.to_pillowcase(moduli.holonomy(Connection.flat(FlatBase(alpha, beta), SELFTEST_GRID)))
    assert moduli.pillowcase_dist(point, moduli.reduce(alpha, beta)) < 1e-12


def _pillowcase_symmetry(rng):
    alpha, beta = rng.uniform(-10.0, 10.0, 2)
    p = moduli.reduce(alpha, beta)
    assert moduli.pillowcase_dist(p, moduli.reduce(-alpha, -beta)) < 1e-12
    assert moduli.pillowcase_dist(p, moduli.reduce(alpha + 2.0 * np.pi, beta - 2.0 * np.pi)) < 1e-12
    assert moduli.reduce(p.alpha, p.beta) == p


def _strata(rng):
    assert moduli.classify(moduli.reduce(np.pi, 0.0)) is moduli.Stratum.CENTRAL
    assert moduli.classify(moduli.reduce(np.pi / 2, 0.0)) is moduli.Stratum.ABELIAN


# -- kuranishi -----------------------------------------------------------------

def _harmonic_dimensions(rng):
    assert kuranishi.harmonic_basis(THETA, SELFTEST_GRID).dimension == 6
    assert kuranishi.harmonic_basis(INTERIOR, SELFTEST_GRID).dimension == 2


def _balancing_pairing(rng):
    space = kuranishi.LowModeSpace(THETA, SELFTEST_GRID)
    xi, eta = 0.05 * rng.standard_normal((2, 3))
    coords = space.coordinates(constant_form(xi, eta, SELFTEST_GRID))
    chi = kuranishi.balancing(coords, space)
    commutator = float(lie.norm(lie.bracket(xi, eta)))
    assert_allclose(np.dot(chi, coords), 2.0 * commutator ** 2, rtol=1e-8, atol=1e-14)


# -- lojasiewicz ---------------------------------------------------------------

def _quadratic_closed_form(rng):
    f = lojasiewicz.get_test_function("quadratic")
    x0 = rng.uniform(-0.5, 0.5, 2)
    run = lojasiewicz.flow_ode(f, x0)
    assert_allclose(run.path(np.array([0.5]))[0], x0 * np.exp(-1.0), atol=1e-8)


def _toolkit_identity(rng):
    run = lojasiewicz.flow_ode(lojasiewicz.get_test_function("quartic"), [0.5])
    assert lojasiewicz.energy_identity_check(run).passed


def _exponent_relations(rng):
    constants = lojasiewicz.LojConstants(theta=0.75, C=4.0)
    assert_allclose((constants.alpha, constants.lam, constants.beta_dist), (4.0, 0.5, 2.0))


SUITES: Dict[str, List[Check]] = {
    "lie": [_bracket_identities, _ad_invariance, _exp_log_roundtrip],
    "lattice": [_spectral_derivative_exact, _parseval, _slice_projection],
    "gaugefield": [_covariant_adjoint, _constant_gauge_invariance, _hessian_symmetry, _cohomology_counts],
    "flow": [_flat_fixed_point, _constant_mode_oracle],
    "decay": [_decay_regimes],
    "moduli": [_holonomy_of_flat, _pillowcase_symmetry, _strata],
    "kuranishi": [_harmonic_dimensions, _balancing_pairing],
    "lojasiewicz": [_quadratic_closed_form, _toolkit_identity, _exponent_relations],
}


def _run_suite(name: str, checks: List[Check], seed: int) -> Tuple[int, List[str]]:
    failures = []
    for check in checks:
        rng = np.random.default_rng(seed)
        try:
            check(rng)
        except Exception as e:
            failures.append(f"{check.__name__.lstrip('_')}: {type(e).__name__}: {str(e).strip()}")
            logger.debug(traceback.format_exc())
    return len(checks) - len(failures), failures


def run_selftest(config: ExperimentConfig) -> Dict:
    """
    Run every suite and print pass counts.

    Raises:
        SelftestFailure: at least one check failed
    """
    print("\n" + "=" * 80)
    print("🧪 SELFTEST")
    print("=" * 80)

    results = {}
    total_failed = 0
    for name, checks in SUITES.items():
        passed, failures = _run_suite(name, checks, config.seed)
        results[name] = {"passed": passed, "total": len(checks), "failures": failures}
        total_failed += len(failures)
        mark = "✓" if not failures else "✗"
        print(f"  {mark} {name}: {passed}/{len(checks)} passed")
        for failure in failures:
            print(f"      - {failure}")
            logger.error(f"Selftest {name} failed: {failure}")

    total = sum(len(checks) for checks in SUITES.values())
    print(f"\n{'✅' if not total_failed else '❌'} {total - total_failed}/{total} checks passed")
    print("=" * 80)

    if total_failed:
        raise SelftestFailure(f"{total_failed} of {total} selftest checks failed", failed=total_failed)
    return results


if __name__ == "__main__":
    from main import dispatch
    sys.exit(dispatch(["selftest"] + sys.argv[1:]))

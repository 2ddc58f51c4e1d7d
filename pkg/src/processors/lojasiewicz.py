"""
Finite-dimensional analytic gradient systems.

A small toolkit for the abstract side of the convergence theory: gradient
flows and their arc-length reparameterization, the energy identity, the
distance inequality E(x) >= C dist(x, Crit E)^alpha, and the two-branch
convergence envelope Psi(t). Everything is checked against a fixed corpus of
closed-form test functions covering theta in {1/2, 3/4}, Crit = Zero and
Crit != Zero, and a Morse-Bott critical manifold.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike
from scipy import optimize, stats
from scipy.integrate import simpson, solve_ivp

from config.settings import DecayConfig, FlowConfigDefaults, LojasiewiczConfig
from src.exceptions import DidNotConverge, ParameterRangeError
from src.processors.decay import DecayFit, fit_decay_series
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

Vector = np.ndarray


@dataclass(frozen=True)
class TestFunction:
    """
    Analytic energy with its gradient and whatever Lojasiewicz data is known.

    c is the gradient-inequality constant in ||grad E|| >= c |E|^theta; sigma
    the radius of the ball around `center` on which the data holds.
    """
    __test__ = False  # not a pytest class

    name: str
    dimension: int
    energy: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    theta: Optional[float] = None
    c: Optional[float] = None
    sigma: Optional[float] = None
    center: Optional[Vector] = None
    critical_distance: Optional[Callable[[Vector], float]] = None
    zero_distance: Optional[Callable[[Vector], float]] = None
    description: str = ""

    def __call__(self, x: ArrayLike) -> float:
        return float(self.energy(np.asarray(x, dtype=float)))

    def grad(self, x: ArrayLike) -> Vector:
        return np.asarray(self.gradient(np.asarray(x, dtype=float)), dtype=float).reshape(self.dimension)

    def gradient_error(self, x: ArrayLike, h: float = 1e-5) -> float:
        """Max deviation of the gradient from central differences of the energy"""
        x = np.asarray(x, dtype=float)
        fd = np.empty(self.dimension)
        for i in range(self.dimension):
            e = np.zeros(self.dimension)
            e[i] = h
            fd[i] = (self(x + e) - self(x - e)) / (2.0 * h)
        return float(np.max(np.abs(fd - self.grad(x))))

    def constants(self) -> "LojConstants":
        if self.theta is None or self.c is None:
            raise ParameterRangeError(f"Test function {self.name!r} has no known Lojasiewicz data")
        return LojConstants(theta=self.theta, C=self.c, sigma=self.sigma or 1.0)


def _quadratic() -> TestFunction:
    return TestFunction(
        name="quadratic", dimension=2,
        energy=lambda x: float(x @ x),
        gradient=lambda x: 2.0 * x,
        theta=0.5, c=2.0, sigma=1.0, center=np.zeros(2),
        critical_distance=lambda x: float(np.linalg.norm(x)),
        zero_distance=lambda x: float(np.linalg.norm(x)),
        description="E = |x|^2, isolated nondegenerate minimum",
    )


def _quartic() -> TestFunction:
    return TestFunction(
        name="quartic", dimension=1,
        energy=lambda x: float(x[0] ** 4),
        gradient=lambda x: np.array([4.0 * x[0] ** 3]),
        theta=0.75, c=4.0, sigma=1.0, center=np.zeros(1),
        critical_distance=lambda x: float(abs(x[0])),
        zero_distance=lambda x: float(abs(x[0])),
        description="E = x^4, degenerate minimum",
    )


def _morse_bott() -> TestFunction:
    return TestFunction(
        name="morse_bott", dimension=2,
        energy=lambda x: float(x[0] ** 2),
        gradient=lambda x: np.array([2.0 * x[0], 0.0]),
        theta=0.5, c=2.0, sigma=1.0, center=np.zeros(2),
        critical_distance=lambda x: float(abs(x[0])),
        zero_distance=lambda x: float(abs(x[0])),
        description="E(x, y) = x^2, critical manifold the y-axis",
    )


def _double_well() -> TestFunction:
    return TestFunction(
        name="double_well", dimension=1,
        energy=lambda x: float(x[0] ** 2 * (x[0] - 1.0) ** 2),
        gradient=lambda x: np.array([2.0 * x[0] * (x[0] - 1.0) * (2.0 * x[0] - 1.0)]),
        theta=0.5, sigma=0.25, center=np.zeros(1),
        critical_distance=lambda x: float(min(abs(x[0]), abs(x[0] - 0.5), abs(x[0] - 1.0))),
        zero_distance=lambda x: float(min(abs(x[0]), abs(x[0] - 1.0))),
        description="E = x^2 (x-1)^2, Crit = {0, 1/2, 1} strictly contains Zero = {0, 1}",
    )


def _double_well_squared() -> TestFunction:
    # the ball sigma < 1/4 around 0 keeps the critical point 1/2 out
    return TestFunction(
        name="double_well_squared", dimension=1,
        energy=lambda x: float((x[0] ** 2 * (x[0] - 1.0) ** 2) ** 2),
        gradient=lambda x: np.array([4.0 * x[0] ** 3 * (x[0] - 1.0) ** 3 * (2.0 * x[0] - 1.0)]),
        theta=0.75, sigma=0.24, center=np.zeros(1),
        critical_distance=lambda x: float(min(abs(x[0]), abs(x[0] - 0.5), abs(x[0] - 1.0))),
        zero_distance=lambda x: float(min(abs(x[0]), abs(x[0] - 1.0))),
        description="F = (x^2 (x-1)^2)^2, distance to the zero set near 0",
    )


CORPUS: Dict[str, Callable[[], TestFunction]] = {
    "quadratic": _quadratic,
    "quartic": _quartic,
    "morse_bott": _morse_bott,
    "double_well": _double_well,
    "double_well_squared": _double_well_squared,
}


def get_test_function(name: str) -> TestFunction:
    if name not in CORPUS:
        raise ParameterRangeError(f"Unknown test function {name!r}; available: {sorted(CORPUS)}")
    return CORPUS[name]()


@dataclass(frozen=True)
class LojConstants:
    """Lojasiewicz data (theta, C, sigma, delta) and the derived exponents"""
    theta: float
    C: float
    sigma: float = 1.0
    delta: Optional[float] = None

    def __post_init__(self):
        if not 0.5 <= self.theta < 1.0:
            raise ParameterRangeError(f"theta must lie in [1/2, 1), got {self.theta}")
        if not self.C > 0:
            raise ParameterRangeError(f"C must be positive, got {self.C}")
        if not 0 < self.sigma <= 1.0:
            raise ParameterRangeError(f"sigma must lie in (0, 1], got {self.sigma}")
        if self.delta is None:
            object.__setattr__(self, "delta", self.sigma / 4.0)
        elif not 0 < self.delta <= self.sigma / 4.0:
            raise ParameterRangeError(f"delta must lie in (0, sigma/4], got {self.delta}")

    @property
    def alpha(self) -> float:
        return 1.0 / (1.0 - self.theta)

    @property
    def lam(self) -> float:
        return 2.0 / self.alpha

    @property
    def beta_dist(self) -> float:
        return self.alpha / 2.0

    def flowline_length_bound(self, energy0: float) -> float:
        """Arc-length bound E^(1-theta) / ((1-theta) C) for a flow line starting at energy E"""
        return flowline_length_bound(energy0, self.theta, self.C)

    def to_dict(self) -> Dict:
        return {"theta": self.theta, "C": self.C, "sigma": self.sigma, "delta": self.delta,
                "alpha": self.alpha, "lambda": self.lam, "beta_dist": self.beta_dist}


def flowline_length_bound(energy0: float, theta: float, c: float) -> float:
    return float(max(energy0, 0.0) ** (1.0 - theta) / ((1.0 - theta) * c))


# -- flows ---------------------------------------------------------------------

@dataclass
class GradientTrajectory:
    """
    A gradient-flow run: adaptive output points plus a dense path t -> x(t).

    `path` maps an array of times (m,) to points (m, n).
    """
    function: TestFunction
    times: np.ndarray
    points: np.ndarray
    path: Callable[[np.ndarray], np.ndarray]
    converged: bool
    message: str = ""

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def terminal(self) -> Vector:
        return self.points[-1]

    def energies(self) -> np.ndarray:
        return np.array([self.function(x) for x in self.points])

    def grad_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(self.function.grad(x)) for x in self.points])

    def to_frame(self) -> pd.DataFrame:
        table = pd.DataFrame({"t": self.times, "energy": self.energies(), "grad_norm": self.grad_norms()})
        for i in range(self.function.dimension):
            table[f"x{i}"] = self.points[:, i]
        return table


def _stationary(f: TestFunction, x0: Vector) -> GradientTrajectory:
    def path(t):
        return np.broadcast_to(x0, (np.size(t), f.dimension)).copy()
    return GradientTrajectory(f, np.array([0.0]), x0[None, :].copy(), path, True, "initial point is critical")


def flow_ode(f: TestFunction, x0: ArrayLike, t_max: float = 1e8, tol: float = 1e-10,
             rtol: float = LojasiewiczConfig.RTOL, atol: float = LojasiewiczConfig.ATOL) -> GradientTrajectory:
    """
    Integrate dx/dt = -grad E(x) until ||grad E|| <= tol or t_max.

    Raises:
        DidNotConverge: t_max reached first (the partial run rides on the exception)
    """
    x0 = np.asarray(x0, dtype=float).reshape(f.dimension)
    if np.linalg.norm(f.grad(x0)) <= tol:
        return _stationary(f, x0)

    def rhs(t, x):
        return -f.grad(x)

    def critical(t, x):
        return np.linalg.norm(f.grad(x)) - tol
    critical.terminal = True
    critical.direction = -1

    sol = solve_ivp(rhs, (0.0, t_max), x0, method=LojasiewiczConfig.METHOD, rtol=rtol, atol=atol,
                    events=critical, dense_output=True)
    if sol.status == -1:
        raise DidNotConverge(f"Integration of {f.name} failed: {sol.message}")

    converged = sol.status == 1

    def path(t):
        return np.atleast_2d(sol.sol(np.asarray(t, dtype=float))).T.reshape(-1, f.dimension)

    run = GradientTrajectory(f, sol.t, sol.y.T, path, converged, sol.message)
    logger.debug(f"Gradient flow of {f.name} from {x0}: t_final={run.t_final:.4g}, "
                 f"{len(sol.t)} points, converged={converged}")
    if not converged:
        raise DidNotConverge(f"Flow of {f.name} reached t_max={t_max:g} with ||grad E|| = "
                             f"{np.linalg.norm(f.grad(run.terminal)):.3e} > {tol:.1e}", trajectory=run)
    return run


@dataclass
class ArcLengthPath:
    """Flow line reparameterized by arc length s"""
    function: TestFunction
    s: np.ndarray
    points: np.ndarray
    speeds: np.ndarray  # finite-difference |dy/ds| on the uniform s grid
    length: float
    converged: bool


def arc_length_flow(f: TestFunction, x0: ArrayLike, tol: float = LojasiewiczConfig.ARC_LENGTH_TOL,
                    t_max: float = LojasiewiczConfig.ARC_LENGTH_T_MAX) -> ArcLengthPath:
    """
    Unit-speed reparameterization dy/ds = -E'/||E'|| of the flow from x0.

    The flow is integrated in time together with s' = ||grad E||, which keeps the
    system smooth up to the critical set; the path is then resampled on a uniform
    s grid and its speed measured by finite differences of the samples.

    Raises:
        ParameterRangeError: E(x0) <= 0
        DidNotConverge: t_max reached before ||grad E|| <= tol
    """
    x0 = np.asarray(x0, dtype=float).reshape(f.dimension)
    if not f(x0) > 0:
        raise ParameterRangeError(f"Arc-length flow needs E(x0) > 0, got {f(x0)}")
    n = f.dimension

    def rhs(t, state):
        g = f.grad(state[:n])
        return np.concatenate([-g, [np.linalg.norm(g)]])

    def critical(t, state):
        return np.linalg.norm(f.grad(state[:n])) - tol
    critical.terminal = True
    critical.direction = -1

    sol = solve_ivp(rhs, (0.0, t_max), np.concatenate([x0, [0.0]]), method=LojasiewiczConfig.METHOD,
                    rtol=LojasiewiczConfig.RTOL, atol=LojasiewiczConfig.ATOL, events=critical,
                    dense_output=True)
    if sol.status != 1:
        raise DidNotConverge(f"Arc-length flow of {f.name} did not reach ||grad E|| <= {tol:.1e}: {sol.message}")

    # invert s(t) on the solver steps refined 8x, then sample uniformly in s
    fine = np.unique(np.concatenate([np.linspace(a, b, 9) for a, b in zip(sol.t[:-1], sol.t[1:])]))
    s_fine = np.maximum.accumulate(sol.sol(fine)[n])
    s_grid = np.linspace(0.0, s_fine[-1], LojasiewiczConfig.ARC_LENGTH_POINTS)
    states = sol.sol(np.interp(s_grid, s_fine, fine))
    points = states[:n].T
    s = states[n]
    speeds = np.linalg.norm(np.gradient(points, s, axis=0), axis=1)
    length = float(s[-1])
    logger.debug(f"Arc length of the {f.name} flow line from {x0}: {length:.12g}")
    return ArcLengthPath(f, s, points, speeds, length, True)


# -- identities and inequalities ---------------------------------------------

@dataclass
class EnergyIdentityReport:
    dissipation: float
    energy_drop: float
    residual: float
    relative: float
    passed: bool

    def to_dict(self) -> Dict:
        return {"dissipation": self.dissipation, "energy_drop": self.energy_drop,
                "residual": self.residual, "relative": self.relative, "passed": bool(self.passed)}


def energy_identity_check(run: GradientTrajectory, points: int = LojasiewiczConfig.IDENTITY_POINTS,
                          rtol: float = FlowConfigDefaults.ENERGY_IDENTITY_RTOL) -> EnergyIdentityReport:
    """
    Quadrature residual of int_0^T ||E'(x)||^2 dt = E(x(0)) - E(x(T)).

    The integrand is sampled from the dense path on 0 plus a geometric grid,
    which resolves both the fast start and the long tail, and integrated with
    Simpson's rule.
    """
    f = run.function
    T = run.t_final
    x_start = run.path(np.array([0.0]))[0]
    energy0 = f(x_start)
    if T <= 0:
        return EnergyIdentityReport(0.0, 0.0, 0.0, 0.0, True)

    grid = np.concatenate([[0.0], np.geomspace(T * 1e-9, T, points - 1)])
    xs = run.path(grid)
    integrand = np.array([np.sum(f.grad(x) ** 2) for x in xs])
    dissipation = float(simpson(integrand, x=grid))
    drop = energy0 - f(xs[-1])
    residual = abs(dissipation - drop)
    relative = residual / energy0 if energy0 > 0 else residual
    report = EnergyIdentityReport(dissipation, drop, residual, relative, relative <= rtol)
    if not report.passed:
        logger.warning(f"Energy identity off for {f.name}: relative residual {relative:.3e} > {rtol:.1e}")
    return report


def locate_critical_point(f: TestFunction, x0: ArrayLike, tol: float = 1e-10) -> Vector:
    """Flow endpoint from x0, polished by a root solve of grad E = 0"""
    run = flow_ode(f, x0, tol=max(tol, 1e-12))
    polished = optimize.root(f.grad, run.terminal, tol=1e-14)
    if polished.success and np.linalg.norm(polished.x - run.terminal) < 1e-3:
        return polished.x
    return run.terminal


def _distance_to_target(f: TestFunction, x: Vector, target: str) -> float:
    known = f.zero_distance if target == "zero" else f.critical_distance
    if known is not None:
        return known(x)
    return float(np.linalg.norm(x - locate_critical_point(f, x)))


@dataclass
class DistanceFit:
    C: float
    alpha: float
    violations: int
    n_samples: int
    r2: float
    target: str = "critical"
    samples: Optional[pd.DataFrame] = field(default=None, repr=False)

    def to_dict(self) -> Dict:
        return {"C": self.C, "alpha": self.alpha, "violations": self.violations,
                "n_samples": self.n_samples, "r2": self.r2, "target": self.target}


def verify_distance_inequality(f: TestFunction, sample_radius: float, n_samples: int,
                               rng: Optional[np.random.Generator] = None, target: str = "critical",
                               center: Optional[ArrayLike] = None,
                               margin: float = LojasiewiczConfig.VIOLATION_MARGIN) -> DistanceFit:
    """
    Fit E(x) ~ C dist(x, S)^alpha on samples from a ball around the center.

    Args:
        f: test function
        sample_radius: ball radius delta
        n_samples: number of samples
        target: 'critical' (S = Crit E) or 'zero' (S = Zero E)

    Returns:
        DistanceFit with violations counting samples where E < (1 - margin) C dist^alpha
    """
    if target not in ("critical", "zero"):
        raise ParameterRangeError(f"target must be 'critical' or 'zero', got {target!r}")
    if not sample_radius > 0 or n_samples < 3:
        raise ParameterRangeError("Need a positive sample radius and at least 3 samples")
    if f.sigma is not None and sample_radius > f.sigma:
        logger.warning(f"Sample radius {sample_radius} exceeds the known radius sigma={f.sigma} for {f.name}")

    rng = rng or np.random.default_rng(0)
    if center is None:
        center = f.center if f.center is not None else np.zeros(f.dimension)
    center = np.asarray(center, dtype=float)

    directions = rng.standard_normal((n_samples, f.dimension))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = sample_radius * rng.random(n_samples) ** (1.0 / f.dimension)
    xs = center + directions * radii[:, None]

    energies = np.array([f(x) for x in xs])
    distances = np.array([_distance_to_target(f, x, target) for x in xs])
    keep = (distances > 1e-14) & (energies > 0)
    if keep.sum() < 3:
        raise ParameterRangeError(f"Only {int(keep.sum())} usable samples for {f.name}")

    fit = stats.linregress(np.log(distances[keep]), np.log(energies[keep]))
    alpha, C = float(fit.slope), float(np.exp(fit.intercept))
    violations = int(np.sum(energies[keep] < (1.0 - margin) * C * distances[keep] ** alpha))
    samples = pd.DataFrame({"distance": distances, "energy": energies})
    result = DistanceFit(C, alpha, violations, int(keep.sum()), float(fit.rvalue ** 2), target, samples)
    logger.info(f"Distance inequality for {f.name} ({target}): alpha={alpha:.6f}, C={C:.6g}, "
                f"violations={violations}/{result.n_samples}")
    return result


def psi_envelope(theta: float, c: float, gamma_minus_a: float, t: ArrayLike) -> Union[float, np.ndarray]:
    """
    Convergence envelope Psi(t) bounding ||x(t) - x_inf||.

        theta = 1/2:  (2/c) sqrt(gamma - a) exp(-c^2 t / 2)
        theta > 1/2:  (1/(c(1-theta))) (c^2 (2 theta - 1) t + (gamma - a)^(1 - 2 theta))^(-(1-theta)/(2 theta - 1))
    """
    if not 0.5 <= theta < 1.0:
        raise ParameterRangeError(f"theta must lie in [1/2, 1), got {theta}")
    if not c > 0:
        raise ParameterRangeError(f"c must be positive, got {c}")
    if not gamma_minus_a > 0:
        raise ParameterRangeError(f"gamma - a must be positive, got {gamma_minus_a}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterRangeError("Psi is defined for t >= 0")

    if theta == 0.5:
        out = (2.0 / c) * np.sqrt(gamma_minus_a) * np.exp(-0.5 * c ** 2 * t)
    else:
        inner = c ** 2 * (2.0 * theta - 1.0) * t + gamma_minus_a ** (1.0 - 2.0 * theta)
        out = inner ** (-(1.0 - theta) / (2.0 * theta - 1.0)) / (c * (1.0 - theta))
    return out if out.ndim else float(out)


def fit_trajectory_decay(run: GradientTrajectory, n_samples: int = 200,
                         limit: Optional[Vector] = None) -> DecayFit:
    """
    Decay regime of dist(x(t), limit) on a geometric time grid.

    The limit defaults to the known critical set of the test function, else
    the terminal point of the run.
    """
    f = run.function
    T = run.t_final
    times = np.geomspace(T * 1e-4, T, max(n_samples, DecayConfig.MIN_SAMPLES))
    xs = run.path(times)
    if limit is None and f.critical_distance is not None:
        distances = np.array([f.critical_distance(x) for x in xs])
    else:
        target = run.terminal if limit is None else np.asarray(limit, dtype=float)
        distances = np.linalg.norm(xs - target, axis=1)
    return fit_decay_series(times, distances, quantity="distance")


def corpus_report(x0: Optional[Dict[str, ArrayLike]] = None,
                  names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Flow, arc length, energy identity and decay regime for the corpus functions (all by default)"""
    starts = {"quadratic": [0.6, -0.3], "quartic": [0.5], "morse_bott": [0.4, 0.7],
              "double_well": [0.2], "double_well_squared": [0.2]}
    starts.update(x0 or {})
    if names:
        for name in names:
            if name not in CORPUS:
                raise ParameterRangeError(f"Unknown test function {name!r}; available: {sorted(CORPUS)}")
        starts = {name: starts[name] for name in names}

    rows: List[Dict] = []
    for name, start in starts.items():
        f = get_test_function(name)
        run = flow_ode(f, start)
        arc = arc_length_flow(f, start)
        identity = energy_identity_check(run)
        decay = fit_trajectory_decay(run)
        bound = (flowline_length_bound(f(start), f.theta, f.c)
                 if f.theta is not None and f.c is not None else float("nan"))
        rows.append({
            "function": name,
            "energy0": f(start),
            "t_final": run.t_final,
            "arc_length": arc.length,
            "length_bound": bound,
            "identity_relative": identity.relative,
            "identity_passed": identity.passed,
            "regime": decay.regime,
            "theta_fit": decay.theta,
            "alpha_fit": decay.alpha,
            "theta_known": f.theta,
        })
        logger.info(f"{name}: regime={decay.regime}, theta_fit={decay.theta:.4f}, "
                    f"S0={arc.length:.6g} (bound {bound:.6g})")
    return pd.DataFrame(rows)

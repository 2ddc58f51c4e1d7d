"""
The pillowcase M(T^2, SU(2)) = R^2 / (2 pi Z^2 x| Z/2).

Flat connections are read through their holonomies around the two generator
loops based at the origin. Points are stored in the fundamental domain
[0, pi] x [0, 2pi]; all comparisons go through orbit minimization.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from config.settings import AppConfig, ModuliConfig
from src.core import lie
from src.core.gaugefield import (
    Connection, FlatBase, GaugeTransform, coulomb_gauge_fix, curvature,
)
from src.core.lattice import SpectralWorkspace, get_workspace, l2_norm, sobolev_norm
from src.exceptions import DegenerateRay, NoConvergence, NonCommuting
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

TWO_PI = 2.0 * np.pi
LAMBDA_SCAN_COLUMNS = ["t", "curvature_norm", "distance", "alpha", "beta"]


@dataclass(frozen=True)
class HolonomyPair:
    """Holonomies around the x loop (mu) and the y loop (gamma), as unit quaternions"""
    h_mu: np.ndarray
    h_gamma: np.ndarray
    spread: float = 0.0  # largest trace difference between parallel loops

    @property
    def commutator_norm(self) -> float:
        return float(lie.distance_to_identity(lie.commutator(self.h_mu, self.h_gamma)))

    def eigenphases(self) -> np.ndarray:
        return np.array([lie.eigenphase(self.h_mu), lie.eigenphase(self.h_gamma)])


@dataclass(frozen=True)
class PillowcasePoint:
    alpha: float
    beta: float

    def reduce(self) -> "PillowcasePoint":
        return reduce(self.alpha, self.beta)

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta])


class Stratum(Enum):
    CENTRAL = ("central", 6)
    ABELIAN = ("abelian", 2)
    IRREDUCIBLE = ("irreducible", 0)

    @property
    def label(self) -> str:
        return self.value[0]

    @property
    def zariski_dimension(self) -> int:
        return self.value[1]


def reduce(alpha: float, beta: float) -> PillowcasePoint:
    """Canonical representative in [0, pi] x [0, 2pi)"""
    x = float(np.mod(alpha, TWO_PI))
    y = float(np.mod(beta, TWO_PI))
    if x > np.pi:
        x, y = TWO_PI - x, float(np.mod(-y, TWO_PI))
    # on the edges x = 0, pi the Z/2 action fixes x and reflects y
    if (x <= ModuliConfig.EDGE_TOL or abs(x - np.pi) <= ModuliConfig.EDGE_TOL) and y > np.pi:
        y = TWO_PI - y
    return PillowcasePoint(x, y)


def _path_ordered(c_line: np.ndarray, h: float, prefixes: bool = False) -> np.ndarray:
    """
    Right-ordered product E_0 E_1 ... E_{N-1} of trapezoidal cell exponentials along closed lines.

    Axis 0 of c_line runs along the path; trailing axes (before the algebra axis) are
    independent parallel lines. With prefixes=True the partial products E_0 ... E_{j-1}
    for j = 0..N are returned stacked along axis 0.
    """
    cells = lie.exponential(0.5 * h * (c_line + np.roll(c_line, -1, axis=0)))
    q = np.broadcast_to(lie.IDENTITY, cells.shape[1:]).copy()
    partial = [q]
    for e in cells:
        q = lie.multiply(q, e)
        partial.append(q)
    return np.stack(partial) if prefixes else q


def _based_mean(loops: np.ndarray, paths: np.ndarray):
    """Transport each parallel loop to the origin along its path and average"""
    based = lie.multiply(lie.multiply(paths, loops), lie.inverse(paths))
    spread = float(np.ptp(loops[:, 0]))
    return lie.normalize(based.mean(axis=0)), spread


def holonomy(A: Connection, workspace: Optional[SpectralWorkspace] = None) -> HolonomyPair:
    """
    Holonomies of A around the generator loops, averaged over every row and column.

    The x loop at height y_j is carried back to the origin along the column x = 0 and the
    y loop at x_i along the row y = 0; the N based loops are then averaged. For a flat
    connection all of them agree up to O(h^2), so spread measures how far A is from flat.
    Gauge covariant (H -> s(0)^-1 H s(0)) up to O(h^2); exact for constant connections.
    """
    c = A.total()
    h = 1.0 / A.N
    rows = _path_ordered(c[0], h)
    cols = _path_ordered(np.swapaxes(c[1], 0, 1), h)
    up = _path_ordered(c[1][0], h, prefixes=True)[:-1]
    along = _path_ordered(c[0][:, 0], h, prefixes=True)[:-1]
    h_mu, spread_mu = _based_mean(rows, up)
    h_gamma, spread_gamma = _based_mean(cols, along)
    return HolonomyPair(h_mu, h_gamma, spread=max(spread_mu, spread_gamma))


def to_pillowcase(rho: HolonomyPair, tol: Optional[float] = ModuliConfig.HOLONOMY_TOL) -> PillowcasePoint:
    """
    Simultaneous eigenphases of a commuting holonomy pair, reduced to the fundamental domain.

    Args:
        rho: holonomy pair
        tol: commutator tolerance; None skips the check (used for readings along a flow)

    Raises:
        NonCommuting: commutator norm above tol
    """
    comm = rho.commutator_norm
    if tol is not None and comm > tol:
        raise NonCommuting(f"Holonomy commutator norm {comm:.3e} exceeds {tol:.1e}", commutator_norm=comm)

    w1, v1 = float(rho.h_mu[0]), np.asarray(rho.h_mu[1:])
    w2, v2 = float(rho.h_gamma[0]), np.asarray(rho.h_gamma[1:])
    n1 = float(np.linalg.norm(v1))
    if n1 > 1e-12:
        axis = v1 / n1
        alpha = np.arctan2(n1, w1)
        beta = np.arctan2(float(np.dot(v2, axis)), w2)
    else:
        # h_mu = +-1: take the axis from h_gamma
        alpha = np.arctan2(0.0, w1)
        beta = np.arctan2(float(np.linalg.norm(v2)), w2)
    return reduce(alpha, beta)


def classify(p: PillowcasePoint) -> Stratum:
    """Central at the four corners, Abelian elsewhere; Irreducible never occurs on the torus"""
    q = p.reduce()
    tol = ModuliConfig.CENTRAL_TOL
    alpha_central = min(abs(q.alpha), abs(q.alpha - np.pi)) <= tol
    beta_central = min(abs(q.beta), abs(q.beta - np.pi), abs(q.beta - TWO_PI)) <= tol
    return Stratum.CENTRAL if alpha_central and beta_central else Stratum.ABELIAN


def pillowcase_dist(p: PillowcasePoint, q: PillowcasePoint) -> float:
    """Quotient distance: minimum over the images +-q + 2pi(m, n) near p"""
    pr, qr = p.reduce().as_array(), q.reduce().as_array()
    best = np.inf
    for sign in (1.0, -1.0):
        for m in (-1, 0, 1):
            for n in (-2, -1, 0, 1, 2):
                best = min(best, float(np.hypot(sign * qr[0] + TWO_PI * m - pr[0],
                                                sign * qr[1] + TWO_PI * n - pr[1])))
    return best


@dataclass
class FlatProjection:
    """Nearest diagonal flat connection found by seeded local minimization"""
    point: PillowcasePoint
    distance: float
    alpha: float  # unreduced representative
    beta: float
    connection: Connection  # input, Coulomb-gauge fixed relative to Gamma(alpha, beta)
    gauge: GaugeTransform
    iterations: int

    def __iter__(self):
        return iter((self.point, self.distance))


def _k_means(A: Connection) -> np.ndarray:
    return A.a[..., 2].mean(axis=(1, 2))


def nearest_flat(A: Connection, tol: float = ModuliConfig.NEAREST_FLAT_TOL,
                 max_iter: int = ModuliConfig.NEAREST_FLAT_MAX_ITER,
                 workspace: Optional[SpectralWorkspace] = None) -> FlatProjection:
    """
    Closest flat diagonal connection to A in L2, up to gauge.

    The seed is the diagonal base nearest to A itself; the holonomy eigenphases take
    over when they are far from the seed or when gauge fixing at the seed fails.
    Each pass gauge-fixes relative to the candidate and shifts (alpha, beta) by the
    K-constant part of the fixed perturbation, which is the L2 minimizer over the
    diagonal family.

    Raises:
        NonCommuting, NoConvergence: A is not close enough to the flat locus
    """
    ws = workspace or get_workspace(A.N)
    seed = A.base.shifted(*_k_means(A))

    rho = holonomy(A, ws)
    hol_point = to_pillowcase(rho, ModuliConfig.SEED_HOLONOMY_TOL)
    candidate = seed
    if pillowcase_dist(hol_point, reduce(seed.alpha, seed.beta)) > ModuliConfig.SEED_RADIUS:
        candidate = FlatBase(hol_point.alpha, hol_point.beta)
        logger.debug(f"Nearest-flat seed from holonomy: ({candidate.alpha:.6f}, {candidate.beta:.6f})")

    try:
        u, fixed = coulomb_gauge_fix(A, candidate, workspace=ws)
    except NoConvergence:
        if candidate == seed:
            candidate = FlatBase(hol_point.alpha, hol_point.beta)
            u, fixed = coulomb_gauge_fix(A, candidate, workspace=ws)
        else:
            raise

    for iteration in range(1, max_iter + 1):
        shift = _k_means(fixed)
        if np.max(np.abs(shift)) <= tol:
            break
        candidate = candidate.shifted(*shift)
        u_step, fixed = coulomb_gauge_fix(fixed, candidate, workspace=ws)
        u = lie.multiply(u, u_step)
    else:
        raise NoConvergence(f"Nearest-flat refinement did not settle in {max_iter} passes",
                            residual=float(np.max(np.abs(shift))), iterations=max_iter)

    distance = l2_norm(fixed.a)
    point = reduce(candidate.alpha, candidate.beta)
    logger.debug(f"Nearest flat point ({point.alpha:.6f}, {point.beta:.6f}), distance {distance:.3e}")
    return FlatProjection(point, distance, candidate.alpha, candidate.beta, fixed, u, iteration)


@dataclass
class LambdaScanResult:
    lam: float
    C: float
    r2: float
    table: pd.DataFrame
    p: float

    def summary(self) -> Dict:
        return {"lambda": self.lam, "C": self.C, "r2": self.r2, "p": self.p, "points": int(len(self.table))}


def _scan_point(ray: Callable[[float], Connection], t: float, p: float) -> Dict:
    A = ray(t)
    ws = get_workspace(A.N)
    projection = nearest_flat(A, workspace=ws)
    return {
        "t": float(t),
        "curvature_norm": sobolev_norm(curvature(A, ws), p, 0, ws),
        "distance": sobolev_norm(projection.connection.a, p, 1, ws),
        "alpha": projection.point.alpha,
        "beta": projection.point.beta,
    }


def lambda_scan(ray: Callable[[float], Connection], t_grid: Sequence[float], p: float = 2.0,
                max_workers: Optional[int] = None) -> LambdaScanResult:
    """
    Fit dist_{W^{1,p}}(A(t), flat) ~ C ||F_{A(t)}||_{L^p}^lambda along a ray.

    Points are computed in parallel (one thread-local workspace per worker) and
    collected in t order.

    Raises:
        DegenerateRay: every distance is numerically zero
    """
    max_workers = max_workers or AppConfig.THREADS
    t_grid = [float(t) for t in t_grid]

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(_scan_point, ray, t, p) for t in t_grid]
        rows: List[Dict] = [future.result() for future in futures]

    table = pd.DataFrame(rows, columns=LAMBDA_SCAN_COLUMNS)
    usable = (table["distance"] > ModuliConfig.DEGENERATE_DISTANCE) & (table["curvature_norm"] > 0)
    if not usable.any():
        raise DegenerateRay(f"All {len(table)} distances along the ray are below "
                            f"{ModuliConfig.DEGENERATE_DISTANCE:.0e}")
    if usable.sum() < 3:
        raise DegenerateRay(f"Only {int(usable.sum())} usable points along the ray")
    if not usable.all():
        logger.warning(f"Dropping {int((~usable).sum())} degenerate points from the lambda fit")

    fit = stats.linregress(np.log(table.loc[usable, "curvature_norm"]), np.log(table.loc[usable, "distance"]))
    result = LambdaScanResult(lam=float(fit.slope), C=float(np.exp(fit.intercept)),
                              r2=float(fit.rvalue ** 2), table=table, p=float(p))
    logger.info(f"Lambda scan (p={p:g}, {len(table)} points): lambda = {result.lam:.6f}, "
                f"C = {result.C:.6g}, R2 = {result.r2:.8f}")
    return result

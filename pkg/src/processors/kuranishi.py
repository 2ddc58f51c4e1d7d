"""
Kuranishi reduction near a flat diagonal base.

The slice at Gamma splits into a finite-dimensional low-mode space (slice
eigenmodes of the flat Laplacian below the cutoff mu) and its high-mode
complement. The Kuranishi equation

    Upsilon(a_perp, a_par) = Pi_perp d*_{Gamma + a_par + a_perp} F = 0

is solved for a_perp by fixed-point iteration, and the balancing map
chi(a_par) = Pi d*F at the solution carries the remaining obstruction.
At Theta the zero set of chi on constant pairs is the quadratic cone
{[xi, eta] = 0}.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike
from scipy.optimize import newton_krylov

from config.settings import AppConfig, KuranishiConfig
from src.core import lie
from src.core.gaugefield import (
    Connection, FlatBase, OneForm, TwoForm, codifferential, curvature,
)
from src.core.lattice import Grid, ModeFrame, SpectralWorkspace, get_workspace, l2_norm
from src.exceptions import NoConvergence, ParameterRangeError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

# Relative distance below which a cutoff counts as lying on the spectrum
_SPECTRUM_GAP = 1e-9


def _sorted_modes(mask: np.ndarray, lam: np.ndarray) -> List[Tuple[int, int]]:
    modes = [tuple(int(v) for v in ij) for ij in np.argwhere(mask)]
    return sorted(modes, key=lambda ij: (lam[ij], ij))


def _perp(kappa: np.ndarray) -> np.ndarray:
    return np.array([-kappa[1], kappa[0]]) / np.hypot(kappa[0], kappa[1])


class LowModeSpace:
    """
    Orthonormal basis of the slice eigenmodes of Delta_Gamma below a cutoff.

    Modes are built directly on the grid: the complex channel contributes
    e^{i k.x} u with coefficients 1 and i, the real K channel contributes
    cos/sin pairs (one per +-k pair). Kernel modes carry both directions
    (dx, dy); the others only kappa-perp, which keeps every mode in the slice.
    At Theta the basis is ordered I dx, J dx, I dy, J dy, K dx, K dy.

    The default cutoff is half the smallest nonzero slice eigenvalue, so the
    low modes are exactly the harmonic one-forms at every base: 2 pi^2 at Theta
    (the midpoint of the gap (0, 4 pi^2)) and pi^2 at (pi/2, pi/2). A midpoint
    between the largest eigenvalue below 4 pi^2 and 4 pi^2 would pull in the
    shifted W-channel modes at interior bases (2 pi^2 at (pi/2, pi/2)), so it
    is not used.
    """

    def __init__(self, base: FlatBase, N: int, mu: Optional[float] = None,
                 threshold: Optional[float] = None):
        self.base = base
        self.N = int(N)
        self.threshold_override = threshold
        frame = self.frame()
        self.threshold = frame.threshold

        if mu is None:
            mu = 0.5 * frame.smallest_nonzero_eigenvalue()
        mu = float(mu)
        if mu < 0:
            raise ParameterRangeError(f"Cutoff mu must be non-negative, got {mu}")
        for lam in (frame.lam_w, frame.lam_z):
            values = lam[frame.resolved & (lam > frame.threshold)]
            if mu > 0 and np.any(np.abs(values - mu) <= _SPECTRUM_GAP * mu):
                raise ParameterRangeError(f"Cutoff mu = {mu} lies on the slice spectrum")
        self.mu = mu

        self._low_w = frame.resolved & (frame.kernel_w | (frame.lam_w < mu))
        self._low_z = frame.resolved & (frame.kernel_z | (frame.lam_z < mu))
        self._high_w = frame.resolved & ~self._low_w
        self._high_z = frame.resolved & ~self._low_z

        basis = self._build_basis(frame)
        basis.setflags(write=False)
        self.basis = basis
        logger.debug(f"Low-mode space at ({base.alpha:.6f}, {base.beta:.6f}), N={self.N}, "
                     f"mu={mu:.6g}: dimension {self.dimension}")

    @classmethod
    def harmonic(cls, base: FlatBase, N: int, threshold: Optional[float] = None) -> "LowModeSpace":
        """Harmonic one-forms H^1_Gamma (the Zariski tangent space)"""
        return cls(base, N, mu=0.0, threshold=threshold)

    @property
    def dimension(self) -> int:
        return int(self.basis.shape[0])

    def frame(self, workspace: Optional[SpectralWorkspace] = None) -> ModeFrame:
        ws = workspace or get_workspace(self.N)
        return self.base.frame(ws, self.threshold_override)

    def _build_basis(self, frame: ModeFrame) -> np.ndarray:
        N = self.N
        x, y = Grid(N).coordinates()
        kx = frame.workspace.kx_d[:, 0]
        ky = frame.workspace.ky_d[0, :]
        unit_dirs = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        vectors = []

        for i, j in _sorted_modes(self._low_w, frame.lam_w):
            phase = np.exp(1j * (kx[i] * x + ky[j] * y))
            dirs = unit_dirs if frame.kernel_w[i, j] else (_perp(frame.kappa_w[:, i, j]),)
            for u in dirs:
                for coeff in (1.0, 1j):
                    w = coeff * phase
                    b = np.zeros((2, N, N, 3))
                    for comp in range(2):
                        b[comp, ..., 0] = u[comp] * w.real
                        b[comp, ..., 1] = u[comp] * w.imag
                    vectors.append(b)

        for i, j in _sorted_modes(self._low_z, frame.lam_z):
            partner = ((-i) % N, (-j) % N)
            if partner < (i, j):
                continue
            theta = kx[i] * x + ky[j] * y
            if (i, j) == partner:
                profiles = (np.ones((N, N)),)
            else:
                profiles = (np.sqrt(2.0) * np.cos(theta), np.sqrt(2.0) * np.sin(theta))
            dirs = unit_dirs if frame.kernel_z[i, j] else (_perp(frame.kappa_z[:, i, j]),)
            for u in dirs:
                for profile in profiles:
                    b = np.zeros((2, N, N, 3))
                    for comp in range(2):
                        b[comp, ..., 2] = u[comp] * profile
                    vectors.append(b)

        if not vectors:
            return np.zeros((0, 2, N, N, 3))
        return np.stack(vectors)

    # -- coordinates --------------------------------------------------------

    def coordinates(self, b: OneForm) -> np.ndarray:
        """L2 coordinates of the low-mode part of b"""
        b = np.asarray(b, dtype=float)
        if b.shape != (2, self.N, self.N, 3):
            raise ParameterRangeError(f"One-form of shape {b.shape} does not match N={self.N}")
        return np.tensordot(self.basis, b, axes=4) / self.N ** 2

    def from_coordinates(self, coords: ArrayLike) -> OneForm:
        return np.tensordot(self.check_coordinates(coords), self.basis, axes=1)

    def check_coordinates(self, coords: ArrayLike) -> np.ndarray:
        coords = np.asarray(coords, dtype=float).reshape(-1)
        if coords.shape[0] != self.dimension:
            raise ParameterRangeError(
                f"Expected {self.dimension} low-mode coordinates, got {coords.shape[0]}"
            )
        return coords

    def project(self, b: OneForm) -> OneForm:
        return self.from_coordinates(self.coordinates(b))

    # -- high-mode operators ------------------------------------------------

    def project_high(self, b: OneForm, frame: Optional[ModeFrame] = None) -> OneForm:
        """Pi_perp: slice projection with the low modes removed"""
        frame = frame or self.frame()
        w, z = frame.project_slice_modes(*frame.to_modes(b))
        return frame.from_modes(w * self._high_w, z * self._high_z)

    def solve_high(self, b: OneForm, frame: Optional[ModeFrame] = None) -> OneForm:
        """(Delta_Gamma restricted to the high slice)^-1 Pi_perp b"""
        frame = frame or self.frame()
        w, z = frame.project_slice_modes(*frame.to_modes(b))
        return frame.from_modes(w * (self._high_w * frame.pinv_w), z * (self._high_z * frame.pinv_z))


def harmonic_basis(base: FlatBase, N: int, threshold: Optional[float] = None) -> LowModeSpace:
    return LowModeSpace.harmonic(base, N, threshold)


def low_mode_projection(b: OneForm, space: LowModeSpace) -> Tuple[OneForm, OneForm]:
    """Orthogonal split b = b_par + b_perp along the low-mode space"""
    b = np.asarray(b, dtype=float)
    b_par = space.project(b)
    return b_par, b - b_par


def greens_operator(f: TwoForm, base: FlatBase, workspace: Optional[SpectralWorkspace] = None,
                    threshold: Optional[float] = None) -> TwoForm:
    """Per-mode pseudo-inverse of Delta_Gamma on 2-forms; kernel modes go to zero"""
    f = np.asarray(f, dtype=float)
    ws = workspace or get_workspace(f.shape[-2])
    return base.frame(ws, threshold).laplacian_pinv2(f)


def kuranishi_map(a: OneForm, base: FlatBase, workspace: Optional[SpectralWorkspace] = None) -> OneForm:
    """kappa(a) = a + 1/2 d_Gamma^* G_Gamma [a ^ a], with [a ^ a] = 2 [a_x, a_y]"""
    a = np.asarray(a, dtype=float)
    flat = Connection.flat(base, a.shape[1])
    ws = workspace or flat.workspace()
    quadratic = lie.bracket(a[0], a[1])
    return a + codifferential(flat, greens_operator(quadratic, base, ws), ws)


@dataclass
class KuranishiSolution:
    """Solution a_perp of the Kuranishi equation over a given a_par"""
    base: FlatBase
    coords: np.ndarray
    a_par: OneForm
    a_perp: OneForm
    residual: float
    iterations: int
    method: str = "picard"

    def connection(self) -> Connection:
        return Connection(self.base, self.a_par + self.a_perp)


def _dstar_curvature(base: FlatBase, a: OneForm, ws: SpectralWorkspace) -> OneForm:
    A = Connection(base, a)
    return codifferential(A, curvature(A, ws), ws)


def solve_kuranishi(a_par: ArrayLike, space: LowModeSpace, tol: Optional[float] = None,
                    radius: Optional[float] = None, max_iter: Optional[int] = None,
                    newton: Optional[bool] = None,
                    workspace: Optional[SpectralWorkspace] = None) -> KuranishiSolution:
    """
    Solve Upsilon(a_perp, a_par) = 0 for a_perp.

    Picard iteration a_perp <- -(Delta|perp)^-1 Pi_perp (d*F - Delta_Gamma a), the
    nonlinear part of d*F. With newton=True a failed Picard run is retried with
    Newton-Krylov on the same fixed-point map.

    Args:
        a_par: low-mode coordinates
        space: low-mode space at the base
        tol: target ||Upsilon||_L2
        radius: largest admissible ||a_par|| and ||a_perp||

    Raises:
        NoConvergence: a_par outside the radius, iterates leaving it, or no convergence
    """
    tol = KuranishiConfig.TOL if tol is None else tol
    radius = KuranishiConfig.RADIUS if radius is None else radius
    max_iter = KuranishiConfig.MAX_ITER if max_iter is None else max_iter
    newton = KuranishiConfig.USE_NEWTON if newton is None else newton

    coords = space.check_coordinates(a_par)
    size = float(np.linalg.norm(coords))
    if size > radius:
        raise NoConvergence(f"||a_par|| = {size:.3e} exceeds the Kuranishi radius {radius:.3e}",
                            residual=float("nan"), iterations=0)

    ws = workspace or get_workspace(space.N)
    frame = space.frame(ws)
    a_low = space.from_coordinates(coords)
    a_perp = np.zeros_like(a_low)

    residual = float("inf")
    for iteration in range(max_iter + 1):
        a = a_low + a_perp
        dstar_f = _dstar_curvature(space.base, a, ws)
        residual = l2_norm(space.project_high(dstar_f, frame))
        if residual <= tol:
            logger.debug(f"Kuranishi equation solved in {iteration} Picard steps, residual {residual:.3e}")
            return KuranishiSolution(space.base, coords, a_low, a_perp, residual, iteration)
        if iteration == max_iter:
            break
        a_perp = -space.solve_high(dstar_f - frame.laplacian_slice(a), frame)
        perp_size = l2_norm(a_perp)
        if not np.isfinite(perp_size) or perp_size > radius:
            if newton:
                break
            raise NoConvergence(f"Picard iterate left the radius: ||a_perp|| = {perp_size:.3e}",
                                residual=residual, iterations=iteration + 1)

    if not newton:
        raise NoConvergence(f"Kuranishi Picard iteration stalled at residual {residual:.3e} "
                            f"after {max_iter} steps", residual=residual, iterations=max_iter)

    logger.info(f"Picard iteration failed (residual {residual:.3e}), retrying with Newton-Krylov")
    return _solve_newton(coords, a_low, space, frame, ws, tol, max_iter)


def _solve_newton(coords: np.ndarray, a_low: OneForm, space: LowModeSpace, frame: ModeFrame,
                  ws: SpectralWorkspace, tol: float, max_iter: int) -> KuranishiSolution:
    shape = a_low.shape

    def fixed_point_defect(v: np.ndarray) -> np.ndarray:
        a = a_low + v.reshape(shape)
        dstar_f = _dstar_curvature(space.base, a, ws)
        update = space.solve_high(dstar_f - frame.laplacian_slice(a), frame)
        return (v.reshape(shape) + update).ravel()

    try:
        v = newton_krylov(fixed_point_defect, np.zeros(a_low.size), f_tol=tol / frame.lam_max,
                          maxiter=max_iter)
    except Exception as e:
        raise NoConvergence(f"Newton-Krylov fallback failed: {e}", residual=float("nan"),
                            iterations=max_iter) from e

    a_perp = space.project_high(v.reshape(shape), frame)
    residual = l2_norm(space.project_high(_dstar_curvature(space.base, a_low + a_perp, ws), frame))
    if residual > tol:
        raise NoConvergence(f"Newton-Krylov fallback ended at residual {residual:.3e}",
                            residual=residual, iterations=max_iter)
    return KuranishiSolution(space.base, coords, a_low, a_perp, residual, max_iter, method="newton")


def balancing(a_par: ArrayLike, space: LowModeSpace, tol: Optional[float] = None,
              solution: Optional[KuranishiSolution] = None,
              workspace: Optional[SpectralWorkspace] = None) -> np.ndarray:
    """Low-mode coordinates of d*F at Gamma + a_par + a_perp(a_par)"""
    ws = workspace or get_workspace(space.N)
    if solution is None:
        solution = solve_kuranishi(a_par, space, tol=tol, workspace=ws)
    dstar_f = _dstar_curvature(space.base, solution.a_par + solution.a_perp, ws)
    return space.coordinates(dstar_f)


def _balancing_row(coords: np.ndarray, space: LowModeSpace, tol: Optional[float]) -> Dict:
    ws = get_workspace(space.N)
    solution = solve_kuranishi(coords, space, tol=tol, workspace=ws)
    chi = balancing(coords, space, solution=solution, workspace=ws)
    row = {f"coord_{i}": float(v) for i, v in enumerate(coords)}
    row.update({f"chi_{i}": float(v) for i, v in enumerate(chi)})
    row["residual"] = solution.residual
    return row


def balancing_table(samples: Sequence[ArrayLike], space: LowModeSpace, tol: Optional[float] = None,
                    max_workers: Optional[int] = None) -> pd.DataFrame:
    """
    Balancing map on a batch of low-mode coordinates.

    Solves run on worker threads; rows are kept in input order with columns
    coord_0.., chi_0.., residual.
    """
    samples = [space.check_coordinates(s) for s in samples]
    columns = ([f"coord_{i}" for i in range(space.dimension)]
               + [f"chi_{i}" for i in range(space.dimension)] + ["residual"])
    with ThreadPoolExecutor(max_workers=max_workers or AppConfig.THREADS) as executor:
        futures = [executor.submit(_balancing_row, s, space, tol) for s in samples]
        rows = [future.result() for future in futures]

    table = pd.DataFrame(rows, columns=columns)
    logger.info(f"Balancing map evaluated on {len(table)} samples, "
                f"max residual {table['residual'].max() if len(table) else 0.0:.3e}")
    return table


def sample_ball(space: LowModeSpace, radius: float, n_samples: int,
                rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the ball of the given radius in low-mode coordinates"""
    d = space.dimension
    directions = rng.standard_normal((n_samples, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.random(n_samples) ** (1.0 / d)
    return directions * radii[:, None]

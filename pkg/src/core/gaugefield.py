"""
Connections, curvature and covariant calculus for SU(2) over the flat torus.

A Connection is a diagonal flat base Gamma(alpha, beta) = alpha K dx + beta K dy
plus a perturbation one-form a; its total components are c = Gamma + a.
Curvature convention: F = d_x c_y - d_y c_x + [c_x, c_y].
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.settings import GaugeConfig
from src.core import lie
from src.core.lattice import (
    Field, SpectralWorkspace, check_same_grid, get_workspace, grid_of, l2_inner, l2_norm,
    sobolev_norm,
)
from src.exceptions import AmbiguousKernel, GridError, NoConvergence
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

OneForm = Field
TwoForm = Field
ScalarField = Field
GaugeTransform = Field


@dataclass(frozen=True)
class FlatBase:
    """Diagonal flat connection Gamma(alpha, beta) = alpha K dx + beta K dy"""
    alpha: float = 0.0
    beta: float = 0.0

    def components(self) -> np.ndarray:
        """(2, 3) constant components (alpha K, beta K)"""
        return np.array([self.alpha * lie.K, self.beta * lie.K])

    def frame(self, workspace: SpectralWorkspace, threshold: Optional[float] = None):
        return workspace.mode_frame(self.alpha, self.beta, threshold)

    def shifted(self, d_alpha: float, d_beta: float) -> "FlatBase":
        return FlatBase(self.alpha + d_alpha, self.beta + d_beta)


THETA = FlatBase(0.0, 0.0)


@dataclass(frozen=True)
class Connection:
    """Gamma(alpha, beta) + a, with a stored as a read-only (2, N, N, 3) array"""
    base: FlatBase
    a: OneForm

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 4 or a.shape[0] != 2 or a.shape[-1] != 3:
            raise GridError(f"Perturbation must have shape (2, N, N, 3), got {a.shape}")
        grid_of(a)
        if not np.all(np.isfinite(a)):
            raise GridError("Connection perturbation has non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @classmethod
    def flat(cls, base: FlatBase, N: int) -> "Connection":
        return cls(base, np.zeros((2, N, N, 3)))

    @property
    def N(self) -> int:
        return self.a.shape[1]

    @property
    def a_x(self) -> ScalarField:
        return self.a[0]

    @property
    def a_y(self) -> ScalarField:
        return self.a[1]

    def total(self) -> OneForm:
        """Components c = Gamma + a"""
        return self.a + self.base.components()[:, None, None, :]

    def with_perturbation(self, a: OneForm) -> "Connection":
        return Connection(self.base, a)

    def rebase(self, base: FlatBase) -> "Connection":
        """Same connection expressed relative to another diagonal base"""
        shift = (self.base.components() - base.components())[:, None, None, :]
        return Connection(base, self.a + shift)

    def workspace(self) -> SpectralWorkspace:
        return get_workspace(self.N)


def _ws(field: Field, workspace: Optional[SpectralWorkspace]) -> SpectralWorkspace:
    return workspace or get_workspace(grid_of(field).N)


# -- component-level operators (c is a (2, N, N, 3) array of total components) --

def _d0(c: OneForm, phi: ScalarField, ws: SpectralWorkspace) -> OneForm:
    return np.stack([ws.derivative(phi, "x") + lie.bracket(c[0], phi),
                     ws.derivative(phi, "y") + lie.bracket(c[1], phi)])


def _d1(c: OneForm, b: OneForm, ws: SpectralWorkspace) -> TwoForm:
    return (ws.derivative(b[1], "x") - ws.derivative(b[0], "y")
            + lie.bracket(c[0], b[1]) - lie.bracket(c[1], b[0]))


def _d1_star(c: OneForm, f: TwoForm, ws: SpectralWorkspace) -> OneForm:
    return np.stack([ws.derivative(f, "y") + lie.bracket(c[1], f),
                     -ws.derivative(f, "x") - lie.bracket(c[0], f)])


def _d0_star(c: OneForm, b: OneForm, ws: SpectralWorkspace) -> ScalarField:
    return (-ws.derivative(b[0], "x") - ws.derivative(b[1], "y")
            - lie.bracket(c[0], b[0]) - lie.bracket(c[1], b[1]))


def _curvature(c: OneForm, ws: SpectralWorkspace) -> TwoForm:
    return ws.derivative(c[1], "x") - ws.derivative(c[0], "y") + lie.bracket(c[0], c[1])


def wedge_bracket(b: OneForm, e: OneForm) -> TwoForm:
    """dx^dy coefficient of [b ^ e] = [b_x, e_y] - [b_y, e_x]"""
    return lie.bracket(b[0], e[1]) - lie.bracket(b[1], e[0])


# -- public operations -------------------------------------------------------

def curvature(A: Connection, workspace: Optional[SpectralWorkspace] = None) -> TwoForm:
    return _curvature(A.total(), workspace or A.workspace())


def energy(A: Connection, workspace: Optional[SpectralWorkspace] = None) -> float:
    """Yang-Mills energy 1/2 ||F_A||^2"""
    f = curvature(A, workspace)
    return 0.5 * l2_inner(f, f)


def covariant_d(A: Connection, phi: ScalarField, workspace: Optional[SpectralWorkspace] = None) -> OneForm:
    check_same_grid(A.a, phi)
    return _d0(A.total(), phi, workspace or A.workspace())


def covariant_d1(A: Connection, b: OneForm, workspace: Optional[SpectralWorkspace] = None) -> TwoForm:
    check_same_grid(A.a, b)
    return _d1(A.total(), b, workspace or A.workspace())


def codifferential(A: Connection, f: TwoForm, workspace: Optional[SpectralWorkspace] = None) -> OneForm:
    """L2-adjoint of covariant_d1"""
    check_same_grid(A.a, f)
    return _d1_star(A.total(), f, workspace or A.workspace())


def codifferential0(A: Connection, b: OneForm, workspace: Optional[SpectralWorkspace] = None) -> ScalarField:
    """L2-adjoint of covariant_d"""
    check_same_grid(A.a, b)
    return _d0_star(A.total(), b, workspace or A.workspace())


def coulomb_project(b: OneForm, base: FlatBase, workspace: Optional[SpectralWorkspace] = None,
                    threshold: Optional[float] = None) -> OneForm:
    """L2-orthogonal projection onto Ker d_Gamma^* (resolved modes only)"""
    ws = _ws(b, workspace)
    return base.frame(ws, threshold).project_slice(b)


def slice_residual(A: Connection, workspace: Optional[SpectralWorkspace] = None) -> float:
    """||d_Gamma^* a||_L2 for the connection's own base"""
    ws = workspace or A.workspace()
    return l2_norm(_d0_star(_base_components(A), A.a, ws))


def _base_components(A: Connection) -> OneForm:
    return np.broadcast_to(A.base.components()[:, None, None, :], A.a.shape)


def gradient_slice(A: Connection, workspace: Optional[SpectralWorkspace] = None) -> OneForm:
    """Slice gradient Pi_Gamma d_A^* F_A"""
    ws = workspace or A.workspace()
    c = A.total()
    return A.base.frame(ws).project_slice(_d1_star(c, _curvature(c, ws), ws))


def energy_and_gradient(A: Connection, workspace: Optional[SpectralWorkspace] = None) -> Tuple[float, OneForm]:
    """Energy and slice gradient from one curvature evaluation"""
    ws = workspace or A.workspace()
    c = A.total()
    f = _curvature(c, ws)
    grad = A.base.frame(ws).project_slice(_d1_star(c, f, ws))
    return 0.5 * l2_inner(f, f), grad


def hessian_apply(A: Connection, b: OneForm, workspace: Optional[SpectralWorkspace] = None) -> OneForm:
    """
    Slice-projected Hessian of the energy at A.

    Pi (d_A^* d_A + F-term) Pi b where the F-term is (-[f, b_y], [f, b_x]),
    so that <H b, e> = <d_A b, d_A e> + <F_A, [b ^ e]> on the slice.
    """
    check_same_grid(A.a, b)
    ws = workspace or A.workspace()
    frame = A.base.frame(ws)
    c = A.total()
    f = _curvature(c, ws)
    pb = frame.project_slice(b)
    x = _d1_star(c, _d1(c, pb, ws), ws)
    x = x + np.stack([-lie.bracket(f, pb[1]), lie.bracket(f, pb[0])])
    return frame.project_slice(x)


def gauge_apply(u: GaugeTransform, A: Connection, workspace: Optional[SpectralWorkspace] = None) -> Connection:
    """
    u(A): c -> s^-1 c s + s^-1 ds per axis, re-expressed relative to A's base.

    The derivative of s is the spectral derivative of its quaternion components.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (A.N, A.N, 4):
        raise GridError(f"Gauge transform must have shape ({A.N}, {A.N}, 4), got {u.shape}")
    ws = workspace or A.workspace()
    s_inv = lie.inverse(u)
    c = A.total()
    out = np.empty_like(c)
    for axis, name in enumerate(("x", "y")):
        ds = ws.derivative(u, name)
        maurer_cartan = lie.multiply(s_inv, ds, renormalize=False)[..., 1:]
        out[axis] = lie.adjoint(s_inv, c[axis]) + maurer_cartan
    return Connection(A.base, out - A.base.components()[:, None, None, :])


def identity_transform(N: int) -> GaugeTransform:
    return np.broadcast_to(lie.IDENTITY, (N, N, 4)).copy()


def coulomb_gauge_fix(A: Connection, base: Optional[FlatBase] = None, tol: Optional[float] = None,
                      radius: Optional[float] = None, max_iter: Optional[int] = None,
                      workspace: Optional[SpectralWorkspace] = None) -> Tuple[GaugeTransform, Connection]:
    """
    Put A into Coulomb gauge relative to a flat base.

    Quasi-Newton on u = exp(chi): chi = -Delta_Gamma^+ d_Gamma^* (A - Gamma), with a damped
    line search on the residual ||d_Gamma^*(u(A) - Gamma)||.

    Args:
        A: connection to fix
        base: reference base (defaults to A.base)
        tol: residual tolerance
        radius: inputs with ||A - Gamma||_{W^{1,2}} above this are rejected
        max_iter: iteration cap

    Returns:
        (u, u(A)) with u(A) stored relative to base

    Raises:
        NoConvergence: outside the radius, or residual not reduced below tol
    """
    base = A.base if base is None else base
    tol = GaugeConfig.GAUGE_FIX_TOL if tol is None else tol
    radius = GaugeConfig.GAUGE_FIX_RADIUS if radius is None else radius
    max_iter = GaugeConfig.GAUGE_FIX_MAX_ITER if max_iter is None else max_iter

    A = A.rebase(base)
    ws = workspace or A.workspace()
    frame = base.frame(ws)
    gamma = _base_components(A)

    size = sobolev_norm(A.a, 2, 1, ws)
    if size > radius:
        raise NoConvergence(
            f"||A - Gamma||_W12 = {size:.3e} exceeds the gauge-fixing radius {radius:.3e}",
            residual=float("nan"), iterations=0,
        )

    s = identity_transform(A.N)
    div = _d0_star(gamma, A.a, ws)
    residual = l2_norm(div)

    for iteration in range(max_iter):
        if residual <= tol:
            logger.debug(f"Coulomb gauge fixed in {iteration} iterations, residual {residual:.3e}")
            return s, A

        chi = -frame.laplacian_pinv0(div)
        for damping in GaugeConfig.GAUGE_FIX_DAMPING:
            u = lie.exponential(damping * chi)
            trial = gauge_apply(u, A, ws)
            trial_div = _d0_star(gamma, trial.a, ws)
            trial_residual = l2_norm(trial_div)
            if trial_residual < residual:
                break
        else:
            raise NoConvergence(
                f"Gauge fixing stalled at residual {residual:.3e} after {iteration} iterations",
                residual=residual, iterations=iteration,
            )

        s = lie.multiply(s, u)
        A, div, residual = trial, trial_div, trial_residual

    if residual <= tol:
        return s, A
    raise NoConvergence(
        f"Gauge fixing did not reach tol {tol:.1e} in {max_iter} iterations (residual {residual:.3e})",
        residual=residual, iterations=max_iter,
    )


def _hodge_spectra(kappa: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-mode eigenvalues of the Hodge Laplacians of d_Gamma on 0-, 1- and 2-forms.

    At a mode with twisted wavenumber kappa the complex Fourier symbols are
    d0 = i (kappa_x, kappa_y)^T and d1 = i (-kappa_y, kappa_x); the Laplacians are
    d0^* d0, d0 d0^* + d1^* d1 and d1 d1^*.
    """
    kx, ky = kappa[0].astype(complex), kappa[1].astype(complex)
    d0 = 1j * np.stack([kx, ky], axis=-1)[..., :, None]  # (N, N, 2, 1)
    d1 = 1j * np.stack([-ky, kx], axis=-1)[..., None, :]  # (N, N, 1, 2)
    d0_h = np.conj(np.swapaxes(d0, -1, -2))
    d1_h = np.conj(np.swapaxes(d1, -1, -2))
    lap0 = np.linalg.eigvalsh(d0_h @ d0)
    lap1 = np.linalg.eigvalsh(d0 @ d0_h + d1_h @ d1)
    lap2 = np.linalg.eigvalsh(d1 @ d1_h)
    return lap0, lap1, lap2


def cohomology_dims(base: FlatBase, N: int, kernel_threshold: Optional[float] = None,
                    workspace: Optional[SpectralWorkspace] = None) -> Tuple[int, int, int]:
    """
    Dimensions (h0, h1, h2) of the harmonic spaces of d_Gamma + d_Gamma^*.

    Each degree is counted separately from the kernel of its own Hodge Laplacian,
    mode by mode over the resolved modes; a W-channel mode has real dimension 2
    and a K-channel mode real dimension 1.

    Raises:
        AmbiguousKernel: an eigenvalue lies within the ambiguity factor of the threshold
    """
    ws = workspace or get_workspace(N)
    frame = base.frame(ws, kernel_threshold)
    frame.check_resolution()

    factor = GaugeConfig.AMBIGUITY_FACTOR
    dims = [0, 0, 0]
    for kappa, real_dim in ((frame.kappa_w, 2), (frame.kappa_z, 1)):
        for degree, eigenvalues in enumerate(_hodge_spectra(kappa)):
            values = np.abs(eigenvalues[frame.resolved])
            near = (values > frame.threshold / factor) & (values < frame.threshold * factor)
            if np.any(near):
                raise AmbiguousKernel(
                    f"{int(near.sum())} degree-{degree} eigenvalue(s) within a factor {factor:g} "
                    f"of the kernel threshold {frame.threshold:.3e}"
                )
            dims[degree] += real_dim * int(np.sum(values <= frame.threshold))

    h0, h1, h2 = dims
    logger.debug(f"Cohomology at ({base.alpha:.6g}, {base.beta:.6g}), N={N}: ({h0}, {h1}, {h2})")
    return h0, h1, h2


def virtual_dimension(base: FlatBase, N: int, kernel_threshold: Optional[float] = None) -> int:
    """h1 - h0 - h2, zero on the torus"""
    h0, h1, h2 = cohomology_dims(base, N, kernel_threshold)
    return h1 - h0 - h2

"""
Periodic N x N grid on the unit torus with Fourier-spectral calculus.

Array layouts used throughout the lab (axis 0 of a grid is x, axis 1 is y):

    ScalarField  (N, N, 3)      su(2)-valued function
    OneForm      (2, N, N, 3)   components (dx, dy)
    TwoForm      (N, N, 3)      coefficient of dx^dy
    GaugeTransform (N, N, 4)    unit quaternion per site

Spatial axes are always (-3, -2).

The ModeFrame diagonalizes the flat covariant operators of a diagonal base
Gamma(alpha, beta) = alpha K dx + beta K dy. A field splits into the complex
channel W = c_I + i c_J, on which ad K acts by 2i, and the real channel
Z = c_K, on which it acts by 0. In Fourier space the covariant derivative is
then multiplication by i * kappa with

    kappa_W = (k_x + 2 alpha, k_y + 2 beta),    kappa_Z = (k_x, k_y)

and every per-mode operator (Laplacian, Coulomb projection, Green's operator)
is a scalar or a 2x2 projector per mode. Nyquist rows and columns lie outside
the resolved space: derivatives zero them and the one-form slice excludes them.
"""

import threading
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from config.settings import GaugeConfig, LatticeConfig
from src.exceptions import AmbiguousKernel, GridError, ParameterRangeError

Field = NDArray[np.float64]
SPATIAL_AXES = (-3, -2)


@dataclass(frozen=True)
class Grid:
    """Periodic N x N grid over [0, 1)^2"""
    N: int

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < LatticeConfig.MIN_GRID or self.N % 2:
            raise GridError(f"Grid size must be an even integer >= {LatticeConfig.MIN_GRID}, got {self.N}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.N

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    def coordinates(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Site coordinates (x, y), each (N, N), axis 0 = x"""
        s = np.arange(self.N) * self.spacing
        return np.meshgrid(s, s, indexing="ij")


def grid_of(field: Field) -> Grid:
    field = np.asarray(field)
    if field.ndim < 3 or field.shape[-3] != field.shape[-2]:
        raise GridError(f"Field of shape {field.shape} does not live on a square grid")
    return Grid(int(field.shape[-2]))


def check_same_grid(*fields: Field) -> Grid:
    grids = {grid_of(f).N for f in fields}
    if len(grids) != 1:
        raise GridError(f"Mismatched grid sizes: {sorted(grids)}")
    return Grid(grids.pop())


class ModeFrame:
    """
    Per-mode factorization of the flat operators at Gamma(alpha, beta).

    Built once per (N, alpha, beta, threshold) by SpectralWorkspace.mode_frame
    and then shared read-only.
    """

    def __init__(self, workspace: "SpectralWorkspace", alpha: float, beta: float,
                 threshold: Optional[float] = None):
        self.workspace = workspace
        self.N = workspace.grid.N
        self.alpha = float(alpha)
        self.beta = float(beta)

        kx, ky = workspace.kx_d, workspace.ky_d
        shape = (self.N, self.N)
        self.kappa_w = np.stack([np.broadcast_to(kx + 2.0 * self.alpha, shape),
                                 np.broadcast_to(ky + 2.0 * self.beta, shape)])
        self.kappa_z = np.stack([np.broadcast_to(kx, shape), np.broadcast_to(ky, shape)])
        self.lam_w = np.sum(self.kappa_w ** 2, axis=0)
        self.lam_z = np.sum(self.kappa_z ** 2, axis=0)
        self.resolved = workspace.resolved

        lam_max = max(self.lam_w[self.resolved].max(), self.lam_z[self.resolved].max())
        if threshold is None:
            threshold = GaugeConfig.KERNEL_THRESHOLD * lam_max
        self.threshold = float(threshold)
        self.lam_max = float(lam_max)

        self.kernel_w = (self.lam_w <= self.threshold) & self.resolved
        self.kernel_z = (self.lam_z <= self.threshold) & self.resolved

        with np.errstate(divide="ignore"):
            self.pinv_w = np.where(self.lam_w > self.threshold, 1.0 / self.lam_w, 0.0)
            self.pinv_z = np.where(self.lam_z > self.threshold, 1.0 / self.lam_z, 0.0)

    # -- transforms ---------------------------------------------------------

    def to_modes(self, field: Field) -> Tuple[NDArray[np.complex128], NDArray[np.complex128]]:
        """Split a field (..., N, N, 3) into Fourier coefficients of W and Z"""
        field = np.asarray(field, dtype=float)
        w = np.fft.fft2(field[..., 0] + 1j * field[..., 1], axes=(-2, -1))
        z = np.fft.fft2(field[..., 2], axes=(-2, -1))
        return w, z

    def from_modes(self, w_hat: NDArray[np.complex128], z_hat: NDArray[np.complex128]) -> Field:
        w = np.fft.ifft2(w_hat, axes=(-2, -1))
        z = np.fft.ifft2(z_hat, axes=(-2, -1)).real
        return np.stack([w.real, w.imag, z], axis=-1)

    def apply_multiplier(self, field: Field, mult_w: NDArray, mult_z: NDArray) -> Field:
        """Multiply each Fourier mode of each channel by a scalar"""
        w, z = self.to_modes(field)
        return self.from_modes(w * mult_w, z * mult_z)

    # -- operators ----------------------------------------------------------

    def project_slice_modes(self, w: NDArray[np.complex128], z: NDArray[np.complex128]):
        """Coulomb projection on one-form coefficients of shape (2, N, N)"""
        return (self._leray(w, self.kappa_w, self.lam_w),
                self._leray(z, self.kappa_z, self.lam_z))

    def _leray(self, b: NDArray[np.complex128], kappa: NDArray, lam: NDArray) -> NDArray[np.complex128]:
        dot = kappa[0] * b[0] + kappa[1] * b[1]
        with np.errstate(divide="ignore", invalid="ignore"):
            coeff = np.where(lam > self.threshold, dot / np.where(lam > 0, lam, 1.0), 0.0)
        out = b - kappa * coeff
        return out * self.resolved

    def project_slice(self, b: Field) -> Field:
        w, z = self.to_modes(b)
        w, z = self.project_slice_modes(w, z)
        return self.from_modes(w, z)

    def laplacian_pinv0(self, phi: Field) -> Field:
        """Pseudo-inverse of d*d on 0-forms (also d d* on 2-forms), all modes above threshold"""
        return self.apply_multiplier(phi, self.pinv_w, self.pinv_z)

    def laplacian_pinv2(self, f: Field) -> Field:
        """Green's operator on 2-forms: kernel and unresolved modes go to zero"""
        return self.apply_multiplier(f, self.pinv_w * self.resolved, self.pinv_z * self.resolved)

    def laplacian_slice(self, b: Field) -> Field:
        """Hodge Laplacian on slice one-forms (multiplication by |kappa|^2)"""
        return self.apply_multiplier(b, self.lam_w, self.lam_z)

    # -- spectrum -----------------------------------------------------------

    def check_resolution(self):
        """Raise AmbiguousKernel if a resolved eigenvalue is within the ambiguity factor of the threshold"""
        factor = GaugeConfig.AMBIGUITY_FACTOR
        lo, hi = self.threshold / factor, self.threshold * factor
        for name, lam in (("W", self.lam_w), ("Z", self.lam_z)):
            near = (lam > lo) & (lam < hi) & self.resolved
            if np.any(near):
                raise AmbiguousKernel(
                    f"{int(near.sum())} {name}-channel eigenvalue(s) within a factor {factor:g} "
                    f"of the kernel threshold {self.threshold:.3e} at (alpha, beta) = ({self.alpha}, {self.beta})"
                )

    def kernel_dimension(self) -> int:
        """Real dimension of the kernel of the flat Laplacian on 0-forms"""
        return int(self.kernel_z.sum()) + 2 * int(self.kernel_w.sum())

    def slice_eigenvalues(self) -> NDArray[np.float64]:
        """Resolved one-form slice eigenvalues with real multiplicity, sorted"""
        values = []
        for lam, real_dim in ((self.lam_w, 2), (self.lam_z, 1)):
            for value in lam[self.resolved]:
                # kernel modes carry both components, other modes only kappa-perp
                comps = 2 if value <= self.threshold else 1
                values.extend([value] * (comps * real_dim))
        return np.sort(np.asarray(values))

    def smallest_nonzero_eigenvalue(self) -> float:
        candidates = np.concatenate([self.lam_w[self.resolved], self.lam_z[self.resolved]])
        return float(candidates[candidates > self.threshold].min())


class SpectralWorkspace:
    """
    Wavenumber tables and cached mode frames for one grid.

    A workspace is single-owner: use one per thread (see get_workspace).
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        N = grid.N
        k = 2.0 * np.pi * np.fft.fftfreq(N, d=1.0 / N)
        kd = k.copy()
        # Nyquist mode zeroed for odd derivatives
        kd[N // 2] = 0.0
        self.k = k
        self.kx = k[:, None]
        self.ky = k[None, :]
        self.kx_d = kd[:, None]
        self.ky_d = kd[None, :]

        nyquist = np.zeros(N, dtype=bool)
        nyquist[N // 2] = True
        self.resolved = ~(nyquist[:, None] | nyquist[None, :])

        self._frames: Dict[Tuple[int, float, float, Optional[float]], ModeFrame] = {}

    def forward(self, f: Field) -> NDArray[np.complex128]:
        return np.fft.fft2(f, axes=SPATIAL_AXES)

    def inverse(self, f_hat: NDArray[np.complex128]) -> Field:
        return np.fft.ifft2(f_hat, axes=SPATIAL_AXES).real

    def derivative(self, f: Field, axis: str) -> Field:
        if axis not in ("x", "y"):
            raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
        f = np.asarray(f, dtype=float)
        if f.shape[-2] != self.grid.N:
            raise GridError(f"Field on grid {f.shape[-2]} passed to workspace for grid {self.grid.N}")
        symbol = 1j * (self.kx_d if axis == "x" else self.ky_d)
        return self.inverse(self.forward(f) * symbol[..., None])

    def gradient(self, f: Field) -> Field:
        """Stack (d/dx f, d/dy f) on a new leading axis"""
        return np.stack([self.derivative(f, "x"), self.derivative(f, "y")])

    def mode_frame(self, alpha: float, beta: float, threshold: Optional[float] = None) -> ModeFrame:
        key = (self.grid.N, float(alpha), float(beta), threshold)
        frame = self._frames.get(key)
        if frame is None:
            frame = ModeFrame(self, alpha, beta, threshold)
            self._frames[key] = frame
        return frame


_local = threading.local()


def get_workspace(N: int) -> SpectralWorkspace:
    """Thread-local workspace for grid size N"""
    cache = getattr(_local, "workspaces", None)
    if cache is None:
        cache = {}
        _local.workspaces = cache
    if N not in cache:
        cache[N] = SpectralWorkspace(Grid(N))
    return cache[N]


def spectral_derivative(f: Field, axis: str, workspace: Optional[SpectralWorkspace] = None) -> Field:
    """Exact derivative of the band-limited interpolant of f along 'x' or 'y'"""
    ws = workspace or get_workspace(grid_of(f).N)
    return ws.derivative(f, axis)


def l2_inner(f: Field, g: Field) -> float:
    """h^2 * sum over sites of the pointwise pairing, all components included"""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise GridError(f"Rank/grid mismatch in l2_inner: {f.shape} vs {g.shape}")
    grid = grid_of(f)
    return float(grid.cell_area * np.sum(f * g))


def l2_norm(f: Field) -> float:
    return float(np.sqrt(max(l2_inner(f, f), 0.0)))


def l2_inner_spectral(f: Field, g: Field) -> float:
    """Fourier-side evaluation of l2_inner (Parseval cross-check)"""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise GridError(f"Rank/grid mismatch in l2_inner_spectral: {f.shape} vs {g.shape}")
    N = grid_of(f).N
    fh = np.fft.fft2(f, axes=SPATIAL_AXES)
    gh = np.fft.fft2(g, axes=SPATIAL_AXES)
    return float(np.sum((np.conj(fh) * gh).real) / N ** 4)


def pointwise_norm(f: Field) -> NDArray[np.float64]:
    """|f| per site, summing over every non-spatial axis"""
    f = np.asarray(f, dtype=float)
    N = grid_of(f).N
    sq = np.moveaxis(f ** 2, SPATIAL_AXES, (0, 1)).reshape(N, N, -1).sum(axis=-1)
    return np.sqrt(sq)


def sobolev_norm(f: Field, p: float = 2.0, order: int = 1,
                 workspace: Optional[SpectralWorkspace] = None) -> float:
    """
    W^{order,p} norm with flat spectral gradients.

    Args:
        f: any field on a grid (one-forms sum both components)
        p: exponent in [1, inf]; np.inf gives the max norm
        order: 0 or 1

    Returns:
        (sum h^2 (|f|^p + |grad f|^p))^(1/p), the gradient term omitted for order 0
    """
    if not p >= 1:
        raise ParameterRangeError(f"Sobolev exponent must satisfy p >= 1, got {p}")
    if order not in (0, 1):
        raise ParameterRangeError(f"Only orders 0 and 1 are supported, got {order}")

    f = np.asarray(f, dtype=float)
    grid = grid_of(f)
    terms = [pointwise_norm(f)]
    if order == 1:
        ws = workspace or get_workspace(grid.N)
        terms.append(pointwise_norm(ws.gradient(f)))

    if np.isinf(p):
        return float(max(t.max() for t in terms))
    total = sum(np.sum(t ** p) for t in terms)
    return float((grid.cell_area * total) ** (1.0 / p))


def resample(f: Field, N_new: int) -> Field:
    """Band-limited interpolation of f onto an N_new grid (Nyquist content dropped)"""
    f = np.asarray(f, dtype=float)
    N = grid_of(f).N
    Grid(N_new)
    f_hat = np.fft.fft2(f, axes=SPATIAL_AXES)
    f_hat = np.moveaxis(f_hat, SPATIAL_AXES, (0, 1))
    out = np.zeros((N_new, N_new) + f_hat.shape[2:], dtype=complex)
    m = min(N, N_new) // 2
    idx_old = np.r_[0:m, N - m + 1:N]
    idx_new = np.r_[0:m, N_new - m + 1:N_new]
    out[np.ix_(idx_new, idx_new)] = f_hat[np.ix_(idx_old, idx_old)]
    out *= (N_new / N) ** 2
    out = np.moveaxis(out, (0, 1), SPATIAL_AXES)
    return np.fft.ifft2(out, axes=SPATIAL_AXES).real

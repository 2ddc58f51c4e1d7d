"""
Yang-Mills gradient flow on the Coulomb-gauge slice of a flat base.

The slice flow da/dt = -Pi_Gamma d_A^* F_A is split as da/dt = L a + N(a) with
L = -Delta_Gamma, diagonal in the ModeFrame, and integrated with second-order
exponential time differencing (Cox-Matthews ETD-RK2). The phi-functions of the
linear part are evaluated by contour means, which stay accurate at L = 0.
An explicit RK4 integrator is kept for cross-validation.
"""

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.settings import FlowConfigDefaults, ModuliConfig
from src.core.gaugefield import (
    Connection, FlatBase, curvature, energy_and_gradient, slice_residual,
)
from src.core.lattice import SpectralWorkspace, get_workspace, l2_norm
from src.exceptions import DidNotConverge, NotNearFlat, ParameterRangeError, StepRejected
from src.processors import moduli
from src.processors.decay import DecayFit, Quantity, fit_decay_series
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

INTEGRATORS = ("etd2", "rk4")
TRAJECTORY_COLUMNS = ["t", "energy", "grad_l2", "slice_residual", "dist_l2", "arclength"]


@dataclass
class FlowConfig:
    """Parameters of one slice-flow run"""
    initial: Connection
    t_max: float = FlowConfigDefaults.T_MAX
    grad_tol: float = FlowConfigDefaults.GRAD_TOL
    integrator: str = "etd2"
    dt0: float = FlowConfigDefaults.DT0
    dt_min: float = FlowConfigDefaults.DT_MIN
    dt_max: float = FlowConfigDefaults.DT_MAX
    rtol: float = FlowConfigDefaults.RTOL
    atol: float = FlowConfigDefaults.ATOL
    record_stride: int = FlowConfigDefaults.RECORD_STRIDE
    sample_times: Sequence[float] = ()
    max_steps: int = FlowConfigDefaults.MAX_STEPS
    track_holonomy: bool = False

    def __post_init__(self):
        if not self.t_max > 0:
            raise ParameterRangeError(f"t_max must be positive, got {self.t_max}")
        if not self.grad_tol > 0:
            raise ParameterRangeError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.integrator not in INTEGRATORS:
            raise ParameterRangeError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.record_stride < 1:
            raise ParameterRangeError(f"record_stride must be >= 1, got {self.record_stride}")
        if not 0 < self.dt_min <= self.dt_max:
            raise ParameterRangeError(f"Need 0 < dt_min <= dt_max, got {self.dt_min}, {self.dt_max}")

    @property
    def N(self) -> int:
        return self.initial.N

    @property
    def base(self) -> FlatBase:
        return self.initial.base


@dataclass
class FlowState:
    """Slice perturbation at time t, with its energy and slice gradient"""
    base: FlatBase
    a: np.ndarray
    t: float
    energy: float
    gradient: np.ndarray

    @property
    def grad_norm(self) -> float:
        return l2_norm(self.gradient)

    def connection(self) -> Connection:
        return Connection(self.base, self.a)


@dataclass
class Trajectory:
    """Sampled diagnostics of a flow run"""
    times: np.ndarray
    energy: np.ndarray
    grad_l2: np.ndarray
    slice_residual: np.ndarray
    dist_l2: np.ndarray
    arclength: np.ndarray
    dissipation: np.ndarray
    k_mean: np.ndarray  # (n, 2) K-constant part of a
    off_family: np.ndarray  # ||a - K-constant part||
    terminal: Connection
    converged: bool
    n_steps: int
    n_rejected: int
    holonomy_points: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.times)

    def require_converged(self) -> "Trajectory":
        if not self.converged:
            raise DidNotConverge(
                f"Flow stopped at t = {self.times[-1]:.6g} with ||grad|| = {self.grad_l2[-1]:.3e}",
                trajectory=self,
            )
        return self

    def homotopy_parameter(self) -> np.ndarray:
        """Reparameterized time s = 1 - exp(-t) in [0, 1)"""
        return -np.expm1(-self.times)

    def distance_to_limit(self) -> np.ndarray:
        """
        L2 distance of each sample to the limit, taken as the diagonal flat connection
        given by the K-constant part of the terminal perturbation.
        """
        limit = self.k_mean[-1]
        drift = np.linalg.norm(self.k_mean - limit, axis=1)
        return np.hypot(self.off_family, drift)

    def energy_identity_residual(self) -> float:
        """|int ||grad||^2 dt - (E(0) - E(T))|"""
        return float(abs(self.dissipation[-1] - (self.energy[0] - self.energy[-1])))

    def energy_identity_ok(self, rtol: float = FlowConfigDefaults.ENERGY_IDENTITY_RTOL) -> bool:
        return self.energy_identity_residual() <= rtol * max(self.energy[0], np.finfo(float).tiny)

    def to_frame(self, extended: bool = False) -> pd.DataFrame:
        frame = pd.DataFrame({
            "t": self.times,
            "energy": self.energy,
            "grad_l2": self.grad_l2,
            "slice_residual": self.slice_residual,
            "dist_l2": self.dist_l2,
            "arclength": self.arclength,
        }, columns=TRAJECTORY_COLUMNS)
        if extended:
            frame["dissipation"] = self.dissipation
            frame["homotopy_s"] = self.homotopy_parameter()
            frame["dist_to_limit"] = self.distance_to_limit()
            if self.holonomy_points is not None:
                frame["hol_alpha"] = self.holonomy_points[:, 0]
                frame["hol_beta"] = self.holonomy_points[:, 1]
        return frame

    def summary(self) -> Dict:
        return {
            "converged": bool(self.converged),
            "t_final": float(self.times[-1]),
            "energy_initial": float(self.energy[0]),
            "energy_final": float(self.energy[-1]),
            "grad_final": float(self.grad_l2[-1]),
            "arclength": float(self.arclength[-1]),
            "energy_identity_residual": self.energy_identity_residual(),
            "max_slice_residual": float(self.slice_residual.max()),
            "samples": int(len(self.times)),
            "steps": int(self.n_steps),
            "rejected_steps": int(self.n_rejected),
        }


def _contour_phi(z: np.ndarray, points: int) -> Tuple[np.ndarray, np.ndarray]:
    """phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2 for real z, by contour means"""
    roots = np.exp(1j * np.pi * (np.arange(points) + 0.5) / points)
    lr = z[..., None] + roots
    phi1 = ((np.exp(lr) - 1.0) / lr).mean(axis=-1).real
    phi2 = ((np.exp(lr) - 1.0 - lr) / lr ** 2).mean(axis=-1).real
    return phi1, phi2


def _log_mean(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Logarithmic mean (x - y)/(log x - log y); arithmetic mean when either end is 0 or x ~ y"""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    x, y = np.broadcast_arrays(np.atleast_1d(x), np.atleast_1d(y))
    out = np.array(0.5 * (x + y), dtype=float)
    mask = (x > 0) & (y > 0) & (np.abs(x - y) > 1e-6 * np.maximum(x, y))
    out[mask] = (x[mask] - y[mask]) / (np.log(x[mask]) - np.log(y[mask]))
    return out.reshape(shape)


class SliceFlow:
    """
    Slice-flow integrator for one flat base and grid.

    One instance per thread; it owns (or borrows) a SpectralWorkspace.
    """

    def __init__(self, base: FlatBase, N: int, integrator: str = "etd2",
                 workspace: Optional[SpectralWorkspace] = None,
                 rtol: float = FlowConfigDefaults.RTOL, atol: float = FlowConfigDefaults.ATOL,
                 contour_points: int = FlowConfigDefaults.CONTOUR_POINTS):
        if integrator not in INTEGRATORS:
            raise ParameterRangeError(f"integrator must be one of {INTEGRATORS}, got {integrator!r}")
        self.base = base
        self.N = N
        self.integrator = integrator
        self.rtol = rtol
        self.atol = atol
        self.workspace = workspace or get_workspace(N)
        self.frame = base.frame(self.workspace)
        self.contour_points = contour_points
        self._phi_cache: Dict[float, Tuple] = {}

        logger.debug(f"Slice flow at ({base.alpha:.6g}, {base.beta:.6g}), N={N}, "
                     f"integrator={integrator}, lambda_max={self.frame.lam_max:.4g}")

    @property
    def stability_limit(self) -> float:
        """Largest explicit RK4 step for the stiffest mode"""
        return FlowConfigDefaults.RK4_STABILITY / self.frame.lam_max

    # -- evaluation ---------------------------------------------------------

    def project(self, a: np.ndarray) -> np.ndarray:
        return self.frame.project_slice(a)

    def evaluate(self, a: np.ndarray, t: float = 0.0) -> FlowState:
        e, g = energy_and_gradient(Connection(self.base, a), self.workspace)
        return FlowState(self.base, a, t, e, g)

    def initial_state(self, A: Connection) -> FlowState:
        if A.base != self.base:
            A = A.rebase(self.base)
        return self.evaluate(self.project(A.a))

    def _norm_modes(self, w: np.ndarray, z: np.ndarray) -> float:
        return float(np.sqrt((np.sum(np.abs(w) ** 2) + np.sum(np.abs(z) ** 2)) / self.N ** 4))

    def _phi(self, dt: float):
        cached = self._phi_cache.get(dt)
        if cached is None:
            out = []
            for lam in (self.frame.lam_w, self.frame.lam_z):
                z = -dt * lam
                phi1, phi2 = _contour_phi(z, self.contour_points)
                out.append((np.exp(z), phi1, phi2))
            if len(self._phi_cache) > 64:
                self._phi_cache.clear()
            self._phi_cache[dt] = cached = tuple(out)
        return cached

    # -- stepping -----------------------------------------------------------

    def step(self, state: FlowState, dt: float) -> Tuple[FlowState, float]:
        """
        Advance one step.

        Returns:
            (new_state, scaled_error); the error is 0 for RK4

        Raises:
            StepRejected: the energy increased beyond the monotonicity guard
        """
        if self.integrator == "rk4":
            new = self._step_rk4(state, dt)
            err = 0.0
        else:
            new, err = self._step_etd2(state, dt)

        limit = state.energy * (1.0 + FlowConfigDefaults.ENERGY_RTOL) + FlowConfigDefaults.ENERGY_ATOL
        if new.energy > limit:
            raise StepRejected(
                f"Energy increased from {state.energy:.17g} to {new.energy:.17g} with dt = {dt:.3e}",
                energy_before=state.energy, energy_after=new.energy,
            )
        return new, err

    def _nonlinear_modes(self, state: FlowState):
        rw, rz = self.frame.to_modes(-state.gradient)
        aw, az = self.frame.to_modes(state.a)
        return rw + self.frame.lam_w * aw, rz + self.frame.lam_z * az, aw, az

    def _step_etd2(self, state: FlowState, dt: float) -> Tuple[FlowState, float]:
        (ew, p1w, p2w), (ez, p1z, p2z) = self._phi(dt)
        frame = self.frame

        nw, nz, aw, az = self._nonlinear_modes(state)
        w1 = ew * aw + dt * p1w * nw
        z1 = ez * az + dt * p1z * nz
        w1, z1 = frame.project_slice_modes(w1, z1)
        predictor = self.evaluate(frame.from_modes(w1, z1), state.t + dt)

        nw1, nz1, _, _ = self._nonlinear_modes(predictor)
        cw = dt * p2w * (nw1 - nw)
        cz = dt * p2z * (nz1 - nz)
        cw, cz = frame.project_slice_modes(cw, cz)
        new = self.evaluate(frame.from_modes(w1 + cw, z1 + cz), state.t + dt)

        scale = self.atol + self.rtol * max(l2_norm(state.a), l2_norm(new.a))
        err = self._norm_modes(cw, cz) / scale
        return new, err

    def _step_rk4(self, state: FlowState, dt: float) -> FlowState:
        def rhs(a):
            return -self.evaluate(a).gradient

        k1 = -state.gradient
        k2 = rhs(state.a + 0.5 * dt * k1)
        k3 = rhs(state.a + 0.5 * dt * k2)
        k4 = rhs(state.a + dt * k3)
        a_new = self.project(state.a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        return self.evaluate(a_new, state.t + dt)

    # -- diagnostics --------------------------------------------------------

    def _dissipation(self, g0: np.ndarray, g1: np.ndarray, dt: float) -> float:
        """int ||grad||^2 over one step, per-mode logarithmic-mean rule"""
        total = 0.0
        for c0, c1 in zip(self.frame.to_modes(g0), self.frame.to_modes(g1)):
            p0 = np.sum(np.abs(c0) ** 2, axis=0)
            p1 = np.sum(np.abs(c1) ** 2, axis=0)
            total += float(np.sum(_log_mean(p0, p1)))
        return dt * total / self.N ** 4

    def _k_mean(self, a: np.ndarray) -> np.ndarray:
        return a[..., 2].mean(axis=(1, 2))

    def _off_family(self, a: np.ndarray, k_mean: np.ndarray) -> float:
        b = a.copy()
        b[..., 2] -= k_mean[:, None, None]
        return l2_norm(b)

    # -- driver -------------------------------------------------------------

    def run(self, config: FlowConfig) -> Trajectory:
        """
        Integrate until ||grad|| <= grad_tol or t = t_max.

        The returned trajectory is flagged converged or not; call
        Trajectory.require_converged() to turn a timeout into DidNotConverge.
        """
        self.rtol = config.rtol
        self.atol = config.atol

        state = self.initial_state(config.initial)
        pending = sorted(t for t in config.sample_times if 0 < t <= config.t_max)

        rows: Dict[str, List] = {name: [] for name in
                                 ("t", "energy", "grad", "residual", "dist", "arc", "diss", "k", "off", "hol")}
        arclength = 0.0
        dissipation = 0.0

        def record(s: FlowState):
            A = s.connection()
            k = self._k_mean(s.a)
            rows["t"].append(s.t)
            rows["energy"].append(s.energy)
            rows["grad"].append(s.grad_norm)
            rows["residual"].append(slice_residual(A, self.workspace))
            rows["dist"].append(l2_norm(s.a))
            rows["arc"].append(arclength)
            rows["diss"].append(dissipation)
            rows["k"].append(k)
            rows["off"].append(self._off_family(s.a, k))
            if config.track_holonomy:
                point = moduli.to_pillowcase(moduli.holonomy(A, self.workspace), tol=None)
                rows["hol"].append((point.alpha, point.beta))

        record(state)

        cap = config.dt_max
        if self.integrator == "rk4":
            cap = min(cap, self.stability_limit)
        dt = min(config.dt0, cap)
        steps = rejected = 0
        converged = False

        while True:
            if state.grad_norm <= config.grad_tol:
                converged = True
                break
            if state.t >= config.t_max or steps >= config.max_steps:
                break

            target = pending[0] if pending else config.t_max
            h = min(dt, target - state.t, config.t_max - state.t)
            landing = h >= target - state.t

            try:
                new, err = self.step(state, h)
            except StepRejected as e:
                logger.debug(str(e))
                rejected += 1
                dt = 0.5 * h
                if dt < config.dt_min:
                    logger.error(f"Step size underflow at t = {state.t:.6g} (dt = {dt:.3e})")
                    break
                continue

            if err > 1.0:
                rejected += 1
                dt = h * max(FlowConfigDefaults.MIN_FACTOR, FlowConfigDefaults.SAFETY * err ** -0.5)
                if dt < config.dt_min:
                    logger.error(f"Step size underflow at t = {state.t:.6g} (dt = {dt:.3e})")
                    break
                continue

            dissipation += self._dissipation(state.gradient, new.gradient, h)
            arclength += h * float(_log_mean(state.grad_norm, new.grad_norm))
            if landing:
                new.t = target
                if pending and target == pending[0]:
                    pending.pop(0)
            state = new
            steps += 1

            if steps % config.record_stride == 0 or landing:
                record(state)

            if landing:
                # h was clipped to hit a checkpoint; keep the controller's own step
                dt = min(dt, cap)
                continue
            if err > 0:
                factor = min(FlowConfigDefaults.MAX_FACTOR,
                             max(FlowConfigDefaults.MIN_FACTOR, FlowConfigDefaults.SAFETY * err ** -0.5))
            else:
                factor = FlowConfigDefaults.MAX_FACTOR
            dt = min(h * factor, cap)

        if rows["t"][-1] != state.t:
            record(state)

        trajectory = Trajectory(
            times=np.asarray(rows["t"]),
            energy=np.asarray(rows["energy"]),
            grad_l2=np.asarray(rows["grad"]),
            slice_residual=np.asarray(rows["residual"]),
            dist_l2=np.asarray(rows["dist"]),
            arclength=np.asarray(rows["arc"]),
            dissipation=np.asarray(rows["diss"]),
            k_mean=np.asarray(rows["k"]),
            off_family=np.asarray(rows["off"]),
            terminal=state.connection(),
            converged=converged,
            n_steps=steps,
            n_rejected=rejected,
            holonomy_points=np.asarray(rows["hol"]) if config.track_holonomy else None,
        )

        status = "converged" if converged else "stopped"
        logger.info(f"Flow {status} at t = {state.t:.6g} after {steps} steps ({rejected} rejected): "
                    f"E = {state.energy:.3e}, ||grad|| = {state.grad_norm:.3e}")
        return trajectory


def step(state: FlowState, dt: float, integrator: str = "etd2") -> FlowState:
    """One slice-flow step from state (see SliceFlow.step)"""
    flow = SliceFlow(state.base, state.a.shape[1], integrator)
    new, _ = flow.step(state, dt)
    return new


def run(config: FlowConfig, workspace: Optional[SpectralWorkspace] = None) -> Trajectory:
    flow = SliceFlow(config.base, config.N, config.integrator, workspace)
    return flow.run(config)


def fit_decay(traj: Trajectory, quantity: Quantity = "distance") -> DecayFit:
    """Decay regime of the energy or of the distance to the limit along a trajectory"""
    if quantity == "energy":
        values = traj.energy
    elif quantity == "distance":
        values = traj.distance_to_limit()
    else:
        raise ParameterRangeError(f"quantity must be 'energy' or 'distance', got {quantity!r}")
    return fit_decay_series(traj.times, values, quantity)


def retract(initial: Connection, config: Optional[FlowConfig] = None,
            curvature_tol: float = FlowConfigDefaults.CURVATURE_TOL,
            holonomy_tol: Optional[float] = None,
            workspace: Optional[SpectralWorkspace] = None) -> Tuple[moduli.PillowcasePoint, Trajectory]:
    """
    Flow a near-flat connection to a flat one and read off its pillowcase point.

    Raises:
        NotNearFlat: initial curvature above the retraction threshold, or terminal
            ||F|| above 10 * curvature_tol
        DidNotConverge: the flow reached t_max
        NonCommuting: terminal holonomies do not commute within holonomy_tol
    """
    ws = workspace or get_workspace(initial.N)
    f0 = l2_norm(curvature(initial, ws))
    if f0 > FlowConfigDefaults.RETRACT_CURVATURE_EPS:
        raise NotNearFlat(f"Initial ||F|| = {f0:.3e} exceeds the retraction threshold "
                          f"{FlowConfigDefaults.RETRACT_CURVATURE_EPS:.3e}")

    if config is None:
        config = FlowConfig(initial=initial)
    elif config.initial is not initial:
        config = replace(config, initial=initial)

    trajectory = run(config, ws).require_converged()
    terminal_f = l2_norm(curvature(trajectory.terminal, ws))
    if terminal_f > 10.0 * curvature_tol:
        raise NotNearFlat(f"Terminal ||F|| = {terminal_f:.3e} exceeds {10.0 * curvature_tol:.1e}")

    rho = moduli.holonomy(trajectory.terminal, ws)
    tol = ModuliConfig.HOLONOMY_TOL if holonomy_tol is None else holonomy_tol
    point = moduli.to_pillowcase(rho, tol)
    logger.info(f"Retracted to pillowcase point ({point.alpha:.6f}, {point.beta:.6f}), "
                f"terminal ||F|| = {terminal_f:.3e}")
    return point, trajectory

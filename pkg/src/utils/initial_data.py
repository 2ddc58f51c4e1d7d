"""
Initial data for flows and scans: seeded random perturbations and named rays.

Random perturbations are drawn mode by mode on |k|_inf <= 2, independently of
the grid, so the same seed gives the same continuum field at every N.
"""

from typing import Callable, Dict

import numpy as np

from src.core import lie
from src.core.gaugefield import THETA, Connection, FlatBase, coulomb_project, covariant_d
from src.core.lattice import Grid, get_workspace, sobolev_norm
from src.exceptions import ExperimentConfigError
from src.utils.io import read_snapshot
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

MAX_MODE = 2
MORSE_BOTT_BASE = FlatBase(np.pi / 2, np.pi / 2)


def random_perturbation(N: int, amplitude: float, seed: int = 0, base: FlatBase = THETA,
                        max_mode: int = MAX_MODE) -> Connection:
    """
    Smooth random slice perturbation of Gamma with ||a||_{W^{1,2}} = amplitude.

    Args:
        N: grid size
        amplitude: target W^{1,2} norm of a
        seed: 64-bit seed; fully determines the draw
        base: flat base Gamma
        max_mode: largest |k|_inf in the draw
    """
    rng = np.random.default_rng(seed)
    modes = np.arange(-max_mode, max_mode + 1)
    n = len(modes)
    cos_coeff = rng.standard_normal((n, n, 2, 3))
    sin_coeff = rng.standard_normal((n, n, 2, 3))

    x, y = Grid(N).coordinates()
    a = np.zeros((2, N, N, 3))
    for p, mx in enumerate(modes):
        for q, my in enumerate(modes):
            phase = 2.0 * np.pi * (mx * x + my * y)
            a += np.cos(phase)[None, :, :, None] * cos_coeff[p, q][:, None, None, :]
            a += np.sin(phase)[None, :, :, None] * sin_coeff[p, q][:, None, None, :]

    ws = get_workspace(N)
    a = coulomb_project(a, base, ws)
    size = sobolev_norm(a, 2, 1, ws)
    if size > 0:
        a *= amplitude / size
    logger.debug(f"Random perturbation: N={N}, seed={seed}, W12 amplitude {amplitude:g}")
    return Connection(base, a)


def constant_form(xi, eta, N: int) -> np.ndarray:
    """Constant one-form xi dx + eta dy"""
    a = np.zeros((2, N, N, 3))
    a[0] = np.asarray(xi, dtype=float)
    a[1] = np.asarray(eta, dtype=float)
    return a


def product_ray(t: float, N: int) -> Connection:
    """A_t = t (I dx + J dy) at Theta, with F = 2 t^2 K"""
    return Connection(THETA, constant_form(t * lie.I, t * lie.J, N))


def morse_bott_ray(t: float, N: int, base: FlatBase = MORSE_BOTT_BASE) -> Connection:
    """
    Gamma + t (d_Gamma chi + cos(2 pi y) K dx) with chi = sin(2 pi x) I, at a regular point.

    The d_Gamma-exact part is a non-abelian gauge direction, so the nearest flat
    connection is only found after gauge fixing; the K part is a non-harmonic slice
    direction transverse to the flat locus. dist and ||F|| are both linear in t.
    """
    x, y = Grid(N).coordinates()
    chi = np.zeros((N, N, 3))
    chi[..., 0] = np.sin(2.0 * np.pi * x)
    a = np.array(covariant_d(Connection.flat(base, N), chi))
    a[0, ..., 2] += np.cos(2.0 * np.pi * y)
    return Connection(base, t * a)


RAYS: Dict[str, Callable[..., Connection]] = {
    "product": product_ray,
    "morse_bott": morse_bott_ray,
}


def get_ray(name: str, N: int) -> Callable[[float], Connection]:
    if name not in RAYS:
        raise ExperimentConfigError(f"unknown ray {name!r}; available: {sorted(RAYS)}", key="ray")
    ray = RAYS[name]
    return lambda t: ray(t, N)


def parse_init(spec: str, N: int, base: FlatBase = THETA, seed: int = 0) -> Connection:
    """
    Build initial data from a spec string.

        flat                  Gamma itself
        random:AMP            seeded random slice perturbation of Gamma
        ray:NAME:T            named ray at parameter T
        snapshot:PATH         connection snapshot file

    Raises:
        ExperimentConfigError: malformed spec (key 'init')
    """
    kind, _, rest = str(spec).partition(":")
    try:
        if kind == "flat":
            return Connection.flat(base, N)
        if kind == "random":
            return random_perturbation(N, float(rest), seed=seed, base=base)
        if kind == "ray":
            name, _, t = rest.partition(":")
            return get_ray(name, N)(float(t))
        if kind == "snapshot":
            return read_snapshot(rest)
    except ValueError as e:
        if isinstance(e, ExperimentConfigError):
            raise
        raise ExperimentConfigError(f"cannot parse initial data {spec!r}: {e}", key="init") from e
    raise ExperimentConfigError(f"unknown initial data kind {kind!r} in {spec!r}", key="init")

"""
su(2) / SU(2) kernel.

Algebra elements are coordinate triples (c_I, c_J, c_K) in the orthonormal
basis {I, J, K} with [I, J] = 2K, [J, K] = 2I, [K, I] = 2J. Group elements are
unit quaternions (w, x, y, z) under 1, I, J, K <-> 1, i, j, k, so that
w + xI + yJ + zK is the 2x2 matrix [[w + iz, -y + ix], [y + ix, w - iz]].

Every function works on stacked arrays: the coordinate axis is the last one,
leading axes broadcast. Nothing here holds state.
"""

import numpy as np
from numpy.typing import ArrayLike, NDArray

AlgebraElement = NDArray[np.float64]  # (..., 3)
GroupElement = NDArray[np.float64]  # (..., 4)

I = np.array([1.0, 0.0, 0.0])
J = np.array([0.0, 1.0, 0.0])
K = np.array([0.0, 0.0, 1.0])
BASIS = np.stack([I, J, K])

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def bracket(xi: ArrayLike, eta: ArrayLike) -> AlgebraElement:
    """Lie bracket in coordinates: [xi, eta] = 2 xi x eta"""
    return 2.0 * np.cross(xi, eta)


def inner(xi: ArrayLike, eta: ArrayLike) -> NDArray[np.float64]:
    """Ad-invariant inner product (-1/2 Killing form); the basis is orthonormal"""
    return np.sum(np.asarray(xi) * np.asarray(eta), axis=-1)


def norm(xi: ArrayLike) -> NDArray[np.float64]:
    return np.sqrt(inner(xi, xi))


def exponential(xi: ArrayLike) -> GroupElement:
    """
    exp(theta n) = cos(theta) + sin(theta) n for unit n in span{I, J, K}

    Args:
        xi: algebra element(s), shape (..., 3)

    Returns:
        Unit quaternion(s), shape (..., 4)
    """
    xi = np.asarray(xi, dtype=float)
    theta = norm(xi)
    # sin(theta)/theta, finite at 0
    scale = np.sinc(theta / np.pi)
    q = np.empty(xi.shape[:-1] + (4,))
    q[..., 0] = np.cos(theta)
    q[..., 1:] = scale[..., None] * xi
    return q


def logarithm(q: ArrayLike) -> AlgebraElement:
    """Principal logarithm, rotation angle in [0, pi]"""
    q = np.asarray(q, dtype=float)
    v = q[..., 1:]
    vnorm = norm(v)
    theta = np.arctan2(vnorm, q[..., 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(vnorm > 1e-300, theta / np.where(vnorm > 1e-300, vnorm, 1.0), 1.0)
    return scale[..., None] * v


def multiply(p: ArrayLike, q: ArrayLike, renormalize: bool = True) -> GroupElement:
    """Hamilton product p q, renormalized to the unit sphere"""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, pv = p[..., :1], p[..., 1:]
    qw, qv = q[..., :1], q[..., 1:]
    w = pw * qw - np.sum(pv * qv, axis=-1, keepdims=True)
    v = pw * qv + qw * pv + np.cross(pv, qv)
    out = np.concatenate([w, v], axis=-1)
    if renormalize:
        out = normalize(out)
    return out


def conjugate(q: ArrayLike) -> GroupElement:
    q = np.array(q, dtype=float)
    q[..., 1:] *= -1.0
    return q


def inverse(q: ArrayLike) -> GroupElement:
    """Inverse of a unit quaternion (its conjugate)"""
    return conjugate(q)


def normalize(q: ArrayLike) -> GroupElement:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def adjoint(g: ArrayLike, xi: ArrayLike) -> AlgebraElement:
    """
    Ad(g) xi = g xi g^-1 in I, J, K coordinates.

    For g = (w, v) this is xi + 2w (v x xi) + 2 v x (v x xi).
    """
    g = np.asarray(g, dtype=float)
    xi = np.asarray(xi, dtype=float)
    w = g[..., :1]
    v = g[..., 1:]
    t = np.cross(v, xi)
    return xi + 2.0 * w * t + 2.0 * np.cross(v, t)


def commutator(p: ArrayLike, q: ArrayLike) -> GroupElement:
    """Group commutator p q p^-1 q^-1"""
    return multiply(multiply(p, q), multiply(inverse(p), inverse(q)))


def distance_to_identity(q: ArrayLike) -> NDArray[np.float64]:
    """Quaternion (Frobenius/sqrt2) norm of q - 1"""
    q = np.asarray(q, dtype=float)
    return np.linalg.norm(q - IDENTITY, axis=-1)


def to_matrix(q: ArrayLike) -> NDArray[np.complex128]:
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    m[..., 0, 0] = w + 1j * z
    m[..., 0, 1] = -y + 1j * x
    m[..., 1, 0] = y + 1j * x
    m[..., 1, 1] = w - 1j * z
    return m


def from_matrix(m: ArrayLike) -> GroupElement:
    m = np.asarray(m, dtype=complex)
    q = np.empty(m.shape[:-2] + (4,))
    q[..., 0] = 0.5 * (m[..., 0, 0] + m[..., 1, 1]).real
    q[..., 3] = 0.5 * (m[..., 0, 0] - m[..., 1, 1]).imag
    q[..., 1] = 0.5 * (m[..., 0, 1] + m[..., 1, 0]).imag
    q[..., 2] = 0.5 * (m[..., 1, 0] - m[..., 0, 1]).real
    return q


def algebra_to_matrix(xi: ArrayLike) -> NDArray[np.complex128]:
    """Matrix of xI + yJ + zK (zero scalar part), traceless skew-Hermitian"""
    xi = np.asarray(xi, dtype=float)
    q = np.concatenate([np.zeros(xi.shape[:-1] + (1,)), xi], axis=-1)
    return to_matrix(q)


def eigenphase(q: ArrayLike) -> NDArray[np.float64]:
    """Angle theta in [0, pi] with eigenvalues exp(+-i theta)"""
    q = np.asarray(q, dtype=float)
    return np.arctan2(norm(q[..., 1:]), q[..., 0])

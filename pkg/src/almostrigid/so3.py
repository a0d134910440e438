"""Rotation-group primitives: hat/vee, Rodrigues exponential, adjoint actions.

Vectors are plain numpy arrays of shape (3,); rotations are 3x3 arrays.
All functions are pure and safe to call concurrently.
"""

import numpy as np

# Skewness is checked on raw entries; constructed inputs are exact up to rounding.
SKEW_ATOL = 1e-14
# Rotation validity must survive ~1e6 integrator steps with periodic re-orthonormalization.
ROTATION_TOL = 1e-12


def hat(v):
    """Map a 3-vector to the skew matrix with hat(v) @ w == cross(v, w)."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee(S):
    """Inverse of hat. Rejects input that is not skew-symmetric within 1e-14."""
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3) or np.abs(S + S.T).max() > SKEW_ATOL:
        raise ValueError("vee: input is not skew-symmetric within 1e-14 absolute")
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def cross3(a, b):
    """Cross product on (..., 3) arrays; cheaper than np.cross for small operands."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack((ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx), axis=-1)


def exp_so3(v):
    """Rotation by ||v|| radians about v/||v||, by the Rodrigues formula.

    Below ||v|| = 1e-6 the sin(t)/t and (1 - cos t)/t^2 coefficients switch to
    two-term Taylor expansions, which keeps the map accurate through zero.
    """
    v = np.asarray(v, dtype=float)
    t2 = float(v @ v)
    theta = np.sqrt(t2)
    if theta < 1e-6:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / t2
    V = hat(v)
    return np.eye(3) + a * V + b * (V @ V)


def pairing(a, b):
    """Half-trace form on the skew images of a and b; equals the dot product a . b."""
    A = hat(a)
    B = hat(b)
    return 0.5 * float(np.trace(A.T @ B))


def adjoint(R, v):
    """Adjoint action of a rotation on a 3-vector: R @ v, and hat(R v) = R hat(v) R^T."""
    return np.asarray(R, dtype=float) @ np.asarray(v, dtype=float)


def coadjoint(R, pi):
    """Coadjoint action on momenta; under the dot-product pairing it is again R @ pi."""
    return np.asarray(R, dtype=float) @ np.asarray(pi, dtype=float)


def is_rotation(R, tol=ROTATION_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    if np.abs(R.T @ R - np.eye(3)).max() > tol:
        return False
    return abs(float(np.linalg.det(R)) - 1.0) <= tol


def orthonormalize(R):
    """Project a near-rotation back onto SO(3) by modified Gram-Schmidt on columns."""
    R = np.asarray(R, dtype=float)
    q0 = R[:, 0] / np.sqrt(R[:, 0] @ R[:, 0])
    q1 = R[:, 1] - (q0 @ R[:, 1]) * q0
    q1 = q1 / np.sqrt(q1 @ q1)
    # third column from the cross product, so the result is right-handed by construction
    q2 = cross3(q0, q1)
    return np.column_stack((q0, q1, q2))

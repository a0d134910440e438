"""Shared numerical kernels: finite differences, a Jacobi eigensolver, one-step
integrators, and uniformly sampled time windows.

Everything here is a pure function; grid evaluations may run in parallel as
long as reductions keep the sample order.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import so3

# Balance truncation against rounding at scalar scale ~1.
DEFAULT_FD_STEP = 1e-5
DEFAULT_THIRD_FD_STEP = 1e-3


class NumericsError(RuntimeError):
    """A kernel met a non-finite value or failed a numerical contract."""


@dataclass(frozen=True)
class TimeWindow:
    """Uniformly sampled interval [t0, t1].

    Bounds over [t0, inf) are realized by these samples plus one evaluation at
    a schedule's declared limit; the tail itself is never enumerated.
    """

    t0: float
    t1: float
    samples: int

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.t1)):
            raise ValueError("TimeWindow endpoints must be finite")
        if not self.t0 < self.t1:
            raise ValueError("TimeWindow requires t0 < t1")
        if int(self.samples) != self.samples or self.samples < 2:
            raise ValueError("TimeWindow requires an integer samples >= 2")

    def times(self):
        return np.linspace(self.t0, self.t1, int(self.samples))


def _eval_scalar(f, x):
    y = float(f(x))
    if not math.isfinite(y):
        raise NumericsError(
            f"non-finite value {y} at stencil point {np.asarray(x).tolist()}")
    return y


def fd_gradient(f, x, h=DEFAULT_FD_STEP):
    """Central-difference gradient of a scalar field, componentwise."""
    if h <= 0:
        raise ValueError("fd_gradient requires h > 0")
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        g[i] = (_eval_scalar(f, x + e) - _eval_scalar(f, x - e)) / (2.0 * h)
    return g


def fd_hessian(f, x, h=DEFAULT_FD_STEP):
    """Second-difference Hessian, explicitly symmetrized."""
    if h <= 0:
        raise ValueError("fd_hessian requires h > 0")
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    f0 = _eval_scalar(f, x)
    steps = [np.zeros(n) for _ in range(n)]
    for i in range(n):
        steps[i][i] = h
    for i in range(n):
        ei = steps[i]
        H[i, i] = (_eval_scalar(f, x + ei) - 2.0 * f0 + _eval_scalar(f, x - ei)) / (h * h)
        for j in range(i + 1, n):
            ej = steps[j]
            v = (_eval_scalar(f, x + ei + ej) - _eval_scalar(f, x + ei - ej)
                 - _eval_scalar(f, x - ei + ej) + _eval_scalar(f, x - ei - ej)) / (4.0 * h * h)
            H[i, j] = v
            H[j, i] = v
    return 0.5 * (H + H.T)


def _batch_eval(f, pts):
    """Evaluate f row-wise on an (m, n) stack, in one call when f supports it."""
    m, n = pts.shape
    if m != n:
        try:
            y = np.asarray(f(pts), dtype=float)
        except Exception:
            y = None
        if y is not None and y.shape == (m,):
            if not np.all(np.isfinite(y)):
                raise NumericsError("non-finite value in stencil evaluation")
            return y
    return np.array([_eval_scalar(f, p) for p in pts])


def _third_stencils(n, h):
    """Offset/weight stencils covering every third-order multi-index once."""
    out = []
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        out.append(([(2.0 * ei, 1.0), (ei, -2.0), (-ei, 2.0), (-2.0 * ei, -1.0)],
                    2.0 * h ** 3))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            ei = np.zeros(n)
            ei[i] = h
            ej = np.zeros(n)
            ej[j] = h
            out.append(([(ei + ej, 1.0), (ej, -2.0), (-ei + ej, 1.0),
                         (ei - ej, -1.0), (-ej, 2.0), (-ei - ej, -1.0)],
                        2.0 * h ** 3))
    for i, j, k in itertools.combinations(range(n), 3):
        base = np.zeros(n)
        stencil = []
        for si, sj, sk in itertools.product((1.0, -1.0), repeat=3):
            off = base.copy()
            off[i] = si * h
            off[j] = sj * h
            off[k] = sk * h
            stencil.append((off, si * sj * sk))
        out.append((stencil, 8.0 * h ** 3))
    return out


def third_derivative_bound(f, center, radius, grid, h=DEFAULT_THIRD_FD_STEP):
    """Bound (1/3!) max |D^a f| over all third-order multi-indices a, estimated
    by third central differences on a lattice restricted to the ball."""
    center = np.asarray(center, dtype=float)
    n = center.size

    if grid < 1 or int(grid) != grid:
        raise ValueError("third_derivative_bound requires an integer grid >= 1")
    axis = np.array([0.0]) if grid == 1 else np.linspace(-radius, radius, int(grid))
    mesh = np.array(list(itertools.product(axis, repeat=n)))
    keep = (mesh * mesh).sum(axis=1) <= radius * radius * (1.0 + 1e-12)
    pts = center + mesh[keep]
    worst = 0.0
    for stencil, denom in _third_stencils(n, h):
        acc = np.zeros(len(pts))
        for off, w in stencil:
            acc += w * _batch_eval(f, pts + off)
        worst = max(worst, float(np.abs(acc).max()) / denom)
    return worst / 6.0


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # orthonormal columns, matched to eigenvalues


def sym_eigen(A):
    """Full spectrum of a small symmetric matrix by cyclic Jacobi sweeps.

    Eigenvalues ascend. Each eigenvector has its first nonzero component
    positive, so ties and repeated calls stay deterministic. Convergence is
    declared when the off-diagonal Frobenius norm drops below 1e-13 ||A||.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("sym_eigen expects a square matrix")
    n = A.shape[0]
    norm = float(np.sqrt((A * A).sum()))
    if norm > 0.0 and np.abs(A - A.T).max() > 1e-12 * norm:
        raise ValueError("sym_eigen: matrix is not symmetric to 1e-12 relative")
    a = 0.5 * (A + A.T)
    v = np.eye(n)
    for _ in range(100):
        # sum the off-diagonal squares directly; subtracting the diagonal from
        # the total norm would cancel catastrophically at this threshold
        off2 = float(((a - np.diag(np.diag(a))) ** 2).sum())
        if off2 <= (1e-13 * norm) ** 2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                g = np.eye(n)
                g[p, p] = c
                g[q, q] = c
                g[p, q] = s
                g[q, p] = -s
                a = g.T @ a @ g
                v = v @ g
    else:
        raise NumericsError("sym_eigen: Jacobi iteration failed to converge")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = v[:, order]
    for j in range(n):
        col = v[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0.0:
            v[:, j] = -col
    return Spectrum(w, v)


def rk4_step(field, t, x, dt):
    """One classical Runge-Kutta step; x may be any float array shape the field preserves."""
    if dt <= 0:
        raise ValueError("rk4_step requires dt > 0")
    x = np.asarray(x, dtype=float)
    half = 0.5 * dt
    # blow-ups surface as the explicit error below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = np.asarray(field(t, x), dtype=float)
        k2 = np.asarray(field(t + half, x + half * k1), dtype=float)
        k3 = np.asarray(field(t + half, x + half * k2), dtype=float)
        k4 = np.asarray(field(t + dt, x + dt * k3), dtype=float)
        out = x + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(out)):
        raise NumericsError(f"rk4_step: non-finite state after step at t={t}")
    return out


def _dexpinv(u, w):
    # inverse differential of exp on so(3), truncated after the double-cross
    # term; exact through the order a 4th-order method needs
    c = so3.cross3(u, w)
    return w + 0.5 * c + so3.cross3(u, c) / 12.0


def rkmk4_attitude_step(omega, t, Lam, dt):
    """One Runge-Kutta-Munthe-Kaas step for Lam' = Lam @ hat(omega(t)).

    The increment lives in the Lie algebra and is pushed through exp_so3, so
    the output is orthonormal to rounding without re-orthonormalization.
    """
    if dt <= 0:
        raise ValueError("rkmk4_attitude_step requires dt > 0")
    half = 0.5 * dt
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = np.asarray(omega(t), dtype=float)
        k2 = _dexpinv(half * k1, np.asarray(omega(t + half), dtype=float))
        k3 = _dexpinv(half * k2, np.asarray(omega(t + half), dtype=float))
        k4 = _dexpinv(dt * k3, np.asarray(omega(t + dt), dtype=float))
        theta = (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(theta)):
        raise NumericsError(f"rkmk4_attitude_step: non-finite increment at t={t}")
    return np.asarray(Lam, dtype=float) @ so3.exp_so3(theta)

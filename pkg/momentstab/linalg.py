# momentstab/linalg.py

"""
Dense real linear-algebra kernels.

Matrices are float64 numpy arrays.  A "SymMatrix" is just a square
array that is exactly symmetric; `he` and `symmetrize` are the only
ways this package produces one from a general matrix.

vec() stacks columns, which fixes the second-moment lifting formula
to kron(A, A):

    >>> import numpy as np
    >>> a = np.array([[1., 2.], [0., 3.]])
    >>> x = np.array([[2., 1.], [1., 4.]])
    >>> bool(np.allclose(vec(a @ x @ a.T), kron(a, a) @ vec(x)))
    True
    >>> spectral_radius(np.array([[0.5, 1.0], [0.0, 0.5]]))
    0.5
    >>> sym_eig_extremes(np.diag([-2.0, 3.0]))
    (-2.0, 3.0)
"""

import logging
import math

import numpy as np
from numpy.typing import NDArray

from .common import ConvergenceError, DimensionError

logger = logging.getLogger("momentstab.linalg")

Matrix = NDArray[np.float64]
SymMatrix = NDArray[np.float64]

QR_SWEEPS_PER_DIM = 100
JACOBI_MAX_SWEEPS = 30
POWER_MAX_ITER = 5000


def as_matrix(m, name='matrix'):
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError('%s must be two-dimensional, got shape %s'
                             % (name, a.shape))
    if not np.all(np.isfinite(a)):
        raise DimensionError('%s has non-finite entries' % name)
    return a


def _square(m, name='matrix'):
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError('%s must be square, got %dx%d'
                             % ((name,) + a.shape))
    return a


def kron(a, b):
    """
    Kronecker product; block (i, j) of the result is a[i, j] * b.

        >>> kron([[2.0]], [[3.0]])
        array([[6.]])
    """
    return np.kron(as_matrix(a, 'a'), as_matrix(b, 'b'))


def vec(x):
    """Column-stacking vectorization."""
    return np.asarray(x, dtype=np.float64).reshape(-1, order='F')


def unvec(v, n):
    """Inverse of vec for an n x n matrix."""
    v = np.asarray(v, dtype=np.float64)
    if v.size != n * n:
        raise DimensionError('cannot reshape %d entries into %dx%d'
                             % (v.size, n, n))
    return v.reshape((n, n), order='F')


def he(m):
    """
    He(m) = m + m^T.

        >>> he([[0.0, 1.0], [0.0, 0.0]])
        array([[0., 1.],
               [1., 0.]])
    """
    a = _square(m)
    return a + a.T


def symmetrize(m):
    a = _square(m)
    return 0.5 * (a + a.T)


########################################
## Symmetric eigenproblems (cyclic Jacobi)
########################################

def _off_diagonal(a):
    return math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))


def sym_eig(s, max_sweeps=JACOBI_MAX_SWEEPS):
    """
    Eigen-decomposition of a symmetric matrix by cyclic Jacobi
    rotations.  Returns (eigenvalues ascending, eigenvectors as
    columns).  Only the upper triangle of `s` is trusted; the input is
    symmetrized first.
    """
    a = symmetrize(s).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    tol = 1e-14 * n * scale
    for _ in range(max_sweeps):
        off = _off_diagonal(a)
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                rot_p = a[:, p].copy()
                rot_q = a[:, q].copy()
                a[:, p] = c * rot_p - sn * rot_q
                a[:, q] = sn * rot_p + c * rot_q
                rot_p = a[p, :].copy()
                rot_q = a[q, :].copy()
                a[p, :] = c * rot_p - sn * rot_q
                a[q, :] = sn * rot_p + c * rot_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    else:
        off = _off_diagonal(a)
        if off > tol:
            raise ConvergenceError(
                'Jacobi did not converge in %d sweeps (off-diagonal %.3e)'
                % (max_sweeps, off))
    w = a.diagonal().copy()
    order = np.argsort(w, kind='stable')
    return w[order], v[:, order]


def sym_eig_extremes(s):
    """Smallest and largest eigenvalue of a symmetric matrix."""
    w, _ = sym_eig(s)
    return float(w[0]), float(w[-1])


########################################
## General eigenvalues (Hessenberg + Francis QR)
########################################

def hessenberg(m):
    """
    Householder reduction to upper Hessenberg form.  The result is
    orthogonally similar to `m`.
    """
    h = _square(m).copy()
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        u = x
        u[0] += math.copysign(alpha, x[0])
        u /= np.linalg.norm(u)
        h[k + 1:, k:] -= 2.0 * np.outer(u, u @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ u, u)
        h[k + 2:, k] = 0.0
    return h


def _balance(a):
    """Diagonal similarity scaling to equalize row and column norms."""
    n = a.shape[0]
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    a[i, :] /= f
                    a[:, i] *= f
    return a


def _hqr(hess, max_sweeps):
    """
    Eigenvalues of an upper Hessenberg matrix by the Francis
    double-shift QR iteration with 1x1 / 2x2 deflation.  Works on a
    1-based copy so the classic index arithmetic stays readable.
    """
    n = hess.shape[0]
    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = hess
    wr = np.zeros(n + 1)
    wi = np.zeros(n + 1)
    anorm = 0.0
    for i in range(1, n + 1):
        anorm += np.sum(np.abs(a[i, max(i - 1, 1):]))
    nn = n
    t = 0.0
    sweeps = 0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            for ll in range(nn, 1, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + math.copysign(z, p)
                        wr[nn - 1] = wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = wi[nn] = 0.0
                    else:
                        wr[nn - 1] = wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    sweeps += 1
                    if sweeps > max_sweeps:
                        raise ConvergenceError(
                            'QR iteration exceeded %d sweeps' % max_sweeps)
                    if its in (10, 20):
                        # exceptional shift
                        t += x
                        for i in range(1, nn + 1):
                            a[i, i] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        y = x = 0.75 * s
                        w = -0.4375 * s * s
                    its += 1
                    m = nn - 2
                    while m >= l:
                        z = a[m, m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                        q = a[m + 1, m + 1] - z - r - s
                        r = a[m + 2, m + 1]
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                        if u + v == v:
                            break
                        m -= 1
                    for i in range(m + 2, nn + 1):
                        a[i, i - 2] = 0.0
                        if i != m + 2:
                            a[i, i - 3] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = 0.0
                            if k != nn - 1:
                                r = a[k + 2, k - 1]
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                        if s != 0.0:
                            if k == m:
                                if l != m:
                                    a[k, k - 1] = -a[k, k - 1]
                            else:
                                a[k, k - 1] = -s * x
                            p += s
                            x = p / s
                            y = q / s
                            z = r / s
                            q /= p
                            r /= p
                            # row transformation
                            row = a[k, k:nn + 1] + q * a[k + 1, k:nn + 1]
                            if k != nn - 1:
                                row = row + r * a[k + 2, k:nn + 1]
                                a[k + 2, k:nn + 1] -= row * z
                            a[k + 1, k:nn + 1] -= row * y
                            a[k, k:nn + 1] -= row * x
                            # column transformation
                            mmin = min(nn, k + 3)
                            col = x * a[l:mmin + 1, k] + y * a[l:mmin + 1, k + 1]
                            if k != nn - 1:
                                col = col + z * a[l:mmin + 1, k + 2]
                                a[l:mmin + 1, k + 2] -= col * r
                            a[l:mmin + 1, k + 1] -= col * q
                            a[l:mmin + 1, k] -= col
            if nn < 1 or l >= nn - 1:
                break
    return wr[1:] + 1j * wi[1:]


def eigenvalues(m):
    """
    All eigenvalues of a real square matrix (complex pairs included).
    Raises ConvergenceError after 100*dim QR sweeps.
    """
    a = _square(m)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    if n == 1:
        return np.array([complex(a[0, 0])])
    h = hessenberg(_balance(a.copy()))
    return _hqr(h, QR_SWEEPS_PER_DIM * n)


def _perron_root(a):
    """
    Power iteration for an entrywise nonnegative matrix, bracketing
    the Perron root with Collatz-Wielandt bounds.  Returns None when
    the bounds cannot be used (zero components) or do not close.
    """
    n = a.shape[0]
    x = np.full(n, 1.0 / n)
    for _ in range(POWER_MAX_ITER):
        y = a @ x
        if np.any(y <= 0.0):
            return None
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        if hi - lo <= 1e-13 * hi:
            return 0.5 * (lo + hi)
        x = y / y.sum()
    return None


def spectral_radius(m):
    """
    Largest eigenvalue modulus.  Entrywise nonnegative input goes
    through power iteration first; everything else (and any power
    iteration that does not close) uses the full QR eigensolver.
    """
    a = _square(m)
    if a.size == 0:
        return 0.0
    if not np.any(a):
        return 0.0
    if np.all(a >= 0.0):
        root = _perron_root(a)
        if root is not None:
            return float(root)
        logger.debug("power iteration did not close, using QR")
    return float(np.max(np.abs(eigenvalues(a))))

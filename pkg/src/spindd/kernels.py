"""Hot numerical kernels with numba and pure-numpy implementations.

Every public kernel dispatches on :func:`spindd._accel.get_backend`. The two
implementations take the same arguments and return the same values up to
rounding, which the test-suite checks directly.

Array conventions (all float64, C-contiguous):

* node densities ``n`` have shape ``(N, b)`` with ``b = 4`` for
  ``(n0, n1, n2, n3)`` and ``b = 2`` for ``(n_plus, n_minus)``;
* edge (cell-centre) coefficients have length ``N - 1``;
* block-tridiagonal systems cover the ``N - 2`` interior nodes: ``sub``,
  ``diag`` and ``sup`` have shape ``(N - 2, b, b)`` and ``rhs`` ``(N - 2, b)``.
  ``sub[0]`` and ``sup[-1]`` are zero (Dirichlet data is moved to ``rhs``).
"""

import numpy as np

from . import _accel
from ._accel import njit

# status codes returned by newton_poisson
NEWTON_OK = 0
NEWTON_MAXITER = 1
NEWTON_NONFINITE = 2

_PIVOT_RTOL = 1e-14


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------


@njit
def _flux_matrix_nb(D, p, eta, m, out):
    """out = -(D/eta^2) * C with j = out @ J for one edge."""
    k = -D / (eta * eta)
    out[0, 0] = k
    for l in range(3):
        out[0, l + 1] = -2.0 * p * m[l] * k
        out[l + 1, 0] = -0.5 * p * m[l] * k
        for c in range(3):
            v = (1.0 - eta) * m[l] * m[c]
            if l == c:
                v += eta
            out[l + 1, c + 1] = v * k


@njit
def _assemble_density_nb(n_old, V, bc_left, bc_right, dx, dt_inv, D_mid, p_mid, eta_mid, m_mid, m_node, relax, omega):
    N = n_old.shape[0]
    n = N - 2
    sub = np.zeros((n, 4, 4))
    diag = np.zeros((n, 4, 4))
    sup = np.zeros((n, 4, 4))
    rhs = np.zeros((n, 4))
    K = np.zeros((N - 1, 4, 4))
    a = np.empty(N - 1)
    b = np.empty(N - 1)
    for e in range(N - 1):
        _flux_matrix_nb(D_mid[e], p_mid[e], eta_mid[e], m_mid[e], K[e])
        dV = V[e + 1] - V[e]
        a[e] = (1.0 + 0.5 * dV) / dx
        b[e] = (-1.0 + 0.5 * dV) / dx
    inv_dx = 1.0 / dx
    for r in range(n):
        i = r + 1
        er = i
        el = i - 1
        for l in range(4):
            for c in range(4):
                diag[r, l, c] = (b[er] * K[er, l, c] - a[el] * K[el, l, c]) * inv_dx
                sup[r, l, c] = a[er] * K[er, l, c] * inv_dx
                sub[r, l, c] = -b[el] * K[el, l, c] * inv_dx
            diag[r, l, l] += dt_inv
            rhs[r, l] = n_old[i, l] * dt_inv
        m1 = m_node[i, 0]
        m2 = m_node[i, 1]
        m3 = m_node[i, 2]
        # relax*n - omega*(n x m) on the spin rows
        diag[r, 1, 1] += relax
        diag[r, 2, 2] += relax
        diag[r, 3, 3] += relax
        diag[r, 1, 2] -= omega * m3
        diag[r, 1, 3] += omega * m2
        diag[r, 2, 1] += omega * m3
        diag[r, 2, 3] -= omega * m1
        diag[r, 3, 1] -= omega * m2
        diag[r, 3, 2] += omega * m1
    for l in range(4):
        for c in range(4):
            rhs[0, l] -= sub[0, l, c] * bc_left[c]
            rhs[n - 1, l] -= sup[n - 1, l, c] * bc_right[c]
    for l in range(4):
        for c in range(4):
            sub[0, l, c] = 0.0
            sup[n - 1, l, c] = 0.0
    return sub, diag, sup, rhs


@njit
def _assemble_updown_nb(u_old, V, bc_left, bc_right, dx, dt_inv, D_mid, p_mid, relax):
    N = u_old.shape[0]
    n = N - 2
    sub = np.zeros((n, 2, 2))
    diag = np.zeros((n, 2, 2))
    sup = np.zeros((n, 2, 2))
    rhs = np.zeros((n, 2))
    inv_dx = 1.0 / dx
    for r in range(n):
        i = r + 1
        er = i
        el = i - 1
        dVr = V[i + 1] - V[i]
        dVl = V[i] - V[i - 1]
        ar = (1.0 + 0.5 * dVr) * inv_dx
        br = (-1.0 + 0.5 * dVr) * inv_dx
        al = (1.0 + 0.5 * dVl) * inv_dx
        bl = (-1.0 + 0.5 * dVl) * inv_dx
        for s in range(2):
            sign = 1.0 if s == 0 else -1.0
            kr = -D_mid[er] / (1.0 + sign * p_mid[er])
            kl = -D_mid[el] / (1.0 + sign * p_mid[el])
            diag[r, s, s] = (br * kr - al * kl) * inv_dx + dt_inv + 0.5 * relax
            sup[r, s, s] = ar * kr * inv_dx
            sub[r, s, s] = -bl * kl * inv_dx
            rhs[r, s] = u_old[i, s] * dt_inv
        diag[r, 0, 1] = -0.5 * relax
        diag[r, 1, 0] = -0.5 * relax
    for s in range(2):
        rhs[0, s] -= sub[0, s, s] * bc_left[s]
        rhs[n - 1, s] -= sup[n - 1, s, s] * bc_right[s]
        sub[0, s, s] = 0.0
        sup[n - 1, s, s] = 0.0
    return sub, diag, sup, rhs


@njit
def _gauss_solve_nb(A, B):
    """Solve A X = B in place (partial pivoting). Returns False on a singular pivot."""
    nb = A.shape[0]
    nr = B.shape[1]
    scale = 0.0
    for i in range(nb):
        for j in range(nb):
            v = abs(A[i, j])
            if v > scale:
                scale = v
    if scale == 0.0:
        return False
    for k in range(nb):
        piv = k
        best = abs(A[k, k])
        for i in range(k + 1, nb):
            v = abs(A[i, k])
            if v > best:
                best = v
                piv = i
        if best <= _PIVOT_RTOL * scale:
            return False
        if piv != k:
            for j in range(nb):
                tmp = A[k, j]
                A[k, j] = A[piv, j]
                A[piv, j] = tmp
            for j in range(nr):
                tmp = B[k, j]
                B[k, j] = B[piv, j]
                B[piv, j] = tmp
        inv = 1.0 / A[k, k]
        for i in range(k + 1, nb):
            f = A[i, k] * inv
            if f != 0.0:
                for j in range(k + 1, nb):
                    A[i, j] -= f * A[k, j]
                for j in range(nr):
                    B[i, j] -= f * B[k, j]
    for k in range(nb - 1, -1, -1):
        inv = 1.0 / A[k, k]
        for j in range(nr):
            acc = B[k, j]
            for i in range(k + 1, nb):
                acc -= A[k, i] * B[i, j]
            B[k, j] = acc * inv
    return True


@njit
def _block_thomas_nb(sub, diag, sup, rhs):
    n = diag.shape[0]
    bs = diag.shape[1]
    # work[i] = [C'_i | d'_i] with C'_i = Dp^-1 sup_i, d'_i = Dp^-1 y_i
    work = np.zeros((n, bs, bs + 1))
    Dp = np.empty((bs, bs))
    x = np.zeros((n, bs))
    ops = 0
    for i in range(n):
        for l in range(bs):
            for c in range(bs):
                Dp[l, c] = diag[i, l, c]
                work[i, l, c] = sup[i, l, c]
            work[i, l, bs] = rhs[i, l]
        if i > 0:
            # Dp -= sub_i C'_{i-1};  y -= sub_i d'_{i-1}
            for l in range(bs):
                for c in range(bs + 1):
                    acc = 0.0
                    for k in range(bs):
                        acc += sub[i, l, k] * work[i - 1, k, c]
                    if c < bs:
                        Dp[l, c] -= acc
                    else:
                        work[i, l, c] -= acc
            ops += 1
        if not _gauss_solve_nb(Dp, work[i]):
            return x, i, ops
        ops += 1
    for l in range(bs):
        x[n - 1, l] = work[n - 1, l, bs]
    for i in range(n - 2, -1, -1):
        for l in range(bs):
            acc = work[i, l, bs]
            for c in range(bs):
                acc -= work[i, l, c] * x[i + 1, c]
            x[i, l] = acc
        ops += 1
    return x, -1, ops


@njit
def _thomas_nb(lower, diag, upper, rhs):
    n = diag.size
    cp = np.empty(n)
    dp = np.empty(n)
    x = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


@njit
def _newton_poisson_nb(V0, rho, C, lam2, dx, tol, max_iter, max_step):
    N = V0.size
    n = N - 2
    V = V0.copy()
    hist = np.full(max_iter + 1, np.nan)
    c = lam2 / (dx * dx)
    F = np.empty(n)
    lo = np.full(n, -c)
    up = np.full(n, -c)
    lo[0] = 0.0
    up[n - 1] = 0.0
    dg = np.empty(n)
    for it in range(max_iter + 1):
        res = 0.0
        for r in range(n):
            i = r + 1
            g = rho[i] * np.exp(-V[i])
            F[r] = -c * (V[i + 1] - 2.0 * V[i] + V[i - 1]) - g + C[i]
            dg[r] = 2.0 * c + g
            a = abs(F[r])
            if not a < np.inf:
                hist[it] = np.inf
                return V, it, hist, 2
            if a > res:
                res = a
        hist[it] = res
        if res <= tol:
            return V, it, hist, 0
        if it == max_iter:
            break
        for r in range(n):
            F[r] = -F[r]
        dV = _thomas_nb(lo, dg, up, F)
        big = 0.0
        for r in range(n):
            a = abs(dV[r])
            if a > big:
                big = a
        fac = 1.0
        if big > max_step:
            fac = max_step / big
        for r in range(n):
            V[r + 1] += fac * dV[r]
    return V, max_iter, hist, 1


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _flux_matrices_np(D_mid, p_mid, eta_mid, m_mid):
    ne = D_mid.size
    k = -D_mid / eta_mid**2
    C = np.zeros((ne, 4, 4))
    C[:, 0, 0] = 1.0
    C[:, 0, 1:] = -2.0 * p_mid[:, None] * m_mid
    C[:, 1:, 0] = -0.5 * p_mid[:, None] * m_mid
    C[:, 1:, 1:] = (1.0 - eta_mid)[:, None, None] * m_mid[:, :, None] * m_mid[:, None, :]
    C[:, 1:, 1:] += eta_mid[:, None, None] * np.eye(3)
    return k[:, None, None] * C


def _finish_dirichlet(sub, sup, rhs, bc_left, bc_right):
    rhs[0] -= sub[0] @ bc_left
    rhs[-1] -= sup[-1] @ bc_right
    sub[0] = 0.0
    sup[-1] = 0.0


def _assemble_density_np(n_old, V, bc_left, bc_right, dx, dt_inv, D_mid, p_mid, eta_mid, m_mid, m_node, relax, omega):
    K = _flux_matrices_np(D_mid, p_mid, eta_mid, m_mid)
    dV = np.diff(V)
    a = (1.0 + 0.5 * dV) / dx
    b = (-1.0 + 0.5 * dV) / dx
    Kr, Kl = K[1:], K[:-1]
    ar, br, al, bl = a[1:], b[1:], a[:-1], b[:-1]
    diag = (br[:, None, None] * Kr - al[:, None, None] * Kl) / dx
    sup = ar[:, None, None] * Kr / dx
    sub = -bl[:, None, None] * Kl / dx
    diag += dt_inv * np.eye(4)
    m = m_node[1:-1]
    R = np.zeros_like(diag)
    R[:, 1:, 1:] = relax * np.eye(3)
    skew = np.zeros((m.shape[0], 3, 3))
    skew[:, 0, 1], skew[:, 0, 2] = m[:, 2], -m[:, 1]
    skew[:, 1, 0], skew[:, 1, 2] = -m[:, 2], m[:, 0]
    skew[:, 2, 0], skew[:, 2, 1] = m[:, 1], -m[:, 0]
    R[:, 1:, 1:] -= omega * skew
    diag += R
    rhs = n_old[1:-1] * dt_inv
    _finish_dirichlet(sub, sup, rhs, bc_left, bc_right)
    return sub, diag, sup, rhs


def _assemble_updown_np(u_old, V, bc_left, bc_right, dx, dt_inv, D_mid, p_mid, relax):
    dV = np.diff(V)
    a = (1.0 + 0.5 * dV) / dx
    b = (-1.0 + 0.5 * dV) / dx
    k = -D_mid[:, None] / (1.0 + np.array([1.0, -1.0]) * p_mid[:, None])  # (edges, 2)
    n = u_old.shape[0] - 2
    eye = np.eye(2)
    diag = ((b[1:, None] * k[1:] - a[:-1, None] * k[:-1]) / dx)[:, :, None] * eye
    diag += (dt_inv + 0.5 * relax) * eye
    diag[:, 0, 1] = diag[:, 1, 0] = -0.5 * relax
    sup = (a[1:, None] * k[1:] / dx)[:, :, None] * eye
    sub = (-b[:-1, None] * k[:-1] / dx)[:, :, None] * eye
    rhs = u_old[1:-1] * dt_inv
    assert rhs.shape[0] == n
    _finish_dirichlet(sub, sup, rhs, bc_left, bc_right)
    return sub, diag, sup, rhs


def _block_thomas_np(sub, diag, sup, rhs):
    n, bs = rhs.shape
    Cp = np.zeros((n, bs, bs))
    dp = np.zeros((n, bs))
    x = np.zeros((n, bs))
    ops = 0
    for i in range(n):
        Dp = diag[i].copy()
        y = rhs[i].copy()
        if i > 0:
            Dp -= sub[i] @ Cp[i - 1]
            y -= sub[i] @ dp[i - 1]
            ops += 1
        scale = np.abs(Dp).max()
        try:
            sol = np.linalg.solve(Dp, np.column_stack([sup[i], y]))
        except np.linalg.LinAlgError:
            return x, i, ops
        # reject numerically singular pivots the same way as the numba path
        if scale == 0.0 or not np.all(np.isfinite(sol)) or np.linalg.cond(Dp) > 1.0 / _PIVOT_RTOL:
            return x, i, ops
        ops += 1
        Cp[i] = sol[:, :bs]
        dp[i] = sol[:, bs]
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - Cp[i] @ x[i + 1]
        ops += 1
    return x, -1, ops


def _thomas_np(lower, diag, upper, rhs):
    n = diag.size
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den
    x = np.empty(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _newton_poisson_np(V0, rho, C, lam2, dx, tol, max_iter, max_step):
    V = V0.copy()
    n = V.size - 2
    hist = np.full(max_iter + 1, np.nan)
    c = lam2 / dx**2
    lo = np.full(n, -c)
    up = np.full(n, -c)
    lo[0] = up[-1] = 0.0
    for it in range(max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            g = rho[1:-1] * np.exp(-V[1:-1])
            F = -c * (V[2:] - 2.0 * V[1:-1] + V[:-2]) - g + C[1:-1]
        res = np.abs(F).max()
        if not np.isfinite(res):
            hist[it] = np.inf
            return V, it, hist, NEWTON_NONFINITE
        hist[it] = res
        if res <= tol:
            return V, it, hist, NEWTON_OK
        if it == max_iter:
            break
        dV = _thomas_np(lo, 2.0 * c + g, up, -F)
        big = np.abs(dV).max()
        if big > max_step:
            dV *= max_step / big
        V[1:-1] += dV
    return V, max_iter, hist, NEWTON_MAXITER


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _f(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def assemble_density(n_old, V, bc_left, bc_right, dx, dt_inv, D_mid, p_mid, eta_mid, m_mid, m_node, relax, omega):
    """Implicit-Euler block system for the four-component density ``(n0, n_vec)``."""
    args = (
        _f(n_old), _f(V), _f(bc_left), _f(bc_right), float(dx), float(dt_inv),
        _f(D_mid), _f(p_mid), _f(eta_mid), _f(m_mid), _f(m_node), float(relax), float(omega),
    )
    if _accel.get_backend() == "numba":
        return _assemble_density_nb(*args)
    return _assemble_density_np(*args)


def assemble_updown(u_old, V, bc_left, bc_right, dx, dt_inv, D_mid, p_mid, relax):
    """Implicit-Euler 2x2 block system for ``(n_plus, n_minus)``."""
    args = (_f(u_old), _f(V), _f(bc_left), _f(bc_right), float(dx), float(dt_inv), _f(D_mid), _f(p_mid), float(relax))
    if _accel.get_backend() == "numba":
        return _assemble_updown_nb(*args)
    return _assemble_updown_np(*args)


def block_thomas(sub, diag, sup, rhs):
    """Block LU (Thomas) solve. Returns ``(x, failed_row, block_ops)``; ``failed_row`` is -1 on success."""
    args = (_f(sub), _f(diag), _f(sup), _f(rhs))
    if _accel.get_backend() == "numba":
        return _block_thomas_nb(*args)
    return _block_thomas_np(*args)


def thomas(lower, diag, upper, rhs):
    """Scalar tridiagonal solve; ``lower[0]`` and ``upper[-1]`` are ignored."""
    args = (_f(lower), _f(diag), _f(upper), _f(rhs))
    if _accel.get_backend() == "numba":
        return _thomas_nb(*args)
    return _thomas_np(*args)


def newton_poisson(V0, rho, C, lam2, dx, tol, max_iter, max_step):
    """Damped Newton iteration for ``-lam2 V'' = rho exp(-V) - C``; returns ``(V, iters, residuals, status)``."""
    args = (_f(V0), _f(rho), _f(C), float(lam2), float(dx), float(tol), int(max_iter), float(max_step))
    if _accel.get_backend() == "numba":
        return _newton_poisson_nb(*args)
    return _newton_poisson_np(*args)

"""Entropy functionals, the trace decomposition of the quantum entropy
production, and runtime invariant monitors.

All functionals use trapezoid quadrature on the uniform node grid. Gradients
of the potential are taken per edge, ``(V[i+1] - V[i]) / dx``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import pauli
from .errors import DomainError
from .formulations import decompose, to_updown


@dataclass(frozen=True)
class EntropyReference:
    """Reference density ``n_D`` and potential ``V_D`` extended to every node."""

    n_D: np.ndarray
    V_D: np.ndarray

    @property
    def log_level(self):
        """``log(n_D/2) + V_D`` per node; constant for a thermal-equilibrium reference."""
        return np.log(0.5 * self.n_D) + self.V_D


@dataclass
class DiagnosticsRecord:
    t: float
    H0: float
    HQ: float | None
    mass: float
    bounds: tuple  # (min n+, min n-, max n+, max n-)
    perp_norm: float
    gummel_iters: int
    J1_min: float | None = None
    negative_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


@dataclass(frozen=True)
class RemarkThreeTerms:
    a0: np.ndarray
    a1_vec: np.ndarray
    a2_vec: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    beta: np.ndarray
    c0: np.ndarray
    c_vec: np.ndarray
    J1_square: np.ndarray  # completed-square form of J1


@dataclass(frozen=True)
class MonitorReport:
    ok: bool
    M_bound: float
    min_plus: float
    min_minus: float
    max_plus: float
    max_minus: float
    negative_nodes: np.ndarray
    over_nodes: np.ndarray
    perp_norm: float
    perp_envelope: float
    within_envelope: bool


def trapezoid(values, dx):
    values = np.asarray(values, dtype=float)
    return dx * (values.sum() - 0.5 * (values[0] + values[-1]))


def h_density(n, n_D):
    """``h(n) = int_{n_D/2}^{n} log(s) - log(n_D/2) ds = n log(2n/n_D) - n + n_D/2``; ``h(0) = n_D/2``."""
    n = np.asarray(n, dtype=float)
    n_D = np.asarray(n_D, dtype=float)
    pos = np.where(n > 0, n, 1.0)
    return np.where(n > 0, pos * np.log(2.0 * pos / n_D) - pos + 0.5 * n_D, 0.5 * n_D)


def electric_energy(V, V_D, dx, lambda_D2):
    grad = np.diff(np.asarray(V, dtype=float) - np.asarray(V_D, dtype=float)) / dx
    return 0.5 * lambda_D2 * dx * np.sum(grad * grad)


def _potential_values(V):
    return V.V if hasattr(V, "V") else np.asarray(V, dtype=float)


def entropy_H0(updown, V, ref, grid, lambda_D2, return_flag=False):
    """Free energy of the spin-up/down system relative to ``ref``.

    Negative densities are replaced by zero (the continuous limit of ``h``)
    and reported when ``return_flag`` is true, as ``(H0, negative_nodes)``.
    """
    n_plus = np.asarray(updown.n_plus, dtype=float)
    n_minus = np.asarray(updown.n_minus, dtype=float)
    neg = np.flatnonzero((n_plus < 0) | (n_minus < 0))
    dens = h_density(np.maximum(n_plus, 0.0), ref.n_D) + h_density(np.maximum(n_minus, 0.0), ref.n_D)
    value = trapezoid(dens, grid.dx) + electric_energy(_potential_values(V), ref.V_D, grid.dx, lambda_D2)
    if return_flag:
        return value, neg
    return value


def entropy_HQ(state, V, ref, grid, lambda_D2, return_nodes=False):
    """Von Neumann free energy via the eigenvalues ``n0/2 +- |n_vec|``.

    Returns ``None`` when some node has ``n0/2 <= |n_vec|`` (``log N``
    undefined); with ``return_nodes`` the offending node indices are returned
    alongside.
    """
    lam_plus, lam_minus = pauli.eigenvalues(state.n0, state.n_vec)
    bad = np.flatnonzero(~(lam_minus > 0))
    if bad.size:
        return (None, bad) if return_nodes else None
    n_D = np.asarray(ref.n_D, dtype=float)
    tr = pauli.trace_fn(lambda s: s * (np.log(s) - 1.0), state.n0, state.n_vec)
    dens = tr + n_D - state.n0 * np.log(0.5 * n_D)
    value = trapezoid(dens, grid.dx) + electric_energy(_potential_values(V), ref.V_D, grid.dx, lambda_D2)
    return (value, bad) if return_nodes else value


def dHQ_relaxation_integrand(n0, n_vec):
    """``|n| log((n0/2 + |n|) / (n0/2 - |n|))``, the spin-flip part of the entropy production."""
    n0 = np.asarray(n0, dtype=float)
    norm = np.linalg.norm(np.asarray(n_vec, dtype=float), axis=-1)
    if np.any(~(0.5 * n0 > norm)):
        raise DomainError("need n0/2 > |n_vec|", value=np.min(0.5 * n0 - norm))
    # log1p form keeps accuracy for small |n|
    return norm * np.log1p(2.0 * norm / (0.5 * n0 - norm))


def remark3_coefficients(n0, n_vec, dn0, dn_vec, dV):
    """Pauli coefficients of ``A = N^{-1} dN + dV sigma0`` (one spatial direction).

    Returns ``(a0, a1, a2, beta)`` with ``a_vec = a1 + i a2`` and
    ``beta = 1 / (n0^2/4 - |n|^2)``. Note ``A`` is not Hermitian unless
    ``n_vec`` and its derivative are parallel.
    """
    n0 = np.asarray(n0, dtype=float)
    n_vec = np.asarray(n_vec, dtype=float)
    dn0 = np.asarray(dn0, dtype=float)
    dn_vec = np.asarray(dn_vec, dtype=float)
    gap = 0.25 * n0 * n0 - np.sum(n_vec * n_vec, axis=-1)
    if np.any(~(gap > 0)):
        raise DomainError("spectral gap violated: need n0/2 > |n_vec|", value=np.min(gap))
    beta = 1.0 / gap
    a0 = beta * (0.25 * n0 * dn0 - np.sum(n_vec * dn_vec, axis=-1)) + dV
    a1 = 0.5 * beta[..., None] * (n0[..., None] * dn_vec - dn0[..., None] * n_vec)
    a2 = -beta[..., None] * np.cross(n_vec, dn_vec)
    return a0, a1, a2, beta


def remark3_trace_terms(n0, n_vec, a0, a1, a2, p, m, beta=None):
    """Split ``Re tr[N (A P^{-1/2})^2] = J1 + J2`` for given coefficients of ``A``.

    ``J1 >= 0`` whenever ``n0/2 > |n_vec|``; ``J2`` carries every term that
    involves ``a2`` or ``a1 x m`` and can be negative.
    """
    n0 = np.asarray(n0, dtype=float)
    n_vec = np.asarray(n_vec, dtype=float)
    a0 = np.asarray(a0, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    m = np.broadcast_to(np.asarray(m, dtype=float), a1.shape)
    p = np.asarray(p, dtype=float)
    sp, sm = np.sqrt(1.0 + p), np.sqrt(1.0 - p)
    denom = 2.0 * np.sqrt(1.0 - p * p)
    pp, pm = (sp + sm) / denom, (sp - sm) / denom

    def dot(u, v):
        return np.sum(u * v, axis=-1)

    a1m, a2m = dot(a1, m), dot(a2, m)
    c0 = a0 * pp - pm * a1m
    c = pp[..., None] * a1 - (a0 * pm)[..., None] * m
    nc = dot(n_vec, c)
    J1 = n0 * c0**2 + n0 * dot(c, c) + 4.0 * c0 * nc
    J1_square = n0 * (c0 + 2.0 / n0 * nc) ** 2 + n0 * (dot(c, c) - 4.0 / n0**2 * nc**2)

    a1xm = np.cross(a1, m)
    a2xm = np.cross(a2, m)
    J2 = (
        -n0 * pm**2 * a2m**2
        - n0 * pp**2 * dot(a2, a2)
        - n0 * pm**2 * dot(a1xm, a1xm)
        + n0 * pm**2 * dot(a2xm, a2xm)
        + 4.0 * pp * pm * a0 * dot(n_vec, a2xm)
        - 4.0 * pm**2 * a1m * dot(n_vec, a2xm)
        + 4.0 * pp * pm * a2m * dot(n_vec, a2)
        - 4.0 * pm**2 * a2m * dot(n_vec, a1xm)
    )
    if beta is None:
        beta = 1.0 / (0.25 * n0 * n0 - dot(n_vec, n_vec))
    return RemarkThreeTerms(a0, a1, a2, J1, J2, np.asarray(beta), c0, c, J1_square)


def remark3_terms(state, V, grid, p, m, node_index):
    """Remark-3 quantities at an interior node using centred differences."""
    i = int(node_index)
    if not 0 < i < state.n_nodes - 1:
        raise ValueError(f"node {i} is not interior")
    Vv = _potential_values(V)
    h2 = 2.0 * grid.dx
    dn0 = (state.n0[i + 1] - state.n0[i - 1]) / h2
    dn = (state.n_vec[i + 1] - state.n_vec[i - 1]) / h2
    dV = (Vv[i + 1] - Vv[i - 1]) / h2
    a0, a1, a2, beta = remark3_coefficients(state.n0[i], state.n_vec[i], dn0, dn, dV)
    return remark3_trace_terms(state.n0[i], state.n_vec[i], a0, a1, a2, p, m, beta)


def sample_J1(state, V, grid, p_node, m_node, axis):
    """``J1`` at every interior node with a spectral gap (centred differences)."""
    Vv = _potential_values(V)
    n0, nv = state.n0, state.n_vec
    gap = 0.25 * n0[1:-1] ** 2 - np.sum(nv[1:-1] ** 2, axis=-1)
    ok = gap > 0
    if not np.any(ok):
        return np.zeros(0)
    h2 = 2.0 * grid.dx
    sl = np.flatnonzero(ok) + 1
    dn0 = (n0[sl + 1] - n0[sl - 1]) / h2
    dn = (nv[sl + 1] - nv[sl - 1]) / h2
    dV = (Vv[sl + 1] - Vv[sl - 1]) / h2
    m = m_node[sl].copy()
    zero = ~np.any(m, axis=-1)
    m[zero] = axis
    a0, a1, a2, beta = remark3_coefficients(n0[sl], nv[sl], dn0, dn, dV)
    return remark3_trace_terms(n0[sl], nv[sl], a0, a1, a2, p_node[sl], m, beta).J1


def monitor(state, updown, perp, M_bound, t=0.0, perp0=0.0, K=0.0, upper_rtol=1e-8, lower_tol=1e-10):
    """Check ``-lower_tol <= n_pm <= M_bound (1 + upper_rtol)`` and the ``n_perp`` envelope.

    Only reports; nothing is clamped. The envelope ``exp(2 K t) sup|n_perp(0)|``
    is informational (``within_envelope``) and does not affect ``ok``.
    """
    n_plus, n_minus = updown.n_plus, updown.n_minus
    neg = np.flatnonzero((n_plus < -lower_tol) | (n_minus < -lower_tol))
    cap = M_bound * (1.0 + upper_rtol)
    over = np.flatnonzero((n_plus > cap) | (n_minus > cap))
    perp_norm = float(np.max(np.linalg.norm(perp.n_perp, axis=-1))) if perp is not None else 0.0
    envelope = float(np.exp(2.0 * K * t) * perp0)
    return MonitorReport(
        ok=bool(neg.size == 0 and over.size == 0),
        M_bound=float(M_bound),
        min_plus=float(n_plus.min()),
        min_minus=float(n_minus.min()),
        max_plus=float(n_plus.max()),
        max_minus=float(n_minus.max()),
        negative_nodes=neg,
        over_nodes=over,
        perp_norm=perp_norm,
        perp_envelope=envelope,
        within_envelope=bool(perp_norm <= envelope * (1.0 + 1e-12) + 1e-12),
    )


def make_record(state, V, model, reference, gummel_iters, sample_j1=True):
    """Collect the per-step diagnostics of one state."""
    updown = to_updown(state, model.axis)
    perp = decompose(state, model.axis)
    grid = model.grid
    H0, neg = entropy_H0(updown, V, reference, grid, model.lambda_D2, return_flag=True)
    HQ = entropy_HQ(state, V, reference, grid, model.lambda_D2)
    J1_min = None
    if sample_j1:
        j1 = sample_J1(state, V, grid, model.profiles.p_node, model.profiles.m_node, model.axis)
        J1_min = float(j1.min()) if j1.size else None
    return DiagnosticsRecord(
        t=float(state.time),
        H0=float(H0),
        HQ=None if HQ is None else float(HQ),
        mass=float(trapezoid(state.n0, grid.dx)),
        bounds=(
            float(updown.n_plus.min()),
            float(updown.n_minus.min()),
            float(updown.n_plus.max()),
            float(updown.n_minus.max()),
        ),
        perp_norm=float(np.max(np.linalg.norm(perp.n_perp, axis=-1))),
        gummel_iters=int(gummel_iters),
        J1_min=J1_min,
        negative_nodes=neg,
    )

"""State containers and the transforms between the three density formulations.

* charge/spin-vector ``(n0, n_vec)`` -- what the full solver evolves;
* spin-up/spin-down ``n_pm = n0/2 +- n_vec . m`` for a constant axis ``m``;
* parallel/perpendicular split of ``n_vec`` with respect to ``m``.

All transforms are pure: they return new arrays and never alias the input.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularPolarizationError


@dataclass(frozen=True)
class StateField:
    """Node densities at one time level (scaled units)."""

    n0: np.ndarray  # (N,)
    n_vec: np.ndarray  # (N, 3)
    time: float = 0.0

    def __post_init__(self):
        n0 = np.asarray(self.n0, dtype=float)
        n_vec = np.asarray(self.n_vec, dtype=float)
        if n_vec.shape != n0.shape + (3,):
            raise ValueError(f"n_vec shape {n_vec.shape} does not match n0 shape {n0.shape}")
        object.__setattr__(self, "n0", n0)
        object.__setattr__(self, "n_vec", n_vec)

    @classmethod
    def from_array(cls, n, time=0.0):
        """Build from an ``(N, 4)`` array with columns ``(n0, n1, n2, n3)``."""
        n = np.asarray(n, dtype=float)
        return cls(n[:, 0].copy(), n[:, 1:].copy(), time)

    def as_array(self):
        return np.column_stack([self.n0, self.n_vec])

    @property
    def n_nodes(self):
        return self.n0.size


@dataclass(frozen=True)
class PotentialField:
    """Scaled electrostatic potential with its Dirichlet data."""

    V: np.ndarray
    left: float = 0.0
    right: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "V", np.asarray(self.V, dtype=float))


@dataclass(frozen=True)
class UpDownField:
    n_plus: np.ndarray
    n_minus: np.ndarray

    @property
    def n0(self):
        return self.n_plus + self.n_minus

    @property
    def n_par_scalar(self):
        """``n_vec . m`` recovered from the up/down pair."""
        return 0.5 * (self.n_plus - self.n_minus)

    def as_array(self):
        return np.column_stack([self.n_plus, self.n_minus])


@dataclass(frozen=True)
class ParallelPerpField:
    n_par: np.ndarray  # (N, 3)
    n_perp: np.ndarray  # (N, 3)

    def recompose(self):
        return self.n_par + self.n_perp


def _unit(m):
    m = np.asarray(m, dtype=float)
    if abs(np.linalg.norm(m) - 1.0) > 1e-12:
        raise ValueError(f"axis must be a unit vector, |m| = {np.linalg.norm(m)!r}")
    return m


def to_updown(state, m):
    """Spin-up/down densities ``n0/2 +- n_vec . m`` along the constant axis ``m``."""
    m = _unit(m)
    proj = state.n_vec @ m
    half = 0.5 * state.n0
    return UpDownField(half + proj, half - proj)


def from_updown(updown, m, n_perp=None):
    """Inverse of :func:`to_updown`; the perpendicular part must be supplied (defaults to zero)."""
    m = _unit(m)
    n_vec = updown.n_par_scalar[:, None] * m
    if n_perp is not None:
        n_vec = n_vec + n_perp
    return StateField(updown.n0, n_vec)


def decompose(state, m):
    """Split ``n_vec`` into the parts parallel and perpendicular to ``m``."""
    m = _unit(m)
    n_par = (state.n_vec @ m)[:, None] * m
    return ParallelPerpField(n_par, state.n_vec - n_par)


def _check_eta(eta):
    eta = np.asarray(eta, dtype=float)
    if np.any(~(eta > 0.0)) or np.any(eta > 1.0):
        bad = eta[~((eta > 0.0) & (eta <= 1.0))]
        raise SingularPolarizationError(float(np.sqrt(max(0.0, 1.0 - float(np.ravel(bad)[0]) ** 2))))
    return eta


def physical_fluxes(J0, J_vec, p, eta, m, D=1.0):
    """Observable currents ``(j0, j_vec)`` from the primitive fluxes ``(J0, J_vec)``.

    ``j0  = -(D/eta^2) (J0 - 2p J.m)``
    ``j_k = -(D/eta^2) (eta J_k + (1-eta)(J.m) m_k - (p/2) J0 m_k)``

    Broadcasts over a leading edge axis: ``J0`` ``(E,)``, ``J_vec`` / ``m``
    ``(E, 3)``, ``p`` / ``eta`` / ``D`` scalars or ``(E,)``.
    """
    eta = _check_eta(eta)
    J0 = np.asarray(J0, dtype=float)
    J_vec = np.asarray(J_vec, dtype=float)
    m = np.asarray(m, dtype=float)
    p = np.asarray(p, dtype=float)
    k = -np.asarray(D, dtype=float) / eta**2
    Jm = np.sum(J_vec * m, axis=-1)
    j0 = k * (J0 - 2.0 * p * Jm)
    j_vec = k[..., None] * (
        eta[..., None] * J_vec + ((1.0 - eta) * Jm)[..., None] * m - (0.5 * p * J0)[..., None] * m
    )
    return j0, j_vec


def coercivity_matrix(eta):
    eta = float(eta)
    p = np.sqrt(max(0.0, 1.0 - eta * eta))
    return np.array([[0.25, -0.5 * p], [-0.5 * p, 1.0 - 0.5 * eta * eta]])


def coercivity_eigenvalues(eta):
    """Closed-form eigenvalues of ``[[1/4, -p/2], [-p/2, 1 - eta^2/2]]`` with ``p = sqrt(1-eta^2)``.

    ``lam_pm = ((5 - 2 eta^2) +- sqrt((5 - 2 eta^2)^2 - 8 eta^2)) / 8``; both
    are positive for ``0 < eta <= 1``.
    """
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"eta must lie in (0, 1], got {eta!r}", value=eta)
    t = 5.0 - 2.0 * eta * eta
    disc = np.sqrt(t * t - 8.0 * eta * eta)
    lam_plus = (t + disc) / 8.0
    # product of the roots is eta^2/8; avoids cancellation for small eta
    lam_minus = eta * eta / (8.0 * lam_plus)
    return lam_plus, lam_minus

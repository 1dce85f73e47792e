"""Algebra of Hermitian 2x2 matrices in the Pauli basis.

A matrix is written ``M = s*sigma0 + v . sigma`` with the standard Pauli
matrices (sigma1 real off-diagonal, sigma2 imaginary off-diagonal, sigma3
diagonal). Density matrices use ``N = n0/2 sigma0 + n_vec . sigma``, so the
scalar part of a density is ``n0/2``.

The eigenvalue/trace helpers broadcast over leading axes so they can be
applied to whole grids at once (``n0`` of shape ``(N,)``, ``n_vec`` of shape
``(N, 3)``).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, HermiticityError, SingularPolarizationError

HERMITIAN_TOL = 1e-12

SIGMA0 = np.eye(2, dtype=complex)
SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA = np.stack([SIGMA1, SIGMA2, SIGMA3])


@dataclass(frozen=True)
class PauliCoeffs:
    """Coefficients ``(s, v)`` of ``s*sigma0 + v . sigma``.

    ``v`` may be complex; it is real exactly when the matrix is Hermitian
    (and ``s`` is real).
    """

    s: complex
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v)
        if v.shape != (3,):
            raise ValueError(f"vector part must have shape (3,), got {v.shape}")
        object.__setattr__(self, "v", v)

    @property
    def is_real(self):
        return np.imag(self.s) == 0 and not np.any(np.imag(self.v))

    def __sub__(self, other):
        return PauliCoeffs(self.s - other.s, self.v - other.v)

    def __add__(self, other):
        return PauliCoeffs(self.s + other.s, self.v + other.v)


@dataclass(frozen=True)
class PInvSqrtCoeffs:
    """``P^{-1/2} = p_plus*sigma0 - p_minus*(m . sigma)`` for ``P = sigma0 + p m . sigma``."""

    p_plus: float
    p_minus: float


def assemble(c):
    """Build the 2x2 complex matrix ``s*sigma0 + v . sigma``."""
    return c.s * SIGMA0 + np.tensordot(np.asarray(c.v, dtype=complex), SIGMA, axes=1)


def expand(M, tol=HERMITIAN_TOL):
    """Expand a Hermitian 2x2 matrix in the Pauli basis.

    Raises
    ------
    HermiticityError
        If any entry of ``M - M^H`` exceeds ``tol`` in modulus.
    """
    M = np.asarray(M, dtype=complex)
    if M.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {M.shape}")
    asym = np.max(np.abs(M - M.conj().T))
    if asym > tol:
        raise HermiticityError(asym)
    # tr(sigma_k sigma_l) = 2 delta_kl
    s = 0.5 * np.trace(M).real
    v = np.array([0.5 * np.trace(S @ M).real for S in SIGMA])
    return PauliCoeffs(s, v)


def expand_general(M):
    """Pauli expansion of an arbitrary complex 2x2 matrix (complex coefficients)."""
    M = np.asarray(M, dtype=complex)
    s = 0.5 * np.trace(M)
    v = np.array([0.5 * np.trace(S @ M) for S in SIGMA])
    return PauliCoeffs(s, v)


def pauli_product(b, c):
    """Product of two matrices given in Pauli coefficients.

    ``(b0 + b.sigma)(c0 + c.sigma) = (b0 c0 + b.c) + (b0 c + c0 b + i b x c).sigma``;
    the dot product is bilinear (no conjugation), so complex vector parts are
    handled correctly.
    """
    bv = np.asarray(b.v)
    cv = np.asarray(c.v)
    s = b.s * c.s + np.dot(bv, cv)
    v = b.s * cv + c.s * bv + 1j * np.cross(bv, cv)
    return PauliCoeffs(s, v)


def eigenvalues(n0, n_vec):
    """Eigenvalues ``(n0/2 + |n|, n0/2 - |n|)`` of ``N = n0/2 sigma0 + n . sigma``."""
    n0 = np.asarray(n0, dtype=float)
    norm = np.linalg.norm(np.asarray(n_vec, dtype=float), axis=-1)
    half = 0.5 * n0
    return half + norm, half - norm


def trace_fn(f, n0, n_vec):
    """``tr f(N) = f(lam_plus) + f(lam_minus)`` for the density matrix of ``(n0, n_vec)``.

    Floating-point errors raised while evaluating ``f`` (e.g. ``log`` of a
    nonpositive eigenvalue) are turned into :class:`DomainError` carrying the
    offending eigenvalue.
    """
    lam_p, lam_m = eigenvalues(n0, n_vec)
    out = []
    for lam in (lam_p, lam_m):
        with np.errstate(divide="raise", invalid="raise"):
            try:
                val = f(lam)
            except (FloatingPointError, ValueError) as exc:
                bad = np.atleast_1d(lam)
                idx = np.flatnonzero(~np.isfinite(bad) | (bad <= 0))
                offending = bad[idx[0]] if idx.size else bad.min()
                raise DomainError(
                    f"trace function undefined at eigenvalue {offending!r}: {exc}",
                    value=offending,
                    nodes=idx,
                ) from exc
        if np.any(np.isnan(val)):
            bad = np.atleast_1d(lam)[np.atleast_1d(np.isnan(val))]
            raise DomainError(f"trace function undefined at eigenvalue {bad[0]!r}", value=bad[0])
        out.append(val)
    return out[0] + out[1]


def p_inv_sqrt(p, m=(0.0, 0.0, 1.0)):
    """Pauli coefficients of ``P^{-1/2}`` for ``P = sigma0 + p m . sigma``.

    ``p_pm = (sqrt(1+p) +- sqrt(1-p)) / (2 sqrt(1-p^2))``. The result does not
    depend on ``m`` beyond the requirement that it is a unit vector.
    """
    p = float(p)
    if not 0.0 <= p < 1.0:
        raise SingularPolarizationError(p)
    m = np.asarray(m, dtype=float)
    if abs(np.linalg.norm(m) - 1.0) > 1e-12:
        raise ValueError(f"magnetization direction must be a unit vector, |m| = {np.linalg.norm(m)!r}")
    sp, sm = np.sqrt(1.0 + p), np.sqrt(1.0 - p)
    denom = 2.0 * np.sqrt(1.0 - p * p)
    return PInvSqrtCoeffs((sp + sm) / denom, (sp - sm) / denom)


def polarization_matrix(p, m):
    """``P = sigma0 + p (m . sigma)`` as a dense matrix."""
    return assemble(PauliCoeffs(1.0, p * np.asarray(m, dtype=float)))

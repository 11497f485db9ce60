"""Dense complex Hermitian matrix kernel.

Everything here is a pure function on numpy arrays. Matrices are plain
``(n, n)`` complex ndarrays; the validators below enforce the Hermitian and
density-matrix invariants and return a cleaned copy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError, SingularStateError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared across the package.

    ``comm_tol`` is relative (see :func:`comm_norm`); ``curvature_tol`` is an
    absolute Frobenius norm because curvature carries O(h^2) finite-difference
    error. ``lift_tol`` bounds the end-point projection defect of a lift and
    ``rpf_tol`` decides when a relative phase factor counts as the identity.
    """

    hermiticity_tol: float = 1e-10
    trace_tol: float = 1e-10
    positivity_floor: float = 1e-9
    comm_tol: float = 1e-8
    curvature_tol: float = 1e-6
    lift_tol: float = 1e-6
    rpf_tol: float = 1e-6

    def as_dict(self):
        return dict(self.__dict__)


DEFAULT_TOL = Tolerances()


def fro(a) -> float:
    return float(np.linalg.norm(a))


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_part(a):
    return (a + dagger(a)) / 2


def _square(a, name="matrix"):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InputError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} has non-finite entries")
    return a.astype(complex)


def as_hermitian(a, tol: Tolerances = DEFAULT_TOL, name="matrix"):
    """Validate ``a`` as Hermitian and return its exact Hermitian part."""
    a = _square(a, name)
    defect = fro(a - dagger(a))
    if defect > tol.hermiticity_tol * max(1.0, fro(a)):
        raise InputError(
            f"{name} is not Hermitian: ||A - A^dag||_F = {defect:.3e} exceeds "
            f"hermiticity_tol={tol.hermiticity_tol:g}"
        )
    return hermitian_part(a)


def as_density(rho, tol: Tolerances = DEFAULT_TOL, name="density matrix"):
    """Validate a strictly positive, unit-trace Hermitian matrix."""
    rho = as_hermitian(rho, tol, name)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol.trace_tol:
        raise InputError(f"{name} has trace {tr!r}; |Tr - 1| exceeds trace_tol={tol.trace_tol:g}")
    lam_min = np.linalg.eigvalsh(rho)[0]
    if lam_min <= tol.positivity_floor:
        raise SingularStateError(
            f"{name} has smallest eigenvalue {lam_min:.3e}, not above "
            f"positivity_floor={tol.positivity_floor:g}"
        )
    return rho


def eig_hermitian(a, tol: Tolerances = DEFAULT_TOL):
    """Eigen-decomposition ``A = V diag(lam) V^dag`` with ascending ``lam``."""
    a = as_hermitian(a, tol)
    lam, v = np.linalg.eigh(a)
    return lam, v


def _sld_eigenbasis(lam, v, drho):
    d = dagger(v) @ drho @ v
    l_eig = 2.0 * d / (lam[:, None] + lam[None, :])
    return hermitian_part(v @ l_eig @ dagger(v))


def solve_sld(rho, drho, tol: Tolerances = DEFAULT_TOL):
    """Symmetric logarithmic derivative: the Hermitian L with drho = (L rho + rho L)/2.

    Solved in the eigenbasis of rho, where the Lyapunov equation is diagonal:
    ``L_ab = 2 drho_ab / (lam_a + lam_b)``.

    Raises:
        SingularStateError: if rho has an eigenvalue at or below the positivity floor.
        InputError: if drho is not Hermitian or not traceless.
    """
    rho = as_hermitian(rho, tol, "rho")
    drho = as_hermitian(drho, tol, "drho")
    if rho.shape != drho.shape:
        raise InputError(f"shape mismatch: rho {rho.shape} vs drho {drho.shape}")
    tr = abs(np.trace(drho))
    if tr > tol.trace_tol * max(1.0, fro(drho)):
        raise InputError(f"drho must be traceless; |Tr drho| = {tr:.3e}")
    lam, v = np.linalg.eigh(rho)
    if lam[0] <= tol.positivity_floor:
        raise SingularStateError(
            f"rho has smallest eigenvalue {lam[0]:.3e}, not above "
            f"positivity_floor={tol.positivity_floor:g}"
        )
    return _sld_eigenbasis(lam, v, drho)


def sld_residual(rho, drho, L) -> float:
    return fro((L @ rho + rho @ L) / 2 - drho)


def polar_positive(a):
    """Left polar decomposition ``A = P K``, P = (A A^dag)^{1/2} psd, K unitary.

    Computed from the SVD ``A = U S Vh``: ``P = U S U^dag``, ``K = U Vh``.
    A rank-deficient input still decomposes, but K is then not unique and a
    ``RuntimeWarning`` is emitted.
    """
    a = _square(a)
    u, s, vh = np.linalg.svd(a)
    if s[-1] <= 1e-14 * max(1.0, s[0]):
        warnings.warn("polar_positive: input is rank deficient; unitary factor not unique",
                      RuntimeWarning, stacklevel=2)
    p = hermitian_part((u * s) @ dagger(u))
    k = u @ vh
    return p, k


def commutator(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InputError(f"commutator of mismatched shapes {a.shape} and {b.shape}")
    return a @ b - b @ a


def comm_norm(a, b) -> float:
    """Scale-free commutator size ``||[A,B]||_F / max(1, ||A||_F ||B||_F)``."""
    return fro(commutator(a, b)) / max(1.0, fro(a) * fro(b))


def _spectral_apply(a, fn):
    lam, v = np.linalg.eigh(hermitian_part(np.asarray(a, dtype=complex)))
    return hermitian_part((v * fn(lam)) @ dagger(v))


def sqrtm_psd(a):
    """Principal square root of a positive semidefinite Hermitian matrix."""
    return _spectral_apply(a, lambda lam: np.sqrt(np.clip(lam, 0.0, None)))


def expm_hermitian(a):
    return _spectral_apply(a, np.exp)


def is_unitary(u, atol=1e-8) -> bool:
    u = np.asarray(u)
    return fro(dagger(u) @ u - np.eye(u.shape[0])) <= atol


# Random instances, used by the property tests and the random estimator generator.

def random_hermitian(n, rng, scale=1.0):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * hermitian_part(g)


def random_traceless_hermitian(n, rng, scale=1.0):
    h = random_hermitian(n, rng, scale)
    return h - np.trace(h).real / n * np.eye(n)


def random_unitary(n, rng):
    """Haar-distributed unitary (QR of a Ginibre matrix with phase fix)."""
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_density(n, rng, min_eig=0.05):
    """Random full-rank density matrix with spectrum bounded below by ``min_eig``."""
    w = rng.dirichlet(np.ones(n))
    w = min_eig + (1.0 - n * min_eig) * w
    u = random_unitary(n, rng)
    return hermitian_part((u * w) @ dagger(u))

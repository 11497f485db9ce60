"""SLD Fisher information, the curvature form, and model classification.

The curvature of the Uhlmann connection at ``theta`` is represented by

    F_ij = (d_i L_j - d_j L_i) - [L_i, L_j] / 2

whose Hermitian part is the derivative term and whose skew-Hermitian part is
the commutator term. ``F_ij = 0`` exactly when ``L_i`` and ``L_j`` commute.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ._workers import ordered_map
from .errors import InputError
from .matcore import DEFAULT_TOL, comm_norm, commutator, dagger, fro, solve_sld

NOT_LOCALLY_QUASI_CLASSICAL = "not_locally_quasi_classical"
LOCALLY_QUASI_CLASSICAL = "locally_quasi_classical"
QUASI_CLASSICAL = "quasi_classical"


@dataclass
class SldSet:
    theta: np.ndarray
    rho: np.ndarray
    slds: list
    fisher: np.ndarray

    @property
    def fisher_inverse(self):
        return np.linalg.inv(self.fisher)


@dataclass
class CurvatureTensor:
    """``f[i, j]`` holds the n x n matrix F_ij at ``theta``."""

    theta: np.ndarray
    f: np.ndarray
    slds: list

    def norm(self, i, j):
        return fro(self.f[i, j])

    def max_norm(self):
        m = self.f.shape[0]
        return max((self.norm(i, j) for i, j in itertools.combinations(range(m), 2)), default=0.0)

    def derivative_part(self):
        """Hermitian part of F, i.e. ``d_i L_j - d_j L_i``."""
        return (self.f + dagger(self.f)) / 2

    def commutator_part(self):
        """Skew-Hermitian part of F, i.e. ``-[L_i, L_j] / 2``."""
        return (self.f - dagger(self.f)) / 2


@dataclass
class Classification:
    verdict: str
    grid: list
    tol: float
    worst_local_comm: float = 0.0
    worst_local_witness: tuple = None
    worst_cross_comm: float = 0.0
    worst_cross_witness: tuple = None
    worst_curvature: float = None
    worst_curvature_witness: tuple = None
    notes: list = field(default_factory=list)

    @property
    def aliases(self):
        # quasi-classical and parallel coincide; report both names
        return [QUASI_CLASSICAL, "parallel"] if self.verdict == QUASI_CLASSICAL else [self.verdict]

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "aliases": self.aliases,
            "tol": self.tol,
            "grid": [list(map(float, p)) for p in self.grid],
            "witnesses": {
                "local_commutator": {"norm": self.worst_local_comm, "at": self.worst_local_witness},
                "cross_commutator": {"norm": self.worst_cross_comm, "at": self.worst_cross_witness},
                "curvature": {"norm": self.worst_curvature, "at": self.worst_curvature_witness},
            },
            "notes": self.notes,
        }


def _fisher(rho, slds):
    m = len(slds)
    j = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            j[a, b] = j[b, a] = np.trace(rho @ slds[a] @ slds[b]).real
    return j


def slds_at(model, theta, tol=DEFAULT_TOL):
    rho = model.evaluate(theta)
    return rho, [solve_sld(rho, d, tol) for d in model.derivatives(theta)]


def sld_set(model, theta, tol=DEFAULT_TOL):
    """SLDs of every parameter and the SLD Fisher matrix ``Re Tr rho L_i L_j``."""
    theta = model.check_theta(theta)
    rho, slds = slds_at(model, theta, tol)
    return SldSet(theta, rho, slds, _fisher(rho, slds))


def curvature(model, theta, tol=DEFAULT_TOL):
    """Curvature form ``F_ij`` with ``d_i L_j`` from central differences of SLD solves."""
    theta = model.check_theta(theta)
    m = model.param_dim
    _, slds = slds_at(model, theta, tol)
    # dl[i][j] = d_i L_j
    dl = []
    for i in range(m):
        h = model.outer_step(theta, i)
        lo, hi = model.displaced(theta, i, h)
        l_lo = slds_at(model, lo, tol)[1]
        l_hi = slds_at(model, hi, tol)[1]
        dl.append([(l_hi[j] - l_lo[j]) / (2 * h) for j in range(m)])
    n = model.state_dim
    f = np.zeros((m, m, n, n), dtype=complex)
    for i, j in itertools.combinations(range(m), 2):
        fij = (dl[i][j] - dl[j][i]) - commutator(slds[i], slds[j]) / 2
        f[i, j] = fij
        f[j, i] = -fij
    return CurvatureTensor(theta, f, slds)


def worst_commutator(slds):
    """Largest ``comm_norm`` over pairs ``i < j``, with the pair attaining it."""
    worst, pair = 0.0, None
    for i, j in itertools.combinations(range(len(slds)), 2):
        c = comm_norm(slds[i], slds[j])
        if pair is None or c > worst:
            worst, pair = c, (i, j)
    return worst, pair


@dataclass
class LocalVerdict:
    locally_quasi_classical: bool
    worst_norm: float
    worst_pair: tuple

    def __iter__(self):
        return iter((self.locally_quasi_classical, self.worst_norm))


def classify_local(model, theta, tol=None, tolerances=DEFAULT_TOL):
    """Locally quasi-classical at ``theta`` iff all SLDs there pairwise commute.

    Unpacks as ``(is_local_qc, worst_comm_norm)``; the worst pair is in ``.worst_pair``.
    """
    tol = tolerances.comm_tol if tol is None else tol
    _, slds = slds_at(model, theta, tolerances)
    worst, pair = worst_commutator(slds)
    return LocalVerdict(worst <= tol, worst, pair)


def _grid_payload(model, theta, tolerances, with_curvature):
    _, slds = slds_at(model, theta, tolerances)
    f = curvature(model, theta, tolerances).max_norm() if with_curvature else None
    return slds, f


def classify_global(model, grid, tol=None, tolerances=DEFAULT_TOL, with_curvature=True, workers=None):
    """Classify ``model`` on a sampled parameter grid.

    quasi_classical (equivalently parallel) when ``[L_i(theta0), L_j(theta1)]``
    vanishes for all i, j and all grid pairs; locally_quasi_classical when SLDs
    commute at each grid point but not across points; otherwise
    not_locally_quasi_classical.
    """
    grid = [model.check_theta(p) for p in grid]
    if not grid:
        raise InputError("classify_global needs a non-empty grid")
    tol = tolerances.comm_tol if tol is None else tol
    payload = ordered_map(lambda p: _grid_payload(model, p, tolerances, with_curvature), grid, workers)

    out = Classification(verdict=QUASI_CLASSICAL, grid=grid, tol=tol)
    out.notes.append("commutation sampled on the listed grid only; continuous domain not certified")
    for k, (slds, fmax) in enumerate(payload):
        c, pair = worst_commutator(slds)
        if pair is not None and (out.worst_local_witness is None or c > out.worst_local_comm):
            out.worst_local_comm = c
            out.worst_local_witness = {"theta": grid[k].tolist(), "i": pair[0], "j": pair[1]}
        if fmax is not None and (out.worst_curvature is None or fmax > out.worst_curvature):
            out.worst_curvature = fmax
            out.worst_curvature_witness = {"theta": grid[k].tolist()}

    flat = [(k, i, l) for k, (slds, _) in enumerate(payload) for i, l in enumerate(slds)]
    for (ka, ia, la), (kb, ib, lb) in itertools.combinations(flat, 2):
        if ka == kb:
            continue
        c = comm_norm(la, lb)
        if out.worst_cross_witness is None or c > out.worst_cross_comm:
            out.worst_cross_comm = c
            out.worst_cross_witness = {"theta0": grid[ka].tolist(), "i": ia,
                                       "theta1": grid[kb].tolist(), "j": ib}

    if out.worst_local_comm > tol:
        out.verdict = NOT_LOCALLY_QUASI_CLASSICAL
    elif out.worst_cross_comm > tol:
        out.verdict = LOCALLY_QUASI_CLASSICAL
    return out


def theorem2_check(model, theta, tol=None, curvature_tol=None, tolerances=DEFAULT_TOL):
    """Check that the curvature and the SLD commutators vanish together at ``theta``.

    The point is flagged inconsistent only if one quantity is within its
    tolerance while the other exceeds ten times its own tolerance (the margin
    absorbs finite-difference error in the curvature).
    """
    tol = tolerances.comm_tol if tol is None else tol
    curvature_tol = tolerances.curvature_tol if curvature_tol is None else curvature_tol
    curv = curvature(model, theta, tolerances)
    comm, pair = worst_commutator(curv.slds)
    fmax = curv.max_norm()
    comm_zero = comm <= tol
    f_zero = fmax <= curvature_tol
    inconsistent = (comm_zero and fmax > 10 * curvature_tol) or (f_zero and comm > 10 * tol)
    return {
        "theta": curv.theta.tolist(),
        "max_curvature_norm": fmax,
        "max_comm_norm": comm,
        "worst_pair": pair,
        "curvature_vanishes": f_zero,
        "commutators_vanish": comm_zero,
        "consistent": not inconsistent,
        "tol": tol,
        "curvature_tol": curvature_tol,
    }

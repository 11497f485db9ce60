"""Finite-outcome measurements, locally unbiased estimators and the SLD Cramer-Rao bound.

For a locally unbiased estimator the covariance obeys ``V >= J^{-1}`` with
``J`` the SLD Fisher matrix. When the SLDs at ``theta`` commute, projecting
onto their common eigenbasis and reporting

    theta_hat^j(xi) = theta^j + sum_k [J^{-1}]^{jk} lambda_k(xi)

attains the bound; :func:`optimal_estimator` builds exactly that estimator.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._workers import ordered_map
from .errors import InputError, NotLocallyQuasiClassicalError
from .geometry import sld_set, worst_commutator
from .matcore import (
    DEFAULT_TOL,
    as_hermitian,
    dagger,
    fro,
    hermitian_part,
    random_unitary,
    sqrtm_psd,
)

SAMPLE_CHUNK = 1 << 16
PROB_CLIP = 1e-10


@dataclass
class Povm:
    """Finite-outcome measurement: psd elements summing to the identity."""

    outcomes: list
    elements: np.ndarray

    def __post_init__(self):
        els = np.asarray(self.elements, dtype=complex)
        if els.ndim != 3 or els.shape[1] != els.shape[2]:
            raise InputError(f"POVM elements must be a stack of square matrices, got {els.shape}")
        if len(self.outcomes) != len(els):
            raise InputError(f"{len(self.outcomes)} outcome labels for {len(els)} elements")
        els = np.array([as_hermitian(e, name=f"POVM element {lab!r}")
                        for lab, e in zip(self.outcomes, els)])
        for lab, e in zip(self.outcomes, els):
            lam = np.linalg.eigvalsh(e)[0]
            if lam < -1e-10:
                raise InputError(f"POVM element {lab!r} is not psd (min eigenvalue {lam:.3e})")
        gap = fro(els.sum(axis=0) - np.eye(els.shape[1]))
        if gap > 1e-10:
            raise InputError(f"POVM elements do not sum to the identity (defect {gap:.3e})")
        self.elements = els
        self.outcomes = list(self.outcomes)

    @property
    def dim(self):
        return self.elements.shape[1]

    @classmethod
    def projective(cls, basis, outcomes=None):
        """Rank-one projectors onto the columns of a unitary ``basis``."""
        basis = np.asarray(basis, dtype=complex)
        els = np.einsum("ik,jk->kij", basis, basis.conj())
        return cls(outcomes or list(range(1, basis.shape[1] + 1)), els)


@dataclass
class Estimator:
    povm: Povm
    estimates: np.ndarray

    def __post_init__(self):
        est = np.asarray(self.estimates, dtype=float)
        if est.ndim == 1:
            est = est[:, None]
        if est.shape[0] != len(self.povm.outcomes):
            raise InputError(f"{est.shape[0]} estimates for {len(self.povm.outcomes)} outcomes")
        self.estimates = est

    def to_dict(self):
        return {
            "outcomes": self.povm.outcomes,
            "elements": list(self.povm.elements),
            "estimates": self.estimates,
        }


@dataclass
class CovarianceReport:
    mean: np.ndarray
    cov: np.ndarray
    cr_bound: np.ndarray
    gap_min_eig: float
    samples: object = "exact"
    std_errors: np.ndarray = None
    mean_std_errors: np.ndarray = None

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items()}


def outcome_probabilities(povm, rho):
    """``p(xi) = Tr rho M(xi)``; round-off negatives down to -1e-10 are clipped to 0."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (povm.dim, povm.dim):
        raise InputError(f"state of shape {rho.shape} for a POVM on dimension {povm.dim}")
    p = np.einsum("ij,kji->k", rho, povm.elements).real
    if p.min() < -PROB_CLIP:
        raise InputError(f"negative outcome probability {p.min():.3e}")
    p = np.clip(p, 0.0, 1.0)
    if abs(p.sum() - 1.0) > 1e-10:
        raise InputError(f"outcome probabilities sum to {p.sum()!r}")
    return p


def _phase_fix(v):
    # largest-magnitude entry of each column made real positive
    idx = np.argmax(np.abs(v) > np.abs(v).max(axis=0) - 1e-12, axis=0)
    ph = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(ph) / ph)


def _clusters(values, scale, rtol=1e-8):
    groups, cur = [], [0]
    for k in range(1, len(values)):
        if values[k] - values[k - 1] <= rtol * scale:
            cur.append(k)
        else:
            groups.append(cur)
            cur = [k]
    groups.append(cur)
    return groups


def simultaneous_diagonalize(slds, tol=1e-8, seed=0):
    """Common eigenbasis of pairwise commuting Hermitian matrices.

    A random real combination of the matrices is diagonalized; degenerate
    clusters are then refined by diagonalizing each matrix in turn inside the
    cluster. Columns are ordered by descending eigenvalue of the first matrix
    (then the second, ...) and phase-fixed, so the output is deterministic.

    Returns:
        ``(basis, table)`` with ``table[k, xi] = <xi| L_k |xi>``.

    Raises:
        NotLocallyQuasiClassicalError: if some pair fails to commute within ``tol``.
    """
    slds = [as_hermitian(l) for l in slds]
    if not slds:
        raise InputError("need at least one matrix")
    worst, pair = worst_commutator(slds)
    if pair is not None and worst > tol:
        raise NotLocallyQuasiClassicalError(
            f"matrices {pair[0]} and {pair[1]} do not commute (comm_norm={worst:.3e} > {tol:g})",
            pair=pair, norm=worst)
    n = slds[0].shape[0]
    c = np.random.default_rng(seed).normal(size=len(slds))
    combo = sum(ck * l for ck, l in zip(c, slds))
    lam, v = np.linalg.eigh(combo)
    scale = max(1.0, fro(combo))

    def refine(basis, k):
        if basis.shape[1] == 1 or k == len(slds):
            return [basis]
        sub = dagger(basis) @ slds[k] @ basis
        mu, w = np.linalg.eigh(hermitian_part(sub))
        out = []
        for g in _clusters(mu, max(1.0, fro(slds[k]))):
            out.extend(refine(basis @ w[:, g], k + 1))
        return out

    cols = []
    for g in _clusters(lam, scale):
        cols.extend(refine(v[:, g], 0) if len(g) > 1 else [v[:, g]])
    basis = np.hstack(cols)
    table = np.array([np.einsum("ix,ij,jx->x", basis.conj(), l, basis).real for l in slds])
    order = np.lexsort(tuple(-np.round(row, 12) for row in table[::-1]))
    basis = _phase_fix(basis[:, order])
    table = table[:, order]

    for k, l in enumerate(slds):
        off = dagger(basis) @ l @ basis
        resid = fro(off - np.diag(np.diag(off)))
        if resid > 100 * tol * max(1.0, fro(l)):
            raise NotLocallyQuasiClassicalError(
                f"matrix {k} is not diagonal in the common basis (residual {resid:.3e})")
    return basis, table


def optimal_estimator(model, theta, tol=None, tolerances=DEFAULT_TOL):
    """Estimator attaining ``V = J^{-1}`` at ``theta`` (requires commuting SLDs).

    Outcomes ``1..n`` are the common SLD eigenvectors ``|xi>``, and
    ``theta_hat^j(xi) = theta^j + sum_{k=1}^{m} [J^{-1}]^{jk} lambda_k(xi)``.
    """
    tol = tolerances.comm_tol if tol is None else tol
    s = sld_set(model, theta, tolerances)
    try:
        basis, table = simultaneous_diagonalize(s.slds, tol)
    except NotLocallyQuasiClassicalError as exc:
        raise NotLocallyQuasiClassicalError(
            f"SLDs of {model.name} do not commute at theta={s.theta.tolist()}; the SLD "
            f"Cramer-Rao bound is not attainable there ({exc})", pair=exc.pair, norm=exc.norm
        ) from None
    estimates = s.theta[None, :] + (s.fisher_inverse @ table).T
    return Estimator(Povm.projective(basis), estimates)


def _expectation(est, model, theta):
    p = outcome_probabilities(est.povm, model.evaluate(theta))
    return p @ est.estimates


def check_locally_unbiased(est, model, theta, h=None):
    """Defects of ``E[theta_hat] = theta`` and ``d_i E[theta_hat^j] = delta_ij`` at ``theta``."""
    theta = model.check_theta(theta)
    m = model.param_dim
    mean = _expectation(est, model, theta)
    jac = np.empty((m, m))
    for i in range(m):
        hi_step = model.fd_step(theta, i) if h is None else h
        lo, hi = model.displaced(theta, i, hi_step)
        jac[i] = (_expectation(est, model, hi) - _expectation(est, model, lo)) / (2 * hi_step)
    return {
        "theta": theta.tolist(),
        "mean": mean,
        "jacobian": jac,
        "mean_defect": float(np.max(np.abs(mean - theta))),
        "derivative_defect": float(np.max(np.abs(jac - np.eye(m)))),
    }


def _gap(cov, bound):
    return float(np.linalg.eigvalsh((cov - bound + (cov - bound).T) / 2)[0])


def exact_covariance(est, model, theta, tolerances=DEFAULT_TOL):
    """Mean and covariance of ``theta_hat`` by summing over the outcomes."""
    s = sld_set(model, theta, tolerances)
    p = outcome_probabilities(est.povm, s.rho)
    mean = p @ est.estimates
    dev = est.estimates - mean
    cov = (dev * p[:, None]).T @ dev
    cov = (cov + cov.T) / 2
    bound = s.fisher_inverse
    return CovarianceReport(mean, cov, bound, _gap(cov, bound))


def sample_outcomes(povm, rho, n_samples, seed, workers=None):
    """Counts per outcome from ``n_samples`` i.i.d. draws.

    Draws are made in fixed-size chunks, each with its own child seed spawned
    from ``seed``, so the counts do not depend on how many workers run them.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise InputError("n_samples must be >= 1")
    p = outcome_probabilities(povm, rho)
    p = p / p.sum()
    sizes = [SAMPLE_CHUNK] * (n_samples // SAMPLE_CHUNK)
    if n_samples % SAMPLE_CHUNK:
        sizes.append(n_samples % SAMPLE_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def draw(job):
        size, ss = job
        return np.random.default_rng(ss).multinomial(size, p)

    parts = ordered_map(draw, list(zip(sizes, seeds)), workers)
    return np.sum(parts, axis=0)


def counts_csv(povm, counts):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["outcome", "count"])
    for lab, c in zip(povm.outcomes, counts):
        w.writerow([lab, int(c)])
    return buf.getvalue()


def covariance_from_counts(estimates, counts):
    """Sample mean/covariance of per-outcome estimates weighted by counts.

    Standard errors use the plug-in asymptotics
    ``Var(S_jk) ~ (E[(x_j - mu_j)^2 (x_k - mu_k)^2] - S_jk^2) / N``.
    """
    counts = np.asarray(counts, dtype=float)
    N = counts.sum()
    if N < 2:
        raise InputError("need at least 2 samples for a covariance")
    w = counts / N
    mean = w @ estimates
    dev = estimates - mean
    cov = (dev * counts[:, None]).T @ dev / (N - 1)
    cov = (cov + cov.T) / 2
    prod = dev[:, :, None] * dev[:, None, :]
    fourth = np.einsum("x,xjk->jk", w, prod ** 2)
    std_err = np.sqrt(np.maximum(fourth - cov ** 2, 0.0) / N)
    mean_se = np.sqrt(np.diag(cov) / N)
    return mean, cov, std_err, mean_se


def monte_carlo_covariance(est, model, theta, n_samples, seed, workers=None, tolerances=DEFAULT_TOL):
    """Empirical mean/covariance of ``theta_hat`` from simulated outcomes."""
    if int(n_samples) < 2:
        raise InputError("monte_carlo_covariance needs n_samples >= 2")
    s = sld_set(model, theta, tolerances)
    counts = sample_outcomes(est.povm, s.rho, n_samples, seed, workers)
    mean, cov, se, mse = covariance_from_counts(est.estimates, counts)
    bound = s.fisher_inverse
    rep = CovarianceReport(mean, cov, bound, _gap(cov, bound), int(n_samples), se, mse)
    return rep, counts


@dataclass
class AdaptiveResult:
    estimate: np.ndarray
    stage1: np.ndarray
    stage2: np.ndarray = None
    trace: dict = field(default_factory=dict)


def two_stage_adaptive(model, theta_true, theta_init, n1, n2, seed, workers=None,
                       margin=1e-3, tolerances=DEFAULT_TOL):
    """Two-stage adaptive estimation.

    Stage 1 measures with the estimator optimal at ``theta_init`` and averages
    ``n1`` estimates into ``theta1``; stage 2 repeats with the estimator optimal
    at ``theta1`` over ``n2`` samples. A ``theta1`` outside the domain is pulled
    back to the nearest point at distance ``margin`` inside it.
    """
    theta_true = model.check_theta(theta_true)
    theta_init = model.check_theta(theta_init)
    if int(n1) < 1 or int(n2) < 0:
        raise InputError("two_stage_adaptive needs n1 >= 1 and n2 >= 0")
    rho = model.evaluate(theta_true)
    s1, s2 = np.random.SeedSequence(seed).spawn(2)
    seed1 = int(s1.generate_state(1)[0])
    seed2 = int(s2.generate_state(1)[0])

    est1 = optimal_estimator(model, theta_init, tolerances=tolerances)
    c1 = sample_outcomes(est1.povm, rho, n1, seed1, workers)
    theta1 = (c1 @ est1.estimates) / c1.sum()
    trace = {"theta_init": theta_init, "stage1_raw": theta1.copy(), "n1": int(n1), "n2": int(n2),
             "stage1_counts": c1, "clamped": False}
    if not model.contains(theta1):
        theta1 = model.domain.clamp(theta1, margin)
        trace["clamped"] = True
    trace["stage1_estimate"] = theta1
    if int(n2) == 0:
        return AdaptiveResult(theta1, theta1, None, trace)

    est2 = optimal_estimator(model, theta1, tolerances=tolerances)
    c2 = sample_outcomes(est2.povm, rho, n2, seed2, workers)
    theta2 = (c2 @ est2.estimates) / c2.sum()
    trace["stage2_counts"] = c2
    trace["stage2_estimator"] = est2.to_dict()
    return AdaptiveResult(theta2, theta1, theta2, trace)


def random_povm(n, k, rng):
    """Random rank-one POVM with ``k >= n`` outcomes."""
    if k < n:
        raise InputError("need at least n outcomes")
    vecs = rng.normal(size=(k, n)) + 1j * rng.normal(size=(k, n))
    a = np.einsum("ki,kj->kij", vecs, vecs.conj())
    s = a.sum(axis=0)
    root = sqrtm_psd(np.linalg.inv(s))
    els = hermitian_part(root[None] @ a @ root[None])
    els[-1] = np.eye(n) - els[:-1].sum(axis=0)
    return Povm(list(range(1, k + 1)), hermitian_part(els))


def fit_locally_unbiased(povm, model, theta, max_resid=1e-9):
    """Minimum-norm estimates making ``povm`` locally unbiased at ``theta``.

    For each component ``j``, solves ``sum_xi p(xi) t(xi) = theta^j`` and
    ``sum_xi d_i p(xi) t(xi) = delta_ij`` by least squares. Returns ``None``
    when the constraints cannot be met (rank-deficient measurement).
    """
    theta = model.check_theta(theta)
    m = model.param_dim
    rho = model.evaluate(theta)
    p = outcome_probabilities(povm, rho)
    dps = [np.einsum("ij,kji->k", d, povm.elements).real for d in model.derivatives(theta)]
    a = np.vstack([p] + dps)
    b = np.vstack([theta[None, :], np.eye(m)])
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    if fro(a @ x - b) > max_resid:
        return None
    return Estimator(povm, x)


def random_locally_unbiased(model, theta, rng, max_tries=20):
    """A random locally unbiased estimator at ``theta``.

    Alternates between projective measurements in a random basis (usable when
    ``n >= m + 1``) and random rank-one POVMs with enough outcomes to satisfy
    the ``m + 1`` constraints per component.
    """
    n, m = model.state_dim, model.param_dim
    for _ in range(max_tries):
        if n >= m + 1 and rng.random() < 0.5:
            povm = Povm.projective(random_unitary(n, rng))
        else:
            k = int(rng.integers(max(n, m + 1), max(n, m + 1) + 2 * n + 1))
            povm = random_povm(n, k, rng)
        est = fit_locally_unbiased(povm, model, theta)
        if est is not None:
            return est
    raise InputError(f"could not build a locally unbiased estimator for {model.name}")

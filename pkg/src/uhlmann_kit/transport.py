"""Uhlmann parallel transport.

An amplitude ``W`` (invertible, ``Tr W W^dag = 1``) sits over the state
``pi(W) = W W^dag``. Along a curve of states the horizontal lift solves
``dW/dt = L_t W / 2`` with ``L_t`` the SLD of ``d rho / dt``. The relative
phase factor ``U`` compares the transported end point with the reference
amplitude ``W1`` aligned to the start: ``W(1) = W1 U``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, InputError
from .model import Lattice
from .matcore import (
    DEFAULT_TOL,
    as_density,
    dagger,
    fro,
    hermitian_part,
    polar_positive,
    random_unitary,
    sqrtm_psd,
)

DEFAULT_STEPS = 512
MIN_STEPS = 16


def project(w):
    """Bundle projection ``pi(W) = W W^dag``."""
    return w @ dagger(w)


def check_amplitude(w, tol=DEFAULT_TOL):
    w = np.asarray(w, dtype=complex)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InputError(f"amplitude must be square, got shape {w.shape}")
    norm = np.trace(project(w)).real
    if abs(norm - 1.0) > 1e-10:
        raise InputError(f"amplitude has Tr W W^dag = {norm!r}, expected 1")
    as_density(project(w), tol, name="pi(W)")
    return w


def amplitude(rho, unitary=None):
    """The amplitude ``rho^{1/2} U`` over ``rho`` (``U = I`` by default)."""
    s = sqrtm_psd(rho)
    return s if unitary is None else s @ unitary


@dataclass
class CurvePath:
    """Piecewise-linear curve through ``waypoints`` in parameter space.

    Segment ``k`` occupies ``t in [k/K, (k+1)/K]`` (K segments) and is
    traversed at constant speed.
    """

    model: object
    waypoints: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if pts.shape[1] != self.model.param_dim and pts.shape[0] == self.model.param_dim == 1:
            pts = pts.T
        if pts.ndim != 2 or pts.shape[1] != self.model.param_dim:
            raise InputError(f"waypoints must have {self.model.param_dim} coordinates each")
        if len(pts) < 2:
            raise InputError("a path needs at least two waypoints")
        for k, p in enumerate(pts):
            try:
                self.model.check_theta(p)
            except DomainError as exc:
                raise DomainError(f"waypoint {k}: {exc}") from None
        self.waypoints = pts

    @property
    def segments(self):
        return len(self.waypoints) - 1

    @property
    def is_closed(self):
        return bool(np.allclose(self.waypoints[0], self.waypoints[-1], rtol=0, atol=1e-14))

    def theta_at(self, t):
        k = min(int(np.floor(t * self.segments)), self.segments - 1)
        s = t * self.segments - k
        a, b = self.waypoints[k], self.waypoints[k + 1]
        return a + s * (b - a)

    def reversed(self):
        return CurvePath(self.model, self.waypoints[::-1].copy())


@dataclass
class TransportResult:
    w_start: np.ndarray
    w_end: np.ndarray
    steps: int
    defect: float
    max_defect: float
    max_norm_drift: float
    trajectory: list = None
    rpf: np.ndarray = None
    reference: np.ndarray = None
    unitarity_defect: float = None
    rpf_distance: float = None
    vanishes: bool = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        out = {
            "w_start": self.w_start, "w_end": self.w_end, "steps": self.steps,
            "defect": self.defect, "max_defect": self.max_defect,
            "max_norm_drift": self.max_norm_drift, "notes": self.notes,
        }
        if self.rpf is not None:
            out.update(rpf=self.rpf, reference_amplitude=self.reference,
                       unitarity_defect=self.unitarity_defect,
                       rpf_distance_from_identity=self.rpf_distance, rpf_vanishes=self.vanishes)
        return out


def _slds_on_segment(model, a, v, steps, tol):
    """SLDs of ``d rho/ds`` at the RK4 nodes ``s = 0, dt/2, dt, ..., 1`` of one segment."""
    s = np.linspace(0.0, 1.0, 2 * steps + 1)
    points = a[None, :] + s[:, None] * v[None, :]
    rhos, drhos = model.segment_states(points, v)
    lam, vec = np.linalg.eigh(rhos)
    if lam[:, 0].min() <= tol.positivity_floor:
        k = int(np.argmin(lam[:, 0]))
        as_density(rhos[k], tol, name=f"state at theta={points[k].tolist()}")
    d = dagger(vec) @ drhos @ vec
    ls = vec @ (2.0 * d / (lam[:, :, None] + lam[:, None, :])) @ dagger(vec)
    return points, rhos, hermitian_part(ls)


def horizontal_lift(path, w0, steps=DEFAULT_STEPS, keep_trajectory=False, tol=DEFAULT_TOL):
    """Integrate ``dW/dt = L_t W / 2`` along ``path`` with classical RK4.

    Each segment is integrated with ``steps`` fixed steps; after every step
    ``W`` is rescaled so that ``Tr W W^dag = 1``. The SLDs at all RK4 nodes
    of a segment are computed up front, since they depend on the path only.

    Raises:
        InputError: if ``pi(w0)`` does not match the path's initial state.
        ConvergenceError: if the end-point defect ``||pi(W(1)) - rho(1)||_F``
            exceeds ``tol.lift_tol``.
    """
    steps = int(steps)
    if steps < MIN_STEPS:
        raise InputError(f"steps must be >= {MIN_STEPS}, got {steps}")
    model = path.model
    if isinstance(model.domain, Lattice):
        raise InputError("grid models are defined on lattice points only and cannot be transported")
    w = check_amplitude(w0, tol)
    rho0 = model.evaluate(path.waypoints[0])
    mismatch = fro(project(w) - rho0)
    if mismatch > 1e-8:
        raise InputError(f"pi(w0) differs from rho(theta(0)) by {mismatch:.3e}")

    trajectory = [(0.0, w.copy())] if keep_trajectory else None
    max_defect = 0.0
    max_drift = 0.0
    K = path.segments
    dt = 1.0 / steps
    for k in range(K):
        a, b = path.waypoints[k], path.waypoints[k + 1]
        v = b - a
        if not np.any(v):
            continue
        _, rhos, ls = _slds_on_segment(model, a, v, steps, tol)
        half = 0.5 * ls
        for step in range(steps):
            a0, ah, a1 = half[2 * step], half[2 * step + 1], half[2 * step + 2]
            k1 = a0 @ w
            k2 = ah @ (w + dt / 2 * k1)
            k3 = ah @ (w + dt / 2 * k2)
            k4 = a1 @ (w + dt * k3)
            w = w + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            norm = np.vdot(w, w).real
            max_drift = max(max_drift, abs(norm - 1.0))
            w = w / np.sqrt(norm)
            if keep_trajectory:
                trajectory.append(((k + (step + 1) * dt) / K, w.copy()))
                max_defect = max(max_defect, fro(project(w) - rhos[2 * step + 2]))

    rho1 = model.evaluate(path.waypoints[-1])
    defect = fro(project(w) - rho1)
    max_defect = max(max_defect, defect)
    if defect > tol.lift_tol:
        raise ConvergenceError(
            f"horizontal lift end-point defect {defect:.3e} exceeds lift_tol={tol.lift_tol:g}; "
            f"increase steps (currently {steps} per segment)"
        )
    return TransportResult(np.asarray(w0, dtype=complex), w, steps, defect, max_defect,
                           max_drift, trajectory)


def reference_amplitude(w0, rho1, tol=DEFAULT_TOL):
    """Amplitude over ``rho1`` aligned with ``w0``.

    Returns ``W1 = rho1^{1/2} K^dag`` where ``W0^dag rho1^{1/2} = P K`` is the
    left polar decomposition; then ``W0^dag W1 = P`` is Hermitian positive
    semidefinite. Positivity (not just Hermiticity) makes the choice unique.
    """
    w0 = np.asarray(w0, dtype=complex)
    rho1 = as_density(rho1, tol, name="rho1")
    s = sqrtm_psd(rho1)
    _, k = polar_positive(dagger(w0) @ s)
    return s @ dagger(k)


def relative_phase_factor(path, w0, steps=DEFAULT_STEPS, keep_trajectory=False, tol=DEFAULT_TOL):
    """Horizontal lift plus the relative phase factor ``U = W1^{-1} W(1)``."""
    res = horizontal_lift(path, w0, steps, keep_trajectory, tol)
    rho1 = path.model.evaluate(path.waypoints[-1])
    ref = reference_amplitude(res.w_start, rho1, tol)
    u = np.linalg.solve(ref, res.w_end)
    n = u.shape[0]
    res.rpf = u
    res.reference = ref
    res.unitarity_defect = fro(dagger(u) @ u - np.eye(n))
    res.rpf_distance = fro(u - np.eye(n))
    res.vanishes = res.rpf_distance <= tol.rpf_tol
    res.notes.append("reference amplitude uses the positive-semidefinite alignment W0^dag W1 >= 0")
    return res


def holonomy(model, waypoints, w0=None, steps=DEFAULT_STEPS, tol=DEFAULT_TOL):
    """RPF around the loop through ``waypoints`` (closed automatically)."""
    pts = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if not np.allclose(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[:1]])
    path = CurvePath(model, pts)
    if w0 is None:
        w0 = amplitude(model.evaluate(pts[0]))
    return relative_phase_factor(path, w0, steps, tol=tol)


def _rectangle(theta, i, j, d):
    ei = np.zeros_like(theta)
    ej = np.zeros_like(theta)
    ei[i] = d
    ej[j] = d
    return [theta, theta + ei, theta + ei + ej, theta + ej, theta]


def plaquette_residual(model, theta, i, j, dtheta, steps=MIN_STEPS, w0=None, curv=None, tol=DEFAULT_TOL):
    """Distance between the numeric loop RPF and ``I + W0^{-1} F_ij W0 dtheta^2 / 2``."""
    from .geometry import curvature

    theta = model.check_theta(theta)
    if w0 is None:
        w0 = amplitude(model.evaluate(theta))
    if curv is None:
        curv = curvature(model, theta, tol)
    res = holonomy(model, _rectangle(theta, i, j, dtheta), w0, steps, tol)
    n = model.state_dim
    predicted = np.eye(n) + 0.5 * np.linalg.solve(w0, curv.f[i, j] @ w0) * dtheta ** 2
    return fro(res.rpf - predicted), res, predicted


def plaquette_check(model, theta, i, j, dtheta, steps=MIN_STEPS, w0=None, min_ratio=6.0, tol=DEFAULT_TOL):
    """Small-rectangle holonomy against the curvature form.

    The rectangle ``theta -> +d e_i -> +d e_j -> -d e_i -> theta`` is
    integrated at ``d = dtheta`` and ``d = dtheta/2``. The residual against the
    second-order prediction must shrink at least ``min_ratio``-fold per halving
    (third-order decay would give 8).
    """
    from .geometry import curvature

    theta = model.check_theta(theta)
    if w0 is None:
        w0 = amplitude(model.evaluate(theta))
    curv = curvature(model, theta, tol)
    r_full, res, predicted = plaquette_residual(model, theta, i, j, dtheta, steps, w0, curv, tol)
    r_half, _, _ = plaquette_residual(model, theta, i, j, dtheta / 2, steps, w0, curv, tol)
    if r_half == 0.0:
        ratio = float("inf") if r_full > 0 else None
    else:
        ratio = r_full / r_half
    return {
        "theta": theta.tolist(), "i": i, "j": j, "dtheta": dtheta, "steps": steps,
        "rpf": res.rpf, "predicted": predicted, "curvature": curv.f[i, j],
        "residual": r_full, "residual_half": r_half, "decay_ratio": ratio,
        "passes": ratio is None or ratio >= min_ratio,
    }


def fiber_min_check(model, theta, direction, trials=100, seed=0, tol=DEFAULT_TOL):
    """Horizontal velocity minimizes ``4 Tr dW/dt dW^dag/dt`` over the fiber.

    The horizontal velocity ``W' = L W / 2`` gives ``direction^T J direction``;
    vertical perturbations ``W' + W G`` (G skew-Hermitian) can only increase it.
    """
    from .geometry import sld_set

    direction = np.asarray(direction, dtype=float)
    if direction.shape != (model.param_dim,) or not np.any(direction):
        raise InputError("direction must be a nonzero vector with one entry per parameter")
    rng = np.random.default_rng(seed)
    s = sld_set(model, theta, tol)
    n = model.state_dim
    w = amplitude(s.rho, random_unitary(n, rng))
    L = sum(c * l for c, l in zip(direction, s.slds))
    wdot = 0.5 * L @ w
    horizontal = 4 * np.trace(wdot @ dagger(wdot)).real
    fisher_value = float(direction @ s.fisher @ direction)

    vertical = []
    for _ in range(trials):
        g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        g = (g - dagger(g)) / 2
        wp = wdot + w @ g
        vertical.append(4 * np.trace(wp @ dagger(wp)).real)
    vertical = np.array(vertical)
    gap = float(vertical.min() - horizontal) if trials else None
    return {
        "theta": s.theta.tolist(), "direction": direction.tolist(),
        "horizontal_value": horizontal, "fisher_value": fisher_value,
        "identity_error": abs(horizontal - fisher_value),
        "trials": trials, "seed": seed,
        "min_vertical_value": float(vertical.min()) if trials else None,
        "min_gap": gap,
        "horizontal_is_minimal": gap is None or gap >= -1e-10,
    }

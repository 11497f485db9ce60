"""Parametric quantum statistical models and the built-in model zoo.

A model maps a parameter vector ``theta`` (length ``m``) to a strictly positive
``n x n`` density matrix, and gives access to the partial derivatives
``d rho / d theta^i`` either analytically or by central differences.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np

from .errors import DomainError, InputError
from .matcore import (
    DEFAULT_TOL,
    PAULIS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    as_density,
    as_hermitian,
    comm_norm,
    dagger,
    expm_hermitian,
    fro,
    hermitian_part,
)
from .serialize import decode_matrix

FD_RELATIVE_STEP = 1e-5


def _as_theta(theta, m):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (m,):
        raise InputError(f"theta must have {m} components, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta has non-finite components")
    return theta


# --------------------------------------------------------------------------
# Domains
# --------------------------------------------------------------------------

class Box:
    """Product of open intervals ``(lower_i, upper_i)``."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise InputError("Box needs lower < upper componentwise")

    def check(self, theta):
        for i, (x, lo, hi) in enumerate(zip(theta, self.lower, self.upper)):
            if not lo < x < hi:
                raise DomainError(f"theta[{i}] = {x!r} outside open interval ({lo!r}, {hi!r})")

    def sample_box(self):
        w = self.upper - self.lower
        return self.lower + 0.1 * w, self.upper - 0.1 * w

    def clamp(self, theta, margin=1e-3):
        return np.clip(theta, self.lower + margin, self.upper - margin)

    def describe(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class Ball:
    """Open Euclidean ball ``|theta - center| < radius``."""

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def check(self, theta):
        r = float(np.linalg.norm(theta - self.center))
        if not r < self.radius:
            raise DomainError(f"|theta - center| = {r!r} not below ball radius {self.radius!r}")

    def sample_box(self):
        half = 0.8 * self.radius / np.sqrt(len(self.center))
        return self.center - half, self.center + half

    def clamp(self, theta, margin=1e-3):
        d = theta - self.center
        r = np.linalg.norm(d)
        limit = self.radius - margin
        return theta if r <= limit else self.center + d * (limit / r)

    def describe(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


class Simplex:
    """Open probability simplex ``theta_i > 0, sum(theta) < 1``."""

    def __init__(self, m):
        self.m = m

    def check(self, theta):
        for i, x in enumerate(theta):
            if not x > 0:
                raise DomainError(f"theta[{i}] = {x!r} must be > 0")
        s = float(np.sum(theta))
        if not s < 1:
            raise DomainError(f"sum(theta) = {s!r} must be < 1")

    def sample_box(self):
        return np.full(self.m, 0.1 / self.m), np.full(self.m, 0.9 / self.m)

    def clamp(self, theta, margin=1e-3):
        x = np.maximum(theta, margin)
        cap = 1.0 - margin
        if x.sum() <= cap:
            return x
        # Euclidean projection onto {x_i >= margin, sum x = cap}
        y = theta - margin
        budget = cap - margin * self.m
        u = np.sort(y)[::-1]
        css = np.cumsum(u) - budget
        k = np.nonzero(u - css / np.arange(1, self.m + 1) > 0)[0][-1]
        tau = css[k] / (k + 1)
        return np.maximum(y - tau, 0.0) + margin

    def describe(self):
        return {"type": "simplex", "m": self.m}


class Lattice:
    """Closed box spanned by per-axis uniform lattices (grid models only)."""

    def __init__(self, axes):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.steps = []
        for k, a in enumerate(self.axes):
            if a.ndim != 1 or len(a) < 2:
                raise InputError(f"axes[{k}] needs at least two lattice values")
            d = np.diff(a)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * abs(d[0]):
                raise InputError(f"axes[{k}] must be uniformly spaced and increasing")
            self.steps.append(float(d[0]))

    def index(self, theta):
        idx = []
        for i, (x, a, h) in enumerate(zip(theta, self.axes, self.steps)):
            k = int(round((x - a[0]) / h))
            if k < 0 or k >= len(a) or abs(a[k] - x) > 1e-9 * h:
                raise DomainError(
                    f"theta[{i}] = {x!r} is not a lattice point; grid models do not interpolate"
                )
            idx.append(k)
        return tuple(idx)

    def check(self, theta):
        self.index(theta)

    def sample_box(self):
        return np.array([a[1] for a in self.axes]), np.array([a[-2] for a in self.axes])

    def clamp(self, theta, margin=1e-3):
        out = []
        for x, a in zip(theta, self.axes):
            inner = a[1:-1] if len(a) > 2 else a
            out.append(inner[np.argmin(np.abs(inner - x))])
        return np.array(out)

    def describe(self):
        return {"type": "lattice", "axes": [a.tolist() for a in self.axes]}


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------

class ParametricModel:
    """A family ``theta -> rho(theta)`` of strictly positive density matrices.

    Args:
        name: identifier echoed into reports.
        param_dim: number of parameters ``m``.
        state_dim: Hilbert-space dimension ``n``.
        domain: a :class:`Box`, :class:`Ball`, :class:`Simplex` or :class:`Lattice`.
        state_fn: ``theta -> rho`` (unvalidated).
        derivative_fn: optional ``(theta, i) -> d rho / d theta^i``.
        params: construction parameters, kept for report echoes.
    """

    def __init__(self, name, param_dim, state_dim, domain, state_fn,
                 derivative_fn=None, params=None, tol=DEFAULT_TOL):
        self.name = name
        self.param_dim = int(param_dim)
        self.state_dim = int(state_dim)
        self.domain = domain
        self._state_fn = state_fn
        self._derivative_fn = derivative_fn
        self.params = dict(params or {})
        self.tol = tol
        self.fd_rel_step = FD_RELATIVE_STEP

    @property
    def has_analytic_derivative(self):
        return self._derivative_fn is not None

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, m={self.param_dim}, n={self.state_dim})"

    def describe(self):
        return {"name": self.name, "m": self.param_dim, "n": self.state_dim,
                "domain": self.domain.describe(), "params": self.params}

    def check_theta(self, theta):
        theta = _as_theta(theta, self.param_dim)
        self.domain.check(theta)
        return theta

    def contains(self, theta):
        try:
            self.check_theta(theta)
        except DomainError:
            return False
        return True

    def evaluate(self, theta, validate=True):
        theta = self.check_theta(theta)
        rho = hermitian_part(np.asarray(self._state_fn(theta), dtype=complex))
        if validate:
            rho = as_density(rho, self.tol, name=f"{self.name} state at theta={theta.tolist()}")
        return rho

    def fd_step(self, theta, i):
        return self.fd_rel_step * max(1.0, abs(float(theta[i])))

    def outer_step(self, theta, i):
        """Step for differentiating quantities that are themselves derivatives."""
        return 10 * self.fd_step(theta, i)

    def displaced(self, theta, i, h):
        """The stencil pair ``theta -/+ h e_i``, checked against the domain."""
        e = np.zeros(self.param_dim)
        e[i] = h
        lo, hi = theta - e, theta + e
        for p in (lo, hi):
            try:
                self.domain.check(p)
            except DomainError as exc:
                raise DomainError(
                    f"finite-difference stencil theta[{i}] +/- {h:g} leaves the domain "
                    f"({exc}); use a smaller h or move away from the boundary"
                ) from None
        return lo, hi

    def raw_derivative(self, theta, i, h=None, analytic=True):
        """``d rho / d theta^i`` before Hermitian/traceless projection."""
        theta = self.check_theta(theta)
        if not 0 <= i < self.param_dim:
            raise InputError(f"parameter index {i} out of range for m={self.param_dim}")
        if analytic and self._derivative_fn is not None and h is None:
            return np.asarray(self._derivative_fn(theta, i), dtype=complex)
        h = self.fd_step(theta, i) if h is None else float(h)
        lo, hi = self.displaced(theta, i, h)
        return (self.evaluate(hi, validate=False) - self.evaluate(lo, validate=False)) / (2 * h)

    def derivative(self, theta, i, h=None, analytic=True):
        """Hermitian, traceless ``d rho / d theta^i``.

        Uses the analytic derivative when available (and no explicit ``h`` is
        given), otherwise a central difference with step
        ``h = 1e-5 * max(1, |theta^i|)``.
        """
        d = hermitian_part(self.raw_derivative(theta, i, h, analytic))
        return d - np.trace(d).real / self.state_dim * np.eye(self.state_dim)

    def derivatives(self, theta, h=None, analytic=True):
        return [self.derivative(theta, i, h, analytic) for i in range(self.param_dim)]

    def segment_states(self, points, velocity):
        """States and chain-rule velocities ``sum_i v^i d_i rho`` at many points.

        Fast path for transport: the caller guarantees every point lies in the
        (convex) domain, so no per-point validation is done.
        Returns two ``(N, n, n)`` arrays.
        """
        n = self.state_dim
        eye = np.eye(n)
        rhos = np.empty((len(points), n, n), dtype=complex)
        drhos = np.zeros((len(points), n, n), dtype=complex)
        active = [i for i, v in enumerate(velocity) if v != 0.0]
        for k, theta in enumerate(points):
            rhos[k] = self._state_fn(theta)
            for i in active:
                if self._derivative_fn is not None:
                    d = self._derivative_fn(theta, i)
                else:
                    h = self.fd_step(theta, i)
                    e = np.zeros(self.param_dim)
                    e[i] = h
                    d = (self._state_fn(theta + e) - self._state_fn(theta - e)) / (2 * h)
                drhos[k] += velocity[i] * np.asarray(d)
        rhos = hermitian_part(rhos)
        drhos = hermitian_part(drhos)
        drhos -= (np.trace(drhos, axis1=1, axis2=2).real / n)[:, None, None] * eye
        return rhos, drhos


class GridModel(ParametricModel):
    """Model tabulated on a uniform lattice; only lattice points are valid inputs.

    Derivatives are central differences with the lattice step, so they are
    available at interior lattice points only.
    """

    def __init__(self, axes, states, name="grid", params=None, tol=DEFAULT_TOL):
        lattice = Lattice(axes)
        shape = tuple(len(a) for a in lattice.axes)
        states = np.asarray(states, dtype=complex)
        n = states.shape[-1]
        states = states.reshape(shape + (n, n))
        for idx in itertools.product(*(range(s) for s in shape)):
            as_density(states[idx], tol, name=f"grid state at index {list(idx)}")
        self._states = states
        self._lattice = lattice
        super().__init__(name, len(shape), n, lattice,
                         lambda theta: self._states[self._lattice.index(theta)],
                         params=params, tol=tol)

    def fd_step(self, theta, i):
        return self._lattice.steps[i]

    def outer_step(self, theta, i):
        return self._lattice.steps[i]

    def raw_derivative(self, theta, i, h=None, analytic=True):
        return super().raw_derivative(theta, i, h=self._lattice.steps[i], analytic=False)


class ParallelFactorModel(ParametricModel):
    """``rho(theta) = M(theta) rho0 M(theta)`` with commuting Hermitian factors.

    ``M(theta) = exp(sum_i theta^i X_i / 2) / sqrt(Tr rho0 exp(sum_i theta^i X_i))``
    where the generators ``X_i`` pairwise commute. Every such model is
    parallel, hence quasi-classical.
    """

    def __init__(self, generators, base_state, bound=1.0, name="parallel_exp", tol=DEFAULT_TOL):
        gens = [as_hermitian(x, tol, name=f"generators[{k}]") for k, x in enumerate(generators)]
        if not gens:
            raise InputError("parallel_exp needs at least one generator")
        rho0 = as_density(base_state, tol, name="base_state")
        n = rho0.shape[0]
        for k, x in enumerate(gens):
            if x.shape != (n, n):
                raise InputError(f"generators[{k}] has shape {x.shape}, expected {(n, n)}")
        for a, b in itertools.combinations(range(len(gens)), 2):
            c = comm_norm(gens[a], gens[b])
            if c > 1e-12:
                raise InputError(f"generators[{a}] and generators[{b}] do not commute (comm_norm={c:.3e})")
        self.generators = gens
        self.base_state = rho0
        m = len(gens)
        params = {"generators": gens, "base_state": rho0, "bound": float(bound)}
        super().__init__(name, m, n, Box(np.full(m, -bound), np.full(m, bound)),
                         self._state, self._derivative, params=params, tol=tol)

    def _exponent(self, theta):
        return sum(t * x for t, x in zip(theta, self.generators))

    def factor(self, theta):
        """The Hermitian factor ``M(theta)``."""
        return self._factor(self.check_theta(theta))

    def _factor(self, theta):
        e = expm_hermitian(self._exponent(theta) / 2)
        z = np.trace(self.base_state @ e @ e).real
        return e / np.sqrt(z)

    def _state(self, theta):
        m = self._factor(theta)
        return m @ self.base_state @ m

    def _derivative(self, theta, i):
        rho = hermitian_part(self._state(theta))
        x = self.generators[i]
        return (x @ rho + rho @ x) / 2 - rho * np.trace(rho @ x).real

    def segment_states(self, points, velocity):
        # batched version of _state and sum_i v^i _derivative
        points = np.asarray(points, dtype=float)
        gens = np.asarray(self.generators)
        expo = hermitian_part(np.einsum("ki,iab->kab", points, gens) / 2)
        lam, v = np.linalg.eigh(expo)
        e = (v * np.exp(lam)[:, None, :]) @ dagger(v)
        unnorm = e @ self.base_state @ e
        rhos = hermitian_part(unnorm / np.trace(unnorm, axis1=1, axis2=2).real[:, None, None])
        x = np.einsum("i,iab->ab", np.asarray(velocity, dtype=float), gens)
        mean = np.trace(rhos @ x, axis1=1, axis2=2).real
        drhos = hermitian_part((x @ rhos + rhos @ x) / 2 - rhos * mean[:, None, None])
        return rhos, drhos


# --------------------------------------------------------------------------
# Zoo
# --------------------------------------------------------------------------

def bloch_full():
    """Qubit Bloch ball ``rho = (I + theta . sigma) / 2``, ``|theta| < 1``."""
    return ParametricModel(
        "bloch_full", 3, 2, Ball(np.zeros(3), 1.0),
        lambda t: (np.eye(2) + sum(x * s for x, s in zip(t, PAULIS))) / 2,
        lambda t, i: PAULIS[i] / 2,
    )


def bloch_equator2():
    """Equatorial disc ``rho = (I + theta1 sx + theta2 sy) / 2``."""
    sig = (SIGMA_X, SIGMA_Y)
    return ParametricModel(
        "bloch_equator2", 2, 2, Ball(np.zeros(2), 1.0),
        lambda t: (np.eye(2) + t[0] * SIGMA_X + t[1] * SIGMA_Y) / 2,
        lambda t, i: sig[i] / 2,
    )


def classical_simplex(n=2):
    """Diagonal family ``diag(theta_1, ..., theta_{n-1}, 1 - sum theta)``."""
    n = int(n)
    if n < 2:
        raise InputError("classical_simplex needs n >= 2")
    m = n - 1

    def state(t):
        return np.diag(np.append(t, 1.0 - t.sum())).astype(complex)

    def deriv(t, i):
        d = np.zeros(n)
        d[i], d[-1] = 1.0, -1.0
        return np.diag(d).astype(complex)

    return ParametricModel("classical_simplex", m, n, Simplex(m), state, deriv, params={"n": n})


def parallel_exp(generators=None, base_state=None, bound=1.0):
    """Parallel model built from commuting generators (default: ``X = sz``, ``rho0 = diag(.7, .3)``)."""
    if generators is None:
        generators = [SIGMA_Z]
    if base_state is None:
        base_state = np.diag([0.7, 0.3]).astype(complex)
    return ParallelFactorModel(generators, base_state, bound=bound)


def bloch_arc(radius=0.6):
    """One-parameter circle ``rho = (I + r (cos t sx + sin t sy)) / 2``, ``|t| < 3``.

    Locally quasi-classical everywhere (a single SLD always commutes with
    itself) but not quasi-classical: SLDs at different points do not commute.
    """
    r = float(radius)
    if not 0 < r < 1:
        raise InputError("bloch_arc radius must lie in (0, 1)")
    return ParametricModel(
        "bloch_arc", 1, 2, Box([-3.0], [3.0]),
        lambda t: (np.eye(2) + r * (np.cos(t[0]) * SIGMA_X + np.sin(t[0]) * SIGMA_Y)) / 2,
        lambda t, i: r * (-np.sin(t[0]) * SIGMA_X + np.cos(t[0]) * SIGMA_Y) / 2,
        params={"radius": r},
    )


ZOO = {
    "bloch_full": (bloch_full, "m=3 qubit Bloch ball; SLDs do not commute"),
    "bloch_equator2": (bloch_equator2, "m=2 equatorial disc; locally non-commuting SLDs"),
    "classical_simplex": (classical_simplex, "m=n-1 diagonal family (param n); quasi-classical"),
    "parallel_exp": (parallel_exp, "commuting-factor model M rho0 M (params generators, base_state, bound); parallel"),
    "bloch_arc": (bloch_arc, "m=1 circle in the Bloch disc (param radius); locally but not globally quasi-classical"),
    "user_file": (None, "model loaded from a JSON file (param path)"),
}


def zoo(name, **params):
    """Instantiate a built-in model by name."""
    if name == "user_file":
        if "path" not in params:
            raise InputError("user_file needs a 'path' parameter")
        return load_model_file(params["path"])
    if name not in ZOO:
        raise InputError(f"unknown model {name!r}; valid names: {', '.join(sorted(ZOO))}")
    try:
        return ZOO[name][0](**params)
    except TypeError as exc:
        raise InputError(f"bad parameters for {name!r}: {exc}") from None


def grid_points(model, points_per_axis=None):
    """Regular grid over the model's sample box (odd counts include the centre)."""
    m = model.param_dim
    if points_per_axis is None:
        points_per_axis = {1: 9, 2: 5}.get(m, 3)
    if isinstance(model.domain, Lattice):
        axes = [a[1:-1] for a in model.domain.axes]
    else:
        lo, hi = model.domain.sample_box()
        axes = [np.linspace(a, b, points_per_axis) for a, b in zip(lo, hi)]
    return [np.array(p) for p in itertools.product(*axes)]


def random_point(model, rng):
    if isinstance(model.domain, Lattice):
        return np.array([rng.choice(a[1:-1]) for a in model.domain.axes])
    lo, hi = model.domain.sample_box()
    return rng.uniform(lo, hi)


def check_derivatives(model, rng, points=5, atol=1e-6):
    """Largest Frobenius gap between analytic and central-difference derivatives."""
    worst = 0.0
    for _ in range(points):
        theta = random_point(model, rng)
        for i in range(model.param_dim):
            a = model.derivative(theta, i)
            b = model.derivative(theta, i, analytic=False)
            worst = max(worst, fro(a - b))
    if worst > atol:
        raise InputError(f"{model.name}: analytic derivative disagrees with central differences by {worst:.3e}")
    return worst


# --------------------------------------------------------------------------
# Model files
# --------------------------------------------------------------------------

def model_from_dict(spec, tol=DEFAULT_TOL):
    """Build a model from the JSON model-file structure.

    Supported kinds: ``"grid"``, ``"parallel_exp"``, and every zoo name (with an
    optional ``"params"`` object).
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InputError("model file must be a JSON object with a 'kind' field")
    kind = spec["kind"]
    n = spec.get("n")
    m = spec.get("m")
    if kind == "grid":
        for field in ("axes", "states"):
            if field not in spec:
                raise InputError(f"grid model: missing field {field!r}")
        states = [decode_matrix(s, f"states[{k}]", n) for k, s in enumerate(spec["states"])]
        expected = int(np.prod([len(a) for a in spec["axes"]]))
        if len(states) != expected:
            raise InputError(f"grid model: 'states' has {len(states)} entries, axes need {expected}")
        if m is not None and m != len(spec["axes"]):
            raise InputError(f"grid model: m={m} but {len(spec['axes'])} axes given")
        return GridModel(spec["axes"], states, name=spec.get("name", "grid"), tol=tol)
    if kind == "parallel_exp":
        for field in ("generators", "base_state"):
            if field not in spec:
                raise InputError(f"parallel_exp model: missing field {field!r}")
        gens = [decode_matrix(g, f"generators[{k}]", n) for k, g in enumerate(spec["generators"])]
        if m is not None and m != len(gens):
            raise InputError(f"parallel_exp model: m={m} but {len(gens)} generators given")
        rho0 = decode_matrix(spec["base_state"], "base_state", n)
        return ParallelFactorModel(gens, rho0, bound=spec.get("bound", 1.0), tol=tol)
    if kind in ZOO and kind != "user_file":
        return zoo(kind, **spec.get("params", {}))
    raise InputError(f"unknown model kind {kind!r}; expected 'grid', 'parallel_exp' or a zoo name")


def load_model_file(path, tol=DEFAULT_TOL):
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"model file {path} is not valid JSON: {exc}") from None
    return model_from_dict(spec, tol)

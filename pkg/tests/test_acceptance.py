"""Acceptance criteria 1-9; criterion 10 (suite wall-clock) is reported by conftest."""

import itertools
import json
import time

import numpy as np
import pytest

from conftest import QUASI_CLASSICAL, ZOO_FACTORIES, qutrit_parallel
from uhlmann_kit import cli
from uhlmann_kit import estimation as E
from uhlmann_kit import geometry as G
from uhlmann_kit import model as M
from uhlmann_kit import transport as T
from uhlmann_kit._workers import THREADS_ENV
from uhlmann_kit.matcore import (
    SIGMA_Z,
    comm_norm,
    fro,
    random_density,
    random_traceless_hermitian,
    sld_residual,
    solve_sld,
)


def test_c1_sld_correctness(criterion):
    rng = np.random.default_rng(1)
    pairs = [(random_density(n, rng, min_eig=1e-3), random_traceless_hermitian(n, rng))
             for n in (2, 3, 4) for _ in range(334)][:1000]
    start = time.perf_counter()
    worst = 0.0
    for rho, drho in pairs:
        L = solve_sld(rho, drho)
        worst = max(worst, sld_residual(rho, drho, L) / max(1.0, fro(drho)))
    elapsed = time.perf_counter() - start
    ok = criterion(1, worst <= 1e-10 and elapsed < 5.0,
                   f"{len(pairs)} SLD solves, worst relative residual {worst:.1e}, {elapsed:.2f} s")
    assert ok


def test_c2_fisher_sanity(criterion):
    bloch = G.sld_set(M.bloch_full(), [0, 0, 0]).fisher
    err_bloch = np.abs(bloch - np.eye(3)).max()
    cs = M.classical_simplex(2)
    err_simplex = 0.0
    for theta in np.arange(1, 10) / 10:
        j = G.sld_set(cs, [theta]).fisher[0, 0]
        exact = 1 / (theta * (1 - theta))
        err_simplex = max(err_simplex, abs(j - exact) / exact)
    ok = criterion(2, err_bloch <= 1e-12 and err_simplex <= 1e-8,
                   f"bloch |J-I| {err_bloch:.1e}, simplex relative error {err_simplex:.1e}")
    assert ok


def test_c3_curvature_commutator_equivalence(criterion):
    rng = np.random.default_rng(3)
    comm_tol, curv_tol = 1e-8, 1e-6
    bad = []
    worst_ratio = 0.0
    for name, factory in sorted(ZOO_FACTORIES.items()):
        model = factory()
        if model.param_dim < 2:
            continue
        for _ in range(20):
            theta = M.random_point(model, rng)
            _, slds = G.slds_at(model, theta)
            comm = max((comm_norm(a, b) for a, b in itertools.combinations(slds, 2)), default=0.0)
            curv = G.curvature(model, theta).max_norm()
            if (comm <= comm_tol and curv > 100 * curv_tol) or (curv <= curv_tol and comm > 100 * comm_tol):
                bad.append((name, theta.tolist()))
            if comm <= comm_tol:
                worst_ratio = max(worst_ratio, curv / curv_tol)
    ok = criterion(3, not bad, f"{len(bad)} inconsistent points; max curvature/tol on commuting points "
                               f"{worst_ratio:.1e}")
    assert ok, bad


def test_c3_covers_four_models():
    assert sum(f().param_dim >= 2 for f in ZOO_FACTORIES.values()) >= 4


def test_c4_plaquette(criterion):
    b = M.bloch_full()
    theta = np.zeros(3)
    w0 = T.amplitude(b.evaluate(theta))
    curv = G.curvature(b, theta)
    res = [T.plaquette_residual(b, theta, 0, 1, d, steps=16, w0=w0, curv=curv)[0]
           for d in (1e-2, 5e-3, 2.5e-3)]
    ratios = [res[0] / res[1], res[1] / res[2]]
    f_err = fro(curv.f[0, 1] + 1j * SIGMA_Z)
    ok = criterion(4, min(ratios) >= 6 and f_err <= 1e-4,
                   f"decay ratios {ratios[0]:.1f}, {ratios[1]:.1f}; |F12 + i sz| {f_err:.1e}")
    assert ok


def test_c5_fiber_minimization(criterion):
    rng = np.random.default_rng(5)
    worst_identity, worst_gap = 0.0, np.inf
    for name, factory in sorted(ZOO_FACTORIES.items()):
        model = factory()
        for k in range(5):
            theta = M.random_point(model, rng)
            direction = rng.normal(size=model.param_dim)
            rep = T.fiber_min_check(model, theta, direction, trials=100, seed=k)
            worst_identity = max(worst_identity, rep["identity_error"])
            worst_gap = min(worst_gap, rep["min_gap"])
    ok = criterion(5, worst_identity <= 1e-8 and worst_gap >= -1e-10,
                   f"worst identity error {worst_identity:.1e}, smallest vertical gap {worst_gap:.1e}")
    assert ok


def test_c6_optimal_estimator(criterion):
    rng = np.random.default_rng(6)
    worst_cov, worst_unb = 0.0, 0.0
    for name in QUASI_CLASSICAL:
        model = ZOO_FACTORIES[name]()
        for _ in range(5):
            theta = M.random_point(model, rng)
            est = E.optimal_estimator(model, theta)
            rep = E.exact_covariance(est, model, theta)
            worst_cov = max(worst_cov, np.abs(rep.cov - rep.cr_bound).max())
            unb = E.check_locally_unbiased(est, model, theta)
            worst_unb = max(worst_unb, unb["mean_defect"], unb["derivative_defect"])
    ok = criterion(6, worst_cov <= 1e-8 and worst_unb <= 1e-6,
                   f"max |cov - J^-1| {worst_cov:.1e}, max unbiasedness defect {worst_unb:.1e}")
    assert ok


def test_c7_cramer_rao_bound(criterion):
    rng = np.random.default_rng(7)
    worst = np.inf
    count = 0
    for name, factory in sorted(ZOO_FACTORIES.items()):
        model = factory()
        for _ in range(50):
            theta = M.random_point(model, rng)
            est = E.random_locally_unbiased(model, theta, rng)
            worst = min(worst, E.exact_covariance(est, model, theta).gap_min_eig)
            count += 1
    ok = criterion(7, worst >= -1e-6, f"{count} random locally unbiased estimators, min gap eigenvalue "
                                      f"{worst:.1e}")
    assert ok


def _random_loop(model, rng):
    pts = [M.random_point(model, rng) for _ in range(int(rng.integers(3, 6)))]
    return np.vstack(pts + [pts[0]])


def test_c8_holonomy(criterion):
    rng = np.random.default_rng(8)
    models = {"classical_simplex2": M.classical_simplex(2), "classical_simplex3": M.classical_simplex(3),
              "parallel_exp": M.parallel_exp(), "parallel_exp_qutrit": qutrit_parallel()}
    worst, loops = 0.0, 0
    for name, model in models.items():
        for _ in range(10):
            res = T.holonomy(model, _random_loop(model, rng), steps=512)
            worst = max(worst, res.rpf_distance)
            loops += 1
    b = M.bloch_full()
    bloch = max(T.holonomy(b, _random_loop(b, rng), steps=512).rpf_distance for _ in range(3))
    ok = criterion(8, worst <= 1e-5 and bloch >= 0.01,
                   f"{loops} quasi-classical loops, max |RPF - I| {worst:.1e}; bloch_full max {bloch:.3f}")
    assert ok


def test_c9_monte_carlo_cli(criterion, tmp_path, monkeypatch):
    out = tmp_path / "report.json"
    argv = ["estimate", "--zoo", "classical_simplex", "--theta", "0.3", "--samples", "100000",
            "--seed", "7", "--out", str(out)]
    reports = []
    for threads in ("1", "8"):
        monkeypatch.setenv(THREADS_ENV, threads)
        assert cli.main(argv) == 0
        reports.append(out.read_bytes())
    z = json.loads(reports[0])["result"]["max_cov_z_score"]
    model = qutrit_parallel()
    theta = [0.2, -0.1]
    est = E.optimal_estimator(model, theta)
    exact = E.exact_covariance(est, model, theta)
    mc, _ = E.monte_carlo_covariance(est, model, theta, 100_000, seed=7)
    qutrit_ok = bool(np.all(np.abs(mc.cov - exact.cov) <= 5 * mc.std_errors))
    identical = reports[0] == reports[1]
    ok = criterion(9, z <= 5 and qutrit_ok and identical,
                   f"max z-score {z:.2f}, qutrit within 5 sigma {qutrit_ok}, "
                   f"byte-identical across 1 and 8 workers {identical}")
    assert ok


@pytest.mark.parametrize("name", QUASI_CLASSICAL)
def test_c8_classify_reports_parallel(name):
    model = ZOO_FACTORIES[name]()
    assert G.classify_global(model, M.grid_points(model)).verdict == G.QUASI_CLASSICAL

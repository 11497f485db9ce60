"""Command-line interface.

Subcommands ``classify``, ``fisher``, ``holonomy``, ``estimate`` and ``zoo``
write a single JSON report (stdout or ``--out``). Every report echoes the
effective configuration and the package version; no timestamps or host data
are recorded, so identical inputs give byte-identical files.

Exit codes: 0 ok, 2 bad input, 3 domain error, 4 convergence failure,
5 theorem precondition violated (e.g. non-commuting SLDs).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError, UhlmannKitError
from .estimation import (
    check_locally_unbiased,
    counts_csv,
    exact_covariance,
    monte_carlo_covariance,
    optimal_estimator,
    two_stage_adaptive,
)
from .geometry import classify_global, curvature, sld_set, theorem2_check
from .matcore import Tolerances
from .model import ZOO, grid_points, load_model_file, random_point, zoo
from .serialize import dumps
from .transport import CurvePath, amplitude, holonomy, relative_phase_factor


@dataclasses.dataclass
class RunConfig:
    """Effective settings of one CLI run; echoed verbatim into the report."""

    command: str = ""
    zoo: str = None
    zoo_params: dict = dataclasses.field(default_factory=dict)
    model_file: str = None
    theta: list = None
    path: list = None
    grid: object = None
    tol: float = 1e-8
    curvature_tol: float = 1e-6
    steps: int = 512
    h: float = 1e-5
    seed: int = 0
    samples: int = 100000
    loops: int = 3
    adaptive_init: list = None
    out: str = None
    counts: str = None

    def tolerances(self):
        return Tolerances(comm_tol=self.tol, curvature_tol=self.curvature_tol)


def _parse_vector(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"cannot parse vector {text!r}; expected comma-separated decimals") from None


def _parse_points(text, m):
    """Semicolon-separated waypoints; for one-parameter models commas also separate points."""
    if ";" in text:
        pts = [_parse_vector(p) for p in text.split(";") if p.strip()]
    elif m == 1:
        pts = [[x] for x in _parse_vector(text)]
    else:
        pts = [_parse_vector(text)]
    for k, p in enumerate(pts):
        if len(p) != m:
            raise InputError(f"point {k} has {len(p)} coordinates; model has m={m}")
    return pts


def _parse_param(text):
    if "=" not in text:
        raise InputError(f"--param expects KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    try:
        value = json.loads(value)
    except json.JSONDecodeError:
        pass
    return key, value


def _build_model(cfg):
    if cfg.model_file:
        model = load_model_file(cfg.model_file, cfg.tolerances())
    elif cfg.zoo:
        model = zoo(cfg.zoo, **cfg.zoo_params)
    else:
        raise InputError("choose a model with --zoo NAME or --model FILE")
    model.fd_rel_step = cfg.h
    model.tol = dataclasses.replace(model.tol, comm_tol=cfg.tol, curvature_tol=cfg.curvature_tol)
    return model


def _theta(cfg, model):
    if cfg.theta is None:
        raise InputError(f"--theta is required for '{cfg.command}'")
    if len(cfg.theta) != model.param_dim:
        raise InputError(f"--theta has {len(cfg.theta)} components; model has m={model.param_dim}")
    return np.array(cfg.theta)


def _grid(cfg, model):
    if cfg.grid is None:
        return grid_points(model)
    if isinstance(cfg.grid, int):
        return grid_points(model, cfg.grid)
    return [np.array(p) for p in cfg.grid]


def _random_loops(model, count, rng):
    loops = []
    lo, hi = model.domain.sample_box()
    for _ in range(count):
        corners = int(rng.integers(3, 6))
        pts = [random_point(model, rng) for _ in range(corners)]
        loops.append(np.vstack(pts + [pts[0]]))
    return loops


def cmd_classify(cfg):
    model = _build_model(cfg)
    tol = model.tol
    grid = _grid(cfg, model)
    cls = classify_global(model, grid, tolerances=tol)
    t2 = [theorem2_check(model, p, tolerances=tol) for p in grid]
    rng = np.random.default_rng(cfg.seed)
    loops = []
    for pts in _random_loops(model, cfg.loops, rng):
        res = holonomy(model, pts, steps=cfg.steps, tol=tol)
        loops.append({"waypoints": pts, "rpf_distance_from_identity": res.rpf_distance,
                      "defect": res.defect})
    worst_loop = max((l["rpf_distance_from_identity"] for l in loops), default=0.0)
    return {
        "verdict": cls.verdict,
        "classification": cls.to_dict(),
        "theorem2": {
            "all_consistent": all(r["consistent"] for r in t2),
            "points": t2,
        },
        "loop_checks": {"loops": loops, "max_rpf_distance": worst_loop, "steps": cfg.steps},
    }


def cmd_fisher(cfg):
    model = _build_model(cfg)
    theta = _theta(cfg, model)
    s = sld_set(model, theta, model.tol)
    out = {"theta": s.theta, "rho": s.rho, "slds": s.slds, "fisher": s.fisher}
    try:
        out["fisher_inverse"] = s.fisher_inverse
    except np.linalg.LinAlgError:
        out["fisher_inverse"] = None
    c = curvature(model, theta, model.tol)
    m = model.param_dim
    out["curvature"] = [{"i": i, "j": j, "F": c.f[i, j], "norm": c.norm(i, j)}
                        for i in range(m) for j in range(i + 1, m)]
    return out


def cmd_holonomy(cfg):
    model = _build_model(cfg)
    if cfg.path is None:
        raise InputError("--path is required for 'holonomy'")
    path = CurvePath(model, np.array(cfg.path))
    w0 = amplitude(model.evaluate(path.waypoints[0]))
    res = relative_phase_factor(path, w0, cfg.steps, tol=model.tol)
    out = res.to_dict()
    out["closed"] = path.is_closed
    out["waypoints"] = path.waypoints
    return out


def cmd_estimate(cfg):
    model = _build_model(cfg)
    theta = _theta(cfg, model)
    est = optimal_estimator(model, theta, tolerances=model.tol)
    exact = exact_covariance(est, model, theta, model.tol)
    mc, counts = monte_carlo_covariance(est, model, theta, cfg.samples, cfg.seed, tolerances=model.tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(mc.std_errors > 0, np.abs(mc.cov - exact.cov) / mc.std_errors, 0.0)
    out = {
        "theta": theta,
        "estimator": est.to_dict(),
        "local_unbiasedness": check_locally_unbiased(est, model, theta),
        "exact": exact.to_dict(),
        "monte_carlo": mc.to_dict(),
        "counts": counts,
        "cov_z_scores": z,
        "max_cov_z_score": float(z.max()),
    }
    if cfg.adaptive_init is not None:
        ad = two_stage_adaptive(model, theta, cfg.adaptive_init, cfg.samples, cfg.samples, cfg.seed)
        out["adaptive"] = {"estimate": ad.estimate, "stage1": ad.stage1, "trace": ad.trace}
    if cfg.counts:
        Path(cfg.counts).write_text(counts_csv(est.povm, counts))
    return out


def cmd_zoo(cfg):
    return {"models": [{"name": k, "description": d} for k, (_, d) in sorted(ZOO.items())]}


COMMANDS = {
    "classify": cmd_classify,
    "fisher": cmd_fisher,
    "holonomy": cmd_holonomy,
    "estimate": cmd_estimate,
    "zoo": cmd_zoo,
}


def build_parser():
    p = argparse.ArgumentParser(prog="uhlmann-kit", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "zoo":
            sp.add_argument("--out")
            continue
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--zoo", help="built-in model name (see the 'zoo' subcommand)")
        src.add_argument("--model", dest="model_file", help="JSON model file")
        sp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="zoo model parameter (JSON value), repeatable")
        sp.add_argument("--theta", help="parameter point, comma-separated")
        sp.add_argument("--path", help="waypoints separated by ';', coordinates by ','")
        sp.add_argument("--grid", help="points per axis, or explicit ';'-separated points")
        sp.add_argument("--tol", type=float, default=1e-8, help="relative commutator tolerance")
        sp.add_argument("--curvature-tol", type=float, default=1e-6)
        sp.add_argument("--steps", type=int, default=512, help="RK4 steps per path segment")
        sp.add_argument("--h", type=float, default=1e-5, help="relative finite-difference step")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--samples", type=int, default=100000)
        sp.add_argument("--loops", type=int, default=3, help="random loops checked by classify")
        sp.add_argument("--adaptive-init", help="run the two-stage adaptive scheme from this point")
        sp.add_argument("--counts", help="write outcome counts as CSV (estimate)")
        sp.add_argument("--out", help="output file (default: stdout)")
    return p


def config_from_args(args):
    cfg = RunConfig(command=args.command, out=getattr(args, "out", None))
    if args.command == "zoo":
        return cfg
    cfg.zoo = args.zoo
    cfg.model_file = args.model_file
    cfg.zoo_params = dict(_parse_param(t) for t in args.param)
    for f in ("tol", "curvature_tol", "steps", "h", "seed", "samples", "loops", "counts"):
        setattr(cfg, f, getattr(args, f))
    if args.theta is not None:
        cfg.theta = _parse_vector(args.theta)
    if args.adaptive_init is not None:
        cfg.adaptive_init = _parse_vector(args.adaptive_init)
    return cfg


def run(cfg, args=None):
    """Execute one command; returns the report dict."""
    if args is not None and args.command != "zoo":
        m = None
        if args.path is not None or (args.grid is not None and not args.grid.strip().isdigit()):
            m = _build_model(cfg).param_dim
        if args.path is not None:
            cfg.path = _parse_points(args.path, m)
        if args.grid is not None:
            g = args.grid.strip()
            cfg.grid = int(g) if g.isdigit() else _parse_points(g, m)
    body = COMMANDS[cfg.command](cfg)
    report = {"command": cfg.command, "version": __version__,
              "config": dataclasses.asdict(cfg)}
    if cfg.command != "zoo":
        report["model"] = _build_model(cfg).describe()
    report["result"] = body
    return report


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        text = dumps(run(cfg, args))
    except UhlmannKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end.

    fbmavg sample-fbm    --out DIR [--H 0.75]
    fbmavg check-kernels [--H-sweep] [--corrupt-c1 FACTOR]
    fbmavg run {nofeedback,periodic,feedback,uniform-bound,sewing-equiv} --out DIR
    fbmavg report DIR

Every command accepts ``--config PATH`` (one JSON object whose keys must
match the command's parameters), ``--seed``, ``--jobs``, ``--out``,
``--profile {smoke,paper}`` and ``--resume``.  Exit status is 0 when all
checks pass, 1 when a check fails and 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, fbm
from .experiments import (ConfigError, ConvergenceReport, FeedbackConfig, NoFeedbackConfig, PeriodicConfig,
                          run_feedback, run_nofeedback, run_periodic_example, sewing_equals_young_check,
                          uniform_bound_experiment)
from .experiments.config import from_mapping, to_mapping
from .gridpath import TimeGrid
from .stats import loglog_fit

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# --- configuration blocks for the non-experiment commands --------------------------------

@dataclasses.dataclass(frozen=True)
class SampleConfig:
    H: float = 0.75
    n: int = 1024
    T: float = 1.0
    n_paths: int = 100
    dims: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.H < 1 or self.n < 2 or self.n_paths < 1:
            raise ConfigError("need 0 < H < 1, n >= 2 and n_paths >= 1")


@dataclasses.dataclass(frozen=True)
class KernelConfig:
    H_values: tuple = (0.75,)
    n_points: int = 50
    fd_step: float = 1e-3
    fd_tol: float = 1e-3
    slope_tol: float = 0.05
    rkhs_n: int = 1024
    rkhs_kmax: int = 64
    corrupt_c1: float = 1.0
    seed: int = 0


@dataclasses.dataclass(frozen=True)
class UniformRunConfig:
    base: FeedbackConfig = FeedbackConfig()
    h: object = "cos_y_centred"
    control: object = "cos_y"
    n_spans: int = 5


@dataclasses.dataclass(frozen=True)
class SewingRunConfig:
    base: FeedbackConfig = FeedbackConfig(fast="von_mises_coupled")
    h: object = "cos_y"
    eps: float = 0.1
    n_paths: int = 64
    x_spec: str = "fbm"


def _profile_base(kind: str, profile: str):
    if kind == "nofeedback":
        return NoFeedbackConfig.profile(profile)
    if kind == "periodic":
        return PeriodicConfig.profile(profile)
    if kind in ("feedback", "uniform-bound"):
        return FeedbackConfig.profile(profile)
    return FeedbackConfig(fast="von_mises_coupled")


def _split_wrapper(cls, data: dict, base_cfg):
    """Separate wrapper keys (``h``, ``eps``, ...) from the embedded FeedbackConfig keys."""
    own = {f.name for f in dataclasses.fields(cls)} - {"base"}
    wrapper = {k: v for k, v in data.items() if k in own}
    inner = {k: v for k, v in data.items() if k not in own}
    base = from_mapping(FeedbackConfig, inner, base_cfg)
    return from_mapping(cls, wrapper, cls(base=base))


def load_config(kind: str, path: str | None, profile: str, seed: int | None):
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if seed is not None:
        data = {**data, "seed": seed}
    if kind == "sample-fbm":
        return from_mapping(SampleConfig, data)
    if kind == "check-kernels":
        return from_mapping(KernelConfig, data)
    base = _profile_base(kind, profile)
    if kind == "uniform-bound":
        return _split_wrapper(UniformRunConfig, data, base)
    if kind == "sewing-equiv":
        if profile == "smoke":
            base = dataclasses.replace(base, n_steps=512)
        return _split_wrapper(SewingRunConfig, data, base)
    return type(base).from_dict(data, base)


# --- outputs --------------------------------------------------------------------------------

def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg, seed: int, wall: float, files=(), **extra) -> Path:
    man = {"command": command, "config": to_mapping(cfg), "seed": int(seed), "version": __version__,
           "wall_time_s": round(wall, 3), "files": {p.name: _sha(p) for p in files}}
    man.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return path


def cmd_sample_fbm(args, cfg: SampleConfig) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    H = args.H if args.H is not None else cfg.H
    cfg = dataclasses.replace(cfg, H=H)
    ens = fbm.sample_fbm(cfg.H, TimeGrid(0.0, cfg.T, cfg.n), cfg.n_paths, cfg.dims, seed=cfg.seed)
    files = ens.save(out / "fbm")
    inc = np.diff(ens.paths, axis=1)
    x = inc[:, :-1].ravel()
    y = inc[:, 1:].ravel()
    lag1 = float(np.corrcoef(x, y)[0, 1])
    var_T = float(np.mean(ens.paths[:, -1] ** 2))
    summary = {"H": cfg.H, "n_paths": cfg.n_paths, "terminal_variance": var_T,
               "terminal_variance_expected": cfg.T ** (2 * cfg.H), "lag1_correlation": lag1,
               "lag1_expected": float(fbm.fgn_autocovariance(1, cfg.H))}
    print(json.dumps(summary, indent=1, sort_keys=True))
    write_manifest(out, "sample-fbm", cfg, cfg.seed, time.perf_counter() - t0, files, summary=summary)
    return EXIT_OK


def kernel_checks(H: float, cfg: KernelConfig) -> dict:
    """Finite-difference, asymptotic-slope and RKHS-bound checks at one Hurst index."""
    consts = fbm.kernel_constants(float(H))
    if cfg.corrupt_c1 != 1.0:
        consts = dataclasses.replace(consts, c1=consts.c1 * cfg.corrupt_c1)
    rng = np.random.default_rng(cfg.seed)
    e = cfg.fd_step
    R = fbm.covariance_R
    worst = 0.0
    n_done = 0
    while n_done < cfg.n_points:
        r, s = rng.uniform(0.2, 2.0, 2)
        if abs(r - s) < 0.1:
            continue
        fd = (R(r + e, s + e, H) - R(r + e, s - e, H) - R(r - e, s + e, H) + R(r - e, s - e, H)) / (4 * e * e)
        worst = max(worst, abs(fbm.d2R_closed(r, s, H, consts) - fd) / abs(fd))
        n_done += 1
    small = np.logspace(-4, -2, 9)
    large = np.logspace(2, 4, 9)
    s_small = loglog_fit(small, [fbm.d2R_closed(1.0, 1.0 + d, H, consts) for d in small]).slope
    g_large = [fbm.d2R_closed(1.0, 1.0 + d, H, consts) for d in large]
    s_large = loglog_fit(large, g_large).slope if min(g_large) > 0 else float("nan")
    rk = fbm.rkhs_bound_ratios(H, range(1, cfg.rkhs_kmax + 1), n=cfg.rkhs_n)
    C = float(rk["ratio"][0])
    violations = int(np.sum(rk["ratio"] > C * (1 + 1e-12)))
    checks = {
        "d2R_vs_finite_difference": bool(worst <= cfg.fd_tol),
        "G_slope_small": bool(abs(s_small - (2 * H - 2)) <= cfg.slope_tol),
        "G_slope_large": bool(abs(s_large - (H - 1.5)) <= cfg.slope_tol),
        "rkhs_bound": violations == 0,
    }
    return {"H": H, "fd_max_rel_err": worst, "slope_small": s_small, "slope_large": s_large,
            "rkhs_C": C, "rkhs_violations": violations, "checks": checks, "pass": all(checks.values())}


def cmd_check_kernels(args, cfg: KernelConfig) -> int:
    t0 = time.perf_counter()
    if args.H_sweep:
        cfg = dataclasses.replace(cfg, H_values=(0.6, 0.75, 0.9))
    elif args.H is not None:
        cfg = dataclasses.replace(cfg, H_values=(args.H,))
    if args.corrupt_c1 is not None:
        cfg = dataclasses.replace(cfg, corrupt_c1=args.corrupt_c1)
    results = [kernel_checks(H, cfg) for H in cfg.H_values]
    verdict = {"pass": all(r["pass"] for r in results), "results": results}
    text = json.dumps(verdict, indent=1, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "kernels.json").write_text(text + "\n")
        write_manifest(out, "check-kernels", cfg, cfg.seed, time.perf_counter() - t0, [out / "kernels.json"])
    return EXIT_OK if verdict["pass"] else EXIT_FAIL


def _uniform_report(cfg: UniformRunConfig, jobs: int) -> ConvergenceReport:
    main = uniform_bound_experiment(cfg.base, cfg.h, cfg.n_spans, jobs, centred=True)
    ctrl = uniform_bound_experiment(cfg.base, cfg.control, cfg.n_spans, jobs, centred=False)
    rep = ConvergenceReport("uniform-bound", "eps", main.eps, cfg.base.p, main.norms[:, -1].tolist(),
                            main.se[:, -1].tolist(), None, main.eps_slope, main.eps_slope_ci, True)
    rep.checks = {**main.checks, **{f"control_{k}": v for k, v in ctrl.checks.items()}}
    rep.extras = {"centred": main.to_dict(), "control": ctrl.to_dict()}
    rep.manifest = {"config": to_mapping(cfg), "seed": cfg.base.seed, "version": __version__}
    return rep


def _sewing_report(cfg: SewingRunConfig) -> ConvergenceReport:
    res = sewing_equals_young_check(cfg.base, cfg.h, cfg.eps, cfg.n_paths, x_spec=cfg.x_spec)
    mesh = [cfg.base.T / 2**lev for lev in res["levels"]]
    fit = res["refinement_fit"]
    factors = np.asarray(res["contraction_factors"], dtype=float)
    factors = factors[np.isfinite(factors) & (np.asarray(res["level_changes"][1:]) > 1e-10)]
    rep = ConvergenceReport("sewing-equiv", "mesh", mesh, 2.0, res["l2_difference"], [0.0] * len(mesh), fit,
                            None if fit is None else fit["slope"],
                            None if fit is None else tuple(fit["slope_ci"]), True)
    rep.checks = {"refinement_slope_positive": fit is not None and fit["slope"] > 0,
                  "finest_level_exact": bool(res["finest_exact"]),
                  "defect_contracts": bool(factors.size > 0 and np.all(factors[3:] < 1))}
    rep.extras = res
    rep.manifest = {"config": to_mapping(cfg), "seed": cfg.base.seed, "version": __version__}
    return rep


def cmd_run(args, cfg) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = out / "points"
    if not args.resume and cache.exists():
        shutil.rmtree(cache)
    kind = args.experiment
    if kind == "nofeedback":
        rep = run_nofeedback(cfg, args.jobs, out)
    elif kind == "periodic":
        rep = run_periodic_example(cfg, args.jobs, out)
    elif kind == "feedback":
        rep = run_feedback(cfg, args.jobs, out)
    elif kind == "uniform-bound":
        rep = _uniform_report(cfg, args.jobs)
    else:
        rep = _sewing_report(cfg)
    files = rep.write(out)
    print(rep.summary())
    seed = cfg.base.seed if hasattr(cfg, "base") else cfg.seed
    write_manifest(out, f"run {kind}", cfg, seed, time.perf_counter() - t0, files, profile=args.profile,
                   resumed_points=rep.run_info.get("resumed_points", []))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_report(args) -> int:
    path = Path(args.directory) / "report.json"
    if not path.exists():
        raise ConfigError(f"no report.json in {args.directory}")
    rep = ConvergenceReport.read(path)
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_FAIL


# --- argument parsing -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON parameter file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes; results do not depend on it")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--profile", choices=("smoke", "paper"), default="smoke")
    common.add_argument("--resume", action="store_true", help="reuse finished parameter points in --out")

    p = argparse.ArgumentParser(prog="fbmavg", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample-fbm", parents=[common], help="sample an fBm ensemble")
    s.add_argument("--H", type=float, help="Hurst index")

    k = sub.add_parser("check-kernels", parents=[common], help="verify covariance kernels")
    k.add_argument("--H", type=float, help="single Hurst index")
    k.add_argument("--H-sweep", action="store_true", help="check H in {0.6, 0.75, 0.9}")
    k.add_argument("--corrupt-c1", type=float, metavar="FACTOR", help="scale c1 (negative control)")

    r = sub.add_parser("run", parents=[common], help="run an averaging experiment")
    r.add_argument("experiment", choices=("nofeedback", "periodic", "feedback", "uniform-bound", "sewing-equiv"))

    rp = sub.add_parser("report", help="summarise a finished run")
    rp.add_argument("directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        kind = args.experiment if args.command == "run" else args.command
        cfg = load_config(kind, args.config, args.profile, args.seed)
        if args.command in ("sample-fbm", "run") and not args.out:
            raise ConfigError("--out is required")
        if args.command == "sample-fbm":
            return cmd_sample_fbm(args, cfg)
        if args.command == "check-kernels":
            return cmd_check_kernels(args, cfg)
        return cmd_run(args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

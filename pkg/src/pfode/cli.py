"""Command-line entry point: ``pfode <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError
from .experiment import ExperimentConfig, load_oracle, parse_params, run_experiment, synth_dataset, geometry_rows
from .gaussian_exact import GaussianTrajectoryModel, phi
from .geometry import align_batch, frenet_stats, project_3d
from .gits import gits_pipeline
from .io import read_trajectory, sha256_file, write_csv, write_dataset, write_schedule
from .oracles import GaussianOracle, KDEOracle, kde_logdensity, mean_shift_iterate
from .schedules import make_grid
from .seeding import check_seed, draw_initial_noise, stream
from .solvers import SolverConfig

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p, *names):
    opts = {
        "oracle": dict(required=True, help="kde:<file> | gaussian:<file|key=value,...> | mixture:<file>"),
        "process": dict(default="VE", help="VE | VP | flow-matching"),
        "schedule": dict(default="polynomial", help="polynomial[:rho] | logsnr | uniform | <schedule.json>"),
        "method": dict(default="euler", help="euler | heun | dpm2 | ipndm"),
        "nfe": dict(type=int, default=10, help="number of steps N"),
        "batch": dict(type=int, default=1),
        "seed": dict(type=int, default=0),
        "out": dict(required=True),
        "gamma": dict(type=float, default=1.15),
        "fine": dict(type=int, default=60),
        "warmup": dict(type=int, default=256),
        "window": dict(type=int, default=101),
        "k": dict(type=int, default=3),
    }
    for n in names:
        p.add_argument(f"--{n}", **opts[n])
    p.add_argument("--t0", type=float, default=0.002)
    p.add_argument("--tN", type=float, default=80.0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pfode", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("schedule", help="emit a time schedule as JSON")
    _common(p, "schedule", "nfe")
    p.add_argument("--out", default="-")

    p = sub.add_parser("simulate", help="simulate a batch of trajectories")
    _common(p, "oracle", "process", "schedule", "method", "nfe", "batch", "seed", "out", "k", "window")
    p.add_argument("--max-order", type=int, default=4)
    p.add_argument("--with-geometry", action="store_true")

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("config")

    p = sub.add_parser("geometry", help="geometry reports for trajectory files")
    p.add_argument("trajectories", nargs="+", help="trajectory .json sidecars")
    _common(p, "out", "k", "window")
    p.add_argument("--align", action="store_true")

    p = sub.add_parser("gits", help="search a time schedule by dynamic programming")
    _common(p, "oracle", "nfe", "gamma", "fine", "warmup", "seed", "out")
    p.add_argument("--teacher", default="ipndm")

    p = sub.add_parser("gaussian-exact", help="tabulate residual coefficients of Gaussian trajectories")
    p.add_argument("--oracle", default="gaussian:d=8,rank=3,seed=0")
    p.add_argument("--sigma-T", type=float, default=80.0)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("meanshift", help="mean-shift iterates and KDE log-densities")
    p.add_argument("--oracle", required=True, help="kde:<file>")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", default=None, help="comma-separated start point")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="synthesise a dataset")
    p.add_argument("--kind", required=True, choices=["clusters", "low-rank-gaussian", "grid"])
    p.add_argument("--params", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return ap


# ---------------------------------------------------------------- handlers

def _cmd_schedule(a):
    grid = make_grid(a.schedule, a.nfe, a.t0, a.tN)
    if a.out == "-":
        print(grid.to_json())
    else:
        write_schedule(a.out, grid)


def _cmd_simulate(a):
    cfg = ExperimentConfig(oracle=a.oracle, out=a.out, process=a.process, schedule=a.schedule,
                           nfe=a.nfe, method=a.method, max_order=a.max_order, batch=a.batch,
                           seed=a.seed, t0=a.t0, tN=a.tN, k=a.k, window=a.window,
                           geometry=a.with_geometry)
    out = run_experiment(cfg)
    print(out / "manifest.json")


def _cmd_run(a):
    out = run_experiment(ExperimentConfig.from_file(a.config))
    print(out / "manifest.json")


def _cmd_geometry(a):
    trajs = [read_trajectory(p) for p in a.trajectories]
    out = Path(a.out)
    summaries = []
    for path, tr in zip(a.trajectories, trajs):
        header, rows, summ = geometry_rows(tr, a.k)
        write_csv(out / (Path(path).stem + "_geometry.csv"), header, rows)
        if tr.d >= 3 and tr.states.shape[0] > a.window:
            rep = frenet_stats(project_3d(tr), a.window, param=tr.times.times[0] - tr.times.times)
            write_csv(out / (Path(path).stem + "_frenet.csv"), ["index", "arclength", "curvature", "torsion", "torsion_flag"],
                      [[int(i), rep.arclength[i], k, t, int(f)]
                       for i, k, t, f in zip(rep.index, rep.curvature, rep.torsion, rep.torsion_flag)])
        summ["source"] = str(path)
        summaries.append(summ)
    if a.align and len(trajs) > 1 and trajs[0].d >= 3:
        aligned, res = align_batch([project_3d(t) for t in trajs], fix_first_axis=True)
        for path, curve, s, r in zip(a.trajectories, aligned, summaries, res):
            s["procrustes_residual"] = r
            write_csv(out / (Path(path).stem + "_aligned3d.csv"), ["c0", "c1", "c2"], curve.tolist())
    (out / "summary.json").write_text(json.dumps(summaries, indent=1))


def _cmd_gits(a):
    oracle = load_oracle(a.oracle)
    res, cm = gits_pipeline(oracle, a.nfe, gamma=a.gamma, fine_N=a.fine, teacher_cfg=SolverConfig(a.teacher),
                            warmup_count=a.warmup, seed=check_seed(a.seed), t0=a.t0, tN=a.tN, return_costs=True)
    out = Path(a.out)
    write_schedule(out / "schedule.json", res.schedule)
    C = np.where(np.isfinite(cm.costs), cm.costs, np.nan)
    write_csv(out / "costs.csv", ["i", "t_i"] + [f"j{j}" for j in range(cm.G)],
              [[i, cm.grid.times[i]] + list(C[i]) for i in range(cm.G)])
    (out / "dp.json").write_text(json.dumps({"indices": res.indices.tolist(), "cost": res.cost,
                                             "gamma": res.gamma, "fine_times": cm.grid.times.tolist()}, indent=1))
    print(res.schedule.to_json())


def _cmd_gaussian_exact(a):
    orc = load_oracle(a.oracle)
    if not isinstance(orc, GaussianOracle):
        raise ConfigError("gaussian-exact needs a gaussian: oracle")
    g = orc.g
    model = GaussianTrajectoryModel(g, a.sigma_T)
    xT = g.mean + a.sigma_T * stream(check_seed(a.seed), 0).standard_normal(g.d)
    sig = np.linspace(0.0, a.sigma_T, a.points)
    header = ["sigma"] + [f"phi2_{k}" for k in range(g.rank)] + ["h", "h_expected"]
    rows = []
    for s in sig:
        p2 = (phi(g.lam, s, a.sigma_T) ** 2).tolist() if g.rank else []
        rows.append([s] + p2 + [float(model.residual_norm_sq(xT, s)), model.expected_residual_norm_sq(s)])
    write_csv(a.out, header, rows)


def _cmd_meanshift(a):
    orc = load_oracle(a.oracle)
    if not isinstance(orc, KDEOracle):
        raise ConfigError("meanshift needs a kde: oracle")
    if a.x0 is not None:
        starts = np.array([[float(v) for v in a.x0.split(",")]])
    else:
        lo, hi = orc.data.points.min(axis=0), orc.data.points.max(axis=0)
        starts = np.stack([lo + (hi - lo) * stream(check_seed(a.seed), i).random(orc.d) for i in range(a.batch)])
    rows = []
    for b, x0 in enumerate(starts):
        its = mean_shift_iterate(orc.data, x0, a.h, a.iters)
        for n, x in enumerate(its):
            rows.append([b, n, kde_logdensity(orc.data, x, a.h)] + list(x))
    write_csv(a.out, ["start", "iter", "logdensity"] + [f"x{i}" for i in range(orc.d)], rows)


def _cmd_synth(a):
    data = synth_dataset(a.kind, parse_params(a.params), check_seed(a.seed))
    path = write_dataset(a.out, data)
    print(f"{path} {data.count}x{data.d} sha256={sha256_file(path)}")


_HANDLERS = {
    "schedule": _cmd_schedule, "simulate": _cmd_simulate, "run": _cmd_run, "geometry": _cmd_geometry,
    "gits": _cmd_gits, "gaussian-exact": _cmd_gaussian_exact, "meanshift": _cmd_meanshift, "synth": _cmd_synth,
}


def main(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            _HANDLERS[a.cmd](a)
    except ConfigError as exc:
        print(f"pfode: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, KeyError) as exc:
        print(f"pfode: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"pfode: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

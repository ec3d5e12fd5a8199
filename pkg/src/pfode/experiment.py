"""Dataset synthesis, oracle specs and the end-to-end experiment runner."""
from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError
from .geometry import (deviation_profile, direct_pca_ratios, entropy_profile, frenet_stats,
                       map_trajectories, pca_reconstruct, project_3d, align_batch)
from .io import (canonical_json, read_dataset, sha256_file, write_csv, write_schedule,
                 write_trajectory)
from .oracles import Dataset, GaussianOracle, KDEOracle, LowRankGaussian, MixtureOracle, fit_low_rank_gaussian
from .schedules import flow_matching_process, make_grid, ve_process, vp_process_from_range, TimeGrid
from .seeding import check_seed, draw_initial_noise, stream
from .solvers import SolverConfig, simulate_batch, simulate_zspace_batch

__all__ = ["synth_dataset", "parse_params", "load_oracle", "oracle_inputs", "ExperimentConfig",
           "run_experiment", "make_process", "geometry_rows"]


def parse_params(text: str | dict | None) -> dict:
    """``"d=2,count=400,k=8"`` -> dict with numbers converted where possible."""
    if text is None:
        return {}
    if isinstance(text, dict):
        return dict(text)
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ConfigError(f"malformed parameter {part!r}; expected key=value")
        k, v = (s.strip() for s in part.split("=", 1))
        try:
            out[k] = int(v)
        except ValueError:
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out


def _req(p, key, kind=int, default=None):
    if key not in p:
        if default is None:
            raise ConfigError(f"missing parameter {key!r}")
        return default
    try:
        return kind(p[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key!r} has invalid value {p[key]!r}") from exc


def synth_dataset(kind: str, params=None, seed: int = 0) -> Dataset:
    """Synthetic point clouds.

    ``clusters``: ``d``, ``count``, either ``centers`` (list of vectors) or
    ``k`` centres on a circle of ``radius`` in the first two coordinates,
    isotropic ``spread``.  Points are assigned to centres round-robin.

    ``low-rank-gaussian``: ``d``, ``count``, ``rank``, eigenvalue ``decay``
    (``lam_k = scale * decay^k``) around a random orthonormal basis.

    ``grid``: ``d``, ``per_axis`` points per axis, ``spacing``.
    """
    p = parse_params(params)
    rng = stream(check_seed(seed), 0, purpose=7)
    if kind == "clusters":
        if "centers" in p:
            C = np.atleast_2d(np.asarray(p["centers"], dtype=float))
            d = C.shape[1]
        else:
            d, k = _req(p, "d"), _req(p, "k", int, 8)
            if d < 2 and k > 2:
                raise ConfigError("circle layout of more than two centres needs d >= 2")
            radius = _req(p, "radius", float, 4.0)
            ang = 2 * np.pi * np.arange(k) / k
            C = np.zeros((k, d))
            C[:, 0] = radius * np.cos(ang)
            if d > 1:
                C[:, 1] = radius * np.sin(ang)
        count = _req(p, "count", int, C.shape[0])
        spread = _req(p, "spread", float, 0.0)
        if count < 1 or spread < 0:
            raise ConfigError("count must be >= 1 and spread >= 0")
        P = C[np.arange(count) % C.shape[0]] + spread * rng.standard_normal((count, d))
    elif kind == "low-rank-gaussian":
        d, count, rank = _req(p, "d"), _req(p, "count"), _req(p, "rank")
        if not 0 <= rank <= d:
            raise ConfigError("rank must lie in [0, d]")
        scale, decay = _req(p, "scale", float, 1.0), _req(p, "decay", float, 0.5)
        U, _ = np.linalg.qr(rng.standard_normal((d, max(rank, 1))))
        lam = scale * decay ** np.arange(rank)
        P = (rng.standard_normal((count, rank)) * np.sqrt(lam)) @ U[:, :rank].T
    elif kind == "grid":
        d, m = _req(p, "d"), _req(p, "per_axis", int, 4)
        spacing = _req(p, "spacing", float, 1.0)
        if m ** d > 10**7:
            raise ConfigError("grid too large")
        axes = [np.arange(m) * spacing] * d
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    return Dataset(P)


def _random_gaussian(p: dict) -> LowRankGaussian:
    d, rank = _req(p, "d"), _req(p, "rank")
    rng = stream(_req(p, "seed", int, 0), 0, purpose=8)
    U, _ = np.linalg.qr(rng.standard_normal((d, max(rank, 1))))
    lam = _req(p, "scale", float, 1.0) * _req(p, "decay", float, 0.5) ** np.arange(rank)
    mu = _req(p, "mean", float, 0.0) * np.ones(d)
    return LowRankGaussian(mu, U[:, :rank], lam)


def load_oracle(spec: str):
    """Build an oracle from ``kde:<file>``, ``gaussian:<file|key=value,..>`` or ``mixture:<file>``."""
    kind, sep, arg = spec.partition(":")
    if not sep or not arg:
        raise ConfigError(f"oracle spec {spec!r} must look like kind:argument")
    if kind == "kde":
        return KDEOracle(read_dataset(arg), descriptor=spec)
    if kind == "gaussian":
        if Path(arg).is_file():
            try:
                obj = json.loads(Path(arg).read_text())
            except json.JSONDecodeError:
                return GaussianOracle(fit_low_rank_gaussian(read_dataset(arg)), descriptor=spec)
            return GaussianOracle(LowRankGaussian.from_dict(obj), descriptor=spec)
        p = parse_params(arg)
        if "fit" in p:
            data = read_dataset(str(p["fit"]))
            return GaussianOracle(fit_low_rank_gaussian(data, p.get("rank")), descriptor=spec)
        return GaussianOracle(_random_gaussian(p), descriptor=spec)
    if kind == "mixture":
        try:
            obj = json.loads(Path(arg).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read mixture file {arg}: {exc}") from exc
        comps = [(float(c["weight"]), LowRankGaussian.from_dict(c)) for c in obj["components"]]
        return MixtureOracle(comps, descriptor=spec)
    raise ConfigError(f"unknown oracle kind {kind!r}")


def oracle_inputs(spec: str) -> list[str]:
    """Files an oracle spec depends on (for manifest digests)."""
    kind, _, arg = spec.partition(":")
    if kind in ("kde", "mixture") or (kind == "gaussian" and "=" not in arg):
        return [arg] if arg else []
    # key=value form: only the fit= entry names a file
    p = parse_params(arg) if "=" in arg else {}
    return [str(p["fit"])] if "fit" in p else []


def make_process(kind: str, t0: float, tN: float):
    k = kind.lower()
    if k == "ve":
        return ve_process(tN)
    if k == "vp":
        return vp_process_from_range(t0, tN)
    if k in ("flow-matching", "fm", "flow"):
        return flow_matching_process(1.0)
    raise ConfigError(f"unknown process {kind!r}")


@dataclass
class ExperimentConfig:
    oracle: str
    out: str
    process: str = "VE"
    schedule: str = "polynomial"
    nfe: int = 10
    method: str = "euler"
    max_order: int = 4
    batch: int = 1
    seed: int = 0
    t0: float = 0.002
    tN: float = 80.0
    k: int = 3
    window: int = 101
    align: bool = False
    geometry: bool = True
    extra: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        check_seed(self.seed)
        if self.batch < 1 or self.nfe < 1:
            raise ConfigError("batch and nfe must be positive")
        if not 1 <= self.k <= 5:
            raise ConfigError("k must lie in 1..5")
        SolverConfig(self.method, self.max_order)
        for p in oracle_inputs(self.oracle):
            if not Path(p).exists():
                raise ConfigError(f"input file missing: {p}")
        return self

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**obj).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


def geometry_rows(traj, k: int = 3):
    """Per-step geometry table columns and rows for one trajectory."""
    dev = deviation_profile(traj)
    kmax = min(k, traj.d, traj.states.shape[0] - 1)
    recon = [pca_reconstruct(traj, j).errors for j in range(1, kmax + 1)]
    sqrt_d = np.sqrt(traj.d)
    header = ["n", "t", "sigma", "t_scaled", "d_td", "d_fsd", "projection", "eps_norm"]
    header += [f"recon_err_k{j}" for j in range(1, kmax + 1)]
    rows = []
    for n in range(traj.states.shape[0]):
        e = traj.eps_norms[n] if n < traj.eps_norms.size else float("nan")
        rows.append([n, traj.times.times[n], traj.sigmas[n], traj.times.times[n] * sqrt_d,
                     dev.d_td[n], dev.d_fsd[n], dev.projection[n], e] + [r[n] for r in recon])
    summary = {
        "max_deviation_ratio": dev.max_ratio,
        "endpoint_distance": dev.endpoint_distance,
        "pca_ratios": pca_reconstruct(traj, kmax).ratios.tolist(),
        "direct_pca_ratios": direct_pca_ratios(traj, min(5, traj.states.shape[0])).tolist(),
    }
    return header, rows, summary


def _frenet_summary(traj, window: int) -> dict | None:
    if traj.d < 3 or traj.states.shape[0] <= window:
        return None
    curve = project_3d(traj)
    xi = traj.times.times[0] - traj.times.times
    rep = frenet_stats(curve, window, param=xi)
    return {"window": window, "curvature_mean": float(rep.curvature.mean()),
            "curvature_max": float(rep.curvature.max()), "torsion_mean": float(rep.torsion.mean()),
            "torsion_flagged": int(rep.torsion_flag.sum())}


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Simulate a batch, write trajectories/schedule/geometry and a manifest; returns the output dir."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    oracle = load_oracle(cfg.oracle)
    sig_grid = make_grid(cfg.schedule, cfg.nfe, cfg.t0, cfg.tN)
    solver = SolverConfig(cfg.method, cfg.max_order, record=True)
    X = draw_initial_noise(oracle.d, sig_grid.times[0], cfg.batch, cfg.seed)
    process = make_process(cfg.process, cfg.t0, cfg.tN)
    if process.kind == "VE":
        trajs = simulate_batch(oracle, sig_grid, X, solver)
    else:
        times = np.clip(process.time_of_sigma(sig_grid.times), process.t_min, process.T)
        grid = TimeGrid(times, kind=f"{sig_grid.kind}@{process.kind}")
        z0 = X * float(process.s(times[0]))
        trajs = simulate_zspace_batch(oracle, process, grid, z0, solver)

    written: list[Path] = [write_schedule(out / "schedule.json", sig_grid)]
    for i, tr in enumerate(trajs):
        paths = write_trajectory(out / "trajectories" / f"traj_{i:04d}", tr)
        written += list(paths.values())

    if cfg.geometry:
        results = map_trajectories(geometry_rows, trajs, cfg.k)
        summaries = []
        for i, (tr, (header, rows, summ)) in enumerate(zip(trajs, results)):
            written.append(write_csv(out / "geometry" / f"traj_{i:04d}.csv", header, rows))
            fr = _frenet_summary(tr, cfg.window)
            if fr is not None:
                summ["frenet"] = fr
            if isinstance(oracle, KDEOracle):
                H, _ = entropy_profile(oracle, tr)
                summ["entropy_first"], summ["entropy_last"] = float(H[0]), float(H[-1])
            summaries.append(summ)
        if cfg.align and len(trajs) > 1 and trajs[0].d >= 3:
            _, res = align_batch([project_3d(t) for t in trajs], fix_first_axis=True)
            for s, r in zip(summaries, res):
                s["procrustes_residual"] = r
        gpath = out / "geometry" / "summary.json"
        gpath.write_text(json.dumps(summaries, indent=1))
        written.append(gpath)

    manifest = {
        "package_version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "config": asdict(cfg),
        "config_sha256": hashlib.sha256(canonical_json(asdict(cfg)).encode()).hexdigest(),
        "seed": cfg.seed,
        "trajectory_seeds": [{"index": i, "spawn_key": [0, i]} for i in range(cfg.batch)],
        "inputs": {p: sha256_file(p) for p in oracle_inputs(cfg.oracle)},
        "payloads": {str(p.relative_to(out)): sha256_file(p) for p in written},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return out

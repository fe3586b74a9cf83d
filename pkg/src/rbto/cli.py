"""Batch front end: presets, config parsing, run orchestration, file artifacts.

Subcommands ``dto``, ``rbto``, ``verify`` execute one configuration each;
``sweep`` fans a (beta, (a, b)) grid out across worker processes. Every run
writes into its own directory named from a content hash of the resolved
configuration, so parameter sweeps never overwrite each other.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import __version__, chaos, verification
from .errors import ConfigError, RbtoError
from .fea import StructuredGrid
from .problems import lbeam_grid, mbb_grid
from .randfield import ModulusMarginal
from .sora import RbtoProblem, ReliabilityConstraint, run_sora
from .topopt import DensityField, DtoProblem, run_dto

PRESETS = {
    "mbb": {"nx": 60, "ny": 20, "u_max": 170.0},
    "lbeam": {"nx": 60, "ny": 60, "u_max": 100.0},
}
GEOMETRY_KEYS = ("nx", "ny", "u_max")
OUTPUT_ROOT_ENV = "RBTO_OUTPUT_ROOT"


@dataclass
class RunConfig:
    problem: str = "mbb"
    nx: int = 60
    ny: int = 20
    u_max: float = 170.0
    beta: list = dataclasses.field(default_factory=lambda: [2.0])
    a: float = 1.0
    b: float = 1.5
    l1: float = 0.6
    l2: float = 0.6
    kl_terms: int = 2
    corr_length_mode: str = "absolute"
    simp_p: float = 3.0
    rmin: float = 1.5
    dto_tol: float = 0.001
    sora_tol: float = 0.001
    sora_max: int = 20
    pce_p: int = 3
    colloc_count: int = 17
    mcs_n: int = 50000
    mcs_source: str = "both"
    seed: int = 0
    output_dir: str = "runs"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _validate(cfg: RunConfig) -> None:
    if cfg.problem not in ("mbb", "lbeam", "custom"):
        raise ConfigError(f"problem must be mbb, lbeam, or custom, got {cfg.problem!r}")
    if cfg.nx < 1 or cfg.ny < 1:
        raise ConfigError("nx and ny must be positive")
    if cfg.problem == "lbeam" and (cfg.nx != cfg.ny or cfg.nx % 2):
        raise ConfigError("lbeam requires a square, even-sized grid")
    if cfg.u_max <= 0:
        raise ConfigError(f"u_max must be positive, got {cfg.u_max}")
    if not cfg.beta or any(b < 0 for b in cfg.beta):
        raise ConfigError(f"beta values must be >= 0, got {cfg.beta}")
    if not 0 < cfg.a <= cfg.b:
        raise ConfigError(f"need 0 < a <= b, got a={cfg.a}, b={cfg.b}")
    if cfg.l1 <= 0 or cfg.l2 <= 0:
        raise ConfigError("correlation lengths must be positive")
    if cfg.kl_terms < 1:
        raise ConfigError("kl_terms must be >= 1")
    if cfg.corr_length_mode not in ("absolute", "relative"):
        raise ConfigError(
            f"corr_length_mode must be absolute or relative, got {cfg.corr_length_mode!r}"
        )
    if cfg.simp_p < 1:
        raise ConfigError("simp_p must be >= 1")
    if cfg.rmin <= 0 or cfg.dto_tol <= 0 or cfg.sora_tol <= 0:
        raise ConfigError("rmin and tolerances must be positive")
    if cfg.sora_max < 1 or cfg.pce_p < 1 or cfg.mcs_n < 1:
        raise ConfigError("sora_max, pce_p, and mcs_n must be >= 1")
    n_terms = math.comb(cfg.kl_terms + cfg.pce_p, cfg.pce_p)
    if cfg.colloc_count < n_terms:
        raise ConfigError(
            f"colloc_count must cover the {n_terms} basis terms, got {cfg.colloc_count}"
        )
    if cfg.mcs_source not in ("full-fea", "surrogate", "both"):
        raise ConfigError(
            f"mcs_source must be full-fea, surrogate, or both, got {cfg.mcs_source!r}"
        )


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value):
    if key == "beta":
        if isinstance(value, (int, float)):
            value = [value]
        if not isinstance(value, list):
            raise ConfigError(f"beta must be a number or list, got {value!r}")
        return [float(v) for v in value]
    if key in ("nx", "ny", "kl_terms", "sora_max", "pce_p", "colloc_count", "mcs_n", "seed"):
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if key in ("problem", "corr_length_mode", "mcs_source", "output_dir"):
        return str(value)
    return float(value)


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Resolve a RunConfig from an optional JSON file plus explicit overrides.

    Unknown keys are rejected by name. Geometry fields (nx, ny, u_max) follow
    the preset unless problem = custom, where they are required.
    """
    provided: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        provided.update(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            provided[key] = value

    unknown = set(provided) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    problem = str(provided.get("problem", "mbb"))
    if problem in PRESETS:
        for key in GEOMETRY_KEYS:
            if key in provided and _coerce(key, provided[key]) != _coerce(
                key, PRESETS[problem][key]
            ):
                raise ConfigError(
                    f"{key} is fixed by the {problem!r} preset; use problem=custom"
                )
        base = dict(PRESETS[problem])
    else:
        missing = [k for k in GEOMETRY_KEYS if k not in provided]
        if missing:
            raise ConfigError(f"problem=custom requires explicit {missing}")
        base = {}

    cfg = RunConfig(**{"problem": problem, **base})
    for key, value in provided.items():
        if key == "problem":
            continue
        setattr(cfg, key, _coerce(key, value))
    _validate(cfg)
    return cfg


def config_hash(cfg: RunConfig, mode: str) -> str:
    payload = json.dumps({"mode": mode, **cfg.to_dict()}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def build_problem(cfg: RunConfig) -> tuple[StructuredGrid, int]:
    """Grid plus the constrained/response y-DOF for the configured problem."""
    if cfg.problem == "lbeam":
        return lbeam_grid(cfg.nx)
    return mbb_grid(cfg.nx, cfg.ny)


def density_matrix(grid: StructuredGrid, densities: DensityField) -> np.ndarray:
    """(ny, nx) physical densities, top row first; passive elements at rho_min."""
    full = np.full(grid.n_elements, densities.rho_min)
    full[grid.active_ids] = densities.physical
    return full.reshape(grid.nx, grid.ny).T[::-1]


def write_density_csv(path: Path, matrix: np.ndarray) -> None:
    np.savetxt(path, matrix, fmt="%.6f", delimiter=",")


def read_density_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_density_pgm(path: Path, matrix: np.ndarray) -> None:
    """Portable graymap (P2, 8-bit); solid material prints black."""
    pixels = np.rint(255 * (1.0 - matrix)).astype(int)
    lines = ["P2", f"{matrix.shape[1]} {matrix.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in pixels]
    path.write_text("\n".join(lines) + "\n")


def write_cdf_csv(path: Path, disp: np.ndarray, cdf: np.ndarray) -> None:
    with path.open("w") as fh:
        fh.write("displacement,empirical_cdf\n")
        for d, c in zip(disp, cdf):
            fh.write(f"{d:.10g},{c:.10g}\n")


def _emit_density(outdir: Path, grid: StructuredGrid, densities: DensityField) -> None:
    matrix = density_matrix(grid, densities)
    write_density_csv(outdir / "density.csv", matrix)
    write_density_pgm(outdir / "density.pgm", matrix)


def _rbto_problem(cfg: RunConfig, grid: StructuredGrid, dof: int, beta: float) -> RbtoProblem:
    return RbtoProblem(
        grid=grid,
        marginal=ModulusMarginal(cfg.a, cfg.b),
        constraints=[ReliabilityConstraint(dof=dof, u_max=cfg.u_max, beta=beta)],
        l1=cfg.l1,
        l2=cfg.l2,
        kl_terms=cfg.kl_terms,
        corr_length_mode=cfg.corr_length_mode,
        pce_degree=cfg.pce_p,
        colloc_count=cfg.colloc_count,
        penal=cfg.simp_p,
        rmin=cfg.rmin,
        dto_tol=cfg.dto_tol,
        sora_tol=cfg.sora_tol,
        sora_max=cfg.sora_max,
        seed=cfg.seed,
    )


def _single_beta(cfg: RunConfig, mode: str) -> float:
    if len(cfg.beta) != 1:
        raise ConfigError(f"{mode} needs exactly one beta value; use sweep for grids")
    return float(cfg.beta[0])


def run(cfg: RunConfig, mode: str) -> Path:
    """Execute one run; returns the artifact directory."""
    if mode not in ("dto", "rbto", "verify"):
        raise ConfigError(f"unknown mode {mode!r}")
    root = Path(os.environ.get(OUTPUT_ROOT_ENV) or cfg.output_dir)
    outdir = root / f"{mode}-{config_hash(cfg, mode)}"
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.json").write_text(
        json.dumps({"mode": mode, **cfg.to_dict()}, indent=2, sort_keys=True) + "\n"
    )
    t0 = time.perf_counter()
    log: dict = {
        "mode": mode,
        "config_hash": config_hash(cfg, mode),
        "package_version": __version__,
    }
    grid, dof = build_problem(cfg)

    try:
        if mode == "dto":
            mean_modulus = 0.5 * (cfg.a + cfg.b)
            problem = DtoProblem(
                grid=grid,
                modulus=np.full(grid.n_elements, mean_modulus),
                constraints=[(dof, cfg.u_max)],
                penal=cfg.simp_p,
                rmin=cfg.rmin,
                d_max=cfg.dto_tol,
            )
            result = run_dto(problem)
            _emit_density(outdir, grid, result.densities)
            log["dto"] = {
                "modulus": mean_modulus,
                "volume_fraction": result.volume_fraction,
                "converged": result.converged,
                "iterations": result.iterations,
                "history": result.history,
            }
        else:
            beta = _single_beta(cfg, mode)
            sora = run_sora(_rbto_problem(cfg, grid, dof, beta))
            _emit_density(outdir, grid, sora.densities)
            log["sora"] = {
                "beta": beta,
                "volume_fraction": sora.volume_fraction,
                "converged": sora.converged,
                "loops": [
                    {
                        "loop": r.loop,
                        "volume_fraction": r.volume_fraction,
                        "dto_iterations": r.dto_iterations,
                        "dto_converged": r.dto_converged,
                        "dto_reused": r.dto_reused,
                        "mpp": [list(map(float, x)) for x in r.mpps],
                        "g_at_mpp": r.g_at_mpp,
                        "hmv_iterations": r.hmv_iterations,
                        "mpp_movement": r.mpp_movement,
                        "elapsed_s": r.elapsed_s,
                    }
                    for r in sora.state.records
                ],
            }
            log["volume_fraction"] = sora.volume_fraction

            if mode == "verify":
                if not cfg.a < cfg.b:
                    raise ConfigError("verify requires a < b")
                sources = (
                    ["full-fea", "surrogate"] if cfg.mcs_source == "both" else [cfg.mcs_source]
                )
                marginal = ModulusMarginal(cfg.a, cfg.b)
                reports = {}
                for source in sources:
                    report = verification.run_mcs(
                        grid,
                        sora.densities,
                        sora.basis,
                        marginal,
                        (dof, cfg.u_max),
                        cfg.mcs_n,
                        cfg.seed,
                        source=source,
                        penal=cfg.simp_p,
                        surrogate=sora.surrogates[0],
                        workers=None if source == "full-fea" else 1,
                    )
                    reports[source] = report
                    x, f = report.cdf_points()
                    tag = source.replace("-", "_")
                    write_cdf_csv(outdir / f"cdf_{tag}.csv", x, f)
                    xt, ft = report.tail_points(10)
                    write_cdf_csv(outdir / f"cdf_{tag}_tail.csv", xt, ft)
                    log.setdefault("mcs", {})[source] = {
                        "count": report.count,
                        "seed": report.seed,
                        "p_f": report.p_f,
                        "mean": report.mean,
                        "std": report.std,
                        "n_invalid": report.n_invalid,
                        "expected_p_f": float(ndtr(-beta)),
                    }
                log["srsm"] = {
                    "mean": chaos.surrogate_mean(sora.surrogates[0]),
                    "std": chaos.surrogate_std(sora.surrogates[0]),
                }
                if len(reports) == 2:
                    cmp = verification.compare_reports(
                        reports["full-fea"], reports["surrogate"]
                    )
                    log["comparison"] = dataclasses.asdict(cmp)
    except Exception as exc:
        record = {"error_type": type(exc).__name__, "message": str(exc)}
        (outdir / "error.json").write_text(json.dumps(record, indent=2) + "\n")
        raise

    log["elapsed_s"] = time.perf_counter() - t0
    (outdir / "run_log.json").write_text(json.dumps(log, indent=2) + "\n")
    return outdir


def _sweep_cell(args) -> str:
    cfg_dict, mode = args
    cfg = RunConfig(**cfg_dict)
    return str(run(cfg, mode))


def run_sweep(cfg: RunConfig, ab_pairs: list[tuple[float, float]], mode: str = "rbto",
              workers: int | None = None) -> list[Path]:
    """Cross the configured beta list with (a, b) pairs; one run directory each."""
    if not ab_pairs:
        ab_pairs = [(cfg.a, cfg.b)]
    cells = []
    for beta in cfg.beta:
        for a, b in ab_pairs:
            cell = dataclasses.replace(cfg, beta=[float(beta)], a=float(a), b=float(b))
            _validate(cell)
            cells.append((cell.to_dict(), mode))
    workers = workers or min(len(cells), os.cpu_count() or 1)
    if workers <= 1 or len(cells) == 1:
        return [Path(_sweep_cell(c)) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [Path(p) for p in pool.map(_sweep_cell, cells)]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file with RunConfig keys")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "beta":
            parser.add_argument(flag, type=float, action="append", dest=f.name)
        elif f.name in ("problem", "corr_length_mode", "mcs_source", "output_dir"):
            parser.add_argument(flag, type=str, dest=f.name)
        elif _FIELD_TYPES[f.name] in ("int", int):
            parser.add_argument(flag, type=int, dest=f.name)
        else:
            parser.add_argument(flag, type=float, dest=f.name)


def _parse_ab(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--ab expects 'a,b', got {text!r}") from exc
    return a, b


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rbto",
        description="Reliability-based topology optimization under a random-field modulus",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("dto", "deterministic optimization at the mean modulus"),
        ("rbto", "SORA reliability-based optimization"),
        ("verify", "SORA followed by Latin-hypercube Monte Carlo"),
        ("sweep", "fan a beta x (a,b) grid of rbto/verify runs out"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_config_flags(p)
        if name == "sweep":
            p.add_argument("--ab", type=_parse_ab, action="append", default=None,
                           help="repeatable (a,b) pair, e.g. --ab 1,1.3")
            p.add_argument("--mode", choices=["dto", "rbto", "verify"], default="rbto")
            p.add_argument("--workers", type=int, default=None)

    args = parser.parse_args(argv)
    overrides = {
        f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    try:
        cfg = parse_config(args.config, overrides)
        if args.command == "sweep":
            paths = run_sweep(cfg, args.ab or [], mode=args.mode, workers=args.workers)
            for p in paths:
                print(p)
        else:
            print(run(cfg, args.command))
        return 0
    except RbtoError as exc:
        record = {"error_type": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

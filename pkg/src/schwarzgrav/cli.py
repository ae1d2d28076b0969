"""Command-line driver: optimize, rate, solve, gridify, oracle.

Configuration files use INI syntax (``configparser``); every key is
optional and command-line flags override the file.  See the README for the
full key list.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cmaes import CmaEsConfig, CmaEsResult, cmaes_minimize, write_trace
from .linalg import PcgConfig
from .model import (DensityField, Grid, assemble_poisson, ball_anomaly, direct_integration_potential,
                    load_density_grid, make_grid, node_to_cell, point_mass_potential, save_grid_values,
                    synthetic_crater_anomaly)
from .rate import (MODE_DIMENSION, MODES, FrequencyBand, TransmissionParams, cost_function,
                   default_band, rho_max, reference_band, write_rate_curve)
from .schwarz import SchwarzConfig, SchwarzDivergence, monolithic_solve, partition_x, schwarz_solve

log = logging.getLogger("schwarzgrav")

EXIT_OK = 0
EXIT_DIVERGED = 2
EXIT_CONFIG = 3


class ConfigError(ValueError):
    pass


# -- launch geometry ------------------------------------------------------

KERNEL_BLOCK_SIZE = {"daxpy": 256, "dot": 128, "spmv": 256}
THREADS_PER_WARP = 8


@dataclass(frozen=True)
class GridificationPlan:
    kind: str
    numb_rows: int
    numb_th_block: int
    n_th_warp: int
    nBlocks: int
    nThreadsPerBlock: int


def gridify(kind: str, numb_rows: int, numb_th_block: int | None = None,
            n_th_warp: int = THREADS_PER_WARP) -> GridificationPlan:
    """Blocks and threads per block for one accelerator kernel launch.

    ``daxpy``/``dot``: ``(rows + block - 1) // block``;
    ``spmv``: ``(rows * warp + block - 1) // block`` (one warp slice per row).
    """
    if kind not in KERNEL_BLOCK_SIZE:
        raise ValueError(f"kernel kind must be one of {sorted(KERNEL_BLOCK_SIZE)}, got {kind!r}")
    block = KERNEL_BLOCK_SIZE[kind] if numb_th_block is None else numb_th_block
    if numb_rows < 1 or block < 1 or n_th_warp < 1:
        raise ValueError("gridify inputs must be positive")
    work = numb_rows * n_th_warp if kind == "spmv" else numb_rows
    return GridificationPlan(kind, numb_rows, block, n_th_warp, (work + block - 1) // block, block)


# -- configuration --------------------------------------------------------

@dataclass
class ProblemConfig:
    nx: int = 64
    ny: int = 64
    nz: int = 1
    lx: float = 250e3
    ly: float = 250e3
    lz: float = 15e3
    density_file: str | None = None
    center_x: float | None = None
    center_y: float | None = None
    rim_radius: float | None = None
    amplitude: float = 300.0
    depth: float | None = None


@dataclass
class OptimizerConfig:
    population_size: int = 25
    sigma0: float = 0.5
    zone: tuple[float, float] = (0.0, 2.0)
    max_iterations: int = 7200
    f_tolerance: float = 5e-11


@dataclass
class SolverConfig:
    outer_tolerance: float = 1e-6
    max_outer_iterations: int = 1000
    inner_tolerance: float = 1e-10
    workers: int = 1


@dataclass
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    nsub: int = 2
    mode: str = "oo2_sym"
    band: tuple[float, float] | str | None = None
    n_samples: int = 10_000
    coefficients: tuple[float, float, float, float] | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: str = "out"
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.mode not in MODES + ("all", "untuned"):
            raise ConfigError(f"mode must be one of {MODES + ('all', 'untuned')}, got {self.mode!r}")
        if self.nsub < 1:
            raise ConfigError("nsub must be >= 1")
        if isinstance(self.band, tuple) and not (0 < self.band[0] <= self.band[1]):
            raise ConfigError(f"band must satisfy 0 < kmin <= kmax, got {self.band}")
        if isinstance(self.band, str) and self.band != "reference":
            raise ConfigError(f"unknown band keyword {self.band!r}")
        if self.optimizer.sigma0 <= 0 or self.optimizer.population_size < 2:
            raise ConfigError("optimizer needs sigma0 > 0 and population_size >= 2")
        return self


def parse_band(text: str):
    if text.strip().lower() == "reference":
        return "reference"
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"band must look like KMIN:KMAX or 'reference', got {text!r}") from None
    return (lo, hi)


def _parse_pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"expected LO:HI, got {text!r}") from None
    return lo, hi


_SECTIONS = {
    "problem": ("problem", ProblemConfig),
    "optimizer": ("optimizer", OptimizerConfig),
    "solver": ("solver", SolverConfig),
}


def _coerce(value: str, current, key: str):
    try:
        if key == "zone":
            return _parse_pair(value)
        if key == "band":
            return parse_band(value)
        if key == "coefficients":
            parts = tuple(float(v) for v in value.replace(",", " ").split())
            if len(parts) != 4:
                raise ConfigError("coefficients needs four numbers p1 q1 p2 q2")
            return parts
        if isinstance(current, bool):
            return value.lower() in ("1", "true", "yes", "on")
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float) or key in ("center_x", "center_y", "rim_radius", "depth"):
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None


def load_config(path) -> RunConfig:
    """Read an INI config with sections ``[run]``, ``[problem]``, ``[optimizer]``, ``[solver]``."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = RunConfig()
    for section in parser.sections():
        if section == "run":
            target = cfg
        elif section in _SECTIONS:
            target = getattr(cfg, _SECTIONS[section][0])
        else:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if not hasattr(target, key) or key in _SECTIONS:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            setattr(target, key, _coerce(value, getattr(target, key), key))
    return cfg.validate()


# -- helpers --------------------------------------------------------------

def build_field(problem: ProblemConfig) -> DensityField:
    if problem.density_file:
        return load_density_grid(problem.density_file)
    grid = make_grid(problem.nx, problem.ny, problem.nz, problem.lx, problem.ly, problem.lz)
    center = (problem.center_x if problem.center_x is not None else 0.5 * grid.lx,
              problem.center_y if problem.center_y is not None else 0.5 * grid.ly)
    rim = problem.rim_radius if problem.rim_radius is not None else 0.2 * min(grid.lx, grid.ly)
    return synthetic_crater_anomaly(grid, center, rim, problem.amplitude, problem.depth)


def resolve_band(cfg: RunConfig, grid: Grid | None = None) -> FrequencyBand:
    if cfg.band == "reference":
        return reference_band(cfg.n_samples)
    if isinstance(cfg.band, tuple):
        return FrequencyBand(cfg.band[0], cfg.band[1], cfg.n_samples)
    if grid is None:
        raise ConfigError("no band given and no grid to derive one from")
    return default_band(grid, cfg.n_samples)


@dataclass
class OptimizedTransmission:
    mode: str
    params: TransmissionParams
    rho_max: float
    k_argmax: float
    band: FrequencyBand
    search: CmaEsResult


def optimize_transmission(mode: str, band: FrequencyBand, seed: int = 0,
                          opt: OptimizerConfig | None = None) -> OptimizedTransmission:
    """Minimize ``rho_max`` over ``band`` with CMA-ES.

    The search runs on the band rescaled by ``k_ref = sqrt(k_min k_max)``
    (``p / k_ref`` and ``q k_ref`` are dimensionless and O(1)); ``rho``
    depends only on ``p / k`` and ``q k`` so the optimum maps back exactly.
    The initial distribution is centred in ``opt.zone`` (dimensionless).
    """
    opt = opt or OptimizerConfig()
    if mode not in MODE_DIMENSION:
        raise ConfigError(f"unknown mode {mode!r}")
    k_ref = math.sqrt(band.k_min * band.k_max)
    unit = FrequencyBand(band.k_min / k_ref, band.k_max / k_ref, band.n_samples)
    dim = MODE_DIMENSION[mode]
    lo, hi = opt.zone
    cma = CmaEsConfig(
        initial_mean=np.full(dim, 0.5 * (lo + hi)), initial_step_size=opt.sigma0,
        population_size=opt.population_size, max_iterations=opt.max_iterations,
        f_tolerance=opt.f_tolerance, rng_seed=seed,
    )
    res = cmaes_minimize(lambda x: cost_function(x, mode, unit), cma)
    x = np.array(res.best_point, dtype=float)
    # p-type entries scale with k_ref, q-type entries with 1/k_ref
    q_slots = {"oo0_sym": [], "oo0_unsym": [], "oo2_sym": [1], "oo2_unsym": [1, 3]}[mode]
    scale = np.full(dim, k_ref)
    scale[q_slots] = 1.0 / k_ref
    tp = TransmissionParams.decode(x * scale, mode)
    value, k_arg = rho_max(tp, band)
    return OptimizedTransmission(mode, tp, value, k_arg, band, res)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


# -- commands -------------------------------------------------------------

TABLE_HEADER = ["mode", "p1", "q1", "p2", "q2", "rho_max", "k_argmax", "generations", "seed"]


def cmd_optimize(cfg: RunConfig, grid: Grid | None = None, write: bool = True) -> list[OptimizedTransmission]:
    """Optimize the requested mode(s); writes ``optimize.csv`` and traces."""
    band = resolve_band(cfg, grid if grid is not None else (build_field(cfg.problem).grid if cfg.band is None else None))
    modes = MODES if cfg.mode == "all" else (cfg.mode,)
    results = [optimize_transmission(m, band, cfg.seed, cfg.optimizer) for m in modes]
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "optimize.csv", "w", newline="") as fh:
            w = _writer(fh)
            w.writerow(TABLE_HEADER)
            for r in results:
                w.writerow([r.mode, *(repr(v) for v in r.params.as_row()), repr(r.rho_max),
                            repr(r.k_argmax), r.search.generations_used, cfg.seed])
        for r in results:
            write_trace(out / f"trace_{r.mode}.csv", r.search)
    return results


def cmd_rate_curves(cfg: RunConfig, params: dict[str, TransmissionParams], band: FrequencyBand | None = None
                    ) -> list[Path]:
    band = band or resolve_band(cfg, build_field(cfg.problem).grid if cfg.band is None else None)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, tp in params.items():
        path = out / f"rate_{name}.csv"
        write_rate_curve(path, tp, band)
        paths.append(path)
    return paths


@dataclass
class SolveOutcome:
    params: TransmissionParams
    phi: np.ndarray
    report: object
    monolithic_difference: float | None


def _solve_params(cfg: RunConfig, grid: Grid) -> TransmissionParams:
    if cfg.coefficients is not None:
        p1, q1, p2, q2 = cfg.coefficients
        order = "OO0" if q1 == 0 and q2 == 0 else "OO2"
        return TransmissionParams(p1, q1, p2, q2, order, p1 == p2 and q1 == q2)
    if cfg.mode == "untuned":
        return TransmissionParams.robin(1.0)
    if cfg.mode == "all":
        raise ConfigError("solve needs a single transmission mode")
    return cmd_optimize(cfg, grid, write=True)[0].params


def cmd_solve(cfg: RunConfig, compare: bool = True) -> SolveOutcome:
    """Optimize (unless coefficients are given), run Schwarz, write report and potential."""
    field_ = build_field(cfg.problem)
    grid = field_.grid
    tp = _solve_params(cfg, grid)
    system = assemble_poisson(field_)
    scfg = SchwarzConfig(cfg.solver.outer_tolerance, cfg.solver.max_outer_iterations,
                         PcgConfig(cfg.solver.inner_tolerance, 100_000), workers=cfg.solver.workers)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    phi, report = schwarz_solve(field_, partition_x(grid, cfg.nsub), tp, scfg, system=system)
    report.write_csv(out / "schwarz_report.csv")
    save_grid_values(out / "potential.csv", grid, node_to_cell(grid, phi))
    diff = None
    if compare:
        ref, _ = monolithic_solve(field_, PcgConfig(1e-12, 100_000), system)
        scale = float(np.max(np.abs(ref)))
        diff = float(np.max(np.abs(phi - ref))) / scale if scale > 0 else float(np.max(np.abs(phi)))
    return SolveOutcome(tp, phi, report, diff)


def cmd_sweep(cfg: RunConfig, counts=(2, 4, 8, 16)) -> list[tuple[int, int, bool]]:
    """Outer iteration counts for several subdomain counts (report only)."""
    field_ = build_field(cfg.problem)
    grid = field_.grid
    tp = _solve_params(cfg, grid)
    system = assemble_poisson(field_)
    scfg = SchwarzConfig(cfg.solver.outer_tolerance, cfg.solver.max_outer_iterations,
                         PcgConfig(cfg.solver.inner_tolerance, 100_000), workers=cfg.solver.workers)
    rows = []
    for n in counts:
        _, rep = schwarz_solve(field_, partition_x(grid, n), tp, scfg, system=system)
        rows.append((n, rep.outer_iterations, rep.converged))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["subdomains", "outer_iterations", "converged"])
        w.writerows(rows)
    return rows


def oracle_checks(mass: float = 5.972e24, radius: float = 6.371e6, n: int = 32) -> dict[str, float]:
    """Point-mass value and the ball-versus-point-mass relative error at 3 radii."""
    grid = make_grid(n, n, n, 1.0, 1.0, 1.0)
    ball_r = 0.25
    field_ = ball_anomaly(grid, (0.5, 0.5, 0.5), ball_r, 1000.0)
    probe = (0.5 + 3 * ball_r, 0.5, 0.5)
    direct = direct_integration_potential(field_, probe)
    exact = point_mass_potential(1000.0 * 4.0 / 3.0 * math.pi * ball_r ** 3, 3 * ball_r)
    return {
        "point_mass_potential": point_mass_potential(mass, radius),
        "ball_direct": direct,
        "ball_point_mass": exact,
        "ball_relative_error": abs(direct - exact) / exact,
    }


# -- argument parsing -----------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--mode", help="oo0_sym | oo0_unsym | oo2_sym | oo2_unsym | all | untuned")
    common.add_argument("--band", help="KMIN:KMAX, or 'reference' for the band recovered from the reference optima")
    common.add_argument("--nsub", type=int, help="number of x slabs")
    common.add_argument("--seed", type=int, help="optimizer seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--population", type=int, help="CMA-ES population size")
    common.add_argument("--sigma0", type=float, help="initial CMA-ES step size (dimensionless)")
    common.add_argument("--zone", help="initial search zone LO:HI (dimensionless)")
    common.add_argument("--grid", help="NX,NY,NZ,LX,LY,LZ")
    common.add_argument("--density", help="density grid CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="schwarzgrav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("optimize", parents=[common], help="tune transmission coefficients")
    r = sub.add_parser("rate", parents=[common], help="write convergence-factor curves")
    r.add_argument("--coefficients", help="p1,q1,p2,q2 (skips optimization)")
    s = sub.add_parser("solve", parents=[common], help="run the optimized Schwarz solver")
    s.add_argument("--coefficients", help="p1,q1,p2,q2 (skips optimization)")
    s.add_argument("--sweep", help="comma-separated subdomain counts for an iteration sweep")
    s.add_argument("--no-compare", action="store_true", help="skip the monolithic reference solve")
    g = sub.add_parser("gridify", help="accelerator launch geometry for a kernel")
    g.add_argument("kind", choices=sorted(KERNEL_BLOCK_SIZE))
    g.add_argument("rows", type=int)
    g.add_argument("--block", type=int)
    g.add_argument("--warp", type=int, default=THREADS_PER_WARP)
    o = sub.add_parser("oracle", help="gravity oracle checks")
    o.add_argument("--mass", type=float, default=5.972e24)
    o.add_argument("--radius", type=float, default=6.371e6)
    o.add_argument("--n", type=int, default=32)
    return p


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.mode:
        cfg.mode = args.mode
    if args.band:
        cfg.band = parse_band(args.band)
    if args.nsub is not None:
        cfg.nsub = args.nsub
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out = args.out
    if args.population:
        cfg.optimizer.population_size = args.population
    if args.sigma0:
        cfg.optimizer.sigma0 = args.sigma0
    if args.zone:
        cfg.optimizer.zone = _parse_pair(args.zone)
    if args.grid:
        try:
            vals = [float(v) for v in args.grid.split(",")]
            nx, ny, nz, lx, ly, lz = vals
        except ValueError:
            raise ConfigError(f"--grid needs NX,NY,NZ,LX,LY,LZ, got {args.grid!r}") from None
        cfg.problem = replace(cfg.problem, nx=int(nx), ny=int(ny), nz=int(nz), lx=lx, ly=ly, lz=lz)
    if args.density:
        cfg.problem.density_file = args.density
    if getattr(args, "coefficients", None):
        cfg.coefficients = _coerce(args.coefficients, None, "coefficients")
    return cfg.validate()


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors are configuration errors
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(message)s")
    try:
        if args.command == "gridify":
            plan = gridify(args.kind, args.rows, args.block, args.warp)
            print(f"kind={plan.kind} numb_rows={plan.numb_rows} nBlocks={plan.nBlocks} "
                  f"nThreadsPerBlock={plan.nThreadsPerBlock} n_th_warp={plan.n_th_warp}")
            return EXIT_OK
        if args.command == "oracle":
            for k, v in oracle_checks(args.mass, args.radius, args.n).items():
                print(f"{k}={v!r}")
            return EXIT_OK

        cfg = config_from_args(args)
        if args.command == "optimize":
            t0 = time.perf_counter()
            for r in cmd_optimize(cfg):
                print(f"{r.mode}: p1={r.params.p1:.6g} q1={r.params.q1:.6g} p2={r.params.p2:.6g} "
                      f"q2={r.params.q2:.6g} rho_max={r.rho_max:.6g} band={r.band}")
            log.info("wrote %s/optimize.csv (%.2fs, seed %d)", cfg.out, time.perf_counter() - t0, cfg.seed)
        elif args.command == "rate":
            if cfg.coefficients is not None:
                params = {"custom": _solve_params(cfg, None)}
                band = resolve_band(cfg, build_field(cfg.problem).grid)
            else:
                results = cmd_optimize(cfg)
                params = {r.mode: r.params for r in results}
                band = results[0].band
            for path in cmd_rate_curves(cfg, params, band):
                print(path)
        elif args.command == "solve":
            if args.sweep:
                counts = [int(v) for v in args.sweep.split(",")]
                for n, its, ok in cmd_sweep(cfg, counts):
                    print(f"subdomains={n} outer_iterations={its} converged={ok}")
            else:
                res = cmd_solve(cfg, compare=not args.no_compare)
                rep = res.report
                print(f"outer_iterations={rep.outer_iterations} converged={rep.converged} "
                      f"stop={rep.stop_reason} global_residual={rep.global_residual_history[-1]:.3e}")
                if res.monolithic_difference is not None:
                    print(f"relative_linf_vs_monolithic={res.monolithic_difference:.3e}")
                if not rep.converged:
                    return EXIT_DIVERGED
        return EXIT_OK
    except SchwarzDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Non-overlapping optimized Schwarz iteration on x-direction slabs.

Discretisation at an interface plane
------------------------------------
Interface nodes are duplicated: every slab owns a copy of each of its
interface planes.  The row of an interface node is the half control volume
of the monolithic row (tangential part halved, one-sided x coupling) plus a
transmission block ``T``.  Every local row is the monolithic row divided by
the same factor, so with ``u`` and ``g`` in these scaled units the local
problem reads

    K_s u + T_s u_G = f_s + g_s

For the Robin operator ``A = p - q d_tt`` the block is
``T = (p I + q L_t) / h_x`` with ``L_t`` the tangential ``-Laplacian``.
``K_s u - f_s`` on an interface row is the discrete outward flux; summing the
two halves gives back the monolithic row, which is why the converged
iteration reproduces the monolithic solution exactly.

Interface data are exchanged with the recombination
``g_left <- -g_right + (T_left + T_right) u_right`` (and symmetrically),
which equals the ``(d_n + A) u_neighbour`` form without extracting a normal
derivative.  Slab left of an interface uses side 1 of the parameters, the
slab to its right side 2.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import CsrMatrix, PcgConfig, SolveStats, csr_from_coo, pcg, spmv
from .model import DensityField, Grid, PoissonSystem, assemble_poisson, slab_operator, tangential_operator
from .rate import TransmissionParams

log = logging.getLogger(__name__)

DTN_MAX_INTERFACE = 2000


class SchwarzDivergence(RuntimeError):
    def __init__(self, msg: str, report: "SchwarzReport"):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class Partition:
    nx: int
    slabs: tuple[tuple[int, int], ...]

    @property
    def subdomain_count(self) -> int:
        return len(self.slabs)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in self.slabs)

    @property
    def interfaces(self) -> tuple[tuple[int, int, int], ...]:
        """(left subdomain, right subdomain, x node index of the shared plane)."""
        return tuple((s, s + 1, self.slabs[s][1]) for s in range(len(self.slabs) - 1))

    def reversed(self) -> "Partition":
        """Same cut with the slab order mirrored (widths read right to left)."""
        return partition_widths(self.nx, self.widths[::-1])


def partition_widths(nx: int, widths) -> Partition:
    edges = np.concatenate([[0], np.cumsum(widths)])
    if edges[-1] != nx or np.any(np.asarray(widths) < 1):
        raise ValueError(f"widths {tuple(widths)} do not tile {nx} cells")
    return Partition(nx, tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])))


def partition_x(grid: Grid, nsub: int) -> Partition:
    """Contiguous x slabs whose widths differ by at most one cell.

    The remainder goes to the leftmost slabs.
    """
    if nsub < 1:
        raise ValueError("need at least one subdomain")
    if nsub > max(grid.nx - 1, 1):
        raise ValueError(f"{nsub} subdomains need more than the {grid.nx - 1} interior x planes")
    base, rem = divmod(grid.nx, nsub)
    return partition_widths(grid.nx, [base + (1 if s < rem else 0) for s in range(nsub)])


@dataclass(eq=False)
class InterfaceSide:
    interface: int
    side: int  # 1 for the slab left of the plane, 2 for the right one
    local: np.ndarray  # local unknown indices of the plane
    transmission: np.ndarray | CsrMatrix


@dataclass(eq=False)
class SubdomainSystem:
    index: int
    planes: np.ndarray  # global x node index of each local plane
    ntan: int
    matrix: CsrMatrix
    base_matrix: CsrMatrix
    rhs_base: np.ndarray
    global_dofs: np.ndarray
    sides: dict[str, InterfaceSide] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.nrows

    def local_rhs(self, g: dict[str, np.ndarray]) -> np.ndarray:
        b = self.rhs_base.copy()
        for name, data in g.items():
            b[self.sides[name].local] += data
        return b


def robin_block(grid: Grid, p: float, q: float) -> CsrMatrix:
    """Scaled interface block ``(p I + q L_t) / h_x`` of ``A = p - q d_tt``."""
    Lt = tangential_operator(grid)
    n = Lt.nrows
    rows = np.concatenate([Lt.row_ids(), np.arange(n)])
    cols = np.concatenate([Lt.col_indices, np.arange(n)])
    vals = np.concatenate([q * Lt.values, np.full(n, p)]) / grid.hx
    return csr_from_coo(n, n, rows, cols, vals)


def _block_coo(T, local: np.ndarray):
    if isinstance(T, CsrMatrix):
        return local[T.row_ids()], local[T.col_indices], T.values
    T = np.asarray(T)
    r, c = np.nonzero(np.ones_like(T, dtype=bool))
    return local[r], local[c], T[r, c]


def _slab_layout(grid: Grid, partition: Partition, s: int):
    a, b = partition.slabs[s]
    lo = max(a, 1)
    hi = min(b, grid.nx - 1)
    planes = np.arange(lo, hi + 1)
    return planes, a == 0, b == grid.nx


def assemble_subdomain(field: DensityField, partition: Partition, s: int, tp: TransmissionParams | None,
                       system: PoissonSystem | None = None, transmissions: dict | None = None
                       ) -> SubdomainSystem:
    """Local Robin-coupled system of slab ``s``.

    ``transmissions`` may override the Robin blocks per side
    (``{"left": T, "right": T}``), which is how the exact interface
    operators are plugged in.
    """
    grid = field.grid
    if system is None:
        system = assemble_poisson(field)
    planes, left_dir, right_dir = _slab_layout(grid, partition, s)
    ntan = int(np.prod([grid.counts[a] - 1 for a in grid.active_axes if a != 0])) if grid.ndim > 1 else 1
    K = slab_operator(grid, len(planes), left_dir, right_dir)
    n = K.nrows
    local = np.arange(n)
    plane_of = local // ntan
    global_dofs = (planes[plane_of] - 1) * ntan + local % ntan

    rhs = system.rhs[global_dofs].copy()
    if not left_dir:
        rhs[plane_of == 0] *= 0.5
    if not right_dir:
        rhs[plane_of == len(planes) - 1] *= 0.5

    sides: dict[str, InterfaceSide] = {}
    transmissions = transmissions or {}
    if not left_dir:
        T = transmissions.get("left")
        if T is None:
            _check_well_posed(tp)
            T = robin_block(grid, tp.p2, tp.q2)
        sides["left"] = InterfaceSide(s - 1, 2, local[plane_of == 0], T)
    if not right_dir:
        T = transmissions.get("right")
        if T is None:
            _check_well_posed(tp)
            T = robin_block(grid, tp.p1, tp.q1)
        sides["right"] = InterfaceSide(s, 1, local[plane_of == len(planes) - 1], T)

    rows, cols, vals = [K.row_ids()], [K.col_indices], [K.values]
    for side in sides.values():
        r, c, v = _block_coo(side.transmission, side.local)
        rows.append(r)
        cols.append(c)
        vals.append(v)
    A = csr_from_coo(n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    return SubdomainSystem(s, planes, ntan, A, K, rhs, global_dofs, sides)


def _check_well_posed(tp: TransmissionParams | None):
    if tp is None:
        raise ValueError("transmission parameters required for Robin interfaces")
    if tp.p1 == 0 and tp.q1 == 0 and tp.p2 == 0 and tp.q2 == 0:
        raise ValueError("ill-posed transmission: p = q = 0 on both sides of the interface")
    if min(tp.p1, tp.q1, tp.p2, tp.q2) < 0:
        raise ValueError("transmission coefficients must be nonnegative")


def exact_dtn_transmission(sub: SubdomainSystem, side: str | None = None) -> np.ndarray:
    """Dense discrete Dirichlet-to-Neumann map of ``sub`` onto one interface plane.

    Schur complement of the transmission-free local matrix onto the plane's
    unknowns.  The subdomain must have a single interface unless ``side``
    names the one to use (other interfaces are then kept as in ``sub``).
    """
    if side is None:
        if len(sub.sides) != 1:
            raise ValueError("subdomain has several interfaces; name the side")
        side = next(iter(sub.sides))
    gamma = sub.sides[side].local
    if len(gamma) > DTN_MAX_INTERFACE:
        raise ValueError(f"interface has {len(gamma)} nodes, dense DtN limited to {DTN_MAX_INTERFACE}")
    # base operator plus transmission blocks of the *other* sides
    rows, cols, vals = [sub.base_matrix.row_ids()], [sub.base_matrix.col_indices], [sub.base_matrix.values]
    for name, other in sub.sides.items():
        if name != side:
            r, c, v = _block_coo(other.transmission, other.local)
            rows.append(r)
            cols.append(c)
            vals.append(v)
    K = csr_from_coo(sub.n, sub.n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    inner = np.setdiff1d(np.arange(sub.n), gamma)
    Kgg = K.submatrix(gamma, gamma).to_dense()
    if inner.size == 0:
        return Kgg
    Kig = K.submatrix(inner, gamma).to_dense()
    Kii = K.submatrix(inner, inner)
    if inner.size <= 6000:
        X = np.linalg.solve(Kii.to_dense(), Kig)
    else:
        cfg = PcgConfig(1e-14, 20 * inner.size)
        X = np.column_stack([pcg(Kii, Kig[:, j], cfg)[0] for j in range(len(gamma))])
    S = Kgg - Kig.T @ X
    return 0.5 * (S + S.T)


def exchange_interface_data(u_left, u_right, g_left, g_right, t_left, t_right):
    """New Robin data for the two copies of one interface plane.

    ``u_*`` are the plane values of each copy, ``g_*`` their current data
    and ``t_*`` their transmission blocks.  Returns ``(g_left, g_right)``.
    """
    u_left = np.asarray(u_left, dtype=float)
    u_right = np.asarray(u_right, dtype=float)
    if u_left.shape != u_right.shape or np.shape(g_left) != u_left.shape or np.shape(g_right) != u_left.shape:
        raise ValueError("mismatched interface plane sizes")

    def apply(T, v):
        return spmv(T, v) if isinstance(T, CsrMatrix) else np.asarray(T) @ v

    new_left = -np.asarray(g_right) + apply(t_left, u_right) + apply(t_right, u_right)
    new_right = -np.asarray(g_left) + apply(t_left, u_left) + apply(t_right, u_left)
    return new_left, new_right


@dataclass
class SchwarzConfig:
    outer_tolerance: float = 1e-6
    max_outer_iterations: int = 1000
    subdomain: PcgConfig = field(default_factory=lambda: PcgConfig(1e-10, 100_000))
    divergence_window: int = 10
    # rounds without a new minimum of the global residual that count as stagnation
    stagnation_window: int = 5
    workers: int = 1

    def __post_init__(self):
        if self.outer_tolerance <= 0:
            raise ValueError("outer_tolerance must be positive")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")


@dataclass
class SchwarzReport:
    outer_iterations: int = 0
    # relative change of the Robin data = residual of the transmission conditions
    interface_residual_history: list[float] = field(default_factory=list)
    global_residual_history: list[float] = field(default_factory=list)
    # max |u_left - u_right| over interface planes, relative to max |phi|
    interface_jump_history: list[float] = field(default_factory=list)
    inner_iterations_history: list[int] = field(default_factory=list)
    subdomain_stats: list[SolveStats] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["outer_iteration", "interface_residual", "global_residual", "cumulative_inner_iterations"])
            total = 0
            for i, (ir, gr, inner) in enumerate(zip(self.interface_residual_history,
                                                    self.global_residual_history,
                                                    self.inner_iterations_history), start=1):
                total += inner
                w.writerow([i, repr(ir), repr(gr), total])


def build_subdomains(field: DensityField, partition: Partition, tp: TransmissionParams | None,
                     system: PoissonSystem, transmission: str = "robin") -> list[SubdomainSystem]:
    if transmission == "dtn":
        if partition.subdomain_count != 2:
            raise ValueError("exact DtN transmission is implemented for two subdomains")
        # the placeholder Robin blocks are not used by the DtN computation
        placeholder = TransmissionParams.robin(1.0)
        left, right = (assemble_subdomain(field, partition, s, placeholder, system) for s in (0, 1))
        # each side receives the neighbour's exact DtN map
        t_left = exact_dtn_transmission(right, "left")
        t_right = exact_dtn_transmission(left, "right")
        subs = [assemble_subdomain(field, partition, 0, None, system, {"right": t_left}),
                assemble_subdomain(field, partition, 1, None, system, {"left": t_right})]
    elif transmission == "robin":
        subs = [assemble_subdomain(field, partition, s, tp, system) for s in range(partition.subdomain_count)]
    else:
        raise ValueError(f"unknown transmission kind {transmission!r}")
    return subs


def gather_global(subs: list[SubdomainSystem], solutions: list[np.ndarray], n_global: int) -> np.ndarray:
    """Global interior field; duplicated interface copies are averaged."""
    acc = np.zeros(n_global)
    cnt = np.zeros(n_global)
    for sub, u in zip(subs, solutions):
        np.add.at(acc, sub.global_dofs, u)
        np.add.at(cnt, sub.global_dofs, 1.0)
    return acc / np.maximum(cnt, 1.0)


def schwarz_solve(field: DensityField, partition: Partition, tp: TransmissionParams | None,
                  cfg: SchwarzConfig | None = None, transmission: str = "robin",
                  system: PoissonSystem | None = None) -> tuple[np.ndarray, SchwarzReport]:
    """Jacobi-type optimized Schwarz iteration starting from zero.

    Each round solves all slabs with the current interface data, then
    exchanges data across every interface.  Converges when the relative
    residual of the monolithic system drops below ``outer_tolerance``.  When
    the relative change of the interface data (the interface residual) is
    below ``outer_tolerance`` while the global residual has set no new minimum
    for ``stagnation_window`` rounds, the loop ends without convergence (inner solves too loose).
    Raises :class:`SchwarzDivergence` when the global residual grows for
    ``divergence_window`` consecutive rounds.
    """
    cfg = cfg or SchwarzConfig()
    if system is None:
        system = assemble_poisson(field)
    subs = build_subdomains(field, partition, tp, system, transmission)
    n_global = system.n_dofs
    bnorm = float(np.linalg.norm(system.rhs))
    scale = bnorm if bnorm > 0 else 1.0

    g = [{name: np.zeros(len(side.local)) for name, side in sub.sides.items()} for sub in subs]
    u = [np.zeros(sub.n) for sub in subs]
    report = SchwarzReport()
    growth = 0
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def solve(i):
        return pcg(subs[i].matrix, subs[i].local_rhs(g[i]), cfg.subdomain, x0=u[i])

    try:
        for it in range(1, cfg.max_outer_iterations + 1):
            results = list(pool.map(solve, range(len(subs))) if pool else map(solve, range(len(subs))))
            u = [r[0] for r in results]
            report.subdomain_stats = [r[1] for r in results]
            report.inner_iterations_history.append(sum(r[1].iterations for r in results))

            phi = gather_global(subs, u, n_global)
            unorm = max(float(np.max(np.abs(phi))), np.finfo(float).tiny)
            jumps = [0.0]
            new_g = [dict(d) for d in g]
            for left, right, _ in partition.interfaces:
                sl, sr = subs[left].sides["right"], subs[right].sides["left"]
                ul, ur = u[left][sl.local], u[right][sr.local]
                jumps.append(float(np.max(np.abs(ul - ur))) / unorm if ul.size else 0.0)
                new_g[left]["right"], new_g[right]["left"] = exchange_interface_data(
                    ul, ur, g[left]["right"], g[right]["left"], sl.transmission, sr.transmission)
            old = np.concatenate([v for d in g for v in d.values()] or [np.zeros(0)])
            new = np.concatenate([v for d in new_g for v in d.values()] or [np.zeros(0)])
            change = float(np.linalg.norm(new - old) / max(np.linalg.norm(new), np.finfo(float).tiny))
            g = new_g

            res = float(np.linalg.norm(system.rhs - spmv(system.matrix, phi))) / scale
            report.outer_iterations = it
            report.interface_residual_history.append(change)
            report.global_residual_history.append(res)
            report.interface_jump_history.append(max(jumps))
            log.debug("outer %d: global %.3e interface %.3e jump %.3e", it, res, change, max(jumps))

            if res <= cfg.outer_tolerance:
                report.converged, report.stop_reason = True, "global_residual"
                return phi, report
            hist = report.global_residual_history
            w = cfg.stagnation_window
            if change <= cfg.outer_tolerance and len(hist) > w and min(hist[-w:]) >= min(hist[:-w]):
                # interface data settled but the residual no longer improves
                report.stop_reason = "interface_stagnation"
                return phi, report
            growth = growth + 1 if len(hist) > 1 and hist[-1] > hist[-2] else 0
            if growth >= cfg.divergence_window:
                report.stop_reason = "diverged"
                raise SchwarzDivergence(
                    f"global residual grew for {growth} consecutive iterations (now {res:.3e})", report)
        report.stop_reason = "max_outer_iterations"
        return phi, report
    finally:
        if pool:
            pool.shutdown()


def monolithic_solve(field: DensityField, cfg: PcgConfig | None = None,
                     system: PoissonSystem | None = None) -> tuple[np.ndarray, SolveStats]:
    system = system or assemble_poisson(field)
    return pcg(system.matrix, system.rhs, cfg or PcgConfig(1e-12, 100_000))

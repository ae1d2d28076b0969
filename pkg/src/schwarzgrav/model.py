"""Structured grids, density anomalies, Poisson assembly and gravity oracles.

Conventions
-----------
* A :class:`Grid` counts *cells*; unknowns live on the ``(n+1)`` nodes per
  axis, boundary nodes carry the homogeneous Dirichlet value and are
  eliminated.
* An axis with a single cell in y or z is dropped, so ``nz == 1`` gives the
  2D five-point problem and ``ny == nz == 1`` the 1D three-point one.
* Cell and node arrays are flattened x-fastest, then y, then z.
* SI units throughout.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import CsrMatrix, csr_from_coo

log = logging.getLogger(__name__)

G = 6.672e-11  # m^3 kg^-1 s^-2


@dataclass(frozen=True)
class GravityConstants:
    G: float = G


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    nz: int
    lx: float
    ly: float
    lz: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError(f"cell counts must be >= 1, got {(self.nx, self.ny, self.nz)}")
        if min(self.lx, self.ly, self.lz) <= 0:
            raise ValueError(f"extents must be positive, got {(self.lx, self.ly, self.lz)}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def hz(self) -> float:
        return self.lz / self.nz

    @property
    def counts(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def extents(self) -> tuple[float, float, float]:
        return (self.lx, self.ly, self.lz)

    @property
    def spacings(self) -> tuple[float, float, float]:
        return (self.hx, self.hy, self.hz)

    @property
    def active_axes(self) -> tuple[int, ...]:
        """Axes that carry a discretisation (x always; y, z when refined)."""
        return (0,) + tuple(a for a in (1, 2) if self.counts[a] > 1)

    @property
    def ndim(self) -> int:
        return len(self.active_axes)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy * self.hz

    def cell_centers(self) -> np.ndarray:
        """(n_cells, 3) array of cell-centre coordinates, x-fastest."""
        axes = [self.origin[a] + (np.arange(n) + 0.5) * h
                for a, (n, h) in enumerate(zip(self.counts, self.spacings))]
        z, y, x = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        return np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def interior_shape(self) -> tuple[int, ...]:
        """Interior node counts for the active axes, slowest axis first."""
        return tuple(self.counts[a] - 1 for a in reversed(self.active_axes))

    def interior_node_coordinates(self) -> np.ndarray:
        """(n_interior, 3) coordinates of the unknowns, x-fastest.

        Dropped axes sit at the cell-centre coordinate.
        """
        axes = []
        for a, (n, h) in enumerate(zip(self.counts, self.spacings)):
            if a in self.active_axes:
                axes.append(self.origin[a] + np.arange(1, n) * h)
            else:
                axes.append(np.array([self.origin[a] + 0.5 * h]))
        z, y, x = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


def make_grid(nx: int, ny: int, nz: int, lx: float, ly: float, lz: float) -> Grid:
    return Grid(int(nx), int(ny), int(nz), float(lx), float(ly), float(lz))


@dataclass(frozen=True, eq=False)
class DensityField:
    grid: Grid
    delta_rho: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.delta_rho, dtype=np.float64).ravel()
        if arr.size != self.grid.n_cells:
            raise ValueError(f"density has {arr.size} values, grid has {self.grid.n_cells} cells")
        object.__setattr__(self, "delta_rho", arr)

    def as_array(self) -> np.ndarray:
        """Cell values shaped (nz, ny, nx)."""
        g = self.grid
        return self.delta_rho.reshape(g.nz, g.ny, g.nx)

    def total_mass(self) -> float:
        return float(self.delta_rho.sum() * self.grid.cell_volume)

    def scaled(self, factor: float) -> "DensityField":
        return DensityField(self.grid, factor * self.delta_rho)


# -- anomaly construction -------------------------------------------------

CRATER_DISC_FRACTION = 1.0
CRATER_RING_OUTER = 1.5
CRATER_RING_AMPLITUDE = 0.5


def crater_profile(r, rim_radius: float, amplitude: float):
    """Piecewise-constant radial crater profile.

    ``-amplitude`` for ``r < rim_radius`` (low-density fill),
    ``+amplitude/2`` on the raised rim ``rim_radius <= r < 1.5 rim_radius``,
    zero beyond.
    """
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    out[r < CRATER_DISC_FRACTION * rim_radius] = -amplitude
    ring = (r >= CRATER_DISC_FRACTION * rim_radius) & (r < CRATER_RING_OUTER * rim_radius)
    out[ring] = CRATER_RING_AMPLITUDE * amplitude
    return out


def synthetic_crater_anomaly(grid: Grid, center: tuple[float, float], rim_radius: float,
                             amplitude: float, depth: float | None = None) -> DensityField:
    """Radially symmetric crater-like anomaly sampled at cell centres.

    ``depth`` restricts the anomaly to the top layer of that thickness
    (whole column when ``None``).  It is ignored when z is not resolved
    (``nz == 1``), since the single layer stands for the whole column.
    """
    if rim_radius <= 0:
        raise ValueError("rim_radius must be positive")
    c = grid.cell_centers()
    r = np.hypot(c[:, 0] - center[0], c[:, 1] - center[1])
    rho = crater_profile(r, rim_radius, amplitude)
    if depth is not None and 2 in grid.active_axes:
        top = grid.origin[2] + grid.lz
        rho[c[:, 2] < top - depth] = 0.0
    return DensityField(grid, rho)


def ball_anomaly(grid: Grid, center, radius: float, amplitude: float) -> DensityField:
    """Uniform ball of density ``amplitude`` (cells whose centre is inside)."""
    c = grid.cell_centers()
    inside = np.linalg.norm(c - np.asarray(center, dtype=float), axis=1) < radius
    return DensityField(grid, np.where(inside, amplitude, 0.0))


def pad_field(field: DensityField, factor: float = 1.0) -> DensityField:
    """Embed ``field`` in a larger zero-density box.

    Each active axis grows by ``round(factor * n)`` cells on both sides; the
    original cells keep their physical coordinates.
    """
    g = field.grid
    pads = [int(round(factor * n)) if a in g.active_axes else 0 for a, n in enumerate(g.counts)]
    counts = [n + 2 * p for n, p in zip(g.counts, pads)]
    ext = [l + 2 * p * h for l, p, h in zip(g.extents, pads, g.spacings)]
    origin = tuple(o - p * h for o, p, h in zip(g.origin, pads, g.spacings))
    big = Grid(*counts, *ext, origin=origin)
    arr = np.zeros((counts[2], counts[1], counts[0]))
    arr[pads[2]:pads[2] + g.nz, pads[1]:pads[1] + g.ny, pads[0]:pads[0] + g.nx] = field.as_array()
    return DensityField(big, arr)


# -- CSV grid format ------------------------------------------------------

class GridFormatError(ValueError):
    pass


def save_grid_values(path, grid: Grid, values) -> None:
    values = np.asarray(values, dtype=float).ravel()
    if values.size != grid.n_cells:
        raise ValueError("value count does not match grid")
    with open(path, "w", newline="") as fh:
        fh.write(f"{grid.nx},{grid.ny},{grid.nz},{grid.lx!r},{grid.ly!r},{grid.lz!r}\n")
        for v in values:
            fh.write(f"{float(v)!r}\n")


def save_density_grid(path, field: DensityField) -> None:
    save_grid_values(path, field.grid, field.delta_rho)


def load_density_grid(path) -> DensityField:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise GridFormatError(f"{path}: line 1: empty file")
    head = rows[0]
    if len(head) != 6:
        raise GridFormatError(f"{path}: line 1: header needs 6 fields nx,ny,nz,lx,ly,lz, got {len(head)}")
    try:
        counts = [int(v) for v in head[:3]]
        ext = [float(v) for v in head[3:]]
        grid = make_grid(*counts, *ext)
    except ValueError as exc:
        raise GridFormatError(f"{path}: line 1: bad header: {exc}") from None
    body = [(i + 2, r) for i, r in enumerate(rows[1:]) if r and any(s.strip() for s in r)]
    if len(body) != grid.n_cells:
        raise GridFormatError(
            f"{path}: line {len(rows) + 1 if len(body) < grid.n_cells else body[grid.n_cells][0]}: "
            f"expected {grid.n_cells} cell values, found {len(body)}"
        )
    vals = np.empty(grid.n_cells)
    for k, (lineno, r) in enumerate(body):
        if len(r) != 1:
            raise GridFormatError(f"{path}: line {lineno}: expected one value, got {len(r)}")
        try:
            vals[k] = float(r[0])
        except ValueError:
            raise GridFormatError(f"{path}: line {lineno}: non-numeric cell value {r[0]!r}") from None
    return DensityField(grid, vals)


# -- discretisation -------------------------------------------------------

def node_density(field: DensityField) -> np.ndarray:
    """Density at interior nodes: mean of the cells sharing the node."""
    g = field.grid
    arr = field.as_array()
    # collapse dropped axes (single cell) then average neighbouring cells
    for axis_np, a in ((0, 2), (1, 1), (2, 0)):
        if a in g.active_axes:
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[axis_np] = slice(0, -1)
            sl_hi[axis_np] = slice(1, None)
            arr = 0.5 * (arr[tuple(sl_lo)] + arr[tuple(sl_hi)])
    return arr.ravel()


def slab_operator(grid: Grid, nplanes: int, left_dirichlet: bool = True,
                  right_dirichlet: bool = True) -> CsrMatrix:
    """Discrete ``-Laplacian`` on a block of ``nplanes`` consecutive x-planes.

    Each plane holds the interior tangential nodes.  A Dirichlet flag adds
    the eliminated boundary neighbour to the first/last plane; without it
    that plane is treated as a half control volume (tangential part halved,
    one-sided x coupling) ready to receive a Robin term.  With both flags set
    this is the monolithic operator of the x-range.
    """
    h = grid.spacings
    tang = [a for a in grid.active_axes if a != 0]
    tshape = [grid.counts[a] - 1 for a in tang]  # fastest first
    ntan = int(np.prod(tshape)) if tshape else 1
    n = nplanes * ntan
    idx = np.arange(n)
    plane = idx // ntan
    tpos = idx % ntan

    weight = np.ones(nplanes)
    if not left_dirichlet:
        weight[0] *= 0.5
    if not right_dirichlet:
        weight[-1] *= 0.5
    w = weight[plane]

    rows, cols, vals = [], [], []
    diag = np.zeros(n)

    # x links between consecutive planes
    hx2 = 1.0 / h[0] ** 2
    if nplanes > 1:
        lo = idx[plane < nplanes - 1]
        hi = lo + ntan
        rows += [lo, hi]
        cols += [hi, lo]
        vals += [np.full(lo.size, -hx2)] * 2
        np.add.at(diag, lo, hx2)
        np.add.at(diag, hi, hx2)
    if left_dirichlet:
        diag[plane == 0] += hx2
    if right_dirichlet:
        diag[plane == nplanes - 1] += hx2

    # tangential links, Dirichlet on the tangential boundary
    stride = 1
    for a, m in zip(tang, tshape):
        ha2 = 1.0 / h[a] ** 2
        coord = (tpos // stride) % m
        diag += 2.0 * ha2 * w
        lo = idx[coord < m - 1]
        hi = lo + stride
        rows += [lo, hi]
        cols += [hi, lo]
        vals += [-ha2 * w[lo]] * 2
        stride *= m

    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    return csr_from_coo(n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def tangential_operator(grid: Grid) -> CsrMatrix:
    """``-Laplacian`` restricted to one x-plane (tangential second difference).

    In 1D the plane is a single node and the operator is the 1x1 zero matrix.
    """
    if grid.ndim == 1:
        return csr_from_coo(1, 1, [0], [0], [0.0])
    # a lone plane with two open faces carries a quarter of the tangential part
    half = slab_operator(grid, 1, False, False)
    return CsrMatrix(half.nrows, half.ncols, half.row_offsets, half.col_indices, 4.0 * half.values)


@dataclass(eq=False)
class PoissonSystem:
    matrix: CsrMatrix
    rhs: np.ndarray
    grid: Grid
    dof_shape: tuple[int, ...] = field(default=())

    @property
    def n_dofs(self) -> int:
        return self.matrix.nrows

    def dof_map(self, flat_index: int) -> tuple[int, int, int]:
        """Grid node (i, j, k) of unknown ``flat_index``."""
        g = self.grid
        ijk = [0, 0, 0]
        rem = flat_index
        for a in g.active_axes:
            m = g.counts[a] - 1
            ijk[a] = rem % m + 1
            rem //= m
        return tuple(ijk)


def _check_assemblable(grid: Grid):
    for a in grid.active_axes:
        if grid.counts[a] < 2:
            raise ValueError(f"grid too small: axis {a} needs >= 3 nodes")
    if grid.nx < 2:
        raise ValueError("grid too small: x axis needs >= 3 nodes")


def assemble_operator(grid: Grid) -> PoissonSystem:
    """Monolithic ``-Laplacian`` with homogeneous Dirichlet data, zero rhs."""
    _check_assemblable(grid)
    A = slab_operator(grid, grid.nx - 1)
    return PoissonSystem(A, np.zeros(A.nrows), grid, grid.interior_shape())


def assemble_poisson(field: DensityField, constants: GravityConstants = GravityConstants()) -> PoissonSystem:
    """``-Laplacian(phi) = 4 pi G delta_rho`` on the interior nodes."""
    system = assemble_operator(field.grid)
    system.rhs = 4.0 * np.pi * constants.G * node_density(field)
    return system


def node_to_cell(grid: Grid, interior_values) -> np.ndarray:
    """Average interior-node values (zero Dirichlet boundary) onto cell centres."""
    vals = np.asarray(interior_values, dtype=float)
    full_shape = tuple(grid.counts[a] + 1 for a in reversed(grid.active_axes))
    full = np.zeros(full_shape)
    full[tuple(slice(1, -1) for _ in full_shape)] = vals.reshape(grid.interior_shape())
    for ax in range(full.ndim):
        lo = [slice(None)] * full.ndim
        hi = [slice(None)] * full.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        full = 0.5 * (full[tuple(lo)] + full[tuple(hi)])
    return full.ravel()


def interpolate_nodes(grid: Grid, interior_values, point) -> float:
    """Multilinear interpolation of a nodal field (zero on the boundary)."""
    vals = np.asarray(interior_values, dtype=float)
    full_shape = tuple(grid.counts[a] + 1 for a in reversed(grid.active_axes))
    full = np.zeros(full_shape)
    full[tuple(slice(1, -1) for _ in full_shape)] = vals.reshape(grid.interior_shape())
    axes = list(reversed(grid.active_axes))
    base, frac = [], []
    for a in axes:
        t = (point[a] - grid.origin[a]) / grid.spacings[a]
        i = int(np.clip(np.floor(t), 0, grid.counts[a] - 1))
        base.append(i)
        frac.append(t - i)
    out = 0.0
    for corner in np.ndindex(*([2] * len(axes))):
        wgt = 1.0
        for c, f in zip(corner, frac):
            wgt *= f if c else 1.0 - f
        out += wgt * full[tuple(b + c for b, c in zip(base, corner))]
    return float(out)


# -- gravity oracles -------------------------------------------------------

def point_mass_potential(m: float, r: float, constants: GravityConstants = GravityConstants()) -> float:
    if r <= 0:
        raise ValueError(f"distance must be positive, got {r}")
    return constants.G * m / r


def direct_integration_potential(field: DensityField, x, constants: GravityConstants = GravityConstants(),
                                 return_excluded: bool = False):
    """Midpoint-rule potential ``sum G drho_c V / |x - x_c|`` at point ``x``.

    Cells are treated as 3D blocks whatever the active axes.  A cell whose
    centre coincides with ``x`` has no finite midpoint term and is left out
    of the sum; pass ``return_excluded=True`` to get the excluded indices.
    """
    g = field.grid
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(g.cell_centers() - x, axis=1)
    coincident = r <= 1e-9 * min(g.spacings)
    keep = ~coincident & (field.delta_rho != 0)
    phi = constants.G * g.cell_volume * float(np.sum(field.delta_rho[keep] / r[keep]))
    excluded = np.flatnonzero(coincident)
    if excluded.size and np.any(field.delta_rho[excluded] != 0):
        log.info("direct integration excluded the cell centred on the probe")
    if return_excluded:
        return phi, excluded
    return phi

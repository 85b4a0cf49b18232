"""
Thermal ion exchange through a mask opening and the guided modes of the
resulting graded-index channel.

Diffusion is linear Fickian with constant ``D``; the surface concentration
inside the opening is held at ``C0`` and all other boundaries are zero-flux.
The index follows the concentration linearly, ``n = n_sub + dn_max C/C0``.
Modes come from the scalar Helmholtz equation on the same grid.

Coordinates: ``x`` lateral (um), centred on the opening; ``y`` depth (um),
zero at the glass surface and increasing into the substrate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import ConfigurationError, NumericalError, ParameterError

N_SUBSTRATE = 1.50
"""Assumed substrate index at 1550 nm (the glass is not specified)."""

DELTA_N_MAX = 0.052
MASK_OPENING_UM = 2.0

DIFFUSION_COEFFICIENT = 0.01
"""um^2/min; only the product with the exchange time matters here."""

CALIBRATED_EXCHANGE_TIME = 550.0
"""min; single mode at 1550 nm for the 2 um opening, see demos/calibrate_ion_exchange.py."""

MIN_CELLS_ACROSS_OPENING = 8


@dataclass(frozen=True)
class DiffusionConfig:
    """Exchange parameters and the computational grid.

    Lengths in um, time in min, ``diffusion_coefficient`` in um^2/min.
    ``n_steps`` implicit steps are split into blocks whose step size
    doubles from block to block, resolving the initial surface layer.
    """
    mask_opening: float = MASK_OPENING_UM
    diffusion_coefficient: float = DIFFUSION_COEFFICIENT
    exchange_time: float = CALIBRATED_EXCHANGE_TIME
    grid_dx: float = 0.1
    grid_dy: float = 0.1
    domain_width: float = 20.0
    domain_depth: float = 12.0
    delta_n_max: float = DELTA_N_MAX
    n_substrate: float = N_SUBSTRATE
    n_steps: int = 160

    def __post_init__(self):
        for name in ("mask_opening", "diffusion_coefficient", "grid_dx", "grid_dy",
                     "domain_width", "domain_depth", "delta_n_max", "n_substrate"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        if self.exchange_time < 0:
            raise ParameterError("exchange_time must be >= 0")
        if self.n_steps < 1:
            raise ParameterError("n_steps must be >= 1")
        cells = self.mask_opening / self.grid_dx
        if cells < MIN_CELLS_ACROSS_OPENING:
            raise ConfigurationError(
                f"grid_dx = {self.grid_dx} um resolves the {self.mask_opening} um opening with "
                f"{cells:.3g} cells; need >= {MIN_CELLS_ACROSS_OPENING}")

    @property
    def diffusion_length(self):
        return float(np.sqrt(self.diffusion_coefficient * self.exchange_time))

    def grid(self):
        """Node coordinates ``x`` (symmetric, odd count) and ``y`` (from 0)."""
        half = int(round(0.5 * self.domain_width / self.grid_dx))
        ny = int(round(self.domain_depth / self.grid_dy)) + 1
        x = np.arange(-half, half + 1) * self.grid_dx
        y = np.arange(ny) * self.grid_dy
        return x, y


@dataclass
class IndexMap:
    """Refractive index ``n[j, i]`` at depth ``y[j]`` and lateral position ``x[i]``."""
    n: np.ndarray
    x: np.ndarray
    y: np.ndarray
    n_substrate: float
    config: DiffusionConfig | None = None
    concentration: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.n.shape != (self.y.size, self.x.size):
            raise ParameterError(f"index grid shape {self.n.shape} != (len(y), len(x))")
        for c in (self.x, self.y):
            if c.size < 3 or not np.allclose(np.diff(c), c[1] - c[0], rtol=1e-9, atol=0):
                raise ParameterError("index grid must be uniform with >= 3 nodes per axis")

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def dy(self):
        return float(self.y[1] - self.y[0])


@dataclass
class WaveguideMode2D:
    """Scalar mode: ``field`` on the map grid with unit L2 norm (``sum f^2 dx dy``)."""
    n_eff: float
    field: np.ndarray
    wavelength: float
    x: np.ndarray
    y: np.ndarray

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def dy(self):
        return float(self.y[1] - self.y[0])


# ----------------------------------------------------------------------
# Diffusion
# ----------------------------------------------------------------------

def _laplacian_1d(n, h, neumann_lo, neumann_hi):
    """Second-difference matrix with mirror (zero-flux) ends where requested."""
    main = np.full(n, -2.0)
    lo = np.ones(n - 1)
    hi = np.ones(n - 1)
    if neumann_lo:
        hi[0] = 2.0
    if neumann_hi:
        lo[-1] = 2.0
    return sparse.diags([lo, main, hi], [-1, 0, 1], format="csr") / h ** 2


TIME_LEVELS = 8


def _time_steps(total, n_steps, levels=TIME_LEVELS):
    """Step sizes doubling over ``levels`` blocks so the early surface layer is resolved."""
    levels = min(levels, n_steps)
    per = np.full(levels, n_steps // levels)
    per[: n_steps % levels] += 1
    h = total / np.sum(per * 2.0 ** np.arange(levels))
    return [(h * 2.0 ** lvl, int(m)) for lvl, m in enumerate(per)]


def _diffuse_half(config, xh, y, include_edge):
    nx_half, ny = xh.size, y.size
    Lx = _laplacian_1d(nx_half, config.grid_dx, True, True)
    Ly = _laplacian_1d(ny, config.grid_dy, True, True)
    lap = (sparse.kron(sparse.identity(ny), Lx) + sparse.kron(Ly, sparse.identity(nx_half))).tocsr()
    hw = 0.5 * config.mask_opening
    tol = 1e-9 * config.grid_dx
    source = np.zeros((ny, nx_half), dtype=bool)
    source[0] = np.abs(xh) <= hw + tol if include_edge else np.abs(xh) < hw - tol
    fixed = source.ravel()
    free = ~fixed
    A_ff = lap[free][:, free]
    b = np.asarray(lap[free][:, fixed].sum(axis=1)).ravel()  # C = 1 on the source nodes
    I = sparse.identity(int(free.sum()), format="csc")
    c = np.zeros(int(free.sum()))
    D = config.diffusion_coefficient
    for dt, m in _time_steps(config.exchange_time, config.n_steps):
        lu = spla.splu((I - dt * D * A_ff).tocsc())
        for _ in range(m):
            c = lu.solve(c + dt * D * b)
    full = np.ones(ny * nx_half)
    full[free] = c
    return full.reshape(ny, nx_half)


def diffuse(config: DiffusionConfig) -> IndexMap:
    """Concentration after ``exchange_time`` and the resulting index map.

    Backward Euler in time (unconditionally stable; the system matrix is an
    M-matrix so ``0 <= C <= C0`` holds at every step) with step sizes
    doubling in blocks. Only ``x >= 0`` is solved, with a mirror condition
    at ``x = 0``; the map is then reflected so it is exactly symmetric.

    When the opening edge falls on a grid node, the solutions with that node
    inside and outside the source are averaged; either alone shifts the
    effective opening by half a cell and converges only to first order.
    """
    x, y = config.grid()
    xh = x[x.size // 2:]
    C = np.zeros((y.size, xh.size))
    if config.exchange_time > 0:
        C = _diffuse_half(config, xh, y, True)
        hw = 0.5 * config.mask_opening
        if np.any(np.abs(np.abs(xh) - hw) <= 1e-9 * config.grid_dx):
            C = 0.5 * (C + _diffuse_half(config, xh, y, False))
        C = np.clip(C, 0.0, 1.0)  # rounding only
    conc = np.concatenate([C[:, :0:-1], C], axis=1)
    n = config.n_substrate + config.delta_n_max * conc
    return IndexMap(n, x, y, config.n_substrate, config, conc)


def exchanged_content(index_map: IndexMap) -> float:
    """Integrated concentration (um^2 times C0) over the cross-section."""
    if index_map.concentration is None:
        raise ParameterError("map carries no concentration")
    return float(index_map.concentration.sum() * index_map.dx * index_map.dy)


# ----------------------------------------------------------------------
# Modes
# ----------------------------------------------------------------------

LATERAL_BC = ("dirichlet", "neumann")


def solve_modes_2d(index_map: IndexMap, wavelength: float, max_modes: int = 10,
                   lateral_bc: str = "dirichlet", tol: float = 0.0) -> list[WaveguideMode2D]:
    """Guided scalar modes of ``index_map``.

    Solves ``(d2/dx2 + d2/dy2 + k^2 n^2) E = beta^2 E`` with the 5-point
    stencil on the interior nodes. The field vanishes at the glass surface
    (air is far below the substrate index), at the bottom of the domain and,
    with ``lateral_bc="dirichlet"``, at the sides; ``"neumann"`` makes the
    sides zero-flux instead.

    Returns
    -------
    list of WaveguideMode2D
        At most ``max_modes`` modes with ``n_eff > n_substrate``, sorted by
        decreasing ``n_eff``. The sign of each field is fixed so its largest
        sample is positive.
    """
    if not wavelength > 0:
        raise ParameterError("wavelength must be > 0")
    if max_modes < 1:
        raise ParameterError("max_modes must be >= 1")
    if lateral_bc not in LATERAL_BC:
        raise ParameterError(f"lateral_bc must be one of {LATERAL_BC}")
    k = 2 * np.pi / wavelength
    dx, dy = index_map.dx, index_map.dy
    n_inner = index_map.n[1:-1]
    if lateral_bc == "dirichlet":
        n_inner = n_inner[:, 1:-1]
        Lx = _laplacian_1d(index_map.x.size - 2, dx, False, False)
    else:
        Lx = _laplacian_1d(index_map.x.size, dx, True, True)
    ny, nx = n_inner.shape
    Ly = _laplacian_1d(ny, dy, False, False)
    A = (sparse.kron(sparse.identity(ny), Lx) + sparse.kron(Ly, sparse.identity(nx))
         + sparse.diags((k * n_inner).ravel() ** 2))
    if lateral_bc == "neumann":
        # symmetrize the mirror rows (weight 1/2 on boundary nodes)
        w = np.ones(nx)
        w[[0, -1]] = 0.5
        s = np.sqrt(np.tile(w, ny))
        A = sparse.diags(s) @ A @ sparse.diags(1 / s)
    A = A.tocsc()
    A = 0.5 * (A + A.T)
    n_sub2 = (k * index_map.n_substrate) ** 2
    sigma = (k * index_map.n.max()) ** 2
    v0 = np.ones(A.shape[0])
    nev = min(max_modes + 1, A.shape[0] - 2)
    while True:
        try:
            vals, vecs = spla.eigsh(A, k=nev, sigma=sigma, which="LM", v0=v0, tol=tol)
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(
                f"eigensolver did not converge: {len(exc.eigenvalues)} of {nev} eigenpairs "
                f"found, matrix size {A.shape[0]}") from exc
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        guided = vals > n_sub2
        if guided.sum() < nev or guided.sum() >= max_modes or nev >= A.shape[0] - 2:
            break
        nev = min(2 * nev, A.shape[0] - 2)
    modes = []
    for val, vec in zip(vals[guided][:max_modes], vecs[:, guided][:, :max_modes].T):
        f = vec.reshape(ny, nx)
        if lateral_bc == "neumann":
            f = f / s.reshape(ny, nx)
        full = np.zeros_like(index_map.n)
        if lateral_bc == "dirichlet":
            full[1:-1, 1:-1] = f
        else:
            full[1:-1] = f
        full /= np.sqrt(np.sum(full ** 2) * dx * dy)
        if full.ravel()[np.argmax(np.abs(full))] < 0:
            full = -full
        modes.append(WaveguideMode2D(float(np.sqrt(val) / k), full, float(wavelength),
                                     index_map.x, index_map.y))
    return modes


def count_modes(index_map, wavelength, max_modes=10, **kw):
    return len(solve_modes_2d(index_map, wavelength, max_modes, **kw))


def surface_access(mode: WaveguideMode2D, depth: float) -> float:
    """Fraction of ``|field|^2`` at depths ``y < depth``.

    Each node stands for the cell ``[y - dy/2, y + dy/2]`` (the surface
    node for its lower half only) and contributes in proportion to the part
    of that cell above ``depth``.
    """
    if depth < 0:
        raise ParameterError("depth must be >= 0")
    dy = mode.dy
    top = np.maximum(mode.y - 0.5 * dy, 0.0)
    bottom = mode.y + 0.5 * dy
    w = np.clip((depth - top) / (bottom - top), 0.0, 1.0)
    p = (mode.field ** 2).sum(axis=1)
    return float(min(1.0, (w * p).sum() / p.sum()))


def channel_guide_config(**overrides) -> DiffusionConfig:
    """2 um opening, dn = 0.052, calibrated exchange time."""
    return replace(DiffusionConfig(), **overrides)

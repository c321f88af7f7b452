"""Uniform Q1 finite elements on the pixel lattice.

Nodes sit at pixel centres with unit spacing, so a ``width x height`` image
is a nodal field on a ``(width-1) x (height-1)`` mesh of unit squares. Node
``p = row * nx + col`` matches the row-major flattening of the image.

Local node order on a cell with lower-left node ``p``::

    2 --- 3        p+nx --- p+nx+1
    |     |   ->    |          |
    0 --- 1         p  ---   p+1

The mass (time) term is lumped with the nodal trapezoidal rule; the
diffusion term uses 2x2 Gauss quadrature with the coefficient supplied
at the Gauss points.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BadDimensions, NonPositiveDetector, SingularMatrix, SolverDiverged, TooSmall

DENSE_LIMIT = 4096

_G = 0.5 / math.sqrt(3.0)
GAUSS_POINTS = np.array([(0.5 - _G, 0.5 - _G), (0.5 + _G, 0.5 - _G), (0.5 - _G, 0.5 + _G), (0.5 + _G, 0.5 + _G)])
GAUSS_WEIGHTS = np.full(4, 0.25)


def _basis(xi, eta):
    return np.array([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta])


def _basis_grad(xi, eta):
    dx = np.array([-(1 - eta), 1 - eta, -eta, eta])
    dy = np.array([-(1 - xi), -xi, 1 - xi, xi])
    return dx, dy


# shape (gauss point, local node)
PHI = np.array([_basis(x, y) for x, y in GAUSS_POINTS])
DPHI_X = np.array([_basis_grad(x, y)[0] for x, y in GAUSS_POINTS])
DPHI_Y = np.array([_basis_grad(x, y)[1] for x, y in GAUSS_POINTS])
# per-Gauss-point contribution w * grad(phi_p) . grad(phi_q)
GAUSS_STIFFNESS = GAUSS_WEIGHTS[:, None, None] * (
    DPHI_X[:, :, None] * DPHI_X[:, None, :] + DPHI_Y[:, :, None] * DPHI_Y[:, None, :]
)


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    spacing: float = 1.0

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def n_cells(self) -> int:
        return (self.nx - 1) * (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        """Image shape ``(height, width)``."""
        return (self.ny, self.nx)

    def cell_nodes(self) -> np.ndarray:
        return _cell_nodes(self.nx, self.ny)

    def check_field(self, field) -> np.ndarray:
        field = np.asarray(field, dtype=np.float64).reshape(-1)
        if field.size != self.n_nodes:
            raise BadDimensions(f"field has {field.size} values, grid has {self.n_nodes} nodes")
        return field


def build_grid(width: int, height: int) -> Grid:
    if width < 2 or height < 2:
        raise TooSmall(f"grid needs at least 2x2 nodes, got {width}x{height}")
    return Grid(int(width), int(height))


def grid_for(img: np.ndarray) -> Grid:
    height, width = np.shape(img)
    return build_grid(width, height)


@functools.lru_cache(maxsize=16)
def _cell_nodes(nx: int, ny: int) -> np.ndarray:
    ll = (np.arange(ny - 1)[:, None] * nx + np.arange(nx - 1)[None, :]).reshape(-1)
    nodes = np.stack([ll, ll + 1, ll + nx, ll + nx + 1], axis=1)
    nodes.setflags(write=False)
    return nodes


def lumped_mass(grid: Grid) -> np.ndarray:
    """Trapezoidal nodal weights: 1 inside, 1/2 on edges, 1/4 at corners."""
    wx = np.ones(grid.nx)
    wx[[0, -1]] = 0.5
    wy = np.ones(grid.ny)
    wy[[0, -1]] = 0.5
    return np.outer(wy, wx).reshape(-1) * grid.spacing**2


def q1_local_stiffness() -> np.ndarray:
    """Exact Q1 stiffness on the unit square (2x2 Gauss integrates it exactly)."""
    return GAUSS_STIFFNESS.sum(axis=0)


def interpolate_to_quadrature(grid: Grid, field) -> np.ndarray:
    """Bilinear interpolation of nodal values at each cell's Gauss points.

    Returns an array of shape ``(n_cells, 4)``.
    """
    field = grid.check_field(field)
    return field[grid.cell_nodes()] @ PHI.T


def gradient_at_quadrature(grid: Grid, field) -> tuple[np.ndarray, np.ndarray]:
    """x and y derivatives of the Q1 interpolant at the Gauss points."""
    field = grid.check_field(field)
    local = field[grid.cell_nodes()]
    return local @ DPHI_X.T / grid.spacing, local @ DPHI_Y.T / grid.spacing


class Assembler:
    """Precomputed CSR sparsity pattern for g-weighted Q1 stiffness on a grid.

    Assembly then reduces to one ``bincount`` over element contributions, so
    every fixed-point iteration reuses the same index arrays.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.n_nodes
        cells = grid.cell_nodes()
        rows = np.repeat(cells, 4, axis=1).reshape(-1)
        cols = np.tile(cells, (1, 4)).reshape(-1)
        keys, self._scatter = np.unique(rows.astype(np.int64) * n + cols, return_inverse=True)
        self._scatter = self._scatter.reshape(-1)
        self.nnz = keys.size
        self.indices = (keys % n).astype(np.int32)
        key_rows = keys // n
        self.indptr = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(np.bincount(key_rows, minlength=n), out=self.indptr[1:])
        self.diag = np.searchsorted(keys, np.arange(n, dtype=np.int64) * (n + 1))

        # positions of each scalar entry inside the 2x2 block matrix (component-major)
        start = self.indptr[key_rows].astype(np.int64)
        end = self.indptr[key_rows + 1].astype(np.int64)
        k = np.arange(self.nnz, dtype=np.int64)
        self._tl = start + k
        self._tr = end + k
        self._bl = 2 * self.nnz + start + k
        self._br = 2 * self.nnz + end + k
        bidx = np.empty(4 * self.nnz, dtype=np.int32)
        bidx[self._tl] = self.indices
        bidx[self._tr] = self.indices + n
        bidx[self._bl] = self.indices
        bidx[self._br] = self.indices + n
        self.block_indices = bidx
        self.block_indptr = np.concatenate([2 * self.indptr, 2 * self.nnz + 2 * self.indptr[1:]]).astype(np.int32)

    def stiffness_data(self, g_q) -> np.ndarray:
        g_q = check_quadrature_values(self.grid, g_q)
        contrib = np.einsum("cg,gpq->cpq", g_q, GAUSS_STIFFNESS).reshape(-1)
        return np.bincount(self._scatter, weights=contrib, minlength=self.nnz)

    def scalar(self, g_q, mass_coeff) -> sp.csr_matrix:
        """CSR matrix ``diag(mass_coeff) + K_g``."""
        data = self.stiffness_data(g_q)
        data[self.diag] += mass_coeff
        n = self.grid.n_nodes
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(n, n))

    def coupled(self, g_q, A, mass_coeff1, mass_coeff2) -> sp.csr_matrix:
        """CSR matrix ``[[diag(c1) + a11 K, a12 K], [a21 K, diag(c2) + a22 K]]``."""
        A = np.asarray(A, dtype=np.float64)
        if A.shape != (2, 2) or not np.all(np.isfinite(A)):
            raise BadDimensions("diffusion matrix must be a finite 2x2 array")
        kd = self.stiffness_data(g_q)
        data = np.empty(4 * self.nnz)
        data[self._tl] = A[0, 0] * kd
        data[self._tr] = A[0, 1] * kd
        data[self._bl] = A[1, 0] * kd
        data[self._br] = A[1, 1] * kd
        data[self._tl[self.diag]] += mass_coeff1
        data[self._br[self.diag]] += mass_coeff2
        n2 = 2 * self.grid.n_nodes
        return sp.csr_matrix((data, self.block_indices.copy(), self.block_indptr.copy()), shape=(n2, n2))


@functools.lru_cache(maxsize=8)
def assembler_for(grid: Grid) -> Assembler:
    return Assembler(grid)


def check_quadrature_values(grid: Grid, g_q) -> np.ndarray:
    g_q = np.asarray(g_q, dtype=np.float64)
    if g_q.shape != (grid.n_cells, 4):
        raise BadDimensions(f"expected quadrature values of shape {(grid.n_cells, 4)}, got {g_q.shape}")
    if not np.all(g_q > 0):
        raise NonPositiveDetector("edge detector must be positive at every quadrature point")
    return g_q


def assemble_coupled(grid: Grid, g_q, A, mass, tau: float, beta=(0.0, 0.0)) -> sp.csr_matrix:
    """System matrix of one linearized semi-implicit cross-diffusion step.

    Block ``(i, j)`` is ``(1/tau + beta_i) diag(mass) delta_ij + a_ij K_g``
    with unknowns ordered all-u1 then all-u2.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if min(beta) < 0:
        raise ValueError("fidelity weights must be nonnegative")
    mass = grid.check_field(mass)
    asm = assembler_for(grid)
    return asm.coupled(g_q, A, (1.0 / tau + beta[0]) * mass, (1.0 / tau + beta[1]) * mass)


def stiffness_matrix(grid: Grid, g_q=None) -> sp.csr_matrix:
    """The g-weighted stiffness ``K_g`` alone (``g = 1`` when omitted)."""
    if g_q is None:
        g_q = np.ones((grid.n_cells, 4))
    return assembler_for(grid).scalar(g_q, 0.0)


def write_matrix_market(path, M) -> None:
    """Debug dump in Matrix Market coordinate format, 17 significant digits."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(M), precision=17)


# ---------------------------------------------------------------------------
# Linear solvers
# ---------------------------------------------------------------------------

METHODS = ("auto", "direct-dense", "direct-sparse", "bicgstab")


@dataclass(frozen=True)
class SolverConfig:
    """``auto`` runs BiCGStab and falls back to a direct solve on failure."""

    method: str = "auto"
    rel_tol: float = 1e-10
    max_iter: int | None = None  # default 10 * size

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be positive")


def _solve_dense(M, rhs):
    dense = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=np.float64)
    try:
        return scipy.linalg.solve(dense, rhs, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularMatrix(str(exc)) from None


def _solve_sparse(M, rhs):
    try:
        lu = spla.splu(sp.csc_matrix(M))
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from None
    return lu.solve(rhs)


def _solve_direct(M, rhs):
    return _solve_dense(M, rhs) if M.shape[0] <= DENSE_LIMIT else _solve_sparse(M, rhs)


def bicgstab(M, rhs, x0=None, rel_tol=1e-10, max_iter=None):
    """Jacobi-preconditioned BiCGStab for nonsymmetric systems.

    Returns ``(x, iterations)``. Raises :class:`SolverDiverged` on breakdown
    or when ``max_iter`` is hit.
    """
    n = rhs.size
    max_iter = 10 * n if max_iter is None else max_iter
    diag = M.diagonal()
    if np.any(diag == 0):
        raise SolverDiverged("zero on the diagonal, Jacobi preconditioner undefined")
    inv_diag = 1.0 / diag
    target = rel_tol * np.linalg.norm(rhs)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = rhs - M @ x
    it = 0
    # restart from the true residual when the recursive one has drifted
    while it < max_iter:
        if np.linalg.norm(r) <= target:
            return x, it
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        while it < max_iter:
            it += 1
            rho_new = r_hat @ r
            if rho_new == 0.0:
                raise SolverDiverged("BiCGStab breakdown (rho = 0)")
            beta = (rho_new / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
            y = inv_diag * p
            v = M @ y
            alpha = rho_new / (r_hat @ v)
            x += alpha * y
            s = r - alpha * v
            if np.linalg.norm(s) <= target:
                break
            z = inv_diag * s
            t = M @ z
            tt = t @ t
            if tt == 0.0:
                raise SolverDiverged("BiCGStab breakdown (t = 0)")
            omega = (t @ s) / tt
            x += omega * z
            r = s - omega * t
            if omega == 0.0:
                raise SolverDiverged("BiCGStab breakdown (omega = 0)")
            if np.linalg.norm(r) <= target:
                break
            rho = rho_new
        r = rhs - M @ x
    if np.linalg.norm(r) <= target:
        return x, it
    raise SolverDiverged(f"BiCGStab did not reach rel_tol {rel_tol:g} in {max_iter} iterations")


def solve_linear(M, rhs, cfg: SolverConfig = SolverConfig(), x0=None) -> np.ndarray:
    """Solve ``M x = rhs`` and enforce ``|Mx - rhs| <= rel_tol |rhs|``."""
    if M.shape[0] != M.shape[1]:
        raise BadDimensions(f"matrix is not square: {M.shape}")
    rhs = np.asarray(rhs, dtype=np.float64).reshape(-1)
    if rhs.size != M.shape[0]:
        raise BadDimensions(f"rhs has {rhs.size} entries, matrix has {M.shape[0]} rows")
    if not sp.issparse(M):
        M = sp.csr_matrix(np.asarray(M, dtype=np.float64))
    if cfg.method == "direct-dense":
        x = _solve_dense(M, rhs)
    elif cfg.method == "direct-sparse":
        x = _solve_sparse(M, rhs)
    else:
        try:
            x, _ = bicgstab(M, rhs, x0=x0, rel_tol=cfg.rel_tol, max_iter=cfg.max_iter)
        except SolverDiverged:
            if cfg.method == "bicgstab":
                raise
            x = _solve_direct(M, rhs)
    res = np.linalg.norm(M @ x - rhs)
    if not np.all(np.isfinite(x)) or res > cfg.rel_tol * np.linalg.norm(rhs):
        if cfg.method in ("direct-dense", "direct-sparse", "auto"):
            raise SingularMatrix(f"direct solve residual {res:.3e} violates rel_tol {cfg.rel_tol:g}")
        raise SolverDiverged(f"residual {res:.3e} violates rel_tol {cfg.rel_tol:g}")
    return x

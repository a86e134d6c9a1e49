"""Finite-difference plate energies on a rectangle with exact discrete gradients.

Nodal fields are stored as ``(ny, nx)`` arrays (x varies fastest) and
flattened in C order.  All derivatives live at cell centers and are built as
Kronecker products of 1D sparse stencils, so every energy is a midpoint rule
over cells and its gradient is the exact adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .relaxation import EffectiveForms
from .tensor import from_voigt2

REGIME_TAGS = ("lKi", "vK", "lvK")
DEFAULT_ALPHA = {"lKi": 2.5, "vK": 3.0, "lvK": 5.0}


class RegimeError(ValueError):
    code = "bad-regime"


@dataclass(frozen=True)
class Grid2D:
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 33
    ny: int = 33

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3 nodes per side, got {self.nx}x{self.ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError(f"side lengths must be positive, got {self.Lx}x{self.Ly}")

    @property
    def hx(self):
        return self.Lx / (self.nx - 1)

    @property
    def hy(self):
        return self.Ly / (self.ny - 1)

    @property
    def cell_area(self):
        return self.hx * self.hy

    @property
    def area(self):
        return self.Lx * self.Ly

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def n_nodes(self):
        return self.nx * self.ny

    @property
    def n_cells(self):
        return (self.nx - 1) * (self.ny - 1)

    def axes(self):
        return (np.linspace(-self.Lx / 2, self.Lx / 2, self.nx),
                np.linspace(-self.Ly / 2, self.Ly / 2, self.ny))

    def nodes(self):
        """Node coordinates as two ``(ny, nx)`` arrays."""
        x, y = self.axes()
        return np.meshgrid(x, y)

    def cell_centers(self):
        x, y = self.axes()
        return np.meshgrid(0.5 * (x[1:] + x[:-1]), 0.5 * (y[1:] + y[:-1]))

    def node_weights(self):
        """Trapezoid weights; they sum to the area and integrate affine functions exactly."""
        wx = np.full(self.nx, self.hx)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny, self.hy)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx)


@dataclass(frozen=True)
class DisplacementField:
    u1: np.ndarray
    u2: np.ndarray
    v: np.ndarray

    def check(self, grid: Grid2D):
        for name in ("u1", "u2", "v"):
            shape = np.shape(getattr(self, name))
            if shape != grid.shape:
                raise ValueError(f"field {name} has shape {shape}, grid expects {grid.shape}")

    def flat(self):
        return np.concatenate([np.ravel(self.u1), np.ravel(self.u2), np.ravel(self.v)])

    @classmethod
    def from_flat(cls, x, grid: Grid2D):
        n = grid.n_nodes
        return cls(*(np.reshape(x[k * n:(k + 1) * n], grid.shape).copy() for k in range(3)))

    @classmethod
    def zeros(cls, grid: Grid2D):
        return cls(*(np.zeros(grid.shape) for _ in range(3)))

    @classmethod
    def from_functions(cls, grid: Grid2D, u=None, v=None):
        """Sample ``u(x, y) -> (u1, u2)`` and ``v(x, y)`` at the nodes."""
        x, y = grid.nodes()
        u1, u2 = (np.zeros(grid.shape), np.zeros(grid.shape)) if u is None else u(x, y)
        vv = np.zeros(grid.shape) if v is None else v(x, y)
        return cls(*(np.broadcast_to(np.asarray(a, float), grid.shape).copy() for a in (u1, u2, vv)))


@dataclass(frozen=True)
class Regime:
    tag: str
    theta: float = 1.0
    alpha: float | None = None
    lki_sign: int = -1  # lKi integrand is Q-bar-star(lki_sign * Hessian)

    def __post_init__(self):
        if self.tag not in REGIME_TAGS:
            raise RegimeError(f"unknown regime {self.tag!r}; expected one of {REGIME_TAGS}")
        if self.theta is None or not self.theta > 0 or not np.isfinite(self.theta):
            raise RegimeError(f"theta must be positive and finite, got {self.theta}")
        if self.lki_sign not in (-1, 1):
            raise RegimeError(f"lki_sign must be -1 or 1, got {self.lki_sign}")
        alpha = DEFAULT_ALPHA[self.tag] if self.alpha is None else float(self.alpha)
        ok = {"lKi": 2 < alpha < 3, "vK": alpha == 3, "lvK": alpha > 3}[self.tag]
        if not ok:
            raise RegimeError(f"alpha={alpha} is inconsistent with regime {self.tag}")
        object.__setattr__(self, "alpha", alpha)


def _first_difference(n, h):
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h


def _average(n):
    return sp.diags([np.full(n - 1, 0.5), np.full(n - 1, 0.5)], [0, 1], shape=(n - 1, n))


def _second_difference(n, h):
    """Cell-center second derivative, exact on cubics (n >= 4)."""
    rows = np.zeros((n - 1, n))
    if n == 3:
        rows[:, :] = [1.0, -2.0, 1.0]
        return sp.csr_matrix(rows / h**2)
    nodal = np.zeros((n, n))  # second difference at interior node k
    for k in range(1, n - 1):
        nodal[k, k - 1:k + 2] = [1.0, -2.0, 1.0]
    for i in range(n - 1):
        if 1 <= i and i + 1 <= n - 2:
            rows[i] = 0.5 * (nodal[i] + nodal[i + 1])
        elif i == 0:
            rows[i] = 1.5 * nodal[1] - 0.5 * nodal[2]
        else:
            rows[i] = 1.5 * nodal[n - 2] - 0.5 * nodal[n - 3]
    return sp.csr_matrix(rows / h**2)


class Operators:
    """Cell-center derivative operators acting on C-ordered nodal vectors."""

    def __init__(self, grid: Grid2D):
        self.grid = grid
        dx, dy = _first_difference(grid.nx, grid.hx), _first_difference(grid.ny, grid.hy)
        ax, ay = _average(grid.nx), _average(grid.ny)
        d2x, d2y = _second_difference(grid.nx, grid.hx), _second_difference(grid.ny, grid.hy)
        kron = lambda a, b: sp.kron(a, b, format="csr")  # noqa: E731
        self.dx = kron(ay, dx)
        self.dy = kron(dy, ax)
        self.dxx = kron(ay, d2x)
        self.dyy = kron(d2y, ax)
        self.dxy = kron(dy, dx)

    @cached_property
    def strain(self):
        """u (2N) -> Voigt cell strains (3C), blocks (e11 | e22 | 2 e12)."""
        z = sp.csr_matrix(self.dx.shape)
        return sp.bmat([[self.dx, z], [z, self.dy], [self.dy, self.dx]], format="csr")

    @cached_property
    def curvature(self):
        """v (N) -> Voigt cell Hessian (3C), blocks (v11 | v22 | 2 v12)."""
        return sp.vstack([self.dxx, self.dyy, 2 * self.dxy], format="csr")


@lru_cache(maxsize=16)
def operators(grid: Grid2D) -> Operators:
    return Operators(grid)


def pairwise_sum(values):
    """Sum with a fixed balanced reduction tree, independent of threading and BLAS."""
    x = np.ascontiguousarray(np.ravel(values), dtype=float)
    if x.size == 0:
        return 0.0
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0.0)
        x = x[0::2] + x[1::2]
    return float(x[0])


def _stack_cells(a, n_cells):
    return a.reshape(3, n_cells).T


def sym_grad(fields: DisplacementField, grid: Grid2D):
    """Cell-centered symmetric gradient of u as ``(ny-1, nx-1, 2, 2)``."""
    ops = operators(grid)
    u = np.concatenate([np.ravel(fields.u1), np.ravel(fields.u2)])
    e = _stack_cells(ops.strain @ u, grid.n_cells)
    return from_voigt2(e).reshape(grid.ny - 1, grid.nx - 1, 2, 2)


def hessian(v, grid: Grid2D):
    """Cell-centered Hessian of v as ``(ny-1, nx-1, 2, 2)``."""
    ops = operators(grid)
    k = _stack_cells(ops.curvature @ np.ravel(v), grid.n_cells)
    return from_voigt2(k).reshape(grid.ny - 1, grid.nx - 1, 2, 2)


class PlateEnergy:
    """Discrete energy and gradient of one regime on one grid, on flat dof vectors.

    Dofs are ``(u1, u2, v)`` flattened; the lKi energy ignores u.
    ``penalty`` adds ``penalty * sum(area * det(Hessian)^2)`` for lKi only.
    """

    def __init__(self, regime: Regime, eff: EffectiveForms, grid: Grid2D,
                 reproducible=False, penalty=0.0):
        self.regime, self.eff, self.grid = regime, eff, grid
        self.ops = operators(grid)
        self.reproducible = reproducible
        self.penalty = float(penalty)
        self.n = grid.n_nodes
        self.n_dof = 3 * self.n
        self.root_theta = np.sqrt(regime.theta) if regime.tag == "vK" else 1.0

    def _total(self, cell_values):
        return pairwise_sum(cell_values) if self.reproducible else float(np.sum(cell_values))

    def split(self, x):
        n = self.n
        return x[:2 * n], x[2 * n:]

    def slopes(self, v):
        return self.ops.dx @ v, self.ops.dy @ v

    def strains(self, x):
        """Voigt membrane strain E and curvature argument F per cell, shape (C, 3)."""
        u, v = self.split(x)
        c = self.grid.n_cells
        hess = _stack_cells(self.ops.curvature @ v, c)
        tag = self.regime.tag
        if tag == "lKi":
            f = self.regime.lki_sign * hess
            return self.eff.relaxed_membrane(f), f
        e = _stack_cells(self.ops.strain @ u, c)
        if tag == "vK":
            gx, gy = self.slopes(v)
            e = self.root_theta * (e + np.column_stack([0.5 * gx * gx, 0.5 * gy * gy, gx * gy]))
        return e, -hess

    def density(self, x):
        e, f = self.strains(x)
        return self.eff.value(e, f)

    def energy(self, x):
        cells = 0.5 * self.grid.cell_area * self.density(x)
        if self.regime.tag == "lKi" and self.penalty:
            cells = cells + self.penalty * self.grid.cell_area * self._det(x) ** 2
        return self._total(cells)

    def _det(self, x):
        hess = _stack_cells(self.ops.curvature @ self.split(x)[1], self.grid.n_cells)
        return hess[:, 0] * hess[:, 1] - 0.25 * hess[:, 2] ** 2

    def gradient(self, x):
        e, f = self.strains(x)
        se, sf = self.eff.stress(e, f)
        a = self.grid.cell_area
        sigma, moment = a * se, a * sf
        ops = self.ops
        g = np.zeros(self.n_dof)
        tag = self.regime.tag
        if tag == "lKi":
            # envelope: the relaxed membrane strain is stationary
            g[2 * self.n:] = self.regime.lki_sign * (ops.curvature.T @ moment.T.ravel())
            if self.penalty:
                hess = _stack_cells(ops.curvature @ self.split(x)[1], self.grid.n_cells)
                det = hess[:, 0] * hess[:, 1] - 0.25 * hess[:, 2] ** 2
                ddet = np.column_stack([hess[:, 1], hess[:, 0], -0.5 * hess[:, 2]])
                w = 2 * self.penalty * a * det[:, None] * ddet
                g[2 * self.n:] += ops.curvature.T @ w.T.ravel()
            return g
        s = self.root_theta * sigma
        g[:2 * self.n] = ops.strain.T @ s.T.ravel()
        gv = -(ops.curvature.T @ moment.T.ravel())
        if tag == "vK":
            gx, gy = self.slopes(self.split(x)[1])
            gv += ops.dx.T @ (gx * s[:, 0] + gy * s[:, 2]) + ops.dy.T @ (gy * s[:, 1] + gx * s[:, 2])
        g[2 * self.n:] = gv
        return g

    def jacobian(self, x):
        """Sparse Jacobian of the stacked cell vector (E | F), blocks of C rows each."""
        ops = self.ops
        c = self.grid.n_cells
        tag = self.regime.tag
        if tag == "lKi":
            raise RegimeError("the lKi energy has no membrane dofs; use the cylindrical minimizer")
        du = sp.vstack([self.root_theta * ops.strain, sp.csr_matrix((3 * c, 2 * self.n))])
        dv_bend = -ops.curvature
        if tag == "vK":
            gx, gy = self.slopes(self.split(x)[1])
            gxd, gyd = sp.diags(gx), sp.diags(gy)
            dv_mem = self.root_theta * sp.vstack([gxd @ ops.dx, gyd @ ops.dy, gxd @ ops.dy + gyd @ ops.dx])
        else:
            dv_mem = sp.csr_matrix((3 * c, self.n))
        return sp.hstack([du, sp.vstack([dv_mem, dv_bend])], format="csr")

    def gauss_newton(self, x):
        """J^T M J with M the cell-area-weighted moment block of Q-bar."""
        eff = self.eff
        c = self.grid.n_cells
        block = self.grid.cell_area * np.block([[eff.q00, eff.q01], [eff.q01.T, eff.q11]])
        weight = sp.kron(sp.csr_matrix(block), sp.identity(c), format="csr")
        jac = self.jacobian(x)
        return (jac.T @ weight @ jac).tocsc()


def _energy_model(regime, eff, grid, fields, reproducible=False):
    fields.check(grid)
    return PlateEnergy(regime, eff, grid, reproducible=reproducible), fields.flat()


def energy(regime: Regime, eff: EffectiveForms, fields: DisplacementField, grid: Grid2D,
           reproducible=False):
    model, x = _energy_model(regime, eff, grid, fields, reproducible)
    return model.energy(x)


def energy_gradient(regime: Regime, eff: EffectiveForms, fields: DisplacementField, grid: Grid2D):
    model, x = _energy_model(regime, eff, grid, fields)
    return DisplacementField.from_flat(model.gradient(x), grid)


def lki_constraint_residual(v, grid: Grid2D):
    """Area-weighted L1 norm of det(Hessian) over cells."""
    h = hessian(v, grid)
    return float(grid.cell_area * np.sum(np.abs(np.linalg.det(h))))

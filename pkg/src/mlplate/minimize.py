"""Gauge-fixed minimization of the discrete plate energies and curvature diagnostics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .functionals import DisplacementField, Grid2D, PlateEnergy, Regime, hessian, operators
from .relaxation import EffectiveForms

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class GaugeSpec:
    u_mean: bool = True
    u_rotation: bool = True
    v_mean: bool = True
    v_slope: bool = True


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8  # relative to the initial gradient norm
    max_iter: int = 10_000
    memory: int = 10
    armijo: float = 1e-4
    backtrack: float = 0.5
    precondition: bool = True
    refresh: int = 20  # Gauss-Newton refresh period for vK
    jitter: float = 0.0  # amplitude of seeded noise added to the initial v
    seed: int = 0
    reproducible: bool = False
    gauge: GaugeSpec = field(default_factory=GaugeSpec)


@dataclass(frozen=True)
class CurvatureStats:
    det_residual: float
    dist_to_identity: float
    principal_ratio: float

    def as_dict(self):
        return {"det_residual": self.det_residual, "dist_to_identity": self.dist_to_identity,
                "principal_ratio": self.principal_ratio}


@dataclass
class MinimizeResult:
    fields: DisplacementField
    energy: float
    gradient_norm: float
    iterations: int
    converged: bool
    curvature: CurvatureStats
    regime: Regime | None = None
    extra: dict = field(default_factory=dict)


def curvature_stats(v, grid: Grid2D) -> CurvatureStats:
    h = hessian(v, grid).reshape(-1, 2, 2)
    a, b, c = h[:, 0, 0], h[:, 0, 1], h[:, 1, 1]
    mean, radius = 0.5 * (a + c), np.hypot(0.5 * (a - c), b)
    k1, k2 = mean + radius, mean - radius
    big = np.maximum(np.abs(k1), np.abs(k2))
    small = np.minimum(np.abs(k1), np.abs(k2))
    # second differences of v carry round-off of order eps |v| / h^2
    noise = 64 * np.finfo(float).eps * float(np.abs(v).max(initial=0.0)) / min(grid.hx, grid.hy) ** 2
    keep = big > max(1e-12 * float(big.max(initial=0.0)), noise, np.finfo(float).tiny)
    ratio = float(np.mean(small[keep] / big[keep])) if keep.any() else 0.0
    det = np.abs(a * c - b * b)
    dist = h - np.eye(2)
    return CurvatureStats(
        det_residual=float(np.mean(det)),  # uniform cells: area-weighted mean
        dist_to_identity=float(np.sqrt(grid.cell_area * np.sum(dist * dist))),
        principal_ratio=ratio,
    )


def mean_squared_curvature(v, grid: Grid2D):
    h = hessian(v, grid)
    return float(np.mean(np.sum(h * h, axis=(-2, -1))))


class Gauge:
    """Discrete rigid-motion / affine projection on flat dof vectors.

    For vK the affine part ``a.x + b`` removed from v is compensated in u by
    ``(v - b - a.x / 2) a``, which leaves the discrete energy exactly unchanged.
    """

    def __init__(self, grid: Grid2D, spec: GaugeSpec = GaugeSpec(), compensate=False):
        self.grid, self.spec, self.compensate = grid, spec, compensate
        self.n = grid.n_nodes
        w = grid.node_weights().ravel()
        self.w = w / w.sum()
        x, y = grid.nodes()
        self.x, self.y = x.ravel(), y.ravel()
        self.ops = operators(grid)

    def __call__(self, state):
        n, ops, spec = self.n, self.ops, self.spec
        u1, u2, v = (state[k * n:(k + 1) * n].copy() for k in range(3))
        if spec.v_slope:
            a = np.array([np.mean(ops.dx @ v), np.mean(ops.dy @ v)])
            if self.compensate:
                b = float(self.w @ v)
                shift = v - b - 0.5 * (a[0] * self.x + a[1] * self.y)
                u1 += a[0] * shift
                u2 += a[1] * shift
            v -= a[0] * self.x + a[1] * self.y
        if spec.v_mean:
            v -= self.w @ v
        if spec.u_rotation:
            spin = 0.5 * np.mean(ops.dy @ u1 - ops.dx @ u2)
            u1 -= spin * self.y
            u2 += spin * self.x
        if spec.u_mean:
            u1 -= self.w @ u1
            u2 -= self.w @ u2
        return np.concatenate([u1, u2, v])


def gauge_project(fields: DisplacementField, grid: Grid2D, spec: GaugeSpec = GaugeSpec(),
                  regime: Regime | None = None) -> DisplacementField:
    fields.check(grid)
    gauge = Gauge(grid, spec, compensate=regime is not None and regime.tag == "vK")
    return DisplacementField.from_flat(gauge(fields.flat()), grid)


class _Preconditioner:
    """Sparse LU of the Gauss-Newton matrix with a tiny diagonal shift.

    The shift only lifts the energy-neutral null modes (rigid motions, affine
    v, checkerboard modes of the cell strain); the energy gradient has no
    component along them.
    """

    def __init__(self, model: PlateEnergy, x):
        gn = model.gauss_newton(x)
        shift = 1e-10 * float(gn.diagonal().max())
        self.lu = spla.splu((gn + shift * sp.identity(gn.shape[0], format="csc")).tocsc())

    def __call__(self, g):
        return self.lu.solve(g)


def _lbfgs_direction(g, pairs, apply_h0):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * (s @ q)
        q -= alpha * y
        alphas.append(alpha)
    if apply_h0 is not None:
        r = apply_h0(q)
    elif pairs:
        s, y, _ = pairs[-1]
        r = (s @ y) / (y @ y) * q
    else:
        r = q / max(np.linalg.norm(q), 1.0)
    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * (y @ r)
        r += (alpha - beta) * s
    return -r


def _initial_state(grid, init, opts, gauge):
    x = init.flat().astype(float)
    if opts.jitter:
        rng = np.random.default_rng(opts.seed)
        x[2 * grid.n_nodes:] += opts.jitter * rng.standard_normal(grid.n_nodes)
    return gauge(x)


def _result(model, x, g, iterations, converged, grid, regime, extra=None):
    fields = DisplacementField.from_flat(x, grid)
    return MinimizeResult(
        fields=fields, energy=model.energy(x), gradient_norm=float(np.linalg.norm(g)),
        iterations=iterations, converged=converged, curvature=curvature_stats(fields.v, grid),
        regime=regime, extra=extra or {},
    )


def solve_lvk_direct(eff: EffectiveForms, grid: Grid2D, opts: SolverOptions = SolverOptions()):
    """Exact minimizer of the quadratic lvK energy via the normal equations."""
    regime = Regime("lvK")
    model = PlateEnergy(regime, eff, grid, reproducible=opts.reproducible)
    gauge = Gauge(grid, opts.gauge)
    x = np.zeros(model.n_dof)
    solve = _Preconditioner(model, x)
    g0 = model.gradient(x)
    for _ in range(4):  # iterative refinement absorbs the null-mode shift
        x = gauge(x - solve(model.gradient(x)))
    g = model.gradient(x)
    converged = np.linalg.norm(g) <= max(opts.tol * np.linalg.norm(g0), 1e-14)
    return _result(model, x, g, 0, bool(converged), grid, regime, {"method": "normal-equations"})


def minimize_energy(regime: Regime, eff: EffectiveForms, grid: Grid2D,
                    init: DisplacementField | None = None, opts: SolverOptions = SolverOptions()):
    """Preconditioned L-BFGS with Armijo backtracking, projecting onto the gauge after every step."""
    if regime.tag == "lKi":
        raise SolverError("unsupported-regime", "lKi is minimized by cylinder_minimize_lki")
    init = DisplacementField.zeros(grid) if init is None else init
    init.check(grid)
    model = PlateEnergy(regime, eff, grid, reproducible=opts.reproducible)
    gauge = Gauge(grid, opts.gauge, compensate=regime.tag == "vK")
    x = _initial_state(grid, init, opts, gauge)
    f, g = model.energy(x), model.gradient(x)
    if not np.isfinite(f):
        raise SolverError("diverged", "non-finite energy at the initial state")
    target = opts.tol * np.linalg.norm(g)
    pairs: list = []
    precond = None
    since_refresh = 0
    it = 0
    converged = np.linalg.norm(g) <= max(target, 1e-300)
    while not converged and it < opts.max_iter:
        if opts.precondition and (precond is None or (regime.tag == "vK" and since_refresh >= opts.refresh)):
            precond = _Preconditioner(model, x)
            pairs.clear()
            since_refresh = 0
        d = _lbfgs_direction(g, pairs, precond)
        slope = g @ d
        if not slope < 0:
            pairs.clear()
            d = -precond(g) if precond is not None else -g
            slope = g @ d
        step = 1.0
        for _ in range(60):
            x_new = gauge(x + step * d)
            f_new = model.energy(x_new)
            if np.isfinite(f_new) and f_new <= f + opts.armijo * step * slope:
                break
            step *= opts.backtrack
        else:
            if not np.isfinite(f_new):
                raise SolverError("diverged", f"non-finite energy after {it} iterations")
            log.info("line search stalled at iteration %d", it)
            break
        g_new = model.gradient(x_new)
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
            if len(pairs) > opts.memory:
                pairs.pop(0)
        x, f, g = x_new, f_new, g_new
        it += 1
        since_refresh += 1
        converged = np.linalg.norm(g) <= target
    return _result(model, x, g, it, bool(converged), grid, regime)


def theta_sweep(eff: EffectiveForms, grid: Grid2D, thetas, opts: SolverOptions = SolverOptions(),
                init: DisplacementField | None = None):
    """vK minimizers along increasing theta, each warm-started from the previous one."""
    thetas = [float(t) for t in thetas]
    if any(not t > 0 for t in thetas) or thetas != sorted(thetas):
        raise ValueError(f"thetas must be positive and sorted ascending, got {thetas}")
    results = []
    current = init
    for k, theta in enumerate(thetas):
        res = minimize_energy(Regime("vK", theta), eff, grid, current, replace(opts, seed=opts.seed + k))
        log.info("theta=%g energy=%.6e iterations=%d", theta, res.energy, res.iterations)
        results.append(res)
        current = res.fields
    return results


def _chord_lengths(grid: Grid2D, direction, s):
    """Length of {x in the rectangle : x . direction = s}."""
    n1, n2 = abs(direction[0]), abs(direction[1])
    hx, hy = grid.Lx / 2, grid.Ly / 2
    s = np.abs(np.asarray(s, dtype=float))
    if n1 < 1e-15 or n2 < 1e-15:
        half, length = (hy, grid.Lx) if n1 < 1e-15 else (hx, grid.Ly)
        return np.where(s <= half, length, 0.0)
    # the chord is the segment of the line inside both slabs |x| <= hx, |y| <= hy
    lo = np.maximum((s - n1 * hx) / n2, -hy)
    hi = np.minimum((s + n1 * hx) / n2, hy)
    return np.maximum(hi - lo, 0.0) / n1


def _strip_areas(grid, direction, edges):
    """Exact area of the rectangle between consecutive level lines of x . direction."""
    n1, n2 = abs(direction[0]), abs(direction[1])
    kinks = [n1 * grid.Lx / 2 + sgn * n2 * grid.Ly / 2 for sgn in (-1, 1)]
    kinks = np.concatenate([kinks, np.negative(kinks)])
    out = np.empty(len(edges) - 1)
    for k, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        pts = np.unique(np.concatenate([[a, b], kinks[(kinks > a) & (kinks < b)]]))
        w = _chord_lengths(grid, direction, pts)
        out[k] = np.sum(0.5 * (w[1:] + w[:-1]) * np.diff(pts))  # chord is piecewise linear
    return out


def relaxed_bending_floor(eff: EffectiveForms):
    """min over all symmetric F of Q-bar-star(F)."""
    return float(eff.bend_const - eff.bend_lin @ np.linalg.solve(eff.bend, eff.bend_lin))


def cylinder_minimize_lki(eff: EffectiveForms, grid: Grid2D, profile_nodes=129, angles=None,
                          sign=-1):
    """Minimize the lKi energy over cylinders v = f(x . n).

    For each direction the profile's second differences enter the integrand
    independently, so every node's curvature is the exact 1D minimizer.
    """
    if angles is None:
        angles = np.linspace(0.0, np.pi, 13)[:-1]
    best = None
    for angle in angles:
        n = np.array([np.cos(angle), np.sin(angle)])
        reach = abs(n[0]) * grid.Lx / 2 + abs(n[1]) * grid.Ly / 2
        s = np.linspace(-reach, reach, profile_nodes)
        edges = np.concatenate([[s[0]], 0.5 * (s[2:-1] + s[1:-2]), [s[-1]]])
        weights = _strip_areas(grid, n, edges)  # one strip per interior node
        axis = np.array([n[0] ** 2, n[1] ** 2, 2 * n[0] * n[1]])
        stiff = axis @ eff.bend @ axis
        kappa = -sign * (eff.bend_lin @ axis) / stiff  # F = sign * kappa * n (x) n
        density = eff.bend_const - (eff.bend_lin @ axis) ** 2 / stiff
        curv = np.full(profile_nodes - 2, kappa)
        total = 0.5 * float(weights @ np.full_like(curv, density))
        if best is None or total < best[0] - 1e-14 * abs(total):
            best = (total, n, s, curv)
    total, n, s, curv = best
    # integrate the second differences back to a profile with f(s0) = f(s1) = 0
    ds = s[1] - s[0]
    profile = np.zeros_like(s)
    for k in range(1, len(s) - 1):
        profile[k + 1] = 2 * profile[k] - profile[k - 1] + ds * ds * curv[k - 1]
    x, y = grid.nodes()
    v = CubicSpline(s, profile)(x * n[0] + y * n[1])
    fields = DisplacementField(np.zeros(grid.shape), np.zeros(grid.shape), v)
    fields = gauge_project(fields, grid)
    return MinimizeResult(
        fields=fields, energy=total, gradient_norm=0.0, iterations=0, converged=True,
        curvature=curvature_stats(fields.v, grid), regime=Regime("lKi", lki_sign=sign),
        extra={"direction": n.tolist(), "curvature": float(curv[0]),
               "profile_s": s, "profile_f": profile},
    )

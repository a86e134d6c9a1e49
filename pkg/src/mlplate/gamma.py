"""Recovery deformations of the thin 3D body and their scaled elastic energies.

The 3D density is ``W0(t, F) = 1/2 Q3(t, (F^T F - I) / 2)``.  Deformations are
closed-form in the in-plane variable (polynomial targets) and piecewise
polynomial in the thickness variable, and expose their scaled gradient
``(d1 y, d2 y, d3 y / h)`` through ``D = grad_h y - I`` so that tiny strains
are formed without cancellation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as P

from .functionals import DisplacementField, Grid2D, Regime, energy
from .laminate import Laminate
from .relaxation import effective_forms, plane_stress
from .tensor import ElasticForm, form_eval, from_voigt2, sym, to_voigt2

E3 = np.array([0.0, 0.0, 1.0])


class GammaError(ValueError):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


def w0_svk(q: ElasticForm, f):
    """Saint Venant-Kirchhoff type density 1/2 Q3((F^T F - I) / 2)."""
    f = np.asarray(f, dtype=float)
    return 0.5 * form_eval(q, 0.5 * (np.swapaxes(f, -1, -2) @ f - np.eye(3)))


def green_strain_from_displacement_gradient(k):
    """(F^T F - I) / 2 for F = I + K, formed without cancellation."""
    kt = np.swapaxes(k, -1, -2)
    return 0.5 * (k + kt + kt @ k)


@dataclass(frozen=True)
class Poly2:
    """Bivariate polynomial sum coef[i, j] x^i y^j."""

    coef: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coef", np.atleast_2d(np.asarray(self.coef, dtype=float)))

    def __call__(self, x, y):
        return P.polyval2d(x, y, self.coef)

    def d(self, axis, order=1):
        c = self.coef
        if c.shape[axis] <= order:
            return Poly2(np.zeros((1, 1)))
        return Poly2(P.polyder(c, m=order, axis=axis))

    @property
    def degree(self):
        nz = np.argwhere(self.coef != 0)
        return int(nz.sum(axis=1).max()) if len(nz) else 0

    @classmethod
    def zero(cls):
        return cls(np.zeros((1, 1)))

    @classmethod
    def from_profile(cls, profile, direction):
        """f(n . x) expanded into monomials for a 1D polynomial f."""
        n1, n2 = direction
        deg = len(profile) - 1
        coef = np.zeros((deg + 1, deg + 1))
        for k, a in enumerate(profile):
            for i in range(k + 1):
                coef[i, k - i] += a * math.comb(k, i) * n1**i * n2 ** (k - i)
        return cls(coef)


class _Derivatives:
    """Cached partial derivatives of a Poly2 up to third order."""

    def __init__(self, poly: Poly2):
        self.poly = poly
        self._cache = {(0, 0): poly}

    def get(self, i, j):
        if (i, j) not in self._cache:
            self._cache[(i, j)] = self.poly.d(0, i).d(1, j) if i or j else self.poly
        return self._cache[(i, j)]

    def __call__(self, i, j, x, y):
        return self.get(i, j)(x, y)


@dataclass(frozen=True)
class TargetFields:
    """Midplane targets (u1, u2, v); cylinders also carry their 1D profile."""

    u1: Poly2 = field(default_factory=Poly2.zero)
    u2: Poly2 = field(default_factory=Poly2.zero)
    v: Poly2 = field(default_factory=Poly2.zero)
    profile: tuple | None = None  # coefficients of f in v = f(n . x)
    direction: tuple | None = None

    def __post_init__(self):
        for name in ("u1", "u2", "v"):
            if getattr(self, name).degree > 4:
                raise GammaError("recovery-unsupported", f"target {name} has degree > 4")

    @cached_property
    def derivs(self):
        return tuple(_Derivatives(p) for p in (self.u1, self.u2, self.v))

    def sample(self, grid: Grid2D) -> DisplacementField:
        x, y = grid.nodes()
        return DisplacementField(*(np.broadcast_to(p(x, y), grid.shape).copy() for p in (self.u1, self.u2, self.v)))

    def local(self, x, y):
        """Pointwise derivative data of u and v at (x, y)."""
        du1, du2, dv = self.derivs
        grad_u = np.stack([
            np.stack([du1(1, 0, x, y), du1(0, 1, x, y)], -1),
            np.stack([du2(1, 0, x, y), du2(0, 1, x, y)], -1),
        ], -2)
        # d_j grad u: [..., j, a, b] = d_j d_b u_a
        hess_u = np.stack([
            np.stack([np.stack([du1(2, 0, x, y), du1(1, 1, x, y)], -1),
                      np.stack([du2(2, 0, x, y), du2(1, 1, x, y)], -1)], -2),
            np.stack([np.stack([du1(1, 1, x, y), du1(0, 2, x, y)], -1),
                      np.stack([du2(1, 1, x, y), du2(0, 2, x, y)], -1)], -2),
        ], -3)
        grad_v = np.stack([dv(1, 0, x, y), dv(0, 1, x, y)], -1)
        hess_v = np.stack([
            np.stack([dv(2, 0, x, y), dv(1, 1, x, y)], -1),
            np.stack([dv(1, 1, x, y), dv(0, 2, x, y)], -1),
        ], -2)
        # d_j hess v: [..., j, a, b]
        third_v = np.stack([
            np.stack([np.stack([dv(3, 0, x, y), dv(2, 1, x, y)], -1),
                      np.stack([dv(2, 1, x, y), dv(1, 2, x, y)], -1)], -2),
            np.stack([np.stack([dv(2, 1, x, y), dv(1, 2, x, y)], -1),
                      np.stack([dv(1, 2, x, y), dv(0, 3, x, y)], -1)], -2),
        ], -3)
        u = np.stack([self.u1(x, y), self.u2(x, y)], -1)
        return u, grad_u, hess_u, self.v(x, y), grad_v, hess_v, third_v


def _bcast(*arrays):
    return np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in arrays])


PRESETS = ("zero", "cap", "poly2", "cylinder")


def preset_fields(name: str) -> TargetFields:
    if name == "zero":
        return TargetFields()
    if name == "cap":
        return TargetFields(v=Poly2([[0.0, 0.0, 0.5], [0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]))
    if name == "poly2":
        return TargetFields(
            u1=Poly2([[0.0, 0.1, 0.05], [0.0, -0.1, 0.0], [0.2, 0.0, 0.0]]),
            u2=Poly2([[0.0, 0.0, 0.1], [0.05, 0.15, 0.0], [-0.1, 0.0, 0.0]]),
            v=Poly2([[0.0, -0.05, -0.3], [0.1, 0.2, 0.0], [0.4, 0.0, 0.0]]),
        )
    if name == "cylinder":
        angle = 0.4
        direction = (math.cos(angle), math.sin(angle))
        profile = (0.0, 0.0, 0.6, 0.15)
        return TargetFields(v=Poly2.from_profile(profile, direction), profile=profile, direction=direction)
    raise GammaError("unknown-preset", f"unknown field preset {name!r}; expected one of {PRESETS}")


class ThicknessMoments:
    """Running thickness integrals of the relaxation map, layer by layer.

    For ``G(t) = Gu + t Gv + misfit(t)`` the integral from 0 to x3 of
    ``L(t, G(t)) - b(t)`` equals ``M0(x3) Gu + M1(x3) Gv + beta(x3)``, with b the
    transverse misfit vector whose symmetric dyad with e3 carries the
    transverse part of sym B.
    """

    def __init__(self, lam: Laminate):
        self.lo = np.asarray(lam.breakpoints[:-1])
        self.hi = np.asarray(lam.breakpoints[1:])
        self.maps = np.stack([plane_stress(layer.stiffness).column_map for layer in lam.layers])
        self.in_plane = np.stack([
            np.stack([to_voigt2(m[:2, :2]) for m in (layer.misfit_const, layer.misfit_slope)])
            for layer in lam.layers
        ])  # (K, 2, 3)
        self.transverse = np.stack([
            np.stack([transverse_misfit(m) for m in (layer.misfit_const, layer.misfit_slope)])
            for layer in lam.layers
        ])  # (K, 2, 3)
        self.layer_index = lam.layer_index

    def running(self, x3):
        """(M0, M1, beta) at each x3, shapes (..., 3, 3), (..., 3, 3), (..., 3)."""
        x3 = np.asarray(x3, dtype=float)[..., None]
        pos = x3 >= 0
        lo = np.where(pos, np.maximum(0.0, self.lo), np.maximum(x3, self.lo))
        hi = np.where(pos, np.minimum(x3, self.hi), np.minimum(0.0, self.hi))
        sign = np.where(pos, 1.0, -1.0)
        inside = hi > lo
        m0 = np.where(inside, sign * (hi - lo), 0.0)
        m1 = np.where(inside, sign * 0.5 * (hi * hi - lo * lo), 0.0)
        big0 = np.einsum("...k,kij->...ij", m0, self.maps)
        big1 = np.einsum("...k,kij->...ij", m1, self.maps)
        lb = np.einsum("kij,ksj->ksi", self.maps, self.in_plane) - self.transverse
        beta = np.einsum("...k,ki->...i", m0, lb[:, 0]) + np.einsum("...k,ki->...i", m1, lb[:, 1])
        return big0, big1, beta

    def local(self, x3):
        """(L(x3), misfit integrand at x3): the x3-derivatives of ``running``."""
        idx = self.layer_index(x3)
        x3 = np.asarray(x3, dtype=float)[..., None]
        maps = self.maps[idx]
        b = self.in_plane[idx, 0] + x3 * self.in_plane[idx, 1]
        t = self.transverse[idx, 0] + x3 * self.transverse[idx, 1]
        return maps, np.einsum("...ij,...j->...i", maps, b) - t


def transverse_misfit(b):
    """Vector c with sym(c (x) e3) equal to the transverse part of sym(B)."""
    b = np.asarray(b, dtype=float)
    return np.array([b[0, 2] + b[2, 0], b[1, 2] + b[2, 1], b[2, 2]])


class Deformation3D:
    """A deformation of the reference body omega x (-1/2, 1/2) at thickness h."""

    alpha: float
    theta: float
    h: float

    def positions(self, x1, x2, x3):
        raise NotImplementedError

    def displacement_gradient(self, x1, x2, x3):
        """grad_h y - I."""
        raise NotImplementedError

    def scaled_gradient(self, x1, x2, x3):
        return np.eye(3) + self.displacement_gradient(x1, x2, x3)

    @property
    def misfit_scale(self):
        """Factor c in the misfit correction F (I + c B)."""
        if self.alpha == 3:
            return self.h**2 * math.sqrt(self.theta)
        return self.h ** (self.alpha - 1)

    @property
    def energy_scale(self):
        s = self.h ** (-(2 * self.alpha - 2))
        return s / self.theta if self.alpha == 3 else s

    def projection_scales(self):
        """Divisors for the averaged in-plane and out-of-plane displacements."""
        a, h = self.alpha, self.h
        if a < 3:
            return h ** (2 * (a - 2)), h ** (a - 2)
        if a == 3:
            return self.theta * h * h, math.sqrt(self.theta) * h
        return h ** (a - 1), h ** (a - 2)


@dataclass
class IdentityDeformation(Deformation3D):
    """y = (x', h x3)."""

    h: float
    alpha: float = 3.0
    theta: float = 1.0

    def positions(self, x1, x2, x3):
        x1, x2, x3 = _bcast(x1, x2, x3)
        return np.stack([x1, x2, self.h * x3], -1)

    def displacement_gradient(self, x1, x2, x3):
        x1, _, _ = _bcast(x1, x2, x3)
        return np.zeros(x1.shape + (3, 3))


@dataclass
class RotatedDeformation(Deformation3D):
    base: Deformation3D
    rotation: np.ndarray

    def __post_init__(self):
        self.alpha, self.theta, self.h = self.base.alpha, self.base.theta, self.base.h

    def positions(self, x1, x2, x3):
        return self.base.positions(x1, x2, x3) @ self.rotation.T

    def displacement_gradient(self, x1, x2, x3):
        return self.rotation @ self.base.scaled_gradient(x1, x2, x3) - np.eye(3)


def _col(vec2):
    """Pad (..., 2) to (..., 3) with zero third component."""
    return np.concatenate([vec2, np.zeros(vec2.shape[:-1] + (1,))], -1)


class PlateRecovery(Deformation3D):
    """Recovery deformation for alpha >= 3.

    ``y = (x', h x3) + (a u, b v) - b h x3 (grad v, 0) + a h d`` with
    ``(a, b) = (theta h^2, sqrt(theta) h)`` for alpha = 3 and
    ``(h^(alpha-1), h^(alpha-2))`` above.  The correction d integrates the
    optimal transverse strain through the thickness so the pointwise limit
    integrand is the relaxed form.
    """

    def __init__(self, target: TargetFields, lam: Laminate, h, alpha, theta=1.0):
        if alpha < 3:
            raise GammaError("recovery-unsupported", "PlateRecovery needs alpha >= 3")
        self.target, self.h, self.alpha, self.theta = target, float(h), float(alpha), float(theta)
        self.moments = ThicknessMoments(lam)
        if alpha == 3:
            rt = math.sqrt(theta)
            self.a, self.b = theta * h * h, rt * h
            self.nonlinear, self.bend_weight, self.misfit_weight = 1.0, 1.0 / rt, 1.0 / rt
        else:
            self.a, self.b = h ** (alpha - 1), h ** (alpha - 2)
            self.nonlinear, self.bend_weight, self.misfit_weight = 0.0, 1.0, 1.0

    def _d_field(self, x1, x2, x3):
        u, gu, hu, v, gv, hv, tv = self.target.local(x1, x2)
        c = self.nonlinear
        gvv = gv[..., :, None] * gv[..., None, :]
        mem = to_voigt2(sym(gu) + 0.5 * c * gvv)
        bend = -self.bend_weight * to_voigt2(hv)
        # d_j of the membrane and bending arguments
        dgv = np.swapaxes(hv, -1, -2)  # [..., j, b] = d_j d_b v
        dmem = to_voigt2(sym(hu) + c * sym(dgv[..., :, :, None] * gv[..., None, None, :]))
        dbend = -self.bend_weight * to_voigt2(tv)
        m0, m1, beta = self.moments.running(x3)
        lmap, lmis = self.moments.local(x3)
        x3 = np.asarray(x3, float)
        half_sq = 0.5 * np.sum(gv * gv, -1)
        d = (np.einsum("...ij,...j->...i", m0, mem) + np.einsum("...ij,...j->...i", m1, bend)
             + self.misfit_weight * beta)
        d = d - c * (half_sq * x3)[..., None] * E3
        dd = (np.einsum("...ij,...kj->...ki", m0, dmem) + np.einsum("...ij,...kj->...ki", m1, dbend))
        dd = dd - c * (np.einsum("...b,...jb->...j", gv, dgv) * x3[..., None])[..., None] * E3
        d3 = (np.einsum("...ij,...j->...i", lmap, mem + x3[..., None] * bend)
              + self.misfit_weight * lmis - c * half_sq[..., None] * E3)
        return (u, gu, v, gv, hv), d, dd, d3

    def d_field(self, x1, x2, x3):
        """(d, [d_1 d, d_2 d], d_3 d)."""
        x1, x2, x3 = _bcast(x1, x2, x3)
        _, d, dd, d3 = self._d_field(x1, x2, x3)
        return d, dd, d3

    def positions(self, x1, x2, x3):
        x1, x2, x3 = _bcast(x1, x2, x3)
        (u, _, v, gv, _), d, _, _ = self._d_field(x1, x2, x3)
        base = np.stack([x1, x2, self.h * x3], -1)
        disp = self.a * _col(u) + self.b * v[..., None] * E3
        return base + disp - self.b * self.h * x3[..., None] * _col(gv) + self.a * self.h * d

    def displacement_gradient(self, x1, x2, x3):
        x1, x2, x3 = _bcast(x1, x2, x3)
        (_, gu, _, gv, hv), _, dd, d3 = self._d_field(x1, x2, x3)
        a, b, h = self.a, self.b, self.h
        out = np.zeros(x1.shape + (3, 3))
        out[..., :2, :2] = a * gu - b * h * x3[..., None, None] * hv
        out[..., 2, :2] = b * gv
        out[..., :, :2] += a * h * np.swapaxes(dd, -1, -2)
        out[..., :2, 2] = -b * gv
        out[..., :, 2] += a * d3
        return out


class CylinderRecovery(Deformation3D):
    """Recovery for alpha in (2, 3): rolled-up cylinder v = f(n . x).

    Restricted to laminates with a single stiffness and one affine misfit, for
    which the minimizing membrane strain is a constant A; the in-plane
    correction is g = A x' and the offset field vanishes.
    """

    def __init__(self, target: TargetFields, lam: Laminate, h, alpha):
        if not 2 < alpha < 3:
            raise GammaError("recovery-unsupported", "CylinderRecovery needs alpha in (2, 3)")
        if target.profile is None:
            raise GammaError("recovery-unsupported", "alpha in (2, 3) needs a cylindrical target")
        if not lam.homogeneous:
            raise GammaError("recovery-unsupported", "alpha in (2, 3) needs a homogeneous laminate")
        if np.any(target.u1.coef) or np.any(target.u2.coef):
            raise GammaError("recovery-unsupported", "alpha in (2, 3) has no in-plane target")
        self.target, self.h, self.alpha, self.theta = target, float(h), float(alpha), 1.0
        self.eps = h ** (alpha - 2)
        self.n = np.asarray(target.direction, dtype=float)
        self.p = np.array([-self.n[1], self.n[0]])
        f = np.asarray(target.profile, dtype=float)
        self.f = [f] + [P.polyder(f, m) if len(f) > m else np.zeros(1) for m in (1, 2, 3)]
        eff = effective_forms(lam)
        self.membrane = from_voigt2(eff.membrane_offset)
        self.moments = ThicknessMoments(lam)
        self._nodes, self._weights = np.polynomial.legendre.leggauss(32)

    def _profile(self, s):
        f, f1, f2, f3 = (P.polyval(s, c) for c in self.f)
        eps = self.eps
        slope = eps * f1
        if np.any(np.abs(slope) >= 1):
            raise GammaError("energy-overflow", "cylinder lift needs eps |f'| < 1; decrease h")
        speed = np.sqrt(1 - slope**2)
        # arc-length coordinate of the isometric lift: integral of speed from 0 to s
        tau = 0.5 * s[..., None] * (self._nodes + 1)
        integrand = np.sqrt(1 - (eps * P.polyval(tau, self.f[1])) ** 2)
        sigma = 0.5 * s * np.sum(self._weights * integrand, -1)
        speed_minus_one = -slope**2 / (1 + speed)
        dspeed = -eps * eps * f1 * f2 / speed
        return f, f1, f2, f3, sigma, speed, speed_minus_one, dspeed

    def _pieces(self, x1, x2, x3):
        n = self.n
        s = n[0] * x1 + n[1] * x2
        f, f1, f2, f3, sigma, speed, sm1, dspeed = self._profile(s)
        nn = np.outer(n, n)
        mem = to_voigt2(self.membrane)
        bend = -f2[..., None] * to_voigt2(nn)
        dbend = -f3[..., None, None] * n[:, None] * to_voigt2(nn)  # [..., j, :]
        m0, m1, beta = self.moments.running(x3)
        lmap, lmis = self.moments.local(x3)
        integral = np.einsum("...ij,...j->...i", m0, np.broadcast_to(mem, bend.shape)) \
            + np.einsum("...ij,...j->...i", m1, bend) + beta
        dintegral = np.einsum("...ij,...kj->...ki", m1, dbend)
        d = np.einsum("...ij,...j->...i", lmap, mem + x3[..., None] * bend) + lmis
        return s, f, f1, f2, sigma, speed, sm1, dspeed, integral, dintegral, d

    def positions(self, x1, x2, x3):
        x1, x2, x3 = _bcast(x1, x2, x3)
        n, p, eps, h = self.n, self.p, self.eps, self.h
        s, f, f1, _, sigma, speed, _, _, integral, _, _ = self._pieces(x1, x2, x3)
        r = p[0] * x1 + p[1] * x2
        nhat, phat = _col(n), _col(p)
        lift = r[..., None] * phat + sigma[..., None] * nhat + (eps * f)[..., None] * E3
        normal = speed[..., None] * E3 - (eps * f1)[..., None] * nhat
        g = np.einsum("ij,...j->...i", self.membrane, np.stack([x1, x2], -1))
        return lift + h * x3[..., None] * normal + eps * h * _col(g) + eps * h * h * integral

    def displacement_gradient(self, x1, x2, x3):
        x1, x2, x3 = _bcast(x1, x2, x3)
        n, eps, h = self.n, self.eps, self.h
        s, f, f1, f2, sigma, speed, sm1, dspeed, integral, dintegral, d = self._pieces(x1, x2, x3)
        nhat = _col(n)
        out = np.zeros(x1.shape + (3, 3))
        for j in range(2):
            lift = n[j] * (sm1[..., None] * nhat + (eps * f1)[..., None] * E3)
            dnormal = n[j] * (dspeed[..., None] * E3 - (eps * f2)[..., None] * nhat)
            out[..., :, j] = (lift + h * x3[..., None] * dnormal + eps * h * _col(self.membrane[:, j])
                              + eps * h * h * dintegral[..., j, :])
        out[..., :, 2] = sm1[..., None] * E3 - (eps * f1)[..., None] * nhat + eps * h * d
        return out

    @property
    def misfit_scale(self):
        return self.eps * self.h

    @property
    def energy_scale(self):
        return (self.eps * self.h) ** -2


def build_recovery(regime: Regime, target: TargetFields, lam: Laminate, h, theta=None) -> Deformation3D:
    alpha = regime.alpha
    theta = regime.theta if theta is None else theta
    if h <= 0:
        raise GammaError("bad-h", f"h must be positive, got {h}")
    if alpha < 3:
        return CylinderRecovery(target, lam, h, alpha)
    return PlateRecovery(target, lam, h, alpha, theta)


@dataclass(frozen=True)
class QuadSpec:
    cells: int = 64  # in-plane cells per side
    inplane_order: int = 3
    thickness_order: int = 3  # Gauss points per layer

    def doubled(self):
        return QuadSpec(2 * self.cells, 2 * self.inplane_order, 2 * self.thickness_order)


def _inplane_points(grid: Grid2D, quad: QuadSpec):
    x, w = np.polynomial.legendre.leggauss(quad.inplane_order)
    pts, wts = [], []
    for length, cells in ((grid.Lx, quad.cells), (grid.Ly, quad.cells)):
        edges = np.linspace(-length / 2, length / 2, cells + 1)
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        pts.append((mid[:, None] + half[:, None] * x).ravel())
        wts.append((half[:, None] * w).ravel())
    px, py = np.meshgrid(pts[0], pts[1])
    return px.ravel(), py.ravel(), np.outer(wts[1], wts[0]).ravel()


def scaled_energy_3d(lam: Laminate, deformation: Deformation3D, quad: QuadSpec = QuadSpec(),
                     domain: Grid2D = Grid2D(1.0, 1.0, 3, 3), block=4096):
    """Scaled 3D energy of the deformation, by tensor Gauss quadrature.

    The reference domain is ``domain`` (only its side lengths matter) times
    the unit thickness interval.
    """
    px, py, pw = _inplane_points(domain, quad)
    t, tw, owner = lam.gauss_points(quad.thickness_order)
    stiff = [lam.layers[k].stiffness for k in owner]
    misfit = np.stack([lam.layers[k].misfit(ti) for k, ti in zip(owner, t)])
    scale = deformation.misfit_scale
    total = 0.0
    for start in range(0, len(px), block):
        sl = slice(start, start + block)
        disp = deformation.displacement_gradient(px[sl, None], py[sl, None], t[None, :])
        # F (I + c B) - I = D + c (I + D) B
        k = disp + scale * (misfit + disp @ misfit)
        strain = green_strain_from_displacement_gradient(k)
        for j, q in enumerate(stiff):
            dens = 0.5 * form_eval(q, strain[:, j])
            total += tw[j] * float(pw[sl] @ dens)
    value = deformation.energy_scale * total
    if not np.isfinite(value):
        raise GammaError("energy-overflow", f"non-finite scaled energy at h={deformation.h}")
    return value


def ph_project(deformation: Deformation3D, grid: Grid2D, lam: Laminate, order=3) -> DisplacementField:
    """Thickness-averaged, rescaled displacements with R = I and c = 0."""
    x, y = grid.nodes()
    t, tw, _ = lam.gauss_points(order)
    pos = deformation.positions(x.ravel()[:, None], y.ravel()[:, None], t[None, :])
    mean = np.einsum("t,ptk->pk", tw, pos)
    su, sv = deformation.projection_scales()
    u1 = (mean[:, 0] - x.ravel()) / su
    u2 = (mean[:, 1] - y.ravel()) / su
    v = mean[:, 2] / sv
    return DisplacementField(u1.reshape(grid.shape), u2.reshape(grid.shape), v.reshape(grid.shape))


def limit_energy(lam: Laminate, regime: Regime, target: TargetFields, domain: Grid2D, nodes=257):
    grid = Grid2D(domain.Lx, domain.Ly, nodes, nodes)
    fields = target.sample(grid)
    return energy(regime, effective_forms(lam), fields, grid)


@dataclass
class ConvergenceTable:
    h: list
    energy: list
    error: list
    projection_error: list
    limit: float
    rate: float

    def rows(self):
        return list(zip(self.h, self.energy, self.error, self.projection_error))

    def as_dict(self):
        return {"limit": self.limit, "rate": self.rate,
                "rows": [{"h": h, "energy": e, "error": err, "projection_error": pe}
                         for h, e, err, pe in self.rows()]}


def projection_error(deformation, target: TargetFields, lam: Laminate, grid: Grid2D):
    proj = ph_project(deformation, grid, lam)
    ref = target.sample(grid)
    parts = ["v"] if deformation.alpha < 3 else ["u1", "u2", "v"]
    return max(float(np.max(np.abs(getattr(proj, k) - getattr(ref, k)))) for k in parts)


def convergence_study(lam: Laminate, regime: Regime, target: TargetFields, hs, quad: QuadSpec = QuadSpec(),
                      domain: Grid2D = Grid2D(1.0, 1.0, 17, 17), limit_nodes=257):
    hs = [float(h) for h in hs]
    if len(hs) < 4:
        raise GammaError("bad-h", f"convergence study needs at least 4 values of h, got {len(hs)}")
    if any(b >= a for a, b in zip(hs, hs[1:])) or hs[-1] <= 0:
        raise GammaError("bad-h", f"h values must be positive and strictly decreasing, got {hs}")
    limit = limit_energy(lam, regime, target, domain, limit_nodes)
    energies, errors, perrs = [], [], []
    for h in hs:
        rec = build_recovery(regime, target, lam, h)
        e = scaled_energy_3d(lam, rec, quad, domain)
        energies.append(e)
        errors.append(abs(e - limit))
        perrs.append(projection_error(rec, target, lam, domain))
    positive = [(h, e) for h, e in zip(hs, errors) if e > 0]
    rate = float(np.polyfit(np.log([h for h, _ in positive]), np.log([e for _, e in positive]), 1)[0]) \
        if len(positive) >= 2 else float("nan")
    return ConvergenceTable(hs, energies, errors, perrs, limit, rate)

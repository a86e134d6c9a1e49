"""Plane-stress relaxation and the thickness-homogenized plate forms.

In-plane strains are handled as 2D Voigt vectors ``(E11, E22, 2 E12)``.  For
``hat(G) + c (x) e3`` the transverse 3D Voigt components (33, 23, 13) are
exactly ``(c3, c2, c1)``, so the relaxation over ``c`` is a Schur complement
of the 6x6 stiffness onto the in-plane block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .laminate import Laminate
from .tensor import (
    ElasticForm, SingularFormError, cho_solve, cholesky, from_voigt2, min_eigenvalue2, to_voigt2,
)

IN_PLANE = [0, 1, 5]
TRANSVERSE = [2, 3, 4]
# transverse Voigt slot (33, 23, 13) -> component of c
_TRANSVERSE_TO_C = np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=float)


@dataclass(frozen=True)
class PlaneFormAt:
    value: np.ndarray
    minimizer: np.ndarray


@dataclass(frozen=True)
class PlaneStress:
    """Relaxed in-plane stiffness and the linear map G -> minimizing c."""

    stiffness: np.ndarray  # 3x3 on 2D Voigt vectors
    factor: np.ndarray  # lower Cholesky factor of ``stiffness``
    column_map: np.ndarray  # 3x3, c = column_map @ voigt2(G)


@lru_cache(maxsize=256)
def plane_stress(q: ElasticForm) -> PlaneStress:
    c = q.matrix
    cpp = c[np.ix_(IN_PLANE, IN_PLANE)]
    ctp = c[np.ix_(TRANSVERSE, IN_PLANE)]
    ctt = c[np.ix_(TRANSVERSE, TRANSVERSE)]
    low = cholesky(ctt)
    w = -cho_solve(low, ctp)
    stiffness = cpp + ctp.T @ w
    stiffness = 0.5 * (stiffness + stiffness.T)
    for a in (stiffness, w):
        a.setflags(write=False)
    return PlaneStress(stiffness, cholesky(stiffness), _TRANSVERSE_TO_C @ w)


def relax_q2(q: ElasticForm, g) -> PlaneFormAt:
    """min over c of form_eval(q, hat(g) + c (x) e3), with its minimizer."""
    ps = plane_stress(q)
    gv = to_voigt2(np.asarray(g, dtype=float))
    r = gv @ ps.factor
    return PlaneFormAt(np.einsum("...i,...i->...", r, r), gv @ ps.column_map.T)


def l_map(q: ElasticForm, g):
    return relax_q2(q, g).minimizer


def l_map_linearity_check(q: ElasticForm, g, h, a, b):
    lhs = l_map(q, a * np.asarray(g, float) + b * np.asarray(h, float))
    return float(np.linalg.norm(lhs - a * l_map(q, g) - b * l_map(q, h)))


@dataclass(frozen=True)
class EffectiveForms:
    """Thickness moments of the relaxed form plus their misfit couplings.

    ``qbar2(E, F) = e.q00.e + 2 e.q01.f + f.q11.f + 2 l0.e + 2 l1.f + c_const``
    on 2D Voigt vectors.  The same value is also available as an exact
    weighted sum of squares over per-layer Gauss points (``nodes``,
    ``weights``, ``factors``, ``misfits``), which is what evaluation uses so
    results can never go negative through cancellation.
    """

    q00: np.ndarray
    q01: np.ndarray
    q11: np.ndarray
    l0: np.ndarray
    l1: np.ndarray
    c_const: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    factors: np.ndarray = field(repr=False)
    misfits: np.ndarray = field(repr=False)
    # membrane argmin: e*(f) = membrane_gain @ f + membrane_offset
    membrane_gain: np.ndarray = field(repr=False)
    membrane_offset: np.ndarray = field(repr=False)
    # relaxed bending form: f.bend.f + 2 bend_lin.f + bend_const
    bend: np.ndarray = field(repr=False)
    bend_lin: np.ndarray = field(repr=False)
    bend_const: float = 0.0

    @property
    def membrane_coercivity(self):
        return min_eigenvalue2(self.q00)

    def residuals(self, e, f):
        """Per-Gauss-point factored strains R_g^T (e + t_g f + b_g), shape (..., G, 3)."""
        e = np.asarray(e, dtype=float)[..., None, :]
        f = np.asarray(f, dtype=float)[..., None, :]
        r = e + self.nodes[:, None] * f + self.misfits
        return np.einsum("...gi,gij->...gj", r, self.factors)

    def value(self, e, f):
        r = self.residuals(e, f)
        return np.einsum("g,...gj,...gj->...", self.weights, r, r)

    def stress(self, e, f):
        """Half-gradients of ``value`` with respect to e and f."""
        e = np.asarray(e, dtype=float)
        f = np.asarray(f, dtype=float)
        se = e @ self.q00 + f @ self.q01.T + self.l0
        sf = e @ self.q01 + f @ self.q11 + self.l1
        return se, sf

    def relaxed_membrane(self, f):
        return np.asarray(f, dtype=float) @ self.membrane_gain.T + self.membrane_offset


def effective_forms(lam: Laminate) -> EffectiveForms:
    nodes, weights, owners = lam.gauss_points(2)
    ps = [plane_stress(layer.stiffness) for layer in lam.layers]
    stiff = np.stack([ps[k].stiffness for k in owners])
    factors = np.stack([ps[k].factor for k in owners])
    misfits = np.stack([
        to_voigt2(lam.layers[k].misfit(t)[:2, :2]) for k, t in zip(owners, nodes)
    ])

    def moment(power):
        return np.einsum("g,gij->ij", weights * nodes**power, stiff)

    q00, q01, q11 = moment(0), moment(1), moment(2)
    pb = np.einsum("gij,gj->gi", stiff, misfits)
    l0 = weights @ pb
    l1 = (weights * nodes) @ pb
    c_const = float(weights @ np.einsum("gi,gi->g", misfits, pb))

    try:
        low = cholesky(q00)
    except SingularFormError as exc:
        raise SingularFormError(f"membrane moment is singular: {exc}") from None
    gain = -cho_solve(low, q01)
    offset = -cho_solve(low, l0)
    bend = q11 + q01.T @ gain
    bend_lin = l1 + q01.T @ offset
    bend_const = c_const + float(l0 @ offset)
    arrays = [q00, q01, q11, l0, l1, nodes, weights, factors, misfits, gain, offset, bend, bend_lin]
    for a in arrays:
        a.setflags(write=False)
    return EffectiveForms(
        q00=q00, q01=q01, q11=q11, l0=l0, l1=l1, c_const=c_const,
        nodes=nodes, weights=weights, factors=factors, misfits=misfits,
        membrane_gain=gain, membrane_offset=offset,
        bend=0.5 * (bend + bend.T), bend_lin=bend_lin, bend_const=bend_const,
    )


def qbar2(eff: EffectiveForms, e_mat, f_mat):
    """Effective plate energy density for membrane strain E and curvature F (2x2)."""
    return eff.value(to_voigt2(np.asarray(e_mat, float)), to_voigt2(np.asarray(f_mat, float)))


def qbar2_star(eff: EffectiveForms, f_mat):
    """Membrane-relaxed density and the minimizing membrane strain E* (2x2)."""
    f = to_voigt2(np.asarray(f_mat, float))
    e = eff.relaxed_membrane(f)
    return eff.value(e, f), from_voigt2(e)

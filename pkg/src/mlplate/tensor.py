"""Small dense tensor algebra on 2x2 and 3x3 strains.

Voigt ordering for 3x3 symmetric strains is (11, 22, 33, 23, 13, 12) with
engineering shears, i.e. the strain vector is
``(S11, S22, S33, 2 S23, 2 S13, 2 S12)``.  In-plane (2x2) strains use
``(S11, S22, 2 S12)``.  With this convention ``v @ C @ v`` is the full tensor
contraction, no sqrt(2) factors anywhere.

All functions accept stacked input: the matrix axes are always the last two.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VOIGT3 = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
VOIGT2 = ((0, 0), (1, 1), (0, 1))

# |S|^2 = v^T W v for engineering-shear Voigt vectors
_NORM_WEIGHT3 = np.array([1.0, 1.0, 1.0, 0.5, 0.5, 0.5])
_NORM_WEIGHT2 = np.array([1.0, 1.0, 0.5])


class SingularFormError(ValueError):
    """Raised when a quadratic form that must be definite is not."""

    code = "relaxation-singular"


def sym(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def skew(m):
    return 0.5 * (m - np.swapaxes(m, -1, -2))


def hat(g):
    """Embed 2x2 matrices into the upper-left block of 3x3 zeros."""
    g = np.asarray(g, dtype=float)
    out = np.zeros(g.shape[:-2] + (3, 3))
    out[..., :2, :2] = g
    return out


def check(m):
    """Delete the third row and column."""
    return np.array(np.asarray(m, dtype=float)[..., :2, :2])


def to_voigt3(m):
    """Voigt vector of sym(m) for (stacked) 3x3 matrices."""
    s = sym(np.asarray(m, dtype=float))
    return np.stack(
        [s[..., 0, 0], s[..., 1, 1], s[..., 2, 2],
         2 * s[..., 1, 2], 2 * s[..., 0, 2], 2 * s[..., 0, 1]],
        axis=-1,
    )


def from_voigt3(v):
    v = np.asarray(v, dtype=float)
    out = np.empty(v.shape[:-1] + (3, 3))
    out[..., 0, 0], out[..., 1, 1], out[..., 2, 2] = v[..., 0], v[..., 1], v[..., 2]
    out[..., 1, 2] = out[..., 2, 1] = 0.5 * v[..., 3]
    out[..., 0, 2] = out[..., 2, 0] = 0.5 * v[..., 4]
    out[..., 0, 1] = out[..., 1, 0] = 0.5 * v[..., 5]
    return out


def to_voigt2(m):
    s = sym(np.asarray(m, dtype=float))
    return np.stack([s[..., 0, 0], s[..., 1, 1], 2 * s[..., 0, 1]], axis=-1)


def from_voigt2(v):
    v = np.asarray(v, dtype=float)
    out = np.empty(v.shape[:-1] + (2, 2))
    out[..., 0, 0], out[..., 1, 1] = v[..., 0], v[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = 0.5 * v[..., 2]
    return out


def smallest_eigenvalue(matrix, weight):
    """Smallest generalized eigenvalue of ``matrix`` against a diagonal ``weight``."""
    w = 1.0 / np.sqrt(weight)
    return float(np.linalg.eigvalsh(matrix * np.outer(w, w))[0])


def cholesky(a, pivot_tol=1e-13):
    """Lower Cholesky factor of a small SPD matrix.

    A pivot below ``pivot_tol`` times the largest diagonal entry is an error;
    there is no fallback to a pseudo-inverse.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    scale = max(float(np.max(np.abs(np.diag(a)))), np.finfo(float).tiny)
    low = np.zeros_like(a)
    for j in range(n):
        piv = a[j, j] - low[j, :j] @ low[j, :j]
        if not piv > pivot_tol * scale:
            raise SingularFormError(f"non-positive pivot {piv:.3e} at index {j}")
        low[j, j] = np.sqrt(piv)
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def cho_solve(low, b):
    return np.linalg.solve(low.T, np.linalg.solve(low, b))


@dataclass(frozen=True)
class ElasticForm:
    """Quadratic form of linear elasticity stored as a 6x6 Voigt matrix.

    ``form_eval(F) = voigt(sym F) @ matrix @ voigt(sym F)``; antisymmetric
    parts never contribute.
    """

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (6, 6):
            raise ValueError(f"Voigt stiffness must be 6x6, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("Voigt stiffness has non-finite entries")
        scale = max(float(np.max(np.abs(m))), 1.0)
        if np.max(np.abs(m - m.T)) > 1e-12 * scale:
            raise ValueError("Voigt stiffness is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def min_eigenvalue(self):
        """Largest c0 with form_eval(S) >= c0 |S|^2 for all symmetric S."""
        return smallest_eigenvalue(self.matrix, _NORM_WEIGHT3)

    @property
    def coercive(self):
        return self.min_eigenvalue > 1e-12 * max(1.0, float(np.max(np.abs(self.matrix))))

    def __eq__(self, other):
        return isinstance(other, ElasticForm) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())


def form_eval(q: ElasticForm, f):
    v = to_voigt3(f)
    return np.einsum("...i,ij,...j->...", v, q.matrix, v)


def form_pair(q: ElasticForm, a, b):
    return np.einsum("...i,ij,...j->...", to_voigt3(a), q.matrix, to_voigt3(b))


def min_eigenvalue2(matrix):
    """Coercivity constant of a 3x3 in-plane Voigt form against |S|^2."""
    return smallest_eigenvalue(matrix, _NORM_WEIGHT2)

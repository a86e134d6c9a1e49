"""Through-thickness material profile on t in (-1/2, 1/2).

A laminate is an ordered stack of layers (bottom to top).  Each layer has a
constant stiffness and a misfit that is affine in the *global* thickness
coordinate, ``B(t) = misfit_const + t * misfit_slope``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import ElasticForm

class LaminateError(ValueError):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


def isotropic_form(lam, mu):
    """Isotropic stiffness with form_eval(S) = lam (tr S)^2 + 2 mu |S|^2."""
    if not mu > 0:
        raise ValueError(f"shear modulus must be positive, got mu={mu}")
    if not lam >= 0:
        raise ValueError(f"first Lame parameter must be >= 0, got lambda={lam}")
    c = np.zeros((6, 6))
    c[:3, :3] = lam
    c[np.arange(3), np.arange(3)] = lam + 2 * mu
    c[np.arange(3, 6), np.arange(3, 6)] = mu
    return ElasticForm(c)


@dataclass(frozen=True)
class Layer:
    fraction: float
    stiffness: ElasticForm
    misfit_const: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    misfit_slope: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        for name in ("misfit_const", "misfit_slope"):
            m = np.array(getattr(self, name), dtype=float)
            if m.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3, got shape {m.shape}")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    def misfit(self, t):
        t = np.asarray(t, dtype=float)
        return self.misfit_const + t[..., None, None] * self.misfit_slope


@dataclass(frozen=True)
class Laminate:
    layers: tuple
    breakpoints: np.ndarray

    @property
    def homogeneous(self):
        """Single stiffness throughout and one affine misfit."""
        first = self.layers[0]
        return all(
            layer.stiffness == first.stiffness
            and np.array_equal(layer.misfit_const, first.misfit_const)
            and np.array_equal(layer.misfit_slope, first.misfit_slope)
            for layer in self.layers
        )

    def layer_index(self, t):
        """Owning layer of each t, with half-open intervals [t_j, t_j+1)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -0.5) or np.any(t >= 0.5):
            bad = t[(t < -0.5) | (t >= 0.5)].ravel()[0]
            raise LaminateError("out-of-thickness", f"t={bad} not in (-1/2, 1/2)")
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.clip(idx, 0, len(self.layers) - 1)

    def gauss_points(self, order=2):
        """Per-layer Gauss-Legendre nodes/weights in global t, plus layer ids."""
        x, w = np.polynomial.legendre.leggauss(order)
        nodes, weights, owners = [], [], []
        for k, (a, b) in enumerate(zip(self.breakpoints[:-1], self.breakpoints[1:])):
            nodes.append(0.5 * (a + b) + 0.5 * (b - a) * x)
            weights.append(0.5 * (b - a) * w)
            owners.append(np.full(order, k))
        return np.concatenate(nodes), np.concatenate(weights), np.concatenate(owners)

    def misfit_at(self, t):
        """B(t) for an array of t (any shape), layer-wise."""
        t = np.asarray(t, dtype=float)
        idx = self.layer_index(t)
        b0 = np.stack([layer.misfit_const for layer in self.layers])[idx]
        b1 = np.stack([layer.misfit_slope for layer in self.layers])[idx]
        return b0 + t[..., None, None] * b1


def build_laminate(layers: Sequence[Layer]) -> Laminate:
    layers = tuple(layers)
    if not layers:
        raise LaminateError("bad-partition", "laminate needs at least one layer")
    fractions = np.array([layer.fraction for layer in layers], dtype=float)
    if np.any(~(fractions > 0)):
        bad = [i for i, f in enumerate(fractions) if not f > 0]
        raise LaminateError("bad-partition", f"non-positive fraction in layers {bad}")
    if abs(fractions.sum() - 1.0) > 1e-9:
        raise LaminateError(
            "bad-partition",
            f"fractions of layers {list(range(len(layers)))} sum to {fractions.sum():.12g}, not 1",
        )
    for i, layer in enumerate(layers):
        if not layer.stiffness.coercive:
            raise LaminateError("non-coercive-layer", f"layer {i} stiffness is not positive definite")
    bp = np.concatenate([[-0.5], -0.5 + np.cumsum(fractions)])
    bp[-1] = 0.5
    bp.setflags(write=False)
    return Laminate(layers=layers, breakpoints=bp)


def sample_at(lam: Laminate, t):
    """(stiffness, B(t)) of the layer owning a scalar t."""
    if not -0.5 < t < 0.5:
        raise LaminateError("out-of-thickness", f"t={t} not in (-1/2, 1/2)")
    layer = lam.layers[int(lam.layer_index(t))]
    return layer.stiffness, layer.misfit(t)


def homogeneous_laminate(stiffness, misfit_const=None, misfit_slope=None):
    """One-layer laminate; the shorthand used throughout the tests."""
    zero = np.zeros((3, 3))
    return build_laminate([
        Layer(1.0, stiffness,
              zero if misfit_const is None else misfit_const,
              zero if misfit_slope is None else misfit_slope)
    ])

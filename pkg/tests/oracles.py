"""Independent reference computations used only by the tests."""
import numpy as np

from mlplate.tensor import ElasticForm, form_eval, hat


def random_form(rng, floor=0.1):
    a = rng.normal(size=(6, 6))
    return ElasticForm(a @ a.T + floor * np.eye(6))


def random_sym2(rng, size=None, scale=1.0):
    shape = () if size is None else (size,)
    m = rng.normal(scale=scale, size=shape + (2, 2))
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def coordinate_descent_relax(q, g, tol=1e-12, max_sweeps=100000):
    """min_c form_eval(q, hat(g) + c e3^T) by exact line minimization per coordinate."""
    base = hat(g)
    c = np.zeros(3)

    def energy(cv):
        m = base.copy()
        m[:, 2] += cv
        return form_eval(q, m)

    for _ in range(max_sweeps):
        step = 0.0
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            f0, fp, fm = energy(c), energy(c + e), energy(c - e)
            curv = fp + fm - 2 * f0
            slope = 0.5 * (fp - fm)
            delta = -slope / curv
            c[i] += delta
            step = max(step, abs(delta))
        if step < tol:
            break
    return energy(c), c


def midpoint_qbar2(lam, e_mat, f_mat, n=50):
    """Q-bar by composite midpoint in t, pointwise relaxation by coordinate descent.

    Midpoint sums on n and 2n points are Richardson-combined; the combination
    is exact for the per-layer quadratic integrand.
    """
    def midpoint(m):
        total = 0.0
        for a, b in zip(lam.breakpoints[:-1], lam.breakpoints[1:]):
            for t in a + (b - a) * (np.arange(m) + 0.5) / m:
                layer = lam.layers[int(lam.layer_index(t))]
                g = e_mat + t * f_mat + layer.misfit(t)[:2, :2]
                total += coordinate_descent_relax(layer.stiffness, 0.5 * (g + g.T))[0] * (b - a) / m
        return total

    return (4 * midpoint(2 * n) - midpoint(n)) / 3


def plane_stress_iso(lam, mu, g):
    s = 0.5 * (g + np.swapaxes(g, -1, -2))
    tr = np.trace(s, axis1=-2, axis2=-1)
    return 2 * mu * np.sum(s * s, axis=(-2, -1)) + 2 * lam * mu / (lam + 2 * mu) * tr**2

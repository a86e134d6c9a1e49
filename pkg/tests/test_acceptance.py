"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (or ``python tests/test_acceptance.py``).
"""
import time

import numpy as np
import pytest

from mlplate.functionals import DisplacementField, Grid2D, Regime, energy, energy_gradient, hessian, sym_grad
from mlplate.gamma import (
    IdentityDeformation, QuadSpec, build_recovery, convergence_study, ph_project, preset_fields, scaled_energy_3d,
    w0_svk,
)
from mlplate.laminate import Layer, build_laminate, homogeneous_laminate, isotropic_form
from mlplate.minimize import SolverOptions, gauge_project, mean_squared_curvature, solve_lvk_direct, theta_sweep
from mlplate.relaxation import effective_forms, qbar2, relax_q2

from oracles import coordinate_descent_relax, plane_stress_iso, random_form, random_rotation, random_sym2


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")


@pytest.fixture(scope="module")
def tI():
    return homogeneous_laminate(isotropic_form(1.0, 1.0), None, np.eye(3))


def test_criterion_1_relaxation_oracle(capsys):
    rng = np.random.default_rng(101)
    cases = [(random_form(rng), rng.normal(size=(2, 2))) for _ in range(100)]
    t0 = time.perf_counter()
    values = [relax_q2(q, g).value for q, g in cases]
    lam, mu = rng.uniform(0.0, 5.0, 100), rng.uniform(0.1, 5.0, 100)
    gs = rng.normal(size=(100, 2, 2))
    iso = [relax_q2(isotropic_form(a, b), g).value for a, b, g in zip(lam, mu, gs)]
    elapsed = time.perf_counter() - t0
    oracle = [coordinate_descent_relax(q, g)[0] for q, g in cases]
    rel = max(abs(v - o) / abs(o) for v, o in zip(values, oracle))
    iso_rel = float(np.max(np.abs(np.array(iso) - plane_stress_iso(lam, mu, gs)) / plane_stress_iso(lam, mu, gs)))
    ok = rel < 1e-8 and iso_rel < 1e-12 and elapsed < 1.0
    report(capsys, 1, ok, f"max rel err vs coordinate descent {rel:.2e} (<1e-8), isotropic closed form "
                          f"{iso_rel:.2e} (<1e-12), library time {elapsed:.3f}s (<1s)")
    assert ok


def test_criterion_2_example_identity(capsys, tI):
    rng = np.random.default_rng(202)
    eff = effective_forms(tI)
    n = 10_000
    e, f = random_sym2(rng, n), random_sym2(rng, n)
    theta = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), n))
    t0 = time.perf_counter()
    lhs = qbar2(eff, np.sqrt(theta)[:, None, None] * e, f)
    elapsed = time.perf_counter() - t0
    rhs = theta * plane_stress_iso(1.0, 1.0, e) + plane_stress_iso(1.0, 1.0, f + np.eye(2)) / 12
    rel = float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))
    ok = rel < 1e-12 and elapsed < 1.0
    report(capsys, 2, ok, f"max rel err over {n} draws {rel:.2e} (<1e-12), time {elapsed:.3f}s (<1s)")
    assert ok


def test_criterion_3_vk_cap_convergence(capsys, tI):
    eff = effective_forms(tI)
    exact = 7 / 540
    t0 = time.perf_counter()
    errs = []
    for n in (33, 65, 129):
        grid = Grid2D(1, 1, n, n)
        cap = DisplacementField.from_functions(grid, v=lambda x, y: 0.5 * (x**2 + y**2))
        errs.append(abs(energy(Regime("vK", 1.0), eff, cap, grid) - exact))
    elapsed = time.perf_counter() - t0
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    ok = bool(np.all(orders >= 1.9)) and errs[-1] / exact < 1e-3 and elapsed < 10
    report(capsys, 3, ok, f"orders {np.round(orders, 3).tolist()} (>=1.9), rel err at 129^2 "
                          f"{errs[-1] / exact:.2e} (<1e-3), time {elapsed:.2f}s (<10s)")
    assert ok


def test_criterion_4_gradient_vs_finite_differences(capsys):
    rng = np.random.default_rng(404)
    lam = build_laminate([
        Layer(0.4, random_form(rng), 0.3 * rng.normal(size=(3, 3)), rng.normal(size=(3, 3))),
        Layer(0.6, random_form(rng), 0.3 * rng.normal(size=(3, 3)), rng.normal(size=(3, 3))),
    ])
    eff = effective_forms(lam)
    grid = Grid2D(1.0, 1.2, 11, 9)
    t0 = time.perf_counter()
    worst = {}
    for regime in (Regime("lKi"), Regime("vK", 2.0), Regime("lvK")):
        errs = []
        for _ in range(20):
            f = DisplacementField(*(0.3 * rng.normal(size=grid.shape) for _ in range(3)))
            d = rng.normal(size=3 * grid.n_nodes)
            g = energy_gradient(regime, eff, f, grid).flat() @ d
            step = 1e-5
            e = [energy(regime, eff, DisplacementField.from_flat(f.flat() + s * step * d, grid), grid) for s in (1, -1)]
            fd = (e[0] - e[1]) / (2 * step)
            errs.append(abs(g - fd) / max(abs(fd), 1e-12))
        worst[regime.tag] = max(errs)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-6 and elapsed < 30
    report(capsys, 4, ok, f"max rel err per regime {({k: f'{v:.1e}' for k, v in worst.items()})} (<1e-6), "
                          f"time {elapsed:.2f}s (<30s)")
    assert ok


def test_criterion_5_gamma_convergence(capsys, tI):
    hs = [2.0**-k for k in range(3, 8)]
    cases = [("vK", 3.0, "cap"), ("lvK", 5.0, "poly2"), ("lKi", 2.5, "cylinder")]
    t0 = time.perf_counter()
    lines, ok = [], True
    for tag, alpha, preset in cases:
        table = convergence_study(tI, Regime(tag, alpha=alpha), preset_fields(preset), hs, QuadSpec())
        decreasing = all(b < a for a, b in zip(table.error, table.error[1:]))
        final = table.error[-1] / table.limit
        ok &= decreasing and final < 0.05
        lines.append(f"{tag}(alpha={alpha}, {preset}) decreasing={decreasing} final rel err {final:.2e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    report(capsys, 5, ok, "; ".join(lines) + f"; time {elapsed:.1f}s (<300s)")
    assert ok


def test_criterion_6_identity_limit(capsys, tI):
    t0 = time.perf_counter()
    value = scaled_energy_3d(tI, IdentityDeformation(2.0**-7), QuadSpec())
    elapsed = time.perf_counter() - t0
    rel = abs(value - 0.625) / 0.625
    ok = rel < 0.01 and elapsed < 30
    report(capsys, 6, ok, f"I^h(h=2^-7) = {value:.8f}, rel err {rel:.2e} (<1e-2), time {elapsed:.2f}s (<30s)")
    assert ok


def trilayer(b=0.5):
    iso = isotropic_form(1.0, 1.0)
    return build_laminate([
        Layer(0.25, iso, b * np.eye(3), np.eye(3)),
        Layer(0.5, iso, -b * np.eye(3), np.eye(3)),
        Layer(0.25, iso, b * np.eye(3), np.eye(3)),
    ])


def test_criterion_7_theta_interpolation(capsys):
    eff = effective_forms(trilayer())
    grid = Grid2D(1, 1, 65, 65)
    thetas = [1e-4, 1e-2, 1.0, 1e2, 1e4]
    t0 = time.perf_counter()
    lvk = solve_lvk_direct(eff, grid).energy
    results = theta_sweep(eff, grid, thetas, SolverOptions(jitter=1e-3, seed=0))
    elapsed = time.perf_counter() - t0
    rel = abs(results[0].energy - lvk) / lvk
    dets = [r.curvature.det_residual for r in results]
    monotone = all(b <= 1.1 * a for a, b in zip(dets[1:], dets[2:]))
    last = results[-1]
    threshold = 0.05 * mean_squared_curvature(last.fields.v, grid)
    developable = dets[-1] < threshold
    cap = results[0].curvature.dist_to_identity
    checks = {"lvK match": rel < 1e-2, "det non-increasing": monotone, "developable at 1e4": developable,
              "cap at 1e-4": cap < 0.1, "time": elapsed < 600}
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    report(capsys, 7, ok, f"|vK(1e-4) - lvK|/lvK {rel:.2e} (<1e-2); det_residual "
                          f"{[round(d, 4) for d in dets[1:]]} (non-increasing x1.1); det at 1e4 {dets[-1]:.4f} vs "
                          f"0.05 mean|D2v|^2 = {threshold:.4f}; dist_to_identity at 1e-4 {cap:.2e} (<0.1); "
                          f"time {elapsed:.1f}s (<600s)" + (f"; failing: {failed}" if failed else ""))
    assert ok


def test_criterion_8_invariants(capsys, tI):
    rng = np.random.default_rng(808)
    t0 = time.perf_counter()
    n = 10_000
    forms = [random_form(rng) for _ in range(20)]
    worst_neg, worst_kernel = np.inf, 0.0
    for k, q in enumerate(forms):
        g = rng.normal(size=(n // len(forms), 2, 2))
        worst_neg = min(worst_neg, float(relax_q2(q, g).value.min()))
        w = g - np.swapaxes(g, -1, -2)
        worst_kernel = max(worst_kernel, float(np.abs(relax_q2(q, w).value).max()))
    lam = build_laminate([
        Layer(0.3, forms[0], rng.normal(size=(3, 3)), rng.normal(size=(3, 3))),
        Layer(0.7, forms[1], rng.normal(size=(3, 3)), rng.normal(size=(3, 3))),
    ])
    eff = effective_forms(lam)
    qb = qbar2(eff, 10 * rng.normal(size=(n, 2, 2)), 10 * rng.normal(size=(n, 2, 2)))
    worst_neg = min(worst_neg, float(qb.min()))
    positivity = worst_neg >= -1e-14 and worst_kernel <= 1e-14

    grid = Grid2D(1, 1, 17, 13)
    f = DisplacementField(*(rng.normal(size=grid.shape) for _ in range(3)))
    p = gauge_project(f, grid)
    idem = float(np.abs(gauge_project(p, grid).flat() - p.flat()).max())
    strain = float(np.abs(sym_grad(p, grid) - sym_grad(f, grid)).max())
    curv = float(np.abs(hessian(p.v, grid) - hessian(f.v, grid)).max()) * grid.hx**2
    gauge_ok = idem < 1e-12 and strain < 1e-12 and curv < 1e-12

    q = random_form(rng)
    fm = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    base = w0_svk(q, fm)
    frame = max(abs(w0_svk(q, random_rotation(rng) @ fm) - base) / base for _ in range(100))
    frame_ok = frame < 1e-12

    pgrid = Grid2D(1, 1, 9, 9)
    ph_ok, ph_lines = True, []
    for tag, alpha, preset in (("vK", 3.0, "cap"), ("lvK", 5.0, "poly2"), ("lKi", 2.5, "cylinder")):
        target = preset_fields(preset)
        ref = target.sample(pgrid)
        keys = ("v",) if alpha < 3 else ("u1", "u2", "v")
        errs = []
        for h in (2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6):
            proj = ph_project(build_recovery(Regime(tag, alpha=alpha), target, tI, h), pgrid, tI)
            errs.append(max(float(np.abs(getattr(proj, k) - getattr(ref, k)).max()) for k in keys))
        errs = np.array(errs)
        hs = 2.0 ** -np.arange(3, 7)
        bounded = float(np.max(errs / hs))  # O(h): err / h stays bounded and does not grow
        ok_case = bool(np.all(errs[1:] < errs[:-1])) and errs[-1] / hs[-1] <= errs[0] / hs[0] + 1e-12
        ph_ok &= ok_case
        ph_lines.append(f"{tag} max err/h {bounded:.2e}")
    elapsed = time.perf_counter() - t0
    ok = positivity and gauge_ok and frame_ok and ph_ok and elapsed < 60
    report(capsys, 8, ok, f"min Q2/Qbar2 {worst_neg:.1e}, antisymmetric kernel max {worst_kernel:.1e} (1e-14); "
                          f"gauge idempotence {idem:.1e}, strain change {strain:.1e}, scaled curvature change "
                          f"{curv:.1e}; w0 frame rel {frame:.1e} (<1e-12); P^h O(h): {', '.join(ph_lines)} "
                          f"ok={ph_ok}; time {elapsed:.1f}s (<60s)")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-s"]))

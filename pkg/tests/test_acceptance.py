"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. Every criterion asserts
its stated numeric tolerance and its runtime budget. Random draws are
seeded, so the suite is fully reproducible.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import trapezoid

from conftest import FAMILIES, draw_stable_cases
from timeflow import (
    Integrand,
    RefineConfig,
    SolverConfig,
    TrainConfig,
    build_flow,
    build_masks,
    derivative,
    forward,
    init_net,
    inverse,
    log_density,
    nll_and_grad,
    run_bench,
    sample,
    toy2d,
    train,
)
from timeflow.approx import Kernel, MonotoneTarget, convergence_study
from timeflow.flow import (
    AutoregressiveLayer,
    layer_forward,
    model_forward,
    model_inverse,
    randomize_parameters,
)
from timeflow.training import identity_nll

LOG_TWO_PI = math.log(2 * math.pi)


def report(n, label, detail, t0, budget):
    elapsed = time.time() - t0
    print(f"PASS criterion {n} ({label}): {detail} [{elapsed:.2f}s / budget {budget:.0f}s]")
    assert elapsed < budget, f"criterion {n} exceeded its runtime budget"


def test_criterion_01_derivative_identity():
    t0 = time.time()
    rng = np.random.default_rng(101)
    cfg = SolverConfig(steps=64)
    cases = draw_stable_cases(rng, 100, steps=64)
    h = 1e-5
    worst = 0.0
    for g, x in cases:
        analytic = derivative(g, cfg, x)
        fd = (forward(g, cfg, x + h).y - forward(g, cfg, x - h).y) / (2 * h)
        worst = max(worst, abs(analytic - fd) / abs(fd))
    assert worst < 1e-5, worst
    report(1, "derivative identity", f"max relative error {worst:.2e} over 100 cases",
           t0, 5.0)


def test_criterion_02_monotonicity():
    t0 = time.time()
    rng = np.random.default_rng(202)
    cfg = SolverConfig(steps=64)
    from timeflow.integrands import family_functions
    from timeflow.scalarmap import integrate

    total_valid = 0
    violations = 0
    per_family = 10000 // len(FAMILIES) + 1
    for family in FAMILIES:
        # each pair draws its own parameters; lane axis 0 holds both endpoints
        params = rng.uniform(-2, 2, (per_family, 3))
        lo = rng.uniform(-5, 5, per_family)
        hi = rng.uniform(-5, 5, per_family)
        x1, x2 = np.minimum(lo, hi), np.maximum(lo, hi)
        keep = x1 < x2
        a, b, c = params[:, 0], params[:, 1], params[:, 2]
        value, dv = family_functions(family)
        ends = np.stack([x1, x2], axis=0)
        y, _, _ = integrate(
            lambda v, t: value(a, b, c, v, t),
            lambda v, t: dv(a, b, c, v, t),
            ends, cfg, want_log_deriv=False, divergence="nan",
        )
        valid = keep & np.isfinite(y).all(axis=0)
        total_valid += int(valid.sum())
        violations += int(np.sum(y[0, valid] >= y[1, valid]))
    assert violations == 0, violations
    assert total_valid >= 3000  # blow-up screening must not hollow out the test
    report(2, "monotonicity", f"0 violations across {total_valid} valid pairs",
           t0, 10.0)


def test_criterion_03_round_trip():
    t0 = time.time()
    rng = np.random.default_rng(303)
    fwd = SolverConfig(steps=64)
    rev = SolverConfig(steps=64, direction="reverse")
    refine = RefineConfig(method="fixed_point", tolerance=1e-11, max_iterations=15)
    cases = draw_stable_cases(rng, 100, steps=64)
    worst_err = 0.0
    worst_iters = 0
    for g, x in cases:
        y = forward(g, fwd, x).y
        res = inverse(g, rev, y, refine)
        worst_err = max(worst_err, abs(res.x - x))
        worst_iters = max(worst_iters, int(res.iterations))
    assert worst_err < 1e-8, worst_err
    assert worst_iters <= 15, worst_iters
    report(3, "explicit-inverse round trip",
           f"max |q^-1(q(x)) - x| = {worst_err:.2e}, max iterations {worst_iters}",
           t0, 5.0)


def test_criterion_04_closed_form_and_order():
    t0 = time.time()
    g = Integrand.quadratic(1, 0, 0)
    res = forward(g, SolverConfig(steps=64), 1.0)
    err64 = abs(res.y - math.e)
    assert err64 < 1e-8, err64
    assert res.log_deriv == pytest.approx(1.0, abs=1e-14)
    errors = []
    for n in (8, 16, 32, 64):
        errors.append(abs(forward(g, SolverConfig(steps=n), 1.0).y - math.e))
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    for order in orders:
        assert abs(order - 4.0) <= 0.2, orders
    report(4, "closed-form oracle",
           f"N=64 error {err64:.2e}, log-derivative exact, orders "
           + ", ".join(f"{o:.2f}" for o in orders), t0, 5.0)


def test_criterion_05_universality_rate():
    t0 = time.time()
    target = MonotoneTarget.affine(2.0, 1.0)
    scales = [0.5, 1.0 / 3.0, 0.25, 0.2]
    const = convergence_study(target, (-1, 1), scales, Kernel("constant"))
    gauss = convergence_study(target, (-1, 1), scales, Kernel("gaussian"))
    assert 0.9 <= const.slope <= 1.1, const.slope
    assert 0.9 <= gauss.slope <= 1.2, gauss.slope
    report(5, "universality rate",
           f"fitted slopes: constant {const.slope:.3f}, gaussian {gauss.slope:.3f}",
           t0, 30.0)


def test_criterion_06_inversion_benchmark():
    t0 = time.time()
    tolerances = (1e-3, 1e-4, 1e-5, 1e-6)
    rep = run_bench(tolerances=tolerances, n_inputs=1000, seed=0)
    ratios = []
    bis = []
    for tol in tolerances:
        fp = rep.mean_steps(tol, "fixed_point")
        bi = rep.mean_steps(tol, "bisection")
        ratios.append(fp / bi)
        bis.append(bi)
        assert fp / bi <= 0.65, (tol, fp, bi)
    growths = np.diff(bis)
    assert np.all(np.abs(growths - 3.3) <= 0.5), growths
    failures = sum(row.failures for row in rep.rows)
    assert failures == 0
    report(6, "inversion benchmark",
           "step ratios " + ", ".join(f"{r:.2f}" for r in ratios)
           + f"; bisection growth/decade {growths.mean():.2f}", t0, 60.0)


def test_criterion_07_exact_log_density():
    t0 = time.time()
    rng = np.random.default_rng(707)
    h = 1e-5
    worst_agree = 0.0
    masses = []
    axis = np.linspace(-8, 8, 200)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    grid = np.stack([xx.ravel(), yy.ravel()], axis=1)
    for k in range(10):
        model = build_flow(2, n_layers=2, kind="coupling", family="sigmoid_affine",
                           hidden_dims=(8,), seed=k)
        randomize_parameters(model, seed=100 + k, scale=0.4)
        x = rng.standard_normal((3, 2))
        y, _ = model_forward(model, x)
        lp = log_density(model, y)
        for i in range(3):
            xi = model_inverse(model, y[i])
            J = np.zeros((2, 2))
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                yp, _ = model_forward(model, xi + e)
                ym, _ = model_forward(model, xi - e)
                J[:, j] = (yp - ym) / (2 * h)
            ref = -0.5 * float(xi @ xi) - LOG_TWO_PI - math.log(abs(np.linalg.det(J)))
            worst_agree = max(worst_agree, abs(lp[i] - ref))
        density = np.exp(log_density(model, grid)).reshape(200, 200)
        masses.append(float(trapezoid(trapezoid(density, axis, axis=1), axis)))
    assert worst_agree < 1e-4, worst_agree
    for mass in masses:
        assert abs(mass - 1.0) < 0.02, masses
    report(7, "exact log-density",
           f"max |analytic - brute-force| = {worst_agree:.2e};"
           f" grid mass in [{min(masses):.4f}, {max(masses):.4f}]", t0, 60.0)


def test_criterion_08_training_gradient_suite():
    t0 = time.time()
    rng = np.random.default_rng(808)
    from timeflow.flow import log_density as ld

    step = 1e-6
    worst = 0.0
    for k in range(20):
        kind = "coupling" if k % 2 == 0 else "autoregressive"
        family = ("sigmoid_affine", "quadratic", "cubic")[k % 3]
        scale = 0.35 if family == "sigmoid_affine" else 0.15
        model = build_flow(2, n_layers=2, kind=kind, family=family,
                           hidden_dims=(4,), solver=SolverConfig(steps=8),
                           seed=900 + k)
        randomize_parameters(model, seed=950 + k, scale=scale)
        batch = 0.8 * rng.standard_normal((5, 2))
        _, grads = nll_and_grad(model, batch)
        params = model.parameters()
        for arr, grad in zip(params, grads):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                keep = arr[idx]
                arr[idx] = keep + step
                up = -float(np.mean(ld(model, batch)))
                arr[idx] = keep - step
                dn = -float(np.mean(ld(model, batch)))
                arr[idx] = keep
                fd = (up - dn) / (2 * step)
                worst = max(worst, abs(grad[idx] - fd) / max(1.0, abs(fd)))
    assert worst < 1e-4, worst
    report(8, "training gradients", f"max relative error {worst:.2e} over 20 models",
           t0, 120.0)


def test_criterion_09_desk_scale_density_estimation():
    t0 = time.time()
    dataset = toy2d("two_gaussians", 5000, seed=1)
    model = build_flow(2, n_layers=4, kind="coupling", family="quadratic",
                       hidden_dims=(24,), solver=SolverConfig(steps=16), seed=3)
    cfg = TrainConfig(epochs=200, batch_size=128, learning_rate=0.01,
                      lr_decay=0.5, lr_decay_epochs=(15, 30, 45, 60),
                      seed=7, patience=200)
    model, history = train(model, dataset, cfg)
    assert history, "training produced no epochs"
    baseline = identity_nll(dataset.val)
    best = min(rec.val_nll for rec in history)
    assert best <= baseline - 0.3, (best, baseline)

    draws = sample(model, 10000, seed=11, divergence="drop")
    assert draws.shape[0] >= 9900
    left = draws[draws[:, 0] < 0]
    right = draws[draws[:, 0] >= 0]
    dist_left = np.linalg.norm(left.mean(axis=0) - [-2.0, 0.0])
    dist_right = np.linalg.norm(right.mean(axis=0) - [2.0, 0.0])
    assert dist_left < 0.3 and dist_right < 0.3, (dist_left, dist_right)
    report(9, "desk-scale density estimation",
           f"val NLL {best:.3f} vs identity {baseline:.3f}"
           f" (gain {baseline - best:.3f}); mode-mean distances"
           f" {dist_left:.3f}/{dist_right:.3f}", t0, 600.0)


def test_criterion_10_autoregressive_masking():
    t0 = time.time()
    rng = np.random.default_rng(1010)
    h = 1e-6
    checked = 0
    for k in range(20):
        D = int(rng.integers(2, 7))
        hidden = [int(rng.integers(4, 16))]
        masks = build_masks(D, hidden)
        net = init_net([D, *hidden, 3 * D], seed=int(rng.integers(1 << 31)),
                       masks=masks)
        for w in net.weights:
            w += 0.4 * rng.standard_normal(w.shape) / np.sqrt(w.shape[0])
        layer = AutoregressiveLayer(D, "sigmoid_affine", net, SolverConfig(steps=8))
        x = rng.standard_normal(D)
        for j in range(D):
            e = np.zeros(D)
            e[j] = h
            yp, _ = layer_forward(layer, x + e)
            ym, _ = layer_forward(layer, x - e)
            col = (yp - ym) / (2 * h)
            assert np.all(col[:j] == 0.0), (k, j)  # masked entries exactly zero
            assert col[j] > 0.0
            checked += 1
    report(10, "autoregressive masking",
           f"{checked} Jacobian columns with exact zeros above the diagonal",
           t0, 60.0)

"""NLL objective, Adam, and the training loop."""

import math

import numpy as np
import pytest

from timeflow import (
    AdamState,
    ConditionerNet,
    CouplingLayer,
    FlowModel,
    SolverConfig,
    TrainConfig,
    adam_step,
    build_flow,
    nll,
    nll_and_grad,
    toy2d,
    train,
)
from timeflow.data import TWO_GAUSSIANS_CENTERS, TWO_GAUSSIANS_STD
from timeflow.flow import randomize_parameters
from timeflow.training import identity_nll

LOG_TWO_PI = math.log(2 * math.pi)
SOLVER = SolverConfig(steps=16)


def shift_layer(b, transform_upper=True):
    net = ConditionerNet([1, 3], [np.zeros((1, 3))], [np.array([0.0, b, 0.0])])
    return CouplingLayer(2, 1, transform_upper, "quadratic", net, SOLVER)


def test_identity_model_loss_at_origin():
    model = build_flow(2, n_layers=2, kind="coupling", hidden_dims=(4,), seed=0)
    loss, grads = nll_and_grad(model, np.zeros((1, 2)))
    assert loss == pytest.approx(LOG_TWO_PI, abs=1e-12)
    # the zero output layer blocks every upstream path, so hidden-layer
    # parameters receive exactly zero gradient
    params = model.parameters()
    for p, g in zip(params, grads):
        assert p.shape == g.shape
    for layer_first_weight_grad in grads[0::4]:
        assert np.all(layer_first_weight_grad == 0.0)


def test_shift_model_translation_invariance():
    b = 1.3
    model = FlowModel(2, [shift_layer(b, True), shift_layer(b, False)])
    batch = np.array([[b, b]])  # preimage is the origin
    identity = FlowModel(2, [])
    loss_shift = nll(model, batch)
    loss_identity = nll(identity, np.zeros((1, 2)))
    assert loss_shift == pytest.approx(loss_identity, abs=1e-10)


def test_nll_and_grad_rejects_empty_batch():
    model = FlowModel(2, [])
    with pytest.raises(ValueError):
        nll_and_grad(model, np.zeros((0, 2)))


def test_gradients_match_finite_differences(rng):
    from timeflow.flow import log_density

    step = 1e-6
    for k in range(6):
        kind = "coupling" if k % 2 == 0 else "autoregressive"
        model = build_flow(2, n_layers=2, kind=kind, family="sigmoid_affine",
                           hidden_dims=(4,), solver=SolverConfig(steps=8),
                           seed=60 + k)
        randomize_parameters(model, seed=70 + k, scale=0.35)
        batch = rng.standard_normal((5, 2))
        _, grads = nll_and_grad(model, batch)
        params = model.parameters()
        for arr, grad in zip(params, grads):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                keep = arr[idx]
                arr[idx] = keep + step
                up = -float(np.mean(log_density(model, batch)))
                arr[idx] = keep - step
                dn = -float(np.mean(log_density(model, batch)))
                arr[idx] = keep
                fd = (up - dn) / (2 * step)
                assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)


# --- adam --------------------------------------------------------------------


def test_adam_zero_gradient_keeps_params():
    params = [np.array([1.0, -2.0]), np.array([[3.0]])]
    state = AdamState.init(params)
    grads = [np.zeros(2), np.zeros((1, 1))]
    new_params, new_state = adam_step(state, params, grads, lr=0.1)
    for p, q in zip(params, new_params):
        assert np.array_equal(p, q)
    assert new_state.step == 1


def test_adam_first_step_is_signed_lr():
    params = [np.array([0.0])]
    state = AdamState.init(params)
    grads = [np.array([2.0])]
    new_params, _ = adam_step(state, params, grads, lr=0.1)
    # bias correction makes m_hat = g, sqrt(v_hat) = |g|: step = -lr * sign(g)
    assert new_params[0][0] == pytest.approx(-0.1, abs=1e-9)


def test_adam_two_steps_match_hand_recurrence():
    g = 2.0
    lr = 0.1
    b1, b2, eps = 0.9, 0.999, 1e-8
    params = [np.array([0.5])]
    state = AdamState.init(params)
    grads = [np.array([g])]
    p1, state = adam_step(state, params, grads, lr)
    p2, state = adam_step(state, p1, grads, lr)

    # hand evaluation of the bias-corrected recurrence
    m1 = (1 - b1) * g
    v1 = (1 - b2) * g * g
    theta1 = 0.5 - lr * (m1 / (1 - b1)) / (math.sqrt(v1 / (1 - b2)) + eps)
    m2 = b1 * m1 + (1 - b1) * g
    v2 = b2 * v1 + (1 - b2) * g * g
    theta2 = theta1 - lr * (m2 / (1 - b1**2)) / (math.sqrt(v2 / (1 - b2**2)) + eps)

    assert p1[0][0] == pytest.approx(theta1, abs=1e-15)
    assert p2[0][0] == pytest.approx(theta2, abs=1e-15)
    assert state.step == 2


def test_adam_shape_mismatch_rejected():
    params = [np.zeros(2)]
    state = AdamState.init(params)
    with pytest.raises(ValueError):
        adam_step(state, params, [np.zeros(3)], lr=0.1)


# --- training loop -----------------------------------------------------------


def test_zero_epochs_returns_unchanged_model():
    ds = toy2d("two_gaussians", 200, seed=0)
    model = build_flow(2, n_layers=2, hidden_dims=(4,), seed=1)
    before = [p.copy() for p in model.parameters()]
    model, history = train(model, ds, TrainConfig(epochs=0))
    assert history == []
    for a, b in zip(before, model.parameters()):
        assert np.array_equal(a, b)


def test_training_deterministic():
    ds = toy2d("two_gaussians", 400, seed=0)
    cfg = TrainConfig(epochs=3, batch_size=128, learning_rate=0.005, seed=9)
    hists = []
    for _ in range(2):
        model = build_flow(2, n_layers=2, hidden_dims=(6,), seed=2)
        _, history = train(model, ds, cfg)
        hists.append([(r.epoch, r.train_nll, r.val_nll) for r in history])
    assert hists[0] == hists[1]
    assert len(hists[0]) == 3


def test_training_improves_on_identity_baseline():
    ds = toy2d("two_gaussians", 1200, seed=3)
    model = build_flow(2, n_layers=4, kind="coupling", family="quadratic",
                       hidden_dims=(16,), solver=SOLVER, seed=3)
    cfg = TrainConfig(epochs=20, batch_size=128, learning_rate=0.01, seed=5,
                      patience=50)
    model, history = train(model, ds, cfg)
    baseline = identity_nll(ds.val)
    best = min(r.val_nll for r in history)
    assert best < baseline - 0.3
    # best-so-far validation sequence is non-increasing by construction
    running = np.minimum.accumulate([r.val_nll for r in history])
    assert np.all(np.diff(running) <= 0)


def test_trained_nll_respects_entropy_floor():
    # Monte-Carlo estimate of the generator's differential entropy
    rng = np.random.default_rng(0)
    n = 20000
    comp = rng.integers(0, 2, n)
    pts = TWO_GAUSSIANS_CENTERS[comp] + TWO_GAUSSIANS_STD * rng.standard_normal((n, 2))

    def mixture_logpdf(x):
        out = np.zeros(x.shape[0])
        s2 = TWO_GAUSSIANS_STD**2
        for k, center in enumerate(TWO_GAUSSIANS_CENTERS):
            d2 = np.sum((x - center) ** 2, axis=1)
            out += 0.5 * np.exp(-0.5 * d2 / s2) / (2 * math.pi * s2)
        return np.log(out)

    entropy = -float(np.mean(mixture_logpdf(pts)))

    ds = toy2d("two_gaussians", 1200, seed=3)
    model = build_flow(2, n_layers=4, kind="coupling", family="quadratic",
                       hidden_dims=(16,), solver=SOLVER, seed=3)
    cfg = TrainConfig(epochs=20, batch_size=128, learning_rate=0.01, seed=5,
                      patience=50)
    model, history = train(model, ds, cfg)
    best = min(r.val_nll for r in history)
    assert best >= entropy - 0.5


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(lr_decay=0.0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)

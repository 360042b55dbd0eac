"""Feed-forward conditioner networks mapping inputs to integrand parameters.

A conditioner takes the coordinates a flow layer conditions on and emits
one (a, b, c) triple per transformed coordinate, laid out as consecutive
triples in the output vector. Plain networks serve coupling layers; masked
networks enforce the autoregressive property, where the triple for
coordinate k may only read coordinates of strictly lower order.

Evaluation is a pure function of (network, input); parameter arrays are
only ever replaced wholesale by the training loop, never mutated during
evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Node, backward, grad_or_zeros, matmul, relu, tanh

__all__ = ["ConditionerNet", "init_net", "net_eval", "net_vjp", "build_masks"]

ACTIVATIONS = ("tanh", "relu")


@dataclass
class ConditionerNet:
    """Dense MLP; weights are (fan_in, fan_out), final layer is linear.

    `masks`, when present, are multiplied into the weights at every
    evaluation, so masked connections stay dead regardless of training.
    """

    layer_dims: list
    weights: list
    biases: list
    activation: str = "tanh"
    masks: Optional[list] = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("weights/biases do not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} parameter shapes do not match layer_dims")
        if self.masks is not None:
            for i, m in enumerate(self.masks):
                if m.shape != self.weights[i].shape:
                    raise ValueError(f"mask {i} shape does not match its weight matrix")

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def param_arrays(self):
        """Parameters in the canonical order [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_param_arrays(self, arrays):
        n = len(self.weights)
        if len(arrays) != 2 * n:
            raise ValueError("wrong number of parameter arrays")
        for i in range(n):
            w, b = arrays[2 * i], arrays[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ValueError(f"layer {i} replacement shapes do not match")
            self.weights[i] = w
            self.biases[i] = b


def init_net(layer_dims, seed=0, activation="tanh", masks=None) -> ConditionerNet:
    """Seeded initialization: uniform +-sqrt(6/(fan_in+fan_out)) hidden
    weights, zero biases, and an all-zero final layer so a freshly built
    flow layer starts as the identity map."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    n_layers = len(layer_dims) - 1
    for i in range(n_layers):
        fan_in, fan_out = layer_dims[i], layer_dims[i + 1]
        if i == n_layers - 1:
            w = np.zeros((fan_in, fan_out))
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return ConditionerNet(list(layer_dims), weights, biases, activation, masks)


def net_eval(net: ConditionerNet, x, params=None):
    """Affine-then-activation composition; the last layer stays linear.

    `x` is a vector or an (n, in_dim) batch, plain array or taped Node.
    `params` optionally overrides the parameter arrays (same order as
    `param_arrays`), which is how training threads Nodes through.
    """
    arrs = net.param_arrays() if params is None else params
    if len(arrs) != 2 * len(net.weights):
        raise ValueError("params has the wrong length")
    if isinstance(x, Node):
        squeeze = x.ndim == 1
        h = x.reshape(1, -1) if squeeze else x
    else:
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = np.atleast_2d(x)
    if h.shape[1] != net.in_dim:
        raise ValueError(
            f"input width {h.shape[1]} does not match conditioner input dim {net.in_dim}"
        )
    act = tanh if net.activation == "tanh" else relu
    n_layers = len(net.weights)
    for i in range(n_layers):
        w, b = arrs[2 * i], arrs[2 * i + 1]
        if net.masks is not None:
            w = w * net.masks[i]
        h = matmul(h, w) + b
        if i < n_layers - 1:
            h = act(h)
    return h.reshape(-1) if squeeze else h


def net_vjp(net: ConditionerNet, x, cotangent):
    """Exact reverse-mode gradients of `net_eval` at `x`.

    Returns ``(dinput, dparams)`` with dparams ordered like
    `param_arrays`; gradients of masked-out weights are exactly zero.
    """
    x_arr = np.asarray(x, dtype=float)
    x_node = Node(x_arr)
    p_nodes = [Node(p) for p in net.param_arrays()]
    out = net_eval(net, x_node, params=p_nodes)
    backward([(out, np.asarray(cotangent, dtype=float))])
    return grad_or_zeros(x_node), [grad_or_zeros(p) for p in p_nodes]


def build_masks(D: int, hidden_dims, ordering=None):
    """Connectivity masks making a [D, *hidden_dims, 3*D] net autoregressive.

    Unit orders: input i carries the order given by `ordering` (identity
    by default), hidden units cycle round-robin through 1..D-1, and the
    three outputs for coordinate i carry its input order. Hidden masks
    connect order(out) >= order(in); the output mask requires a strict
    inequality, so the triple for the k-th variable in the ordering reads
    only variables 1..k-1, and the first variable reads nothing.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    if ordering is None:
        in_order = np.arange(1, D + 1)
    else:
        ordering = np.asarray(ordering, dtype=int)
        if sorted(ordering.tolist()) != list(range(D)):
            raise ValueError("ordering must be a permutation of 0..D-1")
        in_order = np.empty(D, dtype=int)
        in_order[ordering] = np.arange(1, D + 1)
    span = max(D - 1, 1)
    orders = [in_order]
    for width in hidden_dims:
        orders.append(np.arange(width) % span + 1)
    out_order = np.repeat(in_order, 3)

    masks = []
    for a, b in zip(orders[:-1], orders[1:]):
        masks.append((b[None, :] >= a[:, None]).astype(float))
    masks.append((out_order[None, :] > orders[-1][:, None]).astype(float))
    return masks

#!/usr/bin/env python3
"""Masked autoregressive layers: triangular Jacobians by construction.

A masked conditioner gives coordinate k integrand parameters that read
only coordinates of lower order, so the layer's Jacobian is lower
triangular with positive diagonal and the log-determinant is just the sum
of per-coordinate log-derivatives. The masking is exact: entries above
the diagonal are bit-for-bit zero, not merely small.
"""

import numpy as np

from timeflow import SolverConfig, build_flow, build_masks, init_net
from timeflow.flow import (
    AutoregressiveLayer,
    layer_forward,
    layer_inverse,
    randomize_parameters,
)

D = 4
masks = build_masks(D, [10])
print("connectivity induced by the masks (input -> output block):")
product = (masks[0] @ masks[1] > 0).astype(int)
for i in range(D):
    reads = [k for k in range(D) if product[i, 3 * k]]
    print(f"  input {i} feeds parameter blocks {reads}" if reads
          else f"  input {i} feeds no blocks below it")

net = init_net([D, 10, 3 * D], seed=5, masks=masks)
rng = np.random.default_rng(6)
for w in net.weights:
    w += 0.4 * rng.standard_normal(w.shape) / np.sqrt(w.shape[0])
layer = AutoregressiveLayer(D, "sigmoid_affine", net, SolverConfig(steps=16))

x = rng.standard_normal(D)
h = 1e-6
J = np.zeros((D, D))
for j in range(D):
    e = np.zeros(D)
    e[j] = h
    J[:, j] = (layer_forward(layer, x + e)[0] - layer_forward(layer, x - e)[0]) / (2 * h)
print("\nfinite-difference Jacobian of one layer:")
with np.printoptions(precision=4, suppress=True):
    print(J)
print("upper-triangle entries are exact zeros:",
      all(J[i, j] == 0.0 for i in range(D) for j in range(i + 1, D)))

y, logdet = layer_forward(layer, x)
back, logdet_rev = layer_inverse(layer, y)
print(f"\nforward log-determinant: {logdet:+.6f}")
print(f"inverse log-determinant: {logdet_rev:+.6f} (sign-flipped twin)")
print(f"sequential inversion recovers x to {np.max(np.abs(back - x)):.2e}")

model = build_flow(D, n_layers=3, kind="autoregressive", family="sigmoid_affine",
                   hidden_dims=(10,), seed=7)
randomize_parameters(model, seed=8, scale=0.3)
xs = rng.standard_normal((256, D))
ys, _ = model.forward(xs)
print(f"\n3-layer masked flow round trip over 256 points:"
      f" {np.max(np.abs(model.inverse(ys) - xs)):.2e}")

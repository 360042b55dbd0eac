#!/usr/bin/env python3
"""Fit a small flow to a toy 2-D density by maximum likelihood.

The flow stacks coupling layers (each transforms half the coordinates
with integrand parameters produced from the other half) with random
permutations in between. Training minimizes the exact negative
log-likelihood computed along the inverse path. Short run for demo
purposes; the acceptance suite trains the full 200-epoch model.
"""

from timeflow import SolverConfig, TrainConfig, build_flow, sample, toy2d, train
from timeflow.training import identity_nll

dataset = toy2d("two_gaussians", n=3000, seed=1)
print(f"dataset: {dataset.name}, {dataset.n} rows, dim {dataset.dim}")
print(f"splits: train {dataset.train.shape[0]}, val {dataset.val.shape[0]},"
      f" test {dataset.test.shape[0]}")

model = build_flow(
    dim=2, n_layers=4, kind="coupling", family="quadratic",
    hidden_dims=(24,), solver=SolverConfig(steps=16), seed=3,
)
cfg = TrainConfig(epochs=40, batch_size=128, learning_rate=0.01,
                  lr_decay=0.5, lr_decay_epochs=(15, 30), seed=7, patience=40)

baseline = identity_nll(dataset.val)
print(f"\nidentity-map baseline NLL: {baseline:.4f} nats")
print("training 40 epochs...")
model, history = train(model, dataset, cfg)

for rec in history[::8] + history[-1:]:
    print(f"  epoch {rec.epoch:3d}: train {rec.train_nll:.4f}  val {rec.val_nll:.4f}")
best = min(r.val_nll for r in history)
print(f"best validation NLL: {best:.4f}  (gain {baseline - best:.3f} nats)")

draws = sample(model, 4000, seed=11, divergence="drop")
left = draws[draws[:, 0] < 0]
right = draws[draws[:, 0] >= 0]
print(f"\nsampled {draws.shape[0]} points from the fitted model")
print(f"left-mode mean  {left.mean(axis=0).round(3)}  (target [-2, 0])")
print(f"right-mode mean {right.mean(axis=0).round(3)}  (target [+2, 0])")
print(f"mode balance    {len(left)} / {len(right)}")

"""Invertible flows composed of coupling, autoregressive, and permutation layers.

Coupling layers copy one block of coordinates and transform the rest
coordinatewise with integrand parameters produced by a conditioner reading
the copied block. Autoregressive layers transform every coordinate, with
parameters from a masked conditioner so coordinate k only sees earlier
coordinates. Both have triangular Jacobians whose log-determinant is the
sum of per-coordinate log-derivatives of the scalar maps; permutations are
volume preserving.

Densities are evaluated along the inverse path: data is pulled back to the
standard-normal base through reverse-time integration, and the
log-derivative integral accumulated along that reverse trajectory (which
carries the opposite sign of the forward one) is added to the base
log-density. This costs one solve per coordinate per layer and never needs
the forward pass.

Forward, inverse, log-density and sampling are pure; batches are vector
lanes processed together with deterministic ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Node, concat, sum_, value_of
from .conditioner import ConditionerNet, build_masks, init_net, net_eval
from .integrands import family_functions
from .scalarmap import DEFAULT_GUARD, DivergenceError, SolverConfig, integrate

__all__ = [
    "CouplingLayer",
    "AutoregressiveLayer",
    "PermutationLayer",
    "FlowModel",
    "layer_forward",
    "layer_inverse",
    "log_density",
    "sample",
    "build_flow",
    "randomize_parameters",
    "save_checkpoint",
    "load_checkpoint",
]

LOG_TWO_PI = float(np.log(2.0 * np.pi))


@dataclass
class CouplingLayer:
    """Copy one block, transform the other; `split` is the block boundary d.

    With `transform_upper` the coordinates d..D-1 are transformed using
    parameters conditioned on 0..d-1, otherwise the roles are swapped.
    """

    dim: int
    split: int
    transform_upper: bool
    family: str
    conditioner: ConditionerNet
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not 1 <= self.split < self.dim:
            raise ValueError("coupling split must satisfy 1 <= d < D")
        n_pass = self.split if self.transform_upper else self.dim - self.split
        n_trans = self.dim - n_pass
        if self.conditioner.in_dim != n_pass or self.conditioner.out_dim != 3 * n_trans:
            raise ValueError(
                f"conditioner dims ({self.conditioner.in_dim} -> "
                f"{self.conditioner.out_dim}) do not match split {self.split}"
                f" of dimension {self.dim}"
            )


@dataclass
class AutoregressiveLayer:
    """Transform every coordinate; the masked conditioner supplies the
    (a, b, c) triple for coordinate k from coordinates of lower order."""

    dim: int
    family: str
    conditioner: ConditionerNet
    solver: SolverConfig = field(default_factory=SolverConfig)
    ordering: Optional[np.ndarray] = None  # rank -> variable index

    def __post_init__(self):
        if self.conditioner.masks is None:
            raise ValueError("autoregressive layers need a masked conditioner")
        if self.conditioner.in_dim != self.dim or self.conditioner.out_dim != 3 * self.dim:
            raise ValueError("masked conditioner must map D inputs to 3*D outputs")
        if self.ordering is None:
            self.ordering = np.arange(self.dim)
        else:
            self.ordering = np.asarray(self.ordering, dtype=int)
            if sorted(self.ordering.tolist()) != list(range(self.dim)):
                raise ValueError("ordering must be a permutation of 0..D-1")


@dataclass
class PermutationLayer:
    """Reindex coordinates: y[:, j] = x[:, perm[j]]. Zero log-determinant."""

    dim: int
    perm: np.ndarray

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=int)
        if sorted(self.perm.tolist()) != list(range(self.dim)):
            raise ValueError("perm must be a bijection on 0..D-1")

    @property
    def inverse_perm(self):
        return np.argsort(self.perm)


@dataclass
class FlowModel:
    """Ordered layers over R^D with a standard-normal base distribution.

    Sampling applies layers in list order; densities invert them in
    reverse order.
    """

    dim: int
    layers: list

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if layer.dim != self.dim:
                raise ValueError(f"layer {i} has dimension {layer.dim}, expected {self.dim}")

    # convenience method forms of the module-level operations
    def forward(self, x):
        return model_forward(self, x)

    def inverse(self, y, refine=None):
        return model_inverse(self, y, refine=refine)

    def log_density(self, y, params=None):
        return log_density(self, y, params=params)

    def sample(self, n, seed=0):
        return sample(self, n, seed)

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer_param_arrays(layer))
        return out

    def set_parameters(self, arrays):
        i = 0
        for layer in self.layers:
            own = layer_param_arrays(layer)
            if own:
                layer.conditioner.set_param_arrays(arrays[i:i + len(own)])
                i += len(own)
        if i != len(arrays):
            raise ValueError("wrong number of parameter arrays for this model")


def layer_param_arrays(layer):
    if isinstance(layer, PermutationLayer):
        return []
    return layer.conditioner.param_arrays()


def _split_params(model, params):
    """Per-layer views into a flat parameter list (None passes through)."""
    views = []
    i = 0
    for layer in model.layers:
        n = len(layer_param_arrays(layer))
        views.append(None if params is None else params[i:i + n])
        i += n
    if params is not None and i != len(params):
        raise ValueError("parameter list length does not match the model")
    return views


def _as_batch(x):
    if isinstance(x, Node):
        if x.ndim == 1:
            return x.reshape(1, -1), True
        return x, False
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr.reshape(1, -1), True
    return arr, False


def _triples(theta):
    """Split conditioner output (n, 3k) into a, b, c of shape (n, k)."""
    return theta[:, 0::3], theta[:, 1::3], theta[:, 2::3]


def layer_forward(layer, x, params=None, *, guard=DEFAULT_GUARD, divergence="raise"):
    """Apply one layer. Returns (y, logdet) with logdet summed over
    transformed coordinates, shape (n,) for batched input."""
    xb, squeeze = _as_batch(x)
    if isinstance(layer, PermutationLayer):
        y = xb[:, layer.perm]
        logdet = np.zeros(value_of(xb).shape[0])
    elif isinstance(layer, CouplingLayer):
        d = layer.split
        if layer.transform_upper:
            xp, xt = xb[:, :d], xb[:, d:]
        else:
            xp, xt = xb[:, d:], xb[:, :d]
        theta = net_eval(layer.conditioner, xp, params)
        a, b, c = _triples(theta)
        value, dv = family_functions(layer.family)
        yt, l, _ = integrate(
            lambda v, t: value(a, b, c, v, t),
            lambda v, t: dv(a, b, c, v, t),
            xt, layer.solver, guard=guard, divergence=divergence,
        )
        y = concat([xp, yt] if layer.transform_upper else [yt, xp], axis=1)
        logdet = sum_(l, axis=1)
    elif isinstance(layer, AutoregressiveLayer):
        theta = net_eval(layer.conditioner, xb, params)
        a, b, c = _triples(theta)
        value, dv = family_functions(layer.family)
        y, l, _ = integrate(
            lambda v, t: value(a, b, c, v, t),
            lambda v, t: dv(a, b, c, v, t),
            xb, layer.solver, guard=guard, divergence=divergence,
        )
        logdet = sum_(l, axis=1)
    else:
        raise TypeError(f"unknown layer type {type(layer).__name__}")
    if squeeze:
        return y.reshape(-1), logdet[0]
    return y, logdet


def layer_inverse(layer, y, params=None, refine=None, *, guard=DEFAULT_GUARD,
                  divergence="raise"):
    """Invert one layer. Returns (x, logdet_rev) where logdet_rev is the
    log-derivative integral accumulated along the reverse trajectory (the
    log-determinant of the inverse map, i.e. minus the forward one).

    `refine` (a RefineConfig) optionally polishes each transformed
    coordinate by root refinement; plain-array inputs only.
    """
    yb, squeeze = _as_batch(y)
    if isinstance(layer, PermutationLayer):
        x = yb[:, layer.inverse_perm]
        logdet = np.zeros(value_of(yb).shape[0])
    elif isinstance(layer, CouplingLayer):
        d = layer.split
        if layer.transform_upper:
            yp, yt = yb[:, :d], yb[:, d:]
        else:
            yp, yt = yb[:, d:], yb[:, :d]
        theta = net_eval(layer.conditioner, yp, params)
        a, b, c = _triples(theta)
        xt, logdet = _invert_block(layer, a, b, c, yt, refine, guard, divergence)
        x = concat([yp, xt] if layer.transform_upper else [xt, yp], axis=1)
    elif isinstance(layer, AutoregressiveLayer):
        x, logdet = _invert_autoregressive(layer, yb, params, refine, guard,
                                           divergence)
    else:
        raise TypeError(f"unknown layer type {type(layer).__name__}")
    if squeeze:
        return x.reshape(-1), logdet[0]
    return x, logdet


def _invert_block(layer, a, b, c, yt, refine, guard, divergence="raise"):
    """Reverse-integrate a block of coordinates with given parameter arrays."""
    value, dv = family_functions(layer.family)
    value_fn = lambda v, t: value(a, b, c, v, t)
    dv_fn = lambda v, t: dv(a, b, c, v, t)
    xt, l, _ = integrate(value_fn, dv_fn, yt, layer.solver.reversed(), guard=guard,
                         divergence=divergence)
    if refine is not None and refine.method != "reverse_only":
        if isinstance(xt, Node):
            raise TypeError("refined inversion is not differentiable; use plain arrays")
        xt = _refine_block(layer, a, b, c, yt, xt, refine, guard)
        # recompute the reverse log-derivative from the refined preimage
        _, lf, _ = integrate(value_fn, dv_fn, xt, layer.solver, guard=guard)
        l = -lf
    return xt, sum_(l, axis=1)


def _refine_block(layer, a, b, c, yt, xt0, refine, guard):
    from .inversion import _fixed_point

    value, dv = family_functions(layer.family)
    flat_shape = yt.shape
    out = np.empty(flat_shape)
    for j in range(flat_shape[1]):  # each column has its own parameter lanes
        aj = a[:, j] if np.ndim(a) == 2 else a
        bj = b[:, j] if np.ndim(b) == 2 else b
        cj = c[:, j] if np.ndim(c) == 2 else c

        def q(x, aj=aj, bj=bj, cj=cj):
            v, _, _ = integrate(
                lambda vv, t: value(aj, bj, cj, vv, t),
                lambda vv, t: dv(aj, bj, cj, vv, t),
                x, layer.solver, guard=guard,
                want_log_deriv=False, divergence="nan",
            )
            return v

        xj, _, converged, _ = _fixed_point(q, yt[:, j], xt0[:, j], refine)
        if not np.all(converged):
            bad = np.argwhere(~converged).ravel().tolist()
            raise DivergenceError(
                f"inverse refinement did not converge for coordinate {j}"
                f" (lanes {bad})", indices=bad)
        out[:, j] = xj
    return out


def _invert_autoregressive(layer, yb, params, refine, guard, divergence="raise"):
    """Sequential inversion in the layer's variable ordering."""
    n = value_of(yb).shape[0]
    D = layer.dim
    value, dv = family_functions(layer.family)
    cols = [None] * D
    logdet = None
    for rank in range(D):
        k = int(layer.ordering[rank])
        filled = [
            cols[j] if cols[j] is not None else np.zeros((n, 1))
            for j in range(D)
        ]
        inp = concat(filled, axis=1)
        theta = net_eval(layer.conditioner, inp, params)
        a = theta[:, 3 * k:3 * k + 1]
        b = theta[:, 3 * k + 1:3 * k + 2]
        c = theta[:, 3 * k + 2:3 * k + 3]
        yk = yb[:, k:k + 1]
        value_fn = lambda v, t, a=a, b=b, c=c: value(a, b, c, v, t)
        dv_fn = lambda v, t, a=a, b=b, c=c: dv(a, b, c, v, t)
        xk, lk, _ = integrate(value_fn, dv_fn, yk, layer.solver.reversed(),
                              guard=guard, divergence=divergence)
        if refine is not None and refine.method != "reverse_only":
            if isinstance(xk, Node):
                raise TypeError("refined inversion is not differentiable")
            from .inversion import _fixed_point

            def q(x, a=a, b=b, c=c):
                v, _, _ = integrate(
                    lambda vv, t: value(a, b, c, vv, t),
                    lambda vv, t: dv(a, b, c, vv, t),
                    x.reshape(-1, 1), layer.solver, guard=guard,
                    want_log_deriv=False, divergence="nan",
                )
                return v.reshape(-1)

            xj, _, converged, _ = _fixed_point(q, yk.reshape(-1), xk.reshape(-1), refine)
            if not np.all(converged):
                bad = np.argwhere(~converged).ravel().tolist()
                raise DivergenceError(
                    f"inverse refinement did not converge for coordinate {k}"
                    f" (lanes {bad})", indices=bad)
            xk = xj.reshape(-1, 1)
            _, lf, _ = integrate(value_fn, dv_fn, xk, layer.solver, guard=guard)
            lk = -lf
        cols[k] = xk
        contrib = sum_(lk, axis=1)
        logdet = contrib if logdet is None else logdet + contrib
    x = concat(cols, axis=1)
    return x, logdet


def model_forward(model: FlowModel, x, params=None, *, guard=DEFAULT_GUARD,
                  divergence="raise"):
    """Push x through all layers; returns (y, total_logdet)."""
    views = _split_params(model, params)
    xb, squeeze = _as_batch(x)
    total = None
    for i, layer in enumerate(model.layers):
        try:
            xb, ld = layer_forward(layer, xb, views[i], guard=guard,
                                   divergence=divergence)
        except DivergenceError as err:
            raise DivergenceError(f"layer {i}: {err}", indices=err.indices) from err
        total = ld if total is None else total + ld
    if total is None:
        total = np.zeros(value_of(xb).shape[0])
    if squeeze:
        return xb.reshape(-1), total[0]
    return xb, total


def model_inverse(model: FlowModel, y, params=None, refine=None, *, guard=DEFAULT_GUARD):
    """Pull y back through all layer inverses; returns x only."""
    views = _split_params(model, params)
    yb, squeeze = _as_batch(y)
    for i in reversed(range(len(model.layers))):
        try:
            yb, _ = layer_inverse(model.layers[i], yb, views[i], refine=refine, guard=guard)
        except DivergenceError as err:
            raise DivergenceError(f"layer {i}: {err}", indices=err.indices) from err
    return yb.reshape(-1) if squeeze else yb


def log_density(model: FlowModel, y, params=None, *, guard=DEFAULT_GUARD,
                divergence="raise"):
    """Exact model log-density at y (nats).

    Evaluates along the inverse path: base log-density of the pulled-back
    point plus the per-layer reverse-direction log-derivative integrals.

    A point whose reverse trajectory leaves the guard box lies outside the
    model's image and has density zero; this raises by default, while
    divergence='-inf' records -inf for those entries (plain arrays only),
    which is what density tabulation over a grid wants.
    """
    if divergence not in ("raise", "-inf"):
        raise ValueError("divergence must be 'raise' or '-inf'")
    mode = "raise" if divergence == "raise" else "nan"
    views = _split_params(model, params)
    yb, squeeze = _as_batch(y)
    total = None
    for i in reversed(range(len(model.layers))):
        try:
            yb, ld = layer_inverse(model.layers[i], yb, views[i], guard=guard,
                                   divergence=mode)
        except DivergenceError as err:
            raise DivergenceError(f"layer {i}: {err}", indices=err.indices) from err
        total = ld if total is None else total + ld
    base = -0.5 * sum_(yb * yb, axis=1) - 0.5 * model.dim * LOG_TWO_PI
    out = base if total is None else base + total
    raw = value_of(out)
    if not np.all(np.isfinite(raw)):
        if divergence == "raise":
            bad = np.argwhere(~np.isfinite(raw)).ravel().tolist()
            raise DivergenceError(f"non-finite log-density for elements {bad}",
                                  indices=bad)
        out = np.where(np.isnan(raw), -np.inf, raw)
    return out[0] if squeeze else out


def sample(model: FlowModel, n: int, seed: int = 0, *, guard=DEFAULT_GUARD,
           divergence="raise"):
    """Draw n base-normal vectors (seeded) and push them forward.

    Quadratic/cubic dynamics are only locally Lipschitz, so a trained map
    may be undefined for extreme base draws. With divergence='drop' such
    lanes are removed (the returned sample may be shorter than n) instead
    of raising.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, model.dim))
    mode = "nan" if divergence == "drop" else divergence
    y, _ = model_forward(model, x, guard=guard, divergence=mode)
    if divergence == "drop":
        y = y[np.all(np.isfinite(y), axis=1)]
    return y


def randomize_parameters(model: FlowModel, seed=0, scale=0.4):
    """Overwrite all conditioner parameters with small random values.

    Freshly built flows are exactly the identity map up to their
    permutations (zero output layers); this gives a generic non-identity
    model for audits and tests. Weights are scaled by 1/sqrt(fan_in) and
    biases kept at half scale so the emitted integrand parameters stay
    moderate and the quadratic/cubic dynamics cannot blow up for typical
    base-normal inputs.
    """
    rng = np.random.default_rng(seed)
    params = []
    for p in model.parameters():
        if p.ndim == 2:
            params.append(scale / np.sqrt(p.shape[0]) * rng.standard_normal(p.shape))
        else:
            params.append(0.5 * scale * rng.standard_normal(p.shape))
    model.set_parameters(params)
    return model


# --- construction ----------------------------------------------------------


def build_flow(dim, n_layers=4, kind="coupling", family="quadratic",
               hidden_dims=(16,), solver=None, seed=0, permute=True) -> FlowModel:
    """Assemble a flow of `n_layers` transform layers.

    Coupling layers split at d = D//2 and alternate which half is
    transformed; a seeded random permutation is inserted between every
    pair of transform layers so successive layers see shuffled
    coordinates. Conditioners start at the identity map (zero final
    layer), so a freshly built flow is the identity.
    """
    if kind not in ("coupling", "autoregressive"):
        raise ValueError(f"unknown flow kind {kind!r}")
    if kind == "coupling" and dim < 2:
        raise ValueError("coupling flows need dimension >= 2")
    solver = solver or SolverConfig()
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(n_layers):
        if i > 0 and permute:
            layers.append(PermutationLayer(dim, rng.permutation(dim)))
        if kind == "coupling":
            d = dim // 2
            upper = i % 2 == 0
            n_pass = d if upper else dim - d
            n_trans = dim - n_pass
            net = init_net([n_pass, *hidden_dims, 3 * n_trans],
                           seed=rng, activation="tanh")
            layers.append(CouplingLayer(dim, d, upper, family, net, solver))
        else:
            masks = build_masks(dim, list(hidden_dims))
            net = init_net([dim, *hidden_dims, 3 * dim], seed=rng,
                           activation="tanh", masks=masks)
            layers.append(AutoregressiveLayer(dim, family, net, solver))
    return FlowModel(dim, layers)


# --- checkpoints -----------------------------------------------------------

CHECKPOINT_FORMAT = "timeflow-checkpoint"
CHECKPOINT_VERSION = 1


def _solver_to_json(cfg: SolverConfig):
    return {"scheme": cfg.scheme, "steps": cfg.steps}


def _solver_from_json(obj):
    return SolverConfig(scheme=obj["scheme"], steps=int(obj["steps"]))


def _net_to_json(net: ConditionerNet):
    return {
        "layer_dims": list(net.layer_dims),
        "activation": net.activation,
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_json(obj, masks=None):
    dims = [int(d) for d in obj["layer_dims"]]
    weights = [
        np.asarray(flat, dtype=float).reshape(dims[i], dims[i + 1])
        for i, flat in enumerate(obj["weights"])
    ]
    biases = [np.asarray(b, dtype=float) for b in obj["biases"]]
    return ConditionerNet(dims, weights, biases, obj["activation"], masks)


def save_checkpoint(model: FlowModel, path):
    """Write the model as self-describing JSON.

    Python's repr-based float serialization is shortest-round-trip, so
    every parameter survives save/load bit for bit.
    """
    layers = []
    for layer in model.layers:
        if isinstance(layer, PermutationLayer):
            layers.append({"kind": "permutation", "perm": layer.perm.tolist()})
        elif isinstance(layer, CouplingLayer):
            layers.append({
                "kind": "coupling",
                "split": layer.split,
                "transform_upper": layer.transform_upper,
                "family": layer.family,
                "solver": _solver_to_json(layer.solver),
                "conditioner": _net_to_json(layer.conditioner),
            })
        elif isinstance(layer, AutoregressiveLayer):
            layers.append({
                "kind": "autoregressive",
                "family": layer.family,
                "ordering": layer.ordering.tolist(),
                "solver": _solver_to_json(layer.solver),
                "conditioner": _net_to_json(layer.conditioner),
            })
        else:
            raise TypeError(f"cannot serialize layer {type(layer).__name__}")
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dim": model.dim,
        "layers": layers,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> FlowModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    dim = int(doc["dim"])
    layers = []
    for obj in doc["layers"]:
        kind = obj["kind"]
        if kind == "permutation":
            layers.append(PermutationLayer(dim, np.asarray(obj["perm"], dtype=int)))
        elif kind == "coupling":
            net = _net_from_json(obj["conditioner"])
            layers.append(CouplingLayer(
                dim, int(obj["split"]), bool(obj["transform_upper"]),
                obj["family"], net, _solver_from_json(obj["solver"]),
            ))
        elif kind == "autoregressive":
            ordering = np.asarray(obj["ordering"], dtype=int)
            dims = [int(d) for d in obj["conditioner"]["layer_dims"]]
            masks = build_masks(dim, dims[1:-1], ordering=ordering)
            net = _net_from_json(obj["conditioner"], masks=masks)
            layers.append(AutoregressiveLayer(
                dim, obj["family"], net, _solver_from_json(obj["solver"]), ordering,
            ))
        else:
            raise ValueError(f"{path}: unknown layer kind {kind!r}")
    return FlowModel(dim, layers)

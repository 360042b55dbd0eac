"""Monotone scalar maps defined by unit-time integration of v' = g(v, t).

The forward map sends x to v(1) where v solves the scalar ODE with
v(0) = x. Because trajectories of a (Lipschitz) scalar ODE cannot cross,
the map is strictly increasing; its derivative is exp of the time integral
of dg/dv along the trajectory, which we accumulate as an augmented ODE
state so the log-derivative carries the same discretization order as the
map itself. The inverse map integrates the same dynamics from t = 1 back
to t = 0, optionally followed by root refinement (see `inversion`).

Everything here is a pure function of its inputs; configs are frozen
dataclasses and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .autodiff import Node, backward, grad_or_zeros, value_of
from .integrands import Integrand, eval_integrand, eval_integrand_dv, family_functions

__all__ = [
    "SolverConfig",
    "MapResult",
    "InverseResult",
    "VjpResult",
    "DivergenceError",
    "forward",
    "inverse",
    "derivative",
    "forward_vjp",
    "eval_integrand",
    "eval_integrand_dv",
]

DEFAULT_GUARD = 1e6  # |v| beyond this is treated as blow-up of the dynamics

SCHEMES = ("rk4", "euler")
DIRECTIONS = ("forward", "reverse")


class DivergenceError(ArithmeticError):
    """Trajectory left the guard box |v| <= guard before reaching t = 1."""

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = indices


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-step scheme over the unit time interval.

    `steps` intervals of exact width 1/steps; `direction` chooses whether
    time runs 0 -> 1 or 1 -> 0. The reverse direction is the algebraic
    reversal of the forward limits, not a different discretization.
    """

    scheme: str = "rk4"
    steps: int = 16
    direction: str = "forward"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    def reversed(self):
        other = "reverse" if self.direction == "forward" else "forward"
        return replace(self, direction=other)


@dataclass
class MapResult:
    """Transformed value plus the accumulated log-derivative (nats)."""

    y: object
    log_deriv: object
    trajectory: Optional[np.ndarray] = None


@dataclass
class InverseResult:
    x: object
    iterations: int = 0
    converged: Optional[bool] = None
    residual: Optional[float] = None
    method: str = "reverse_integration"

    def __float__(self):
        return float(self.x)


@dataclass
class VjpResult:
    dx: object
    dparams: tuple = (0.0, 0.0, 0.0)


def _check_guard(v, guard, where, divergence):
    """Detect lanes outside the guard box. Returns updated v in 'nan' mode."""
    raw = value_of(v)
    bad = ~np.isfinite(raw) | (np.abs(raw) > guard)
    if not bad.any():
        return v, None
    if divergence == "raise":
        idx = np.argwhere(bad).ravel().tolist() if raw.ndim else None
        raise DivergenceError(
            f"trajectory left |v| <= {guard:g} at {where}"
            + (f" (elements {idx})" if idx else ""),
            indices=idx,
        )
    if isinstance(v, Node):  # taped runs always raise; masking is untraceable
        raise DivergenceError(f"trajectory left |v| <= {guard:g} at {where}")
    return np.where(bad, np.nan, raw), bad


def integrate(value_fn, dv_fn, x, cfg, *, guard=DEFAULT_GUARD, want_log_deriv=True,
              keep_trajectory=False, divergence="raise"):
    """Integrate v' = value_fn(v, t) across the unit interval.

    Also accumulates l' = dv_fn(v, t) with l(0) = 0 when `want_log_deriv`,
    using the same scheme and stage points, i.e. one pass over the
    augmented state (v, l). Accepts plain arrays or autodiff Nodes for
    `x` (and through closures, for the integrand parameters).

    Returns ``(v_end, log_deriv, trajectory)``.
    """
    if divergence not in ("raise", "nan"):
        raise ValueError("divergence must be 'raise' or 'nan'")
    n = cfg.steps
    h = (1.0 if cfg.direction == "forward" else -1.0) / n
    t0 = 0.0 if cfg.direction == "forward" else 1.0

    v = x
    log_deriv = None
    trajectory = [np.array(value_of(x), copy=True)] if keep_trajectory else None

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            t = t0 + k * h
            if cfg.scheme == "euler":
                dv = value_fn(v, t)
                if want_log_deriv:
                    dl = dv_fn(v, t)
                    log_deriv = dl * h if log_deriv is None else log_deriv + dl * h
                v = v + dv * h
            else:  # rk4 on the augmented state; l does not feed back into v
                half = 0.5 * h
                k1 = value_fn(v, t)
                v2 = v + half * k1
                k2 = value_fn(v2, t + half)
                v3 = v + half * k2
                k3 = value_fn(v3, t + half)
                v4 = v + h * k3
                k4 = value_fn(v4, t + h)
                if want_log_deriv:
                    m = (
                        dv_fn(v, t)
                        + 2.0 * dv_fn(v2, t + half)
                        + 2.0 * dv_fn(v3, t + half)
                        + dv_fn(v4, t + h)
                    ) * (h / 6.0)
                    log_deriv = m if log_deriv is None else log_deriv + m
                v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            v, _ = _check_guard(v, guard, f"t={t0 + (k + 1) * h:.6g}", divergence)
            if keep_trajectory:
                trajectory.append(np.array(value_of(v), copy=True))

    if not want_log_deriv:
        log_deriv = None
    traj = np.stack(trajectory) if keep_trajectory else None
    return v, log_deriv, traj


def _as_input(x):
    """Normalize map input; returns (array, was_scalar)."""
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _as_output(y, scalar):
    return float(y) if scalar else y


def forward(g: Integrand, cfg: SolverConfig, x, *, guard=DEFAULT_GUARD,
            keep_trajectory=False, divergence="raise") -> MapResult:
    """Map x to v(1) along v' = g(v, t), v(0) = x.

    `x` may be a scalar or an array (lanes integrate independently).
    `divergence='nan'` marks blown-up lanes with NaN instead of raising,
    which is convenient for vectorized screening.
    """
    if cfg.direction != "forward":
        raise ValueError("forward() needs a forward-direction SolverConfig")
    value_fn, dv_fn = g.functions()
    arr, scalar = _as_input(x)
    y, log_deriv, traj = integrate(
        value_fn, dv_fn, arr, cfg, guard=guard,
        keep_trajectory=keep_trajectory, divergence=divergence,
    )
    return MapResult(_as_output(y, scalar), _as_output(log_deriv, scalar), traj)


def derivative(g: Integrand, cfg: SolverConfig, x, *, guard=DEFAULT_GUARD):
    """d(forward)/dx = exp of the accumulated log-derivative; always > 0."""
    return np.exp(forward(g, cfg, x, guard=guard).log_deriv)


def inverse(g: Integrand, cfg: SolverConfig, y, refine=None, *,
            guard=DEFAULT_GUARD, divergence="raise") -> InverseResult:
    """Recover x with forward(x) ~= y by integrating from t = 1 to t = 0.

    Reverse integration alone is a discretization-consistent inverse; pass
    a `RefineConfig` (see `timeflow.inversion`) to polish the result to a
    residual tolerance.
    """
    if cfg.direction != "reverse":
        raise ValueError("inverse() needs a reverse-direction SolverConfig")
    value_fn, dv_fn = g.functions()
    arr, scalar = _as_input(y)
    x0, _, _ = integrate(
        value_fn, dv_fn, arr, cfg, guard=guard,
        want_log_deriv=False, divergence=divergence,
    )
    if refine is None or refine.method == "reverse_only":
        return InverseResult(_as_output(x0, scalar))
    from . import inversion  # deferred: inversion builds on this module

    return inversion.refine_inverse(g, cfg.reversed(), arr, x0, refine, scalar=scalar,
                                    guard=guard)


def forward_vjp(g: Integrand, cfg: SolverConfig, x, cot_y, cot_logdet,
                *, guard=DEFAULT_GUARD) -> VjpResult:
    """Reverse-mode sensitivities of (y, log_deriv) through the solver steps.

    Differentiates the discretized computation exactly (the gradient of
    what `forward` actually evaluates, not of the continuous limit) and
    contracts with the given cotangents. Returns d/dx and d/d(a, b, c);
    for custom integrands the parameter slots come back as zeros.
    """
    if cfg.direction != "forward":
        raise ValueError("forward_vjp() needs a forward-direction SolverConfig")
    arr, scalar = _as_input(x)
    x_node = Node(arr)
    if g.family == "custom":
        param_nodes = None
        value_fn, dv_fn = g.functions()
    else:
        value, dv = family_functions(g.family)
        pa, pb, pc = (Node(np.asarray(p, dtype=float)) for p in g.params())
        param_nodes = (pa, pb, pc)
        value_fn = lambda v, t: value(pa, pb, pc, v, t)
        dv_fn = lambda v, t: dv(pa, pb, pc, v, t)
    y, log_deriv, _ = integrate(value_fn, dv_fn, x_node, cfg, guard=guard)
    backward([(y, cot_y), (log_deriv, cot_logdet)])
    dx = _as_output(grad_or_zeros(x_node), scalar)
    if param_nodes is None:
        dparams = (0.0, 0.0, 0.0)
    else:
        dparams = tuple(float(np.sum(grad_or_zeros(p))) for p in param_nodes)
    return VjpResult(dx=dx, dparams=dparams)

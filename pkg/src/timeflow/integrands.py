"""Parametric integrand families g(v, t) driving the monotone scalar maps.

Each built-in family is a three-parameter function of the state `v` only:

    quadratic      g(v, t) = a*v + b + c*v^2
    cubic          g(v, t) = a*v + b + c*v^3
    sigmoid_affine g(v, t) = a*v + b + c*sigmoid(v)

A `custom` integrand carries explicit value / d-value callbacks and may
depend on `t`. All family functions are written against the autodiff
dispatch helpers, so they accept plain arrays or taped nodes, and the
(a, b, c) slots may themselves be arrays broadcast against `v`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .autodiff import sigmoid, value_of

FAMILIES = ("quadratic", "cubic", "sigmoid_affine", "custom")


class NonFiniteError(ArithmeticError):
    """An integrand evaluation produced a non-finite value."""


def _quadratic(a, b, c, v, t):
    return a * v + b + c * (v * v)


def _quadratic_dv(a, b, c, v, t):
    return a + 2.0 * (c * v)


def _cubic(a, b, c, v, t):
    return a * v + b + c * (v * v * v)


def _cubic_dv(a, b, c, v, t):
    return a + 3.0 * (c * (v * v))


def _sigmoid_affine(a, b, c, v, t):
    return a * v + b + c * sigmoid(v)


def _sigmoid_affine_dv(a, b, c, v, t):
    s = sigmoid(v)
    return a + c * (s * (1.0 - s))


_TABLE = {
    "quadratic": (_quadratic, _quadratic_dv),
    "cubic": (_cubic, _cubic_dv),
    "sigmoid_affine": (_sigmoid_affine, _sigmoid_affine_dv),
}


def family_functions(family: str):
    """Return ``(value_fn, dv_fn)`` with signature ``(a, b, c, v, t)``."""
    try:
        return _TABLE[family]
    except KeyError:
        raise ValueError(f"unknown integrand family {family!r}") from None


@dataclass(frozen=True)
class Integrand:
    """An integrand family with fixed scalar parameters (a, b, c).

    For ``family='custom'`` the formulas come from ``value_fn(v, t)`` and
    ``dv_fn(v, t)`` instead; the parameter triple is kept for bookkeeping
    but unused.
    """

    family: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    value_fn: Optional[Callable] = None
    dv_fn: Optional[Callable] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown integrand family {self.family!r}")
        for name in ("a", "b", "c"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"integrand parameter {name} must be finite")
        if self.family == "custom" and (self.value_fn is None or self.dv_fn is None):
            raise ValueError("custom integrand needs value_fn and dv_fn")

    @classmethod
    def quadratic(cls, a, b, c):
        return cls("quadratic", float(a), float(b), float(c))

    @classmethod
    def cubic(cls, a, b, c):
        return cls("cubic", float(a), float(b), float(c))

    @classmethod
    def sigmoid_affine(cls, a, b, c):
        return cls("sigmoid_affine", float(a), float(b), float(c))

    @classmethod
    def custom(cls, value_fn, dv_fn):
        return cls("custom", value_fn=value_fn, dv_fn=dv_fn)

    def params(self):
        return (self.a, self.b, self.c)

    def functions(self):
        """``(value_fn, dv_fn)`` with signature ``(v, t)``, params bound in."""
        if self.family == "custom":
            return self.value_fn, self.dv_fn
        value, dv = family_functions(self.family)
        a, b, c = self.a, self.b, self.c
        return (
            lambda v, t: value(a, b, c, v, t),
            lambda v, t: dv(a, b, c, v, t),
        )


def eval_integrand(g: Integrand, v, t):
    """Evaluate g(v, t); a non-finite result is reported, not propagated."""
    value_fn, _ = g.functions()
    out = value_fn(v, t)
    if not np.all(np.isfinite(value_of(out))):
        raise NonFiniteError(
            f"integrand {g.family} returned a non-finite value at v={v!r}, t={t!r}"
        )
    return out


def eval_integrand_dv(g: Integrand, v, t):
    """Evaluate the partial derivative of g with respect to v."""
    _, dv_fn = g.functions()
    out = dv_fn(v, t)
    if not np.all(np.isfinite(value_of(out))):
        raise NonFiniteError(
            f"integrand {g.family} derivative non-finite at v={v!r}, t={t!r}"
        )
    return out

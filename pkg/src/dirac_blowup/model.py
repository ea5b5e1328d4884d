"""Model parameters, the nonlinear potential and its coefficient functions.

The potential family is

    W = (|U1|^2 + |U2|^2)^k * (conj(U1) U2 + conj(U2) U1)^ell

with scaling exponent p = k + ell - 1 and self-similar weight sigma = 1/(2p).
All functions here accept Python scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a map."""


def ipow(base, n: int):
    """Integer power by repeated squaring; 0**0 == 1, negative bases allowed."""
    if n < 0:
        raise ValueError("negative exponent")
    result = np.ones_like(base) if isinstance(base, np.ndarray) else 1.0
    b = base
    while n:
        if n & 1:
            result = result * b
        n >>= 1
        if n:
            b = b * b
    return result


@dataclass(frozen=True)
class ModelParams:
    k: int
    ell: int
    p: int = field(init=False)
    sigma: Fraction = field(init=False)

    def __post_init__(self):
        for name in ("k", "ell"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        p = self.k + self.ell - 1
        if p < 1:
            raise ValueError(f"p = k + ell - 1 must be >= 1, got p={p} for k={self.k}, ell={self.ell}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "sigma", Fraction(1, 2 * p))

    @property
    def sigma_float(self) -> float:
        return float(self.sigma)

    def as_array(self) -> np.ndarray:
        """Packed float parameters consumed by the compiled kernels."""
        return np.array([self.k, self.ell, self.p, float(self.sigma)], dtype=np.float64)


@dataclass(frozen=True)
class SpinorPair:
    first: complex
    second: complex

    def __post_init__(self):
        if not (np.isfinite(self.first) and np.isfinite(self.second)):
            raise ValueError("spinor entries must be finite")

    def __iter__(self):
        yield self.first
        yield self.second


def _coupling(a, b):
    # conj(a) b + conj(b) a, real by construction
    return 2.0 * (np.real(a) * np.real(b) + np.imag(a) * np.imag(b))


def eval_W(params: ModelParams, s: SpinorPair):
    u1, u2 = s
    density = np.abs(u1) ** 2 + np.abs(u2) ** 2
    return ipow(density, params.k) * ipow(_coupling(u1, u2), params.ell)


def eval_FG_cartesian(params: ModelParams, U, V):
    """Return (F, G) so that the gradient of W in conj(U) is F*V + G*U."""
    k, ell = params.k, params.ell
    density = np.abs(U) ** 2 + np.abs(V) ** 2
    coupling = _coupling(U, V)
    if ell == 0:
        F = 0.0 * density
    else:
        F = ell * ipow(density, k) * ipow(coupling, ell - 1)
    if k == 0:
        G = 0.0 * density
    else:
        G = k * ipow(density, k - 1) * ipow(coupling, ell)
    return F, G


def self_similar_lift(
    params: ModelParams,
    profile: Callable[[float], SpinorPair | tuple],
    x: float,
    t: float,
    domain: tuple[float, float] = (-1.0, 1.0),
) -> SpinorPair:
    """Evaluate (1-t)^(-sigma) * profile(x/(1-t))."""
    if not t < 1.0:
        raise DomainError(f"self-similar lift requires t < 1, got t={t}")
    y = x / (1.0 - t)
    lo, hi = domain
    if not lo <= y <= hi:
        raise DomainError(f"y = x/(1-t) = {y} outside profile domain [{lo}, {hi}]")
    first, second = profile(y)
    scale = (1.0 - t) ** (-params.sigma_float)
    return SpinorPair(scale * complex(first), scale * complex(second))

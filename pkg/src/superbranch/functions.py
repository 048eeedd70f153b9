"""Boundary/initial-condition families with derivatives of every order.

Each family carries a closed-form n-th derivative (no numerical
differentiation), an admissibility bound for the sum of derivative sups, and
JSON (de)serialization for experiment configs.  ``invert_boundary`` solves
the rescaling maps exactly so the rescaled boundary datum equals the desired
initial condition g; its derivative tables are built by composing Taylor
series at each evaluation point, vectorized over points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .recipes import RescalingKind

_DEFAULT_WINDOW = (-8.0, 8.0)


class BoundaryOutOfRange(ValueError):
    """Type-1 inversion needs beta * g(x) < 1 on the evaluation window."""


class BoundaryFunction:
    """Base class: value and arbitrary-order derivatives in closed form."""

    family = "abstract"

    def derivative(self, n: int, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.derivative(0, x)

    def derivative_sum_bound(self, window: tuple[float, float] | None = None) -> float:
        """Finite upper bound for sum_n sup |f^(n)| when one exists, else inf."""
        raise NotImplementedError

    def taylor_table(self, x: np.ndarray, nmax: int) -> np.ndarray:
        """Taylor coefficients f^(k)(x)/k! for k = 0..nmax, shape (nmax+1, len(x))."""
        x = np.asarray(x, dtype=float)
        out = np.empty((nmax + 1, x.size))
        fact = 1.0
        for k in range(nmax + 1):
            if k > 1:
                fact *= k
            out[k] = np.asarray(self.derivative(k, x), dtype=float) / fact
        return out

    def to_json(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_json(data: dict) -> "BoundaryFunction":
        family = data["family"]
        if family == "cosine":
            return Cosine(
                data["a"], data["omega"], data.get("phase", 0.0), data.get("offset", 0.0)
            )
        if family == "exponential":
            return Exponential(data["a"], data["lam"])
        if family == "polynomial":
            return Polynomial(data["coeffs"])
        if family == "constant":
            return Constant(data["c"])
        raise ValueError(f"unknown boundary family {family!r}")


@dataclass
class Cosine(BoundaryFunction):
    """offset + a cos(omega x + phase); f^(n) = a omega^n cos(. + n pi/2)."""

    a: float
    omega: float
    phase: float = 0.0
    offset: float = 0.0
    family = "cosine"

    def derivative(self, n, x):
        x = np.asarray(x, dtype=float)
        val = self.a * self.omega**n * np.cos(self.omega * x + self.phase + n * math.pi / 2)
        if n == 0:
            val = val + self.offset
        return val

    def derivative_sum_bound(self, window=None):
        if self.a == 0 or self.omega == 0:
            return abs(self.offset) + abs(self.a)
        if abs(self.omega) >= 1:
            return float("inf")
        return abs(self.offset) + abs(self.a) / (1 - abs(self.omega))

    def to_json(self):
        return {
            "family": "cosine",
            "a": self.a,
            "omega": self.omega,
            "phase": self.phase,
            "offset": self.offset,
        }


@dataclass
class Exponential(BoundaryFunction):
    """a e^(lam x); admissibility is window-relative (sup on the window)."""

    a: float
    lam: float
    family = "exponential"

    def derivative(self, n, x):
        x = np.asarray(x, dtype=float)
        return self.a * self.lam**n * np.exp(self.lam * x)

    def derivative_sum_bound(self, window=None):
        if self.a == 0 or self.lam == 0:
            return abs(self.a)
        if abs(self.lam) >= 1:
            return float("inf")
        lo, hi = window if window is not None else _DEFAULT_WINDOW
        sup = math.exp(self.lam * (hi if self.lam > 0 else lo))
        return abs(self.a) * sup / (1 - abs(self.lam))

    def to_json(self):
        return {"family": "exponential", "a": self.a, "lam": self.lam}


@dataclass
class Polynomial(BoundaryFunction):
    """sum_k coeffs[k] x^k; finitely many nonzero derivatives."""

    coeffs: list
    family = "polynomial"

    def derivative(self, n, x):
        # Horner on the coefficients of the n-th derivative
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k in range(len(self.coeffs) - 1, n - 1, -1):
            fall = 1.0
            for j in range(n):
                fall *= k - j
            out = out * x + self.coeffs[k] * fall
        return out

    def derivative_sum_bound(self, window=None):
        lo, hi = window if window is not None else _DEFAULT_WINDOW
        edge = max(abs(lo), abs(hi), 1.0)
        total = 0.0
        for n in range(len(self.coeffs)):
            # crude but finite: triangle inequality at the window edge
            term = 0.0
            for k in range(n, len(self.coeffs)):
                fall = 1.0
                for j in range(n):
                    fall *= k - j
                term += abs(self.coeffs[k]) * fall * edge ** (k - n)
            total += term
        return total

    def to_json(self):
        return {"family": "polynomial", "coeffs": list(self.coeffs)}


@dataclass
class Constant(BoundaryFunction):
    c: float
    family = "constant"

    def derivative(self, n, x):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, self.c) if n == 0 else np.zeros_like(x)

    def derivative_sum_bound(self, window=None):
        return abs(self.c)

    def to_json(self):
        return {"family": "constant", "c": self.c}


def eval_derivative(f: BoundaryFunction, n: int, x: float) -> float:
    """Closed-form n-th derivative at a point."""
    return float(np.asarray(f.derivative(n, x)))


def derivative_sum_bound(
    f: BoundaryFunction, window: tuple[float, float] | None = None
) -> float:
    return f.derivative_sum_bound(window)


# -- Taylor-series helpers (coefficient arrays over many points) ------


def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    out = np.zeros_like(a)
    for k in range(n):
        for j in range(k + 1):
            out[k] += a[j] * b[k - j]
    return out


def _series_div(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    out = np.empty_like(p)
    out[0] = p[0] / q[0]
    for k in range(1, p.shape[0]):
        acc = p[k].copy()
        for j in range(1, k + 1):
            acc -= q[j] * out[k - j]
        out[k] = acc / q[0]
    return out


def _series_sqrt(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    out[0] = np.sqrt(a[0])
    for k in range(1, a.shape[0]):
        acc = a[k].copy()
        for j in range(1, k):
            acc -= out[j] * out[k - j]
        out[k] = acc / (2 * out[0])
    return out


def _series_x_derivative(a: np.ndarray) -> np.ndarray:
    """Taylor coefficients of a' given those of a (one order shorter, padded)."""
    out = np.zeros_like(a)
    for k in range(1, a.shape[0]):
        out[k - 1] = k * a[k]
    return out


def _series_integrate(d: np.ndarray, const: np.ndarray) -> np.ndarray:
    """Antiderivative coefficients from derivative coefficients + constant."""
    out = np.empty_like(d)
    out[0] = const
    for k in range(1, d.shape[0]):
        out[k] = d[k - 1] / k
    return out


class InvertedBoundary:
    """The boundary datum f solving the forward rescaling map exactly.

    type1: f = -log(1 - beta g) / beta;  type2: f = asinh(beta g) / beta.
    Derivatives of any order come from Taylor composition at each point.
    """

    def __init__(self, g: BoundaryFunction, beta: float, rescaling: RescalingKind):
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.g = g
        self.beta = float(beta)
        self.rescaling = rescaling

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        gv = np.asarray(self.g.derivative(0, x), dtype=float)
        if self.rescaling.kind == "type1":
            arg = 1.0 - self.beta * gv
            if np.any(arg <= 0):
                raise BoundaryOutOfRange(
                    f"beta*g reaches {float(np.max(self.beta * gv)):.6g} >= 1"
                )
            return -np.log(arg) / self.beta
        return np.arcsinh(self.beta * gv) / self.beta

    def derivative_table(self, x: np.ndarray, nmax: int) -> np.ndarray:
        """f^(n)(x) for n = 0..nmax, shape (nmax+1, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        G = self.g.taylor_table(x, nmax)
        B = self.beta * G
        if self.rescaling.kind == "type1":
            A = -B
            A[0] += 1.0
            if np.any(A[0] <= 0):
                raise BoundaryOutOfRange(
                    f"beta*g reaches {float(np.max(B[0])):.6g} >= 1"
                )
            # f = -log(A)/beta via (log A)' = A'/A
            d = _series_div(_series_x_derivative(A), A)
            L = _series_integrate(d, np.log(A[0]))
            F = -L / self.beta
        else:
            # f = asinh(B)/beta via asinh(B)' = B'/sqrt(1+B^2)
            one_plus = _series_mul(B, B)
            one_plus[0] += 1.0
            d = _series_div(_series_x_derivative(B), _series_sqrt(one_plus))
            F = _series_integrate(d, np.arcsinh(B[0])) / self.beta
        fact = 1.0
        for k in range(nmax + 1):
            if k > 1:
                fact *= k
                F[k] *= fact
        return F

    def derivative(self, n: int, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        table = self.derivative_table(x_arr, n)
        val = table[n]
        return float(val[0]) if np.isscalar(x) or np.ndim(x) == 0 else val


def invert_boundary(
    g: BoundaryFunction, beta: float, r: RescalingKind
) -> InvertedBoundary:
    return InvertedBoundary(g, beta, r)


def rescale_forward(f_value, beta: float, r: RescalingKind):
    """Forward map applied to boundary values: what the rescaled datum equals."""
    f_value = np.asarray(f_value, dtype=float)
    if r.kind == "type1":
        return (1.0 - np.exp(-beta * f_value)) / beta
    return np.sinh(beta * f_value) / beta

"""Truncated formal power series in the mass parameter beta.

Coefficients are jet polynomials, so a series describes how a branching
transformation acts on the substituted field variable through a given order.
Truncation is tracked explicitly: arithmetic never extends knowledge beyond
what both operands support, and multiplying by a negative power of beta only
shifts the window of known orders.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .jets import JetPolynomial


class NonUnitLeadingTerm(ValueError):
    """Composition precondition violated (bad beta^0 coefficient)."""


class BetaSeries:
    """Series sum_j coeffs[j] * beta^(lowest_order + j), known up to
    truncation_order; orders below lowest_order are structurally zero."""

    __slots__ = ("coeffs", "lowest_order")

    def __init__(self, coeffs: Sequence[JetPolynomial], lowest_order: int = 0):
        if not coeffs:
            raise ValueError("a series needs at least one known coefficient")
        self.coeffs = tuple(coeffs)
        self.lowest_order = int(lowest_order)

    @property
    def truncation_order(self) -> int:
        return self.lowest_order + len(self.coeffs) - 1

    @classmethod
    def from_polys(cls, polys: Sequence[JetPolynomial], truncation: int) -> "BetaSeries":
        """Series with the given beta^0..beta^len-1 coefficients, padded with
        exact zeros up to the requested truncation order."""
        if len(polys) > truncation + 1:
            raise ValueError("more coefficients than truncation order allows")
        pad = [JetPolynomial.zero()] * (truncation + 1 - len(polys))
        return cls(list(polys) + pad, 0)

    @classmethod
    def constant(cls, c, truncation: int) -> "BetaSeries":
        return cls.from_polys([JetPolynomial.constant(c)], truncation)

    def coefficient(self, order: int) -> JetPolynomial:
        """Coefficient of beta^order; raises if the order was truncated away."""
        if order > self.truncation_order:
            raise ValueError(f"order {order} beyond truncation {self.truncation_order}")
        if order < self.lowest_order:
            return JetPolynomial.zero()
        return self.coeffs[order - self.lowest_order]

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other: "BetaSeries") -> "BetaSeries":
        lo = min(self.lowest_order, other.lowest_order)
        hi = min(self.truncation_order, other.truncation_order)
        if hi < lo:
            raise ValueError("operands share no known orders")
        return BetaSeries(
            [self.coefficient(j) + other.coefficient(j) for j in range(lo, hi + 1)], lo
        )

    def __neg__(self) -> "BetaSeries":
        return BetaSeries([-c for c in self.coeffs], self.lowest_order)

    def __sub__(self, other: "BetaSeries") -> "BetaSeries":
        return self + (-other)

    def __mul__(self, other: "BetaSeries") -> "BetaSeries":
        # unknown tail of a starts at trunc_a + 1; the product is reliable up
        # to min(trunc_a + lowest_b, trunc_b + lowest_a)
        lo = self.lowest_order + other.lowest_order
        hi = min(
            self.truncation_order + other.lowest_order,
            other.truncation_order + self.lowest_order,
        )
        out = [JetPolynomial.zero() for _ in range(hi - lo + 1)]
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                order = self.lowest_order + i + other.lowest_order + j
                if order > hi:
                    continue
                out[order - lo] = out[order - lo] + a * b
        return BetaSeries(out, lo)

    def scale(self, c) -> "BetaSeries":
        return BetaSeries([p.scale(c) for p in self.coeffs], self.lowest_order)

    def scale_poly(self, p: JetPolynomial) -> "BetaSeries":
        return BetaSeries([q * p for q in self.coeffs], self.lowest_order)

    def shift(self, n: int) -> "BetaSeries":
        """Multiply by beta^n (n may be negative, e.g. by an intensity)."""
        return BetaSeries(self.coeffs, self.lowest_order + n)

    def truncate(self, order: int) -> "BetaSeries":
        if order > self.truncation_order:
            raise ValueError("cannot extend a truncated series")
        keep = order - self.lowest_order + 1
        if keep < 1:
            return BetaSeries([JetPolynomial.zero()], order)
        return BetaSeries(self.coeffs[:keep], self.lowest_order)

    def derivative(self) -> "BetaSeries":
        """Total x-derivative, applied coefficient-wise (commutes with beta)."""
        return BetaSeries([p.total_derivative() for p in self.coeffs], self.lowest_order)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BetaSeries)
            and self.lowest_order == other.lowest_order
            and self.coeffs == other.coeffs
        )

    def __repr__(self):
        parts = []
        for j in range(self.lowest_order, self.truncation_order + 1):
            p = self.coefficient(j)
            if not p.is_zero():
                parts.append(f"({p})*b^{j}" if j else f"({p})")
        body = " + ".join(parts) if parts else "0"
        return f"<BetaSeries {body} + O(b^{self.truncation_order + 1})>"

    # -- numeric ------------------------------------------------------

    def evaluate(self, beta: float, jet_values) -> float:
        total = 0.0
        for j in range(self.lowest_order, self.truncation_order + 1):
            total += self.coefficient(j).evaluate(jet_values) * beta**j
        return total


# -- compositions ----------------------------------------------------


def _compose_taylor(taylor: Sequence[Fraction], s: BetaSeries, truncation: int) -> BetaSeries:
    """sum_k taylor[k] * s^k by Horner; s must have zero constant term."""
    out = BetaSeries.constant(taylor[-1], truncation)
    for k in range(len(taylor) - 2, -1, -1):
        out = (out * s).truncate(truncation) + BetaSeries.constant(taylor[k], truncation)
    return out


def series_compose(f: str, s: BetaSeries) -> BetaSeries:
    """Compose a named analytic function with a series.

    ``log`` and ``inverse`` require a constant beta^0 coefficient (log: equal
    to one, so the result stays rational); ``exp`` and ``sqrt1p`` require a
    zero constant term.  The result keeps the operand's truncation order.
    """
    if s.lowest_order > 0:
        s = BetaSeries(
            [JetPolynomial.zero()] * s.lowest_order + list(s.coeffs), 0
        )
    if s.lowest_order < 0:
        raise NonUnitLeadingTerm("composition needs a series with no negative orders")
    K = s.truncation_order
    c0 = s.coefficient(0)
    if f in ("log", "inverse"):
        if not c0.is_constant() or c0.constant_term() == 0:
            raise NonUnitLeadingTerm(f"{f} needs a nonzero constant leading term")
        a = c0.constant_term()
        if f == "log" and a != 1:
            raise NonUnitLeadingTerm("log needs leading term exactly 1 to stay rational")
        t = (s - BetaSeries.constant(a, K)).scale(Fraction(1, a))
        if f == "inverse":
            # 1/(a(1+t)) = (1/a) sum (-t)^k
            taylor = [Fraction((-1) ** k, 1) for k in range(K + 1)]
            return _compose_taylor(taylor, t, K).scale(Fraction(1, a))
        taylor = [Fraction(0)] + [Fraction((-1) ** (k + 1), k) for k in range(1, K + 1)]
        return _compose_taylor(taylor, t, K)
    if f in ("exp", "sqrt1p"):
        if not c0.is_zero():
            raise NonUnitLeadingTerm(f"{f} needs a zero constant term")
        if f == "exp":
            fact = Fraction(1)
            taylor = [Fraction(1)]
            for k in range(1, K + 1):
                fact *= k
                taylor.append(Fraction(1, fact))
        else:
            # sqrt(1+t): binomial(1/2, k)
            taylor = [Fraction(1)]
            coeff = Fraction(1)
            for k in range(1, K + 1):
                coeff *= Fraction(3, 2) - Fraction(k, 1)
                coeff /= k
                taylor.append(coeff)
        return _compose_taylor(taylor, s, K)
    raise ValueError(f"unknown composition {f!r}")


def series_dlog(s: BetaSeries) -> BetaSeries:
    """d/dx log(s) = s'/s; defined whenever the leading term is a nonzero
    constant (the constant may differ from 1: the derivative kills it)."""
    return (s.derivative() * series_compose("inverse", s)).truncate(s.truncation_order)

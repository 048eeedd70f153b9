"""Exact-rational polynomials in jet variables u, ux, uxx, ...

A jet polynomial represents a nonlinearity N(u, u_x, u_xx, ...) symbolically.
Jet variable number k stands for the k-th spatial derivative of u; the total
derivative operator maps variable k to variable k+1 by the chain rule.
All coefficients are ``fractions.Fraction`` so results are bit-reproducible.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Mapping


def _trim(exponents: Iterable[int]) -> tuple[int, ...]:
    """Canonical exponent tuple: trailing zeros stripped."""
    t = tuple(int(e) for e in exponents)
    while t and t[-1] == 0:
        t = t[:-1]
    return t


def jet_name(k: int) -> str:
    """Display name of jet variable k: u, ux, uxx, uxxx, then u4, u5, ..."""
    if k <= 3:
        return "u" + "x" * k
    return f"u{k}"


class JetPolynomial:
    """Polynomial over jet variables with exact rational coefficients.

    Stored as a map from exponent tuples to nonzero Fractions; the tuple
    (e0, e1, ...) encodes the monomial u^e0 * ux^e1 * ...
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple[int, ...], Fraction] | None = None):
        clean: dict[tuple[int, ...], Fraction] = {}
        if terms:
            for exps, coeff in terms.items():
                c = Fraction(coeff)
                if c != 0:
                    key = _trim(exps)
                    clean[key] = clean.get(key, Fraction(0)) + c
                    if clean[key] == 0:
                        del clean[key]
        self.terms = clean

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls) -> "JetPolynomial":
        return cls()

    @classmethod
    def constant(cls, c) -> "JetPolynomial":
        return cls({(): Fraction(c)})

    @classmethod
    def variable(cls, k: int) -> "JetPolynomial":
        """The jet variable u_k (k = 0 is u itself)."""
        if k < 0:
            raise ValueError("jet order must be >= 0")
        return cls({(0,) * k + (1,): Fraction(1)})

    # -- queries ------------------------------------------------------

    @property
    def max_jet_order(self) -> int:
        """Highest jet variable index appearing (0 for constants)."""
        return max((len(e) - 1 for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return not self.terms or set(self.terms) <= {()}

    def constant_term(self) -> Fraction:
        return self.terms.get((), Fraction(0))

    def coefficient(self, exponents: Iterable[int]) -> Fraction:
        return self.terms.get(_trim(exponents), Fraction(0))

    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other: "JetPolynomial") -> "JetPolynomial":
        merged = dict(self.terms)
        for exps, c in other.terms.items():
            merged[exps] = merged.get(exps, Fraction(0)) + c
        return JetPolynomial(merged)

    def __neg__(self) -> "JetPolynomial":
        return JetPolynomial({e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "JetPolynomial") -> "JetPolynomial":
        return self + (-other)

    def __mul__(self, other) -> "JetPolynomial":
        if not isinstance(other, JetPolynomial):
            return self.scale(other)
        out: dict[tuple[int, ...], Fraction] = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                n = max(len(ea), len(eb))
                exps = tuple(
                    (ea[i] if i < len(ea) else 0) + (eb[i] if i < len(eb) else 0)
                    for i in range(n)
                )
                out[exps] = out.get(exps, Fraction(0)) + ca * cb
        return JetPolynomial(out)

    __rmul__ = __mul__

    def scale(self, c) -> "JetPolynomial":
        c = Fraction(c)
        return JetPolynomial({e: c * v for e, v in self.terms.items()})

    def __pow__(self, n: int) -> "JetPolynomial":
        if n < 0:
            raise ValueError("negative power of a jet polynomial")
        out = JetPolynomial.constant(1)
        for _ in range(n):
            out = out * self
        return out

    def total_derivative(self) -> "JetPolynomial":
        """d/dx by the chain rule: u_k -> u_{k+1} term-wise."""
        out = JetPolynomial.zero()
        for exps, coeff in self.terms.items():
            for i, e in enumerate(exps):
                if e == 0:
                    continue
                new = list(exps) + [0] * (i + 2 - len(exps))
                new[i] -= 1
                new[i + 1] += 1
                out = out + JetPolynomial({tuple(new): coeff * e})
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, JetPolynomial) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    # -- evaluation ---------------------------------------------------

    def evaluate(self, jet_values) -> float:
        """Numeric value at jet_values = (u, u_x, ...); missing orders are 0."""
        total = 0.0
        for exps, coeff in self.terms.items():
            prod = float(coeff)
            for i, e in enumerate(exps):
                if e:
                    v = jet_values[i] if i < len(jet_values) else 0.0
                    prod *= v**e
            total += prod
        return total

    # -- text form ----------------------------------------------------

    def __repr__(self):
        return f"JetPolynomial({self})"

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        ordered = sorted(
            self.terms.items(),
            key=lambda kv: (sum(kv[0]), tuple(-e for e in kv[0])),
        )
        for exps, coeff in ordered:
            factors = [
                jet_name(i) + (f"^{e}" if e > 1 else "")
                for i, e in enumerate(exps)
                if e
            ]
            if not factors:
                mono = str(abs(coeff))
            elif abs(coeff) == 1:
                mono = "*".join(factors)
            else:
                mono = "*".join([str(abs(coeff))] + factors)
            sign = "-" if coeff < 0 else "+"
            parts.append((sign, mono))
        first_sign, first = parts[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, mono in parts[1:]:
            text += f" {sign} {mono}"
        return text


_VAR_RE = re.compile(r"^(u(x*)|u(\d+))$")
_NUM_RE = re.compile(r"^\d+(\.\d+)?(/\d+)?$")


def _parse_factor(tok: str) -> JetPolynomial:
    tok = tok.strip()
    if "^" in tok:
        base, _, exp = tok.partition("^")
        return _parse_factor(base) ** int(exp)
    m = _VAR_RE.match(tok)
    if m:
        if m.group(3) is not None:
            return JetPolynomial.variable(int(m.group(3)))
        return JetPolynomial.variable(len(m.group(2)))
    if _NUM_RE.match(tok):
        if "/" in tok:
            num, _, den = tok.partition("/")
            return JetPolynomial.constant(Fraction(Fraction(num), Fraction(den)))
        return JetPolynomial.constant(Fraction(tok))
    raise ValueError(f"cannot parse factor {tok!r}")


def parse_jet_polynomial(text: str) -> JetPolynomial:
    """Parse expressions like ``-u^3`` or ``2*u^2 + 1/2*ux^2``.

    Terms are separated by top-level + and -, factors by ``*``; coefficients
    may be integers, decimals, or rationals like ``1/2``.
    """
    text = text.replace(" ", "")
    if not text:
        raise ValueError("empty expression")
    # split into signed terms
    terms: list[tuple[int, str]] = []
    sign, buf = 1, ""
    for ch in text:
        if ch in "+-" and buf:
            terms.append((sign, buf))
            sign, buf = (1 if ch == "+" else -1), ""
        elif ch in "+-" and not buf:
            sign *= 1 if ch == "+" else -1
        else:
            buf += ch
    if not buf:
        raise ValueError(f"cannot parse {text!r}")
    terms.append((sign, buf))

    result = JetPolynomial.zero()
    for sgn, term in terms:
        poly = JetPolynomial.constant(sgn)
        for factor in term.split("*"):
            poly = poly * _parse_factor(factor)
        result = result + poly
    return result

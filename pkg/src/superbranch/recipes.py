"""Branching recipes and the recipe <-> nonlinearity map.

A recipe is a probability mixture of elementary branchings together with an
intensity k = c * beta^(-m).  ``expand_elementary`` gives the exact series
image of the substituted variable under one branching, ``psi_limit`` extracts
the small-beta limit of the scaled generating function (the nonlinearity the
process solves, with the convention du/dt = 1/2 u_xx - psi), and
``compile_recipe`` inverts the map: given a target nonlinearity it solves for
probabilities, intensity scale and exponent in exact rational arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .jets import JetPolynomial, parse_jet_polynomial
from .series import BetaSeries, series_compose, series_dlog

MAX_POWER = 3  # larger offspring counts fall outside the supported existence form


class UnsupportedKind(ValueError):
    """Elementary branching outside the configured family."""


class DivergentTerm(ValueError):
    """A negative beta-order survives: the recipe has no rescaling limit."""

    def __init__(self, order: int, polynomial: JetPolynomial):
        self.order = order
        self.polynomial = polynomial
        super().__init__(
            f"nonvanishing coefficient {polynomial} at beta^{order}; "
            "no small-beta limit exists"
        )


class Infeasible(ValueError):
    """No recipe realizes the target; names the violated constraint."""

    def __init__(self, constraint: str):
        self.constraint = constraint
        super().__init__(f"infeasible: {constraint}")


class UnderDetermined(ValueError):
    """The constraint system leaves free parameters; carries a representative."""

    def __init__(self, representative: "BranchingRecipe", free_dimension: int):
        self.representative = representative
        self.free_dimension = free_dimension
        super().__init__(
            f"solution family with {free_dimension} free parameter(s); "
            "representative recipe attached"
        )


# -- domain types -----------------------------------------------------


@dataclass(frozen=True)
class ElementaryBranching:
    """One branching action on the substituted variable z.

    kind 'power' with m copies (m = 0 kills), 'reciprocal' (sign flip,
    z -> 1/z), or 'deriv_shift' with direction s = +-1 (z -> e^{s dx log z},
    the particle picking up one derivative order).
    """

    kind: str
    param: int = 0

    @classmethod
    def power(cls, m: int) -> "ElementaryBranching":
        if m < 0:
            raise UnsupportedKind("power needs m >= 0")
        return cls("power", m)

    @classmethod
    def reciprocal(cls) -> "ElementaryBranching":
        return cls("reciprocal")

    @classmethod
    def deriv_shift(cls, s: int) -> "ElementaryBranching":
        if s not in (1, -1):
            raise UnsupportedKind("deriv_shift direction must be +-1")
        return cls("deriv_shift", s)

    @property
    def offspring_count(self) -> int:
        return self.param if self.kind == "power" else 1

    def label(self) -> str:
        if self.kind == "power":
            return f"power{self.param}"
        if self.kind == "reciprocal":
            return "reciprocal"
        return "deriv+" if self.param > 0 else "deriv-"

    @classmethod
    def from_label(cls, text: str) -> "ElementaryBranching":
        text = text.strip().lower()
        if text.startswith("power"):
            return cls.power(int(text[5:]))
        if text == "reciprocal":
            return cls.reciprocal()
        if text in ("deriv+", "derivshift+"):
            return cls.deriv_shift(+1)
        if text in ("deriv-", "derivshift-"):
            return cls.deriv_shift(-1)
        raise UnsupportedKind(f"unknown branching label {text!r}")


@dataclass(frozen=True)
class RescalingKind:
    """Which map links the log-Laplace functional to the PDE solution.

    type1: u = (1 - e^{-b w}) / b.  type2: u = (e^{b w} - e^{-b w}) / (2 b),
    where the 'paper_literal' convention reproduces the printed expansions of
    the source construction (constant term 2; z and 1/z are then not exact
    series reciprocals), while 'reciprocal_consistent' takes z = e^{-asinh(bu)}
    with 1/z its exact reciprocal.  The convention is ignored for type1.
    """

    kind: str = "type1"
    type2_convention: str = "paper_literal"

    def __post_init__(self):
        if self.kind not in ("type1", "type2"):
            raise ValueError(f"unknown rescaling kind {self.kind!r}")
        if self.type2_convention not in ("paper_literal", "reciprocal_consistent"):
            raise ValueError(f"unknown convention {self.type2_convention!r}")

    @classmethod
    def from_label(cls, text: str) -> "RescalingKind":
        text = text.strip().lower()
        if text in ("type1", "type-1", "i"):
            return cls("type1")
        if text in ("type2", "type2-paper", "type-2-paper", "ii"):
            return cls("type2", "paper_literal")
        if text in ("type2-recip", "type2-reciprocal"):
            return cls("type2", "reciprocal_consistent")
        raise ValueError(f"unknown rescaling label {text!r}")

    def label(self) -> str:
        if self.kind == "type1":
            return "type1"
        return "type2-paper" if self.type2_convention == "paper_literal" else "type2-recip"


@dataclass
class BranchingRecipe:
    """Probability mixture of elementary branchings with intensity
    k = intensity_coeff * beta^(-intensity_exponent)."""

    entries: list[tuple[ElementaryBranching, Fraction]]
    intensity_coeff: Fraction = Fraction(1)
    intensity_exponent: int = 0

    def __post_init__(self):
        if not self.entries:
            raise ValueError("a recipe needs at least one entry")
        self.entries = [(e, Fraction(p)) for e, p in self.entries]
        if any(p < 0 for _, p in self.entries):
            raise ValueError("probabilities must be >= 0")
        if sum(p for _, p in self.entries) != 1:
            raise ValueError("probabilities must sum to exactly 1")
        self.intensity_coeff = Fraction(self.intensity_coeff)
        if self.intensity_coeff <= 0:
            raise ValueError("intensity coefficient must be positive")
        if self.intensity_exponent < 0:
            raise ValueError("intensity exponent must be >= 0")

    def intensity(self, beta: float) -> float:
        return float(self.intensity_coeff) * beta ** (-self.intensity_exponent)

    def mean_offspring(self) -> Fraction:
        return sum((p * e.offspring_count for e, p in self.entries), Fraction(0))

    def to_json(self) -> dict:
        return {
            "entries": [
                {"branching": e.label(), "probability": f"{p.numerator}/{p.denominator}"}
                for e, p in self.entries
            ],
            "intensity_coeff": f"{self.intensity_coeff.numerator}/{self.intensity_coeff.denominator}",
            "intensity_exponent": self.intensity_exponent,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BranchingRecipe":
        entries = [
            (ElementaryBranching.from_label(e["branching"]), Fraction(e["probability"]))
            for e in data["entries"]
        ]
        return cls(
            entries,
            Fraction(data.get("intensity_coeff", 1)),
            int(data.get("intensity_exponent", 0)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "BranchingRecipe":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# -- series expansion -------------------------------------------------

_U0 = JetPolynomial.variable(0)


def _base_series(r: RescalingKind, K: int) -> tuple[BetaSeries, BetaSeries]:
    """Series images (z, 1/z) of the substituted variable under the rescaling."""
    if r.kind == "type1":
        z = BetaSeries.from_polys([JetPolynomial.constant(1), -_U0], K)
        return z, series_compose("inverse", z)
    usq = BetaSeries.from_polys([JetPolynomial.zero(), JetPolynomial.zero(), _U0 * _U0], K)
    root = series_compose("sqrt1p", usq)
    bu = BetaSeries.from_polys([JetPolynomial.zero(), _U0], K)
    if r.type2_convention == "paper_literal":
        # printed expansions: constant term 2; not mutual reciprocals
        return root.scale(2) - bu.scale(2), root.scale(2) + bu.scale(2)
    z = root - bu  # e^{-asinh(beta u)}
    return z, series_compose("inverse", z)


def expand_elementary(
    e: ElementaryBranching,
    r: RescalingKind,
    K: int,
    *,
    arg: str = "primal",
    max_power: int = MAX_POWER,
) -> BetaSeries:
    """Series image of the substituted variable under one branching.

    ``arg='reciprocal'`` substitutes 1/z for z (needed by the type2 limit,
    which evaluates the generating function at both arguments).
    """
    if K < 2:
        raise ValueError("need truncation order K >= 2")
    if e.kind == "power" and e.param > max_power:
        raise UnsupportedKind(f"power {e.param} beyond configured maximum {max_power}")
    zp, zm = _base_series(r, K)
    base, other = (zp, zm) if arg == "primal" else (zm, zp)
    if e.kind == "power":
        out = BetaSeries.constant(1, K)
        for _ in range(e.param):
            out = (out * base).truncate(K)
        return out
    if e.kind == "reciprocal":
        return other
    # deriv_shift(s): z -> e^{s dx log z}
    return series_compose("exp", series_dlog(base).scale(e.param))


def _phi_series(
    recipe: BranchingRecipe, r: RescalingKind, K: int, arg: str
) -> BetaSeries:
    out = BetaSeries.constant(0, K)
    for e, p in recipe.entries:
        out = out + expand_elementary(e, r, K, arg=arg).scale(p)
    return out


def psi_series(recipe: BranchingRecipe, r: RescalingKind, K: int) -> BetaSeries:
    """The scaled generating-function defect before taking beta -> 0.

    type1: (k/b) (phi(z) - z); type2: k ((phi(z) - phi(1/z)) / (2 b) - u).
    The intensity shifts the window of orders into negative territory; the
    limit exists when all negative-order coefficients vanish.
    """
    m = recipe.intensity_exponent
    c = recipe.intensity_coeff
    if r.kind == "type1":
        z, _ = _base_series(r, K)
        body = (_phi_series(recipe, r, K, "primal") - z).shift(-(m + 1))
    else:
        diff = _phi_series(recipe, r, K, "primal") - _phi_series(recipe, r, K, "reciprocal")
        u_term = BetaSeries.from_polys([_U0], K)
        body = (diff.scale(Fraction(1, 2)).shift(-1) - u_term).shift(-m)
    return body.scale(c)


def psi_limit(
    recipe: BranchingRecipe, r: RescalingKind, K: int | None = None
) -> JetPolynomial:
    """Limiting nonlinearity psi of the recipe under the rescaling.

    Raises DivergentTerm when any negative beta-order fails to cancel.
    """
    min_K = recipe.intensity_exponent + 2
    if K is None:
        K = min_K
    if K < min_K:
        raise ValueError(f"need K >= m + 2 = {min_K} to see the limit")
    series = psi_series(recipe, r, K)
    for order in range(series.lowest_order, 0):
        coeff = series.coefficient(order)
        if not coeff.is_zero():
            raise DivergentTerm(order, coeff)
    return series.coefficient(0)


# -- exact linear solving for the compiler ----------------------------


def _solve_affine(rows: list[list[Fraction]], rhs: list[Fraction]):
    """Gaussian elimination over Fractions.

    Returns (particular, basis, pivot_free_split) or None when inconsistent;
    basis spans the homogeneous solutions.
    """
    n_rows, n_cols = len(rows), len(rows[0]) if rows else 0
    A = [list(r) + [b] for r, b in zip(rows, rhs)]
    pivots: list[int] = []
    row = 0
    for col in range(n_cols):
        pivot_row = next((i for i in range(row, n_rows) if A[i][col] != 0), None)
        if pivot_row is None:
            continue
        A[row], A[pivot_row] = A[pivot_row], A[row]
        pv = A[row][col]
        A[row] = [v / pv for v in A[row]]
        for i in range(n_rows):
            if i != row and A[i][col] != 0:
                f = A[i][col]
                A[i] = [a - f * b for a, b in zip(A[i], A[row])]
        pivots.append(col)
        row += 1
        if row == n_rows:
            break
    for i in range(row, n_rows):
        if A[i][n_cols] != 0:
            return None  # inconsistent
    free = [c for c in range(n_cols) if c not in pivots]
    particular = [Fraction(0)] * n_cols
    for r_i, col in enumerate(pivots):
        particular[col] = A[r_i][n_cols]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * n_cols
        vec[fc] = Fraction(1)
        for r_i, col in enumerate(pivots):
            vec[col] = -A[r_i][fc]
        basis.append(vec)
    return particular, basis


def _feasible(vec: Sequence[Fraction]) -> str | None:
    """Check probability bounds and positive intensity; returns the violated
    constraint name or None."""
    *probs, t = vec
    for i, p in enumerate(probs):
        if p < 0 or p > 1:
            return f"probability p_{i + 1} = {p} outside [0, 1]"
    if t <= 0:
        return f"intensity scale 1/c = {t} not positive"
    return None


def compile_recipe(
    target: JetPolynomial,
    ansatz: Sequence[ElementaryBranching],
    r: RescalingKind,
    *,
    max_exponent: int = 3,
    max_power: int = MAX_POWER,
) -> BranchingRecipe:
    """Solve for a recipe whose rescaling limit equals the target nonlinearity.

    Unknowns are the probabilities and the reciprocal intensity scale; the
    constraints are normalization, cancellation of every divergent order, and
    matching of the beta^0 coefficient.  The smallest intensity exponent that
    admits probabilities in [0, 1] and a positive scale wins.
    """
    if not ansatz:
        raise ValueError("ansatz must be nonempty")
    if target.constant_term() != 0:
        raise ValueError("target nonlinearity must have no constant term")
    n = len(ansatz)
    last_failure = "no intensity exponent admits a rescaling limit"
    for m in range(max_exponent + 1):
        K = m + 2
        if r.kind == "type1":
            z, _ = _base_series(r, K)
            contribs = [
                (expand_elementary(e, r, K, max_power=max_power)).shift(-1)
                for e in ansatz
            ]
            offset = (-z).shift(-1)
        else:
            contribs = [
                (
                    expand_elementary(e, r, K, max_power=max_power)
                    - expand_elementary(e, r, K, arg="reciprocal", max_power=max_power)
                )
                .scale(Fraction(1, 2))
                .shift(-1)
                for e in ansatz
            ]
            offset = -BetaSeries.from_polys([_U0], K)

        # linear system over (p_1..p_n, t = 1/c)
        rows: list[list[Fraction]] = [[Fraction(1)] * n + [Fraction(0)]]
        rhs: list[Fraction] = [Fraction(1)]  # normalization
        lo = min([offset.lowest_order] + [s.lowest_order for s in contribs])
        for order in range(lo, m + 1):
            monomials = set()
            coeffs = [s.coefficient(order) for s in contribs]
            off = offset.coefficient(order)
            for poly in coeffs + [off]:
                monomials.update(poly.terms)
            if order == m:
                monomials.update(target.terms)
            for mono in sorted(monomials):
                row = [poly.coefficient(mono) for poly in coeffs]
                row.append(-target.coefficient(mono) if order == m else Fraction(0))
                rows.append(row)
                rhs.append(-off.coefficient(mono))
        solved = _solve_affine(rows, rhs)
        if solved is None:
            last_failure = f"no exact solution of the order-<= {m} cancellation system"
            continue
        particular, basis = solved
        if not basis:
            violation = _feasible(particular)
            if violation is not None:
                last_failure = violation
                continue
            return _build_recipe(ansatz, particular, m)
        # underdetermined: look for one bounded representative
        candidates = [Fraction(0), Fraction(1, 2), Fraction(1), Fraction(1, 4), Fraction(3, 4)]
        rep = _search_representative(particular, basis, candidates)
        if rep is None:
            last_failure = "solution family exists but none met the probability bounds"
            continue
        raise UnderDetermined(_build_recipe(ansatz, rep, m), len(basis))
    raise Infeasible(last_failure)


def _search_representative(particular, basis, candidates):
    from itertools import product

    for assignment in product(candidates, repeat=len(basis)):
        vec = list(particular)
        for a, b in zip(assignment, basis):
            vec = [v + a * bv for v, bv in zip(vec, b)]
        if _feasible(vec) is None:
            return vec
    return None


def _build_recipe(ansatz, vec, m) -> BranchingRecipe:
    *probs, t = vec
    return BranchingRecipe(
        [(e, p) for e, p in zip(ansatz, probs)],
        intensity_coeff=1 / t,
        intensity_exponent=m,
    )


# -- existence check --------------------------------------------------


@dataclass
class ExistenceReport:
    """Outcome of the enveloping-process admissibility check."""

    status: str  # admissible | inadmissible | unknown
    reason: str
    envelope: dict[int, Fraction] = field(default_factory=dict)
    derivative_bound: float = float("inf")

    @property
    def admissible(self) -> bool:
        return self.status == "admissible"

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "envelope": {
                str(k): f"{v.numerator}/{v.denominator}" for k, v in self.envelope.items()
            },
            "derivative_bound": self.derivative_bound,
        }


def check_existence(
    recipe: BranchingRecipe, f, window: tuple[float, float] | None = None
) -> ExistenceReport:
    """Sufficient existence condition for the tagged exit process.

    The enveloping process forgets signs and derivative orders (reciprocal and
    deriv_shift act as identity copies); admissibility needs its generating
    function to be at most quadratic and the boundary function's derivative
    sum bound to be finite.  Cubic or larger offspring is reported as unknown:
    it falls outside the supported quadratic form.
    """
    envelope: dict[int, Fraction] = {}
    for e, p in recipe.entries:
        k = e.offspring_count
        envelope[k] = envelope.get(k, Fraction(0)) + p
    if max(envelope) > 2:
        return ExistenceReport(
            "unknown",
            f"enveloping generating function has degree {max(envelope)} > 2, "
            "outside the supported quadratic branching form",
            envelope,
        )
    bound = f.derivative_sum_bound(window)
    if bound == float("inf"):
        return ExistenceReport(
            "inadmissible",
            "boundary derivative sum diverges (geometric ratio >= 1)",
            envelope,
            bound,
        )
    return ExistenceReport(
        "admissible",
        "enveloping branching is at most quadratic and the boundary "
        "derivative sum is finite",
        envelope,
        bound,
    )


# -- shipped recipes --------------------------------------------------


def gradient_quadratic_recipe() -> BranchingRecipe:
    """Derivative-shift mixture: psi = 2u^2 + ux^2 under type1 rescaling."""
    return BranchingRecipe(
        [
            (ElementaryBranching.deriv_shift(+1), Fraction(1, 4)),
            (ElementaryBranching.deriv_shift(-1), Fraction(1, 4)),
            (ElementaryBranching.power(2), Fraction(1, 2)),
        ],
        intensity_coeff=Fraction(4),
        intensity_exponent=1,
    )


def cubic_recipe() -> BranchingRecipe:
    """Sign-flip mixture: psi = -u^3 under type2 (paper-literal) rescaling."""
    return BranchingRecipe(
        [
            (ElementaryBranching.power(2), Fraction(1, 10)),
            (ElementaryBranching.reciprocal(), Fraction(9, 10)),
        ],
        intensity_coeff=Fraction(5, 2),
        intensity_exponent=2,
    )


def identity_recipe() -> BranchingRecipe:
    """Single-copy branching; observationally pure diffusion."""
    return BranchingRecipe([(ElementaryBranching.power(1), Fraction(1))])


def parse_target(text: str) -> JetPolynomial:
    return parse_jet_polynomial(text)

"""Monte Carlo engine: replica simulation, functionals, reduction, estimates."""

import math

import numpy as np
import pytest

from superbranch import (
    Constant,
    Cosine,
    EstimatorAccumulator,
    IllConditionedFit,
    PopulationCapExceeded,
    RescalingKind,
    RunSpec,
    cubic_recipe,
    estimate,
    exit_functional_mckean,
    exit_functional_super,
    extrapolate_beta,
    gradient_quadratic_recipe,
    identity_recipe,
    invert_boundary,
    merge_accumulators,
    run_replica,
)
from superbranch.engine import _simulate_chunk
from superbranch.recipes import BranchingRecipe, ElementaryBranching
from fractions import Fraction

TYPE1 = RescalingKind("type1")
TYPE2 = RescalingKind("type2")


def mckean_spec(**kw):
    base = dict(
        mode="mckean",
        boundary=Constant(0.5),
        x=0.0,
        horizon=1.0,
        replicas=2000,
        master_seed=17,
    )
    base.update(kw)
    return RunSpec(**base)


def super_spec(**kw):
    base = dict(
        mode="super",
        boundary=Constant(0.2),
        x=0.0,
        horizon=0.25,
        replicas=2000,
        master_seed=17,
        recipe=identity_recipe(),
        beta=0.2,
        rescaling=TYPE1,
    )
    base.update(kw)
    return RunSpec(**base)


# -- spec validation --------------------------------------------------


def test_run_spec_validation():
    with pytest.raises(ValueError):
        RunSpec(mode="bogus", boundary=Constant(1.0), x=0.0, horizon=1.0,
                replicas=10, master_seed=1)
    with pytest.raises(ValueError):
        mckean_spec(horizon=-1.0)
    with pytest.raises(ValueError):
        super_spec(beta=None)
    with pytest.raises(ValueError):
        super_spec(tag_convention="sideways")


# -- replica simulation -----------------------------------------------


def test_replica_reproducible():
    spec = super_spec(recipe=cubic_recipe(), beta=0.4, rescaling=TYPE2)
    a = run_replica(spec, 3)
    b = run_replica(spec, 3)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.signs, b.signs)
    assert np.array_equal(a.orders, b.orders)


def test_replica_streams_differ():
    spec = mckean_spec()
    a = run_replica(spec, 0)
    b = run_replica(spec, 1)
    assert len(a) != len(b) or not np.array_equal(a.positions, b.positions)


def test_deriv_orders_only_increase():
    spec = super_spec(recipe=gradient_quadratic_recipe(), beta=0.4, horizon=0.3)
    out = run_replica(spec, 5)
    assert out.max_deriv_order >= int(out.orders.max(initial=0))
    assert (out.orders >= 0).all()


def test_population_cap_single_replica():
    spec = mckean_spec(horizon=12.0, population_cap=8)
    with pytest.raises(PopulationCapExceeded):
        for stream in range(50):
            run_replica(spec, stream)


def test_yule_population_mean():
    """Mean population e^{k (mu - 1) t} for a pure splitting process."""
    spec = mckean_spec(horizon=1.5, replicas=4000)
    rep = estimate(spec)
    target = math.exp(1.5)
    sizes = [len(run_replica(spec, i)) for i in range(500)]
    se = np.std(sizes, ddof=1) / math.sqrt(len(sizes)) * math.sqrt(500 / 4000)
    assert abs(rep.mean_population - target) < 3 * max(se, 0.05)


def test_super_population_mean_cubic():
    beta = 0.4
    recipe = cubic_recipe()
    spec = super_spec(recipe=recipe, beta=beta, rescaling=TYPE2, replicas=4000)
    rep = estimate(spec)
    growth = recipe.intensity(beta) * (float(recipe.mean_offspring()) - 1.0)
    assert rep.mean_population == pytest.approx(math.exp(growth * 0.25), rel=0.05)


# -- exit functionals -------------------------------------------------


def test_mckean_functional_is_product():
    spec = mckean_spec(boundary=Cosine(0.3, 0.5, offset=0.3))
    out = run_replica(spec, 2)
    expected = float(np.prod(0.3 + 0.3 * np.cos(0.5 * out.positions)))
    assert exit_functional_mckean(out, spec.boundary) == pytest.approx(expected)


def test_super_functional_linearity():
    """F[a f + b h] = a F[f] + b F[h] to 1e-12 relative."""

    class Combined:
        def __init__(self, f, h, a, b):
            self.f, self.h, self.a, self.b = f, h, a, b

        def derivative(self, n, x):
            return self.a * self.f.derivative(n, x) + self.b * self.h.derivative(n, x)

    f = Cosine(0.3, 0.5)
    h = Constant(0.4)
    spec = super_spec(recipe=gradient_quadratic_recipe(), beta=0.4)
    out = run_replica(spec, 7)
    lhs = exit_functional_super(out, Combined(f, h, 2.0, -0.5), 0.4)
    rhs = 2.0 * exit_functional_super(out, f, 0.4) - 0.5 * exit_functional_super(
        out, h, 0.4
    )
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_super_functional_sign_and_derivative_pairing():
    spec = super_spec(recipe=cubic_recipe(), beta=0.4, rescaling=TYPE2)
    out = run_replica(spec, 11)
    f = Constant(0.3)
    expected = 0.4 * 0.3 * float(np.sum(out.signs * (out.orders == 0)))
    assert exit_functional_super(out, f, 0.4) == pytest.approx(expected)


def test_identity_sample_bound():
    """Single-particle replicas obey e^{-beta B} <= sample <= e^{beta B}."""
    g = Cosine(0.2, 0.5, offset=0.1)
    beta = 0.3
    spec = super_spec(boundary=g, beta=beta, replicas=512)
    f = invert_boundary(g, beta, TYPE1)
    bound = f.derivative_sum_bound() if hasattr(f, "derivative_sum_bound") else None
    samples, *_ = _simulate_chunk(spec, 0, 512, f)
    cap = math.exp(beta * g.derivative_sum_bound() / (1 - beta * 0.3))
    assert np.all(samples > 0)
    assert np.all(samples <= cap)
    assert np.all(samples >= 1.0 / cap)


# -- accumulators -----------------------------------------------------


def test_accumulator_matches_numpy():
    rng = np.random.default_rng(0)
    xs = rng.normal(size=257)
    acc = EstimatorAccumulator()
    for x in xs:
        acc.update(float(x))
    assert acc.mean == pytest.approx(xs.mean(), rel=1e-12)
    assert acc.variance == pytest.approx(xs.var(ddof=1), rel=1e-12)


def test_merge_four_way_equals_single_pass():
    rng = np.random.default_rng(1)
    xs = rng.exponential(size=1000)
    whole = EstimatorAccumulator.from_samples(xs)
    parts = [EstimatorAccumulator.from_samples(q) for q in np.split(xs, 4)]
    merged = parts[0]
    for p in parts[1:]:
        merged = merge_accumulators(merged, p)
    assert merged.count == whole.count
    assert merged.mean == pytest.approx(whole.mean, rel=1e-12)
    assert merged.m2 == pytest.approx(whole.m2, rel=1e-12)


def test_merge_with_empty():
    a = EstimatorAccumulator.from_samples(np.array([1.0, 2.0]))
    assert merge_accumulators(a, EstimatorAccumulator()).mean == a.mean
    assert merge_accumulators(EstimatorAccumulator(), a).m2 == a.m2


# -- estimates --------------------------------------------------------


def test_mckean_unit_boundary_zero_variance():
    rep = estimate(mckean_spec(boundary=Constant(1.0), replicas=500))
    assert rep.v_hat == 1.0
    assert rep.stderr_u == 0.0


def test_mckean_logistic_closed_form():
    rep = estimate(mckean_spec(replicas=20000))
    assert abs(rep.u_hat - 1.0 / (1.0 + math.e)) < 3 * rep.stderr_u + 1e-3


def test_identity_recipe_invariant_under_intensity():
    """Copy branching is unobservable: estimates agree across intensities."""
    g = Constant(0.2)
    reps = []
    for coeff in (Fraction(1), Fraction(8)):
        recipe = BranchingRecipe(
            [(ElementaryBranching.power(1), Fraction(1))], intensity_coeff=coeff
        )
        reps.append(estimate(super_spec(recipe=recipe, replicas=4000)))
    diff = abs(reps[0].u_hat - reps[1].u_hat)
    assert diff < 3 * math.hypot(reps[0].stderr_u, reps[1].stderr_u) + 1e-4


def test_estimate_deterministic_across_workers():
    spec = super_spec(recipe=gradient_quadratic_recipe(), beta=0.3,
                      boundary=Cosine(0.1, 0.5, offset=0.1), replicas=1200)
    a = estimate(spec, workers=1)
    b = estimate(spec, workers=4)
    assert a.v_hat == b.v_hat
    assert a.u_hat == b.u_hat
    assert a.stderr_u == b.stderr_u
    assert a.mean_population == b.mean_population


def test_existence_gate_blocks_bad_boundary():
    spec = super_spec(boundary=Cosine(1.0, 1.5), recipe=cubic_recipe(),
                      rescaling=TYPE2)
    with pytest.raises(ValueError, match="existence"):
        estimate(spec)


def test_existence_override_warns():
    spec = super_spec(boundary=Cosine(0.05, 1.5), recipe=identity_recipe(),
                      replicas=64, override_existence=True)
    with pytest.warns(UserWarning):
        estimate(spec)


def test_extinction_fraction_with_death():
    recipe = BranchingRecipe(
        [
            (ElementaryBranching.power(0), Fraction(1, 2)),
            (ElementaryBranching.power(2), Fraction(1, 2)),
        ],
        intensity_coeff=Fraction(2),
        intensity_exponent=1,
    )
    rep = estimate(super_spec(recipe=recipe, beta=0.3, replicas=2000))
    assert 0.0 < rep.extinction_fraction < 1.0


def test_bootstrap_ci_brackets_estimate():
    spec = super_spec(boundary=Cosine(0.1, 0.5, offset=0.1), replicas=2000,
                      bootstrap=True, bootstrap_resamples=200)
    rep = estimate(spec)
    lo, hi = rep.bootstrap_ci
    assert lo < rep.u_hat < hi


# -- extrapolation ----------------------------------------------------


def test_extrapolate_recovers_quadratic():
    u0, b, c = 0.25, -0.1, 0.3
    points = [(beta, u0 + b * beta + c * beta**2, 1e-3) for beta in (0.4, 0.2, 0.1)]
    est, fit = extrapolate_beta(points)
    assert est == pytest.approx(u0, abs=1e-9)
    assert fit.dof == 0


def test_extrapolate_linear_with_two_points():
    points = [(0.4, 0.5 + 0.4, 1e-3), (0.2, 0.5 + 0.2, 1e-3)]
    est, _ = extrapolate_beta(points)
    assert est == pytest.approx(0.5, abs=1e-9)


def test_extrapolate_ill_conditioned():
    with pytest.raises(IllConditionedFit):
        extrapolate_beta([(0.2, 0.1, 1e-3)])
    with pytest.raises(IllConditionedFit):
        extrapolate_beta([(0.2, 0.1, 1e-3), (0.2, 0.2, 1e-3)])

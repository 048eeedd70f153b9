"""Monte Carlo estimation of the rescaled solution at a space-time point.

Replicas are independent branching-diffusion trees (see kernel.py); each one
yields an exit ensemble of tagged particles at time 0.  The exponential
functional of the ensemble is averaged over replicas and pushed through the
inverse rescaling map to produce the solution estimate with a delta-method
error bar.  Replica i's randomness depends only on (master_seed, i) and
chunks are reduced in canonical order, so results are bit-identical for any
worker count.
"""

from __future__ import annotations

import math
import os
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernel
from .functions import BoundaryFunction, InvertedBoundary, invert_boundary
from .recipes import BranchingRecipe, RescalingKind, check_existence, identity_recipe

CHUNK_SIZE = 256  # replicas per work item; fixed so chunking is worker-independent
FAILURE_BUDGET = 1e-3
_STACK_SIZE = 1 << 16


class PopulationCapExceeded(RuntimeError):
    def __init__(self, cap: int, failed: int, total: int):
        self.cap = cap
        self.failed = failed
        self.total = total
        super().__init__(
            f"{failed}/{total} replicas exceeded the population cap {cap} "
            f"(budget {FAILURE_BUDGET:.1%})"
        )


class DegenerateEstimate(RuntimeError):
    """v_hat <= 0: the type-2 inverse transform is undefined."""


class IllConditionedFit(RuntimeError):
    """Extrapolation abscissae too close (or too few) for a stable fit."""


# -- domain types -----------------------------------------------------


@dataclass(frozen=True)
class ParticleTag:
    sign: int
    deriv_order: int


@dataclass(frozen=True)
class Particle:
    position: float
    tag: ParticleTag


@dataclass
class ReplicaOutcome:
    """Exit ensemble of one replica (arrays share one index)."""

    positions: np.ndarray
    signs: np.ndarray
    orders: np.ndarray
    event_count: int
    max_deriv_order: int

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(float(x), ParticleTag(int(s), int(n)))
            for x, s, n in zip(self.positions, self.signs, self.orders)
        ]

    def __len__(self):
        return len(self.positions)


# Mapping from deriv_shift direction to the sign multiplier applied to the
# particle tag.  'paper' pairs e^{+dx log z} with -delta' (the convention the
# sign-derivative pairing of the exit evaluation dictates); 'direct' keeps
# the particle sign on deriv_shift(+1).  Shipped symmetric recipes make the
# two observationally identical.
TAG_CONVENTIONS = {
    "paper": {+1: -1, -1: +1},
    "direct": {+1: +1, -1: -1},
}


@dataclass
class RunSpec:
    """Full description of one Monte Carlo estimation run."""

    mode: str  # 'mckean' | 'super'
    boundary: BoundaryFunction
    x: float
    horizon: float
    replicas: int
    master_seed: int
    recipe: BranchingRecipe | None = None
    beta: float | None = None
    rescaling: RescalingKind = field(default_factory=RescalingKind)
    population_cap: int = 10**6
    tag_convention: str = "paper"
    override_existence: bool = False
    bootstrap: bool = False
    bootstrap_resamples: int = 1000

    def __post_init__(self):
        if self.mode not in ("mckean", "super"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.replicas < 1 or self.population_cap < 1:
            raise ValueError("replicas and population cap must be >= 1")
        if self.mode == "super":
            if self.recipe is None or self.beta is None or self.beta <= 0:
                raise ValueError("super mode needs a recipe and beta > 0")
        if self.tag_convention not in TAG_CONVENTIONS:
            raise ValueError(f"unknown tag convention {self.tag_convention!r}")

    @property
    def rate(self) -> float:
        if self.mode == "mckean":
            return 1.0
        return self.recipe.intensity(self.beta)

    def branch_tables(self):
        """(cum_probs, actions, params) arrays for the kernel."""
        if self.mode == "mckean":
            return (
                np.array([1.0]),
                np.array([kernel.ACT_POWER], dtype=np.int64),
                np.array([2], dtype=np.int64),
            )
        tag_mult = TAG_CONVENTIONS[self.tag_convention]
        probs, actions, params = [], [], []
        for e, p in self.recipe.entries:
            probs.append(float(p))
            if e.kind == "power":
                actions.append(kernel.ACT_POWER)
                params.append(e.param)
            elif e.kind == "reciprocal":
                actions.append(kernel.ACT_RECIPROCAL)
                params.append(0)
            else:
                actions.append(kernel.ACT_DERIV_SHIFT)
                params.append(tag_mult[e.param])
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        return cum, np.array(actions, dtype=np.int64), np.array(params, dtype=np.int64)


# -- replica simulation -----------------------------------------------

_buffers = threading.local()


def _get_buffers(cap: int):
    buf = getattr(_buffers, "buf", None)
    if buf is None or buf[0].shape[0] < cap:
        buf = (
            np.empty(cap, dtype=np.float64),
            np.empty(cap, dtype=np.int64),
            np.empty(cap, dtype=np.int64),
            np.empty(_STACK_SIZE, dtype=np.float64),
            np.empty(_STACK_SIZE, dtype=np.int64),
            np.empty(_STACK_SIZE, dtype=np.int64),
            np.empty(_STACK_SIZE, dtype=np.float64),
        )
        _buffers.buf = buf
    return buf


def run_replica(spec: RunSpec, stream: int) -> ReplicaOutcome:
    """Simulate replica `stream` of the given run; raises on cap overflow."""
    cum, actions, params = spec.branch_tables()
    out_pos, out_sign, out_order, spos, ssign, sorder, sbirth = _get_buffers(
        spec.population_cap
    )
    seed = np.uint64(
        kernel.stream_seed(np.uint64(spec.master_seed & (2**64 - 1)), np.uint64(stream))
    )
    n_exit, events, max_order, status = kernel.run_replica_kernel(
        seed,
        spec.rate,
        spec.horizon,
        spec.x,
        cum,
        actions,
        params,
        spec.mode == "mckean",
        spec.population_cap,
        spos,
        ssign,
        sorder,
        sbirth,
        out_pos,
        out_sign,
        out_order,
    )
    if status != kernel.OK:
        raise PopulationCapExceeded(spec.population_cap, 1, 1)
    return ReplicaOutcome(
        out_pos[:n_exit].copy(),
        out_sign[:n_exit].copy(),
        out_order[:n_exit].copy(),
        events,
        max_order,
    )


# -- exit functionals -------------------------------------------------


def exit_functional_super(outcome: ReplicaOutcome, f, beta: float) -> float:
    """beta * sum_i sign_i * (-1)^order_i * f^(order_i)(x_i).

    Each particle carries mass beta; a tag of order n pairs the n-th
    derivative of the boundary datum with an alternating sign.
    """
    total = 0.0
    for x, s, n in zip(outcome.positions, outcome.signs, outcome.orders):
        total += s * (-1) ** int(n) * float(np.asarray(f.derivative(int(n), float(x))))
    return beta * total


def exit_functional_mckean(outcome: ReplicaOutcome, g) -> float:
    """Product of the initial condition over exit positions."""
    if len(outcome) == 0:
        return 1.0
    return float(np.prod(np.asarray(g(outcome.positions), dtype=float)))


def _batch_functionals_super(
    lengths, flat_pos, flat_sign, flat_order, f: InvertedBoundary, beta: float
) -> np.ndarray:
    """Per-replica exit functionals for a whole chunk at once."""
    if flat_pos.size == 0:
        return np.zeros(len(lengths))
    nmax = int(flat_order.max())
    table = f.derivative_table(flat_pos, nmax)
    contrib = (
        beta
        * flat_sign
        * np.where(flat_order % 2 == 0, 1.0, -1.0)
        * table[flat_order, np.arange(flat_pos.size)]
    )
    out = np.zeros(len(lengths))
    np.add.at(out, np.repeat(np.arange(len(lengths)), lengths), contrib)
    return out


# -- accumulator ------------------------------------------------------


@dataclass
class EstimatorAccumulator:
    """Mergeable count/mean/M2 statistics (Welford-Chan)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "EstimatorAccumulator":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n == 0:
            return cls()
        mean = float(samples.mean())
        return cls(n, mean, float(np.sum((samples - mean) ** 2)))

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else 0.0


def merge_accumulators(
    a: EstimatorAccumulator, b: EstimatorAccumulator
) -> EstimatorAccumulator:
    """Pairwise merge; exact for either operand empty."""
    if a.count == 0:
        return EstimatorAccumulator(b.count, b.mean, b.m2)
    if b.count == 0:
        return EstimatorAccumulator(a.count, a.mean, a.m2)
    n = a.count + b.count
    d = b.mean - a.mean
    mean = a.mean + d * b.count / n
    m2 = a.m2 + b.m2 + d * d * a.count * b.count / n
    return EstimatorAccumulator(n, mean, m2)


# -- estimation -------------------------------------------------------


@dataclass
class EstimateReport:
    """Monte Carlo estimate of the rescaled solution at one (x, t, beta)."""

    mode: str
    x: float
    horizon: float
    beta: float | None
    replicas: int
    v_hat: float
    u_hat: float
    stderr_v: float
    stderr_u: float
    mean_population: float
    extinction_fraction: float
    max_deriv_order: int
    master_seed: int
    failed_replicas: int = 0
    bootstrap_ci: tuple[float, float] | None = None

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "x": self.x,
            "horizon": self.horizon,
            "beta": self.beta,
            "replicas": self.replicas,
            "v_hat": self.v_hat,
            "u_hat": self.u_hat,
            "stderr_v": self.stderr_v,
            "stderr_u": self.stderr_u,
            "mean_population": self.mean_population,
            "extinction_fraction": self.extinction_fraction,
            "max_deriv_order": self.max_deriv_order,
            "master_seed": self.master_seed,
            "failed_replicas": self.failed_replicas,
            "bootstrap_ci": list(self.bootstrap_ci) if self.bootstrap_ci else None,
        }


def default_workers() -> int:
    env = os.environ.get("SUPERBRANCH_WORKERS")
    return max(1, int(env)) if env else 1


def _simulate_chunk(spec: RunSpec, start: int, stop: int, f_inv):
    """Simulate replicas [start, stop); returns per-chunk reduction inputs."""
    cum, actions, params = spec.branch_tables()
    out_pos, out_sign, out_order, spos, ssign, sorder, sbirth = _get_buffers(
        spec.population_cap
    )
    master = np.uint64(spec.master_seed & (2**64 - 1))
    mckean = spec.mode == "mckean"

    lengths = []
    pos_parts, sign_parts, order_parts = [], [], []
    events_total = 0
    max_order = 0
    failed = 0
    for i in range(start, stop):
        seed = np.uint64(kernel.stream_seed(master, np.uint64(i)))
        n_exit, events, morder, status = kernel.run_replica_kernel(
            seed,
            spec.rate,
            spec.horizon,
            spec.x,
            cum,
            actions,
            params,
            mckean,
            spec.population_cap,
            spos,
            ssign,
            sorder,
            sbirth,
            out_pos,
            out_sign,
            out_order,
        )
        if status != kernel.OK:
            failed += 1
            continue
        lengths.append(n_exit)
        pos_parts.append(out_pos[:n_exit].copy())
        sign_parts.append(out_sign[:n_exit].copy())
        order_parts.append(out_order[:n_exit].copy())
        events_total += events
        max_order = max(max_order, morder)

    lengths = np.array(lengths, dtype=np.int64)
    flat_pos = np.concatenate(pos_parts) if pos_parts else np.empty(0)
    flat_sign = np.concatenate(sign_parts) if sign_parts else np.empty(0, np.int64)
    flat_order = np.concatenate(order_parts) if order_parts else np.empty(0, np.int64)

    if mckean:
        g = spec.boundary
        vals = np.asarray(g(flat_pos), dtype=float) if flat_pos.size else np.empty(0)
        samples = np.ones(len(lengths))
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        for j in range(len(lengths)):
            if lengths[j]:
                samples[j] = np.prod(vals[offsets[j] : offsets[j + 1]])
    else:
        F = _batch_functionals_super(
            lengths, flat_pos, flat_sign, flat_order, f_inv, spec.beta
        )
        samples = np.exp(-F)

    extinct = int(np.sum(lengths == 0))
    populations = lengths.astype(float)
    return samples, populations, extinct, max_order, failed


def estimate(spec: RunSpec, workers: int | None = None) -> EstimateReport:
    """Run all replicas, reduce in canonical chunk order, rescale the mean."""
    workers = workers or default_workers()
    f_inv = None
    if spec.mode == "super":
        window = (
            spec.x - 8.0 * math.sqrt(spec.horizon),
            spec.x + 8.0 * math.sqrt(spec.horizon),
        )
        report = check_existence(spec.recipe, spec.boundary, window)
        if not report.admissible:
            if spec.override_existence:
                warnings.warn(f"existence check overridden: {report.reason}")
            else:
                raise ValueError(f"existence check failed: {report.reason}")
        f_inv = invert_boundary(spec.boundary, spec.beta, spec.rescaling)
        # validate the inversion precondition across the window now
        f_inv(np.linspace(window[0], window[1], 64))

    n = spec.replicas
    chunks = [(s, min(s + CHUNK_SIZE, n)) for s in range(0, n, CHUNK_SIZE)]
    if workers == 1:
        results = [_simulate_chunk(spec, a, b, f_inv) for a, b in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_chunk, spec, a, b, f_inv) for a, b in chunks]
            results = [f.result() for f in futures]  # canonical chunk order

    acc = EstimatorAccumulator()
    samples_parts = []
    pop_total = 0.0
    extinct = 0
    max_order = 0
    failed = 0
    count = 0
    for samples, populations, ext, morder, fail in results:
        acc = merge_accumulators(acc, EstimatorAccumulator.from_samples(samples))
        samples_parts.append(samples)
        pop_total += float(populations.sum())
        extinct += ext
        max_order = max(max_order, morder)
        failed += fail
        count += len(samples)

    if failed > FAILURE_BUDGET * n:
        raise PopulationCapExceeded(spec.population_cap, failed, n)

    v_hat = acc.mean
    stderr_v = acc.stderr
    if spec.mode == "mckean":
        u_hat, stderr_u = v_hat, stderr_v
        beta = None
    else:
        beta = spec.beta
        if spec.rescaling.kind == "type1":
            u_hat = (1.0 - v_hat) / beta
            stderr_u = stderr_v / beta
        else:
            if v_hat <= 0:
                raise DegenerateEstimate(f"v_hat = {v_hat} <= 0")
            u_hat = (1.0 / v_hat - v_hat) / (2.0 * beta)
            stderr_u = (1.0 / v_hat**2 + 1.0) / (2.0 * beta) * stderr_v

    bootstrap_ci = None
    if spec.bootstrap:
        bootstrap_ci = _bootstrap_ci(
            np.concatenate(samples_parts), spec, spec.bootstrap_resamples
        )

    return EstimateReport(
        mode=spec.mode,
        x=spec.x,
        horizon=spec.horizon,
        beta=beta,
        replicas=count,
        v_hat=v_hat,
        u_hat=u_hat,
        stderr_v=stderr_v,
        stderr_u=stderr_u,
        mean_population=pop_total / max(count, 1),
        extinction_fraction=extinct / max(count, 1),
        max_deriv_order=max_order,
        master_seed=spec.master_seed,
        failed_replicas=failed,
        bootstrap_ci=bootstrap_ci,
    )


def _transform_u(v: np.ndarray, spec: RunSpec) -> np.ndarray:
    if spec.mode == "mckean":
        return v
    if spec.rescaling.kind == "type1":
        return (1.0 - v) / spec.beta
    return (1.0 / v - v) / (2.0 * spec.beta)


def _bootstrap_ci(samples: np.ndarray, spec: RunSpec, resamples: int):
    """Percentile CI of u_hat; resampling stream derived from the master seed."""
    rng = np.random.Generator(np.random.Philox(key=spec.master_seed ^ 0xB007))
    n = samples.size
    means = samples[rng.integers(0, n, size=(resamples, n))].mean(axis=1)
    u = _transform_u(means, spec)
    return (float(np.quantile(u, 0.025)), float(np.quantile(u, 0.975)))


# -- beta extrapolation -----------------------------------------------


@dataclass
class FitReport:
    coefficients: list[float]
    stderrs: list[float]
    chi2: float
    dof: int

    def to_json(self) -> dict:
        return {
            "coefficients": self.coefficients,
            "stderrs": self.stderrs,
            "chi2": self.chi2,
            "dof": self.dof,
        }


def extrapolate_beta(points: Sequence[tuple[float, float, float]]):
    """Weighted LS fit u(beta) = u0 + b beta (+ c beta^2 with >= 3 points).

    Returns (u0, FitReport); u0's uncertainty comes from the fit covariance.
    """
    if len(points) < 2:
        raise IllConditionedFit("need at least two distinct beta values")
    betas = np.array([p[0] for p in points], dtype=float)
    us = np.array([p[1] for p in points], dtype=float)
    ses = np.array([p[2] for p in points], dtype=float)
    if len(set(betas.tolist())) < 2:
        raise IllConditionedFit("beta values are not distinct")
    degree = 2 if len(points) >= 3 else 1
    X = np.vander(betas, degree + 1, increasing=True)
    w = 1.0 / np.where(ses > 0, ses, np.min(ses[ses > 0]) if np.any(ses > 0) else 1.0)
    Xw = X * w[:, None]
    if np.linalg.cond(Xw) > 1e8:
        raise IllConditionedFit("beta values too close for a stable fit")
    coef, *_ = np.linalg.lstsq(Xw, us * w, rcond=None)
    cov = np.linalg.inv(Xw.T @ Xw)
    resid = (us - X @ coef) * w
    chi2 = float(resid @ resid)
    report = FitReport(
        coefficients=coef.tolist(),
        stderrs=np.sqrt(np.diag(cov)).tolist(),
        chi2=chi2,
        dof=len(points) - (degree + 1),
    )
    return (float(coef[0]), report)


def identity_spec(**kwargs) -> RunSpec:
    """Convenience: a super-mode run whose branching is unobservable."""
    kwargs.setdefault("recipe", identity_recipe())
    return RunSpec(mode="super", **kwargs)

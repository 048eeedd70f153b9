"""Deterministic reference solutions for the semilinear equations.

Method-of-lines on a periodic grid: second-order central differences in
space, classic fourth-order Runge-Kutta in time, explicit stability bound
dt <= 0.4 h^2 for the 1/2 u_xx diffusion.  Spatially homogeneous cases go
through an adaptive high-order ODE integrator instead.  A Gauss-Hermite
heat-kernel quadrature provides the pure-diffusion control.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .jets import JetPolynomial

BLOWUP_THRESHOLD = 1e6
DT_STABILITY_FACTOR = 0.4


class BlowUpDetected(RuntimeError):
    def __init__(self, t: float):
        self.t = t
        super().__init__(f"solution magnitude exceeded {BLOWUP_THRESHOLD:g} near t = {t:.6g}")


class StabilityViolation(ValueError):
    """Explicit time step too large for the diffusion stability bound."""


class GridMismatch(ValueError):
    """Operands live on different grids or checkpoint sets."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid of M points on [0, L)."""

    period: float
    points: int

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.points < 16:
            raise ValueError("need at least 16 grid points")

    @property
    def h(self) -> float:
        return self.period / self.points

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.points) * self.h - self.period / 2.0


@dataclass
class SemilinearSpec:
    """du/dt = 1/2 u_xx + sum_k coeff_k u^a_k (u_x)^b_k."""

    terms: list[tuple[float, int, int]] = field(default_factory=list)

    @classmethod
    def heat(cls) -> "SemilinearSpec":
        return cls([])

    @classmethod
    def kpp(cls) -> "SemilinearSpec":
        return cls([(1.0, 2, 0), (-1.0, 1, 0)])

    @classmethod
    def cubic_growth(cls) -> "SemilinearSpec":
        return cls([(1.0, 3, 0)])

    @classmethod
    def gradient_quadratic(cls) -> "SemilinearSpec":
        return cls([(-2.0, 2, 0), (-1.0, 0, 2)])

    @classmethod
    def from_nonlinearity(cls, poly: JetPolynomial) -> "SemilinearSpec":
        """Nonlinearity N(u, u_x) added to the heat part."""
        if poly.max_jet_order > 1:
            raise ValueError("oracle supports jet order <= 1 (u and u_x)")
        terms = []
        for exps, coeff in sorted(poly.terms.items()):
            a = exps[0] if len(exps) > 0 else 0
            b = exps[1] if len(exps) > 1 else 0
            terms.append((float(coeff), a, b))
        return cls(terms)

    @classmethod
    def from_psi(cls, psi: JetPolynomial) -> "SemilinearSpec":
        """Nonlinearity from a branching mechanism: N = -psi."""
        return cls.from_nonlinearity(-psi)

    def nonlinearity(self, u: np.ndarray, ux: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        for coeff, a, b in self.terms:
            out += coeff * u**a * ux**b
        return out

    def to_json(self) -> dict:
        return {"terms": [[c, a, b] for c, a, b in self.terms]}


@dataclass
class FieldSolution:
    grid: Grid1D
    times: list[float]
    values: list[np.ndarray]

    def at(self, t: float) -> np.ndarray:
        for tt, v in zip(self.times, self.values):
            if abs(tt - t) < 1e-12:
                return v
        raise KeyError(f"no checkpoint at t = {t}")

    def interp(self, t: float, x: float) -> float:
        """Linear interpolation in x at a stored checkpoint time."""
        v = self.at(t)
        xs = self.grid.x
        xw = (x - xs[0]) % self.grid.period + xs[0]
        return float(np.interp(xw, np.append(xs, xs[0] + self.grid.period), np.append(v, v[0])))


def _rhs(u: np.ndarray, h: float, spec: SemilinearSpec) -> np.ndarray:
    uxx = (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / (h * h)
    ux = (np.roll(u, -1) - np.roll(u, 1)) / (2.0 * h)
    return 0.5 * uxx + spec.nonlinearity(u, ux)


def solve_semilinear(
    spec: SemilinearSpec,
    u0,
    T: float,
    grid: Grid1D,
    dt: float,
    checkpoints: list[float] | None = None,
) -> FieldSolution:
    """RK4 time stepping to the requested checkpoint times.

    ``u0`` may be a BoundaryFunction, a callable, or an array on the grid.
    """
    h = grid.h
    if dt > DT_STABILITY_FACTOR * h * h + 1e-15:
        raise StabilityViolation(
            f"dt = {dt:g} exceeds the stability bound {DT_STABILITY_FACTOR} h^2 = "
            f"{DT_STABILITY_FACTOR * h * h:g}"
        )
    if checkpoints is None:
        checkpoints = [T]
    checkpoints = sorted(checkpoints)
    if checkpoints[-1] > T + 1e-12:
        raise ValueError("checkpoint beyond final time")

    if isinstance(u0, np.ndarray):
        u = u0.astype(float).copy()
    else:
        u = np.asarray(u0(grid.x), dtype=float)
    if u.shape != (grid.points,):
        raise GridMismatch("initial data does not match the grid")

    times, values = [], []
    t = 0.0
    for target in checkpoints:
        span = target - t
        if span > 0:
            nsteps = max(1, int(np.ceil(span / dt - 1e-12)))
            step = span / nsteps
            for _ in range(nsteps):
                k1 = _rhs(u, h, spec)
                k2 = _rhs(u + 0.5 * step * k1, h, spec)
                k3 = _rhs(u + 0.5 * step * k2, h, spec)
                k4 = _rhs(u + step * k3, h, spec)
                u = u + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                t += step
                m = float(np.max(np.abs(u)))
                if not np.isfinite(m) or m > BLOWUP_THRESHOLD:
                    raise BlowUpDetected(t)
        times.append(target)
        values.append(u.copy())
        t = target
    return FieldSolution(grid, times, values)


def solve_homogeneous_ode(spec: SemilinearSpec, u0: float, T: float) -> float:
    """Spatially constant reduction u' = N(u, 0), integrated adaptively."""

    def rhs(_t, y):
        return [spec.nonlinearity(np.array([y[0]]), np.array([0.0]))[0]]

    def blow_up(_t, y):
        return abs(y[0]) - BLOWUP_THRESHOLD

    blow_up.terminal = True
    sol = solve_ivp(
        rhs,
        (0.0, T),
        [float(u0)],
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
        events=blow_up,
        dense_output=False,
    )
    if sol.t_events[0].size > 0:
        raise BlowUpDetected(float(sol.t_events[0][0]))
    if not sol.success:
        raise RuntimeError(f"ODE integration failed: {sol.message}")
    return float(sol.y[0, -1])


def error_norms(a: FieldSolution, b: FieldSolution) -> tuple[float, float]:
    """(L-infinity, L2) discrete norms of a - b, maximized over checkpoints."""
    if a.grid != b.grid:
        raise GridMismatch("solutions live on different grids")
    if len(a.times) != len(b.times) or any(
        abs(s - t) > 1e-12 for s, t in zip(a.times, b.times)
    ):
        raise GridMismatch("solutions have different checkpoint times")
    linf = 0.0
    l2 = 0.0
    for va, vb in zip(a.values, b.values):
        diff = va - vb
        linf = max(linf, float(np.max(np.abs(diff))))
        l2 = max(l2, float(np.sqrt(np.mean(diff**2))))
    return linf, l2


def heat_kernel_expectation(func, x: float, t: float, nodes: int = 64) -> float:
    """E[func(x + W_t)] by Gauss-Hermite quadrature (W_t ~ N(0, t))."""
    z, w = np.polynomial.hermite.hermgauss(nodes)
    pts = x + np.sqrt(2.0 * t) * z
    return float(np.sum(w * np.asarray(func(pts), dtype=float)) / np.sqrt(np.pi))

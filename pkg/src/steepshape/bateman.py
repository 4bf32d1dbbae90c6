"""A two-species depletion ODE used as a steep-solution benchmark.

The system is du/dt = v * sigma * eta * u, deta/dt = v * sigma * eta * u:
both species share the right-hand side, so u - eta is conserved.  With the
default sigma = -0.45, v = 1 and positive initial values the solution
decays smoothly, but its steepness varies sharply across initial
conditions, which is what makes the benchmark interesting for
sensitivity-guided sampling.  The learning task maps (u0, eta0, t) to
(u(t), eta(t)) over a box domain.

Writing c = u0 - eta0 and s = c * v * sigma, the exact solution is

    u(t) = c / (1 - (eta0 / u0) * exp(s * t)),    eta(t) = u(t) - c,

with the logistic limit u(t) = u0 / (1 - v * sigma * u0 * t) when c = 0.
The explicit Euler path integrates u and carries c unchanged, so the
conservation law cannot drift no matter the step count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import DomainBox, LabeledDataset, uniform_sample
from .derivatives import OracleFn

# branch to the logistic limit below this |u0 - eta0|: the generic formula
# loses ~|c|^-1 digits to cancellation there
_DEGENERATE_C = 1e-9


class SingularityError(ArithmeticError):
    """The exact solution has a pole inside the requested time interval."""


def _default_domain() -> DomainBox:
    return DomainBox([0.1, 0.1, 0.0], [1.0, 1.0, 10.0])


@dataclass(frozen=True)
class BatemanParams:
    """Reaction rate sigma, speed v, and the (u0, eta0, t) sampling box."""

    sigma: float = -0.45
    v: float = 1.0
    domain: DomainBox = field(default_factory=_default_domain)

    def __post_init__(self):
        if self.domain.dim != 3:
            raise ValueError("domain must cover (u0, eta0, t)")
        if self.domain.lower[2] < 0:
            raise ValueError("time axis must start at t >= 0")


def euler_solve(params: BatemanParams, u0, eta0, t, dt: float = 1e-3):
    """Explicit Euler from 0 to t; the last step is shortened to land on t.

    Inputs broadcast; returns (u, eta) with the input's broadcast shape.
    eta is reported as u minus the conserved initial difference, so
    u - eta stays constant to the last ulp at every step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u0b, eta0b, tb = np.broadcast_arrays(
        np.asarray(u0, dtype=float), np.asarray(eta0, dtype=float), np.asarray(t, dtype=float)
    )
    if np.any(tb < 0):
        raise ValueError("t must be non-negative")
    shape = u0b.shape
    u = u0b.ravel().copy()
    c = u0b.ravel() - eta0b.ravel()
    tt = tb.ravel()
    rate = params.v * params.sigma
    n_steps = int(np.ceil(tt.max() / dt)) if tt.size and tt.max() > 0 else 0
    for k in range(n_steps):
        # step sizes derived from k*dt, not accumulated, so the walk ends on t
        step = np.clip(tt - k * dt, 0.0, dt)
        u = u + step * (rate * (u - c) * u)
    if not np.all(np.isfinite(u)):
        raise ArithmeticError("Euler integration produced non-finite values")
    u = u.reshape(shape)
    eta = u - c.reshape(shape)
    if shape == ():
        return float(u), float(eta)
    return u, eta


def analytic_solve(params: BatemanParams, u0, eta0, t):
    """Closed-form solution; raises SingularityError on a pole in [0, t].

    Inputs broadcast; returns (u, eta).  Validated against euler_solve in
    the test suite (first-order convergence), so the two paths can check
    each other.
    """
    u0b, eta0b, tb = np.broadcast_arrays(
        np.asarray(u0, dtype=float), np.asarray(eta0, dtype=float), np.asarray(t, dtype=float)
    )
    if np.any(tb < 0):
        raise ValueError("t must be non-negative")
    shape = u0b.shape
    u0f = u0b.ravel()
    eta0f = eta0b.ravel()
    tf = tb.ravel()
    c = u0f - eta0f
    rate = params.v * params.sigma
    u = np.empty_like(u0f)

    degenerate = np.abs(c) <= _DEGENERATE_C * np.maximum(np.abs(u0f), np.abs(eta0f))
    degenerate |= c == 0.0
    frozen = u0f == 0.0  # u' = 0 there; the generic formula would divide by u0

    if np.any(degenerate & ~frozen):
        mask = degenerate & ~frozen
        denom = 1.0 - rate * u0f[mask] * tf[mask]
        if np.any(denom <= 0):
            raise SingularityError("logistic pole inside [0, t]")
        u[mask] = u0f[mask] / denom

    generic = ~degenerate & ~frozen
    if np.any(generic):
        ratio = eta0f[generic] / u0f[generic]
        growth = ratio * np.exp(c[generic] * rate * tf[generic])
        denom = 1.0 - growth
        denom0 = 1.0 - ratio
        # exp is monotone in t, so a pole in (0, t] shows up as a zero or a
        # sign change of the denominator relative to t = 0
        if np.any(denom == 0) or np.any(np.sign(denom) != np.sign(denom0)):
            raise SingularityError("denominator crosses zero inside [0, t]")
        u[generic] = c[generic] / denom

    u[frozen] = 0.0
    eta = u - c
    u = u.reshape(shape)
    eta = eta.reshape(shape)
    if shape == ():
        return float(u), float(eta)
    return u, eta


def bateman_oracle(params: BatemanParams, solver: str = "analytic", dt: float = 1e-3) -> OracleFn:
    """(u0, eta0, t) -> (u, eta) as an oracle for sensitivity scoring."""
    if solver not in ("analytic", "euler"):
        raise ValueError("solver must be 'analytic' or 'euler'")

    def fn(pts):
        if solver == "analytic":
            u, eta = analytic_solve(params, pts[:, 0], pts[:, 1], pts[:, 2])
        else:
            u, eta = euler_solve(params, pts[:, 0], pts[:, 1], pts[:, 2], dt)
        return np.column_stack([u, eta])

    return OracleFn(fn, None, f"bateman-{solver}")


def generate_dataset(
    params: BatemanParams, n: int, seed: int, solver: str = "analytic", dt: float = 1e-3
) -> LabeledDataset:
    """n uniform (u0, eta0, t) samples labelled with (u(t), eta(t))."""
    points = uniform_sample(params.domain, n, seed)
    labels = bateman_oracle(params, solver, dt).evaluate(points)
    return LabeledDataset(points, labels, params.domain)


def aeg_ael(g_baseline: np.ndarray, g_variant: np.ndarray):
    """Split the pointwise error change into average gain and average loss.

    Both inputs are error maps on the same grid.  With z = g_baseline -
    g_variant, returns (mean of z where z > 0 else 0, |mean of z where
    z < 0 else 0|): the first is the error the variant removes on cells it
    improves, the second the error it adds on cells it worsens, both
    averaged over every cell.
    """
    gb = np.asarray(g_baseline, dtype=float)
    gv = np.asarray(g_variant, dtype=float)
    if gb.shape != gv.shape:
        raise ValueError("error maps must share a shape")
    if gb.size == 0:
        raise ValueError("error maps must be non-empty")
    z = (gb - gv).ravel()
    gain = float(np.mean(np.where(z > 0, z, 0.0)))
    loss = float(abs(np.mean(np.where(z < 0, z, 0.0))))
    return gain, loss

"""Derivative magnitudes of a labelling function, summarised per point.

The central quantity is a weighted sum of squared partial derivatives up to
order n: with a common step epsilon per input dimension,

    sens(x) = sum over multi-indices k, 1 <= |k| <= n, of
              epsilon^|k| * (d^k f(x))^2 / k!

summed across output components.  For n = 2 this collapses to the closed
form epsilon * ||grad f||^2 + 0.5 * epsilon^2 * ||hess f||_F^2, and it
approximates Var f(x + e), e ~ N(0, epsilon I), to third order in epsilon.
Partials come from an analytic oracle when available, otherwise from central
finite differences (orders 1 and 2 only).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import DomainBox

DEFAULT_FD_STEP = 1e-4


class UnsupportedOrderError(ValueError):
    """Raised for derivative orders the finite-difference stencils cannot reach."""


@dataclass(frozen=True)
class MultiIndex:
    """Non-negative derivative order per input dimension."""

    k: tuple

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        object.__setattr__(self, "k", k)
        if len(k) < 1 or any(v < 0 for v in k):
            raise ValueError("a multi-index needs one non-negative order per dimension")

    @property
    def order(self) -> int:
        return sum(self.k)

    @property
    def factorial(self) -> int:
        out = 1
        for v in self.k:
            out *= math.factorial(v)
        return out

    @property
    def dims(self) -> tuple:
        """Dimensions with non-zero order."""
        return tuple(d for d, v in enumerate(self.k) if v > 0)


def enumerate_multi_indices(n_inputs: int, n: int) -> list:
    """All multi-indices with 1 <= |k| <= n, graded lexicographic order.

    The count is C(n_inputs + n, n) - 1.
    """
    if n_inputs < 1 or n < 1:
        raise ValueError("need n_inputs >= 1 and n >= 1")
    out = []
    for order in range(1, n + 1):
        grade = [
            k
            for k in itertools.product(range(order + 1), repeat=n_inputs)
            if sum(k) == order
        ]
        out.extend(MultiIndex(k) for k in sorted(grade))
    return out


@dataclass(frozen=True)
class OracleFn:
    """Vectorised labelling function with an optional analytic-partial path.

    fn maps an (N, n_i) point matrix to (N, n_o) labels (a 1-D return is
    treated as a single output column).  partial, when given, maps
    (points, MultiIndex) to the same shape and may raise
    UnsupportedOrderError for orders it does not know.
    """

    fn: Callable
    partial: Callable | None = None
    name: str = "oracle"

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.asarray(self.fn(pts), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        return out


def _fd_steps(n_inputs: int, fd_step, domain: DomainBox | None) -> np.ndarray:
    """Per-dimension step: explicit value wins, else DEFAULT_FD_STEP scaled by width."""
    if fd_step is not None:
        return np.full(n_inputs, float(fd_step))
    if domain is not None:
        return DEFAULT_FD_STEP * domain.width
    return np.full(n_inputs, DEFAULT_FD_STEP)


def partial_derivative(
    f: OracleFn,
    points: np.ndarray,
    k: MultiIndex,
    fd_step=None,
    domain: DomainBox | None = None,
    _base: np.ndarray | None = None,
) -> np.ndarray:
    """d^k f at each point, shape (N, n_o).

    Analytic when the oracle provides it, otherwise second-order central
    stencils for |k| in {1, 2}; higher orders without an analytic path raise
    UnsupportedOrderError.  _base caches f(points) for the pure second-order
    stencil.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if k.order == 0:
        return f.evaluate(pts)
    if f.partial is not None:
        out = np.asarray(f.partial(pts, k), dtype=float)
        return out[:, None] if out.ndim == 1 else out
    if k.order > 2:
        raise UnsupportedOrderError(
            f"finite differences stop at order 2; got |k| = {k.order}. "
            "Provide an analytic partial on the oracle for higher orders."
        )
    h = _fd_steps(pts.shape[1], fd_step, domain)
    if k.order == 1:
        (d,) = k.dims
        e = np.zeros(pts.shape[1])
        e[d] = h[d]
        return (f.evaluate(pts + e) - f.evaluate(pts - e)) / (2.0 * h[d])
    if len(k.dims) == 1:
        (d,) = k.dims
        e = np.zeros(pts.shape[1])
        e[d] = h[d]
        base = f.evaluate(pts) if _base is None else _base
        return (f.evaluate(pts + e) - 2.0 * base + f.evaluate(pts - e)) / h[d] ** 2
    d, e_dim = k.dims
    ed = np.zeros(pts.shape[1])
    ed[d] = h[d]
    ee = np.zeros(pts.shape[1])
    ee[e_dim] = h[e_dim]
    return (
        f.evaluate(pts + ed + ee)
        - f.evaluate(pts + ed - ee)
        - f.evaluate(pts - ed + ee)
        + f.evaluate(pts - ed - ee)
    ) / (4.0 * h[d] * h[e_dim])


@dataclass(frozen=True)
class SensitivityConfig:
    """Order n, per-dimension step epsilon, and the finite-difference step.

    fd_step None means DEFAULT_FD_STEP, scaled by the domain width when a
    domain is supplied to taylor_sensitivity.
    """

    n: int = 2
    epsilon: float = 1e-3
    fd_step: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def taylor_sensitivity(
    f: OracleFn,
    points: np.ndarray,
    cfg: SensitivityConfig,
    domain: DomainBox | None = None,
) -> np.ndarray:
    """sens(x) per point, summed over output components.  Non-negative."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    base = None if f.partial is not None else f.evaluate(pts)
    total = np.zeros(pts.shape[0])
    for k in enumerate_multi_indices(pts.shape[1], cfg.n):
        dk = partial_derivative(f, pts, k, cfg.fd_step, domain, _base=base)
        total += cfg.epsilon**k.order / k.factorial * np.sum(dk * dk, axis=1)
    return total


def sensitivity_closed_form_order2(
    gradient: np.ndarray, hessian: np.ndarray, epsilon: float
) -> float:
    """epsilon * ||g||^2 + 0.5 * epsilon^2 * ||H||_F^2 for one output."""
    g = np.asarray(gradient, dtype=float).ravel()
    h = np.asarray(hessian, dtype=float)
    return float(epsilon * np.sum(g * g) + 0.5 * epsilon**2 * np.sum(h * h))


def gb_bound_1d(
    f: OracleFn,
    xs: np.ndarray,
    lipschitz: float,
    domain: DomainBox,
    fd_step=None,
) -> float:
    """Derivative-weighted cell-volume bound over a 1-D point set.

    Cells are the Voronoi segments of xs (midpoint cuts, closed by the
    domain edges), with lengths normalised by the domain width so cell
    masses sum to 1.  Returns sum over cells of
    (|f'(x_i)| + lipschitz)^2 * mass_i^3 / 3.
    """
    if domain.dim != 1:
        raise ValueError("gb_bound_1d only supports 1-D domains")
    if lipschitz < 0:
        raise ValueError("lipschitz must be non-negative")
    x = np.asarray(xs, dtype=float).ravel()
    if x.size < 1:
        raise ValueError("need at least one point")
    if np.any(np.diff(x) <= 0):
        raise ValueError("xs must be strictly increasing")
    if not np.all(domain.contains(x[:, None])):
        raise ValueError("every point must lie inside the domain")
    lo, hi = domain.lower[0], domain.upper[0]
    cuts = np.concatenate([[lo], (x[:-1] + x[1:]) / 2.0, [hi]])
    mass = np.diff(cuts) / (hi - lo)
    slope = partial_derivative(f, x[:, None], MultiIndex((1,)), fd_step, domain)
    slope = np.abs(slope).sum(axis=1)
    return float(np.sum((slope + lipschitz) ** 2 * mass**3) / 3.0)


# ---------------------------------------------------------------------------
# Built-in analytic oracles.


def runge_oracle() -> OracleFn:
    """f(x) = 1 / (1 + 25 x^2), the classic steep bump on [-1, 1]."""

    def fn(pts):
        x = pts[:, 0]
        return 1.0 / (1.0 + 25.0 * x * x)

    def partial(pts, k):
        x = pts[:, 0]
        q = 1.0 + 25.0 * x * x
        if k.order == 1:
            return -50.0 * x / q**2
        if k.order == 2:
            return (3750.0 * x * x - 50.0) / q**3
        raise UnsupportedOrderError(f"runge oracle stops at order 2; got {k.order}")

    return OracleFn(fn, partial, "runge")


def tanh_oracle(a: float = 10.0) -> OracleFn:
    """f(x) = tanh(a x); steepness grows with a."""

    def fn(pts):
        return np.tanh(a * pts[:, 0])

    def partial(pts, k):
        t = np.tanh(a * pts[:, 0])
        if k.order == 1:
            return a * (1.0 - t * t)
        if k.order == 2:
            return -2.0 * a * a * t * (1.0 - t * t)
        raise UnsupportedOrderError(f"tanh oracle stops at order 2; got {k.order}")

    return OracleFn(fn, partial, "tanh")


def cubic_oracle() -> OracleFn:
    """f(x) = x^3, with analytic partials of every order."""

    def fn(pts):
        return pts[:, 0] ** 3

    def partial(pts, k):
        x = pts[:, 0]
        m = k.order
        if m == 1:
            return 3.0 * x * x
        if m == 2:
            return 6.0 * x
        if m == 3:
            return np.full(x.shape, 6.0)
        return np.zeros(x.shape)

    return OracleFn(fn, partial, "cubic")


def quadratic_oracle(c: float, g: np.ndarray, h: np.ndarray) -> OracleFn:
    """f(x) = c + g.x + 0.5 x'Hx with exact partials (H symmetrised)."""
    g = np.asarray(g, dtype=float).ravel()
    h = np.asarray(h, dtype=float)
    h = (h + h.T) / 2.0

    def fn(pts):
        return c + pts @ g + 0.5 * np.sum(pts * (pts @ h), axis=1)

    def partial(pts, k):
        if k.order == 1:
            (d,) = k.dims
            return g[d] + pts @ h[d]
        if k.order == 2:
            if len(k.dims) == 1:
                (d,) = k.dims
                return np.full(pts.shape[0], h[d, d])
            d, e = k.dims
            return np.full(pts.shape[0], h[d, e])
        return np.zeros(pts.shape[0])

    return OracleFn(fn, partial, "quadratic")


def polynomial_oracle(terms: dict) -> OracleFn:
    """Multivariate polynomial sum of coef * prod_d x_d^e_d, exact partials.

    terms maps exponent tuples to coefficients, e.g. {(2, 1): 3.0} for
    3 x0^2 x1.  Partials of every order are exact (falling factorials), so
    this is the workhorse for cross-checking the finite-difference path.
    """
    terms = {tuple(int(e) for e in exp): float(c) for exp, c in terms.items()}
    if not terms:
        raise ValueError("need at least one term")
    if len({len(exp) for exp in terms}) != 1:
        raise ValueError("all exponent tuples must have the same length")

    def fn(pts):
        out = np.zeros(pts.shape[0])
        for exp, c in terms.items():
            out += c * np.prod(pts ** np.asarray(exp), axis=1)
        return out

    def partial(pts, k):
        out = np.zeros(pts.shape[0])
        for exp, c in terms.items():
            coef = c
            new_exp = []
            for e, kd in zip(exp, k.k):
                if kd > e:
                    coef = 0.0
                    break
                coef *= math.perm(e, kd)
                new_exp.append(e - kd)
            if coef != 0.0:
                out += coef * np.prod(pts ** np.asarray(new_exp), axis=1)
        return out

    return OracleFn(fn, partial, "polynomial")


def stack_oracles(*oracles: OracleFn) -> OracleFn:
    """Concatenate single- or multi-output oracles along the output axis."""

    def fn(pts):
        return np.column_stack([o.evaluate(pts) for o in oracles])

    def partial(pts, k):
        cols = []
        for o in oracles:
            if o.partial is None:
                raise UnsupportedOrderError(f"{o.name} has no analytic partial")
            p = np.asarray(o.partial(pts, k), dtype=float)
            cols.append(p if p.ndim > 1 else p[:, None])
        return np.column_stack(cols)

    if all(o.partial is not None for o in oracles):
        return OracleFn(fn, partial, "+".join(o.name for o in oracles))
    return OracleFn(fn, None, "+".join(o.name for o in oracles))

"""Simultaneous FDR control over shifted nulls ``H_{i,c}: theta_i >= c``.

A target curve assigns a level ``q(c)`` to each anchor location ``c``. The
modified BH procedure rejects by step-up on the adjusted scores
``P_sup_i = max_c p_i(X_i; c) / q(c)`` at nominal level 1. The improved curve
``q*(c)`` is the tighter curve that a given anchored procedure already
controls; for a single anchor at 0 it makes plain BH and the modified
procedure reject exactly the same tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import optimize

from .core import SelectionError, SelectionMask, as_zscores, check_task_count, normal_cdf, normal_quantile
from .fixed_point import step_up

# Root brackets grow geometrically from this half-width.
_BRACKET_START = 1.0
_BRACKET_LIMIT = 1e6


@dataclass(frozen=True)
class PValueFunction:
    """``p(x; c)``: a p-value for ``theta >= c`` given statistic ``x``.

    ``mlr`` declares that the likelihood ratio is monotone, so the improved
    curve's inner supremum sits on the boundary of the p-value band.
    """

    func: Callable[[np.ndarray, float], np.ndarray]
    increasing_in_x: bool = True
    decreasing_in_c: bool = True
    mlr: bool = False
    family: str | None = None

    def __call__(self, x, c):
        return self.func(np.asarray(x, dtype=float), float(c))

    def validate(self, xs, cs, atol: float = 1e-12) -> None:
        """Check the declared monotonicity on a grid; raise ``SelectionError`` if violated."""
        xs = np.sort(np.asarray(xs, dtype=float))
        cs = np.sort(np.asarray(cs, dtype=float))
        vals = np.array([self(xs, c) for c in cs])  # rows: c, cols: x
        if np.any(vals < -atol) or np.any(vals > 1 + atol):
            raise SelectionError("p-value function left [0, 1] on the validation grid")
        if self.increasing_in_x and np.any(np.diff(vals, axis=1) < -atol):
            raise SelectionError("p-value function is not increasing in x")
        if self.decreasing_in_c and np.any(np.diff(vals, axis=0) > atol):
            raise SelectionError("p-value function is not decreasing in c")


def gaussian_shift() -> PValueFunction:
    """``p(x; c) = Phi(x - c)`` for ``X ~ N(theta, 1)``."""
    return PValueFunction(lambda x, c: normal_cdf(x - c), mlr=True, family="GaussianShift")


@dataclass(frozen=True)
class FdrCurve:
    """Anchor levels ``q(c')`` plus a sorted reporting grid."""

    anchors: Mapping[float, float]
    grid: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.anchors:
            raise SelectionError("an FDR curve needs at least one anchor")
        clean = {}
        for c, q in self.anchors.items():
            q = float(q)
            if q == 0.0:
                raise SelectionError(f"anchor {c} has level 0")
            if not 0.0 < q <= 1.0:
                raise SelectionError(f"anchor {c} level {q} outside (0, 1]")
            clean[float(c)] = q
        object.__setattr__(self, "anchors", dict(sorted(clean.items())))
        grid = tuple(float(c) for c in self.grid) or tuple(sorted(clean))
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise SelectionError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)

    @property
    def locations(self) -> np.ndarray:
        return np.array(list(self.anchors), dtype=float)

    @property
    def levels(self) -> np.ndarray:
        return np.array(list(self.anchors.values()), dtype=float)

    def binding(self) -> dict[float, float]:
        # FDR(c) <= 1 holds trivially, so level-1 anchors never bind
        return {c: q for c, q in self.anchors.items() if q < 1.0}


def p_sup(x, pf: PValueFunction, curve: FdrCurve) -> np.ndarray:
    """``max_c p(x; c) / q(c)`` over the binding anchors; may exceed 1."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape)
    for c, q in curve.binding().items():
        out = np.maximum(out, np.asarray(pf(x, c), dtype=float) / q)
    return out


def run_fdr_curve(x, pf: PValueFunction, curve: FdrCurve) -> SelectionMask:
    """Iterate ``S <- {i in S: P_sup_i <= |S| / m}`` from the full set."""
    scores = p_sup(as_zscores(x), pf, curve)
    m = scores.size
    current = np.ones(m, dtype=bool)
    while True:
        nxt = current & (scores <= current.sum() / m)
        if np.array_equal(nxt, current):
            return SelectionMask(current)
        current = nxt


def run_fdr_curve_step_up(x, pf: PValueFunction, curve: FdrCurve) -> SelectionMask:
    """Same rejections as :func:`run_fdr_curve`, via step-up at level 1."""
    return step_up(p_sup(as_zscores(x), pf, curve), 1.0)[0]


def q_bh_curve(anchors: Mapping[float, float], grid) -> np.ndarray:
    """Step curve implied by the anchors alone: ``min(1, min{q(c'): c' <= c})``."""
    grid = np.asarray(grid, dtype=float)
    out = np.ones(grid.shape)
    for c0, q in anchors.items():
        out = np.where(grid >= c0, np.minimum(out, q), out)
    return out


def improved_curve_gaussian(anchors: Mapping[float, float], m: int, grid) -> np.ndarray:
    """Closed-form ``q*(c)`` for the Gaussian shift family.

    For anchor ``c'`` with level ``q`` and shift ``d = c - c'``::

        q * max(Phi(z(q) - d) / Phi(z(q)), Phi(z(q/m) - d) / Phi(z(q/m)))

    minimised over anchors and capped at 1. Both ratios are exactly 1 at
    ``d = 0``, so ``q*(c') = q(c')`` holds bit-for-bit when that anchor
    attains the minimum.
    """
    m = check_task_count(m)
    grid = np.asarray(grid, dtype=float)
    best = np.ones(grid.shape)
    for c0, q in anchors.items():
        q = float(q)
        if not 0.0 < q <= 1.0:
            raise SelectionError(f"anchor {c0} level {q} outside (0, 1]")
        if q == 1.0:
            continue
        lo = q / m
        if lo <= 0.0:
            raise ValueError(f"q/m underflows for anchor {c0}")
        a, b = normal_quantile(q), normal_quantile(lo)
        d = grid - c0
        ratio = np.maximum(normal_cdf(a - d) / normal_cdf(a), normal_cdf(b - d) / normal_cdf(b))
        best = np.minimum(best, q * ratio)
    return np.minimum(best, 1.0)


def _solve_boundary(pf: PValueFunction, c: float, target: float, tol: float = 1e-12) -> float:
    """Find ``x`` with ``p(x; c) = target`` by bracket expansion then Brent."""
    f = lambda x: float(pf(np.array([x]), c)[0]) - target
    half = _BRACKET_START
    lo, hi = c - half, c + half
    while f(lo) > 0 or f(hi) < 0:
        half *= 2.0
        if half > _BRACKET_LIMIT:
            raise ArithmeticError(f"cannot bracket p(x; {c}) = {target}")
        lo, hi = c - half, c + half
    return optimize.brentq(f, lo, hi, xtol=tol * 1e-3, rtol=4 * np.finfo(float).eps, maxiter=500)


def improved_curve_general(pf: PValueFunction, anchors: Mapping[float, float], m: int, grid,
                           x_range: tuple[float, float] | None = None, resolution: int = 4096) -> np.ndarray:
    """``q*(c)`` for a user p-value function.

    With ``pf.mlr`` the supremum over the band ``q/m <= p(x; c') <= q`` is
    evaluated at its two boundary statistics. Otherwise the band is scanned on
    ``resolution`` points over ``x_range``, so the answer is accurate to the
    grid spacing.
    """
    m = check_task_count(m)
    grid = np.asarray(grid, dtype=float)
    best = np.ones(grid.shape)
    if not pf.mlr:
        if x_range is None:
            raise SelectionError("non-MLR families need an x_range for the grid search")
        xs = np.linspace(x_range[0], x_range[1], resolution)
    for c0, q in anchors.items():
        q = float(q)
        if q >= 1.0:
            continue
        lo = q / m
        if pf.mlr:
            cand = [_solve_boundary(pf, c0, q), _solve_boundary(pf, c0, lo)]
            ratios = [np.array([pf(np.array([x]), c)[0] for c in grid]) / float(pf(np.array([x]), c0)[0])
                      for x in cand]
            val = q * np.maximum(*ratios)
        else:
            base = np.asarray(pf(xs, c0), dtype=float)
            band = (base >= lo) & (base <= q)
            if not np.any(band):
                raise ArithmeticError(f"no grid point falls in the band for anchor {c0}")
            xb, pb = xs[band], base[band]
            val = np.array([q * np.max(np.asarray(pf(xb, c), dtype=float) / pb) for c in grid])
        best = np.minimum(best, val)
    return np.minimum(best, 1.0)


def curve_table(anchors: Mapping[float, float], m: int, grid, pf: PValueFunction | None = None, **kw):
    """Rows ``(c, q_BH(c), q*(c))`` for plotting."""
    grid = np.asarray(grid, dtype=float)
    if pf is None or pf.family == "GaussianShift":
        qstar = improved_curve_gaussian(anchors, m, grid)
    else:
        qstar = improved_curve_general(pf, anchors, m, grid, **kw)
    return list(zip(grid.tolist(), q_bh_curve(anchors, grid).tolist(), qstar.tolist()))

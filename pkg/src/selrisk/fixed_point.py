"""BH as the fixed point of repeated BY confidence steps.

For one-sided normal location problems ``X_i ~ N(theta_i, 1)`` testing
``theta_i >= 0``, the BY step builds intervals ``(-inf, U_i)`` with
``U_i = X_i + z(1 - q|S|/m)`` for the selected tasks and keeps the ones whose
interval excludes zero. Repeating until the selected set stops changing
gives exactly the Benjamini-Hochberg rejection set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    EmptySelectionError,
    LevelError,
    SelectionMask,
    as_pvalues,
    as_zscores,
    check_level,
    normal_cdf,
    normal_quantile,
)


@dataclass(frozen=True)
class ByStep:
    t: int
    selected: SelectionMask
    upper_bounds: np.ndarray  # aligned with selected.indices()
    offset: float = float("nan")  # z(1 - q|S^t|/m)


@dataclass(frozen=True)
class ByIterationTrace:
    """Record of the BY iteration.

    ``steps[t-1]`` holds ``S^t`` and the bounds computed on it. ``T`` is the
    first index with ``S^T == S^(T+1)``; ``final`` is that common mask.
    """

    steps: tuple[ByStep, ...]
    final: SelectionMask
    T: int

    @property
    def sizes(self) -> list[int]:
        return [s.selected.count for s in self.steps]

    def bounds_by_task(self) -> list[dict[int, float]]:
        return [dict(zip(s.selected.indices().tolist(), s.upper_bounds.tolist())) for s in self.steps]

    def bound_table(self, x) -> np.ndarray:
        """``X_i + z(1 - q|S^t|/m)`` for every task (rows) and step (columns).

        Entries for selected tasks equal the recorded bounds; the others show
        the interval a task would get at that step's level.
        """
        x = np.asarray(x, dtype=float)
        return x[:, None] + np.array([s.offset for s in self.steps])[None, :]


def one_sided_pvalues(x) -> np.ndarray:
    """``P_i = Phi(X_i)`` for the null ``theta_i >= 0``."""
    return np.asarray(normal_cdf(as_zscores(x)), dtype=float)


def by_upper_bounds(x, selected: SelectionMask, q: float, m: int | None = None) -> np.ndarray:
    """Upper confidence bounds ``U_i`` for the selected tasks.

    The returned array is aligned with ``selected.indices()``; unselected
    tasks get no bound.
    """
    x = as_zscores(x)
    m = x.size if m is None else m
    k = selected.count
    if k == 0:
        raise EmptySelectionError("BY bounds need at least one selected task")
    level = q * k / m
    if not level < 1.0:
        raise LevelError(f"q*|S|/m = {level} must be < 1")
    if level <= 0.0:
        # zero level: the interval is the whole line
        return np.full(k, np.inf)
    # z(1 - a) == -z(a); avoids cancellation in 1 - a for small a
    offset = -normal_quantile(level)
    return x[selected.bits] + offset


def by_iterate(x, q: float) -> tuple[SelectionMask, ByIterationTrace]:
    """Iterate BY steps from the full set until the selection is stable."""
    x = as_zscores(x)
    q = check_level(q, open_interval=True)
    m = x.size
    # U_i <= 0 iff Phi(X_i) <= q|S|/m; deciding on the p-value side keeps the
    # result bit-identical to step-up even at rounding boundaries
    p = normal_cdf(x)
    current = SelectionMask.full(m)
    steps: list[ByStep] = []
    for t in range(1, m + 2):
        if current.count == 0:
            steps.append(ByStep(t, current, np.empty(0)))
            break
        upper = by_upper_bounds(x, current, q, m)
        level = q * current.count / m
        steps.append(ByStep(t, current, upper, -normal_quantile(level) if level > 0 else np.inf))
        nxt = SelectionMask(current.bits & (p <= level))
        if nxt == current:
            break
        current = nxt
    return current, ByIterationTrace(tuple(steps), current, len(steps))


def _step_up_count(values: np.ndarray, q: float) -> tuple[int, float]:
    m = values.size
    order = np.sort(values)
    crit = q * np.arange(1, m + 1) / m
    passing = np.flatnonzero(order <= crit)
    if passing.size == 0:
        return 0, float("nan")
    k = int(passing[-1]) + 1
    return k, float(order[k - 1])


def step_up(values, q: float) -> tuple[SelectionMask, float]:
    """Step-up rule on arbitrary nonnegative scores (may exceed 1).

    Returns the rejection mask and the score threshold ``P*`` (nan if
    nothing is rejected).
    """
    values = np.asarray(values, dtype=float)
    k, thresh = _step_up_count(values, q)
    if k == 0:
        return SelectionMask.empty(values.size), thresh
    return SelectionMask(values <= thresh), thresh


def bh_step_up(p, q: float) -> SelectionMask:
    """Benjamini-Hochberg: reject ``P_i <= P_(I*)`` with ``I* = max{i: P_(i) <= i q / m}``."""
    p = as_pvalues(p)
    q = check_level(q)
    return step_up(p, q)[0]


def bh_threshold(p, q: float) -> float:
    p = as_pvalues(p)
    return step_up(p, check_level(q))[1]


def bh_iterate_pvalues(p, q: float) -> tuple[SelectionMask, list[int]]:
    """p-value form of the iteration: ``S <- {i in S: P_i <= q|S|/m}``.

    Returns the fixed point and the sizes ``|S^1|, |S^2|, ...`` up to ``S^T``.
    """
    p = np.asarray(p, dtype=float)
    m = p.size
    current = np.ones(m, dtype=bool)
    sizes = []
    while True:
        k = int(current.sum())
        sizes.append(k)
        nxt = current & (p <= q * k / m)
        if k == 0 or np.array_equal(nxt, current):
            return SelectionMask(current), sizes
        current = nxt

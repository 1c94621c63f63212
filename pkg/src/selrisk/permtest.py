"""BH with Monte Carlo permutation p-values and an adaptive budget.

The accelerated procedure spends permutations only on tasks that are still
selected: with ``r`` tasks selected every survivor is topped up to ``M_r``
permutations, its p-value is recomputed and compared with ``q r / m``.
``M_r`` grows as ``r`` shrinks, so resolution is bought only where the
threshold demands it.

Random relabelings come from a counter-based stream: permutation ``j`` of
task ``i`` is generated from Philox keyed by ``(seed, i)`` at a fixed counter
offset derived from ``j``. Results therefore do not depend on batch sizes or
on the order in which tasks are processed.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.random import Philox

from .core import SelectionError, SelectionMask, check_level
from .fixed_point import bh_iterate_pvalues

SCHEMA_VERSION = 1
DEFAULT_TABLE_CAP = 20_000
DEFAULT_EXHAUSTIVE_CAP = 10**6


class ScheduleError(ValueError):
    pass


class CapExceeded(ValueError):
    pass


# ---------------------------------------------------------------------------
# statistics


def two_sample_meandiff(group_a, group_b) -> float:
    """``mean(A) - mean(B)``."""
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise SelectionError("both groups need at least one observation")
    return float(a.mean() - b.mean())


def _meandiff_batch(values: np.ndarray, in_a: np.ndarray) -> np.ndarray:
    # sequential sums over sorted values: a group's sum depends only on its
    # multiset of values, so tied relabelings give bit-identical statistics
    order = np.argsort(values, kind="stable")
    v = values[order]
    in_a = in_a[:, order]
    n_a = in_a[0].sum()
    n_b = in_a.shape[1] - n_a
    sum_a = np.cumsum(np.where(in_a, v, 0.0), axis=1)[:, -1]
    sum_b = np.cumsum(np.where(in_a, 0.0, v), axis=1)[:, -1]
    return sum_a / n_a - sum_b / n_b


two_sample_meandiff.batch = _meandiff_batch


def _statistic_batch(stat, values: np.ndarray, in_a: np.ndarray) -> np.ndarray:
    batch = getattr(stat, "batch", None)
    if batch is not None:
        return np.asarray(batch(values, in_a), dtype=float)
    return np.array([stat(values[row], values[~row]) for row in in_a], dtype=float)


# ---------------------------------------------------------------------------
# tasks


@dataclass
class PermutationTask:
    """Two-sample payload plus its growing pool of permuted statistics."""

    group_a: np.ndarray
    group_b: np.ndarray
    task_id: object = None
    observed: float = float("nan")
    _chunks: list = field(default_factory=list, repr=False)
    _exceed: int = field(default=0, repr=False)
    _table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.group_a = np.asarray(self.group_a, dtype=float)
        self.group_b = np.asarray(self.group_b, dtype=float)
        if self.group_a.size == 0 or self.group_b.size == 0:
            raise SelectionError(f"task {self.task_id}: both groups need at least one observation")

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.group_a, self.group_b])

    @property
    def identity(self) -> np.ndarray:
        return np.arange(self.values.size) < self.group_a.size

    @property
    def n_assignments(self) -> int:
        return math.comb(self.group_a.size + self.group_b.size, self.group_a.size)

    @property
    def pool(self) -> np.ndarray:
        return np.concatenate(self._chunks) if self._chunks else np.empty(0)

    @property
    def consumed(self) -> int:
        return sum(c.size for c in self._chunks)

    def pvalue(self) -> float:
        return (1 + self._exceed) / (1 + self.consumed)

    def reset(self, stat) -> None:
        self._chunks = []
        self._exceed = 0
        self._table = None
        self.observed = float(_statistic_batch(stat, self.values, self.identity[None, :])[0])

    def extend(self, stats: np.ndarray) -> None:
        self._chunks.append(stats)
        self._exceed += int(np.sum(stats >= self.observed))


def perm_pvalue(t_obs: float, pool) -> float:
    """``(1 + #{j: t_obs <= T_j}) / (1 + M)``; ties count as exceedances."""
    pool = np.asarray(pool, dtype=float)
    return (1 + int(np.sum(pool >= t_obs))) / (1 + pool.size)


@functools.lru_cache(maxsize=32)
def assignments(n_total: int, n_a: int) -> np.ndarray:
    """All distinct group-A label sets as a boolean matrix (one row each, read-only)."""
    combos = list(itertools.combinations(range(n_total), n_a))
    out = np.zeros((len(combos), n_total), dtype=bool)
    rows = np.repeat(np.arange(len(combos)), n_a)
    out[rows, np.array(combos, dtype=int).reshape(-1)] = True
    out.flags.writeable = False
    return out


def exhaustive_perm_pvalue(task: PermutationTask, stat=two_sample_meandiff, cap: int = DEFAULT_EXHAUSTIVE_CAP) -> float:
    """Exact permutation p-value over every distinct two-sample assignment."""
    k = task.n_assignments
    if k > cap:
        raise CapExceeded(f"{k} assignments exceed the cap of {cap}")
    values = task.values
    t_obs = float(_statistic_batch(stat, values, task.identity[None, :])[0])
    stats = _statistic_batch(stat, values, assignments(values.size, task.group_a.size))
    return float(np.mean(stats >= t_obs))


# ---------------------------------------------------------------------------
# sampling


def _uniforms(raw: np.ndarray) -> np.ndarray:
    return (raw >> np.uint64(11)).astype(float) * 2.0**-53


class PermutationSampler:
    """Draws permuted statistics for permutation indices ``[start, stop)``.

    Small designs (at most ``table_cap`` distinct assignments and a
    vectorised statistic) sample an assignment index directly from a
    precomputed table of statistics; this is the same distribution as a
    uniform random relabeling. Larger designs draw a full random permutation.
    """

    def __init__(self, stat, seed: int, table_cap: int = DEFAULT_TABLE_CAP):
        if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed < 2**64:
            raise SelectionError("seed must be an integer in [0, 2**64)")
        self.stat = stat
        self.seed = int(seed)
        self.table_cap = table_cap

    def _stream(self, index: int, offset_blocks: int) -> Philox:
        bg = Philox(key=np.array([self.seed, index], dtype=np.uint64))
        if offset_blocks:
            bg.advance(offset_blocks)
        return bg

    def uses_table(self, task: PermutationTask) -> bool:
        return getattr(self.stat, "batch", None) is not None and task.n_assignments <= self.table_cap

    def draw(self, task: PermutationTask, index: int, start: int, stop: int) -> np.ndarray:
        count = stop - start
        if count <= 0:
            return np.empty(0)
        if self.uses_table(task):
            if task._table is None:
                task._table = _statistic_batch(
                    self.stat, task.values, assignments(task.values.size, task.group_a.size))
            raw = self._stream(index, start).random_raw(4 * count)[::4]
            pick = np.minimum((_uniforms(raw) * task._table.size).astype(np.int64), task._table.size - 1)
            return task._table[pick]
        n = task.values.size
        blocks = -(-n // 4)
        raw = self._stream(index, start * blocks).random_raw(4 * blocks * count).reshape(count, 4 * blocks)
        order = np.argsort(_uniforms(raw[:, :n]), axis=1)
        in_a = np.zeros((count, n), dtype=bool)
        np.put_along_axis(in_a, order[:, : task.group_a.size], True, axis=1)
        return _statistic_batch(self.stat, task.values, in_a)


# ---------------------------------------------------------------------------
# budget schedules


def budget_constant(epsilon: float, delta: float, m: int) -> float:
    """``2 (ln(1/eps) + ln m) (1 + 4 delta / 3 + delta^2 / 3) / delta^2``."""
    return 2.0 * (math.log(1.0 / epsilon) + math.log(m)) * (1.0 + 4.0 * delta / 3.0 + delta**2 / 3.0) / delta**2


@dataclass(frozen=True)
class BudgetSchedule:
    """Permutations per task ``M_r`` when ``r`` tasks remain selected (``budgets[r-1]``)."""

    budgets: tuple[int, ...]
    q: float | None = None
    epsilon: float | None = None
    delta: float | None = None
    C: float | None = None

    def __post_init__(self):
        if not self.budgets or any(b < 1 for b in self.budgets):
            raise ScheduleError("every budget M_r must be at least 1")
        if any(b2 > b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            raise ScheduleError("budgets must be nonincreasing in r")

    @property
    def m(self) -> int:
        return len(self.budgets)

    def M(self, r: int) -> int:
        return self.budgets[r - 1]

    def bound(self) -> float | None:
        """Worst-case total ``(C/q) m (ln m + 1) + m`` (``None`` for custom schedules)."""
        if self.C is None:
            return None
        return self.C / self.q * self.m * (math.log(self.m) + 1.0) + self.m

    def describe(self) -> dict:
        return {"q": self.q, "epsilon": self.epsilon, "delta": self.delta, "C": self.C,
                "M_1": self.M(1), "M_m": self.M(self.m), "budget_bound": self.bound()}


def schedule(q: float, epsilon: float, delta: float, m: int) -> BudgetSchedule:
    """Recommended schedule ``M_r = ceil(C m / (r q))``."""
    if isinstance(m, bool) or int(m) != m or m < 2:
        raise ScheduleError(f"schedule needs m >= 2, got {m}")
    if not 0.0 < epsilon <= 0.5:
        raise ScheduleError(f"epsilon must lie in (0, 0.5], got {epsilon}")
    if not 0.0 < delta <= 1.0:
        raise ScheduleError(f"delta must lie in (0, 1], got {delta}")
    if not 0.0 < q < 1.0:
        raise ScheduleError(f"q must lie in (0, 1), got {q}")
    m = int(m)
    c = budget_constant(epsilon, delta, m)
    budgets = tuple(max(1, math.ceil(c * m / (r * q))) for r in range(1, m + 1))
    return BudgetSchedule(budgets, q=q, epsilon=epsilon, delta=delta, C=c)


def constant_schedule(M: int, m: int) -> BudgetSchedule:
    return BudgetSchedule(tuple([int(M)] * int(m)))


# ---------------------------------------------------------------------------
# procedures


@dataclass
class PermRunReport:
    method: str
    q: float
    seed: int
    mask: SelectionMask
    consumed: np.ndarray
    trace: list[dict]
    schedule: dict | None = None
    task_ids: list | None = None
    pvalues: np.ndarray | None = None

    @property
    def total(self) -> int:
        return int(self.consumed.sum())

    def to_dict(self) -> dict:
        ids = self.task_ids if self.task_ids is not None else list(range(self.mask.m))
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "q": self.q,
            "seed": self.seed,
            "m": self.mask.m,
            "rejections": int(self.mask.count),
            "selected": [ids[i] for i in self.mask.indices()],
            "mask": [int(b) for b in self.mask],
            "consumed": {str(ids[i]): int(c) for i, c in enumerate(self.consumed)},
            "total_permutations": self.total,
            "trace": self.trace,
            "schedule": self.schedule,
        }


def _prepare(tasks: Sequence[PermutationTask], stat):
    if len(tasks) == 0:
        raise SelectionError("need at least one task")
    for t in tasks:
        t.reset(stat)


def run_accelerated_bh(tasks: Sequence[PermutationTask], stat, q: float, sched: BudgetSchedule,
                       seed: int, table_cap: int = DEFAULT_TABLE_CAP) -> PermRunReport:
    """Adaptive-budget permutation BH.

    At each step every selected task is topped up to ``M_|S|`` permutations
    and kept iff its p-value is at most ``q |S| / m``. Deselected tasks are
    never sampled again.
    """
    q = check_level(q)
    m = len(tasks)
    if sched.m != m:
        raise ScheduleError(f"schedule is for m={sched.m} but {m} tasks were given")
    _prepare(tasks, stat)
    sampler = PermutationSampler(stat, seed, table_cap)
    current = np.ones(m, dtype=bool)
    trace = []
    while True:
        r = int(current.sum())
        if r == 0:
            break
        budget = sched.M(r)
        pvals = np.ones(m)
        for i in np.flatnonzero(current):
            task = tasks[i]
            task.extend(sampler.draw(task, int(i), task.consumed, budget))
            pvals[i] = task.pvalue()
        threshold = q * r / m
        nxt = current & (pvals <= threshold)
        if int(nxt.sum()) > r:
            raise AssertionError("selected set grew")
        trace.append({"selected": r, "threshold": threshold, "budget": budget, "kept": int(nxt.sum())})
        if np.array_equal(nxt, current):
            break
        current = nxt
    return PermRunReport(
        method="accelerated", q=q, seed=int(seed), mask=SelectionMask(current),
        consumed=np.array([t.consumed for t in tasks], dtype=np.int64), trace=trace,
        schedule=sched.describe(), task_ids=[t.task_id if t.task_id is not None else i for i, t in enumerate(tasks)],
        pvalues=np.array([t.pvalue() for t in tasks]),
    )


def run_fixed_m_bh(tasks: Sequence[PermutationTask], stat, q: float, M: int, seed: int,
                   table_cap: int = DEFAULT_TABLE_CAP) -> PermRunReport:
    """Baseline: ``M`` permutations for every task, then BH step-up."""
    q = check_level(q)
    if isinstance(M, bool) or int(M) != M or M < 1:
        raise SelectionError(f"M must be a positive integer, got {M}")
    _prepare(tasks, stat)
    sampler = PermutationSampler(stat, seed, table_cap)
    for i, task in enumerate(tasks):
        task.extend(sampler.draw(task, i, 0, int(M)))
    pvals = np.array([t.pvalue() for t in tasks])
    mask, sizes = bh_iterate_pvalues(pvals, q)
    m = len(tasks)
    trace = [{"selected": k, "threshold": q * k / m, "budget": int(M)} for k in sizes]
    return PermRunReport(
        method="fixed_m", q=q, seed=int(seed), mask=mask,
        consumed=np.array([t.consumed for t in tasks], dtype=np.int64), trace=trace,
        schedule={"M": int(M)}, task_ids=[t.task_id if t.task_id is not None else i for i, t in enumerate(tasks)],
        pvalues=pvals,
    )


def tasks_from_records(records, group_labels: Sequence[str] | None = None) -> list[PermutationTask]:
    """Build tasks from ``(task_id, group, value)`` rows, preserving first-seen task order.

    ``group_labels`` names group A then group B; by default the two labels in
    the data are taken in sorted order.
    """
    by_task: dict = {}
    labels = set()
    for task_id, group, value in records:
        by_task.setdefault(task_id, []).append((str(group), float(value)))
        labels.add(str(group))
    if group_labels is None:
        if len(labels) != 2:
            raise SelectionError(f"expected exactly two group labels, found {sorted(labels)}")
        group_labels = sorted(labels)
    a_label, b_label = (str(g) for g in group_labels)
    tasks = []
    for task_id, rows in by_task.items():
        unknown = {g for g, _ in rows} - {a_label, b_label}
        if unknown:
            raise SelectionError(f"task {task_id}: unknown group label(s) {sorted(unknown)}")
        a = [v for g, v in rows if g == a_label]
        b = [v for g, v in rows if g == b_label]
        if not a or not b:
            raise SelectionError(f"task {task_id}: each group needs at least one observation")
        tasks.append(PermutationTask(np.array(a), np.array(b), task_id=task_id))
    return tasks

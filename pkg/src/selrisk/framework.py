"""Extra-selection risk control by iterating decision and selection strategies.

A *decision strategy* maps the current selection ``S`` (and the data) to a
decision for every task; a *selection strategy* maps decisions back to a new
selection. :func:`run_extra_selection` alternates the two from an initial
selection until the selection stops changing. Built-in decision strategies
give deselected tasks the null decision, so every composed update is
contracting for any input mask, not just along the iteration path. When
each step controls the post-selection risk, the terminal decisions control
the risk averaged over the terminal selection.

Built-in pairs cover BH (threshold + identity), a two-category balance
constraint, FDR of family-wise error over groups, directional FDR and
partial-conjunction screening. Each is stable in the sense required for the
``f(m) = m`` adjustment because task ``i``'s decision and selection only use
task ``i``'s data (the balance pair is the exception, where stability holds
through the category-rank construction). The risk guarantee for a
user-supplied pair is conditional on its declared ``stable`` flag; the
engine cannot verify it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .core import (
    AdjustmentRule,
    ContractingViolation,
    NonTermination,
    SelectionError,
    SelectionMask,
    adjusted_level,
    as_pvalues,
    check_level,
)


class Sign(enum.IntEnum):
    NEG = -1
    NIL = 0
    POS = 1


@dataclass(frozen=True)
class DecisionStrategy:
    """``(mask, data) -> decisions``. ``q``/``rule`` are reported in traces."""

    func: Callable[[SelectionMask, Any], Any]
    q: float | None = None
    rule: AdjustmentRule = AdjustmentRule.INDEPENDENT
    uses_only_own_task_data: bool = True
    name: str = "decision"

    def __call__(self, mask: SelectionMask, data=None):
        return self.func(mask, data)

    def level(self, mask: SelectionMask) -> float | None:
        if self.q is None:
            return None
        return adjusted_level(self.q, mask.count, self.rule, mask.m)


@dataclass(frozen=True)
class SelectionStrategy:
    """``(decisions, data) -> mask``."""

    func: Callable[[Any, Any], SelectionMask]
    contracting_expected: bool = True
    increasing_expected: bool = True
    stable: bool = True
    name: str = "selection"

    def __call__(self, decisions, data=None) -> SelectionMask:
        out = self.func(decisions, data)
        return out if isinstance(out, SelectionMask) else SelectionMask(out)


@dataclass(frozen=True)
class StrategyPair:
    decision: DecisionStrategy
    selection: SelectionStrategy
    data: Any
    m: int
    name: str = ""

    @property
    def q(self):
        return self.decision.q

    def step(self, mask: SelectionMask):
        """One decision-then-selection step: returns ``(D, s(D))``."""
        d = self.decision(mask, self.data)
        return d, self.selection(d, self.data)

    def run(self, initial: SelectionMask | None = None, **kwargs) -> "GameTrace":
        return run_extra_selection(self.decision, self.selection, self.data, initial, m=self.m, **kwargs)


@dataclass(frozen=True)
class GameStep:
    selected: SelectionMask
    decisions: Any
    level: float | None


@dataclass(frozen=True)
class GameTrace:
    """Sequence ``(S^t, D^t, level_t)`` for ``t = 1..T`` plus ``S^(T+1)``."""

    steps: tuple[GameStep, ...]
    final: SelectionMask

    @property
    def T(self) -> int:
        return len(self.steps)

    @property
    def decisions(self):
        return self.steps[-1].decisions

    @property
    def sizes(self) -> list[int]:
        return [s.selected.count for s in self.steps] + [self.final.count]


def decisions_equal(a, b) -> bool:
    if isinstance(a, (tuple, list)) and isinstance(b, (tuple, list)):
        return len(a) == len(b) and all(decisions_equal(x, y) for x, y in zip(a, b))
    return bool(np.array_equal(np.asarray(a), np.asarray(b)))


def run_extra_selection(
    dstrat: DecisionStrategy,
    sstrat: SelectionStrategy,
    data=None,
    initial: SelectionMask | None = None,
    *,
    m: int | None = None,
    check_purity: bool = False,
) -> GameTrace:
    """Alternate ``D^t = d(S^t)`` and ``S^(t+1) = s(D^t)`` until ``S^(t+1) == S^t``.

    Raises
    ------
    ContractingViolation
        If some ``S^(t+1)`` selects a task outside ``S^t``.
    NonTermination
        If more than ``m + 1`` steps are needed.
    """
    if initial is None:
        if m is None:
            raise SelectionError("give either an initial mask or the task count m")
        initial = SelectionMask.full(m)
    m = initial.m
    current = initial
    steps: list[GameStep] = []
    while True:
        if len(steps) > m:
            raise NonTermination(f"no fixed point after {m + 1} steps; is a strategy impure?")
        d = dstrat(current, data)
        nxt = sstrat(d, data)
        if check_purity:
            _check_pure(dstrat, sstrat, data, current, d, nxt)
        steps.append(GameStep(current, d, dstrat.level(current) if isinstance(dstrat, DecisionStrategy) else None))
        if nxt.m != m:
            raise SelectionError("selection strategy returned a mask of the wrong length")
        if not nxt <= current:
            added = sorted(set(nxt.indices()) - set(current.indices()))
            raise ContractingViolation(f"step {len(steps)} re-selected tasks {added}")
        if nxt == current:
            return GameTrace(tuple(steps), nxt)
        current = nxt


def _check_pure(dstrat, sstrat, data, mask, d, s):
    d2 = dstrat(mask, data)
    if not decisions_equal(d, d2):
        raise SelectionError("decision strategy is not a pure function of its inputs")
    if sstrat(d2, data) != s:
        raise SelectionError("selection strategy is not a pure function of its inputs")


def run_post_selection(first_selection: SelectionMask, decide: Callable[[float], Any], q: float,
                       rule: AdjustmentRule | str = AdjustmentRule.INDEPENDENT):
    """Single adjusted decision step: ``D^1 = d(X; q |S^1| / f(m))``.

    ``decide`` receives the adjusted level and returns decisions for every
    task. Returns ``(S^1, D^1, level)``.
    """
    level = adjusted_level(q, first_selection.count, rule, first_selection.m)
    return first_selection, decide(level), level


def check_increasing(pair: StrategyPair, rng: np.random.Generator, trials: int = 200) -> bool:
    """Test-mode check of ``s(d(S)) <= s(d(S'))`` on random pairs ``S <= S'``."""
    m = pair.m
    for _ in range(trials):
        big = rng.random(m) < rng.random()
        small = big & (rng.random(m) < rng.random())
        lo = pair.step(SelectionMask(small))[1]
        hi = pair.step(SelectionMask(big))[1]
        if not lo <= hi:
            return False
    return True


# ---------------------------------------------------------------------------
# BH: threshold decisions + identity selection


def threshold_decision(mask: SelectionMask, p, q: float, rule=AdjustmentRule.INDEPENDENT) -> np.ndarray:
    """``D_i = 1`` iff task ``i`` is selected and ``p_i <= q |S| / f(m)`` (inclusive)."""
    p = np.asarray(p, dtype=float)
    return mask.bits & (p <= adjusted_level(q, mask.count, rule, p.size))


def identity_selection(d) -> SelectionMask:
    return SelectionMask(np.asarray(d, dtype=bool))


def threshold_pair(p, q: float, rule=AdjustmentRule.INDEPENDENT) -> StrategyPair:
    p = as_pvalues(p)
    q = check_level(q)
    rule = AdjustmentRule.parse(rule)
    dec = DecisionStrategy(lambda s, data: threshold_decision(s, data, q, rule), q=q, rule=rule, name="threshold")
    sel = SelectionStrategy(lambda d, data: identity_selection(d), name="identity")
    return StrategyPair(dec, sel, p, p.size, name="threshold")


# ---------------------------------------------------------------------------
# balance constraint over two categories


def _category_ranks(d: np.ndarray, categories: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Rank of each rejected p-value within its category's rejections.

    Ties are broken by task index (lower index ranks first).
    """
    ranks = np.zeros(p.size, dtype=int)
    for cat in (1, 2):
        idx = np.flatnonzero(d & (categories == cat))
        order = idx[np.lexsort((idx, p[idx]))]
        ranks[order] = np.arange(1, order.size + 1)
    return ranks


def balance_selection(d, categories, p, gamma: float) -> SelectionMask:
    """Keep rejection ``i`` iff its within-category rank is ``<= gamma * min(n1, n2)``.

    ``n_j`` counts the rejections in category ``j``; when one category has no
    rejections nothing is kept.
    """
    if not gamma > 1:
        raise SelectionError(f"gamma must exceed 1, got {gamma}")
    d = np.asarray(d, dtype=bool)
    categories = np.asarray(categories)
    p = np.asarray(p, dtype=float)
    if categories.shape != d.shape or p.shape != d.shape:
        raise SelectionError("decisions, categories and p-values must have the same length")
    if not np.all(np.isin(categories, (1, 2))):
        raise SelectionError("categories must be 1 or 2")
    n1 = int(np.sum(d & (categories == 1)))
    n2 = int(np.sum(d & (categories == 2)))
    cap = gamma * min(n1, n2)
    ranks = _category_ranks(d, categories, p)
    return SelectionMask(d & (ranks <= cap))


def balance_pair(p, categories, q: float, gamma: float, rule=AdjustmentRule.INDEPENDENT) -> StrategyPair:
    p = as_pvalues(p)
    categories = np.asarray(categories)
    if categories.shape != p.shape:
        raise SelectionError("categories must have one entry per task")
    q = check_level(q)
    rule = AdjustmentRule.parse(rule)
    if not gamma > 1:
        raise SelectionError(f"gamma must exceed 1, got {gamma}")
    data = {"p": p, "categories": categories}
    dec = DecisionStrategy(lambda s, dt: threshold_decision(s, dt["p"], q, rule), q=q, rule=rule, name="threshold")
    sel = SelectionStrategy(
        lambda d, dt: balance_selection(d, dt["categories"], dt["p"], gamma),
        increasing_expected=False,
        name="balance",
    )
    return StrategyPair(dec, sel, data, p.size, name="balance")


# ---------------------------------------------------------------------------
# FDR of family-wise error over groups


def bonferroni_reject(p: np.ndarray, alpha: float) -> np.ndarray:
    return p <= alpha / p.size


def holm_reject(p: np.ndarray, alpha: float) -> np.ndarray:
    n = p.size
    order = np.argsort(p, kind="stable")
    crit = alpha / (n - np.arange(n))
    fails = np.flatnonzero(p[order] > crit)
    k = n if fails.size == 0 else int(fails[0])
    out = np.zeros(n, dtype=bool)
    out[order[:k]] = True
    return out


FWER_METHODS = {"bonferroni": bonferroni_reject, "holm": holm_reject}


def _as_groups(group_pvalues) -> tuple[np.ndarray, ...]:
    groups = tuple(as_pvalues(g) for g in group_pvalues)
    if not groups:
        raise SelectionError("need at least one group")
    return groups


def group_fwe_pair(group_pvalues, method: str = "bonferroni", q: float = 0.1,
                   rule=AdjustmentRule.INDEPENDENT) -> StrategyPair:
    """FWER method within each group at the adjusted level; keep groups with a rejection.

    Decisions are a tuple of per-group boolean arrays.
    """
    groups = _as_groups(group_pvalues)
    try:
        fwer = FWER_METHODS[method.lower()]
    except KeyError:
        raise SelectionError(f"unknown FWER method {method!r}; expected one of {sorted(FWER_METHODS)}") from None
    q = check_level(q)
    rule = AdjustmentRule.parse(rule)

    def decide(mask, data):
        alpha = adjusted_level(q, mask.count, rule, len(data))
        return tuple(fwer(g, alpha) if sel else np.zeros(g.size, dtype=bool) for g, sel in zip(data, mask))

    def select(d, data):
        return SelectionMask([bool(np.any(di)) for di in d])

    dec = DecisionStrategy(decide, q=q, rule=rule, name=f"group-{method.lower()}")
    sel = SelectionStrategy(select, name="any-rejection")
    return StrategyPair(dec, sel, groups, len(groups), name="group_fwe")


# ---------------------------------------------------------------------------
# directional decisions


def directional_decision(p_minus: np.ndarray, level: float) -> np.ndarray:
    """``+`` if ``1 - P^- <= level``, ``-`` if ``P^- <= level``, nil otherwise.

    ``P^-`` is small when the parameter is negative (e.g. ``Phi(X_i)``).
    """
    out = np.full(p_minus.size, Sign.NIL, dtype=np.int8)
    out[1.0 - p_minus <= level] = Sign.POS
    out[p_minus <= level] = Sign.NEG
    return out


def directional_pair(p_minus, q: float, rule=AdjustmentRule.INDEPENDENT) -> StrategyPair:
    p_minus = as_pvalues(p_minus)
    q = check_level(q)
    if q >= 0.5:
        raise SelectionError("directional decisions need q < 0.5")
    rule = AdjustmentRule.parse(rule)

    def decide(mask, data):
        out = directional_decision(data, adjusted_level(q, mask.count, rule, data.size))
        out[~mask.bits] = Sign.NIL
        return out

    dec = DecisionStrategy(decide, q=q, rule=rule, name="directional")
    sel = SelectionStrategy(lambda d, data: SelectionMask(np.asarray(d) != Sign.NIL), name="signed")
    return StrategyPair(dec, sel, p_minus, p_minus.size, name="directional")


# ---------------------------------------------------------------------------
# partial conjunction screening


def check_pc_pvalues(pc_pvalues) -> tuple[np.ndarray, ...]:
    """Validate rows ``(P^(0), P^(1), ..., P^(n_i))`` with ``P^(0) = 0``, nondecreasing."""
    rows = []
    for i, row in enumerate(pc_pvalues):
        r = np.asarray(row, dtype=float)
        if r.ndim != 1 or r.size < 2:
            raise SelectionError(f"task {i}: need P^(0) plus at least one partial-conjunction p-value")
        if r[0] != 0.0:
            raise SelectionError(f"task {i}: P^(0) must be 0")
        if np.any(r < 0) or np.any(r > 1) or np.any(np.isnan(r)):
            raise SelectionError(f"task {i}: p-values must lie in [0, 1]")
        if np.any(np.diff(r) < 0):
            raise SelectionError(f"task {i}: partial-conjunction p-values must be nondecreasing in k")
        rows.append(r)
    if not rows:
        raise SelectionError("need at least one task")
    return tuple(rows)


def partial_conjunction_pvalues(p) -> np.ndarray:
    """Bonferroni partial-conjunction p-values for one group, with ``P^(0) = 0``.

    ``P^(k) = min(1, (n - k + 1) p_(k))``, made nondecreasing by a running max.
    """
    p = np.sort(as_pvalues(p))
    n = p.size
    raw = np.minimum(1.0, (n - np.arange(n)) * p)
    return np.concatenate(([0.0], np.maximum.accumulate(raw)))


def partial_conjunction_decision(rows, level: float) -> np.ndarray:
    return np.array([int(np.flatnonzero(r <= level)[-1]) for r in rows], dtype=int)


def partial_conjunction_pair(pc_pvalues, q: float, rule=AdjustmentRule.INDEPENDENT) -> StrategyPair:
    """Decision = largest ``k`` with ``P^(k) <= level``; keep tasks with ``k >= 1``."""
    rows = check_pc_pvalues(pc_pvalues)
    q = check_level(q)
    rule = AdjustmentRule.parse(rule)

    def decide(mask, data):
        out = partial_conjunction_decision(data, adjusted_level(q, mask.count, rule, len(data)))
        out[~mask.bits] = 0
        return out

    dec = DecisionStrategy(decide, q=q, rule=rule, name="partial-conjunction")
    sel = SelectionStrategy(lambda d, data: SelectionMask(np.asarray(d) >= 1), name="k>=1")
    return StrategyPair(dec, sel, rows, len(rows), name="partial_conjunction")


# ---------------------------------------------------------------------------
# declarative configuration

PAIR_KINDS = ("threshold", "balance", "group_fwe", "directional", "partial_conjunction")


def pair_from_config(config: dict, data: dict) -> StrategyPair:
    """Build a pair from ``{"kind": ..., "q": ..., ...}`` and column data.

    ``data`` maps column names to arrays: ``p`` (threshold, balance),
    ``category`` (balance), ``p_minus`` (directional), and ``groups``, a list
    of per-group p-value arrays (group_fwe, partial_conjunction).
    """
    kind = config.get("kind")
    if kind not in PAIR_KINDS:
        raise SelectionError(f"unknown strategy kind {kind!r}; expected one of {', '.join(PAIR_KINDS)}")
    if "q" not in config:
        raise SelectionError(f"strategy {kind!r} needs a level 'q'")
    q = config["q"]
    rule = config.get("rule", "independent")

    def need(col):
        if col not in data:
            raise SelectionError(f"strategy {kind!r} needs input column {col!r}")
        return data[col]

    if kind == "threshold":
        return threshold_pair(need("p"), q, rule)
    if kind == "balance":
        return balance_pair(need("p"), need("category"), q, float(config.get("gamma", 2.0)), rule)
    if kind == "group_fwe":
        return group_fwe_pair(need("groups"), config.get("method", "bonferroni"), q, rule)
    if kind == "directional":
        return directional_pair(need("p_minus"), q, rule)
    groups = need("groups")
    return partial_conjunction_pair([partial_conjunction_pvalues(g) for g in groups], q, rule)

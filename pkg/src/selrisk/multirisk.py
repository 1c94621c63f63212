"""Controlling several selective risks with one common selected set.

Two ways to combine ``k`` strategy pairs:

* parallel intersection: every pair decides on the same mask, and the next
  mask is the intersection of the pairs' selections;
* sequential composition: the pairs are applied in order inside each outer
  step, each one consuming the previous pair's mask.

When every pair's composed update is contracting and increasing both
converge to the same set and the same decisions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from .core import ContractingViolation, NonTermination, SelectionError, SelectionMask
from .framework import StrategyPair


@dataclass(frozen=True)
class MultiStep:
    selected: SelectionMask
    decisions: tuple[Any, ...]  # one channel per risk
    levels: tuple[float | None, ...]


@dataclass(frozen=True)
class MultiTrace:
    steps: tuple[MultiStep, ...]
    final: SelectionMask

    @property
    def T(self) -> int:
        return len(self.steps)

    @property
    def decisions(self) -> tuple[Any, ...]:
        return self.steps[-1].decisions

    @property
    def sizes(self) -> list[int]:
        return [s.selected.count for s in self.steps] + [self.final.count]


def _check_suite(suite: Sequence[StrategyPair]) -> int:
    if len(suite) == 0:
        raise SelectionError("a strategy suite needs at least one pair")
    ms = {pair.m for pair in suite}
    if len(ms) != 1:
        raise SelectionError(f"all pairs must share the task count, got {sorted(ms)}")
    return ms.pop()


def _start(suite, initial):
    m = _check_suite(suite)
    if initial is None:
        return SelectionMask.full(m)
    if initial.m != m:
        raise SelectionError("initial mask length does not match the suite")
    return initial


def _advance(steps, current, nxt, m):
    if not nxt <= current:
        added = sorted(set(nxt.indices()) - set(current.indices()))
        raise ContractingViolation(f"step {len(steps)} re-selected tasks {added}")
    if nxt != current and len(steps) > m:
        raise NonTermination(f"no fixed point after {m + 1} steps")


def run_parallel_intersection(suite: Sequence[StrategyPair], initial: SelectionMask | None = None) -> MultiTrace:
    current = _start(suite, initial)
    m = current.m
    steps: list[MultiStep] = []
    while True:
        decisions, selections = [], []
        for pair in suite:
            d, s = pair.step(current)
            decisions.append(d)
            selections.append(s)
        nxt = selections[0]
        for s in selections[1:]:
            nxt = nxt & s
        steps.append(MultiStep(current, tuple(decisions), tuple(p.decision.level(current) for p in suite)))
        _advance(steps, current, nxt, m)
        if nxt == current:
            return MultiTrace(tuple(steps), nxt)
        current = nxt


def run_sequential_composition(suite: Sequence[StrategyPair], initial: SelectionMask | None = None) -> MultiTrace:
    current = _start(suite, initial)
    m = current.m
    steps: list[MultiStep] = []
    while True:
        inner = current
        decisions, levels = [], []
        for pair in suite:
            levels.append(pair.decision.level(inner))
            d, s = pair.step(inner)
            decisions.append(d)
            if not s <= inner:
                raise ContractingViolation(f"pair {pair.name or pair.decision.name} re-selected tasks")
            inner = s
        steps.append(MultiStep(current, tuple(decisions), tuple(levels)))
        _advance(steps, current, inner, m)
        if inner == current:
            return MultiTrace(tuple(steps), inner)
        current = inner

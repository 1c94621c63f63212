"""Shared types and numeric primitives.

Everything here is an immutable value or a pure function. ``SelectionMask``
is the object threaded through every selection iteration in the package.
"""

from __future__ import annotations

import enum
import math
from typing import Iterable, Sequence

import numpy as np
from scipy import special


class SelectionError(ValueError):
    """Invalid input to a selection or decision procedure."""


class EmptySelectionError(SelectionError):
    pass


class LevelError(SelectionError):
    pass


class ContractingViolation(RuntimeError):
    """A selection step re-admitted a task that was already deselected."""


class NonTermination(RuntimeError):
    """The iteration exceeded the m + 1 step cap."""


# ---------------------------------------------------------------------------
# normal distribution


def normal_cdf(z):
    """Standard normal CDF. Accepts scalars or arrays."""
    out = special.ndtr(z)
    return float(out) if np.ndim(out) == 0 else out


def normal_quantile(u):
    """Inverse of :func:`normal_cdf` on the open interval (0, 1).

    Raises
    ------
    ValueError
        If any ``u`` lies outside (0, 1).
    """
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise ValueError("normal_quantile is defined on (0, 1) only")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# adjustment functions


def harmonic_number(m: int) -> float:
    # smallest terms first
    return math.fsum(1.0 / i for i in range(m, 0, -1))


def harmonic_adjustment(m: int) -> float:
    """``m * (1 + 1/2 + ... + 1/m)``, the arbitrary-dependence adjustment."""
    m = check_task_count(m)
    return m * harmonic_number(m)


class AdjustmentRule(enum.Enum):
    """Denominator ``f(m)`` used when shrinking a level by ``|S| / f(m)``.

    ``INDEPENDENT`` gives ``f(m) = m`` (independent task data with a stable
    selection). ``HARMONIC`` gives ``f(m) = m * H_m`` and is valid under
    arbitrary dependence.
    """

    INDEPENDENT = "independent"
    HARMONIC = "harmonic"

    def f(self, m: int) -> float:
        if self is AdjustmentRule.INDEPENDENT:
            return float(check_task_count(m))
        return harmonic_adjustment(m)

    @classmethod
    def parse(cls, value) -> "AdjustmentRule":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(r.value for r in cls)
            raise SelectionError(f"unknown adjustment rule {value!r}; expected one of {names}") from None


def adjusted_level(q: float, selected_count: int, rule: AdjustmentRule | str, m: int) -> float:
    """Return ``q * selected_count / f(m)``."""
    rule = AdjustmentRule.parse(rule)
    if not 0 <= selected_count <= m:
        raise SelectionError(f"selected_count={selected_count} outside [0, {m}]")
    return q * selected_count / rule.f(m)


# ---------------------------------------------------------------------------
# validation


def check_task_count(m) -> int:
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise SelectionError(f"task count must be a positive integer, got {m!r}")
    return int(m)


def check_level(q, *, open_interval: bool = False) -> float:
    q = float(q)
    if open_interval:
        if not 0.0 < q < 1.0:
            raise LevelError(f"risk level must lie in (0, 1), got {q}")
    elif not 0.0 <= q <= 1.0:
        raise LevelError(f"risk level must lie in [0, 1], got {q}")
    return q


def as_pvalues(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise SelectionError("p-values must be a non-empty 1-d array")
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise SelectionError("p-values must lie in [0, 1]")
    return arr


def as_zscores(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise SelectionError("z-scores must be a non-empty 1-d array")
    if not np.all(np.isfinite(arr)):
        raise SelectionError("z-scores must be finite")
    return arr


# ---------------------------------------------------------------------------
# selection masks


class SelectionMask:
    """Immutable selection indicator vector ``S`` in ``{0, 1}^m``.

    Masks compare equal when their bits are equal, hash consistently, and
    support ``<=`` as the componentwise order (``S <= S'`` means every task
    selected by ``S`` is selected by ``S'``).
    """

    __slots__ = ("_bits", "_count")

    def __init__(self, bits: Iterable[bool] | np.ndarray):
        arr = np.array(bits, dtype=bool).reshape(-1)
        arr.flags.writeable = False
        self._bits = arr
        self._count = int(arr.sum())

    @classmethod
    def full(cls, m: int) -> "SelectionMask":
        return cls(np.ones(check_task_count(m), dtype=bool))

    @classmethod
    def empty(cls, m: int) -> "SelectionMask":
        return cls(np.zeros(check_task_count(m), dtype=bool))

    @classmethod
    def from_indices(cls, indices: Iterable[int], m: int) -> "SelectionMask":
        bits = np.zeros(check_task_count(m), dtype=bool)
        bits[list(indices)] = True
        return cls(bits)

    @classmethod
    def from_int(cls, code: int, m: int) -> "SelectionMask":
        """Bit ``i`` of ``code`` selects task ``i``."""
        return cls([(code >> i) & 1 for i in range(m)])

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def m(self) -> int:
        return self._bits.size

    @property
    def count(self) -> int:
        return self._count

    def __len__(self) -> int:
        return self._bits.size

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self._bits)

    def to_int(self) -> int:
        return sum(1 << int(i) for i in self.indices())

    def __contains__(self, i) -> bool:
        return bool(self._bits[i])

    def __iter__(self):
        return iter(self._bits.tolist())

    def __eq__(self, other):
        if not isinstance(other, SelectionMask):
            return NotImplemented
        return self._bits.shape == other._bits.shape and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self):
        return hash((self.m, self._bits.tobytes()))

    def __le__(self, other: "SelectionMask") -> bool:
        self._check_same(other)
        return not bool(np.any(self._bits & ~other._bits))

    def __ge__(self, other: "SelectionMask") -> bool:
        return other <= self

    def __and__(self, other: "SelectionMask") -> "SelectionMask":
        self._check_same(other)
        return SelectionMask(self._bits & other._bits)

    def __or__(self, other: "SelectionMask") -> "SelectionMask":
        self._check_same(other)
        return SelectionMask(self._bits | other._bits)

    def _check_same(self, other):
        if self.m != other.m:
            raise SelectionError(f"mask length mismatch: {self.m} vs {other.m}")

    def __repr__(self):
        return f"SelectionMask(m={self.m}, selected={self.indices().tolist()})"


def mask_like(bits: Sequence[bool]) -> SelectionMask:
    return bits if isinstance(bits, SelectionMask) else SelectionMask(bits)

import math

import numpy as np
import pytest

import oracles
from selrisk.core import (
    AdjustmentRule,
    LevelError,
    SelectionError,
    SelectionMask,
    adjusted_level,
    as_pvalues,
    as_zscores,
    check_level,
    harmonic_adjustment,
    harmonic_number,
    normal_cdf,
    normal_quantile,
)

# frozen from the mpmath oracle (50 digits)
NQ_07 = 0.5244005127080407
NQ_091 = 1.3407550336902165
H20_ADJ = 71.95479314287364


@pytest.mark.parametrize("z", [-37.0, -8.0, -2.59, -1.0, -1e-3, 0.0, 0.5, 1.88, 3.3, 8.0])
def test_normal_cdf_matches_mpmath(z):
    assert abs(normal_cdf(z) - oracles.ncdf(z)) <= 1e-14


def test_normal_cdf_examples():
    assert normal_cdf(0.0) == 0.5
    assert round(normal_cdf(-2.59), 4) == 0.0048
    assert round(normal_cdf(1.88), 3) == 0.970


def test_normal_cdf_monotone():
    z = np.linspace(-10, 10, 20001)
    assert np.all(np.diff(normal_cdf(z)) >= 0)


def test_normal_cdf_returns_float_for_scalar():
    assert isinstance(normal_cdf(0.3), float)


@pytest.mark.parametrize("u", [1e-300, 1e-12, 0.005, 0.1, 0.3, 0.5, 0.7, 0.91, 0.995, 1 - 1e-12])
def test_normal_quantile_matches_mpmath(u):
    ref = oracles.nquantile(u)
    assert abs(normal_quantile(u) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_normal_quantile_examples():
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.7) == pytest.approx(NQ_07, abs=1e-14)
    assert round(normal_quantile(0.7), 4) == 0.5244
    assert round(normal_quantile(0.91), 4) == 1.3408
    assert normal_quantile(0.91) == pytest.approx(NQ_091, abs=1e-14)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_normal_quantile_domain(u):
    with pytest.raises(ValueError):
        normal_quantile(u)


def test_quantile_inverts_cdf():
    u = np.linspace(1e-6, 1 - 1e-6, 5001)
    assert np.max(np.abs(normal_cdf(normal_quantile(u)) - u)) <= 1e-12
    # in doubles Phi(z) rounds to 1 for large z, so the upper half of
    # [-8, 8] goes through the lower tail by symmetry
    z = np.linspace(-8, 0, 2001)
    assert np.max(np.abs(normal_quantile(normal_cdf(z)) - z)) <= 1e-10
    assert np.max(np.abs(-normal_quantile(normal_cdf(z)) - (-z))) <= 1e-10
    assert np.all(np.diff(normal_quantile(u)) > 0)


def test_harmonic_adjustment_examples():
    assert harmonic_adjustment(1) == 1.0
    assert harmonic_adjustment(2) == 3.0
    assert harmonic_adjustment(20) == pytest.approx(H20_ADJ, rel=1e-15)
    assert round(harmonic_adjustment(20), 3) == 71.955


@pytest.mark.parametrize("m", [1, 2, 3, 10, 100, 1000, 12345])
def test_harmonic_number_against_exact_sum(m):
    exact = float(oracles.harmonic(m))
    assert abs(harmonic_number(m) - exact) <= 2 * math.ulp(exact)


def test_adjustment_rule_ordering():
    assert AdjustmentRule.INDEPENDENT.f(1) == AdjustmentRule.HARMONIC.f(1)
    for m in range(2, 300):
        assert AdjustmentRule.INDEPENDENT.f(m) < AdjustmentRule.HARMONIC.f(m)


def test_adjustment_rule_parse():
    assert AdjustmentRule.parse("Harmonic") is AdjustmentRule.HARMONIC
    assert AdjustmentRule.parse(AdjustmentRule.INDEPENDENT) is AdjustmentRule.INDEPENDENT
    with pytest.raises(SelectionError, match="independent, harmonic"):
        AdjustmentRule.parse("bonferroni")


def test_adjusted_level_examples():
    assert adjusted_level(0.3, 8, "independent", 20) == pytest.approx(0.12, abs=1e-16)
    assert adjusted_level(0.3, 20, "independent", 20) == 0.3
    val = adjusted_level(0.1, 10, "harmonic", 10)
    assert val == pytest.approx(0.1 / float(oracles.harmonic(10)), rel=1e-15)
    assert float(f"{val:.4g}") == 0.03414


def test_adjusted_level_range(rng):
    for _ in range(200):
        m = int(rng.integers(1, 500))
        k = int(rng.integers(0, m + 1))
        q = float(rng.random())
        for rule in AdjustmentRule:
            lvl = adjusted_level(q, k, rule, m)
            assert 0.0 <= lvl <= q
    with pytest.raises(SelectionError):
        adjusted_level(0.1, 11, "independent", 10)


def test_validators():
    assert check_level(0.0) == 0.0 and check_level(1.0) == 1.0
    with pytest.raises(LevelError):
        check_level(1.2)
    with pytest.raises(LevelError):
        check_level(0.0, open_interval=True)
    with pytest.raises(SelectionError):
        as_pvalues([0.1, 1.1])
    with pytest.raises(SelectionError):
        as_pvalues([])
    with pytest.raises(SelectionError):
        as_zscores([0.0, np.inf])


class TestSelectionMask:
    def test_basic(self):
        s = SelectionMask([1, 0, 1])
        assert s.m == 3 and s.count == 2
        assert s.indices().tolist() == [0, 2]
        assert 0 in s and 1 not in s
        assert list(s) == [True, False, True]
        assert s.to_int() == 0b101
        assert SelectionMask.from_int(0b101, 3) == s
        assert SelectionMask.from_indices([0, 2], 3) == s

    def test_immutable(self):
        s = SelectionMask.full(4)
        with pytest.raises(ValueError):
            s.bits[0] = False

    def test_order_and_algebra(self):
        a = SelectionMask([1, 0, 1, 0])
        b = SelectionMask([1, 1, 1, 0])
        assert a <= b and b >= a and not b <= a
        assert (a & b) == a and (a | b) == b
        assert SelectionMask.empty(4) <= a <= SelectionMask.full(4)

    def test_hash_consistent_with_eq(self):
        assert len({SelectionMask([1, 0]), SelectionMask(np.array([True, False])), SelectionMask([0, 1])}) == 2

    def test_length_mismatch(self):
        with pytest.raises(SelectionError):
            SelectionMask([1, 0]) <= SelectionMask([1, 0, 1])

    def test_int_roundtrip(self, rng):
        for _ in range(100):
            m = int(rng.integers(1, 40))
            bits = rng.random(m) < 0.5
            s = SelectionMask(bits)
            assert SelectionMask.from_int(s.to_int(), m) == s
            assert s.count == int(bits.sum())

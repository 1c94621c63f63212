import numpy as np
import pytest

import oracles
from selrisk.core import SelectionError, normal_cdf
from selrisk.fdrcurve import (
    FdrCurve,
    PValueFunction,
    curve_table,
    gaussian_shift,
    improved_curve_gaussian,
    improved_curve_general,
    p_sup,
    q_bh_curve,
    run_fdr_curve,
    run_fdr_curve_step_up,
)
from selrisk.fixed_point import bh_step_up

# mpmath (50 digits) evaluations of the closed form, m = 20, q(0) = 0.1
QSTAR_M20 = {-0.5: 0.37909741117627559, 0.5: 0.037411194400060124, 1.0: 0.011257914512604765}
FIG5_ANCHORS = [{0.0: 0.1}, {-0.5: 0.2, 0.0: 0.1}, {-1.0: 0.3, -0.5: 0.2, 0.0: 0.1},
                {-1.5: 0.5, -1.0: 0.3, -0.5: 0.2, 0.0: 0.1}]
GRID = np.linspace(-2.0, 1.5, 36)


def test_gaussian_shift_validates():
    gaussian_shift().validate(np.linspace(-5, 5, 41), np.linspace(-3, 3, 13))


def test_validate_rejects_wrong_monotonicity():
    bad = PValueFunction(lambda x, c: normal_cdf(c - x))
    with pytest.raises(SelectionError, match="increasing in x"):
        bad.validate(np.linspace(-2, 2, 5), [0.0])


def test_curve_validation():
    with pytest.raises(SelectionError, match="level 0"):
        FdrCurve({0.0: 0.0})
    with pytest.raises(SelectionError):
        FdrCurve({0.0: 1.2})
    with pytest.raises(SelectionError, match="strictly increasing"):
        FdrCurve({0.0: 0.1}, (0.0, 0.0, 1.0))
    curve = FdrCurve({1.0: 0.2, -1.0: 0.5})
    assert curve.locations.tolist() == [-1.0, 1.0]
    assert curve.grid == (-1.0, 1.0)
    assert FdrCurve({0.0: 0.1, -1.0: 1.0}).binding() == {0.0: 0.1}


def test_p_sup_examples():
    pf = gaussian_shift()
    x = np.array([-1.3, 0.2, 2.0])
    assert np.allclose(p_sup(x, pf, FdrCurve({0.0: 0.1})), normal_cdf(x) / 0.1, rtol=1e-15)
    val = p_sup([0.0], pf, FdrCurve({-1.0: 0.5, 0.0: 0.1}))[0]
    assert val == pytest.approx(max(oracles.ncdf(1.0) / 0.5, 0.5 / 0.1), rel=1e-14)
    assert val == pytest.approx(5.0, rel=1e-14)
    assert p_sup([-60.0], pf, FdrCurve({0.0: 0.1}))[0] == 0.0


def test_single_anchor_reduces_to_bh(rng):
    pf = gaussian_shift()
    for _ in range(300):
        m = int(rng.integers(1, 80))
        x = rng.normal(-1.0, 1.5, m)
        q = float(rng.choice([0.05, 0.1, 0.2]))
        curve = FdrCurve({0.0: q})
        expect = bh_step_up(normal_cdf(x), q)
        assert run_fdr_curve(x, pf, curve) == expect
        assert run_fdr_curve_step_up(x, pf, curve) == expect


def test_run_fdr_curve_iteration_equals_step_up(rng):
    pf = gaussian_shift()
    for _ in range(200):
        m = int(rng.integers(1, 60))
        x = rng.normal(-1.5, 1.5, m)
        anchors = FIG5_ANCHORS[int(rng.integers(4))]
        curve = FdrCurve(anchors)
        assert run_fdr_curve(x, pf, curve) == run_fdr_curve_step_up(x, pf, curve)


def test_nothing_rejected_when_scores_exceed_one():
    assert run_fdr_curve(np.full(5, 3.0), gaussian_shift(), FdrCurve({0.0: 0.1})).count == 0


def test_improved_curve_examples():
    out = improved_curve_gaussian({0.0: 0.1}, 20, [-0.5, 0.0, 0.5, 1.0])
    assert out[1] == 0.1
    for c, v in zip([-0.5, 0.5, 1.0], out[[0, 2, 3]]):
        assert v == pytest.approx(QSTAR_M20[c], rel=1e-13)
    assert float(f"{out[0]:.3g}") == 0.379
    assert float(f"{out[3]:.4g}") == 0.01126
    assert out[3] < q_bh_curve({0.0: 0.1}, [1.0])[0]


def test_improved_curve_exact_at_anchor(rng):
    for _ in range(100):
        q = float(rng.uniform(0.01, 0.5))
        m = int(rng.integers(1, 1000))
        assert improved_curve_gaussian({0.0: q}, m, [0.0])[0] == q


def test_improved_curve_errors():
    with pytest.raises(ValueError):
        improved_curve_gaussian({0.0: 1e-320}, 10**9, [0.0])
    with pytest.raises(SelectionError):
        improved_curve_gaussian({0.0: 0.0}, 10, [0.0])
    # level-1 anchors contribute nothing
    out = improved_curve_gaussian({-1.0: 1.0, 0.0: 0.1}, 10, [-1.0])
    assert out[0] == pytest.approx(improved_curve_gaussian({0.0: 0.1}, 10, [-1.0])[0])


def test_q_bh_curve():
    anchors = FIG5_ANCHORS[3]
    out = q_bh_curve(anchors, [-2.0, -1.5, -1.2, -0.5, 0.7])
    assert out.tolist() == [1.0, 0.5, 0.5, 0.2, 0.1]


@pytest.mark.parametrize("anchors", FIG5_ANCHORS)
@pytest.mark.parametrize("m", [1, 20, 500])
def test_dominance(anchors, m):
    qs = improved_curve_gaussian(anchors, m, GRID)
    assert np.all(qs <= q_bh_curve(anchors, GRID) + 1e-15)
    assert np.all((qs > 0) & (qs <= 1))


def test_anchor_consistency():
    prev = None
    for anchors in FIG5_ANCHORS:
        cur = improved_curve_gaussian(anchors, 50, GRID)
        if prev is not None:
            assert np.all(cur <= prev)
        prev = cur


@pytest.mark.parametrize("anchors", FIG5_ANCHORS)
def test_general_boundary_matches_closed_form(anchors):
    closed = improved_curve_gaussian(anchors, 20, GRID)
    general = improved_curve_general(gaussian_shift(), anchors, 20, GRID)
    assert np.max(np.abs(closed - general)) <= 1e-10


def _mixture_pf():
    # scale mixture of shifted normals: monotone in x and c, but not MLR
    return PValueFunction(lambda x, c: 0.5 * normal_cdf(x - c) + 0.5 * normal_cdf((x - c) / 3.0), mlr=False)


def test_non_mlr_grid_against_finer_grid():
    pf = _mixture_pf()
    pf.validate(np.linspace(-8, 8, 81), np.linspace(-2, 2, 9))
    anchors = {0.0: 0.1, -1.0: 0.3}
    grid = np.linspace(-1.5, 1.5, 13)
    coarse = improved_curve_general(pf, anchors, 20, grid, x_range=(-15.0, 5.0), resolution=4096)
    fine = improved_curve_general(pf, anchors, 20, grid, x_range=(-15.0, 5.0), resolution=40951)  # nested: 10x finer spacing
    assert np.max(np.abs(coarse - fine) / fine) <= 2e-3
    # a grid search can only under-estimate the supremum
    assert np.all(coarse <= fine + 1e-15)


def test_non_mlr_needs_range():
    with pytest.raises(SelectionError, match="x_range"):
        improved_curve_general(_mixture_pf(), {0.0: 0.1}, 10, [0.0])


def test_curve_table_rows():
    rows = curve_table(FIG5_ANCHORS[3], 50, np.linspace(-2, 1.5, 8))
    assert len(rows) == 8
    for c, qbh, qstar in rows:
        assert qstar <= qbh
    assert rows[0][1] == 1.0


def test_free_lunch_small(rng):
    pf = gaussian_shift()
    grid = np.linspace(-2, 1.5, 15)
    for _ in range(100):
        m = int(rng.integers(1, 60))
        x = rng.normal(-1.0, 1.2, m)
        qstar = improved_curve_gaussian({0.0: 0.1}, m, grid)
        curve = FdrCurve(dict(zip(grid.tolist(), qstar.tolist())), grid)
        assert run_fdr_curve(x, pf, curve) == bh_step_up(normal_cdf(x), 0.1)

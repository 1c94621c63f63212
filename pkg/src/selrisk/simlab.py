"""Monte Carlo laboratory: data generators, risk estimators and brute-force oracles.

Every estimator takes a seed and derives one independent generator per
replication from ``numpy.random.SeedSequence``, so results are reproducible
bit-for-bit and do not depend on how replications are scheduled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import AdjustmentRule, SelectionError, SelectionMask, adjusted_level, check_level, normal_quantile
from .fixed_point import bh_step_up, one_sided_pvalues
from .framework import StrategyPair

MIN_REPS = 100
MAX_ENUMERATION_M = 12


# ---------------------------------------------------------------------------
# truth and estimates


@dataclass(frozen=True)
class GroundTruth:
    """True locations ``theta``; task ``i`` is null at shift ``c`` iff ``theta_i >= c``."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1 or theta.size == 0:
            raise SelectionError("theta must be a nonempty vector")
        object.__setattr__(self, "theta", theta)

    @property
    def m(self) -> int:
        return self.theta.size

    def nulls(self, c: float = 0.0) -> np.ndarray:
        return self.theta >= c

    @classmethod
    def blocks(cls, spec: Sequence[tuple[float, int]]) -> "GroundTruth":
        """``[(value, count), ...]`` laid out in order."""
        return cls(np.concatenate([np.full(int(n), float(v)) for v, n in spec]))


@dataclass(frozen=True)
class RiskEstimate:
    estimate: float
    se: float
    reps: int

    def within(self, bound: float, k: float = 3.0) -> bool:
        return self.estimate <= bound + k * self.se

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "se": self.se, "reps": self.reps}


def summarize(values) -> RiskEstimate:
    """Mean with ``se = sd / sqrt(n)`` (sample sd, ddof 1)."""
    v = np.asarray(values, dtype=float)
    n = v.size
    se = float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return RiskEstimate(float(v.mean()), se, n)


def replicate_rngs(seed: int, reps: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(reps)]


def _check_reps(reps: int) -> int:
    if isinstance(reps, bool) or int(reps) != reps or reps < MIN_REPS:
        raise SelectionError(f"reps must be an integer >= {MIN_REPS}, got {reps}")
    return int(reps)


# ---------------------------------------------------------------------------
# generators


def simulate_gaussian(m: int, theta, seed) -> np.ndarray:
    """Independent ``X_i ~ N(theta_i, 1)``; ``seed`` may be an int or a Generator."""
    theta = theta.theta if isinstance(theta, GroundTruth) else np.asarray(theta, dtype=float)
    if theta.shape != (m,):
        raise SelectionError(f"theta has length {theta.size}, expected {m}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return theta + rng.standard_normal(m)


def simulate_equicorrelated(theta, rho: float, rng: np.random.Generator) -> np.ndarray:
    """``X_i = theta_i + sqrt(rho) Z_0 + sqrt(1 - rho) Z_i``: unit variances, correlation ``rho``."""
    if not 0.0 <= rho <= 1.0:
        raise SelectionError(f"rho must lie in [0, 1], got {rho}")
    theta = theta.theta if isinstance(theta, GroundTruth) else np.asarray(theta, dtype=float)
    shared = rng.standard_normal()
    return theta + np.sqrt(rho) * shared + np.sqrt(1.0 - rho) * rng.standard_normal(theta.size)


def simulate_two_sample(shifts, n_a: int, n_b: int, rng: np.random.Generator):
    """Per-task Gaussian samples; group A is shifted by ``shifts[i]``."""
    from .permtest import PermutationTask

    shifts = np.asarray(shifts, dtype=float)
    return [PermutationTask(rng.standard_normal(n_a) + s, rng.standard_normal(n_b), task_id=i)
            for i, s in enumerate(shifts)]


# ---------------------------------------------------------------------------
# estimators


def fdp(mask: SelectionMask | np.ndarray, losses) -> float:
    bits = mask.bits if isinstance(mask, SelectionMask) else np.asarray(mask, dtype=bool)
    k = int(bits.sum())
    return float(np.asarray(losses, dtype=float)[bits].sum()) / max(1, k)


def estimate_fdp_risk(procedure: Callable, truth: GroundTruth, reps: int, seed: int) -> RiskEstimate:
    """Mean of ``sum_{i in S} loss_i / (1 v |S|)``.

    ``procedure(rng, truth)`` returns ``(mask, losses)`` for one replication.
    """
    reps = _check_reps(reps)
    vals = [fdp(*procedure(rng, truth)) for rng in replicate_rngs(seed, reps)]
    return summarize(vals)


def bh_procedure(q: float, c: float = 0.0):
    """BH on ``Phi(X)``; loss is a false rejection of ``theta_i >= c``."""

    def run(rng, truth: GroundTruth):
        x = simulate_gaussian(truth.m, truth, rng)
        return bh_step_up(one_sided_pvalues(x), q), truth.nulls(c)

    return run


def selective_upper_bounds(x, mask: SelectionMask, q: float, rule=AdjustmentRule.INDEPENDENT) -> np.ndarray:
    """``U_i = X_i + z(1 - q |S| / f(m))`` for every task (meaningful on ``S`` only)."""
    x = np.asarray(x, dtype=float)
    level = adjusted_level(q, mask.count, rule, x.size)
    if level <= 0.0:
        return np.full(x.size, np.inf)
    return x - normal_quantile(level)


def estimate_fcr(x_generator: Callable, q: float, selection: Callable, reps: int, seed: int,
                 rule=AdjustmentRule.INDEPENDENT) -> RiskEstimate:
    """Mean fraction of selected parameters not covered by their adjusted interval.

    ``x_generator(rng)`` returns ``(x, theta)``; ``selection(x)`` returns the
    selected mask. Intervals are ``(-inf, U_i)`` at level ``q |S| / f(m)``.
    """
    reps = _check_reps(reps)
    q = check_level(q, open_interval=True)
    vals = []
    for rng in replicate_rngs(seed, reps):
        x, theta = x_generator(rng)
        mask = selection(x)
        mask = mask if isinstance(mask, SelectionMask) else SelectionMask(mask)
        if mask.count == 0:
            vals.append(0.0)
            continue
        upper = selective_upper_bounds(x, mask, q, rule)
        vals.append(fdp(mask, theta >= upper))
    return summarize(vals)


def _fdp_curve(mask: np.ndarray, theta: np.ndarray, grid: np.ndarray) -> np.ndarray:
    sel = theta[mask]
    return (sel[None, :] >= grid[:, None]).sum(axis=1) / max(1, sel.size)


def estimate_fdr_curve(x_generator: Callable, procedure: Callable, grid, reps: int, seed: int) -> list[RiskEstimate]:
    """Per-``c`` empirical ``FDR(c)`` of ``procedure(x)`` against nulls ``theta_i >= c``."""
    reps = _check_reps(reps)
    grid = np.asarray(grid, dtype=float)
    rows = []
    for rng in replicate_rngs(seed, reps):
        x, theta = x_generator(rng)
        mask = procedure(x)
        bits = mask.bits if isinstance(mask, SelectionMask) else np.asarray(mask, dtype=bool)
        rows.append(_fdp_curve(bits, np.asarray(theta, dtype=float), grid))
    rows = np.array(rows)
    return [summarize(rows[:, j]) for j in range(grid.size)]


# ---------------------------------------------------------------------------
# enumeration oracle


def _update_table(pair: StrategyPair) -> list[int]:
    m = pair.m
    if m > MAX_ENUMERATION_M:
        raise SelectionError(f"enumeration is capped at m = {MAX_ENUMERATION_M}, got {m}")
    return [pair.step(SelectionMask.from_int(code, m))[1].to_int() for code in range(1 << m)]


def fixed_points(pair: StrategyPair) -> list[SelectionMask]:
    """Every mask ``S`` with ``s(d(S)) == S``."""
    table = _update_table(pair)
    return [SelectionMask.from_int(code, pair.m) for code, out in enumerate(table) if out == code]


def enumerate_fixed_points(pair: StrategyPair) -> SelectionMask:
    """Brute-force terminal mask of the decision/selection game.

    The composed update is tabulated on all ``2^m`` masks. For pairs declared
    increasing the answer is the union of all self-consistent masks (the
    greatest fixed point), which is what the iteration from the full set
    reaches when the update is contracting and increasing. Otherwise the table
    is walked from the full mask.
    """
    m = pair.m
    table = _update_table(pair)
    if pair.selection.increasing_expected:
        union = 0
        for code, out in enumerate(table):
            if out == code:
                union |= code
        if table[union] != union:
            raise SelectionError("union of fixed points is not a fixed point; pair is not increasing")
        return SelectionMask.from_int(union, m)
    code = (1 << m) - 1
    for _ in range(m + 1):
        nxt = table[code]
        if nxt == code:
            return SelectionMask.from_int(code, m)
        code = nxt
    raise SelectionError("no fixed point reached from the full mask")


# ---------------------------------------------------------------------------
# scenarios

PROCEDURES = ("bh", "by_fcr", "post_selection", "fdr_curve", "perm_bh", "verify_rejections")


def _theta_from(spec) -> GroundTruth:
    if isinstance(spec, dict) and "blocks" in spec:
        return GroundTruth.blocks([(b["value"], b["count"]) for b in spec["blocks"]])
    return GroundTruth(np.asarray(spec, dtype=float))


def load_scenario(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def validate_scenario(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise SelectionError("scenario must be a JSON object")
    proc = cfg.get("procedure")
    if proc not in PROCEDURES:
        raise SelectionError(f"unknown procedure {proc!r}; valid names: {', '.join(PROCEDURES)}")
    if proc != "verify_rejections":
        if "reps" not in cfg:
            raise SelectionError("scenario needs 'reps'")
        _check_reps(cfg["reps"])
        if "q" not in cfg:
            raise SelectionError("scenario needs 'q'")
        check_level(cfg["q"], open_interval=True)
    return cfg


def run_scenario(cfg: dict, seed: int | None = None) -> dict:
    """Run one scenario and return a JSON-ready result with a pass/fail verdict.

    Bound violations are reported in ``verdict``; they are not errors.
    """
    cfg = validate_scenario(cfg)
    proc = cfg["procedure"]
    if proc == "verify_rejections":
        return _verify_rejections(cfg)
    seed = cfg.get("seed") if seed is None else seed
    if seed is None:
        raise SelectionError("a seed is required (scenario 'seed' or --seed)")
    q, reps = float(cfg["q"]), int(cfg["reps"])
    out = {"schema_version": 1, "scenario": cfg.get("name"), "procedure": proc, "q": q, "reps": reps, "seed": int(seed)}

    if proc in ("bh", "by_fcr", "post_selection"):
        truth = _theta_from(cfg["theta"])
        if proc == "bh":
            est = estimate_fdp_risk(bh_procedure(q), truth, reps, seed)
            # exact BH FDR under independence
            bound = q * int(truth.nulls().sum()) / truth.m
        else:
            rule = AdjustmentRule.parse(cfg.get("rule", "independent"))
            rho = float(cfg.get("rho", 0.0))
            cut = float(cfg.get("select_below", 0.3))
            gen = lambda rng: (simulate_equicorrelated(truth.theta, rho, rng), truth.theta)
            sel = lambda x: SelectionMask(one_sided_pvalues(x) <= cut)
            est = estimate_fcr(gen, q, sel, reps, seed, rule)
            bound = q
        out.update(est.to_dict(), bound=bound, verdict="pass" if est.within(bound) else "fail")
        return out

    if proc == "fdr_curve":
        from .fdrcurve import FdrCurve, gaussian_shift, improved_curve_gaussian, run_fdr_curve

        truth = _theta_from(cfg["theta"])
        anchors = {float(k): float(v) for k, v in cfg.get("anchors", {"0": q}).items()}
        g = cfg.get("grid", {"start": -2.0, "stop": 1.5, "num": 21})
        grid = np.linspace(g["start"], g["stop"], g["num"]) if isinstance(g, dict) else np.asarray(g, dtype=float)
        qstar = improved_curve_gaussian(anchors, truth.m, grid)
        curve = FdrCurve(anchors, grid)
        pf = gaussian_shift()
        ests = estimate_fdr_curve(lambda rng: (simulate_gaussian(truth.m, truth, rng), truth.theta),
                                  lambda x: run_fdr_curve(x, pf, curve), grid, reps, seed)
        rows = [dict(c=float(c), q_star=float(qs), **e.to_dict()) for c, qs, e in zip(grid, qstar, ests)]
        ok = all(e.within(qs) for e, qs in zip(ests, qstar))
        out.update(curve=rows, verdict="pass" if ok else "fail")
        return out

    # perm_bh
    from .permtest import run_accelerated_bh, schedule, two_sample_meandiff

    m = int(cfg.get("m", 200))
    n_a, n_b = int(cfg.get("n_a", 5)), int(cfg.get("n_b", 5))
    shifts = np.asarray(cfg.get("shifts", np.zeros(m)), dtype=float)
    sched = schedule(q, float(cfg.get("epsilon", 0.2)), float(cfg.get("delta", 0.3)), m)
    vals = []
    for i, rng in enumerate(replicate_rngs(seed, reps)):
        tasks = simulate_two_sample(shifts, n_a, n_b, rng)
        rep = run_accelerated_bh(tasks, two_sample_meandiff, q, sched, seed=int(rng.integers(2**63)))
        vals.append(fdp(rep.mask, shifts <= 0.0))
    est = summarize(vals)
    out.update(est.to_dict(), bound=q, verdict="pass" if est.within(q) else "fail")
    return out


def _verify_rejections(cfg: dict) -> dict:
    """Re-run BH on an input p-value CSV and compare with a rejection CSV."""
    from .io import read_columns

    q = check_level(cfg["q"])
    p = np.asarray(read_columns(cfg["input"], ["p"])["p"], dtype=float)
    rej = np.asarray(read_columns(cfg["rejections"], ["reject"])["reject"], dtype=float).astype(bool)
    mask = bh_step_up(p, q)
    same = rej.shape == mask.bits.shape and bool(np.array_equal(rej, mask.bits))
    return {"schema_version": 1, "procedure": "verify_rejections", "q": q, "m": int(p.size),
            "rejections": mask.count, "verdict": "pass" if same else "fail"}

"""Tests of independence built on the distance covariance statistic.

Three routes are provided:

* :func:`permutation_test` -- ``n V_n^2`` (optionally ``/ T2``) against its
  permutation distribution, reusing both centered distance matrices.
* :func:`chi2_bound_test` -- the conservative ``chi^2(1)`` quantile bound for
  ``n V_n^2 / T2``; valid for levels up to 0.215.
* :func:`rank_test` -- ``n R_n^2`` of random-tie-broken ranks, compared with
  the tabulated critical values or with its exact permutation distribution.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np
from scipy import stats

from ._rng import resolve_seed, stream
from .core import (
    DegenerateDataError,
    CenteredMatrix,
    dcov_stats,
    double_center,
    rank_transform,
)
from .sample import DataError, Sample, distance_matrix

#: replicates handed to one worker at a time; the reduction concatenates
#: blocks in index order, so results do not depend on ``threads``
BLOCK_SIZE = 256

CHI2_MAX_LEVEL = 0.215
EXACT_MAX_N = 10
TABLE_MIN_N = 5


@dataclass(frozen=True)
class TestReport:
    statistic_name: str
    statistic_value: float
    p_value: Optional[float]
    method: str
    replicates: int
    seed: Optional[int]
    dcor: float
    n: int = 0
    level: Optional[float] = None
    reject: Optional[bool] = None
    threshold: Optional[float] = None
    notes: tuple[str, ...] = field(default=())

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        out = asdict(self)
        out["notes"] = list(self.notes)
        return out


# -- permutation test -------------------------------------------------------

def _permuted_stats(A: np.ndarray, B: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """``sum_kl A_kl B_{p(k) p(l)}`` for each row ``p`` of ``perms``."""
    n = A.shape[0]
    chunk = max(1, 2_000_000 // (n * n))
    a = A.ravel()
    out = np.empty(len(perms))
    for lo in range(0, len(perms), chunk):
        p = perms[lo:lo + chunk]
        Bp = B[p[:, :, None], p[:, None, :]]
        out[lo:lo + chunk] = Bp.reshape(len(p), -1) @ a
    return out


def _replicate_perms(seed: int, n: int, lo: int, hi: int) -> np.ndarray:
    return np.stack([stream(seed, r).permutation(n) for r in range(lo, hi)])


def permutation_null(
    cx: CenteredMatrix,
    cy: CenteredMatrix,
    replicates: int,
    seed: int,
    threads: int = 1,
) -> tuple[float, np.ndarray]:
    """Observed ``n V_n^2`` and its permutation replicates.

    Replicate ``r`` permutes the rows of ``cy`` by a permutation drawn from
    stream ``(seed, r)``; centered matrices are permuted by index, never
    recomputed.
    """
    A, B = cx.entries, cy.entries
    n = A.shape[0]
    observed = n * _permuted_stats(A, B, np.arange(n)[None, :])[0] / n**2

    def block(lo: int) -> np.ndarray:
        hi = min(lo + BLOCK_SIZE, replicates)
        return _permuted_stats(A, B, _replicate_perms(seed, n, lo, hi))

    starts = range(0, replicates, BLOCK_SIZE)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(lo) for lo in starts]
    reps = n * np.concatenate(parts) / n**2
    return observed, reps


def permutation_test(
    x: Sample,
    y: Sample,
    replicates: int = 999,
    seed: Optional[int] = None,
    normalized: bool = False,
    alpha: float = 1.0,
    threads: int = 1,
) -> TestReport:
    """Permutation test of independence based on ``n V_n^2``.

    The p-value is ``(1 + #{replicates >= observed}) / (1 + replicates)``.
    With ``normalized=True`` the reported statistic is ``n V_n^2 / T2``;
    since ``T2`` is permutation invariant the p-value is unchanged.
    """
    if x.n != y.n:
        raise DataError(f"sample sizes differ: n_x={x.n}, n_y={y.n}")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    seed = resolve_seed(seed)
    cx = double_center(distance_matrix(x, alpha))
    cy = double_center(distance_matrix(y, alpha))
    summary = dcov_stats(cx, cy)
    t2 = cx.grand_mean * cy.grand_mean
    if normalized and not t2 > 0.0:
        raise DegenerateDataError("n*V^2/T2 is undefined: a sample is constant (T2 = 0)")

    observed, reps = permutation_null(cx, cy, replicates, seed, threads)
    p = (1 + int(np.count_nonzero(reps >= observed))) / (1 + replicates)
    name, value = "nV2", observed
    if normalized:
        name, value = "nV2_over_T2", observed / t2
    notes = ("degenerate: a distance variance is zero",) if summary.degenerate else ()
    return TestReport(name, float(value), p, "permutation", replicates, seed,
                      summary.dcor, x.n, notes=notes)


# -- chi-square bound -------------------------------------------------------

def chi2_threshold(level: float) -> float:
    """Upper ``level`` quantile of the chi-square distribution with 1 df."""
    return float(stats.chi2.ppf(1.0 - level, df=1))


def chi2_bound_test(x: Sample, y: Sample, level: float = 0.10, alpha: float = 1.0) -> TestReport:
    """Reject when ``n V_n^2 / T2 >= chi2_{1-level}(1)``.

    The asymptotic size is at most ``level`` for every ``level <= 0.215``;
    no p-value is reported, only the decision and the threshold.
    """
    if not 0.0 < level <= CHI2_MAX_LEVEL:
        raise ValueError(
            f"chi-square bound is only valid for 0 < level <= {CHI2_MAX_LEVEL}, got {level}"
        )
    if x.n != y.n:
        raise DataError(f"sample sizes differ: n_x={x.n}, n_y={y.n}")
    cx = double_center(distance_matrix(x, alpha))
    cy = double_center(distance_matrix(y, alpha))
    t2 = cx.grand_mean * cy.grand_mean
    if not t2 > 0.0:
        raise DegenerateDataError("n*V^2/T2 is undefined: a sample is constant (T2 = 0)")
    summary = dcov_stats(cx, cy)
    value = x.n * summary.dcov_sq / t2
    threshold = chi2_threshold(level)
    return TestReport("nV2_over_T2", float(value), None, "chi2_bound", 0, None,
                      summary.dcor, x.n, level=level, reject=bool(value >= threshold),
                      threshold=threshold)


# -- rank test --------------------------------------------------------------

@dataclass(frozen=True)
class CriticalTable:
    """Critical values of ``n R_n^2(rank X, rank Y)`` by sample size."""

    rows: tuple[tuple[int, float, float], ...]
    asl: dict = field(default_factory=dict, compare=False)
    source: str = "published_table"

    def sizes(self) -> list[int]:
        return [r[0] for r in self.rows]

    def lookup(self, n: int, level: float) -> tuple[int, float]:
        """Critical value for the largest tabulated size ``<= n``."""
        col = _level_column(level)
        eligible = [r for r in self.rows if r[0] <= n]
        if not eligible:
            raise DataError(f"rank table starts at n={self.rows[0][0]}, got n={n}")
        row = eligible[-1]
        return row[0], row[col]

    def monotonicity_violations(self, level: float, start: int = 10) -> list[tuple[int, int]]:
        """Consecutive ``(n_i, n_j)`` beyond ``start`` where the value decreases."""
        col = _level_column(level)
        rows = [r for r in self.rows if r[0] >= start]
        return [(a[0], b[0]) for a, b in zip(rows, rows[1:]) if b[col] < a[col]]


def _level_column(level: float) -> int:
    if math.isclose(level, 0.10):
        return 1
    if math.isclose(level, 0.05):
        return 2
    raise ValueError(f"rank test supports levels 0.10 and 0.05, got {level}")


@lru_cache(maxsize=1)
def load_critical_table() -> CriticalTable:
    text = resources.files("dcovkit").joinpath("data/critical_values.csv").read_text("utf-8")
    rows, asl = [], {}
    for rec in csv.DictReader(io.StringIO(text)):
        n = int(rec["n"])
        rows.append((n, float(rec["cv10"]), float(rec["cv5"])))
        if rec["asl10"]:
            asl[n] = (float(rec["asl10"]), float(rec["asl5"]))
    return CriticalTable(tuple(rows), asl, "published_table")


def _integer_centered(n: int) -> np.ndarray:
    """``n**2`` times the centered distance matrix of the ranks ``1..n`` (exact integers)."""
    r = np.arange(n, dtype=np.int64)
    a = np.abs(r[:, None] - r[None, :])
    rs = a.sum(axis=1)
    return n * n * a - n * rs[:, None] - n * rs[None, :] + a.sum()


@lru_cache(maxsize=4)
def exact_rank_null(n: int) -> np.ndarray:
    """Sorted integer statistics ``sum_kl IA_kl IA_{p(k)p(l)}`` over all ``n!`` permutations."""
    if not 2 <= n <= EXACT_MAX_N:
        raise ValueError(f"exact enumeration supports 2 <= n <= {EXACT_MAX_N}, got n={n}")
    IA = _integer_centered(n)
    flat = IA.ravel()
    perms = itertools.permutations(range(n))
    chunk = 40_000
    parts = []
    while True:
        block = np.array(list(itertools.islice(perms, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        Bp = IA[block[:, :, None], block[:, None, :]]
        parts.append(Bp.reshape(len(block), -1) @ flat)
    out = np.sort(np.concatenate(parts))
    out.setflags(write=False)
    return out


def _rank_scale(n: int) -> float:
    IA = _integer_centered(n)
    return float(n) / float((IA * IA).sum())


def exact_critical_value(n: int, level: float) -> tuple[float, float]:
    """Smallest attainable ``c`` with ``P(n R_n^2 > c) <= level`` and that probability.

    Rejecting when the statistic is at least ``c`` rounded up to the table's
    printed precision is equivalent to rejecting when it exceeds ``c``.
    """
    null = exact_rank_null(n)
    total = len(null)
    bound = Fraction(str(level)) * total
    vals, first = np.unique(null, return_index=True)
    greater = total - np.concatenate([first[1:], [total]])
    ok = np.nonzero(greater <= bound)[0][0]
    return float(vals[ok]) * _rank_scale(n), float(greater[ok]) / total


def table_precision(value: float, decimals: int = 3) -> float:
    """Round up to ``decimals`` places, the convention of the critical-value table."""
    scale = 10**decimals
    return math.ceil(round(value * scale, 6)) / scale


def exact_table(sizes=range(5, EXACT_MAX_N + 1)) -> CriticalTable:
    """Rebuild the exact rows of the table by full enumeration."""
    rows, asl = [], {}
    for n in sizes:
        c10, a10 = exact_critical_value(n, 0.10)
        c5, a5 = exact_critical_value(n, 0.05)
        rows.append((n, table_precision(c10), table_precision(c5)))
        asl[n] = (a10, a5)
    return CriticalTable(tuple(rows), asl, "exact_enumeration")


def rank_test(
    x: Sample,
    y: Sample,
    level: float = 0.10,
    seed: Optional[int] = None,
    mode: str = "table",
) -> TestReport:
    """Distribution-free test on ``n R_n^2`` of the ranks.

    ``mode="table"`` compares with the tabulated critical value for the
    largest tabulated size not exceeding ``n``; ``mode="exact"`` (``n <= 10``)
    returns the exact permutation p-value.
    """
    if x.d != 1 or y.d != 1:
        raise DataError("rank test needs 1-dimensional x and y")
    if x.n != y.n:
        raise DataError(f"sample sizes differ: n_x={x.n}, n_y={y.n}")
    _level_column(level)
    seed = resolve_seed(seed)
    n = x.n
    rx = rank_transform(x, stream(seed, 0))
    ry = rank_transform(y, stream(seed, 1))
    summary = dcov_stats(double_center(distance_matrix(rx)), double_center(distance_matrix(ry)), "rank")

    if mode == "table":
        if n < TABLE_MIN_N:
            raise DataError(f"rank table needs n >= {TABLE_MIN_N}, got n={n}")
        value = n * summary.dcor_sq
        used_n, cv = load_critical_table().lookup(n, level)
        notes = () if used_n == n else (f"critical value of tabulated n={used_n}",)
        return TestReport("nR2_rank", float(value), None, "rank_table", 0, seed, summary.dcor,
                          n, level=level, reject=bool(value >= cv), threshold=cv, notes=notes)
    if mode == "exact":
        if n > EXACT_MAX_N:
            raise DataError(f"exact rank test supports n <= {EXACT_MAX_N}, got n={n}")
        IA = _integer_centered(n)
        ix = rx.values[:, 0].astype(np.intp) - 1
        iy = ry.values[:, 0].astype(np.intp) - 1
        s_obs = int((IA[np.ix_(ix, ix)] * IA[np.ix_(iy, iy)]).sum())
        null = exact_rank_null(n)
        count = len(null) - int(np.searchsorted(null, s_obs, side="left"))
        p = count / len(null)
        value = s_obs * _rank_scale(n)
        return TestReport("nR2_rank", float(value), p, "rank_exact", len(null), seed,
                          summary.dcor, n, level=level, reject=bool(p <= level))
    raise ValueError(f"unknown rank test mode {mode!r}")

"""Data generators and a Monte Carlo power harness.

Models
------
``bvn:RHO``
    Standard bivariate normal with correlation ``RHO``.
``density``
    ``(X, phi(X))`` with ``X`` standard normal and ``phi`` its density.
``gumbel:THETA``
    Gumbel's bivariate exponential (type I) with parameter ``THETA``.

Any model may be suffixed ``+residuals`` to test ``X`` against the
residuals of the least-squares line of ``Y`` on ``X``.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from ._rng import resolve_seed, stream
from .core import double_center
from .inference import rank_test, permutation_null
from .sample import DataError, Sample, distance_matrix

TESTS = ("dcov_perm", "pearson_t", "spearman", "rank_dcov")
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# -- generators -------------------------------------------------------------

def gen_bvn(n: int, rho: float, seed=None) -> tuple[Sample, Sample]:
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    rng = stream(seed, 0) if not isinstance(seed, np.random.Generator) else seed
    x = rng.standard_normal(n)
    z = rng.standard_normal(n)
    y = rho * x + math.sqrt(1.0 - rho * rho) * z
    return Sample(x, ("x",)), Sample(y, ("y",))


def normal_density(x):
    return np.exp(-0.5 * np.square(x)) * INV_SQRT_2PI


def gen_density_model(n: int, seed=None) -> tuple[Sample, Sample]:
    """``X ~ N(0, 1)`` and ``Y = phi(X)``; dependent but uncorrelated."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = stream(seed, 0) if not isinstance(seed, np.random.Generator) else seed
    x = rng.standard_normal(n)
    return Sample(x, ("x",)), Sample(normal_density(x), ("y",))


def gumbel_conditional_pdf(y, x, theta: float):
    """``f(y | x) = exp(-(1 + theta x) y) ((1 + theta x)(1 + theta y) - theta)``."""
    c = 1.0 + theta * np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(-c * y) * (c * (1.0 + theta * y) - theta)


def gumbel_conditional_cdf(y, x, theta: float):
    """``F(y | x) = 1 - (1 + theta y) exp(-(1 + theta x) y)`` for ``y >= 0``."""
    c = 1.0 + theta * np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    # 1 - e^{-cy} - theta*y*e^{-cy}, with expm1 for small cy
    return -np.expm1(-c * y) - theta * y * np.exp(-c * y)


def gumbel_inverse_cdf(u, x, theta: float, tol: float = 1e-12) -> np.ndarray:
    """Solve ``F(y | x) = u`` by bisection, doubling the upper bracket first."""
    u = np.asarray(u, dtype=float)
    x = np.broadcast_to(np.asarray(x, dtype=float), u.shape)
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    while True:
        short = gumbel_conditional_cdf(hi, x, theta) < u
        if not short.any():
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, 2.0 * hi, hi)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        below = gumbel_conditional_cdf(mid, x, theta) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def gen_gumbel_bve(n: int, theta: float, seed=None) -> tuple[Sample, Sample]:
    """Gumbel bivariate exponential: ``X ~ Exp(1)``, then ``Y`` from ``F(y | X)``."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    rng = stream(seed, 0) if not isinstance(seed, np.random.Generator) else seed
    x = rng.exponential(size=n)
    u = rng.random(n)
    y = gumbel_inverse_cdf(u, x, theta)
    return Sample(x, ("x",)), Sample(y, ("y",))


def linear_residuals(x: Sample, y: Sample) -> Sample:
    """Residuals of the least-squares fit of ``y`` on ``[1, x]``."""
    if x.n != y.n:
        raise DataError(f"sample sizes differ: n_x={x.n}, n_y={y.n}")
    n = x.n
    if n <= x.d + 1:
        raise DataError(f"need n > d + 1 for a regression, got n={n}, d={x.d}")
    design = np.column_stack([np.ones(n), x.values])
    beta, _, rank, _ = np.linalg.lstsq(design, y.values, rcond=None)
    if rank < design.shape[1]:
        raise DataError("design matrix [1, x] is rank deficient")
    res = y.values - design @ beta
    return Sample(res, tuple(f"res_{c}" for c in y.column_names))


# -- classical tests --------------------------------------------------------

def pearson_test(x: np.ndarray, y: np.ndarray) -> float:
    """Two-sided p-value of the t-test of zero correlation, ``n - 2`` df."""
    n = len(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = float(np.corrcoef(x, y)[0, 1])
    if not np.isfinite(r):
        return 1.0
    r = min(max(r, -1.0), 1.0)
    if abs(r) == 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), n - 2))


def spearman_test(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson t-test applied to average ranks."""
    return pearson_test(stats.rankdata(x), stats.rankdata(y))


# -- power study ------------------------------------------------------------

@dataclass(frozen=True)
class Model:
    name: str
    param: Optional[float] = None
    residuals: bool = False

    def __str__(self) -> str:
        base = self.name if self.param is None else f"{self.name}:{self.param:g}"
        return base + ("+residuals" if self.residuals else "")

    def generate(self, n: int, rng: np.random.Generator) -> tuple[Sample, Sample]:
        if self.name == "bvn":
            x, y = gen_bvn(n, self.param, rng)
        elif self.name == "density":
            x, y = gen_density_model(n, rng)
        elif self.name == "gumbel":
            x, y = gen_gumbel_bve(n, self.param, rng)
        else:
            raise ValueError(f"unknown model {self.name!r}")
        if self.residuals:
            y = linear_residuals(x, y)
        return x, y


def parse_model(model: str) -> Model:
    """Parse ``bvn:0.5``, ``density``, ``gumbel:0.5`` with optional ``+residuals``."""
    text = model.strip()
    residuals = text.endswith("+residuals")
    if residuals:
        text = text[: -len("+residuals")]
    name, _, param = text.partition(":")
    name = name.strip().lower()
    if name == "density":
        if param:
            raise ValueError("density model takes no parameter")
        return Model("density", None, residuals)
    if name in ("bvn", "gumbel"):
        if not param:
            raise ValueError(f"model {name!r} needs a parameter, e.g. {name}:0.5")
        value = float(param)
        if name == "bvn" and not -1.0 <= value <= 1.0:
            raise ValueError(f"bvn correlation must lie in [-1, 1], got {value}")
        if name == "gumbel" and not 0.0 <= value <= 1.0:
            raise ValueError(f"gumbel theta must lie in [0, 1], got {value}")
        return Model(name, value, residuals)
    raise ValueError(f"unknown model {model!r}")


@dataclass(frozen=True)
class PowerCurve:
    model: str
    sample_sizes: tuple[int, ...]
    level: float
    tests: tuple[str, ...]
    power: np.ndarray  # tests x sample_sizes
    runs_per_cell: int
    seed: int
    replicates: int = 199

    def get(self, test: str, n: int) -> float:
        return float(self.power[self.tests.index(test), self.sample_sizes.index(n)])

    def stderr(self, test: str, n: int) -> float:
        p = self.get(test, n)
        return math.sqrt(p * (1.0 - p) / self.runs_per_cell)

    def rows(self) -> list[dict]:
        return [
            {"model": self.model, "n": n, "test": t, "power": float(self.power[i, j]),
             "runs": self.runs_per_cell, "level": self.level, "seed": self.seed}
            for i, t in enumerate(self.tests)
            for j, n in enumerate(self.sample_sizes)
        ]

    def to_csv(self, path_or_buf) -> None:
        fields = ["model", "n", "test", "power", "runs", "level", "seed"]
        if isinstance(path_or_buf, (str, Path)):
            with open(path_or_buf, "w", newline="") as fh:
                self.to_csv(fh)
            return
        w = csv.DictWriter(path_or_buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())


def _one_run(model: Model, n: int, level: float, tests: Sequence[str], replicates: int,
             seed: int, cell: int, run: int) -> list[bool]:
    rng = stream(seed, cell, run, 0)
    x, y = model.generate(n, rng)
    out = []
    for t in tests:
        if t == "dcov_perm":
            cx = double_center(distance_matrix(x))
            cy = double_center(distance_matrix(y))
            obs, reps = permutation_null(cx, cy, replicates, _sub_seed(seed, cell, run))
            p = (1 + np.count_nonzero(reps >= obs)) / (1 + replicates)
        elif t == "pearson_t":
            p = pearson_test(x.values[:, 0], y.values[:, 0])
        elif t == "spearman":
            p = spearman_test(x.values[:, 0], y.values[:, 0])
        elif t == "rank_dcov":
            rep = rank_test(x, y, level=level, seed=_sub_seed(seed, cell, run, 1))
            out.append(bool(rep.reject))
            continue
        else:
            raise ValueError(f"unknown test {t!r}")
        out.append(bool(p <= level))
    return out


def _sub_seed(seed: int, *key: int) -> int:
    """Integer seed for the substream ``key`` (for routines taking a seed)."""
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(2, np.uint64)[0] >> 1)


def power_study(
    model,
    sample_sizes: Sequence[int],
    level: float = 0.10,
    runs: int = 2000,
    tests: Sequence[str] = TESTS,
    seed: Optional[int] = None,
    replicates: int = 199,
    threads: int = 1,
) -> PowerCurve:
    """Rejection rates of each test over ``runs`` fresh datasets per sample size.

    All tests in a run see the same dataset. Run ``r`` of cell ``j`` uses
    streams derived from ``(seed, j, r)``, so the curve does not depend on
    ``threads``.
    """
    if runs < 100:
        raise ValueError("runs must be >= 100")
    unknown = [t for t in tests if t not in TESTS]
    if unknown:
        raise ValueError(f"unknown test name(s): {', '.join(unknown)}; choose from {TESTS}")
    if not isinstance(model, Model):
        model = parse_model(model)
    seed = resolve_seed(seed)
    sizes = tuple(int(n) for n in sample_sizes)
    tests = tuple(tests)
    power = np.zeros((len(tests), len(sizes)))
    for j, n in enumerate(sizes):
        def job(r: int, n=n, j=j) -> list[bool]:
            return _one_run(model, n, level, tests, replicates, seed, j, r)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(job, range(runs)))
        else:
            results = [job(r) for r in range(runs)]
        power[:, j] = np.mean(np.array(results, dtype=float), axis=0)
    power.setflags(write=False)
    return PowerCurve(str(model), sizes, level, tests, power, runs, seed, replicates)

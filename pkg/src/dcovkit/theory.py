"""Closed-form constants and curves, and a Monte Carlo check of Brownian covariance.

:func:`brownian_cov_mc` estimates ``E[X_W X'_W Y_W' Y'_W']`` at the empirical
distribution of a sample by drawing two independent Gaussian processes
with covariance ``|t| + |s| - |t - s|`` at the sample points. Its target is
exactly the sample distance covariance ``V_n^2``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ._rng import resolve_seed, stream
from .core import dcov_via_T
from .sample import DataError, Sample, distance_matrix

#: Monte Carlo draws generated per random stream; draw ``m`` belongs to
#: block ``m // DRAW_BLOCK`` so estimates do not depend on scheduling
DRAW_BLOCK = 1024

BVN_DENOM = 1.0 + math.pi / 3.0 - math.sqrt(3.0)


class FactorizationError(ArithmeticError):
    """The kernel Gram matrix could not be factorized even with maximal jitter."""


def constant_C(d: int, alpha: float) -> float:
    """``C(d, alpha) = 2 pi^(d/2) Gamma(1 - alpha/2) / (alpha 2^alpha Gamma((d + alpha)/2))``.

    The normalizing constant of ``int (1 - cos<t,x>) / |t|^(d+alpha) dt``;
    ``C(d, 1)`` is ``pi^((1+d)/2) / Gamma((1+d)/2)``.
    """
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    log_c = (
        math.log(2.0)
        + 0.5 * d * math.log(math.pi)
        + math.lgamma(1.0 - alpha / 2.0)
        - math.log(alpha)
        - alpha * math.log(2.0)
        - math.lgamma((d + alpha) / 2.0)
    )
    return math.exp(log_c)


def bvn_dcor_sq(rho: float) -> float:
    """Population ``R^2`` for standard bivariate normal with correlation ``rho``."""
    rho = float(rho)
    if abs(rho) > 1.0 + 1e-12 or math.isnan(rho):
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    rho = min(max(rho, -1.0), 1.0)
    r2 = rho * rho
    # sqrt(1-r2) - 1 and 2 - sqrt(4-r2) rewritten to avoid cancellation at small rho
    num = (
        rho * math.asin(rho)
        - rho * math.asin(rho / 2.0)
        - r2 / (1.0 + math.sqrt(1.0 - r2))
        + r2 / (2.0 + math.sqrt(4.0 - r2))
    )
    return min(max(num, 0.0) / BVN_DENOM, 1.0)


def bvn_dcor(rho: float) -> float:
    """Population distance correlation ``R(rho)`` of a standard bivariate normal."""
    return math.sqrt(bvn_dcor_sq(rho))


BVN_LIMIT_RATIO = 1.0 / (2.0 * math.sqrt(BVN_DENOM))


@dataclass(frozen=True)
class BvnCurve:
    rho_grid: np.ndarray
    r_values: np.ndarray

    def to_csv(self, path_or_buf) -> None:
        rows = zip(self.rho_grid.tolist(), self.r_values.tolist())
        if isinstance(path_or_buf, (str, Path)):
            with open(path_or_buf, "w", newline="") as fh:
                _write_curve(fh, rows)
        else:
            _write_curve(path_or_buf, rows)


def _write_curve(fh, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["rho", "dcor"])
    for rho, r in rows:
        w.writerow([repr(rho), repr(r)])


def bvn_curve(rho_grid=None, points: int = 201) -> BvnCurve:
    grid = np.linspace(-1.0, 1.0, points) if rho_grid is None else np.asarray(rho_grid, dtype=float)
    return BvnCurve(grid, np.array([bvn_dcor(r) for r in grid]))


@dataclass(frozen=True)
class BrownianKernel:
    """Covariance ``K(t, s) = |t| + |s| - |t - s|``, twice that of standard Brownian motion."""

    dimension: int = 1

    def __call__(self, t, s) -> float:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return float(np.linalg.norm(t) + np.linalg.norm(s) - np.linalg.norm(t - s))

    def gram(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape[1] != self.dimension:
            raise ValueError(f"points have dimension {p.shape[1]}, kernel has {self.dimension}")
        norms = np.sqrt(np.einsum("ij,ij->i", p, p))
        diff = p[:, None, :] - p[None, :, :]
        dist = np.sqrt(np.einsum("kli,kli->kl", diff, diff))
        g = norms[:, None] + norms[None, :] - dist
        return (g + g.T) / 2.0


def _factor(gram: np.ndarray) -> np.ndarray:
    """Lower factor ``L`` with ``L L^T ~= gram``.

    Rows with zero variance (the origin) are left exactly zero. The rest
    is Cholesky-factorized with jitter ``1e-12 .. 1e-8`` times the mean
    diagonal, escalating by factors of 10.
    """
    n = gram.shape[0]
    L = np.zeros_like(gram)
    live = np.nonzero(np.diag(gram) > 0.0)[0]
    if live.size == 0:
        return L
    g = gram[np.ix_(live, live)]
    scale = np.trace(g) / len(live)
    for exp in range(-12, -7):
        try:
            sub = np.linalg.cholesky(g + (10.0**exp) * scale * np.eye(len(live)))
        except np.linalg.LinAlgError:
            continue
        L[np.ix_(live, live)] = sub
        return L
    w = np.linalg.eigvalsh(g)
    raise FactorizationError(
        f"Gram matrix of {n} points not factorizable with jitter up to 1e-8 "
        f"(eigenvalues {w[0]:.3e} .. {w[-1]:.3e})"
    )


def gp_sample(points, kernel: Optional[BrownianKernel] = None, seed=None, size: Optional[int] = None) -> np.ndarray:
    """Draw a zero-mean Gaussian vector with covariance ``kernel.gram(points)``.

    Returns shape ``(n,)``, or ``(size, n)`` when ``size`` is given.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    kernel = kernel or BrownianKernel(p.shape[1])
    if not np.all(np.isfinite(p)):
        raise DataError("points must be finite")
    L = _factor(kernel.gram(p))
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, 0)
    z = rng.standard_normal((1 if size is None else size, p.shape[0]))
    out = z @ L.T
    return out[0] if size is None else out


def brownian_cov_mc(x: Sample, y: Sample, draws: int = 100_000, seed=None) -> tuple[float, float]:
    """Monte Carlo estimate of the squared Brownian covariance at the sample.

    For each draw, independent processes ``W`` (on the x points) and ``W'``
    (on the y points) are sampled, centered over the sample, and the draw
    value is ``(mean_k u_k v_k)^2``.

    Returns
    -------
    estimate : float
        Mean of the draw values.
    mc_se : float
        Their standard error.
    """
    if x.n != y.n:
        raise DataError(f"sample sizes differ: n_x={x.n}, n_y={y.n}")
    if x.n < 2 or draws < 2:
        raise ValueError("need n >= 2 and draws >= 2")
    seed = resolve_seed(seed)
    Lx = _unique_factor(x.values)
    Ly = _unique_factor(y.values)
    n = x.n
    vals = np.empty(draws)
    for b, lo in enumerate(range(0, draws, DRAW_BLOCK)):
        m = min(DRAW_BLOCK, draws - lo)
        rng = stream(seed, b)
        u = rng.standard_normal((m, Lx.shape[1])) @ Lx.T
        v = rng.standard_normal((m, Ly.shape[1])) @ Ly.T
        # shifting by the first column first makes constant samples exactly 0
        u -= u[:, :1]
        v -= v[:, :1]
        u -= u.mean(axis=1, keepdims=True)
        v -= v.mean(axis=1, keepdims=True)
        vals[lo:lo + m] = np.einsum("ij,ij->i", u, v) ** 2 / n**2
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))


def _unique_factor(points: np.ndarray) -> np.ndarray:
    # repeated points share one process value, so only distinct rows are factorized
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    L = _factor(BrownianKernel(points.shape[1]).gram(uniq))
    return L[inverse.ravel()]


def pairwise_expectation_form(x: Union[Sample, np.ndarray], y: Union[Sample, np.ndarray]) -> float:
    """Plug-in value of ``E|X-X'||Y-Y'| + E|X-X'|E|Y-Y'| - 2 E|X-X'||Y-Y''|``.

    At the empirical distribution these expectations are the sums
    ``T1``, ``T2`` and ``T3`` of :func:`dcovkit.core.dcov_via_T`.
    """
    return dcov_via_T(distance_matrix(x), distance_matrix(y)).dcov_sq

"""Double centering and the distance covariance / correlation statistics.

Squared quantities are carried internally; square roots are only taken
by the presentation helpers (:attr:`DCovSummary.dcov`,
:attr:`DCovSummary.dcor`).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from ._rng import stream
from .sample import DataError, DistanceMatrix, Sample, distance_matrix

#: relative tolerance, in units of ``T2``, below which a negative
#: ``V_n^2`` is treated as rounding noise and clamped to zero
CLAMP_TOL = 1e-12

VARIANTS = ("plain", "affine", "rank")


class InternalConsistencyError(ArithmeticError):
    """A quantity that is nonnegative by construction came out negative."""


class DegenerateDataError(DataError):
    """The requested statistic is undefined for constant samples."""


@dataclass(frozen=True)
class CenteredMatrix:
    """Doubly centered distance matrix ``A_kl`` with the means used."""

    entries: np.ndarray
    row_means: np.ndarray
    col_means: np.ndarray
    grand_mean: float
    exponent: float = 1.0

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class DCovSummary:
    dcov_sq: float
    dcor_sq: float
    dvar_x_sq: float
    dvar_y_sq: float
    n: int
    alpha: float = 1.0
    variant: str = "plain"

    @property
    def dcov(self) -> float:
        return float(np.sqrt(self.dcov_sq))

    @property
    def dcor(self) -> float:
        return float(np.sqrt(self.dcor_sq))

    @property
    def dvar_x(self) -> float:
        return float(np.sqrt(self.dvar_x_sq))

    @property
    def dvar_y(self) -> float:
        return float(np.sqrt(self.dvar_y_sq))

    @property
    def degenerate(self) -> bool:
        """True when a distance variance is zero (dcor set to 0 by definition)."""
        return not self.dvar_x_sq * self.dvar_y_sq > 0.0


def double_center(dm: DistanceMatrix) -> CenteredMatrix:
    """Subtract row and column means of ``dm`` and add back the grand mean."""
    a = dm.entries
    row = a.mean(axis=1)
    col = a.mean(axis=0)
    grand = float(a.mean())
    entries = a - row[:, None] - col[None, :] + grand
    for arr in (entries, row, col):
        arr.setflags(write=False)
    return CenteredMatrix(entries, row, col, grand, dm.exponent)


def _check_same_n(nx: int, ny: int) -> None:
    if nx != ny:
        raise DataError(f"sample sizes differ: n_x={nx}, n_y={ny}")


def _clamp(value: float, scale: float, what: str) -> float:
    if value >= 0.0:
        return value
    if value >= -CLAMP_TOL * scale:
        return 0.0
    raise InternalConsistencyError(f"{what} = {value:.3e} is negative beyond rounding (scale {scale:.3e})")


def dcov_stats(cx: CenteredMatrix, cy: CenteredMatrix, variant: str = "plain") -> DCovSummary:
    """Distance covariance, variances and correlation from centered matrices.

    ``V_n^2 = mean(A * B)``, ``V_n^2(X) = mean(A * A)`` and
    ``R_n^2 = V_n^2 / sqrt(V_n^2(X) V_n^2(Y))``, with ``R_n^2 = 0`` when a
    distance variance vanishes.
    """
    _check_same_n(cx.n, cy.n)
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    A, B = cx.entries, cy.entries
    scale = cx.grand_mean * cy.grand_mean
    dcov_sq = _clamp(float(np.mean(A * B)), scale, "dcov_sq")
    dvar_x_sq = float(np.mean(A * A))
    dvar_y_sq = float(np.mean(B * B))
    denom = dvar_x_sq * dvar_y_sq
    if denom > 0.0:
        dcor_sq = min(dcov_sq / np.sqrt(denom), 1.0)
    else:
        dcor_sq = 0.0
    return DCovSummary(dcov_sq, float(dcor_sq), dvar_x_sq, dvar_y_sq, cx.n, cx.exponent, variant)


class TTerms(NamedTuple):
    t1: float
    t2: float
    t3: float
    dcov_sq: float


def dcov_via_T(dmx: DistanceMatrix, dmy: DistanceMatrix) -> TTerms:
    """``V_n^2`` from raw distances as ``T1 + T2 - 2*T3``.

    ``T1 = mean(a*b)``, ``T2 = mean(a) * mean(b)`` and
    ``T3 = n**-3 * sum_k (sum_l a_kl)(sum_m b_km)``.
    """
    _check_same_n(dmx.n, dmy.n)
    a, b = dmx.entries, dmy.entries
    n = a.shape[0]
    t1 = float(np.mean(a * b))
    t2 = float(a.mean() * b.mean())
    t3 = float(a.sum(axis=1) @ b.sum(axis=1)) / n**3
    return TTerms(t1, t2, t3, t1 + t2 - 2.0 * t3)


def normalized_statistic(cx: CenteredMatrix, cy: CenteredMatrix) -> float:
    """``n V_n^2 / T2``; asymptotically of mean one under independence."""
    t2 = cx.grand_mean * cy.grand_mean
    if not t2 > 0.0:
        raise DegenerateDataError("n*V^2/T2 is undefined: a sample is constant (T2 = 0)")
    return cx.n * dcov_stats(cx, cy).dcov_sq / t2


def affine_rescale(s: Sample, name: str = "sample") -> Sample:
    """Whiten ``s`` by the inverse symmetric square root of its covariance.

    Uses the ``n - 1`` divisor. Raises :class:`DataError` when the covariance
    is singular, i.e. its smallest eigenvalue is below ``1e-12`` times the
    largest.
    """
    x = s.values
    n, d = x.shape
    if n <= d:
        raise DataError(f"{name}: affine rescaling needs n > d (n={n}, d={d})")
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    w, v = np.linalg.eigh(cov)
    if not w[-1] > 0.0 or w[0] < 1e-12 * w[-1]:
        raise DataError(
            f"{name}: sample covariance is singular or nearly so "
            f"(eigenvalues {w[0]:.3e} .. {w[-1]:.3e})"
        )
    root_inv = (v / np.sqrt(w)) @ v.T
    return Sample(x @ root_inv, s.column_names)


def rank_transform(s: Sample, seed=None) -> Sample:
    """Ranks ``1..n`` of a one-dimensional sample, ties broken at random."""
    if s.d != 1:
        raise DataError(f"rank transform needs a 1-dimensional sample, got d={s.d}")
    if s.n < 2:
        raise DataError("rank transform needs n >= 2")
    x = s.values[:, 0]
    rng = stream(seed, 0) if not isinstance(seed, np.random.Generator) else seed
    shuffle = rng.permutation(s.n)
    order = shuffle[np.argsort(x[shuffle], kind="stable")]
    ranks = np.empty(s.n)
    ranks[order] = np.arange(1, s.n + 1)
    return Sample(ranks, s.column_names)


def prepare(
    s: Sample, alpha: float = 1.0, variant: str = "plain", seed=None, name: str = "sample"
) -> Sample:
    """Apply the affine or rank preprocessing named by ``variant``."""
    if variant == "affine":
        return affine_rescale(s, name)
    if variant == "rank":
        return rank_transform(s, seed)
    if variant != "plain":
        raise ValueError(f"unknown variant {variant!r}")
    return s


def distance_stats(
    x: Union[Sample, np.ndarray],
    y: Union[Sample, np.ndarray],
    alpha: float = 1.0,
    variant: str = "plain",
    seed: Optional[int] = None,
) -> DCovSummary:
    """Convenience wrapper: preprocess, build distances, center, summarize.

    For ``variant="rank"`` the two rank transforms use independent streams
    derived from ``seed``.
    """
    x = x if isinstance(x, Sample) else Sample(x)
    y = y if isinstance(y, Sample) else Sample(y)
    _check_same_n(x.n, y.n)
    if variant == "rank":
        x, y = rank_transform(x, stream(seed, 0)), rank_transform(y, stream(seed, 1))
    else:
        x, y = prepare(x, alpha, variant, name="x"), prepare(y, alpha, variant, name="y")
    cx = double_center(distance_matrix(x, alpha))
    cy = double_center(distance_matrix(y, alpha))
    return dcov_stats(cx, cy, variant)


def distance_stats_blocked(
    x: Union[Sample, np.ndarray],
    y: Union[Sample, np.ndarray],
    alpha: float = 1.0,
    block: int = 1024,
) -> DCovSummary:
    """Plain statistics without materializing ``n x n`` matrices.

    Accumulates the sums of ``T1``, ``T2`` and ``T3`` (for the pair and for
    each sample with itself) over row blocks of ``block`` observations, so
    memory is ``O(n * block)``. Results agree with :func:`distance_stats` to
    rounding; the block size fixes the summation order.
    """
    xv = (x.values if isinstance(x, Sample) else np.atleast_2d(np.asarray(x, float).T).T)
    yv = (y.values if isinstance(y, Sample) else np.atleast_2d(np.asarray(y, float).T).T)
    _check_same_n(len(xv), len(yv))
    n = len(xv)
    if n < 2:
        raise DataError(f"need at least 2 observations, got {n}")
    sum_ab = sum_aa = sum_bb = 0.0
    row_a = np.empty(n)
    row_b = np.empty(n)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        a = _block_distances(xv[lo:hi], xv, alpha)
        b = _block_distances(yv[lo:hi], yv, alpha)
        sum_ab += float(np.einsum("ij,ij->", a, b))
        sum_aa += float(np.einsum("ij,ij->", a, a))
        sum_bb += float(np.einsum("ij,ij->", b, b))
        row_a[lo:hi] = a.sum(axis=1)
        row_b[lo:hi] = b.sum(axis=1)
    n2, n3 = float(n) ** 2, float(n) ** 3
    ma, mb = row_a.sum() / n2, row_b.sum() / n2

    def v2(s11: float, r1: np.ndarray, r2: np.ndarray, m1: float, m2: float) -> float:
        return s11 / n2 + m1 * m2 - 2.0 * float(r1 @ r2) / n3

    dcov_sq = _clamp(v2(sum_ab, row_a, row_b, ma, mb), ma * mb, "dcov_sq")
    dvar_x_sq = max(v2(sum_aa, row_a, row_a, ma, ma), 0.0)
    dvar_y_sq = max(v2(sum_bb, row_b, row_b, mb, mb), 0.0)
    denom = dvar_x_sq * dvar_y_sq
    dcor_sq = min(dcov_sq / np.sqrt(denom), 1.0) if denom > 0.0 else 0.0
    return DCovSummary(dcov_sq, float(dcor_sq), dvar_x_sq, dvar_y_sq, n, alpha, "plain")


def _block_distances(rows: np.ndarray, allrows: np.ndarray, alpha: float) -> np.ndarray:
    if rows.shape[1] == 1:
        d = np.abs(rows - allrows.T)
        return d if alpha == 1.0 else d**alpha
    sq = np.zeros((len(rows), len(allrows)))
    for k in range(rows.shape[1]):
        sq += (rows[:, k, None] - allrows[None, :, k]) ** 2
    return sq ** (alpha / 2.0)

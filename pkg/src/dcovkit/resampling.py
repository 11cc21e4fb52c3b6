"""Leave-one-out jackknife of the distance statistics.

Replicates come from the already computed distance matrices: row and
column ``i`` are deleted and the ``(n-1) x (n-1)`` block is re-centered.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import dcov_stats, double_center
from .sample import DataError, DistanceMatrix


@dataclass(frozen=True)
class JackknifeReport:
    replicates_dcov_sq: np.ndarray
    replicates_dcor_sq: np.ndarray
    se_dcor: float
    studentized: Optional[np.ndarray]

    @property
    def n(self) -> int:
        return len(self.replicates_dcov_sq)

    @property
    def replicates_dcor(self) -> np.ndarray:
        return np.sqrt(self.replicates_dcor_sq)


def jackknife_se(values: np.ndarray) -> float:
    """Delete-one jackknife standard error ``sqrt((n-1)/n * sum (v_i - mean)^2)``."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    dev = values - values.mean()
    return float(np.sqrt((n - 1) / n * np.sum(dev * dev)))


def jackknife(dmx: DistanceMatrix, dmy: DistanceMatrix) -> JackknifeReport:
    """Leave-one-out replicates of ``V_n^2`` and ``R_n^2``."""
    if dmx.n != dmy.n:
        raise DataError(f"sample sizes differ: n_x={dmx.n}, n_y={dmy.n}")
    n = dmx.n
    if n < 3:
        raise DataError(f"jackknife needs n >= 3, got n={n}")
    dcov_sq = np.empty(n)
    dcor_sq = np.empty(n)
    idx = np.arange(n)
    for i in range(n):
        keep = idx[idx != i]
        s = dcov_stats(double_center(dmx.submatrix(keep)), double_center(dmy.submatrix(keep)))
        dcov_sq[i] = s.dcov_sq
        dcor_sq[i] = s.dcor_sq
    r = np.sqrt(dcor_sq)
    se = jackknife_se(r)
    if se <= 1e-13 * r.mean():
        # replicates equal up to rounding
        se = 0.0
    stud = r / se if se > 0.0 else None
    for arr in (dcov_sq, dcor_sq, stud):
        if arr is not None:
            arr.setflags(write=False)
    return JackknifeReport(dcov_sq, dcor_sq, se, stud)


def studentize(report: JackknifeReport) -> np.ndarray:
    """``R_(i) / se`` with the common jackknife standard error."""
    if not report.se_dcor > 0.0:
        raise ValueError("no variation among replicates: jackknife standard error is 0")
    return np.sqrt(report.replicates_dcor_sq) / report.se_dcor


def influence(report: JackknifeReport) -> np.ndarray:
    """Absolute deviation of each studentized replicate from their mean.

    Deleting an influential row moves its replicate away from the others in
    either direction, so the deviation rather than the raw studentized value
    ranks rows.
    """
    stud = studentize(report)
    return np.abs(stud - stud.mean())


def influence_order(report: JackknifeReport) -> np.ndarray:
    """Row indices sorted from most to least influential."""
    return np.argsort(-influence(report), kind="stable")

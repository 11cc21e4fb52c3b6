"""Sample containers, CSV ingestion and Euclidean distance matrices."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

MISSING_TOKENS = frozenset({"", "NA"})

Selector = Union[str, Sequence[Union[str, int]]]


class DataError(ValueError):
    """Raised for invalid input data (bad cells, unknown columns, too few rows)."""


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Sample:
    """An ``n x d`` block of finite observations, rows are observations."""

    values: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataError(f"sample must be 2-dimensional, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("sample contains non-finite values")
        names = tuple(self.column_names) or tuple(f"v{j}" for j in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise DataError(
                f"{len(names)} column names given for {values.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            raise DataError(f"column names are not unique: {names}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def take(self, rows) -> "Sample":
        """Return the sample restricted to (or reordered by) ``rows``."""
        return Sample(self.values[np.asarray(rows)], self.column_names)


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric matrix of pairwise Euclidean distances raised to ``exponent``."""

    entries: np.ndarray
    exponent: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _frozen(self.entries))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def characterizing(self) -> bool:
        # exponent 2 reduces to product-moment covariance and does not
        # characterize independence
        return self.exponent < 2.0

    def submatrix(self, keep) -> "DistanceMatrix":
        keep = np.asarray(keep)
        return DistanceMatrix(self.entries[np.ix_(keep, keep)], self.exponent)


def check_exponent(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 2.0) or math.isnan(alpha):
        raise ValueError(f"exponent alpha must lie in (0, 2], got {alpha}")
    return alpha


def distance_matrix(s: Union[Sample, np.ndarray], alpha: float = 1.0) -> DistanceMatrix:
    """Pairwise distances ``|row_k - row_l|**alpha``.

    Each entry is computed independently as the sum of squared coordinate
    differences, so the result does not depend on evaluation order.

    Parameters
    ----------
    s : Sample or array_like
        Observations in rows.
    alpha : float
        Exponent in ``(0, 2]``.
    """
    alpha = check_exponent(alpha)
    x = s.values if isinstance(s, Sample) else np.asarray(s, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DataError(f"need at least 2 observations, got {x.shape[0]}")
    diff = x[:, None, :] - x[None, :, :]
    sq = np.einsum("kli,kli->kl", diff, diff)
    if alpha == 2.0:
        d = sq
    elif alpha == 1.0:
        d = np.sqrt(sq)
    else:
        d = sq ** (alpha / 2.0)
    # exact symmetry regardless of summation path
    d = np.triu(d, 1)
    d = d + d.T
    return DistanceMatrix(d, alpha)


def _resolve(selector: Selector, header: list[str], role: str) -> list[int]:
    """Map a selector to column indices.

    Accepted tokens are column names, integer indices and inclusive
    index ranges ``"i-j"``/``"i:j"``. A token that is a column name is
    always treated as a name.
    """
    if isinstance(selector, str):
        tokens: list = [t.strip() for t in selector.split(",") if t.strip()]
    else:
        tokens = list(selector)
    if not tokens:
        raise DataError(f"empty {role} column selector")
    out: list[int] = []
    for tok in tokens:
        if isinstance(tok, (int, np.integer)):
            idx = [int(tok)]
        elif tok in header:
            idx = [header.index(tok)]
        else:
            idx = _parse_index_token(tok, role)
        for i in idx:
            if not 0 <= i < len(header):
                raise DataError(f"{role} column index {i} out of range (0..{len(header) - 1})")
            if i not in out:
                out.append(i)
    return out


def _parse_index_token(tok: str, role: str) -> list[int]:
    for sep in (":", "-"):
        lo, found, hi = tok.partition(sep)
        if found and lo.strip().isdigit() and hi.strip().isdigit():
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise DataError(f"empty {role} index range {tok!r}")
            return list(range(lo_i, hi_i + 1))
    if tok.isdigit():
        return [int(tok)]
    raise DataError(f"{role} column {tok!r} not found")


def load_csv(
    path: Union[str, Path],
    x_cols: Selector,
    y_cols: Selector,
    missing_policy: str = "drop_rows",
) -> tuple[Sample, Sample, int]:
    """Read two column blocks from a header-row CSV file.

    Empty cells and ``NA`` are missing. With ``missing_policy="drop_rows"``
    complete cases over the selected columns are kept and the number of
    dropped rows is returned; with ``"error"`` the first missing cell raises.

    Returns
    -------
    x, y : Sample
    dropped_count : int
    """
    if missing_policy not in ("error", "drop_rows"):
        raise ValueError(f"unknown missing_policy {missing_policy!r}")
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    if not rows:
        raise DataError(f"{path}: empty file, header row required")
    header = [h.strip() for h in rows[0]]
    xi = _resolve(x_cols, header, "x")
    yi = _resolve(y_cols, header, "y")
    overlap = set(xi) & set(yi)
    if overlap:
        names = ", ".join(header[i] for i in sorted(overlap))
        raise DataError(f"x and y selections overlap: {names}")

    cols = xi + yi
    data = []
    dropped = 0
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
            )
        parsed = []
        missing = False
        for c in cols:
            cell = row[c].strip()
            if cell in MISSING_TOKENS:
                if missing_policy == "error":
                    raise DataError(
                        f"{path}:{lineno}: missing value at row {lineno - 1}, column {header[c]}"
                    )
                missing = True
                break
            try:
                val = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: cannot parse {cell!r} in column {header[c]}"
                ) from None
            if not math.isfinite(val):
                raise DataError(f"{path}:{lineno}: non-finite value in column {header[c]}")
            parsed.append(val)
        if missing:
            dropped += 1
            continue
        data.append(parsed)

    if len(data) < 2:
        raise DataError(f"{path}: need at least 2 complete rows, got {len(data)}")
    arr = np.array(data, dtype=float)
    x = Sample(arr[:, : len(xi)], tuple(header[i] for i in xi))
    y = Sample(arr[:, len(xi):], tuple(header[i] for i in yi))
    return x, y, dropped


def load_labels(path: Union[str, Path], column: str, missing_policy: str = "drop_rows",
                required: Sequence[str] = ()) -> list[str]:
    """Read a label column, aligned with the rows :func:`load_csv` keeps."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in [f.strip() for f in reader.fieldnames]:
            raise DataError(f"{path}: label column {column!r} not found")
        labels = []
        for row in reader:
            row = {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
            if not any(row.values()):
                continue
            if missing_policy == "drop_rows" and any(row.get(c, "") in MISSING_TOKENS for c in required):
                continue
            labels.append(row[column])
    return labels

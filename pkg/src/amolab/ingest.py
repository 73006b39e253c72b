"""Observational index ingestion: NOAA-style monthly tables, running means.

The expected text layout is one row per year, a year token followed by 12
monthly values, with a sentinel (default -99.99) marking missing entries.
Header or trailer lines whose first token is not numeric are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_SENTINEL = -99.99


@dataclass
class IndexSeries:
    """Monthly index records with a missing-value mask."""

    year: np.ndarray    # int
    month: np.ndarray   # int, 1..12
    value: np.ndarray   # K
    mask: np.ndarray    # True where missing

    def __post_init__(self):
        n = len(self.year)
        if not (len(self.month) == len(self.value) == len(self.mask) == n):
            raise ValueError("field lengths differ")
        key = self.year * 12 + (self.month - 1)
        if n and np.any(np.diff(key) <= 0):
            raise ValueError("months must be strictly increasing without duplicates")

    def __len__(self) -> int:
        return len(self.year)

    @property
    def time_years(self) -> np.ndarray:
        """Decimal-year sample times (month centers)."""
        return self.year + (self.month - 0.5) / 12.0

    def valid_values(self) -> np.ndarray:
        return self.value[~self.mask]


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def parse_index(text: str, sentinel: float = DEFAULT_SENTINEL) -> IndexSeries:
    """Parse a NOAA-style monthly index table.

    Raises ValueError with the offending line number on malformed rows
    (a data row must hold exactly 13 numeric tokens).
    """
    years, months, values, mask = [], [], [], []
    seen_data = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if not _is_number(tokens[0]):
            # metadata line; fine before or after the data block
            continue
        if len(tokens) != 13 or not all(_is_number(tok) for tok in tokens):
            raise ValueError(
                f"line {lineno}: expected a year and 12 monthly values, "
                f"got {len(tokens)} token(s)"
            )
        year = int(float(tokens[0]))
        seen_data = True
        for m, tok in enumerate(tokens[1:], start=1):
            v = float(tok)
            missing = abs(v - sentinel) < 1e-9
            years.append(year)
            months.append(m)
            values.append(0.0 if missing else v)
            mask.append(missing)
    if not seen_data:
        raise ValueError("no data rows found")
    return IndexSeries(year=np.array(years, dtype=int),
                       month=np.array(months, dtype=int),
                       value=np.array(values, dtype=float),
                       mask=np.array(mask, dtype=bool))


def format_index(series: IndexSeries, sentinel: float = DEFAULT_SENTINEL) -> str:
    """Emit the NOAA-style table (inverse of parse_index for full years)."""
    lines = []
    values = np.where(series.mask, sentinel, series.value)
    for year in np.unique(series.year):
        sel = series.year == year
        if sel.sum() != 12:
            raise ValueError(f"year {year} has {sel.sum()} months, need 12")
        row = values[sel][np.argsort(series.month[sel])]
        lines.append(f"{year:6d} " + " ".join(f"{v:8.3f}" for v in row))
    return "\n".join(lines) + "\n"


def running_mean(series: IndexSeries, window: int = 12) -> IndexSeries:
    """Centered moving average that ignores masked values.

    Output entries with fewer than window/2 valid inputs are masked, so a
    fully missing stretch can never be invented.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(series) == 0:
        raise ValueError("empty series")
    n = len(series)
    left = (window - 1) // 2
    right = window - 1 - left
    smoothed = np.zeros(n)
    out_mask = np.zeros(n, dtype=bool)
    valid = ~series.mask
    vals = np.where(valid, series.value, 0.0)
    csum = np.concatenate(([0.0], np.cumsum(vals)))
    ccnt = np.concatenate(([0], np.cumsum(valid.astype(int))))
    for i in range(n):
        lo = max(0, i - left)
        hi = min(n, i + right + 1)
        cnt = ccnt[hi] - ccnt[lo]
        if cnt < window / 2.0:
            out_mask[i] = True
        else:
            smoothed[i] = (csum[hi] - csum[lo]) / cnt
    return IndexSeries(year=series.year.copy(), month=series.month.copy(),
                       value=smoothed, mask=out_mask)


def write_index_csv(series: IndexSeries, smoothed: IndexSeries, path) -> None:
    """CSV export with header year,month,value,smoothed (empty when masked)."""
    with open(path, "w") as fh:
        fh.write("year,month,value,smoothed\n")
        for i in range(len(series)):
            raw = "" if series.mask[i] else repr(float(series.value[i]))
            smo = "" if smoothed.mask[i] else repr(float(smoothed.value[i]))
            fh.write(f"{series.year[i]},{series.month[i]},{raw},{smo}\n")

"""Market data container, day indexing and CSV input/output.

Base load runs on a calendar-day index (spot every day, futures traded on
weekdays); peak load runs on a weekday index throughout.  Index 0 is the first
spot date.  A delivery period [delivery_start, delivery_end] (both inclusive)
maps to [T1, T2) with T2 the index of the day after the last delivery day.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["MarketData", "day_index", "load_market", "save_market", "SPOT_HEADER", "FUTURES_HEADER"]

SPOT_HEADER = ["date", "price"]
FUTURES_HEADER = ["trade_date", "delivery_start", "delivery_end", "price"]
MODES = ("base", "peak")


def _dates(values) -> np.ndarray:
    return np.asarray(values, dtype="datetime64[D]")


def day_index(dates, origin, mode: str) -> np.ndarray:
    """Integer time index of ``dates`` relative to ``origin`` (calendar or weekday count)."""
    dates = _dates(dates)
    origin = np.datetime64(origin, "D")
    if mode == "base":
        return (dates - origin).astype(int)
    if mode == "peak":
        return np.busday_count(origin, dates).astype(int)
    raise DataError(f"mode must be 'base' or 'peak', got {mode!r}")


@dataclass
class MarketData:
    mode: str
    spot_dates: np.ndarray
    spot_price: np.ndarray
    trade_dates: np.ndarray
    delivery_start: np.ndarray
    delivery_end: np.ndarray
    futures_price: np.ndarray

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"mode must be 'base' or 'peak', got {self.mode!r}")
        self.spot_dates = _dates(self.spot_dates)
        self.spot_price = np.asarray(self.spot_price, dtype=float)
        self.trade_dates = _dates(self.trade_dates)
        self.delivery_start = _dates(self.delivery_start)
        self.delivery_end = _dates(self.delivery_end)
        self.futures_price = np.asarray(self.futures_price, dtype=float)
        self.validate()

    def validate(self):
        if self.spot_dates.size == 0:
            raise DataError("no spot observations")
        if self.spot_dates.size != self.spot_price.size:
            raise DataError("spot dates and prices differ in length")
        n = self.trade_dates.size
        if not (self.delivery_start.size == self.delivery_end.size == self.futures_price.size == n):
            raise DataError("futures columns differ in length")
        bad = np.nonzero(np.diff(self.spot_dates) <= np.timedelta64(0, "D"))[0]
        if bad.size:
            raise DataError(f"spot dates not strictly increasing at row {bad[0] + 2}: {self.spot_dates[bad[0] + 1]}")
        for name, arr in (("spot price", self.spot_price), ("futures price", self.futures_price)):
            idx = np.nonzero(~np.isfinite(arr))[0]
            if idx.size:
                raise DataError(f"non-finite {name} in row {idx[0] + 1}")
        bad = np.nonzero(self.delivery_end < self.delivery_start)[0]
        if bad.size:
            raise DataError(f"futures row {bad[0] + 1}: delivery_end {self.delivery_end[bad[0]]} "
                            f"precedes delivery_start {self.delivery_start[bad[0]]}")
        bad = np.nonzero(self.trade_dates > self.delivery_start)[0]
        if bad.size:
            raise DataError(f"futures row {bad[0] + 1}: trade_date {self.trade_dates[bad[0]]} "
                            f"after delivery_start {self.delivery_start[bad[0]]}")
        if self.mode == "peak":
            wk = ~np.is_busday(self.spot_dates)
            if np.any(wk):
                raise DataError(f"peak spot series contains weekend date {self.spot_dates[np.argmax(wk)]}")
        if n and np.any(~np.is_busday(self.trade_dates)):
            raise DataError(f"futures trade date on a weekend: {self.trade_dates[np.argmax(~np.is_busday(self.trade_dates))]}")

    @property
    def origin(self):
        return self.spot_dates[0]

    def index(self, dates) -> np.ndarray:
        return day_index(dates, self.origin, self.mode)

    @property
    def spot_t(self) -> np.ndarray:
        return self.index(self.spot_dates)

    @property
    def fut_t(self) -> np.ndarray:
        return self.index(self.trade_dates)

    @property
    def fut_T1(self) -> np.ndarray:
        return self.index(self.delivery_start)

    @property
    def fut_T2(self) -> np.ndarray:
        return self.index(self.delivery_end + np.timedelta64(1, "D"))

    @property
    def fut_u(self) -> np.ndarray:
        """Time to the middle of the delivery period, in index units."""
        return 0.5 * (self.fut_T1 + self.fut_T2) - self.fut_t

    def equals(self, other: "MarketData", rtol: float = 0.0) -> bool:
        same_dates = all(np.array_equal(getattr(self, k), getattr(other, k))
                         for k in ("spot_dates", "trade_dates", "delivery_start", "delivery_end"))
        return (self.mode == other.mode and same_dates
                and np.allclose(self.spot_price, other.spot_price, rtol=rtol, atol=0.0)
                and np.allclose(self.futures_price, other.futures_price, rtol=rtol, atol=0.0))


def _read_csv(path, header):
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise DataError(f"{path}: line 1: expected header {','.join(header)}, got {first}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                dates = [np.datetime64(c.strip(), "D") for c in row[:-1]]
                price = float(row[-1])
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            rows.append((*dates, price))
    return rows


def load_market(spot_path, futures_path, mode: str) -> MarketData:
    spot = _read_csv(spot_path, SPOT_HEADER)
    fut = _read_csv(futures_path, FUTURES_HEADER)
    cols = list(zip(*fut)) if fut else [[], [], [], []]
    return MarketData(
        mode,
        [r[0] for r in spot],
        [r[1] for r in spot],
        cols[0], cols[1], cols[2], cols[3],
    )


def save_market(market: MarketData, spot_path, futures_path) -> None:
    with Path(spot_path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(SPOT_HEADER)
        for d, p in zip(market.spot_dates, market.spot_price):
            w.writerow([str(d), repr(float(p))])
    with Path(futures_path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(FUTURES_HEADER)
        for row in zip(market.trade_dates, market.delivery_start, market.delivery_end, market.futures_price):
            w.writerow([str(row[0]), str(row[1]), str(row[2]), repr(float(row[3]))])

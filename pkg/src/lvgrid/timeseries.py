"""Time axis conventions and CSV helpers for 15-minute series."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError

TS_H = 0.25
STEPS_PER_DAY = 96
STEPS_PER_YEAR = 35040
HOURS_PER_YEAR = 8760.0
DEFAULT_YEAR = 2025


def year_index(year: int = DEFAULT_YEAR, days: int | None = None) -> pd.DatetimeIndex:
    """Naive local-time 15-minute index starting on January 1st."""
    periods = STEPS_PER_YEAR if days is None else int(days) * STEPS_PER_DAY
    return pd.date_range(f"{year}-01-01", periods=periods, freq="15min")


def horizon_fraction(n_steps: int) -> float:
    return n_steps * TS_H / HOURS_PER_YEAR


def read_series_csv(path: str | Path, column: str = "kw", expected_len: int | None = STEPS_PER_YEAR) -> pd.Series:
    """Read a ``timestamp,<column>`` CSV into a float series on a 15-minute index."""
    path = Path(path)
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"missing file {path}") from None
    if list(df.columns[:2]) != ["timestamp", column]:
        raise ConfigError(f"{path}: expected header 'timestamp,{column}', got {','.join(df.columns)}")
    idx = pd.DatetimeIndex(pd.to_datetime(df["timestamp"]))
    if expected_len is not None and len(idx) != expected_len:
        raise ConfigError(f"{path}: expected {expected_len} rows, got {len(idx)}")
    if len(idx) > 1 and not (np.diff(idx.asi8) == 15 * 60 * 10**9).all():
        raise ConfigError(f"{path}: timestamps are not on a regular 15-minute cadence")
    return pd.Series(df[column].to_numpy(dtype=float), index=idx, name=column)


def write_series_csv(path: str | Path, series: pd.Series, column: str = "kw") -> None:
    df = pd.DataFrame(
        {"timestamp": series.index.strftime("%Y-%m-%dT%H:%M:%S"), column: np.round(series.to_numpy(), 6)}
    )
    df.to_csv(path, index=False)

# egogaze/logger.py
"""
Buffered CSV logger for run data (loss curves, per-frame metric rows)
Version: 1.1.0 - column set is given per log instead of fixed DAQ channels
"""

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class CsvLogger:
    def __init__(self, path: Path, columns: Sequence[str]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.columns = list(columns)
        # 1MB buffer: training writes a row per optimiser step
        self.f = open(self.path, "w", newline="", buffering=1024 * 1024)
        self.w = csv.writer(self.f)
        self.w.writerow(self.columns)

    def write(self, row: dict):
        self.w.writerow([_fmt(row.get(c)) for c in self.columns])

    def write_many(self, rows: Iterable[dict]):
        for row in rows:
            self.write(row)

    def flush(self):
        self.f.flush()

    def close(self):
        self.f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return "" if v is None else v

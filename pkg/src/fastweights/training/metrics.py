"""CSV metrics emission: step,split,metric,value,wallclock_s."""

from __future__ import annotations

import os
import time

HEADER = "step,split,metric,value,wallclock_s"


class MetricsWriter:
    def __init__(self, path: str):
        self.path = path
        self.t0 = time.monotonic()
        new = not os.path.exists(path) or os.path.getsize(path) == 0
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self._f = open(path, "a", encoding="utf-8", newline="\n")
        if new:
            self._f.write(HEADER + "\n")
            self._f.flush()

    def write(self, step: int, split: str, metric: str, value: float) -> None:
        wall = time.monotonic() - self.t0
        self._f.write(f"{step},{split},{metric},{value:.10g},{wall:.3f}\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

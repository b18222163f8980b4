"""Time series of moments and estimator values, with CSV round-tripping."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["TimeSeries", "SERIES_COLUMNS", "format_float"]

SERIES_COLUMNS = ("t", "mass", "px", "py", "pz", "energy", "entropy", "accepted", "defect_sum")


def format_float(x) -> str:
    """Shortest repr that round-trips; identical inputs give identical text."""
    return repr(float(x))


@dataclass
class TimeSeries:
    """Moments recorded at output times.

    ``accepted`` and ``defect_sum`` refer to the interval ending at each time
    (zero in the first row).  ``defect_sum`` is in energy units, so that
    ``energy[k] - energy[k-1] == defect_sum[k]`` up to rounding.  ``extra``
    holds further per-time columns (standard errors, norms, oracle leakage);
    ``probe_values[k, p]`` is the density estimate at ``probes[p]``.
    """

    times: np.ndarray
    mass: np.ndarray
    momentum: np.ndarray
    energy: np.ndarray
    entropy: np.ndarray
    accepted: np.ndarray
    defect_sum: np.ndarray
    extra: dict = field(default_factory=dict)
    probes: np.ndarray | None = None
    probe_values: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        n = self.times.size
        self.mass = np.asarray(self.mass, dtype=float).reshape(n)
        self.momentum = np.asarray(self.momentum, dtype=float).reshape(n, 3)
        self.energy = np.asarray(self.energy, dtype=float).reshape(n)
        self.entropy = np.asarray(self.entropy, dtype=float).reshape(n)
        self.accepted = np.asarray(self.accepted, dtype=np.int64).reshape(n)
        self.defect_sum = np.asarray(self.defect_sum, dtype=float).reshape(n)
        self.extra = {k: np.asarray(v, dtype=float).reshape(n) for k, v in self.extra.items()}
        if self.probe_values is not None:
            self.probe_values = np.asarray(self.probe_values, dtype=float)
            self.probes = np.asarray(self.probes, dtype=float).reshape(-1, 3)

    def __len__(self):
        return self.times.size

    @property
    def alpha(self) -> float | None:
        a = self.config.get("alpha")
        return None if a is None else float(a)

    # -- CSV ----------------------------------------------------------------

    def series_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(SERIES_COLUMNS) + "\n")
        for k in range(len(self)):
            row = [
                format_float(self.times[k]),
                format_float(self.mass[k]),
                *(format_float(x) for x in self.momentum[k]),
                format_float(self.energy[k]),
                format_float(self.entropy[k]),
                str(int(self.accepted[k])),
                format_float(self.defect_sum[k]),
            ]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def extras_csv(self) -> str:
        keys = sorted(self.extra)
        buf = io.StringIO()
        buf.write(",".join(["t", *keys]) + "\n")
        for k in range(len(self)):
            buf.write(",".join([format_float(self.times[k]),
                                *(format_float(self.extra[c][k]) for c in keys)]) + "\n")
        return buf.getvalue()

    def probes_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,probe,vx,vy,vz,fhat\n")
        if self.probe_values is None:
            return buf.getvalue()
        for k in range(len(self)):
            for p in range(self.probes.shape[0]):
                buf.write(",".join([
                    format_float(self.times[k]), str(p),
                    *(format_float(x) for x in self.probes[p]),
                    format_float(self.probe_values[k, p]),
                ]) + "\n")
        return buf.getvalue()

    def write(self, directory, stem: str = "series") -> Path:
        """Write ``<stem>.csv``, ``<stem>_extra.csv`` and ``<stem>_probes.csv``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        main = d / f"{stem}.csv"
        main.write_text(self.series_csv())
        (d / f"{stem}_extra.csv").write_text(self.extras_csv())
        if self.probe_values is not None:
            (d / f"{stem}_probes.csv").write_text(self.probes_csv())
        return main

    @classmethod
    def read(cls, path, config: dict | None = None) -> "TimeSeries":
        """Read ``series.csv`` and, when present, its extra and probe companions."""
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != SERIES_COLUMNS:
            raise ValueError(f"{path}: header {rows[0]} does not match {SERIES_COLUMNS}")
        body = rows[1:]
        col = {name: [r[i] for r in body] for i, name in enumerate(SERIES_COLUMNS)}
        f = lambda name: np.array([float(x) for x in col[name]])  # noqa: E731
        extra = {}
        stem = path.with_suffix("")
        xp = Path(f"{stem}_extra.csv")
        if xp.exists():
            with open(xp, newline="") as fh:
                xr = list(csv.reader(fh))
            for i, name in enumerate(xr[0][1:], start=1):
                extra[name] = np.array([float(r[i]) for r in xr[1:]])
        probes = values = None
        pp = Path(f"{stem}_probes.csv")
        if pp.exists():
            with open(pp, newline="") as fh:
                pr = list(csv.reader(fh))[1:]
            if pr:
                npb = max(int(r[1]) for r in pr) + 1
                arr = np.array([[float(x) for x in r] for r in pr])
                probes = arr[:npb, 2:5]
                values = arr[:, 5].reshape(-1, npb)
        return cls(
            times=f("t"), mass=f("mass"),
            momentum=np.column_stack([f("px"), f("py"), f("pz")]),
            energy=f("energy"), entropy=f("entropy"),
            accepted=np.array([int(x) for x in col["accepted"]]),
            defect_sum=f("defect_sum"), extra=extra,
            probes=probes, probe_values=values, config=dict(config or {}),
        )

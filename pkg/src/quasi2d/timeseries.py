"""Per-step observables and their CSV form."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["COLUMNS", "TimeSeries", "read_csv"]

COLUMNS = (
    "time",
    "rho00",
    "rho11",
    "re_rho01",
    "im_rho01",
    "trace_defect",
    "link_dim",
    "max_bond",
    "discarded_weight",
)


@dataclass
class TimeSeries:
    """Reduced two-level density matrices on a uniform time grid.

    ``rho[n]`` is the state after ``n`` steps of size ``dt``.  ``link_dim``,
    ``max_bond`` and ``discarded_weight`` are chain diagnostics recorded at
    the same instants.
    """

    dt: float
    rho: np.ndarray
    link_dim: np.ndarray
    max_bond: np.ndarray
    discarded_weight: np.ndarray
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        n = self.rho.shape[0]
        self.link_dim = np.asarray(self.link_dim, dtype=int)
        self.max_bond = np.asarray(self.max_bond, dtype=int)
        self.discarded_weight = np.asarray(self.discarded_weight, dtype=float)
        for name in ("link_dim", "max_bond", "discarded_weight"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per time point")

    @classmethod
    def collect(cls, dt: float, records) -> "TimeSeries":
        """Build from ``(rho, link_dim, max_bond, discarded_weight)`` tuples."""
        rho, link, bond, disc = zip(*records)
        return cls(dt, np.array(rho), np.array(link), np.array(bond), np.array(disc))

    def __len__(self):
        return self.rho.shape[0]

    @property
    def time(self) -> np.ndarray:
        return self.dt * np.arange(len(self))

    @property
    def rho00(self) -> np.ndarray:
        return self.rho[:, 0, 0].real

    @property
    def rho11(self) -> np.ndarray:
        return self.rho[:, 1, 1].real

    @property
    def rho01(self) -> np.ndarray:
        return self.rho[:, 0, 1]

    @property
    def trace_defect(self) -> np.ndarray:
        return np.abs(self.rho00 + self.rho11 - 1.0)

    @property
    def hermiticity_defect(self) -> np.ndarray:
        return np.max(np.abs(self.rho - np.conj(np.swapaxes(self.rho, 1, 2))), axis=(1, 2))

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "time": self.time,
            "rho00": self.rho00,
            "rho11": self.rho11,
            "re_rho01": self.rho01.real,
            "im_rho01": self.rho01.imag,
            "trace_defect": self.trace_defect,
            "link_dim": self.link_dim,
            "max_bond": self.max_bond,
            "discarded_weight": self.discarded_weight,
        }

    def to_csv(self, path, reference: dict[str, np.ndarray] | None = None) -> Path:
        """Write with 17 significant digits; ``reference`` adds ``ref_*`` columns."""
        path = Path(path)
        cols = self.columns()
        if reference:
            for key, values in reference.items():
                values = np.asarray(values)
                if values.shape != (len(self),):
                    raise ValueError(f"reference column {key} does not match the time grid")
                cols[f"ref_{key}"] = values
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols.keys())
            for row in zip(*cols.values()):
                writer.writerow(_fmt(v) for v in row)
        return path


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def read_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, k] for k, name in enumerate(header)}

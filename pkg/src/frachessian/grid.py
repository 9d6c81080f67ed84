"""Grid-backed functions: multilinear on a box, a fallback profile outside."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .profiles import TestFunctionProfile, get_profile
from .serialize import dumps


@dataclass
class GridFunction:
    """Values on the m^n lattice of [c - R, c + R]^n, extended by ``phi`` outside."""

    R: float
    m: int
    values: np.ndarray
    phi: TestFunctionProfile
    center: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.values.ndim
        if self.values.shape != (self.m,) * n:
            raise ValueError(f"values must have shape {(self.m,) * n}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        self.center = np.zeros(n) if self.center is None else np.asarray(self.center, dtype=float)
        self._interp = None

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def h(self) -> float:
        return 2.0 * self.R / (self.m - 1)

    def axis(self, a: int = 0) -> np.ndarray:
        return self.center[a] + np.linspace(-self.R, self.R, self.m)

    def nodes(self) -> np.ndarray:
        """Node coordinates, row-major (C order), shape (m^n, n)."""
        axes = [self.axis(a) for a in range(self.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    @classmethod
    def from_profile(cls, phi: TestFunctionProfile, n: int, R: float, m: int, center=None) -> "GridFunction":
        c = np.zeros(n) if center is None else np.asarray(center, float)
        axes = [c[a] + np.linspace(-R, R, m) for a in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack(mesh, axis=-1)
        return cls(R=R, m=m, values=phi(X), phi=phi, center=c)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.R, self.m, np.asarray(values).reshape(self.values.shape), self.phi,
                            self.center.copy(), dict(self.meta))

    def inside(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.all(np.abs(X - self.center) <= self.R, axis=-1)

    def evaluate(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._interp is None:
            self._interp = RegularGridInterpolator(
                tuple(self.axis(a) for a in range(self.n)), self.values, method="linear"
            )
        flat = X.reshape(-1, self.n)
        out = np.empty(flat.shape[0])
        ins = self.inside(flat)
        if np.any(ins):
            out[ins] = self._interp(flat[ins])
        if np.any(~ins):
            out[~ins] = self.phi(flat[~ins])
        return out.reshape(X.shape[:-1])

    def __call__(self, X):
        return self.evaluate(X)

    # ------------------------------------------------------------ persistence

    def header(self) -> dict:
        h = {"n": self.n, "R": self.R, "m": self.m, "phi_name": self.phi.name,
             "phi_params": self.phi.params or {}, "center": self.center.tolist()}
        for key in ("s", "k"):
            if key in self.meta:
                h[key] = self.meta[key]
        return h

    def save(self, prefix, fmt: str = "csv") -> list[Path]:
        """Write ``prefix.json`` plus ``prefix.csv`` (coordinates, value) or ``prefix.bin``."""
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        head = self.header()
        head["format"] = fmt
        paths = [prefix.with_suffix(".json")]
        paths[0].write_text(dumps(head))
        if fmt == "csv":
            X = self.nodes()
            cols = [f"x{a}" for a in range(self.n)] + ["value"]
            lines = [",".join(cols)]
            for row, v in zip(X, self.values.ravel()):
                lines.append(",".join(format(float(c), ".17g") for c in (*row, v)))
            p = prefix.with_suffix(".csv")
            p.write_text("\n".join(lines) + "\n")
        elif fmt == "bin":
            p = prefix.with_suffix(".bin")
            p.write_bytes(self.values.astype("<f8").ravel(order="C").tobytes())
        else:
            raise ValueError("fmt must be csv or bin")
        paths.append(p)
        return paths

    @classmethod
    def load(cls, prefix, phi: Optional[TestFunctionProfile] = None) -> "GridFunction":
        prefix = Path(prefix)
        head = json.loads(prefix.with_suffix(".json").read_text())
        n, m = int(head["n"]), int(head["m"])
        if phi is None:
            params = head.get("phi_params") or {}
            phi = get_profile(head["phi_name"], n, **params)
        if head.get("format", "csv") == "bin":
            vals = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8").reshape((m,) * n)
        else:
            data = np.loadtxt(prefix.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
            vals = data[:, -1].reshape((m,) * n)
        meta = {k: head[k] for k in ("s", "k") if k in head}
        return cls(R=float(head["R"]), m=m, values=vals.copy(), phi=phi, center=np.asarray(head["center"]), meta=meta)

"""Shared numeric substrate: flat parameter vectors, seedable RNG streams, CSV tables.

All numerics are float64.  Parameter vectors are plain 1-D numpy arrays;
the helpers here validate shape/finiteness so downstream modules can assume
clean inputs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "as_param_vector",
    "lin_comb",
    "dot_p",
    "pnorm",
    "RngState",
    "ResultTable",
    "Checkpoint",
]


def as_param_vector(values) -> np.ndarray:
    """Validate and return a flat float64 parameter vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"parameter vector must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("parameter vector contains non-finite entries")
    return v


def lin_comb(a: float, x, b: float, y) -> np.ndarray:
    """Elementwise a*x + b*y. Inputs are not modified."""
    x = as_param_vector(x)
    y = as_param_vector(y)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("coefficients must be finite")
    return a * x + b * y


def dot_p(x, y, precond) -> float:
    """Preconditioned inner product sum_i x_i p_i y_i with p a positive diagonal."""
    x = as_param_vector(x)
    y = as_param_vector(y)
    p = as_param_vector(precond)
    if not (x.shape == y.shape == p.shape):
        raise ValueError("dimension mismatch between vectors and preconditioner")
    if np.any(p <= 0):
        raise ValueError("preconditioner entries must be strictly positive")
    return float(np.sum(x * p * y))


def pnorm(x, precond) -> float:
    """Norm induced by dot_p: sqrt(<x, x>_P)."""
    return float(np.sqrt(dot_p(x, x, precond)))


@dataclass(frozen=True)
class RngState:
    """Splittable, counter-based random stream.

    A stream is identified purely by (seed, fork-label path); the underlying
    generator is Philox keyed by SHA-256 of that identity, so child streams
    are independent of sibling order and bit-reproducible across platforms.
    """

    seed: int
    path: tuple[str, ...] = ()

    def fork(self, label: str) -> "RngState":
        return replace(self, path=self.path + (str(label),))

    def _key(self) -> int:
        ident = f"{self.seed}\x1f" + "\x1f".join(self.path)
        digest = hashlib.sha256(ident.encode("utf-8")).digest()
        # Philox takes a 128-bit key
        return int.from_bytes(digest[:16], "little")

    def generator(self) -> np.random.Generator:
        """Fresh generator for this stream; same state => same sequence."""
        return np.random.Generator(np.random.Philox(key=self._key()))


def _format_cell(v) -> str:
    if isinstance(v, str):
        return v
    f = float(v)
    if np.isnan(f):
        return "nan"
    return f"{f:.17g}"


@dataclass
class ResultTable:
    """Column-named table of floats/strings with strict row widths."""

    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def add_row(self, *cells) -> None:
        if len(cells) != len(self.columns):
            raise ValueError(
                f"row has {len(cells)} cells, table has {len(self.columns)} columns"
            )
        self.rows.append(list(cells))

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([float(r[i]) for r in self.rows])

    def write_csv(self, path) -> None:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_format_cell(c) for c in row))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path) -> "ResultTable":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().split("\n") if ln != ""]
        if not lines:
            raise ValueError(f"{path}: empty CSV")
        table = cls(columns=lines[0].split(","))
        for ln in lines[1:]:
            cells = []
            for c in ln.split(","):
                try:
                    cells.append(float(c))
                except ValueError:
                    cells.append(c)
            table.add_row(*cells)
        return table


@dataclass(frozen=True)
class Checkpoint:
    """Flat parameters plus provenance (model kind, seed, images-seen budget)."""

    params: np.ndarray
    model_kind: str  # "gaussian" | "ddpm" | "categorical"
    seed: int = 0
    budget_images: int = 0
    lr: float = 0.0
    meta: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", as_param_vector(self.params))
        if self.budget_images < 0:
            raise ValueError("budget_images must be nonnegative")

    @property
    def dim(self) -> int:
        return self.params.shape[0]

    def with_params(self, params, **meta_updates) -> "Checkpoint":
        extra = tuple(sorted({**dict(self.meta), **{k: str(v) for k, v in meta_updates.items()}}.items()))
        return replace(self, params=as_param_vector(params), meta=extra)

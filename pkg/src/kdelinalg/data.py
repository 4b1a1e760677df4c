"""Point-set ingestion, CSV output and synthetic generators."""

from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np

from .kernels import KernelSpec, PointSet
from .kernelsum import generate_dp_dataset

DP_MAX_N = 10_000
_SPLIT = re.compile(r"[,\s]+")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_points(text: str) -> PointSet:
    """One point per line, comma- or whitespace-separated; blank lines skipped."""
    rows = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = [t for t in _SPLIT.split(line) if t]
        try:
            row = [float(t) for t in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise ParseError(f"not a number: {bad!r}", lineno) from None
        if not all(math.isfinite(v) for v in row):
            raise ParseError("non-finite coordinate", lineno)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"expected {width} values, found {len(row)}", lineno)
        rows.append(row)
    if not rows:
        raise ParseError("no points found")
    return PointSet(np.array(rows))


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def ingest(path) -> PointSet:
    return parse_points(Path(path).read_text(encoding="utf-8"))


def format_points(X) -> str:
    coords = X.coords if isinstance(X, PointSet) else np.atleast_2d(X)
    return "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in coords)


def write_csv(X, path) -> None:
    Path(path).write_text(format_points(X), encoding="utf-8")


# Generators -----------------------------------------------------------------


def _identical(rng, n=100, d=2):
    point = rng.normal(size=d)
    return np.tile(point, (n, 1))


def _separated(rng, n=100, d=2, gap=1e3):
    # Points on a scaled lattice line plus jitter: pairwise distance >= gap.
    coords = np.zeros((n, d))
    coords[:, 0] = gap * np.arange(n)
    coords[:, 1:] = rng.uniform(-0.25, 0.25, size=(n, d - 1)) * gap if d > 1 else 0.0
    return coords


def _gaussian_blobs(rng, n=500, d=5, k=5, spread=0.5, center_scale=3.0):
    centers = rng.normal(scale=center_scale, size=(k, d))
    labels = rng.integers(0, k, size=n)
    return centers[labels] + rng.normal(scale=spread, size=(n, d))


_INT_KEYS = {"n", "d", "k"}
_GENERATORS = {"identical": _identical, "separated": _separated, "gaussian_blobs": _gaussian_blobs}
GENERATOR_KINDS = (*_GENERATORS, "dp")


def parse_gen_spec(spec: str) -> tuple[str, dict]:
    """``"kind:key=val,key=val"`` into ``(kind, params)``."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"generator parameter {item!r} is not key=value")
        key = key.strip()
        try:
            params[key] = int(value) if key in _INT_KEYS else float(value)
        except ValueError:
            raise ValueError(f"generator parameter {key} has a bad value {value!r}") from None
    return kind, params


def generate(kind: str, params: dict | None = None, seed: int = 0, spec: KernelSpec | None = None) -> PointSet:
    params = dict(params or {})
    if kind == "dp":
        n = int(params.pop("n", 1000))
        if n > DP_MAX_N:
            raise ValueError(f"dp generator is capped at n = {DP_MAX_N}")
        p = params.pop("p", 1 / math.sqrt(n))
        scale = params.pop("scale", None)
        if params:
            raise ValueError(f"unknown dp parameters: {sorted(params)}")
        return generate_dp_dataset(n, p, scale, seed, spec)
    if kind not in _GENERATORS:
        raise ValueError(f"unknown generator kind {kind!r}; expected one of {', '.join(GENERATOR_KINDS)}")
    rng = np.random.default_rng([int(seed), 0x47454E])
    try:
        coords = _GENERATORS[kind](rng, **params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind}: {exc}") from None
    return PointSet(coords)

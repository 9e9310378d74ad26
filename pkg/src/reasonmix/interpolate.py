"""Static/dynamic parameter interpolation and structural diagnostics.

``interpolate`` forms the λ-weighted blend of two aligned checkpoints.
``diagnose_connectivity`` reports per-tensor cosine similarity and L2
distance between the endpoints; ``scan_barrier`` evaluates a loss along the
straight parameter path and measures the barrier height above the worse
endpoint.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeMismatchError, StructureMismatchError, ValidationError, BarrierEvalError
from .tensors import NamedTensorArchive, archive_digest

#: Number of decimals λ is quantized to by the merge cache; bounds the cache
#: to at most 101 distinct merged models.
CACHE_LAMBDA_DECIMALS = 2


def validate_lambda(lam: float) -> float:
    lam = float(lam)
    if math.isnan(lam) or not 0.0 <= lam <= 1.0:
        raise ValidationError(f"reasoning intensity must lie in [0, 1], got {lam}")
    return lam


def check_aligned(a: NamedTensorArchive, b: NamedTensorArchive) -> None:
    """Raise unless both archives have identical names, shapes and dtypes."""
    if a.names() != b.names():
        names_a, names_b = set(a.names()), set(b.names())
        raise StructureMismatchError(
            missing=sorted(names_a - names_b), extra=sorted(names_b - names_a)
        )
    for name in a.names():
        ta, tb = a[name], b[name]
        if ta.shape != tb.shape or ta.dtype != tb.dtype:
            raise ShapeMismatchError(
                f"tensor '{name}': {ta.shape}/{ta.dtype} vs {tb.shape}/{tb.dtype}"
            )


def interpolate(
    instruct: NamedTensorArchive,
    thinking: NamedTensorArchive,
    lam: float,
) -> NamedTensorArchive:
    """Blend two aligned checkpoints: λ·thinking + (1−λ)·instruct per tensor.

    λ=0 and λ=1 return tensors bit-identical to the respective endpoint.
    Interior blends are accumulated in float64, cast back to the storage
    dtype and clamped to the elementwise [min, max] envelope of the inputs,
    so every output scalar is a true convex combination.  Metadata records
    both source digests and the coefficient.
    """
    lam = validate_lambda(lam)
    check_aligned(instruct, thinking)
    merged: dict[str, np.ndarray] = {}
    for name, ti in instruct.items():
        tt = thinking[name]
        if lam == 0.0:
            out = ti.copy()
        elif lam == 1.0:
            out = tt.copy()
        else:
            blend = lam * tt.astype(np.float64) + (1.0 - lam) * ti.astype(np.float64)
            out = blend.astype(ti.dtype)
            np.clip(out, np.minimum(ti, tt), np.maximum(ti, tt), out=out)
        merged[name] = out
    metadata = instruct.metadata
    metadata.update(
        {
            "merge_lambda": repr(lam),
            "merge_instruct_digest": archive_digest(instruct),
            "merge_thinking_digest": archive_digest(thinking),
        }
    )
    return NamedTensorArchive(merged, metadata)


class MergeCache:
    """In-memory cache of merged checkpoints for one (instruct, thinking) pair.

    Keys are λ rounded to :data:`CACHE_LAMBDA_DECIMALS` decimals, so at most
    101 merges are ever materialized; the merge itself uses the rounded
    coefficient.  Safe under concurrent use; duplicate inserts are
    last-writer-wins.
    """

    def __init__(self, instruct: NamedTensorArchive, thinking: NamedTensorArchive):
        check_aligned(instruct, thinking)
        self._instruct = instruct
        self._thinking = thinking
        self._cache: dict[float, NamedTensorArchive] = {}
        self._lock = threading.Lock()

    def quantize(self, lam: float) -> float:
        return round(validate_lambda(lam), CACHE_LAMBDA_DECIMALS)

    def merge(self, lam: float) -> NamedTensorArchive:
        key = self.quantize(lam)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        merged = interpolate(self._instruct, self._thinking, key)
        with self._lock:
            self._cache[key] = merged
        return merged

    def __len__(self) -> int:
        with self._lock:
            return len(self._cache)


@dataclass(frozen=True)
class LayerDiagnostic:
    name: str
    cosine: float | None  # None when the similarity is undefined (zero norm)
    l2: float


@dataclass(frozen=True)
class ConnectivityReport:
    per_layer: tuple[LayerDiagnostic, ...]
    min_cosine: float
    argmax_l2_layer: str

    def to_dict(self) -> dict:
        return {
            "per_layer": [
                {"name": d.name, "cosine": d.cosine, "l2": d.l2} for d in self.per_layer
            ],
            "min_cosine": self.min_cosine,
            "argmax_l2_layer": self.argmax_l2_layer,
        }


def diagnose_connectivity(
    instruct: NamedTensorArchive, thinking: NamedTensorArchive
) -> ConnectivityReport:
    """Per-tensor cosine similarity and L2 distance between two checkpoints.

    A zero-norm tensor yields a flagged entry (cosine None) rather than an
    error.  Entries follow the archives' deterministic name order.
    """
    from .tensors import cosine_similarity, l2_distance
    from .errors import ZeroNormError

    check_aligned(instruct, thinking)
    if len(instruct) == 0:
        raise ValidationError("cannot diagnose empty archives")
    rows: list[LayerDiagnostic] = []
    for name, ti in instruct.items():
        tt = thinking[name]
        try:
            cos: float | None = cosine_similarity(ti, tt)
        except ZeroNormError:
            cos = None
        rows.append(LayerDiagnostic(name=name, cosine=cos, l2=l2_distance(ti, tt)))
    defined = [r.cosine for r in rows if r.cosine is not None]
    min_cos = min(defined) if defined else math.nan
    argmax = max(rows, key=lambda r: r.l2).name
    return ConnectivityReport(per_layer=tuple(rows), min_cosine=min_cos, argmax_l2_layer=argmax)


@dataclass(frozen=True)
class BarrierScan:
    grid: tuple[float, ...]
    losses: tuple[float, ...]
    barrier_height: float

    def to_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "losses": list(self.losses),
            "barrier_height": self.barrier_height,
        }


def default_grid(points: int = 21) -> list[float]:
    """Evenly spaced λ grid over [0, 1] with exact endpoints."""
    if points < 2:
        raise ValidationError("grid needs at least the two endpoints")
    grid = [i / (points - 1) for i in range(points)]
    grid[0], grid[-1] = 0.0, 1.0
    return grid


def _check_grid(grid: Sequence[float], require_endpoints: bool = True) -> list[float]:
    vals = [validate_lambda(g) for g in grid]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValidationError(f"grid must be strictly ascending, got {vals}")
    if require_endpoints and (not vals or vals[0] != 0.0 or vals[-1] != 1.0):
        raise ValidationError("grid must contain both endpoints 0 and 1")
    return vals


def scan_barrier(
    instruct: NamedTensorArchive,
    thinking: NamedTensorArchive,
    grid: Sequence[float],
    loss_eval: Callable[[NamedTensorArchive], float],
) -> BarrierScan:
    """Evaluate ``loss_eval`` along the interpolation path over ``grid``.

    Barrier height is max path loss minus the worse endpoint loss; a
    negative value means the whole path sits below both endpoints.
    """
    vals = _check_grid(grid, require_endpoints=True)
    losses: list[float] = []
    for lam in vals:
        merged = interpolate(instruct, thinking, lam)
        try:
            loss = float(loss_eval(merged))
        except Exception as exc:  # propagate with the offending coefficient
            raise BarrierEvalError(lam, str(exc)) from exc
        losses.append(loss)
    endpoint_worst = max(losses[0], losses[-1])
    return BarrierScan(
        grid=tuple(vals),
        losses=tuple(losses),
        barrier_height=max(losses) - endpoint_worst,
    )

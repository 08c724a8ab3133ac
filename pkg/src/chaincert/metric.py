"""Bounded product metric on labelled states and deterministic seed streams.

States are pairs z = (x, y) of finite coordinate vectors. The distance is the
normalized coordinate sum

    d(z, zbar) = (||x - xbar||_2 + ||y - ybar||_2) / kappa,

where kappa is a declared normalizer chosen so that d never exceeds the
declared diameter bound (1 by default). The normalizer is part of the metric
declaration, not inferred from data; the bound is checked on every evaluation.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

_REL_SLACK = 1e-12


def _as_coords(values, label: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise InvalidInputError(
            f"{label} must be a flat coordinate vector, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{label} contains a non-finite coordinate")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ZPoint:
    """A labelled state z = (x, y); coordinates are finite by construction."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_coords(self.x, "x"))
        object.__setattr__(self, "y", _as_coords(self.y, "y"))

    def __eq__(self, other):
        if not isinstance(other, ZPoint):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)

    def __repr__(self):
        return f"ZPoint(x={self.x.tolist()}, y={self.y.tolist()})"


@dataclass(frozen=True)
class MetricSpec:
    """Declared geometry: coordinate dimensions, normalizer, diameter bound."""

    dim_x: int
    dim_y: int
    kappa: float
    diameter_bound: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.dim_x, int) and self.dim_x >= 1):
            raise InvalidInputError(f"dim_x must be a positive integer, got {self.dim_x}")
        if not (isinstance(self.dim_y, int) and self.dim_y >= 1):
            raise InvalidInputError(f"dim_y must be a positive integer, got {self.dim_y}")
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise InvalidInputError(f"kappa must be finite and positive, got {self.kappa}")
        if not (np.isfinite(self.diameter_bound) and self.diameter_bound > 0):
            raise InvalidInputError(
                f"diameter_bound must be finite and positive, got {self.diameter_bound}"
            )

    def check_point(self, z: ZPoint) -> None:
        if z.x.shape != (self.dim_x,) or z.y.shape != (self.dim_y,):
            raise InvalidInputError(
                f"point dimensions ({z.x.shape[0]}, {z.y.shape[0]}) do not match "
                f"the declared ({self.dim_x}, {self.dim_y})"
            )


def project_x(z: ZPoint) -> np.ndarray:
    """Feature part of a state."""
    return z.x


def project_y(z: ZPoint) -> np.ndarray:
    """Label part of a state."""
    return z.y


def _check_raw_bound(raw, spec: MetricSpec) -> None:
    limit = spec.kappa * spec.diameter_bound
    worst = float(np.max(raw))
    if worst > limit * (1.0 + _REL_SLACK):
        raise InvalidInputError(
            f"kappa bound violated: raw coordinate-sum distance {worst!r} exceeds "
            f"kappa*diameter_bound = {limit!r}; declare a larger kappa"
        )


def dist(z: ZPoint, zbar: ZPoint, spec: MetricSpec) -> float:
    """Normalized sum distance; guaranteed inside [0, diameter_bound]."""
    spec.check_point(z)
    spec.check_point(zbar)
    raw = float(np.linalg.norm(z.x - zbar.x)) + float(np.linalg.norm(z.y - zbar.y))
    _check_raw_bound(raw, spec)
    return raw / spec.kappa


def pairwise_dist(
    xs1: np.ndarray, ys1: np.ndarray, xs2: np.ndarray, ys2: np.ndarray, spec: MetricSpec
) -> np.ndarray:
    """Distance matrix between two stacked state arrays, same bound check."""
    from scipy.spatial.distance import cdist

    raw = cdist(xs1, xs2) + cdist(ys1, ys2)
    _check_raw_bound(raw, spec)
    return raw / spec.kappa


# -- deterministic seed streams ------------------------------------------------

_U64 = 2**64


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one deterministic random stream."""

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for label, v in (("master_seed", self.master_seed), ("stream_index", self.stream_index)):
            if not (isinstance(v, int) and 0 <= v < _U64):
                raise InvalidInputError(f"{label} must be an integer in [0, 2^64), got {v!r}")


def derive_stream(seed: SeedSpec, child_index: int) -> SeedSpec:
    """Deterministic child stream.

    Parent and child indices are combined through SHA-256 (truncated to 64
    bits), so distinct (parent, child) pairs map to distinct streams up to a
    negligible collision probability, and derivation can be nested.
    """
    if not (isinstance(child_index, int) and 0 <= child_index < _U64):
        raise InvalidInputError(f"child_index must be an integer in [0, 2^64), got {child_index!r}")
    digest = hashlib.sha256(struct.pack("<QQ", seed.stream_index, child_index)).digest()
    return SeedSpec(seed.master_seed, int.from_bytes(digest[:8], "little"))


def make_rng(seed: SeedSpec) -> np.random.Generator:
    """PCG64 generator keyed by (master_seed, stream_index); bit-stable across runs."""
    ss = np.random.SeedSequence(entropy=seed.master_seed, spawn_key=(seed.stream_index,))
    return np.random.default_rng(ss)

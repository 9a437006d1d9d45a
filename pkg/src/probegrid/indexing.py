"""Grid indexing math: level resolutions, corner enumeration, spatial hashes.

Everything here is a pure function of its inputs; the trainable state lives
in :mod:`probegrid.codebooks`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainViolation, InvalidHyperparameter

_U32 = np.uint64(0xFFFFFFFF)

# Primary hash primes are the classic spatial-hash constants; the auxiliary
# set must differ elementwise (except the optional leading 1) so the two
# hashes decorrelate.  Fixed here so model files stay portable.
PRIMARY_PRIMES = (1, 2654435761, 805459861)
AUX_PRIMES = (1, 3674653429, 2097192037)


class LevelMode(Enum):
    DENSE = "dense"
    HASHED = "hashed"


@dataclass(frozen=True)
class LevelSpec:
    """Resolution and indexing mode of one multiresolution level."""

    level: int
    resolution: int
    mode: LevelMode

    @property
    def vertex_count_1d(self) -> int:
        return self.resolution + 1


@dataclass(frozen=True)
class HashPrimes:
    """Primary and auxiliary prime multipliers for the two spatial hashes."""

    primary: tuple[int, ...] = PRIMARY_PRIMES
    auxiliary: tuple[int, ...] = AUX_PRIMES

    def __post_init__(self):
        for i, (p, q) in enumerate(zip(self.primary, self.auxiliary)):
            if i >= 1 and p == q:
                raise InvalidHyperparameter(
                    f"primary and auxiliary primes must differ at axis {i}")


@dataclass(frozen=True)
class CornerSet:
    """The 2^d cell corners enclosing a point and their blend weights."""

    corners: np.ndarray  # (2^d, d) int64
    weights: np.ndarray  # (2^d,) float64


def level_resolution(level: int, n_min: int, n_max: int, n_levels: int) -> int:
    """Per-axis grid resolution of `level` on the geometric ladder n_min..n_max.

    The growth factor is b = exp((ln n_max - ln n_min) / (n_levels - 1)); the
    result is floor(n_min * b^level) with both endpoints exact.
    """
    if n_min < 1 or n_max < n_min:
        raise InvalidHyperparameter(
            f"need n_max >= n_min >= 1, got n_min={n_min} n_max={n_max}")
    if n_levels < 1:
        raise InvalidHyperparameter(f"need n_levels >= 1, got {n_levels}")
    if not 0 <= level < n_levels:
        raise InvalidHyperparameter(f"level {level} outside [0, {n_levels})")
    if n_levels == 1 or level == 0:
        return n_min
    if level == n_levels - 1:
        return n_max
    step = (math.log(n_max) - math.log(n_min)) / (n_levels - 1)
    t = n_min * math.exp(level * step)
    r = math.floor(t)
    # b^level can be an exact integer (e.g. 16 * 32^(6/15) = 64); guard the
    # floor against the exponential landing epsilon below it.
    if t - r > 1.0 - 1e-9:
        r += 1
    return r


def build_level_specs(n_min: int, n_max: int, n_levels: int, n_f: int,
                      d: int) -> list[LevelSpec]:
    """All level specs for a model; dense whenever the full vertex grid fits."""
    specs = []
    for lv in range(n_levels):
        res = level_resolution(lv, n_min, n_max, n_levels)
        mode = LevelMode.DENSE if (res + 1) ** d <= n_f else LevelMode.HASHED
        specs.append(LevelSpec(level=lv, resolution=res, mode=mode))
    return specs


def enclosing_corners(x, resolution: int) -> CornerSet:
    """Enclosing cell corners of x in [0,1]^d on a grid with `resolution` cells.

    Corner k has coordinates floor(x * resolution) + c where bit (d-1-i) of k
    gives c_i, and weight prod_i (1-t_i)^(1-c_i) * t_i^c_i with
    t = frac(x * resolution).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DomainViolation(f"expected a single point, got shape {x.shape}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainViolation(f"coordinates outside [0,1]: {x}")
    d = x.shape[0]
    scaled = x * resolution
    base = np.floor(scaled).astype(np.int64)
    t = scaled - base
    n = 1 << d
    corners = np.zeros((n, d), dtype=np.int64)
    weights = np.ones(n, dtype=np.float64)
    for k in range(n):
        for i in range(d):
            c = (k >> (d - 1 - i)) & 1
            corners[k, i] = base[i] + c
            weights[k] *= t[i] if c else 1.0 - t[i]
    return CornerSet(corners=corners, weights=weights)


def spatial_hash(v, primes) -> int:
    """XOR-combined 32-bit wrapping products of vertex coordinates and primes."""
    h = 0
    for vi, p in zip(v, primes):
        h ^= (int(vi) * int(p)) & 0xFFFFFFFF
    return h & 0xFFFFFFFF


def dense_index(v, resolution: int, d: int) -> int:
    """Row-major vertex index v_0 + s*(v_1 + s*v_2) with s = resolution + 1."""
    if len(v) != d:
        raise InvalidHyperparameter(f"vertex {v} is not {d}-dimensional")
    s = resolution + 1
    idx = 0
    for vi in reversed(v):
        vi = int(vi)
        if vi < 0 or vi > resolution:
            raise DomainViolation(
                f"vertex {tuple(v)} outside dense grid of resolution {resolution}")
        idx = idx * s + vi
    return idx


def compose_probed_index(h: int, probe: int, n_p: int, n_f: int) -> int:
    """Final feature-table index: ((n_p * h) mod n_f) + probe.

    The hash provides the high bits, the probe offset the low log2(n_p) bits,
    so the result always stays inside [0, n_f).
    """
    validate_probe_shape(n_p, n_f)
    if not 0 <= probe < n_p:
        raise InvalidHyperparameter(f"probe {probe} outside [0, {n_p})")
    return ((n_p * int(h)) % n_f) + probe


def validate_probe_shape(n_p: int, n_f: int) -> None:
    if not _is_pow2(n_f):
        raise InvalidHyperparameter(f"n_f={n_f} is not a power of two")
    if not _is_pow2(n_p):
        raise InvalidHyperparameter(f"n_p={n_p} is not a power of two")
    if n_f % n_p != 0:
        raise InvalidHyperparameter(f"n_p={n_p} does not divide n_f={n_f}")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def hash_grid_vertices(vertices: np.ndarray, primes) -> np.ndarray:
    """Vectorized spatial_hash over an (n, d) int array; returns uint32."""
    v = np.asarray(vertices, dtype=np.int64).astype(np.uint64) & _U32
    h = np.zeros(v.shape[0], dtype=np.uint64)
    for i, p in enumerate(primes[: v.shape[1]]):
        h ^= (v[:, i] * np.uint64(p)) & _U32
    return h.astype(np.uint32)

"""Force vectors, force-fidelity metrics and seeded random streams."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

EPSILON = 1e-9  # newtons; below this a force has no defined direction


class DegenerateVectorError(ValueError):
    """Raised when a metric needs the direction of a (near-)zero force."""


@dataclass(frozen=True)
class ForceVec:
    """3-axis contact force in newtons."""

    fx: float
    fy: float
    fz: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.fx) and math.isfinite(self.fy) and math.isfinite(self.fz)):
            raise ValueError(f"non-finite force component in {self!r}")

    @classmethod
    def from_array(cls, arr) -> ForceVec:
        x, y, z = (float(v) for v in arr)
        return cls(x, y, z)

    @classmethod
    def zero(cls) -> ForceVec:
        return cls(0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.fz], dtype=float)

    def magnitude(self) -> float:
        return math.sqrt(self.fx * self.fx + self.fy * self.fy + self.fz * self.fz)

    def dot(self, other: ForceVec) -> float:
        return self.fx * other.fx + self.fy * other.fy + self.fz * other.fz

    def __add__(self, other: ForceVec) -> ForceVec:
        return ForceVec(self.fx + other.fx, self.fy + other.fy, self.fz + other.fz)

    def __sub__(self, other: ForceVec) -> ForceVec:
        return ForceVec(self.fx - other.fx, self.fy - other.fy, self.fz - other.fz)

    def __mul__(self, k: float) -> ForceVec:
        return ForceVec(self.fx * k, self.fy * k, self.fz * k)

    __rmul__ = __mul__

    def __iter__(self):
        return iter((self.fx, self.fy, self.fz))


def _require_nondegenerate(*vecs: ForceVec, eps: float = EPSILON) -> None:
    for v in vecs:
        if v.magnitude() <= eps:
            raise DegenerateVectorError(f"force {v} has magnitude <= {eps} N")


def cosine_similarity(a: ForceVec, b: ForceVec, eps: float = EPSILON) -> float:
    _require_nondegenerate(a, b, eps=eps)
    c = a.dot(b) / (a.magnitude() * b.magnitude())
    return min(1.0, max(-1.0, c))


def amplitude_ratio(gt: ForceVec, measured: ForceVec, eps: float = EPSILON) -> float:
    """||measured|| / ||gt||; above 1 is amplification, below 1 attenuation."""
    _require_nondegenerate(gt, eps=eps)
    return measured.magnitude() / gt.magnitude()


def angle_between_deg(a: ForceVec, b: ForceVec, eps: float = EPSILON) -> float:
    """arccos of the cosine similarity, in degrees.

    Evaluated as atan2(|a x b|, a . b): the same angle, but well conditioned
    near 0 and 180 degrees, and exactly 0 for parallel inputs.
    """
    _require_nondegenerate(a, b, eps=eps)
    cross = np.cross(a.as_array(), b.as_array())
    return math.degrees(math.atan2(float(np.linalg.norm(cross)), a.dot(b)))


def cosine_similarity_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity of two (n, 3) arrays. Callers drop degenerate rows first."""
    num = np.einsum("ij,ij->i", a, b)
    den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    return np.clip(num / den, -1.0, 1.0)


def amplitude_ratio_rows(gt: np.ndarray, measured: np.ndarray) -> np.ndarray:
    return np.linalg.norm(measured, axis=1) / np.linalg.norm(gt, axis=1)


class RngStream:
    """Labelled, reproducible random stream.

    Backed by numpy's Philox4x64 counter-based generator. The 128-bit key is
    the first 16 bytes of ``sha256(f"{seed}:{label}")``, so a (seed, label)
    pair always maps to the same sequence on every platform, and distinct
    labels give unrelated keys. Uniform floats are 53-bit
    (``Generator.random``).
    """

    def __init__(self, seed: int, label: str = "root"):
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.label = label
        digest = hashlib.sha256(f"{self.seed}:{label}".encode()).digest()
        key = np.frombuffer(digest[:16], dtype="<u8").copy()
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def child(self, label: str) -> RngStream:
        """Independent substream; depends only on (seed, parent label, label)."""
        return RngStream(self.seed, f"{self.label}/{label}")

    def random(self, size=None):
        return self.generator.random(size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, label={self.label!r})"

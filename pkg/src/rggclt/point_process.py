"""Reproducible sampling of a stationary Poisson process restricted to a ball."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ModelParams
from .numerics import LogValue, log_unit_ball_volume

DEFAULT_MAX_EXPECTED = 5_000_000

_HEADER = struct.Struct("<qqdQQ")  # d, N, R, master_seed, stream_index
_SEED_MASK = (1 << 64) - 1


class FeasibilityError(RuntimeError):
    """Expected point count exceeds the configured cap."""

    def __init__(self, log_expected: float, cap: float):
        super().__init__(
            f"expected point count exp({log_expected:.6g}) exceeds the cap {cap:.6g}; "
            "reduce the intensity or the sampling radius"
        )
        self.log_expected = log_expected
        self.cap = cap


class RngStream:
    """Counter-based (Philox) stream identified by ``(master_seed, stream_index)``.

    Streams with equal identity yield identical sequences; distinct indices map
    to distinct Philox keys via ``SeedSequence`` spawn keys.
    """

    def __init__(self, master_seed: int, stream_index: int, subkey: tuple[int, ...] = ()):
        if stream_index < 0:
            raise ValueError("stream_index must be non-negative")
        self.master_seed = int(master_seed) & _SEED_MASK
        self.stream_index = int(stream_index)
        self.subkey = tuple(int(k) for k in subkey)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index, *self.subkey))
        self.generator = np.random.Generator(np.random.Philox(seq))

    @property
    def identity(self) -> tuple[int, int]:
        return self.master_seed, self.stream_index

    def spawn(self, k: int) -> RngStream:
        """Child stream for sub-block ``k``; independent of the parent's state."""
        return RngStream(self.master_seed, self.stream_index, self.subkey + (k,))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index}, subkey={self.subkey})"


def derive_stream(master_seed: int, stream_index: int) -> RngStream:
    return RngStream(master_seed, stream_index)


@dataclass(frozen=True, eq=False)
class PointConfiguration:
    """A sampled realization inside ``B(0, sampling_radius)``; read-only."""

    dimension: int
    sampling_radius: float
    points: np.ndarray
    master_seed: int = 0
    stream_index: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, self.dimension)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.n_points

    def flat(self) -> np.ndarray:
        return self.points.reshape(-1)

    def with_points(self, extra) -> PointConfiguration:
        """New configuration with ``extra`` points appended (same provenance).

        Appended points are not required to lie inside the sampling radius.
        """
        extra = np.asarray(extra, dtype=np.float64).reshape(-1, self.dimension)
        return PointConfiguration(
            self.dimension, self.sampling_radius, np.vstack([self.points, extra]),
            self.master_seed, self.stream_index,
        )

    def restricted(self, radius: float) -> PointConfiguration:
        """Points with norm <= radius, in their original order."""
        norms_sq = np.einsum("ij,ij->i", self.points, self.points)
        keep = norms_sq <= radius * radius
        return PointConfiguration(self.dimension, radius, self.points[keep], self.master_seed, self.stream_index)

    # binary dump: little-endian header then N*d float64
    def to_bytes(self) -> bytes:
        header = _HEADER.pack(
            self.dimension, self.n_points, self.sampling_radius, self.master_seed & _SEED_MASK, self.stream_index
        )
        return header + self.points.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> PointConfiguration:
        d, n, radius, seed, index = _HEADER.unpack_from(data, 0)
        body = np.frombuffer(data, dtype="<f8", count=n * d, offset=_HEADER.size)
        return cls(d, radius, body.reshape(n, d), seed, index)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> PointConfiguration:
        return cls.from_bytes(Path(path).read_bytes())


def expected_count(intensity: LogValue, radius: float, d: int) -> LogValue:
    """Mean number of points in ``B(0, radius)``: ``lambda * kappa_d * radius**d``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    intensity = LogValue.coerce(intensity)
    return intensity * log_unit_ball_volume(d) * LogValue(1, d * math.log(radius))


def uniform_in_ball(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    """``n`` i.i.d. uniform points in ``B(0, radius)``, norms <= radius exactly."""
    g = rng.standard_normal((n, d))
    norms = np.sqrt(np.einsum("ij,ij->i", g, g))
    bad = norms == 0.0
    while bad.any():
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms[bad] = np.sqrt(np.einsum("ij,ij->i", g[bad], g[bad]))
        bad = norms == 0.0
    r = radius * rng.random(n) ** (1.0 / d)
    pts = g * (r / norms)[:, None]
    # rounding may push a norm a few ulps past the radius; pull those back in
    over = np.einsum("ij,ij->i", pts, pts) > radius * radius
    while over.any():
        pts[over] *= 1.0 - 2.0 ** -50
        over = np.einsum("ij,ij->i", pts, pts) > radius * radius
    return pts


def sample_configuration(
    params: ModelParams,
    radius: float,
    stream: RngStream,
    max_expected: float = DEFAULT_MAX_EXPECTED,
) -> PointConfiguration:
    """Draw the Poisson process of ``params`` restricted to ``B(0, radius)``."""
    d = params.dimension
    mean = expected_count(params.intensity, radius, d)
    if mean.is_zero:
        return PointConfiguration(d, radius, np.empty((0, d)), stream.master_seed, stream.stream_index)
    if mean.log_abs > math.log(max_expected):
        raise FeasibilityError(mean.log_abs, max_expected)
    rng = stream.generator
    n = int(rng.poisson(float(mean)))
    pts = uniform_in_ball(rng, n, d, radius)
    return PointConfiguration(d, radius, pts, stream.master_seed, stream.stream_index)

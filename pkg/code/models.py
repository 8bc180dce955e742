from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Frame:
    """
    Monochrome intensity image I(x, y), stored row-major as (height, width).
    """
    width: int
    height: int
    bit_depth: int
    samples: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        if not 1 <= self.bit_depth <= 16:
            raise ValueError(f"bit_depth must be in [1, 16], got {self.bit_depth}")
        samples = np.asarray(self.samples)
        if samples.size != self.width * self.height:
            raise ValueError(
                f"expected {self.width * self.height} samples, got {samples.size}"
            )
        if samples.size and (samples.min() < 0 or samples.max() >= 1 << self.bit_depth):
            raise ValueError(f"sample outside [0, 2^{self.bit_depth} - 1]")
        object.__setattr__(
            self, "samples", _frozen_array(samples.reshape(self.height, self.width), np.uint16)
        )

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.bit_depth == other.bit_depth
            and self.frame_index == other.frame_index
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PixelMask:
    width: int
    height: int
    valid: np.ndarray

    def __post_init__(self):
        valid = np.asarray(self.valid, dtype=bool)
        if valid.shape != (self.height, self.width):
            raise ValueError(
                f"mask shape {valid.shape} does not match {self.height}x{self.width}"
            )
        object.__setattr__(self, "valid", _frozen_array(valid, bool))

    @classmethod
    def full(cls, width: int, height: int) -> "PixelMask":
        return cls(width=width, height=height, valid=np.ones((height, width), dtype=bool))

    @cached_property
    def pixel_count(self) -> int:
        return int(self.valid.sum())

    @cached_property
    def pixel_ranks(self) -> np.ndarray:
        """
        1-based row-major rank of every valid pixel, 0 for invalid pixels.
        """
        flat = self.valid.ravel()
        ranks = np.cumsum(flat, dtype=np.int64)
        ranks[~flat] = 0
        return _frozen_array(ranks.reshape(self.height, self.width), np.int64)

    def __eq__(self, other):
        if not isinstance(other, PixelMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.valid, other.valid)
        )

    __hash__ = None


@dataclass(frozen=True)
class LevelSpec:
    """
    Intensity sub-levels. Level L covers [boundaries[L-1], boundaries[L]),
    the last boundary is 2^E so the top level includes the maximum sample.
    """
    level_count: int
    noise_floor: int
    boundaries: tuple[int, ...]
    bit_depth: int

    def __post_init__(self):
        if self.level_count < 1:
            raise ValueError("level_count must be positive")
        if len(self.boundaries) != self.level_count + 1:
            raise ValueError("boundaries must hold level_count + 1 cut points")
        if any(b <= a for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly increasing")
        if self.boundaries[0] != self.noise_floor:
            raise ValueError("boundaries[0] must equal the noise floor")
        if self.boundaries[-1] != 1 << self.bit_depth:
            raise ValueError("last boundary must equal 2^E")

    @classmethod
    def equal_width(cls, level_count: int = 8, noise_floor: int = 1, bit_depth: int = 8) -> "LevelSpec":
        top = 1 << bit_depth
        if noise_floor < 0 or top - noise_floor < level_count:
            raise ValueError(
                f"cannot split [{noise_floor}, {top}] into {level_count} levels"
            )
        span = top - noise_floor
        boundaries = tuple(noise_floor + (i * span) // level_count for i in range(level_count + 1))
        return cls(level_count=level_count, noise_floor=noise_floor, boundaries=boundaries, bit_depth=bit_depth)

    def levels_of(self, samples: np.ndarray) -> np.ndarray:
        """
        Level index per sample, 0 for samples below the noise floor.
        """
        return np.searchsorted(np.asarray(self.boundaries), samples, side="right")

    def level_of(self, sample: int) -> int | None:
        level = int(self.levels_of(np.array([sample]))[0])
        return level or None


@dataclass(frozen=True, eq=False)
class SpotRecord:
    level: int
    pixels: np.ndarray  # (area, 2) columns x, y
    area: int
    centroid_x: float
    centroid_y: float

    def __post_init__(self):
        pixels = np.asarray(self.pixels).reshape(-1, 2)
        if self.area != len(pixels) or self.area < 1:
            raise ValueError("area must equal the number of member pixels")
        x_min, y_min = pixels.min(axis=0)
        x_max, y_max = pixels.max(axis=0)
        if not (x_min <= self.centroid_x <= x_max and y_min <= self.centroid_y <= y_max):
            raise ValueError("centroid outside the spot bounding box")
        object.__setattr__(self, "pixels", _frozen_array(pixels, np.int64))

    @property
    def pixel(self) -> tuple[int, int]:
        # Pixel, in den der Schwerpunkt fällt
        return int(np.floor(self.centroid_x)), int(np.floor(self.centroid_y))


@dataclass(frozen=True)
class CentroidSet:
    """
    Occupied urns S_f = {s_1 < ... < s_n} of a frame over urns {1, ..., N}.
    """
    frame_index: int
    urn_count: int
    occupied: tuple[int, ...] = ()
    spot_count: int = 0
    duplicate_collapses: int = 0

    def __post_init__(self):
        occupied = tuple(int(s) for s in self.occupied)
        if self.urn_count < 0:
            raise ValueError("urn_count must be non-negative")
        if any(b <= a for a, b in zip(occupied, occupied[1:])):
            raise ValueError("occupied urns must be strictly increasing")
        if occupied and (occupied[0] < 1 or occupied[-1] > self.urn_count):
            raise ValueError(f"urn index outside [1, {self.urn_count}]")
        object.__setattr__(self, "occupied", occupied)

    @property
    def n_f(self) -> int:
        return len(self.occupied)

    @property
    def occupancy(self) -> float:
        return self.n_f / self.urn_count if self.urn_count else 0.0


@dataclass(frozen=True)
class LexIndex:
    """
    Rank I uniform on [0, T - 1] together with its range T = C(N, n).
    """
    index: int
    total: int
    urn_count: int
    count: int

    def __post_init__(self):
        if self.total < 1 or not 0 <= self.index < self.total:
            raise ValueError(f"index {self.index} outside [0, {self.total - 1}]")


@dataclass(frozen=True, eq=False)
class BitString:
    bits: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if bits.size and bits.max() > 1:
            raise ValueError("bits must be 0 or 1")
        object.__setattr__(self, "bits", _frozen_array(bits, np.uint8))

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        return cls(np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0"))

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def __len__(self):
        return self.length

    def __str__(self):
        return (self.bits + ord("0")).tobytes().decode("ascii")

    def __repr__(self):
        return f"BitString('{self}')"

    def __eq__(self, other):
        if isinstance(other, str):
            return str(self) == other
        if not isinstance(other, BitString):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None

    def to_int(self) -> int:
        return int(str(self), 2) if self.length else 0


@dataclass(frozen=True)
class EliasTable:
    """
    Binary expansion of T: exponents k with alpha_k = 1 in descending order and the
    start of each block of size 2^k when the blocks are laid out consecutively.
    """
    total: int
    alphas: tuple[int, ...]
    block_starts: tuple[int, ...]

    def __post_init__(self):
        if sum(1 << k for k in self.alphas) != self.total:
            raise ValueError("alphas do not expand to T")
        if list(self.alphas) != sorted(self.alphas, reverse=True):
            raise ValueError("alphas must be descending")

    @property
    def max_length(self) -> int:
        # L = floor(log2 T)
        return self.alphas[0]


@dataclass(frozen=True, eq=False)
class ByteHistogram:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (256,) or (counts < 0).any():
            raise ValueError("byte histogram needs 256 non-negative counts")
        object.__setattr__(self, "counts", _frozen_array(counts, np.int64))

    @classmethod
    def from_bytes(cls, data: bytes) -> "ByteHistogram":
        return cls(np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def expected(self) -> float:
        # lambda = L / 256
        return self.total / 256

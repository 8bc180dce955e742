import logging
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import accumulate
from math import log2

import numpy as np

from exceptions import RankRangeError
from models import BitString, EliasTable
from services.rank_service import total_combinations

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Efficiency:
    urn_count: int
    count: int
    expected_length: Fraction
    eta: float
    h2: float

    @property
    def gap(self) -> float:
        # h2(q) - eta, nicht negativ
        return self.h2 - self.eta


def int_to_bits(value: int, length: int) -> np.ndarray:
    """
    The `length` low-order bits of value, most significant first.
    """
    if length == 0:
        return np.zeros(0, dtype=np.uint8)
    nbytes = (length + 7) // 8
    raw = np.frombuffer((value & ((1 << length) - 1)).to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw)[nbytes * 8 - length:]


@lru_cache(maxsize=1024)
def elias_table(total: int) -> EliasTable:
    """
    Blocks of size 2^k for every alpha_k = 1 of T, largest first, laid out from 0.
    """
    if total < 1:
        raise RankRangeError(f"T must be positive, got {total}")
    alphas = tuple(k for k in range(total.bit_length() - 1, -1, -1) if total >> k & 1)
    block_starts = tuple(accumulate((1 << k for k in alphas[:-1]), initial=0))
    return EliasTable(total=total, alphas=alphas, block_starts=block_starts)


def elias_encode(index: int, total: int) -> BitString:
    """
    Finds the block containing I and emits the k low-order bits of I - block_start.
    For I < 2^L this is the L-bit binary expansion of I; a trailing block of size 1
    yields the empty string.
    """
    if not 0 <= index < total:
        raise RankRangeError(f"index {index} outside [0, {total - 1}]")
    table = elias_table(total)
    block = bisect_right(table.block_starts, index) - 1
    return BitString(int_to_bits(index - table.block_starts[block], table.alphas[block]))


def elias_encode_many(indices: np.ndarray, total: int) -> tuple[np.ndarray, np.ndarray]:
    """
    elias_encode over an array of indices for T < 2^63. Returns (values, lengths):
    code i is the lengths[i]-bit expansion of values[i], MSB first.
    """
    if not 1 <= total < 1 << 63:
        raise RankRangeError(f"vectorized coding needs 1 <= T < 2^63, got {total}")
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= total):
        raise RankRangeError(f"indices outside [0, {total - 1}]")

    table = elias_table(total)
    starts = np.array(table.block_starts, dtype=np.int64)
    block = np.searchsorted(starts, indices, side="right") - 1
    return indices - starts[block], np.array(table.alphas, dtype=np.int64)[block]


def elias_decode(bits: BitString | str, total: int) -> int:
    """
    Inverse of elias_encode: the unique I whose code is `bits`.
    """
    if isinstance(bits, str):
        bits = BitString.from_str(bits)
    table = elias_table(total)
    try:
        block = table.alphas.index(bits.length)
    except ValueError:
        raise RankRangeError(f"no {bits.length}-bit code exists for T={total}") from None
    return table.block_starts[block] + bits.to_int()


def naive_truncate(index: int, total: int) -> BitString:
    """
    L-bit expansion of I mod 2^L. Biased whenever T is not a power of two; only used
    as a negative control for the audit suite.
    """
    length = elias_table(total).max_length
    return BitString(int_to_bits(index, length))


def binary_entropy(q: float) -> float:
    """
    h2(q) = -q log2 q - (1 - q) log2(1 - q), with 0 log 0 = 0.
    """
    if not 0.0 <= q <= 1.0:
        raise RankRangeError(f"q must lie in [0, 1], got {q}")
    if q in (0.0, 1.0):
        return 0.0
    return -q * log2(q) - (1 - q) * log2(1 - q)


def expected_length(total: int) -> Fraction:
    """
    <L_b'> = sum_{alpha_k = 1} k 2^k / T for uniform I.
    """
    table = elias_table(total)
    return Fraction(sum(k << k for k in table.alphas), total)


def expected_efficiency(urn_count: int, count: int) -> Efficiency:
    if urn_count < 1:
        raise RankRangeError("N must be positive")
    length = expected_length(total_combinations(urn_count, count))
    return Efficiency(
        urn_count=urn_count,
        count=count,
        expected_length=length,
        eta=float(length / urn_count),
        h2=binary_entropy(count / urn_count),
    )

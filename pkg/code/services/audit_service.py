import logging
from dataclasses import dataclass
from math import log, log2, sqrt

import numpy as np
from scipy import stats
from scipy.special import erfc, gammaincc

from enums import AuditTest, ConfidenceLevel
from exceptions import InsufficientDataError
from models import BitString, ByteHistogram
from schemas import FailureCount, MinEntropyReport, TestResult

logger = logging.getLogger(__name__)

MAX_LAG = 64
BYTE_VALUES = 256


@dataclass(frozen=True)
class MaxDistribution:
    """
    Distribution Pi(x) of the maximum of n_vars i.i.d. Poisson(lam) counts,
    probabilities[i] = Pi(start + i).
    """
    lam: float
    n_vars: int
    start: int
    probabilities: np.ndarray
    mean: float
    sigma: float


@dataclass(frozen=True)
class MinEntropyEstimate:
    sample_bytes: int
    mean_max: float
    sigma_max: float
    h_min: float
    sigma: float


def as_bit_array(bits) -> np.ndarray:
    if isinstance(bits, BitString):
        return bits.bits
    if isinstance(bits, str):
        return BitString.from_str(bits).bits
    return np.asarray(bits, dtype=np.uint8).ravel()


def _normal_p_value(z: float) -> float:
    # zweiseitig
    return float(erfc(abs(z) / sqrt(2)))


def _chi_square_p_value(statistic: float, dof: float) -> float:
    # obere Flanke, Q(dof/2, x/2)
    return float(gammaincc(dof / 2, max(statistic, 0.0) / 2))


def frequency_test(bits) -> TestResult:
    b = as_bit_array(bits)
    n = b.size
    if n < 100:
        raise InsufficientDataError(AuditTest.FREQUENCY.value, 100, n)
    ones = int(np.count_nonzero(b))
    z = (ones - (n - ones)) / sqrt(n)
    return TestResult.from_p_value(AuditTest.FREQUENCY.value, z, _normal_p_value(z), n)


def autocorrelation_test(bits, lag: int) -> TestResult:
    """
    A(d) = sum_i b_i xor b_{i+d}; z = 2 (A(d) - (n - d) / 2) / sqrt(n - d).
    """
    if not 1 <= lag <= MAX_LAG:
        raise ValueError(f"lag must be in [1, {MAX_LAG}], got {lag}")
    b = as_bit_array(bits)
    n = b.size
    name = f"{AuditTest.AUTOCORRELATION.value}[{lag}]"
    if n - lag < 100:
        raise InsufficientDataError(name, 100 + lag, n)
    a = int(np.count_nonzero(b[:-lag] != b[lag:]))
    z = 2 * (a - (n - lag) / 2) / sqrt(n - lag)
    return TestResult.from_p_value(name, z, _normal_p_value(z), n)


def _word_values(b: np.ndarray, width: int, overlapping: bool) -> np.ndarray:
    if overlapping:
        # zyklisch fortgesetzt, damit jede Position ein volles Wort beginnt
        ext = np.concatenate((b, b[:width - 1]))
        n = b.size
        return sum(ext[i:i + n].astype(np.int64) << (width - 1 - i) for i in range(width))
    words = b.size // width
    blocks = b[:words * width].reshape(words, width).astype(np.int64)
    return blocks @ (1 << np.arange(width - 1, -1, -1))


def _psi_squared(b: np.ndarray, width: int) -> float:
    if width == 0:
        return 0.0
    counts = np.bincount(_word_values(b, width, True), minlength=1 << width)
    return float((1 << width) / b.size * np.sum(counts.astype(np.float64) ** 2) - b.size)


def serial_test(bits, word_length: int = 2, overlapping: bool = False) -> TestResult:
    """
    Non-overlapping: chi-square over the 2^w word counts with 2^w - 1 degrees of
    freedom. Overlapping: psi^2_w - psi^2_{w-1} with 2^(w-1) degrees of freedom.
    """
    if word_length < 1:
        raise ValueError("word_length must be positive")
    b = as_bit_array(bits)
    n = b.size
    cells = 1 << word_length
    name = f"serial[{word_length}{',overlapping' if overlapping else ''}]"
    if n < 100 * cells:
        raise InsufficientDataError(name, 100 * cells, n)

    if overlapping:
        statistic = _psi_squared(b, word_length) - _psi_squared(b, word_length - 1)
        dof = cells // 2
    else:
        counts = np.bincount(_word_values(b, word_length, False), minlength=cells)
        expected = counts.sum() / cells
        statistic = float(np.sum((counts - expected) ** 2) / expected)
        dof = cells - 1
    return TestResult.from_p_value(name, statistic, _chi_square_p_value(statistic, dof), n)


def byte_histogram(data: bytes) -> ByteHistogram:
    return ByteHistogram.from_bytes(data)


def chi_square_bytes(hist: ByteHistogram) -> TestResult:
    total = hist.total
    if total < 5 * BYTE_VALUES:
        raise InsufficientDataError(AuditTest.BYTE_CHI_SQUARE.value, 5 * BYTE_VALUES, total)
    expected = hist.expected
    statistic = float(np.sum((hist.counts - expected) ** 2) / expected)
    return TestResult.from_p_value(
        AuditTest.BYTE_CHI_SQUARE.value,
        statistic,
        _chi_square_p_value(statistic, BYTE_VALUES - 1),
        total,
    )


def empirical_min_entropy(hist: ByteHistogram) -> float:
    """
    -log2 of the largest relative byte frequency, bits per byte.
    """
    total = hist.total
    if total == 0:
        raise InsufficientDataError("min-entropy", 1, 0)
    return -log2(int(hist.counts.max()) / total)


def poisson_max_distribution(lam: float, n_vars: int = BYTE_VALUES, tail: float = 1e-12) -> MaxDistribution:
    """
    Pi(x) = D(x)^n - D(x-1)^n with D the Poisson(lam) CDF, summed until the mass
    above the support is below `tail`.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if n_vars < 1:
        raise ValueError("n_vars must be positive")

    spread = 10 * sqrt(lam) + 10
    # unterhalb von lam - 10 sigma ist D(x)^n vernachlässigbar
    start = max(0, int(lam - spread))
    stop = int(lam + spread)
    while -np.expm1(n_vars * stats.poisson.logcdf(stop, lam)) >= tail:
        stop = int(stop + spread)

    x = np.arange(start, stop + 1)
    cdf_n = np.exp(n_vars * stats.poisson.logcdf(x, lam))
    below = float(np.exp(n_vars * stats.poisson.logcdf(start - 1, lam))) if start > 0 else 0.0
    probabilities = np.diff(cdf_n, prepend=below)

    mean = float(np.sum(x * probabilities))
    sigma = sqrt(float(np.sum((x - mean) ** 2 * probabilities)))
    return MaxDistribution(lam=lam, n_vars=n_vars, start=start, probabilities=probabilities, mean=mean, sigma=sigma)


def expected_min_entropy(sample_bytes: int) -> MinEntropyEstimate:
    """
    H_min = -log2(<l_M> / L) for a uniform sample of L bytes, with sigma propagated
    to first order from the spread of the maximum count.
    """
    if sample_bytes < BYTE_VALUES:
        raise InsufficientDataError("expected min-entropy", BYTE_VALUES, sample_bytes)
    dist = poisson_max_distribution(sample_bytes / BYTE_VALUES, BYTE_VALUES)
    return MinEntropyEstimate(
        sample_bytes=sample_bytes,
        mean_max=dist.mean,
        sigma_max=dist.sigma,
        h_min=-log2(dist.mean / sample_bytes),
        sigma=dist.sigma / (dist.mean * log(2)),
    )


def min_entropy_compatible(empirical: float, expected: float, sigma: float, k: float = 3.0) -> bool:
    return abs(empirical - expected) <= k * sigma


def min_entropy_report(data: bytes) -> MinEntropyReport:
    """
    Empirical min-entropy of the bytes (if any) against the i.i.d. expectation
    (from 256 bytes on).
    """
    empirical = expected = sigma = compatible = None
    if data:
        empirical = empirical_min_entropy(byte_histogram(data))
    if len(data) >= BYTE_VALUES:
        estimate = expected_min_entropy(len(data))
        expected, sigma = estimate.h_min, estimate.sigma
        compatible = min_entropy_compatible(empirical, expected, sigma)
    return MinEntropyReport(
        sample_bytes=len(data),
        empirical=empirical,
        expected=expected,
        expected_sigma=sigma,
        compatible=compatible,
    )


def _bytes_of(b: np.ndarray) -> bytes:
    usable = b.size - b.size % 8
    return np.packbits(b[:usable]).tobytes()


def _run_test(test: AuditTest, b: np.ndarray) -> list[TestResult]:
    if test == AuditTest.FREQUENCY:
        return [frequency_test(b)]
    if test == AuditTest.AUTOCORRELATION:
        return [autocorrelation_test(b, lag) for lag in range(1, MAX_LAG + 1)]
    if test == AuditTest.SERIAL_2:
        return [serial_test(b, 2, overlapping=False)]
    if test == AuditTest.SERIAL_2_OVERLAPPING:
        return [serial_test(b, 2, overlapping=True)]
    if test == AuditTest.SERIAL_3:
        return [serial_test(b, 3, overlapping=False)]
    if test == AuditTest.BYTE_CHI_SQUARE:
        return [chi_square_bytes(byte_histogram(_bytes_of(b)))]
    raise ValueError(f"Unknown test: {test}")


def audit_bits(bits, tests: list[AuditTest]) -> tuple[list[TestResult], list[str]]:
    """
    Runs every configured test on the whole stream. Tests whose size precondition
    fails are skipped and reported by name.
    """
    b = as_bit_array(bits)
    results, skipped = [], []
    for test in tests:
        try:
            results.extend(_run_test(test, b))
        except InsufficientDataError as e:
            logger.warning(f"Test {test.value} übersprungen: {e}")
            skipped.append(test.value)
    return results, skipped


def _failure_count(name: str, p_values: np.ndarray) -> FailureCount:
    m = len(p_values)
    counts = {}
    for level in (ConfidenceLevel.P99, ConfidenceLevel.P999):
        alpha = ConfidenceLevel.get_alpha(level)
        failures = int(np.count_nonzero(p_values < alpha))
        expected = m * alpha
        band = 3 * sqrt(m * alpha * (1 - alpha))
        counts[level] = (failures, expected, abs(failures - expected) <= band)
        if not counts[level][2]:
            logger.warning(
                f"Test {name}: {failures} Ausfälle bei {ConfidenceLevel.get_name(level)}, "
                f"erwartet {expected:.1f} ± {band:.1f}"
            )

    ks_p_value = float(stats.kstest(p_values, "uniform").pvalue) if m else 1.0
    return FailureCount(
        test=name,
        statistics=m,
        failures_99=counts[ConfidenceLevel.P99][0],
        expected_99=counts[ConfidenceLevel.P99][1],
        within_band_99=counts[ConfidenceLevel.P99][2],
        failures_999=counts[ConfidenceLevel.P999][0],
        expected_999=counts[ConfidenceLevel.P999][1],
        within_band_999=counts[ConfidenceLevel.P999][2],
        ks_p_value=ks_p_value,
    )


def _segments(size: int, block_bits: int, frame_bits: list[int] | None) -> list[tuple[int, int]]:
    if frame_bits is None:
        return [(i * block_bits, (i + 1) * block_bits) for i in range(size // block_bits)]
    ends = np.cumsum(np.asarray(frame_bits, dtype=np.int64))
    starts = ends - np.asarray(frame_bits, dtype=np.int64)
    # Frames, die in den zurückgehaltenen Rest reichen, fallen weg
    return [(s, e) for s, e in zip(starts.tolist(), ends.tolist()) if s < e <= size]


def failure_counts(
    bits,
    block_bits: int,
    tests: list[AuditTest],
    frame_bits: list[int] | None = None,
) -> list[FailureCount]:
    """
    Runs each test per segment and compares the failures at the 99% / 99.9%
    thresholds with the i.i.d. expectation m * alpha +- 3 sqrt(m * alpha * (1 - alpha)).

    Segments are disjoint blocks of `block_bits`, or with `frame_bits` the bits each
    frame emitted. Segments too short for a test are left out of its count.
    """
    b = as_bit_array(bits)
    segments = _segments(b.size, block_bits, frame_bits)
    if not segments:
        return []

    table = []
    for test in tests:
        p_values, too_short = [], 0
        for start, end in segments:
            try:
                p_values.extend(r.p_value for r in _run_test(test, b[start:end]))
            except InsufficientDataError:
                too_short += 1
        if too_short:
            logger.warning(f"Test {test.value}: {too_short} von {len(segments)} Segmenten zu kurz")
        if not p_values:
            continue
        table.append(_failure_count(test.value, np.array(p_values)))
    return table

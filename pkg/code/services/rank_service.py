import logging
from itertools import pairwise
from math import comb, prod
from typing import Iterator

from exceptions import RankRangeError
from models import CentroidSet, LexIndex

logger = logging.getLogger(__name__)


def total_combinations(urn_count: int, count: int) -> int:
    """
    T = C(N, n), exact.
    """
    if count < 0 or urn_count < 0 or count > urn_count:
        raise RankRangeError(f"need 0 <= n <= N, got n={count}, N={urn_count}")
    return comb(urn_count, count)


def _rank_terms(urn_count: int, occupied: tuple[int, ...]) -> Iterator[int]:
    """
    Yields C(N - s_k, n - k + 1) for k = 1..n. Each term is derived from the previous
    one: one step down in the lower index, then the ratio
    C(a - d, j) / C(a, j) = prod_{i<d} (a - j - i) / (a - i) over the gap d.
    """
    n = len(occupied)
    if n == 0:
        return

    a = urn_count - occupied[0]
    j = n
    term = comb(a, j)
    yield term

    for s_prev, s_next in pairwise(occupied):
        if term == 0:
            # alle restlichen Kugeln liegen in den letzten Urnen
            return
        term = term * j // (a - j + 1)
        j -= 1
        d = s_next - s_prev
        term = term * prod(range(a - j - d + 1, a - j + 1)) // prod(range(a - d + 1, a + 1))
        a -= d
        yield term


def lex_rank(centroid_set: CentroidSet) -> LexIndex:
    """
    I(S) = sum_k C(N - s_k, n - k + 1): the number of n-subsets that succeed S.
    The first n urns give T - 1, the last n urns give 0.
    """
    total = total_combinations(centroid_set.urn_count, centroid_set.n_f)
    index = sum(_rank_terms(centroid_set.urn_count, centroid_set.occupied))
    return LexIndex(index=index, total=total, urn_count=centroid_set.urn_count, count=centroid_set.n_f)


def lex_unrank(index: int, urn_count: int, count: int, frame_index: int = 0) -> CentroidSet:
    total = total_combinations(urn_count, count)
    if not 0 <= index < total:
        raise RankRangeError(f"index {index} outside [0, {total - 1}]")

    occupied = []
    residual = index
    upper = urn_count - 1
    for k in range(1, count + 1):
        j = count - k + 1
        # größtes c mit C(c, j) <= Rest, also kleinstes s = N - c
        lo, hi = j - 1, upper
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if comb(mid, j) <= residual:
                lo = mid
            else:
                hi = mid - 1
        residual -= comb(lo, j)
        occupied.append(urn_count - lo)
        upper = lo - 1

    return CentroidSet(frame_index=frame_index, urn_count=urn_count, occupied=tuple(occupied))


def predecessor_count(centroid_set: CentroidSet) -> int:
    """
    p(S) = T - 1 - I(S), the number of subsets preceding S.
    """
    rank = lex_rank(centroid_set)
    return rank.total - 1 - rank.index


def predecessor_count_double_sum(centroid_set: CentroidSet) -> int:
    """
    p(S) = sum_{k=0}^{n-1} sum_{m=s_k+1}^{s_{k+1}-1} C(N - m, n - k - 1) with s_0 = 0,
    evaluated term by term. Quadratic in N; meant for small grids.
    """
    n = centroid_set.n_f
    urn_count = centroid_set.urn_count
    s = (0,) + centroid_set.occupied
    return sum(
        comb(urn_count - m, n - k - 1)
        for k in range(n)
        for m in range(s[k] + 1, s[k + 1])
    )

from fastapi import APIRouter, HTTPException, Query

from exceptions import ExtractorError
from models import CentroidSet
from schemas import EfficiencyResponse, RankRequest, RankResponse
from services.elias_service import elias_encode, expected_efficiency
from services.rank_service import lex_rank, lex_unrank, total_combinations


router = APIRouter()


@router.post("/rank", response_model=RankResponse, tags=["combinatorics"])
async def rank_centroid_set(request: RankRequest):
    """
    Lexicographic index, predecessor count and Elias bits of an occupied-urn set.
    Big integers are returned as decimal strings.
    """
    try:
        centroid_set = CentroidSet(
            frame_index=0,
            urn_count=request.urn_count,
            occupied=tuple(sorted(request.occupied)),
        )
    except ValueError as e:
        # auch doppelte Urnen landen hier
        raise HTTPException(status_code=422, detail=str(e))

    rank = lex_rank(centroid_set)
    bits = elias_encode(rank.index, rank.total)
    return RankResponse(
        index=str(rank.index),
        total=str(rank.total),
        predecessors=str(rank.total - 1 - rank.index),
        bits=str(bits),
        bit_length=bits.length,
    )


@router.get("/unrank", tags=["combinatorics"])
async def unrank_index(
    index: str = Query(..., description="Lexicographic index as decimal string."),
    urn_count: int = Query(..., ge=0, alias="N"),
    count: int = Query(..., ge=0, alias="n"),
):
    if not index.isdigit():
        raise HTTPException(status_code=422, detail="index must be a non-negative integer")
    try:
        centroid_set = lex_unrank(int(index), urn_count, count)
    except ExtractorError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {"occupied": list(centroid_set.occupied)}


@router.get("/total", tags=["combinatorics"])
async def get_total_combinations(
    urn_count: int = Query(..., ge=0, alias="N"),
    count: int = Query(..., ge=0, alias="n"),
):
    try:
        total = total_combinations(urn_count, count)
    except ExtractorError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {"total": str(total), "max_bits": total.bit_length() - 1}


@router.get("/efficiency", response_model=EfficiencyResponse, tags=["combinatorics"])
async def get_expected_efficiency(
    urn_count: int = Query(..., ge=1, alias="N"),
    count: int = Query(..., ge=0, alias="n"),
):
    try:
        efficiency = expected_efficiency(urn_count, count)
    except ExtractorError as e:
        raise HTTPException(status_code=400, detail=str(e))

    return EfficiencyResponse(
        urn_count=urn_count,
        count=count,
        expected_length=float(efficiency.expected_length),
        eta=efficiency.eta,
        h2=efficiency.h2,
        gap=efficiency.gap,
    )

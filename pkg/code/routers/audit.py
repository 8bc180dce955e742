import logging

from fastapi import APIRouter, File, HTTPException, Query, UploadFile

from enums import AuditTest
from exceptions import ExtractorError
from schemas import AuditResponse, MinEntropyResponse
from services.audit_service import audit_bits, expected_min_entropy, min_entropy_report
from utils import unpack_bits


router = APIRouter()
logger = logging.getLogger(__name__)


@router.post("", response_model=AuditResponse, tags=["audit"])
async def audit_bit_file(
    file: UploadFile = File(..., description="Headerless packed bit file, MSB first."),
    tests: str = Query("all", description='"all", "none" or a comma list such as "frequency,serial2".'),
):
    """
    Runs the statistical audit on an uploaded bit file.
    """
    try:
        selected = AuditTest.parse_list(tests)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))

    data = await file.read()
    bits = unpack_bits(data)
    results, skipped = audit_bits(bits, selected)

    logger.info(f"Audit von {file.filename}: {bits.size} Bits, {len(skipped)} Tests übersprungen")
    return AuditResponse(
        bits=int(bits.size),
        tests=results,
        skipped_tests=skipped,
        min_entropy=min_entropy_report(data),
    )


@router.get("/min-entropy", response_model=MinEntropyResponse, tags=["audit"])
async def get_expected_min_entropy(
    length: int = Query(..., description="Sample size L in bytes (at least 256)."),
):
    try:
        estimate = expected_min_entropy(length)
    except ExtractorError as e:
        raise HTTPException(status_code=400, detail=str(e))

    return MinEntropyResponse(
        sample_bytes=estimate.sample_bytes,
        mean_max=estimate.mean_max,
        sigma_max=estimate.sigma_max,
        h_min=estimate.h_min,
        sigma=estimate.sigma,
    )

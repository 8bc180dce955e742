import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import pandas as pd
from tqdm import tqdm

from enums import AuditGrouping, Connectivity, Container, SimMode
from exceptions import ExtractorError, PipelineError
from models import BitString, CentroidSet, Frame, LevelSpec, PixelMask
from schemas import (
    AggregateStats,
    AuditReport,
    FrameRecord,
    RunConfig,
)
from services.audit_service import (
    audit_bits,
    failure_counts,
    min_entropy_report,
)
from services.centroid_service import (
    detect_spots,
    extract_centroid_set,
    locate_urns,
    spot_dump_rows,
    write_spot_dump,
)
from services.elias_service import binary_entropy, elias_encode
from services.frame_service import erode_mask, list_frames, load_frame, load_mask, save_frame
from services.rank_service import lex_rank
from services.simulator_service import gen_oracle_frame, gen_speckle_frame
from settings import VERSION
from utils import bits_to_str, canonical_json, pack_bits, unpack_bits

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameOutcome:
    centroid_set: CentroidSet
    bits: BitString
    spot_rows: pd.DataFrame | None = None

    @property
    def record(self) -> FrameRecord:
        return FrameRecord(
            frame_index=self.centroid_set.frame_index,
            n_f=self.centroid_set.n_f,
            urn_count=self.centroid_set.urn_count,
            spot_count=self.centroid_set.spot_count,
            bits_emitted=self.bits.length,
            duplicate_collapses=self.centroid_set.duplicate_collapses,
        )


@dataclass(frozen=True)
class ExtractionResult:
    report: AuditReport
    data: bytes
    withheld: BitString


def extract_frame_bits(centroid_set: CentroidSet) -> BitString:
    """
    S_f -> I(S_f) -> unbiased bit string.
    """
    rank = lex_rank(centroid_set)
    return elias_encode(rank.index, rank.total)


def concatenate_bits(outcomes: Iterable[FrameOutcome]) -> np.ndarray:
    parts = [o.bits.bits for o in outcomes]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint8)


class _FrameSource:
    """
    Liefert die Frames einer Ausführung, von der Platte oder aus dem Simulator.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.paths: list[str] = []
        self.width = self.height = 0

        if config.frames is not None:
            self.paths = list_frames(config.frames)
            if not self.paths:
                raise PipelineError(f"no frames match {config.frames}", frame_index=0)
            first = self.load(0)
            self.width, self.height = first.width, first.height
            self.frame_count = len(self.paths)
        else:
            sim = config.simulate
            self.width, self.height = sim.width, sim.height
            self.frame_count = sim.frame_count

    @property
    def oracle(self) -> bool:
        return self.config.simulate is not None and self.config.simulate.mode == SimMode.ORACLE

    def load(self, frame_index: int) -> Frame:
        if self.config.simulate is not None:
            frame, _ = gen_speckle_frame(self.config.simulate, frame_index)
            if self.config.save_frames:
                save_frame(frame, os.path.join(self.config.save_frames, f"frame_{frame_index:05d}.pgm"), Container.PGM)
            return frame

        try:
            frame = load_frame(self.paths[frame_index], self.config.bit_depth, frame_index)
        except (ExtractorError, OSError) as e:
            raise PipelineError(f"unreadable input {self.paths[frame_index]}: {e}", frame_index) from e
        if self.width and (frame.width, frame.height) != (self.width, self.height):
            raise PipelineError(
                f"dimension mismatch: {frame.width}x{frame.height}, expected {self.width}x{self.height}",
                frame_index,
            )
        return frame


def build_level_spec(config: RunConfig) -> LevelSpec:
    try:
        return LevelSpec.equal_width(config.levels, config.noise_floor, config.frame_depth)
    except ValueError as e:
        raise PipelineError(f"invalid level configuration: {e}") from e


def _speckle_worker(config: RunConfig, source: _FrameSource, mask: PixelMask, spec: LevelSpec) -> Callable[[int], FrameOutcome]:
    def process(frame_index: int) -> FrameOutcome:
        frame = source.load(frame_index)
        spots = detect_spots(frame, mask, spec, config.min_area, config.connectivity, config.weighted_centroids)
        centroid_set = extract_centroid_set(frame, mask, spec, spots=spots)
        rows = spot_dump_rows(spots, locate_urns(spots, mask), frame_index) if config.spot_dump else None
        return FrameOutcome(centroid_set=centroid_set, bits=extract_frame_bits(centroid_set), spot_rows=rows)

    return process


def _oracle_worker(config: RunConfig) -> Callable[[int], FrameOutcome]:
    def process(frame_index: int) -> FrameOutcome:
        centroid_set = gen_oracle_frame(config.simulate, frame_index)
        return FrameOutcome(centroid_set=centroid_set, bits=extract_frame_bits(centroid_set))

    return process


def process_frames(config: RunConfig, process: Callable[[int], FrameOutcome], frame_count: int) -> list[FrameOutcome]:
    """
    Per-frame work on a thread pool; results come back strictly in frame order.
    """
    with tqdm(total=frame_count, desc="Extracting frames", unit="frames", disable=None) as pbar:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            def tracked(frame_index: int) -> FrameOutcome:
                outcome = process(frame_index)
                pbar.update(1)
                return outcome

            return list(executor.map(tracked, range(frame_count)))


def _aggregate(outcomes: list[FrameOutcome], total_bits: int, data: bytes, withheld: np.ndarray) -> AggregateStats:
    frame_count = len(outcomes)
    mean_bits = total_bits / frame_count if frame_count else 0.0
    urn_counts = [o.centroid_set.urn_count for o in outcomes if o.centroid_set.urn_count]
    mean_urns = sum(urn_counts) / len(urn_counts) if urn_counts else 0.0
    q = (
        sum(o.centroid_set.occupancy for o in outcomes if o.centroid_set.urn_count) / len(urn_counts)
        if urn_counts else 0.0
    )
    return AggregateStats(
        frame_count=frame_count,
        total_bits=total_bits,
        bytes_written=len(data),
        withheld_bits=int(withheld.size),
        withheld=bits_to_str(withheld),
        mean_bits_per_frame=mean_bits,
        mean_occupancy=q,
        eta=mean_bits / mean_urns if mean_urns else 0.0,
        h2=binary_entropy(q),
    )


def run_extraction(config: RunConfig) -> ExtractionResult:
    """
    Runs the whole batch: frames -> centroid sets -> ranks -> Elias bits, writes the
    packed bit file and the audit report.
    """
    logger.info(f"Extraktion gestartet ({'Simulator' if config.simulate else config.frames})")
    warnings = []

    source = _FrameSource(config)
    if source.oracle:
        process = _oracle_worker(config)
    else:
        try:
            mask = erode_mask(load_mask(config.mask, source.width, source.height), config.erode)
        except (ExtractorError, OSError) as e:
            raise PipelineError(f"unusable mask {config.mask}: {e}") from e
        if mask.pixel_count == 0:
            warnings.append(f"mask is empty after erosion with radius {config.erode}")
        if config.save_frames:
            os.makedirs(config.save_frames, exist_ok=True)
        logger.info(
            f"Spots: {Connectivity.get_name(config.connectivity)}, {config.levels} Level, "
            f"Rauschgrenze {config.noise_floor}, Maske {mask.pixel_count} Pixel"
        )
        process = _speckle_worker(config, source, mask, build_level_spec(config))

    outcomes = process_frames(config, process, source.frame_count)

    bits = concatenate_bits(outcomes)
    data, withheld = pack_bits(bits)
    try:
        with open(config.out, "wb") as f:
            f.write(data)
    except OSError as e:
        last = outcomes[-1].centroid_set.frame_index if outcomes else None
        raise PipelineError(f"unwritable output {config.out}: {e}", last) from e

    if config.spot_dump:
        write_spot_dump([o.spot_rows for o in outcomes if o.spot_rows is not None], config.spot_dump)

    if bits.size == 0:
        warnings.append("no bits were extracted")
        logger.warning("Keine Bits extrahiert")

    stream = unpack_bits(data)
    tests, skipped = audit_bits(stream, config.tests)
    warnings.extend(f"test {name} skipped: stream too short" for name in skipped)
    frame_bits = [o.bits.length for o in outcomes] if config.audit_grouping == AuditGrouping.FRAMES else None

    report = AuditReport(
        version=VERSION,
        config=config,
        frames=[o.record for o in outcomes],
        aggregate=_aggregate(outcomes, int(bits.size), data, withheld),
        tests=tests,
        skipped_tests=skipped,
        failure_counts=failure_counts(stream, config.audit_block_bits, config.tests, frame_bits),
        min_entropy=min_entropy_report(data),
        warnings=warnings,
    )
    if config.report:
        emit_report(report, config.report)

    logger.info(
        f"Extraktion beendet: {len(outcomes)} Frames, {bits.size} Bits, "
        f"{report.aggregate.mean_bits_per_frame:.1f} Bits/Frame"
    )
    return ExtractionResult(report=report, data=data, withheld=BitString(withheld))


def emit_report(report: AuditReport, path: str):
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(canonical_json(report.model_dump(mode="json")))
    except OSError as e:
        logger.error(f"Report konnte nicht geschrieben werden: {e}")
        raise


def load_report(path: str) -> AuditReport:
    """
    Schema validation of a report file: every key required, unknown keys rejected.
    """
    with open(path, encoding="utf-8") as f:
        return AuditReport.model_validate_json(f.read())


def report_schema() -> dict:
    return AuditReport.model_json_schema()

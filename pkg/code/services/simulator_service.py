import logging
import os
from dataclasses import dataclass
from math import ceil, log, sqrt

import numpy as np
import pandas as pd

from enums import Container, SimMode
from exceptions import RankRangeError
from models import CentroidSet, Frame
from schemas import SimConfig
from services.frame_service import save_frame

logger = logging.getLogger(__name__)

GROUND_TRUTH_COLUMNS = ["frame", "cx", "cy", "peak"]


@dataclass(frozen=True)
class PlantedSpot:
    frame_index: int
    cx: float
    cy: float
    peak: int

    @property
    def pixel(self) -> tuple[int, int]:
        return int(np.floor(self.cx)), int(np.floor(self.cy))


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    """
    PCG64 seeded from (seed, frame_index), so every frame can be generated on its own.
    """
    return np.random.default_rng([seed, frame_index])


def _render_spots(config: SimConfig, spots: list[PlantedSpot]) -> np.ndarray:
    image = np.zeros((config.height, config.width), dtype=np.float64)
    top = (1 << config.bit_depth) - 1
    # ab diesem Abstand rundet auch der hellste Spot auf 0
    reach = int(ceil(config.spot_sigma * sqrt(2 * log(2 * max(top, 1))))) + 1

    for spot in spots:
        x0, x1 = max(0, int(spot.cx) - reach), min(config.width, int(spot.cx) + reach + 1)
        y0, y1 = max(0, int(spot.cy) - reach), min(config.height, int(spot.cy) + reach + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        dx = np.arange(x0, x1) - spot.cx
        dy = np.arange(y0, y1) - spot.cy
        r2 = dy[:, np.newaxis] ** 2 + dx[np.newaxis, :] ** 2
        image[y0:y1, x0:x1] += spot.peak * np.exp(-r2 / (2 * config.spot_sigma ** 2))
    return image


def gen_speckle_frame(
    config: SimConfig,
    frame_index: int,
    planted: list[tuple[float, float, int]] | None = None,
) -> tuple[Frame, list[PlantedSpot]]:
    """
    Gaussian intensity bumps at uniform positions plus Gaussian read noise, clamped
    and quantized to E bits. `planted` replaces the random spots with given
    (cx, cy, peak) triples.
    """
    rng = frame_rng(config.seed, frame_index)
    if planted is None:
        count = int(rng.poisson(config.spot_count_mean))
        xs = rng.uniform(0, config.width, count)
        ys = rng.uniform(0, config.height, count)
        peaks = rng.integers(config.intensity_min, config.intensity_max, size=count, endpoint=True)
        planted = list(zip(xs.tolist(), ys.tolist(), peaks.tolist()))

    spots = [PlantedSpot(frame_index=frame_index, cx=cx, cy=cy, peak=int(peak)) for cx, cy, peak in planted]
    image = _render_spots(config, spots)
    if config.background_noise_sigma > 0:
        image += rng.normal(0.0, config.background_noise_sigma, image.shape)

    samples = np.clip(np.rint(image), 0, (1 << config.bit_depth) - 1).astype(np.uint16)
    frame = Frame(
        width=config.width,
        height=config.height,
        bit_depth=config.bit_depth,
        samples=samples,
        frame_index=frame_index,
    )
    return frame, spots


def gen_uniform_centroid_set(
    urn_count: int,
    count: int,
    seed: int | list[int] | np.random.Generator,
    frame_index: int = 0,
) -> CentroidSet:
    """
    Uniform n-subset of {1, ..., N} by partial Fisher-Yates; only the swapped
    positions are stored, so memory is O(n) for any N.
    """
    if count < 0 or count > urn_count:
        raise RankRangeError(f"need 0 <= n <= N, got n={count}, N={urn_count}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    picks = rng.integers(np.arange(count), urn_count) if count else []
    swaps = {}
    chosen = []
    for i, j in enumerate(int(p) for p in picks):
        chosen.append(swaps.get(j, j))
        swaps[j] = swaps.get(i, i)

    return CentroidSet(
        frame_index=frame_index,
        urn_count=urn_count,
        occupied=tuple(sorted(c + 1 for c in chosen)),
        spot_count=count,
    )


def gen_oracle_frame(config: SimConfig, frame_index: int) -> CentroidSet:
    """
    Exact i.i.d. reference frame: n_f ~ Poisson(spot_count_mean), capped at N.
    """
    rng = frame_rng(config.seed, frame_index)
    urn_count = config.oracle_urn_count
    count = min(int(rng.poisson(config.spot_count_mean)), urn_count)
    return gen_uniform_centroid_set(urn_count, count, rng, frame_index)


def ground_truth_rows(spots: list[PlantedSpot]) -> pd.DataFrame:
    return pd.DataFrame(
        [(s.frame_index, s.cx, s.cy, s.peak) for s in spots],
        columns=GROUND_TRUTH_COLUMNS,
    )


def write_ground_truth(spots: list[PlantedSpot], path: str):
    ground_truth_rows(spots).to_csv(path, index=False)


def write_frames(config: SimConfig, out_dir: str, container: Container = Container.PGM) -> list[str]:
    """
    Writes frame_count simulated frames plus ground_truth.csv into out_dir.
    """
    if config.mode != SimMode.SPECKLE:
        raise ValueError("only speckle mode produces image frames")
    os.makedirs(out_dir, exist_ok=True)

    suffix = "pgm" if container == Container.PGM else "raw"
    paths, spots = [], []
    for frame_index in range(config.frame_count):
        frame, planted = gen_speckle_frame(config, frame_index)
        path = os.path.join(out_dir, f"frame_{frame_index:05d}.{suffix}")
        save_frame(frame, path, container)
        paths.append(path)
        spots.extend(planted)

    write_ground_truth(spots, os.path.join(out_dir, "ground_truth.csv"))
    logger.info(f"{len(paths)} Frames nach {out_dir} geschrieben")
    return paths

import logging

import numpy as np
import pandas as pd
from scipy import ndimage

from enums import Connectivity
from models import CentroidSet, Frame, LevelSpec, PixelMask, SpotRecord
from services.frame_service import quantize_levels

logger = logging.getLogger(__name__)

SPOT_DUMP_COLUMNS = ["frame", "level", "cx", "cy", "area", "urn"]


def connected_components(level_image: np.ndarray, connectivity: int = Connectivity.EIGHT) -> list[np.ndarray]:
    """
    Splits a binary image into components. Each component is an (area, 2) array of
    (x, y) coordinates in row-major order; components are ordered by their first
    row-major pixel.
    """
    level_image = np.asarray(level_image, dtype=bool)
    labels, count = ndimage.label(level_image, structure=Connectivity.get_structure(connectivity))
    if count == 0:
        return []

    width = level_image.shape[1]
    flat = labels.ravel()
    members = np.flatnonzero(flat)
    # stabil sortieren, damit die Pixel innerhalb einer Komponente row-major bleiben
    order = np.argsort(flat[members], kind="stable")
    members = members[order]
    bounds = np.searchsorted(flat[members], np.arange(1, count + 2))

    groups = [members[bounds[i]:bounds[i + 1]] for i in range(count)]
    groups.sort(key=lambda g: g[0])
    return [np.column_stack((g % width, g // width)) for g in groups]


def image_moment(pixels: np.ndarray, j: int, k: int, weights: np.ndarray | None = None) -> float:
    """
    Digital moment M^{jk} = sum w(x, y) x^j y^k over the given pixels.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    w = np.ones(len(pixels)) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(np.sum(w * pixels[:, 0] ** j * pixels[:, 1] ** k))


def spot_centroid(pixels: np.ndarray, weights: np.ndarray | None = None) -> tuple[float, float, int]:
    pixels = np.asarray(pixels).reshape(-1, 2)
    area = len(pixels)
    if area == 0:
        raise ValueError("cannot compute the centroid of an empty spot")

    m00 = image_moment(pixels, 0, 0, weights) if weights is not None else 0.0
    if weights is not None and m00 < 0:
        raise ValueError("spot weights must not be negative")
    if m00 == 0:
        if weights is not None:
            logger.debug(f"Spot mit {area} Pixeln hat Intensität 0, binäre Momente verwendet")
        # binärer Modus (E = 1): Schwerpunkt = Mittelwert der Koordinaten
        return float(pixels[:, 0].sum() / area), float(pixels[:, 1].sum() / area), area

    return image_moment(pixels, 1, 0, weights) / m00, image_moment(pixels, 0, 1, weights) / m00, area


def detect_spots(
    frame: Frame,
    mask: PixelMask,
    spec: LevelSpec,
    min_area: int = 2,
    connectivity: int = Connectivity.EIGHT,
    weighted: bool = False,
) -> list[SpotRecord]:
    spots = []
    for level, image in enumerate(quantize_levels(frame, mask, spec), start=1):
        for pixels in connected_components(image, connectivity):
            if len(pixels) < min_area:
                continue
            weights = frame.samples[pixels[:, 1], pixels[:, 0]] if weighted else None
            cx, cy, area = spot_centroid(pixels, weights)
            spots.append(SpotRecord(level=level, pixels=pixels, area=area, centroid_x=cx, centroid_y=cy))
    return spots


def locate_urns(spots: list[SpotRecord], mask: PixelMask) -> np.ndarray:
    """
    Urn index (level - 1) * pixel_count + rank of the centroid pixel within the mask,
    0 where the centroid falls on a masked-out pixel.
    """
    urns = np.zeros(len(spots), dtype=np.int64)
    for i, spot in enumerate(spots):
        x, y = spot.pixel
        rank = int(mask.pixel_ranks[y, x])
        if rank:
            urns[i] = (spot.level - 1) * mask.pixel_count + rank
    return urns


def urns_to_centroid_set(urns: np.ndarray, urn_count: int, frame_index: int, spot_count: int | None = None) -> CentroidSet:
    urns = np.asarray(urns, dtype=np.int64)
    urns = urns[urns > 0]
    occupied = np.unique(urns)
    return CentroidSet(
        frame_index=frame_index,
        urn_count=urn_count,
        occupied=tuple(occupied.tolist()),
        spot_count=len(urns) if spot_count is None else spot_count,
        duplicate_collapses=len(urns) - len(occupied),
    )


def extract_centroid_set(
    frame: Frame,
    mask: PixelMask,
    spec: LevelSpec,
    min_area: int = 2,
    connectivity: int = Connectivity.EIGHT,
    weighted: bool = False,
    spots: list[SpotRecord] | None = None,
) -> CentroidSet:
    """
    `mask` is the already eroded mask; N = level_count * mask.pixel_count.
    """
    if spots is None:
        spots = detect_spots(frame, mask, spec, min_area, connectivity, weighted)
    urns = locate_urns(spots, mask)

    off_mask = int(np.count_nonzero(urns == 0))
    if off_mask:
        logger.debug(f"Frame {frame.frame_index}: {off_mask} Schwerpunkte außerhalb der Maske verworfen")

    centroid_set = urns_to_centroid_set(urns, spec.level_count * mask.pixel_count, frame.frame_index, len(spots))
    logger.debug(
        f"Frame {frame.frame_index}: {len(spots)} spots, n_f={centroid_set.n_f}, "
        f"N={centroid_set.urn_count}, {centroid_set.duplicate_collapses} duplicates collapsed"
    )
    return centroid_set


def spot_dump_rows(spots: list[SpotRecord], urns: np.ndarray, frame_index: int) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "frame": [frame_index] * len(spots),
            "level": [s.level for s in spots],
            "cx": [s.centroid_x for s in spots],
            "cy": [s.centroid_y for s in spots],
            "area": [s.area for s in spots],
            "urn": np.asarray(urns, dtype=np.int64),
        },
        columns=SPOT_DUMP_COLUMNS,
    )


def write_spot_dump(frames: list[pd.DataFrame], path: str):
    """
    Debug-Dump: eine Zeile pro Spot "frame,level,cx,cy,area,urn".
    """
    dump = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=SPOT_DUMP_COLUMNS)
    dump.to_csv(path, index=False)

import glob
import logging
import os
import struct

import numpy as np
from scipy import ndimage

from enums import Container
from exceptions import FrameFormatError
from models import Frame, LevelSpec, PixelMask

logger = logging.getLogger(__name__)

RAW_MAGIC = b"TRNGFRM1"
# magic, u16 width, u16 height, u8 depth, 3 reserved bytes
RAW_HEADER = struct.Struct("<8sHHB3x")


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """
    Liest das nächste Header-Token eines PGM, Kommentare werden übersprungen.
    """
    while pos < len(data):
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif data[pos:pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FrameFormatError("malformed header: unexpected end of file", offset=pos)
    return data[start:pos], pos


def _read_int(data: bytes, pos: int, name: str) -> tuple[int, int]:
    token, end = _read_token(data, pos)
    if not token.isdigit():
        raise FrameFormatError(f"malformed header: {name} is not a number", offset=end - len(token))
    return int(token), end


def _decode_payload(data: bytes, offset: int, width: int, height: int, maxval: int, byteorder: str) -> np.ndarray:
    sample_bytes = 1 if maxval < 256 else 2
    expected = width * height * sample_bytes
    payload = data[offset:offset + expected]
    if len(payload) < expected:
        raise FrameFormatError(
            f"truncated payload: expected {expected} bytes, got {len(payload)}",
            offset=offset + len(payload),
        )
    if len(data) > offset + expected:
        raise FrameFormatError("trailing data after payload", offset=offset + expected)

    dtype = np.uint8 if sample_bytes == 1 else np.dtype(f"{byteorder}u2")
    samples = np.frombuffer(payload, dtype=dtype).astype(np.uint16)
    too_large = np.flatnonzero(samples > maxval)
    if too_large.size:
        raise FrameFormatError(
            f"sample {int(samples[too_large[0]])} out of declared range [0, {maxval}]",
            offset=offset + int(too_large[0]) * sample_bytes,
        )
    return samples.reshape(height, width)


def _read_pgm(data: bytes) -> tuple[np.ndarray, int]:
    magic, pos = _read_token(data, 0)
    if magic != b"P5":
        raise FrameFormatError("malformed header: not a binary graymap (P5)", offset=0)
    width, pos = _read_int(data, pos, "width")
    height, pos = _read_int(data, pos, "height")
    maxval, pos = _read_int(data, pos, "maxval")
    if not 0 < maxval < 65536:
        raise FrameFormatError(f"malformed header: maxval {maxval}", offset=pos)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FrameFormatError("malformed header: missing separator before payload", offset=pos)
    # genau ein Whitespace trennt Header und Daten
    samples = _decode_payload(data, pos + 1, width, height, maxval, ">")
    return samples, maxval


def _read_raw(data: bytes) -> tuple[np.ndarray, int]:
    if len(data) < RAW_HEADER.size:
        raise FrameFormatError("malformed header: raw container shorter than header", offset=len(data))
    magic, width, height, depth = RAW_HEADER.unpack_from(data)
    if not 1 <= depth <= 16:
        raise FrameFormatError(f"malformed header: depth {depth}", offset=12)
    maxval = (1 << depth) - 1
    samples = _decode_payload(data, RAW_HEADER.size, width, height, maxval, "<")
    return samples, maxval


def read_image(path: str) -> tuple[np.ndarray, int]:
    """
    Decodes a P5 graymap or a raw container into (samples, maxval).
    """
    with open(path, "rb") as f:
        data = f.read()
    if data.startswith(RAW_MAGIC):
        return _read_raw(data)
    if data.startswith(b"P5"):
        return _read_pgm(data)
    raise FrameFormatError("malformed header: unknown magic", offset=0)


def load_frame(path: str, expected_depth: int, frame_index: int = 0) -> Frame:
    try:
        samples, maxval = read_image(path)
    except FrameFormatError as e:
        logger.error(f"Fehler beim Laden von {path}: {e}")
        raise

    if maxval != (1 << expected_depth) - 1:
        raise FrameFormatError(
            f"depth mismatch: maxval {maxval} but expected {expected_depth}-bit samples",
            offset=0,
        )
    height, width = samples.shape
    logger.debug(f"Frame {frame_index} geladen: {path} ({width}x{height}, E={expected_depth})")
    return Frame(width=width, height=height, bit_depth=expected_depth, samples=samples, frame_index=frame_index)


def save_frame(frame: Frame, path: str, container: Container = Container.PGM):
    samples = frame.samples
    if container == Container.RAW:
        header = RAW_HEADER.pack(RAW_MAGIC, frame.width, frame.height, frame.bit_depth)
        dtype = np.uint8 if frame.bit_depth <= 8 else np.dtype("<u2")
    else:
        header = f"P5\n{frame.width} {frame.height}\n{frame.max_value}\n".encode("ascii")
        dtype = np.uint8 if frame.bit_depth <= 8 else np.dtype(">u2")

    with open(path, "wb") as f:
        f.write(header)
        f.write(samples.astype(dtype).tobytes())


def load_mask(path: str, width: int, height: int) -> PixelMask:
    """
    "full" or an image whose non-zero samples mark valid pixels.
    """
    if path == "full":
        return PixelMask.full(width, height)

    samples, _ = read_image(path)
    if samples.shape != (height, width):
        raise FrameFormatError(
            f"mask is {samples.shape[1]}x{samples.shape[0]}, frames are {width}x{height}",
            offset=0,
        )
    return PixelMask(width=width, height=height, valid=samples > 0)


def erode_mask(mask: PixelMask, radius: int) -> PixelMask:
    """
    Keeps a pixel iff every pixel within Chebyshev distance <= radius is valid.
    Pixels outside the image count as invalid.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0:
        return mask

    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    valid = ndimage.binary_erosion(mask.valid, structure=structure, border_value=0)
    eroded = PixelMask(width=mask.width, height=mask.height, valid=valid)
    if eroded.pixel_count == 0:
        logger.warning(f"Maske nach Erosion mit Radius {radius} leer")
    return eroded


def quantize_levels(frame: Frame, mask: PixelMask, spec: LevelSpec) -> np.ndarray:
    """
    Returns a (level_count, height, width) boolean stack; image L-1 holds the masked
    pixels with boundaries[L-1] <= sample < boundaries[L].
    """
    if (frame.width, frame.height) != (mask.width, mask.height):
        raise ValueError("frame and mask dimensions differ")
    if frame.bit_depth != spec.bit_depth:
        raise ValueError(f"level spec is for {spec.bit_depth}-bit frames, frame has {frame.bit_depth}")

    levels = np.where(mask.valid, spec.levels_of(frame.samples), 0)
    return levels[np.newaxis, :, :] == np.arange(1, spec.level_count + 1)[:, np.newaxis, np.newaxis]


def list_frames(pattern: str) -> list[str]:
    paths = sorted(glob.glob(pattern))
    return [p for p in paths if os.path.isfile(p)]

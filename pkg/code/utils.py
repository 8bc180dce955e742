import json

import numpy as np
from decouple import Config, RepositoryEnv


def pack_bits(bits: np.ndarray) -> tuple[bytes, np.ndarray]:
    """
    Packs bits MSB-first into whole bytes; the trailing partial byte (< 8 bits)
    is returned separately instead of being padded.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    usable = bits.size - bits.size % 8
    return np.packbits(bits[:usable]).tobytes(), bits[usable:]


def unpack_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_str(bits: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in bits)


def canonical_json(data) -> str:
    """
    Stabile Schlüsselreihenfolge, damit gleiche Reports byte-identisch sind.
    """
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def read_key_value_file(path: str, allowed: set[str]) -> dict[str, str]:
    """
    Reads a flat `key = value` file (# comments). Unknown keys are rejected.
    """
    repository = RepositoryEnv(path)
    unknown = sorted(set(repository.data) - allowed)
    if unknown:
        raise ValueError(f"unknown keys in {path}: {', '.join(unknown)}")

    config = Config(repository)
    return {key: config(key) for key in repository.data}

from enum import Enum

import numpy as np


class Connectivity():
    FOUR = 4
    EIGHT = 8

    _names = {
        FOUR: "4-neighbor",
        EIGHT: "8-neighbor",
    }

    # Strukturelemente für scipy.ndimage.label
    _structures = {
        FOUR: ((0, 1, 0), (1, 1, 1), (0, 1, 0)),
        EIGHT: ((1, 1, 1), (1, 1, 1), (1, 1, 1)),
    }

    @classmethod
    def get_name(cls, connectivity: int) -> str:
        return cls._names.get(connectivity, "Unknown")

    @classmethod
    def get_structure(cls, connectivity: int) -> np.ndarray:
        """
        Gibt das Strukturelement für die angegebene Nachbarschaft zurück.
        :param connectivity: 4 oder 8
        :return: 3x3 boolean array
        """
        if connectivity not in cls._structures:
            raise ValueError(f"Unsupported connectivity: {connectivity}")
        return np.array(cls._structures[connectivity], dtype=bool)


class ConfidenceLevel():
    P99 = 1
    P999 = 2

    _alphas = {
        P99: 0.01,
        P999: 0.001,
    }

    _names = {
        P99: "99%",
        P999: "99.9%",
    }

    @classmethod
    def get_alpha(cls, level: int) -> float:
        return cls._alphas[level]

    @classmethod
    def get_name(cls, level: int) -> str:
        return cls._names.get(level, "Unknown")


class SimMode(str, Enum):
    SPECKLE = "speckle"
    ORACLE = "oracle"


class Container(str, Enum):
    PGM = "pgm"
    RAW = "raw"


class AuditTest(str, Enum):
    FREQUENCY = "frequency"
    AUTOCORRELATION = "autocorrelation"
    SERIAL_2 = "serial2"
    SERIAL_2_OVERLAPPING = "serial2o"
    SERIAL_3 = "serial3"
    BYTE_CHI_SQUARE = "bytes"

    @classmethod
    def parse_list(cls, value: str) -> list["AuditTest"]:
        """
        "all", "none" or a comma list such as "frequency,serial2".
        """
        value = value.strip().lower()
        if value == "all":
            return list(cls)
        if value in ("none", ""):
            return []
        return [cls(name.strip()) for name in value.split(",") if name.strip()]


class AuditGrouping(str, Enum):
    BLOCKS = "blocks"
    FRAMES = "frames"

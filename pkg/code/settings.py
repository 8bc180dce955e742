import logging

from decouple import config

# Umgebungsvariablen auslesen
LOG_LEVEL = config("LOG_LEVEL", default="INFO").upper()
EXTRACTOR_WORKERS = config("EXTRACTOR_WORKERS", default=4, cast=int)
EXTRACTOR_AUDIT_BLOCK_BITS = config("EXTRACTOR_AUDIT_BLOCK_BITS", default=20000, cast=int)

VERSION = "1.0.0"

# Mapping von String-Level zu tatsächlichen Logging-Level-Objekten
log_level_mapping = {
    'DEBUG': logging.DEBUG,
    'INFO': logging.INFO,
    'WARNING': logging.WARNING,
    'ERROR': logging.ERROR,
    'CRITICAL': logging.CRITICAL,
}


def setup_logging():
    logging.basicConfig(
        level=log_level_mapping.get(LOG_LEVEL, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

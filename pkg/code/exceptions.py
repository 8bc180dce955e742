class ExtractorError(Exception):
    """
    Basisklasse für alle Fehler der Extraktion.
    """


class FrameFormatError(ExtractorError):
    """
    Malformed frame or mask file. `offset` is the byte offset where decoding failed.
    """

    def __init__(self, message: str, offset: int = 0):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class RankRangeError(ExtractorError, ValueError):
    pass


class InsufficientDataError(ExtractorError, ValueError):
    def __init__(self, test_name: str, required: int, actual: int):
        self.test_name = test_name
        self.required = required
        self.actual = actual
        super().__init__(f"{test_name} needs at least {required} samples, got {actual}")


class PipelineError(ExtractorError):
    def __init__(self, message: str, frame_index: int | None = None):
        self.frame_index = frame_index
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)

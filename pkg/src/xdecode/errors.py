"""Exception hierarchy. Each top-level class maps to a CLI exit code."""


class XDecodeError(Exception):
    exit_code = 1


class ConfigError(XDecodeError, ValueError):
    exit_code = 2


class UnknownKeyError(ConfigError):
    def __init__(self, key):
        super().__init__(f"unknown config key: {key!r}")
        self.key = key


class DataError(XDecodeError):
    exit_code = 3


class InvalidBlurLevel(DataError, ValueError):
    pass


class UnsupportedKernel(DataError, ValueError):
    pass


class CropTooLarge(DataError, ValueError):
    pass


class ImageReadError(DataError, OSError):
    pass


class UnsupportedFormat(DataError, ValueError):
    pass


class EmptyCorpus(DataError):
    pass


class InvalidRange(DataError, ValueError):
    pass


class InvalidEpoch(DataError, ValueError):
    pass


class TrainingAborted(XDecodeError):
    exit_code = 4


class EvaluationError(XDecodeError):
    exit_code = 5


class CheckpointMismatch(EvaluationError):
    pass

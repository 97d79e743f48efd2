"""Exception hierarchy shared by every stage of the pipeline."""


class DeepfuseError(Exception):
    """Base class for all errors raised by deepfuse."""


class DataError(DeepfuseError):
    """Raised for problems with user-supplied data (bad files, bad corpora)."""


class MalformedFile(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class FrameLoadFailure(DataError):
    def __init__(self, path, cause):
        super().__init__(f"failed to load frame {path!s}: {cause}")
        self.path = path
        self.cause = cause


class ImageTooSmall(DataError):
    pass


class OutOfBounds(DataError):
    pass


class EmptyClass(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class DegenerateData(DataError):
    pass


class FingerprintMismatch(DataError):
    pass


class VersionMismatch(DataError):
    pass


class CorruptModel(DataError):
    pass


class WorkloadFailure(DeepfuseError):
    def __init__(self, phase, cause):
        super().__init__(f"{phase} workload failed: {cause}")
        self.phase = phase
        self.cause = cause


class NonConvergenceWarning(UserWarning):
    """SMO hit its iteration cap; the best-so-far model is returned."""

"""Exception and warning types.

Every error that stems from bad input data derives from :class:`DataError`;
the CLI maps those to exit code 2.
"""


class MammoDGError(Exception):
    pass


class DataError(MammoDGError):
    pass


class MalformedManifest(DataError):
    def __init__(self, message, pointer=""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class DuplicateImageId(DataError):
    pass


class MissingImageFile(DataError):
    pass


class UnknownImageId(DataError):
    pass


class ScoreOutOfRange(DataError):
    pass


class EmptyManifest(DataError):
    pass


class MalformedPredictions(DataError):
    pass


class ImageFormatError(DataError):
    pass


class AllBackground(DataError):
    pass


class BoxOutOfBounds(DataError):
    pass


class EmptyImage(DataError):
    pass


class DegenerateImage(DataError):
    pass


class NoGroundTruth(DataError):
    pass


class DegenerateResample(DataError):
    pass


class UnsupportedAlpha(DataError):
    pass


class UnsupportedK(DataError):
    pass


class NegativeValue(DataError):
    pass


class MalformedCurveFile(DataError):
    pass


class MalformedScoreMatrix(DataError):
    pass


class MammoDGWarning(UserWarning):
    pass


class DegenerateStratum(MammoDGWarning):
    pass


class DegenerateImageWarning(MammoDGWarning):
    pass


class NonMonotoneLandmarks(MammoDGWarning):
    pass


class ZeroVarianceImage(MammoDGWarning):
    pass


class PatchSizeExcluded(MammoDGWarning):
    pass


class AnnotationDropped(MammoDGWarning):
    pass

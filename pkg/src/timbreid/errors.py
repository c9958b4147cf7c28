"""Exception types raised across the toolkit.

Class names are what the CLI prints, so keep them stable.
"""


class TimbreIdError(Exception):
    """Base class for every error the toolkit raises on purpose."""


# audio_io
class IoError(TimbreIdError):
    pass


class UnsupportedFormat(TimbreIdError):
    pass


class EmptyAudio(TimbreIdError):
    pass


class SilentStream(TimbreIdError):
    pass


# framing / dsp
class StreamTooShort(TimbreIdError):
    pass


class FrameTooShort(TimbreIdError):
    pass


# forest
class EmptyTrainingSet(TimbreIdError):
    pass


class SingleClass(TimbreIdError):
    pass


class DimensionMismatch(TimbreIdError):
    pass


class CorruptModel(TimbreIdError):
    pass


class VersionMismatch(TimbreIdError):
    pass


class VersionMismatchWarning(UserWarning):
    """Model was produced under a different feature convention than requested."""


# timbre
class MissingColumn(TimbreIdError):
    pass


class LabelOutOfRange(TimbreIdError):
    pass


class EmptyDataset(TimbreIdError):
    pass


class MissingAudioFile(TimbreIdError):
    pass


class ConventionMismatch(TimbreIdError):
    pass


# recognition
class InsufficientSpeakers(TimbreIdError):
    pass


class NoAcceptedFrames(TimbreIdError):
    def __init__(self, who=None, message=None):
        self.who = who
        if message is None:
            message = "no accepted (non-silent) frames" + (f" for {who!r}" if who is not None else "")
        super().__init__(message)


class EmptyMatrix(TimbreIdError):
    pass


# eval
class EmptyCounts(TimbreIdError):
    pass


class SingleClassLabels(TimbreIdError):
    pass


class CorpusTooSmall(TimbreIdError):
    def __init__(self, k, available):
        self.k = k
        self.available = available
        super().__init__(f"population size {k} exceeds corpus of {available} speakers")


class ConfigError(TimbreIdError):
    pass

"""Exception types raised across the pipeline.

Everything derives from UnitspeakError so callers (and the CLI) can catch
pipeline failures without swallowing genuine bugs.
"""


class UnitspeakError(Exception):
    pass


# tensor core
class ShapeMismatch(UnitspeakError):
    pass


class EmptyOutput(UnitspeakError):
    pass


class IndexOutOfVocab(UnitspeakError):
    pass


class NotScalar(UnitspeakError):
    pass


# audio frontend
class UnsupportedFormat(UnitspeakError):
    pass


class CorruptFile(UnitspeakError):
    pass


class TooShort(UnitspeakError):
    pass


# quantizer
class TooFewPoints(UnitspeakError):
    pass


class DimMismatch(UnitspeakError):
    pass


class EmptyInput(UnitspeakError):
    pass


class MissingDurations(UnitspeakError):
    pass


# encoder / decoder
class NoMaskedPositions(UnitspeakError):
    pass


class PrefixTooLong(UnitspeakError):
    pass


class EmptyTarget(UnitspeakError):
    pass


# trainer
class UtteranceTooLong(UnitspeakError):
    pass


class TrainingDiverged(UnitspeakError):
    pass


# synthesis
class FeatureSpaceMismatch(UnitspeakError):
    pass


class CodebookMismatch(UnitspeakError):
    pass


# eval
class LengthMismatch(UnitspeakError):
    pass


class EmptyCorpus(UnitspeakError):
    pass


class EmptyRef(UnitspeakError):
    pass


class TranscriberFailure(UnitspeakError):
    pass


# corpus forge
class MalformedManifest(UnitspeakError):
    pass


class ProviderUnavailable(UnitspeakError):
    pass


class DuplicateId(UnitspeakError):
    pass


# config / cli
class ConfigError(UnitspeakError):
    pass

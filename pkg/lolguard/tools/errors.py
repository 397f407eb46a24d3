"""
exception hierarchy shared by every lolguard module
"""


class LolguardError(Exception):
    """root of all lolguard errors"""


class UnsupportedBinary(LolguardError, ValueError):

    def __init__(self, name):
        self.name = name
        super(UnsupportedBinary, self).__init__('unsupported binary: {!r}'.format(name))


class FormatError(LolguardError, ValueError):
    """malformed artifact file, reports the offending line and field"""

    def __init__(self, path, line, field, reason):
        self.path = path
        self.line = line
        self.field = field
        super(FormatError, self).__init__('{}:{}: {}: {}'.format(path, line, field, reason))


class ParseError(LolguardError, ValueError):
    """malformed dataset line"""

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super(ParseError, self).__init__('line {}: {}'.format(line, reason))


class EmptyDataset(LolguardError, ValueError):
    pass


class TooFewSamples(LolguardError, ValueError):
    pass


class PositionOutOfRange(LolguardError, IndexError):
    pass


class DimensionMismatch(LolguardError, ValueError):
    pass


class EmptyTraining(LolguardError, ValueError):
    pass


class EmptyScores(LolguardError, ValueError):
    pass


class LengthMismatch(LolguardError, ValueError):
    pass


class ModelMissing(LolguardError, KeyError):

    def __init__(self, binary):
        self.binary = binary
        super(ModelMissing, self).__init__('no trained model for binary: {!r}'.format(binary))

    def __str__(self):
        return self.args[0]


class ManifestError(LolguardError, ValueError):
    pass


class ArtifactLocked(LolguardError, OSError):
    pass

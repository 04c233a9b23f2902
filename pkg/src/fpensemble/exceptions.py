""" fpensemble exceptions """


def error_line(ex):
    """ The one-line, machine-readable form of an error """
    return f"error: {type(ex).__name__}: {ex}"


class FpensembleError(Exception):
    """ Base class for fpensemble exceptions """


class DataError(FpensembleError, ValueError):
    """ Invalid input values (as opposed to broken files) """

class FormatError(FpensembleError):
    """ A file is malformed

    The optional `source` argument names the file (or other origin) the error
    was found in. If given, `msg` should only describe the problem; a standard
    message will be built from both.
    """
    def __init__(self, msg, source=None):
        super().__init__(msg, source)
        self.msg = msg
        self.source = source

    def __str__(self):
        return (self.msg if not self.source
                else f"{self.source}: {self.msg}")

class ConfigError(FpensembleError):
    """ Invalid or unknown configuration """


class DimensionMismatch(DataError):
    """ Two embeddings (or an embedding and a gallery) disagree on dim """

class NormalizationError(DataError):
    """ A vector could not be normalized to unit length """

class DegenerateImage(NormalizationError):
    """ An image produced an all-zero feature vector """

class ImageTooSmall(DataError):
    """ An image has fewer pixels than the encoder grid """

class MinutiaOutOfBounds(DataError):
    """ A minutia lies outside the image it is applied to """

class MissingMinutiae(DataError):
    """ A minutiae template was required but not given """

class MissingWeight(DataError):
    """ A supervisor has no fusion weight """

class MissingThreshold(DataError):
    """ A model has no calibrated threshold """

class EmptyScores(DataError):
    """ A score sequence that must be non-empty was empty """

class DegenerateCentroid(DataError):
    """ Supervisors cancel out and their centroid has no direction """

class RankDepthTooSmall(DataError):
    """ A ranking is shallower than the requested CMC depth """

class InsufficientData(DataError):
    """ Not enough subjects or impressions for a protocol """

class InsufficientSamples(DataError):
    """ Not enough samples for a statistical test """

class DuplicateId(DataError):
    """ A subject id is already enrolled """

class EmptyGallery(DataError):
    """ A search was run against an empty gallery column """

class MisalignedGallery(DataError):
    """ Gallery tag columns hold different id sequences """


class PgmFormatError(FormatError):
    """ Broken or unsupported PGM image """

class StoreFormatError(FormatError):
    """ Broken embedding-store file """

class MinutiaeFormatError(FormatError):
    """ Broken minutiae template

    `lineno` is the 1-based line the problem was found on, if known.
    """
    def __init__(self, msg, source=None, lineno=None):
        super().__init__(msg, source)
        self.lineno = lineno

    def __str__(self):
        msg = self.msg if self.lineno is None else f"line {self.lineno}: {self.msg}"
        return msg if not self.source else f"{self.source}: {msg}"

class MinutiaeHeaderError(MinutiaeFormatError):
    """ Bad magic, version or dimensions on the header line """

class MinutiaeSyntaxError(MinutiaeFormatError):
    """ A point line does not follow the grammar """

class MinutiaeBoundsError(MinutiaeFormatError):
    """ A point lies outside the template's declared dimensions """

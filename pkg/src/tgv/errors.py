"""Exception hierarchy.

Every error raised by the package derives from :class:`TGVError`, which is
itself a ``ValueError`` so callers can catch bad-input failures generically.
The CLI reports ``type(err).__name__`` on exit code 1.
"""


class TGVError(ValueError):
    pass


# tabular
class InsufficientData(TGVError):
    pass


class ConstantAttribute(TGVError):
    pass


class UnknownShape(TGVError):
    pass


class UnknownCategory(TGVError):
    pass


class NonFiniteValue(TGVError):
    pass


class ShapeMismatch(TGVError):
    pass


class LambdaOutOfRange(TGVError):
    pass


# pairing
class IndexOutOfRange(TGVError):
    pass


class NegativeThreshold(TGVError):
    pass


# encoder
class InvalidDim(TGVError):
    pass


class NonFiniteInput(TGVError):
    pass


class StaleCache(TGVError):
    pass


class FormatError(TGVError):
    pass


# loss / trainer
class EmptyPositiveSet(TGVError):
    pass


class ZeroNormRow(TGVError):
    pass


class NonFiniteLoss(TGVError):
    pass


class InvalidConfig(TGVError):
    pass


class InvalidRate(TGVError):
    pass


# zero-shot
class EmptyReference(TGVError):
    pass


class KOutOfRange(TGVError):
    pass


class ZeroNormQuery(TGVError):
    pass


class UnknownAttribute(TGVError):
    pass


# eval
class SingleClass(TGVError):
    pass


class LengthMismatch(TGVError):
    pass


class EmptyTrain(TGVError):
    pass


class DegenerateDesign(TGVError):
    pass

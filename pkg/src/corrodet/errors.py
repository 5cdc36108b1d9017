"""Exception types shared across the pipeline."""


class CorrodetError(Exception):
    """Base class for all pipeline errors."""


# imaging
class UnreadableFile(CorrodetError):
    pass


class UnsupportedFormat(CorrodetError):
    pass


class ZeroDimension(CorrodetError):
    pass


class IncompleteGrid(CorrodetError):
    pass


class OverlappingGridUnsupported(CorrodetError):
    pass


class LengthMismatch(CorrodetError):
    pass


# synthgen
class InvalidSpec(CorrodetError):
    pass


class IoFailure(CorrodetError):
    pass


# dataset
class EmptyManifest(CorrodetError):
    pass


class BadFractions(CorrodetError):
    pass


# model
class ShapeMismatch(CorrodetError):
    pass


class NonFiniteInput(CorrodetError):
    pass


class NonFiniteGradient(CorrodetError):
    pass


# trainer
class DivergedImmediately(CorrodetError):
    pass


class BadRange(CorrodetError):
    pass


class StepOutOfRange(CorrodetError):
    pass


class NonFiniteLoss(CorrodetError):
    pass


class EmptyStream(CorrodetError):
    pass


# aggregate
class EmptyPrediction(CorrodetError):
    pass


class EmptyValidation(CorrodetError):
    pass


# metrics
class SingleClass(CorrodetError):
    pass

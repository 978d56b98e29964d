"""Exception hierarchy shared by all palign modules."""


class PalignError(Exception):
    """Base class for computation errors raised by palign."""


class EmptyRegion(PalignError):
    """A mask selected no pixels."""


class SingularSystem(PalignError):
    """A normal-equation system could not be factorized."""


class DegenerateMean(PalignError):
    """A scalar or per-channel gain has a (near) zero denominator."""


class RegionTooSmall(PalignError):
    """A masked partition holds too few pixels for a 12-parameter fit."""


class PngFormatError(PalignError):
    """The PNG file uses a layout this toolkit does not decode."""


class TrainingDiverged(PalignError):
    """The simulator produced a non-finite loss."""

    def __init__(self, step, value):
        super().__init__(f"non-finite training loss {value!r} at step {step}")
        self.step = step
        self.value = value

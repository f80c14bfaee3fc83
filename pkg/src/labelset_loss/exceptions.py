"""Exception types raised across the package."""


class LabelSetError(ValueError):
    """Base class for all errors raised by labelset_loss."""


class InvalidLabelSpace(LabelSetError):
    pass


class EmptyVolume(LabelSetError):
    pass


class IndexOutOfRange(LabelSetError):
    pass


class InvalidLabelSet(LabelSetError):
    pass


class DimsMismatch(LabelSetError):
    pass


class NegativeProbability(LabelSetError):
    def __init__(self, voxel: int, cls: int, value: float):
        self.voxel = voxel
        self.cls = cls
        self.value = value
        super().__init__(
            f"negative probability {value!r} at voxel {voxel}, class {cls}")


class RowSumViolation(LabelSetError):
    def __init__(self, voxel: int, deviation: float):
        self.voxel = voxel
        self.deviation = deviation
        super().__init__(
            f"row of voxel {voxel} deviates from 1 by {deviation:.3g}")


class NotLeafPartition(LabelSetError):
    pass


class InvalidLossSpec(LabelSetError):
    pass


class StepTooSmall(LabelSetError):
    pass


class OutOfDomain(LabelSetError):
    pass


class ConfigInvalid(LabelSetError):
    pass


class LPrimeIsFullSpace(LabelSetError):
    pass


class VolumeFormatError(LabelSetError):
    """Malformed LSV1 file or payload."""


class BadMagic(VolumeFormatError):
    pass


class TruncatedFile(VolumeFormatError):
    pass


class InvalidBitmask(VolumeFormatError):
    pass


class NonFiniteValue(VolumeFormatError):
    pass


class ShapeMismatch(LabelSetError):
    pass


class TooFewVolumes(LabelSetError):
    pass


class NonFiniteLoss(ArithmeticError):
    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(f"non-finite loss {value!r} at optimizer step {step}")


class MissingData(LabelSetError):
    pass

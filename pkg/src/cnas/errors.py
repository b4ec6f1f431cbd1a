"""Exception types shared across the package."""


class CnasError(Exception):
    """Base class for all package errors."""


class ShapeError(CnasError):
    """Input tensor shape does not match what a layer expects."""


class EmptyDataError(CnasError):
    """A training or evaluation split is empty."""


class DivergenceError(CnasError):
    """Training produced a non-finite loss.

    Carries the best snapshot seen before divergence so callers can
    salvage a partially trained network.
    """

    def __init__(self, message, best_net=None, best_val_accuracy=0.0):
        super().__init__(message)
        self.best_net = best_net
        self.best_val_accuracy = best_val_accuracy


class LabelError(CnasError):
    """A label is outside the range the network can classify."""


class DescriptorError(CnasError):
    """An architecture descriptor violates its structural invariants."""


class NoOpError(CnasError):
    """Requested output expansion would not add any classes."""


class WidthError(CnasError):
    """Requested width is not strictly larger than the current one."""


class SiteError(CnasError):
    """Morphism target is not an eligible site."""


class EmptyBatchError(CnasError):
    """An operation that needs at least one sample received none."""


class CoverageError(CnasError):
    """Per-class accuracy map does not cover every class seen."""


class OrderError(CnasError):
    """Class arrival order is not a permutation of the class set."""


class FormatError(CnasError):
    """A binary dataset or checkpoint file is malformed."""


class MergeError(CnasError):
    """Run directories with mismatched scenarios cannot be merged."""


class ConfigError(CnasError):
    """A run configuration file is invalid."""

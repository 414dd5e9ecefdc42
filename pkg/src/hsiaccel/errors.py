"""Exception hierarchy for the toolkit.

Every error raised by the library derives from HsiAccelError so the CLI can
catch one type and map it to exit code 1.
"""


class HsiAccelError(Exception):
    """Base class for all toolkit errors."""


class FormatError(HsiAccelError):
    """Container file has a bad magic, version or structural field."""


class TruncationError(FormatError):
    """Container file ends before the declared payload is complete."""


class DataError(HsiAccelError):
    """Payload values violate an invariant (non-finite, wrong extent)."""


class UnlabeledError(HsiAccelError):
    """Patch centered on an unlabeled pixel while labels were required."""


class EmptyDatasetError(HsiAccelError):
    """No class survived the minimum-sample filter."""


class ConfigError(HsiAccelError):
    """Network/dataset parameters cannot produce a valid layer graph."""


class WeightShapeError(HsiAccelError):
    """Stored weight tensor does not match the derived layer shape."""


class ShapeError(HsiAccelError):
    """Runtime tensor does not match the layer it is fed into."""


class ModelError(HsiAccelError):
    """Performance model asked to cost an unsupported layer kind."""


class InfeasibleError(HsiAccelError):
    """Design-space search found no point satisfying the constraints."""

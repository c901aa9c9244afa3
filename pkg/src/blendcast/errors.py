"""Exception hierarchy shared across the package.

Every error raised on a documented failure path derives from BlendcastError
so callers (and the CLI) can map failures to categories without string
matching.
"""


class BlendcastError(Exception):
    """Base class for all blendcast domain errors."""

    category = "error"


class TraceError(BlendcastError):
    """Base class for coefficient-trace parsing/validation failures."""

    category = "trace"


class EmptyTraceError(TraceError):
    category = "empty-trace"


class MalformedHeaderError(TraceError):
    category = "malformed-header"


class RaggedRowError(TraceError):
    category = "ragged-row"


class NonFiniteValueError(TraceError):
    category = "non-finite-value"


class InsufficientBudgetError(BlendcastError):
    """Bit budget cannot carry even one full frame of coefficients."""

    category = "insufficient-budget"


class PacketError(BlendcastError):
    """Base class for chunk-packet decode failures."""

    category = "packet"


class BadMagicError(PacketError):
    category = "bad-magic"


class TruncatedPacketError(PacketError):
    category = "truncated-packet"


class BitmapMismatchError(PacketError):
    category = "bitmap-mismatch"


class WindowUnderfullError(BlendcastError):
    """Fewer received frames than the prediction window needs."""

    category = "window-underfull"


class DivergenceError(BlendcastError):
    """Training loss became non-finite; carries the offending epoch."""

    category = "divergence"

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class EmptyStreamError(BlendcastError):
    """Trace too short to yield a single full chunk."""

    category = "empty-stream"

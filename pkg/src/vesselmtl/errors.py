"""Exception hierarchy. Every error raised on purpose derives from VesselMTLError."""


class VesselMTLError(Exception):
    pass


class DimensionError(VesselMTLError, ValueError):
    """Operand shapes are incompatible."""


class GeometryError(VesselMTLError, ValueError):
    """Spatial sizes do not admit the requested operation."""


class ContractError(VesselMTLError, ValueError):
    """A documented precondition was violated."""


class NonFiniteError(VesselMTLError, FloatingPointError):
    """A NaN or Inf appeared while finite checking was on."""


class InvalidInputError(VesselMTLError, ValueError):
    pass


class OracleTooLargeError(VesselMTLError, ValueError):
    pass


class FormatError(VesselMTLError):
    """Base class for tensor-map and checkpoint decoding failures."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedError(FormatError):
    def __init__(self, message, entry=None):
        super().__init__(message)
        self.entry = entry


class CorruptError(FormatError):
    """Structurally invalid content: bad type tag, trailing bytes, bad config block."""


class ParameterSetError(VesselMTLError, KeyError):
    def __init__(self, missing=(), unexpected=()):
        self.missing = sorted(missing)
        self.unexpected = sorted(unexpected)
        parts = []
        if self.missing:
            parts.append("missing parameters: " + ", ".join(self.missing))
        if self.unexpected:
            parts.append("unexpected parameters: " + ", ".join(self.unexpected))
        super().__init__("; ".join(parts))

    def __str__(self):
        return self.args[0]


class ConfigError(VesselMTLError, ValueError):
    pass


class DataError(VesselMTLError):
    pass


class PairingError(DataError):
    pass


class ImageFormatError(DataError):
    pass


class ReportError(DataError):
    pass


class DivergenceError(VesselMTLError, FloatingPointError):
    def __init__(self, message, last_rows=()):
        super().__init__(message)
        self.last_rows = list(last_rows)

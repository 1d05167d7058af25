"""Exception hierarchy. ``category`` is what the CLI prints on failure."""


class V2IError(Exception):
    category = "error"


class ContractError(V2IError, ValueError):
    """Caller violated a documented precondition (shapes, ordering, ranges)."""

    category = "contract"


class GeometryError(V2IError, ValueError):
    category = "geometry"


class OutOfRangeError(V2IError, ValueError):
    category = "out-of-range"


class EquipmentError(V2IError, ValueError):
    category = "equipment"


class CalibrationError(V2IError, ValueError):
    category = "calibration"


class ExtractionError(V2IError, ValueError):
    category = "extraction"


class NoValidPathError(ExtractionError):
    category = "no-valid-path"


class NumericInconsistencyError(ExtractionError):
    category = "numeric"


class FormatError(V2IError, ValueError):
    """Malformed or truncated binary/text artifact; ``record`` is the failing index."""

    category = "format"

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class DivergenceError(V2IError, FloatingPointError):
    category = "divergence"

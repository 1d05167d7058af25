"""Back-to-back reference calibration and the frequency/delay transforms.

Transform convention (fixed): ``taps = ifft(H)``, i.e. the ``1/N_f`` factor
sits on the inverse, so ``sum |taps|^2 = sum |H|^2 / N_f``. A ray of
amplitude ``a`` on the tap grid keeps amplitude ``a`` in the delay domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ContractError
from .sim import FrequencySnapshot

TRANSFORM_CONVENTION = "taps = ifft(H), 1/N on the inverse"
_DEGENERATE = 1e-30


@dataclass
class ReferenceCapture:
    y_ref: np.ndarray
    h_ref: np.ndarray

    def __post_init__(self):
        self.y_ref = np.asarray(self.y_ref, dtype=np.complex128)
        self.h_ref = np.asarray(self.h_ref, dtype=np.complex128)
        if self.y_ref.shape != self.h_ref.shape or self.y_ref.ndim != 1:
            raise ContractError("y_ref and h_ref must be vectors of equal length")
        _check_reference(self.y_ref)

    @classmethod
    def from_equipment(cls, equipment):
        return cls(equipment.reference_capture(), equipment.h_ref)


@dataclass
class ImpulseResponse:
    timestamp: float
    taps: np.ndarray
    tap_spacing: float


def _check_reference(y_ref):
    bad = np.flatnonzero(np.abs(y_ref) < _DEGENERATE)
    if bad.size:
        raise CalibrationError(f"reference spectrum is degenerate at bin {int(bad[0])}")


def calibrate_values(y, ref: ReferenceCapture):
    """Vectorized core: ``y`` may be ``(N,)`` or ``(M, N)``."""
    y = np.asarray(y, dtype=np.complex128)
    if y.shape[-1] != ref.y_ref.size:
        raise ContractError(f"snapshot has {y.shape[-1]} bins, reference has {ref.y_ref.size}")
    return y / ref.y_ref * ref.h_ref


def calibrate(y: FrequencySnapshot, ref: ReferenceCapture) -> FrequencySnapshot:
    return FrequencySnapshot(y.timestamp, calibrate_values(y.values, ref))


def to_impulse_values(h, taper=None):
    """Inverse DFT along the last axis. ``taper`` is an optional window vector."""
    h = np.asarray(h, dtype=np.complex128)
    if taper is not None:
        h = h * np.asarray(taper)
    return np.fft.ifft(h, axis=-1)


def to_impulse_response(cfr: FrequencySnapshot, bandwidth, taper=None) -> ImpulseResponse:
    return ImpulseResponse(cfr.timestamp, to_impulse_values(cfr.values, taper), 1.0 / bandwidth)


def to_frequency_values(taps):
    return np.fft.fft(np.asarray(taps, dtype=np.complex128), axis=-1)


def to_transfer_function(ir: ImpulseResponse) -> FrequencySnapshot:
    return FrequencySnapshot(ir.timestamp, to_frequency_values(ir.taps))

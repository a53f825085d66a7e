"""Range-filtered Doppler spectrum presence detection from monostatic Wi-Fi CSI."""
from .core import (
    CsiCapture,
    CsiFrame,
    Label,
    PresenceState,
    SensingConfig,
    SensingMode,
    preset,
    range_resolution,
    velocity_resolution,
)

__version__ = "0.1.0"

__all__ = [
    "CsiCapture",
    "CsiFrame",
    "Label",
    "PresenceState",
    "SensingConfig",
    "SensingMode",
    "preset",
    "range_resolution",
    "velocity_resolution",
]

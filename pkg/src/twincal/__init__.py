"""Twin-beam absolute calibration of photon-counting cameras.

Simulates pairwise-correlated multimode photon counts on a pixel sensor and
recovers the detection efficiency from the noise reduction factor of
point-symmetric detection regions.
"""

from .errors import DegeneracyError, TwinCalError, ValidationError
from .scene import Frame, FrameStack, ModeLattice, SceneModel, SensorModel, build_lattice

__version__ = "0.1.0"

__all__ = [
    "DegeneracyError",
    "Frame",
    "FrameStack",
    "ModeLattice",
    "SceneModel",
    "SensorModel",
    "TwinCalError",
    "ValidationError",
    "build_lattice",
]

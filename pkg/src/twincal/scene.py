"""Physical configuration and frame containers.

Units: lengths in micrometres unless a name says ``_px``; counts in
photo-electrons.  Sensor coordinates put the origin at the corner of pixel
(0, 0), x along columns and y along rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

FIDELITIES = ("point", "spread")

# Rotation of the mode lattice with respect to the pixel grid.  A generic
# angle keeps border-band occupancy close to its area average.
DEFAULT_LATTICE_ANGLE = 0.37


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SceneModel:
    """Ground truth of the twin-beam source and the detection chain."""

    mu: float
    r_coh: float
    eta_i: float
    eta_s: float
    d_offset: tuple[float, float] = (0.0, 0.0)
    beta: float = 0.5
    read_noise_std: float = 0.0
    stray_mean: float = 0.0
    fidelity: str = "point"

    def __post_init__(self):
        object.__setattr__(self, "d_offset", tuple(float(v) for v in self.d_offset))
        if len(self.d_offset) != 2:
            raise ValidationError("d_offset must have two components")
        if not (self.mu >= 0):
            raise ValidationError(f"mu must be >= 0, got {self.mu}")
        if not (self.r_coh > 0):
            raise ValidationError(f"r_coh must be > 0, got {self.r_coh}")
        for name in ("eta_i", "eta_s", "beta"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if not (self.read_noise_std >= 0):
            raise ValidationError("read_noise_std must be >= 0")
        if not (self.stray_mean >= 0):
            raise ValidationError("stray_mean must be >= 0")
        if self.fidelity not in FIDELITIES:
            raise ValidationError(f"fidelity must be one of {FIDELITIES}, got {self.fidelity!r}")

    @property
    def cell_area(self) -> float:
        return math.pi * self.r_coh**2

    @property
    def alpha(self) -> float:
        """Balancing factor eta_i / eta_s implied by the scene."""
        return self.eta_i / self.eta_s


@dataclass(frozen=True)
class SensorModel:
    """Pixel grid of the camera.

    ``cs_position`` is the nominal centre of symmetry of the pixel grid in
    physical-pixel coordinates.  The physical centre of symmetry of the twin
    beams sits at ``cs_position * pixel_pitch + scene.d_offset``.
    """

    width: int
    height: int
    pixel_pitch: float = 20.0
    bin_factor: int = 1
    cs_position: tuple[float, float] | None = None
    noise_after_binning: bool = True

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("sensor width and height must be positive")
        if not (self.pixel_pitch > 0):
            raise ValidationError("pixel_pitch must be > 0")
        if int(self.bin_factor) != self.bin_factor or self.bin_factor < 1:
            raise ValidationError(f"bin_factor must be an integer >= 1, got {self.bin_factor}")
        if self.width % self.bin_factor or self.height % self.bin_factor:
            raise ValidationError(
                f"sensor {self.width}x{self.height} is not divisible by bin_factor {self.bin_factor}"
            )
        cs = self.cs_position
        if cs is None:
            cs = (self.width / 2.0, self.height / 2.0)
        cs = (float(cs[0]), float(cs[1]))
        if not (0 < cs[0] < self.width and 0 < cs[1] < self.height):
            raise ValidationError(f"cs_position {cs} is not strictly inside the sensor")
        object.__setattr__(self, "cs_position", cs)

    @property
    def readout_pitch(self) -> float:
        """Side of one read-out (super-)pixel in micrometres."""
        return self.pixel_pitch * self.bin_factor

    @property
    def readout_shape(self) -> tuple[int, int]:
        return self.height // self.bin_factor, self.width // self.bin_factor

    @property
    def size_um(self) -> tuple[float, float]:
        return self.width * self.pixel_pitch, self.height * self.pixel_pitch

    @property
    def cs_um(self) -> np.ndarray:
        return np.asarray(self.cs_position) * self.pixel_pitch


@dataclass(frozen=True)
class ModeLattice:
    """Positions of twin-mode pairs on the detection plane (micrometres).

    ``pos_i[k]`` and ``pos_s[k]`` are the centres of the idler and signal
    halves of mode pair ``k``.
    """

    pos_i: np.ndarray
    pos_s: np.ndarray
    cell_area: float
    field: tuple[float, float, float, float]  # idler field x0, y0, x1, y1
    angle: float = DEFAULT_LATTICE_ANGLE
    border_halfwidth: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pos_i", _frozen(self.pos_i).reshape(-1, 2))
        object.__setattr__(self, "pos_s", _frozen(self.pos_s).reshape(-1, 2))
        if self.pos_i.shape != self.pos_s.shape:
            raise ValidationError("idler and signal site arrays differ in shape")

    def __len__(self):
        return len(self.pos_i)

    @property
    def spacing(self) -> float:
        return math.sqrt(self.cell_area)


def point_border_halfwidth(r_coh: float) -> float:
    """Half-width of the band around pixel edges where point modes are shared.

    Chosen so that a straight region boundary of length L crosses
    ``2 L / r`` border modes at a density of one mode per ``pi r^2``.
    """
    return math.pi * r_coh / 4.0


def build_lattice(scene: SceneModel, sensor: SensorModel, angle: float = DEFAULT_LATTICE_ANGLE) -> ModeLattice:
    """Square lattice of mode pairs, one per ``pi r_coh^2``, over the idler half.

    The idler half is the part of the sensor left of the grid centre of
    symmetry.  Partners are point reflections through the physical centre of
    symmetry (grid centre plus ``scene.d_offset``).  In point fidelity, sites
    are kept at least one border half-width away from the sensor edges and
    from the symmetry line so that shared photons stay on their own half.
    """
    a = math.sqrt(scene.cell_area)
    cs = sensor.cs_um
    cs_true = cs + np.asarray(scene.d_offset)
    w_um, h_um = sensor.size_um
    margin = point_border_halfwidth(scene.r_coh) if scene.fidelity == "point" else 0.0

    n = int(math.ceil(math.hypot(w_um, h_um) / a)) + 2
    idx = np.arange(-n, n) + 0.5
    gx, gy = np.meshgrid(idx * a, idx * a)
    c, s = math.cos(angle), math.sin(angle)
    px = cs[0] + c * gx.ravel() - s * gy.ravel()
    py = cs[1] + s * gx.ravel() + c * gy.ravel()
    pos_i = np.column_stack([px, py])
    pos_s = 2.0 * cs_true - pos_i

    def inside(p):
        return (
            (p[:, 0] >= margin)
            & (p[:, 0] <= w_um - margin)
            & (p[:, 1] >= margin)
            & (p[:, 1] <= h_um - margin)
        )

    keep = (pos_i[:, 0] < cs[0] - margin) & inside(pos_i) & inside(pos_s)
    order = np.lexsort((pos_i[keep, 0], pos_i[keep, 1]))
    return ModeLattice(
        pos_i=pos_i[keep][order],
        pos_s=pos_s[keep][order],
        cell_area=scene.cell_area,
        field=(margin, margin, cs[0] - margin, h_um - margin),
        angle=angle,
        border_halfwidth=margin,
    )


@dataclass(frozen=True)
class Frame:
    """One read-out image in photo-electrons."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError(f"frame must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("frame contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class FrameStack:
    """Frames stacked along axis 0: ``data[frame, row, column]``.

    ``pitch`` is the size of one stored pixel in micrometres.
    """

    data: np.ndarray
    pitch: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise ValidationError(f"frame stack must be 3-D, got shape {self.data.shape}")

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i) -> Frame:
        return Frame(self.data[i])

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    @classmethod
    def from_frames(cls, frames, pitch=None) -> "FrameStack":
        return cls(np.stack([f.values for f in frames]), pitch=pitch)

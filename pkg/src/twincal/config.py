"""Flat ``key=value`` experiment configuration.

Lines starting with ``#`` are comments.  Every key must be known; keys
without a default must be present.  Physical bounds are re-checked by
building the scene and sensor models.
"""

from __future__ import annotations

from dataclasses import MISSING, dataclass, fields
from pathlib import Path

from .errors import ValidationError
from .scene import DEFAULT_LATTICE_ANGLE, SceneModel, SensorModel

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.replace(" ", "").split(",") if p)


def _float_opt(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


@dataclass(frozen=True)
class ExperimentConfig:
    # scene
    mu: float
    r_coh: float
    eta_i: float
    eta_s: float
    width: int
    height: int
    d_x: float = 0.0
    d_y: float = 0.0
    beta: float = 0.5
    read_noise_std: float = 0.0
    stray_mean: float = 0.0
    fidelity: str = "point"
    # sensor
    pixel_pitch: float = 20.0
    bin_factor: int = 1
    cs_x: float | None = None  # physical pixels; None means sensor centre
    cs_y: float | None = None
    noise_after_binning: bool = True
    lattice_angle: float = DEFAULT_LATTICE_ANGLE
    # simulation
    seed: int = 0
    n_frames: int = 1000
    n_bg_frames: int = 1000
    workers: int = 1
    # calibration (sizes and centre in read-out pixels)
    l_list: tuple[int, ...] = ()
    region_x: float | None = None
    region_y: float | None = None
    r_est: float | None = None  # defaults to r_coh
    u_r: float = 0.0
    d_est: float = 0.0
    u_d: float = 0.0
    mu_bound: float = 0.0
    n_boot: int = 1000
    boot_seed: int = 0
    # coherence (physical pixels)
    shift_range: int = 6
    coh_region: tuple[int, ...] = ()
    # centring scan
    scan_step: float = 10.0
    scan_steps: int = 11
    scan_frames: int = 500
    scan_passes: int = 3

    def __post_init__(self):
        for name in ("n_frames", "n_bg_frames", "workers", "n_boot", "scan_steps", "scan_frames", "scan_passes"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.shift_range < 1:
            raise ValidationError("shift_range must be >= 1")
        if self.u_r < 0 or self.u_d < 0 or self.d_est < 0 or self.mu_bound < 0:
            raise ValidationError("u_r, u_d, d_est and mu_bound must be >= 0")
        if self.coh_region and len(self.coh_region) != 4:
            raise ValidationError("coh_region must be x0,y0,x1,y1")
        if not (self.scan_step > 0):
            raise ValidationError("scan_step must be > 0")
        # revalidate physical bounds
        self.scene()
        self.sensor()

    def scene(self) -> SceneModel:
        return SceneModel(
            mu=self.mu, r_coh=self.r_coh, eta_i=self.eta_i, eta_s=self.eta_s,
            d_offset=(self.d_x, self.d_y), beta=self.beta, read_noise_std=self.read_noise_std,
            stray_mean=self.stray_mean, fidelity=self.fidelity,
        )

    def sensor(self) -> SensorModel:
        cs = None
        if self.cs_x is not None or self.cs_y is not None:
            if self.cs_x is None or self.cs_y is None:
                raise ValidationError("cs_x and cs_y must be given together")
            cs = (self.cs_x, self.cs_y)
        return SensorModel(self.width, self.height, self.pixel_pitch, self.bin_factor, cs, self.noise_after_binning)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = "none"
            out[f.name] = v
        return out


_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _bool,
    "float | None": _float_opt,
    "tuple[int, ...]": _int_list,
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ValidationError(f"{source}:{lineno}: expected key=value")
        key, raw = (p.strip() for p in s.split("=", 1))
        if key not in known:
            raise ValidationError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[known[key].type](raw)
        except ValueError as e:
            raise ValidationError(f"{source}:{lineno}: bad value for {key}: {e}") from e
    missing = [n for n, f in known.items() if n not in values and f.default is MISSING]
    if missing:
        raise ValidationError(f"{source}: missing required keys: {', '.join(missing)}")
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ValidationError(f"{source}: {e}") from e


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    return parse_config(p.read_text(), str(p))


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in cfg.to_dict().items())

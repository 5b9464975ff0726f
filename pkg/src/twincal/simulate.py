"""Monte Carlo synthesis of twin-beam frames.

Every mode pair shares one Bose-Einstein photon number; each arm keeps its
photons through an independent binomial loss.  Two landing models:

point
    Photons land on the read-out pixel holding the mode centre.  Modes whose
    centre lies within ``pi r / 4`` of a pixel edge are shared with the
    neighbouring pixel: each photon stays with probability ``beta`` (per
    axis, independently).
spread
    Mode centres are redrawn each frame as a Poisson field of density
    ``1 / (pi r^2)`` and every photon lands at a Gaussian offset from its
    mode centre.  The offset width is set so that the idler/signal
    cross-correlation recorded at the physical pixel pitch has a FWHM equal
    to ``r_coh``.

Random streams are derived from ``(seed, stream, frame index)`` so results
do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scene import Frame, FrameStack, ModeLattice, SceneModel, SensorModel, point_border_halfwidth

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def sample_thermal(mu: float, rng: np.random.Generator, size=None):
    """Draw photon numbers from P(n) = mu^n / (1 + mu)^(n + 1)."""
    if not (mu >= 0):
        raise ValidationError(f"mean photon number must be >= 0, got {mu}")
    if mu == 0:
        return np.zeros(size, dtype=np.int64) if size is not None else 0
    n = rng.geometric(1.0 / (1.0 + mu), size=size) - 1
    return n


def thin(n, eta: float, rng: np.random.Generator):
    """Binomial loss channel: keep each photon with probability ``eta``."""
    if not (0.0 <= eta <= 1.0):
        raise ValidationError(f"efficiency must lie in [0, 1], got {eta}")
    n_arr = np.asarray(n)
    if np.any(n_arr < 0):
        raise ValidationError("photon counts must be non-negative")
    if eta == 1.0:
        return n
    if eta == 0.0:
        return np.zeros_like(n_arr) if n_arr.ndim else 0
    return rng.binomial(n, eta)


def spread_kernel_std(r_coh: float, pixel_pitch: float) -> float:
    """Per-axis std of the photon landing offset for spread fidelity.

    The recorded cross-correlation is the landing kernel convolved with
    itself and with the pixel aperture twice (a triangle of variance
    ``p^2 / 6``).  Matching second moments to a Gaussian of FWHM ``r_coh``
    gives ``2 s^2 + p^2 / 6 = (r_coh / 2.3548)^2``.  Returns 0 when the
    pixel alone is already wider than ``r_coh``.
    """
    var = (r_coh / FWHM_PER_SIGMA) ** 2 - pixel_pitch**2 / 6.0
    return math.sqrt(var / 2.0) if var > 0 else 0.0


@dataclass(frozen=True)
class _PointTargets:
    own: np.ndarray  # (S, 2) read-out pixel of the site centre
    alt: np.ndarray  # (S, 2) neighbour across the nearest edge, per axis
    share_x: np.ndarray  # (S,) bool
    share_y: np.ndarray


def _point_targets(pos: np.ndarray, pitch: float, halfwidth: float) -> _PointTargets:
    u = pos / pitch
    own = np.floor(u).astype(np.int64)
    frac = u - own
    dist = np.minimum(frac, 1.0 - frac) * pitch
    step = np.where(frac < 0.5, -1, 1)
    share = dist < halfwidth
    return _PointTargets(own, own + step, share[:, 0], share[:, 1])


def collection_fractions(targets: _PointTargets, rect, beta: float) -> np.ndarray:
    """Expected fraction of each site's photons landing in ``rect``.

    ``rect`` is ``(x0, y0, x1, y1)`` in read-out pixels, half-open.
    """
    x0, y0, x1, y1 = rect

    def axis(own, alt, share, lo, hi):
        a = ((own >= lo) & (own < hi)).astype(float)
        b = ((alt >= lo) & (alt < hi)).astype(float)
        return np.where(share, beta * a + (1.0 - beta) * b, a)

    fx = axis(targets.own[:, 0], targets.alt[:, 0], targets.share_x, x0, x1)
    fy = axis(targets.own[:, 1], targets.alt[:, 1], targets.share_y, y0, y1)
    return fx * fy


class _Plan:
    """Per-stack precomputation shared by all frames."""

    def __init__(self, scene: SceneModel, sensor: SensorModel, lattice: ModeLattice):
        self.scene = scene
        self.sensor = sensor
        self.lattice = lattice
        self.shape = sensor.readout_shape
        pitch = sensor.readout_pitch
        w_um, h_um = sensor.size_um
        if scene.fidelity == "point":
            hw = point_border_halfwidth(scene.r_coh)
            if pitch <= 2.0 * hw:
                raise ValidationError(
                    f"read-out pitch {pitch} um is too small for point fidelity "
                    f"(needs > pi*r_coh/2 = {2 * hw:.3f} um)"
                )
            for name, pos in (("idler", lattice.pos_i), ("signal", lattice.pos_s)):
                if len(pos) and (
                    pos[:, 0].min() < 0 or pos[:, 1].min() < 0
                    or pos[:, 0].max() > w_um or pos[:, 1].max() > h_um
                ):
                    raise ValidationError(f"{name} lattice sites fall outside the sensor")
            expected = point_border_halfwidth(scene.r_coh)
            if not math.isclose(lattice.cell_area, scene.cell_area, rel_tol=1e-9):
                raise ValidationError("lattice cell area does not match scene r_coh")
            if lattice.border_halfwidth + 1e-9 < expected:
                raise ValidationError("lattice was not built for point fidelity")
            self.targets = (
                _point_targets(lattice.pos_i, pitch, hw),
                _point_targets(lattice.pos_s, pitch, hw),
            )
        else:
            if not math.isclose(lattice.cell_area, scene.cell_area, rel_tol=1e-9):
                raise ValidationError("lattice cell area does not match scene r_coh")
            x0, y0, x1, y1 = lattice.field
            self.field_origin = np.array([x0, y0])
            self.field_size = np.array([x1 - x0, y1 - y0])
            self.mean_modes = (x1 - x0) * (y1 - y0) / scene.cell_area
            self.kernel = spread_kernel_std(scene.r_coh, sensor.pixel_pitch)
            self.cs_true = sensor.cs_um + np.asarray(scene.d_offset)


def _deposit(img_flat, shape, cells, counts):
    ny, nx = shape
    ok = (cells[:, 0] >= 0) & (cells[:, 0] < nx) & (cells[:, 1] >= 0) & (cells[:, 1] < ny)
    if not np.all(ok):
        cells, counts = cells[ok], counts[ok]
    img_flat += np.bincount(cells[:, 1] * nx + cells[:, 0], weights=counts, minlength=nx * ny)


def _land_point(img_flat, shape, k, t: _PointTargets, beta, rng, record=None):
    kx = np.where(t.share_x, rng.binomial(k, beta), k)
    parts = []
    for xs, cnt in ((t.own[:, 0], kx), (t.alt[:, 0], k - kx)):
        ky = np.where(t.share_y, rng.binomial(cnt, beta), cnt)
        for ys, c in ((t.own[:, 1], ky), (t.alt[:, 1], cnt - ky)):
            cells = np.column_stack([xs, ys])
            _deposit(img_flat, shape, cells, c)
            parts.append((cells, c))
    if record is not None:
        record.append(parts)


def _photon_frame(plan: _Plan, rng: np.random.Generator, record: dict | None):
    scene = plan.scene
    ny, nx = plan.shape
    img = np.zeros(ny * nx)
    if scene.fidelity == "point":
        n = sample_thermal(scene.mu, rng, len(plan.lattice))
        ki = thin(n, scene.eta_i, rng)
        ks = thin(n, scene.eta_s, rng)
        parts = [] if record is not None else None
        _land_point(img, plan.shape, ki, plan.targets[0], scene.beta, rng, parts)
        _land_point(img, plan.shape, ks, plan.targets[1], scene.beta, rng, parts)
        if record is not None:
            record.update(n=n, k_i=ki, k_s=ks, landing_i=parts[0], landing_s=parts[1])
    else:
        m = rng.poisson(plan.mean_modes)
        centres = plan.field_origin + rng.random((m, 2)) * plan.field_size
        partners = 2.0 * plan.cs_true - centres
        n = sample_thermal(scene.mu, rng, m)
        ki = thin(n, scene.eta_i, rng)
        ks = thin(n, scene.eta_s, rng)
        pitch = plan.sensor.readout_pitch
        for c, k in ((centres, ki), (partners, ks)):
            pos = np.repeat(c, k, axis=0)
            if plan.kernel > 0:
                pos = pos + rng.normal(0.0, plan.kernel, pos.shape)
            cells = np.floor(pos / pitch).astype(np.int64)
            _deposit(img, plan.shape, cells, np.ones(len(cells)))
        if record is not None:
            record.update(n=n, k_i=ki, k_s=ks, centres=centres, partners=partners)
    return img.reshape(ny, nx)


def _noise(plan: _Plan, img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    scene, sensor = plan.scene, plan.sensor
    b2 = sensor.bin_factor**2
    if scene.stray_mean > 0:
        img = img + rng.poisson(scene.stray_mean * b2, img.shape)
    if scene.read_noise_std > 0:
        # hardware binning reads each super-pixel once; per-pixel reads sum in quadrature
        std = scene.read_noise_std if sensor.noise_after_binning else scene.read_noise_std * sensor.bin_factor
        img = img + rng.normal(0.0, std, img.shape)
        # stored frames are float32, keep in-memory values representable
        img = img.astype(np.float32).astype(np.float64)
    return img


def frame_streams(seed: int, frame_index: int, stream: int = 0):
    """Independent (photon, noise) generators for one frame."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream, frame_index))
    photon, noise = ss.spawn(2)
    return np.random.default_rng(photon), np.random.default_rng(noise)


def simulate_frame(
    scene: SceneModel,
    sensor: SensorModel,
    lattice: ModeLattice,
    rng,
    *,
    record: dict | None = None,
    _plan: _Plan | None = None,
) -> Frame:
    """Synthesize one read-out frame.

    ``rng`` is either a single ``numpy.random.Generator`` (used for photons
    and noise) or a ``(photon_rng, noise_rng)`` pair.  When ``record`` is a
    dict it receives every draw: photon numbers, per-arm detected counts and
    the landing cells with their counts.
    """
    plan = _plan or _Plan(scene, sensor, lattice)
    photon_rng, noise_rng = rng if isinstance(rng, tuple) else (rng, rng)
    img = _photon_frame(plan, photon_rng, record)
    return Frame(_noise(plan, img, noise_rng))


def simulate_stack(
    scene: SceneModel,
    sensor: SensorModel,
    lattice: ModeLattice,
    n_frames: int,
    seed: int = 0,
    *,
    stream: int = 0,
    workers: int = 1,
    record: list | None = None,
) -> FrameStack:
    """Synthesize ``n_frames`` frames; frame ``f`` uses substream ``(seed, stream, f)``.

    ``record``, when a list, is filled with one draw dict per frame.
    """
    if n_frames < 1:
        raise ValidationError("n_frames must be >= 1")
    plan = _Plan(scene, sensor, lattice)
    ny, nx = plan.shape
    out = np.empty((n_frames, ny, nx))
    records = [None] * n_frames

    def run(f):
        rec = {} if record is not None else None
        frame = simulate_frame(scene, sensor, lattice, frame_streams(seed, f, stream), record=rec, _plan=plan)
        out[f] = frame.values
        records[f] = rec

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(n_frames)))
    else:
        for f in range(n_frames):
            run(f)
    if record is not None:
        record.extend(records)
    return FrameStack(out, pitch=sensor.readout_pitch, meta={"seed": seed, "stream": stream})


def simulate_background(scene: SceneModel, sensor: SensorModel, lattice: ModeLattice, n_frames: int,
                        seed: int = 0, *, workers: int = 1) -> FrameStack:
    """Dark frames: same noise model, no twin-beam light, separate random stream."""
    from dataclasses import replace

    dark = replace(scene, mu=0.0)
    return simulate_stack(dark, sensor, lattice, n_frames, seed, stream=1, workers=workers)


def bin_frame(frame: Frame, k: int) -> Frame:
    """Sum ``k x k`` blocks of pixels."""
    v = frame.values
    if int(k) != k or k < 1:
        raise ValidationError(f"binning factor must be an integer >= 1, got {k}")
    h, w = v.shape
    if h % k or w % k:
        raise ValidationError(f"frame {w}x{h} is not divisible by binning factor {k}")
    if k == 1:
        return Frame(v.copy())
    return Frame(v.reshape(h // k, k, w // k, k).sum(axis=(1, 3)))


def point_plan_targets(scene: SceneModel, sensor: SensorModel, lattice: ModeLattice):
    """Landing targets of the point model, for bookkeeping of collection fractions."""
    plan = _Plan(scene, sensor, lattice)
    if scene.fidelity != "point":
        raise ValidationError("collection fractions are defined for point fidelity only")
    return plan.targets


def expected_moments(scene: SceneModel, f_i: np.ndarray, f_s: np.ndarray) -> dict:
    """Ensemble moments of the region sums for per-mode collection fractions.

    With fractions restricted to {0, beta, 1} this is the three-population
    mode model (correlated, uncorrelated, border); general fractions follow
    the same per-mode thinning algebra.
    """
    mu, ei, es = scene.mu, scene.eta_i, scene.eta_s
    gi, gs = f_i * ei * mu, f_s * es * mu
    return {
        "mean_i": gi.sum(),
        "mean_s": gs.sum(),
        "var_i": (gi * (1 + gi)).sum(),
        "var_s": (gs * (1 + gs)).sum(),
        "cov": (f_i * f_s).sum() * ei * es * mu * (1 + mu),
    }

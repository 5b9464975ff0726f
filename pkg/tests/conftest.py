from __future__ import annotations

import numpy as np
import pytest

from twincal.scene import SceneModel, SensorModel, build_lattice


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk():
    """Point-mode bench: 80 um read-out pixels, about a thousand mode pairs."""
    scene = SceneModel(mu=0.01, r_coh=43.0, eta_i=0.72, eta_s=0.784)
    sensor = SensorModel(256, 128, pixel_pitch=20.0, bin_factor=4)
    return scene, sensor, build_lattice(scene, sensor)

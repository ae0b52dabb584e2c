import numpy as np
import pytest

from doakit.geometry import ArrayGeometry, Direction, uniform_circular_array
from doakit.synth import SceneSpec, SourceSpec, synthesize


@pytest.fixture
def uca8():
    return uniform_circular_array(8, 0.05)


@pytest.fixture
def mic_pair():
    return ArrayGeometry(np.array([[0.075, 0.0, 0.0], [-0.075, 0.0, 0.0]]), "pair")


def make_scene(
    geom,
    azimuth,
    elevation=0.0,
    duration=1.0,
    sample_rate=16000.0,
    snr_db=20.0,
    seed=0,
    source="speech",
    activity=None,
    trajectory=None,
):
    if trajectory is None:
        trajectory = ((0.0, Direction(azimuth, elevation)),)
    spec = SceneSpec(
        geometry=geom,
        trajectory=trajectory,
        duration=duration,
        sample_rate=sample_rate,
        snr_db=snr_db,
        seed=seed,
        source=SourceSpec(source),
        activity=activity,
    )
    signals, truth = synthesize(spec)
    return spec, signals, truth

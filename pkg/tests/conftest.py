import pytest

from config import Config
from procam.geometry import Intrinsics
from procam.simulator import SceneConfig, synthesize_graycode_stack, synthesize_observations
from procam.structured_light import decode


@pytest.fixture(scope="session")
def default_scene():
    return SceneConfig()


@pytest.fixture(scope="session")
def consistent_scene():
    """Default scene with a projector that matches the alpha = 1, u0 = w/2 model"""
    return SceneConfig(projector=Intrinsics(f=2421.0, alpha=1.0, u0=960.0, v0=1065.0))


@pytest.fixture(scope="session")
def noiseless(default_scene):
    return synthesize_observations(default_scene)


@pytest.fixture(scope="session")
def consistent(consistent_scene):
    return synthesize_observations(consistent_scene)


@pytest.fixture(scope="session")
def distorted_scene():
    return SceneConfig(camera_k1=-5e-8)


@pytest.fixture(scope="session")
def graycode(default_scene):
    patterns, stack, mapping = synthesize_graycode_stack(default_scene)
    return patterns, stack, mapping, decode(stack, patterns)


@pytest.fixture
def restore_thresholds():
    saved = Config.thresholds()
    yield
    for name, value in saved.items():
        Config.set_threshold(name, value)

import numpy as np
import pytest

from headsplat.binding import bind_to_mesh
from headsplat.headmodel import HeadParams, make_synthetic_head, pose_mesh
from headsplat.scene import orbit_camera


@pytest.fixture(scope="session")
def head_model():
    return make_synthetic_head(seed=7)


@pytest.fixture(scope="session")
def neutral_mesh(head_model):
    return pose_mesh(head_model, HeadParams.neutral(head_model))


@pytest.fixture()
def bound_scene(head_model, neutral_mesh):
    """(cloud, binding) freshly bound to the neutral mesh, colored."""
    cloud, binding, _ = bind_to_mesh(neutral_mesh)
    rng = np.random.default_rng(13)
    cloud.sh[:, 0, :] = rng.uniform(-0.6, 0.6, (cloud.count, 3))
    return cloud, binding


@pytest.fixture(scope="session")
def head_camera():
    return orbit_camera([0.0, 0.0, 0.0], 0.0, 0.1, 0.45, width=64, height=64)

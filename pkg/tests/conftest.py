import numpy as np
import pytest

from egopose.body_model import default_body
from egopose.camera import FisheyeCamera, FisheyeIntrinsics, RigExtrinsics, default_rig
from egopose.skeleton import BoneSpec, PoseVector, Skeleton, default_skeleton


@pytest.fixture
def plain_camera():
    """f=300 px/rad, zero distortion, at the rig origin looking along +z."""
    intr = FisheyeIntrinsics(
        focal=300.0,
        principal_point=np.array([640.0, 512.0]),
        distortion=np.zeros(4),
        image_size=(1280, 1024),
        fov_limit=np.deg2rad(95.0),
    )
    ext = RigExtrinsics(rotation=np.array([0.0, 0.0, 0.0, 1.0]), translation=np.zeros(3))
    return FisheyeCamera(intrinsics=intr, extrinsics=ext, label="left")


@pytest.fixture
def distorted_camera():
    intr = FisheyeIntrinsics(
        focal=300.0,
        principal_point=np.array([640.0, 512.0]),
        distortion=np.array([0.1, -0.02, 0.004, -0.0005]),
        image_size=(1280, 1024),
        fov_limit=np.deg2rad(95.0),
    )
    ext = RigExtrinsics(
        rotation=np.array([0.0, np.sin(0.2), 0.0, np.cos(0.2)]),
        translation=np.array([0.05, -0.02, 0.1]),
    )
    return FisheyeCamera(intrinsics=intr, extrinsics=ext, label="right")


@pytest.fixture
def chain_skeleton():
    """Root plus two bones stacked along +y, one z-hinge each."""
    z = np.array([[0.0, 0.0, 1.0]])
    lim = np.array([[-np.pi, np.pi]])
    bones = [
        BoneSpec("root", None, np.zeros(3), np.zeros((0, 3)), np.zeros((0, 2))),
        BoneSpec("upper", 0, np.array([0.0, 0.5, 0.0]), z, lim),
        BoneSpec("lower", 1, np.array([0.0, 0.5, 0.0]), z, lim),
    ]
    return Skeleton(bones, {"tip": 2})


@pytest.fixture(scope="session")
def humanoid():
    return default_skeleton(1.7)


@pytest.fixture(scope="session")
def body(humanoid):
    return default_body(humanoid, 1.7)


@pytest.fixture(scope="session")
def rig():
    return default_rig(image_size=(64, 64))


def random_pose(skeleton, rng, angle_scale=0.3):
    from egopose.rotations import normalize_quat

    return PoseVector(
        root_translation=rng.normal(0.0, 0.3, 3),
        root_rotation=normalize_quat(rng.normal(0.0, 1.0, 4)),
        joint_angles=rng.normal(0.0, angle_scale, skeleton.n_dofs),
    )

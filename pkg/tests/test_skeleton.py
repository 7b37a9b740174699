import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egopose.errors import DimensionMismatch, ValidationError
from egopose.rotations import axis_angle_to_quat, normalize_quat, quat_multiply, quat_to_matrix
from egopose.skeleton import (
    DETECTION_JOINTS,
    BoneSpec,
    PoseVector,
    Skeleton,
    clamp_report,
    default_skeleton,
    fk_jacobian,
    forward_kinematics,
    load_poses,
    load_skeleton,
    save_poses,
    save_skeleton,
)
from conftest import random_pose


def chain_pose(skeleton, angles, root_t=(0, 0, 0), root_q=(0, 0, 0, 1)):
    return PoseVector(
        root_translation=np.array(root_t, dtype=float),
        root_rotation=np.array(root_q, dtype=float),
        joint_angles=np.array(angles, dtype=float),
    )


def oracle_fk(skeleton, pose):
    """Independent FK: plain 4x4 homogeneous matrix chain."""
    def trans(v):
        M = np.eye(4)
        M[:3, 3] = v
        return M

    def rot(R):
        M = np.eye(4)
        M[:3, :3] = R
        return M

    frames = {}
    root = trans(pose.root_translation) @ rot(quat_to_matrix(pose.root_rotation))
    positions = np.zeros((skeleton.n_bones, 3))
    k = 0
    for i, bone in enumerate(skeleton.bones):
        parent = root if bone.parent is None else frames[bone.parent]
        M = parent @ trans(bone.offset)
        positions[i] = M[:3, 3]
        for d in range(bone.n_dofs):
            axis, angle = bone.dof_axes[d], pose.joint_angles[k]
            K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
            R = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)
            M = M @ rot(R)
            k += 1
        frames[i] = M
    return positions


def test_rest_chain(chain_skeleton):
    pose = chain_pose(chain_skeleton, [0.0, 0.0])
    fk = forward_kinematics(chain_skeleton, pose)
    assert np.allclose(fk.positions, [[0, 0, 0], [0, 0.5, 0], [0, 1.0, 0]])


def test_rigid_translation(chain_skeleton):
    pose = chain_pose(chain_skeleton, [0.0, 0.0], root_t=(1, 2, 3))
    fk = forward_kinematics(chain_skeleton, pose)
    assert np.allclose(fk.positions, [[1, 2, 3], [1, 2.5, 3], [1, 3.0, 3]])


def test_middle_joint_rotation(chain_skeleton):
    # +90 deg about z at the middle joint folds the tip to (-0.5, 0.5, 0)
    pose = chain_pose(chain_skeleton, [np.pi / 2, 0.0])
    fk = forward_kinematics(chain_skeleton, pose)
    assert np.allclose(fk.positions[2], [-0.5, 0.5, 0.0], atol=1e-12)


def test_dimension_mismatch(chain_skeleton):
    with pytest.raises(DimensionMismatch):
        forward_kinematics(chain_skeleton, chain_pose(chain_skeleton, [0.0]))


def test_fk_matches_matrix_chain_oracle(humanoid):
    rng = np.random.default_rng(0)
    for _ in range(25):
        pose = random_pose(humanoid, rng)
        fk = forward_kinematics(humanoid, pose)
        assert np.abs(fk.positions - oracle_fk(humanoid, pose)).max() < 1e-12


def test_fk_jacobian_finite_differences(humanoid):
    rng = np.random.default_rng(1)
    h = 1e-6
    for _ in range(100):
        pose = random_pose(humanoid, rng)
        J = fk_jacobian(humanoid, pose)
        Jfd = np.zeros_like(J)
        for k in range(humanoid.n_params):
            d = np.zeros(humanoid.n_params)
            d[k] = h
            Jfd[:, :, k] = (
                forward_kinematics(humanoid, pose.step(d)).positions
                - forward_kinematics(humanoid, pose.step(-d)).positions
            ) / (2 * h)
        assert np.abs(J - Jfd).max() / max(np.abs(Jfd).max(), 1.0) < 1e-5


def test_root_translation_block_is_identity(humanoid):
    pose = random_pose(humanoid, np.random.default_rng(2))
    J = fk_jacobian(humanoid, pose)
    for b in range(humanoid.n_bones):
        assert np.allclose(J[b, :, :3], np.eye(3))


def test_off_chain_columns_zero(humanoid):
    pose = random_pose(humanoid, np.random.default_rng(3))
    J = fk_jacobian(humanoid, pose)
    lhand = humanoid.bone_index("l_hand_tip")
    rleg_dofs = [
        humanoid.dof_offset[humanoid.bone_index("r_thigh")] + d for d in range(3)
    ]
    for k in rleg_dofs:
        assert np.allclose(J[lhand, :, 6 + k], 0.0)


def test_fk_rigid_equivariance(humanoid):
    rng = np.random.default_rng(4)
    pose = random_pose(humanoid, rng)
    fk = forward_kinematics(humanoid, pose)
    dq = axis_angle_to_quat(rng.normal(0, 1, 3))
    dt = rng.normal(0, 1, 3)
    R = quat_to_matrix(dq)
    moved = PoseVector(
        root_translation=R @ pose.root_translation + dt,
        root_rotation=normalize_quat(quat_multiply(dq, pose.root_rotation)),
        joint_angles=pose.joint_angles,
    )
    fk2 = forward_kinematics(humanoid, moved)
    assert np.allclose(fk2.positions, fk.positions @ R.T + dt, atol=1e-12)


def test_bone_lengths_pose_invariant(humanoid):
    rng = np.random.default_rng(5)
    for _ in range(20):
        fk = forward_kinematics(humanoid, random_pose(humanoid, rng))
        for i, bone in enumerate(humanoid.bones):
            if bone.parent is None:
                continue
            length = np.linalg.norm(fk.positions[i] - fk.positions[bone.parent])
            assert abs(length - np.linalg.norm(bone.offset)) < 1e-12


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_equivariance_property(seed):
    humanoid = default_skeleton(1.7)
    rng = np.random.default_rng(seed)
    pose = random_pose(humanoid, rng)
    dt = rng.normal(0, 1, 3)
    moved = PoseVector(pose.root_translation + dt, pose.root_rotation, pose.joint_angles)
    p0 = forward_kinematics(humanoid, pose).positions
    p1 = forward_kinematics(humanoid, moved).positions
    assert np.allclose(p1, p0 + dt, atol=1e-12)


# ------------------------------------------------------------- clamp_report

def test_clamp_zero_at_midpoints(humanoid):
    mid = (humanoid.limits_min + humanoid.limits_max) / 2
    pose = PoseVector(np.zeros(3), np.array([0, 0, 0, 1.0]), mid)
    assert np.all(clamp_report(humanoid, pose) == 0.0)


def test_clamp_signed_violations(humanoid):
    angles = (humanoid.limits_min + humanoid.limits_max) / 2
    angles[0] = humanoid.limits_max[0] + 0.2
    angles[1] = humanoid.limits_min[1] - 0.05
    pose = PoseVector(np.zeros(3), np.array([0, 0, 0, 1.0]), angles)
    v = clamp_report(humanoid, pose)
    assert np.isclose(v[0], 0.2)
    assert np.isclose(v[1], -0.05)
    assert np.all(v[2:] == 0.0)


# ------------------------------------------------------------------ validity

def test_default_skeleton_has_detection_joints(humanoid):
    humanoid.require_detection_labels()
    assert set(DETECTION_JOINTS) <= set(humanoid.named_joints)
    assert humanoid.n_dofs == 30


def test_missing_labels_rejected(chain_skeleton):
    with pytest.raises(ValidationError):
        chain_skeleton.require_detection_labels()


def test_unsorted_parent_rejected():
    with pytest.raises(ValidationError):
        Skeleton(
            [
                BoneSpec("a", None, np.zeros(3), np.zeros((0, 3)), np.zeros((0, 2))),
                BoneSpec("b", 2, np.zeros(3), np.zeros((0, 3)), np.zeros((0, 2))),
                BoneSpec("c", 0, np.zeros(3), np.zeros((0, 3)), np.zeros((0, 2))),
            ],
            {},
        )


def test_non_unit_quaternion_rejected():
    with pytest.raises(ValidationError):
        PoseVector(np.zeros(3), np.array([0, 0, 0, 1.1]), np.zeros(0))


# ------------------------------------------------------------------ file I/O

def test_skeleton_round_trip(tmp_path, humanoid):
    path = tmp_path / "skel.json"
    save_skeleton(humanoid, path)
    loaded = load_skeleton(path)
    assert loaded.n_bones == humanoid.n_bones
    assert loaded.named_joints == humanoid.named_joints
    for a, b in zip(loaded.bones, humanoid.bones):
        assert np.array_equal(a.offset, b.offset)
        assert np.array_equal(a.limits, b.limits)


def test_pose_round_trip(tmp_path, humanoid):
    rng = np.random.default_rng(6)
    poses = [random_pose(humanoid, rng) for _ in range(5)]
    path = tmp_path / "poses.jsonl"
    save_poses(poses, path)
    loaded = load_poses(path)
    for a, b in zip(loaded, poses):
        assert np.array_equal(a.root_translation, b.root_translation)
        assert np.array_equal(a.root_rotation, b.root_rotation)
        assert np.array_equal(a.joint_angles, b.joint_angles)

"""Kinematic body model: bone hierarchy, pose vector, FK and its Jacobian.

Pose parameterization for gradients and solver steps is a flat vector of
length 6 + n_dofs: [root translation (3), root rotation tangent (3, axis-angle
increment applied on the left), joint angles].
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ValidationError
from .rotations import apply_tangent, axis_angle_matrix, quat_to_matrix, skew

# the 18 joints for which 2D detection labels exist
DETECTION_JOINTS = (
    "head", "neck",
    "lshoulder", "rshoulder", "lelbow", "relbow",
    "lwrist", "rwrist", "lhand", "rhand",
    "lhip", "rhip", "lknee", "rknee",
    "lankle", "rankle", "lfoot", "rfoot",
)


@dataclass(frozen=True)
class BoneSpec:
    name: str
    parent: int | None          # parent bone index, None for the root
    offset: np.ndarray          # (3,) rest translation from parent joint, parent frame
    dof_axes: np.ndarray        # (n_dof, 3) unit rotation axes, applied in order
    limits: np.ndarray          # (n_dof, 2) [min, max] radians

    def __post_init__(self):
        offset = np.asarray(self.offset, dtype=float)
        axes = np.asarray(self.dof_axes, dtype=float).reshape(-1, 3)
        limits = np.asarray(self.limits, dtype=float).reshape(-1, 2)
        if offset.shape != (3,):
            raise ValidationError(f"bone '{self.name}': offset must be (3,)")
        if axes.shape[0] != limits.shape[0]:
            raise ValidationError(f"bone '{self.name}': one limit pair per DoF required")
        if axes.shape[0] > 3:
            raise ValidationError(f"bone '{self.name}': at most 3 DoFs per bone")
        if axes.size and np.any(np.abs(np.linalg.norm(axes, axis=1) - 1.0) > 1e-9):
            raise ValidationError(f"bone '{self.name}': DoF axes must be unit-norm")
        if np.any(limits[:, 0] > limits[:, 1]):
            raise ValidationError(f"bone '{self.name}': limit min > max")
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "dof_axes", axes)
        object.__setattr__(self, "limits", limits)

    @property
    def n_dofs(self):
        return self.dof_axes.shape[0]


class Skeleton:
    """Immutable bone hierarchy with a label -> bone mapping for detections."""

    def __init__(self, bones, named_joints):
        self.bones = tuple(bones)
        self.named_joints = dict(named_joints)
        roots = [i for i, b in enumerate(self.bones) if b.parent is None]
        if len(roots) != 1 or roots[0] != 0:
            raise ValidationError("exactly one root bone required, at index 0")
        for i, b in enumerate(self.bones):
            if b.parent is not None and not (0 <= b.parent < i):
                raise ValidationError(f"bone '{b.name}': parent index must precede the bone")
        for label, idx in self.named_joints.items():
            if not (0 <= idx < len(self.bones)):
                raise ValidationError(f"named joint '{label}' refers to invalid bone {idx}")

        self.n_bones = len(self.bones)
        self.n_dofs = sum(b.n_dofs for b in self.bones)
        self.n_params = 6 + self.n_dofs
        # dof bookkeeping
        self.dof_offset = np.zeros(self.n_bones, dtype=int)
        self.dof_bone = np.zeros(self.n_dofs, dtype=int)
        k = 0
        for i, b in enumerate(self.bones):
            self.dof_offset[i] = k
            self.dof_bone[k:k + b.n_dofs] = i
            k += b.n_dofs
        self.limits_min = np.concatenate([b.limits[:, 0] for b in self.bones]) if self.n_dofs else np.zeros(0)
        self.limits_max = np.concatenate([b.limits[:, 1] for b in self.bones]) if self.n_dofs else np.zeros(0)
        # ancestor_or_self[i, j]: bone i lies on the chain from the root to bone j
        anc = np.eye(self.n_bones, dtype=bool)
        for j, b in enumerate(self.bones):
            if b.parent is not None:
                anc[:, j] |= anc[:, b.parent]
        self.ancestor_or_self = anc

    def bone_index(self, name):
        for i, b in enumerate(self.bones):
            if b.name == name:
                return i
        raise KeyError(name)

    def require_detection_labels(self):
        missing = [j for j in DETECTION_JOINTS if j not in self.named_joints]
        if missing:
            raise ValidationError(f"skeleton lacks detection joints: {missing}")

    def rest_pose(self):
        return PoseVector(
            root_translation=np.zeros(3),
            root_rotation=np.array([0.0, 0.0, 0.0, 1.0]),
            joint_angles=np.zeros(self.n_dofs),
        )


@dataclass(frozen=True)
class PoseVector:
    root_translation: np.ndarray   # (3,) meters
    root_rotation: np.ndarray      # (4,) unit quaternion (x,y,z,w)
    joint_angles: np.ndarray       # (n_dofs,) radians

    def __post_init__(self):
        t = np.asarray(self.root_translation, dtype=float)
        q = np.asarray(self.root_rotation, dtype=float)
        a = np.asarray(self.joint_angles, dtype=float)
        if t.shape != (3,) or q.shape != (4,):
            raise ValidationError("root_translation must be (3,), root_rotation (4,)")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValidationError("root_rotation must be unit-norm within 1e-9")
        object.__setattr__(self, "root_translation", t)
        object.__setattr__(self, "root_rotation", q)
        object.__setattr__(self, "joint_angles", a)

    def step(self, delta):
        """Apply a flat parameter increment [dt(3), drot(3), dangles]."""
        delta = np.asarray(delta, dtype=float)
        return PoseVector(
            root_translation=self.root_translation + delta[:3],
            root_rotation=apply_tangent(self.root_rotation, delta[3:6]),
            joint_angles=self.joint_angles + delta[6:],
        )


@dataclass(frozen=True)
class FkState:
    positions: np.ndarray     # (n_bones, 3) joint positions, rig frame
    rotations: np.ndarray     # (n_bones, 3, 3) bone orientations
    dof_axes_world: np.ndarray  # (n_dofs, 3)
    dof_pivots: np.ndarray      # (n_dofs, 3) world pivot of each DoF
    root_translation: np.ndarray


def forward_kinematics(skeleton, pose):
    """Joint positions and orientations of every bone in the rig frame."""
    if pose.joint_angles.shape[0] != skeleton.n_dofs:
        raise DimensionMismatch(
            f"pose has {pose.joint_angles.shape[0]} angles, skeleton {skeleton.n_dofs} DoFs"
        )
    n = skeleton.n_bones
    positions = np.zeros((n, 3))
    rotations = np.zeros((n, 3, 3))
    axes_world = np.zeros((skeleton.n_dofs, 3))
    pivots = np.zeros((skeleton.n_dofs, 3))
    root_R = quat_to_matrix(pose.root_rotation)
    for i, bone in enumerate(skeleton.bones):
        if bone.parent is None:
            parent_R, parent_p = root_R, pose.root_translation
        else:
            parent_R, parent_p = rotations[bone.parent], positions[bone.parent]
        pos = parent_R @ bone.offset + parent_p
        R = parent_R
        k0 = skeleton.dof_offset[i]
        for d in range(bone.n_dofs):
            axes_world[k0 + d] = R @ bone.dof_axes[d]
            pivots[k0 + d] = pos
            R = R @ axis_angle_matrix(bone.dof_axes[d], pose.joint_angles[k0 + d])
        positions[i] = pos
        rotations[i] = R
    return FkState(positions, rotations, axes_world, pivots, pose.root_translation)


def point_jacobian(skeleton, fk, bone_index, world_point):
    """Jacobian (3, n_params) of a world point rigidly attached to a bone.

    bone_index None means the point rides on the root rigid frame only.
    """
    P = skeleton.n_params
    J = np.zeros((3, P))
    J[:, :3] = np.eye(3)
    J[:, 3:6] = -skew(world_point - fk.root_translation)
    if bone_index is not None:
        active = skeleton.ancestor_or_self[skeleton.dof_bone, bone_index]
        idx = np.nonzero(active)[0]
        if idx.size:
            lever = world_point - fk.dof_pivots[idx]
            J[:, 6 + idx] = np.cross(fk.dof_axes_world[idx], lever).T
    return J


def accumulate_point_gradients(skeleton, fk, bone_indices, points, cotangents):
    """Sum of cotangent @ point_jacobian over many bone-attached points.

    bone_indices (B,), points (B, 3), cotangents (B, 3); returns (n_params,).
    Equivalent to looping point_jacobian but batched.
    """
    points = np.asarray(points, dtype=float)
    cotangents = np.asarray(cotangents, dtype=float)
    out = np.zeros(skeleton.n_params)
    out[:3] = cotangents.sum(axis=0)
    out[3:6] = np.cross(points - fk.root_translation, cotangents).sum(axis=0)
    if skeleton.n_dofs:
        active = skeleton.ancestor_or_self[skeleton.dof_bone[None, :], np.asarray(bone_indices)[:, None]]
        lever = points[:, None, :] - fk.dof_pivots[None, :, :]          # (B, D, 3)
        contrib = np.einsum("bdk,dk->bd", np.cross(lever, cotangents[:, None, :]), fk.dof_axes_world)
        out[6:] = np.where(active, contrib, 0.0).sum(axis=0)
    return out


def fk_jacobian(skeleton, pose, fk=None):
    """Stacked Jacobian (n_bones, 3, n_params) of all joint positions."""
    if fk is None:
        fk = forward_kinematics(skeleton, pose)
    out = np.zeros((skeleton.n_bones, 3, skeleton.n_params))
    for i, bone in enumerate(skeleton.bones):
        out[i] = point_jacobian(skeleton, fk, bone.parent, fk.positions[i])
    return out


def clamp_report(skeleton, pose):
    """Signed per-DoF limit violation in radians; 0 inside the limits."""
    theta = pose.joint_angles
    over = np.maximum(theta - skeleton.limits_max, 0.0)
    under = np.minimum(theta - skeleton.limits_min, 0.0)
    return over + under


# ----------------------------------------------------------- default skeleton

def default_skeleton(height=1.7):
    """Humanoid stand-in: 20 bones, 30 joint DoFs, y-up, arms at rest by the sides.

    Proportions scale linearly with subject height.  End-effector bones (head,
    hand and foot tips) carry no DoFs and exist so all 18 detection joints have
    distinct positions.
    """
    h = float(height)
    X = np.array([1.0, 0.0, 0.0])
    Y = np.array([0.0, 1.0, 0.0])
    Z = np.array([0.0, 0.0, 1.0])
    bones = []

    def add(name, parent, offset, axes=(), limits=()):
        bones.append(BoneSpec(name, parent, np.asarray(offset) * h,
                              np.asarray(axes, dtype=float).reshape(-1, 3),
                              np.asarray(limits, dtype=float).reshape(-1, 2)))
        return len(bones) - 1

    pelvis = add("pelvis", None, (0, 0, 0))
    spine = add("spine", pelvis, (0, 0.10, 0), [X, Z, Y],
                [(-0.35, 0.35), (-0.35, 0.35), (-0.45, 0.45)])
    neck = add("neck", spine, (0, 0.20, 0), [X, Z, Y],
               [(-0.6, 0.6), (-0.6, 0.6), (-0.9, 0.9)])
    head = add("head", neck, (0, 0.07, 0))

    for side, s in (("l", 1.0), ("r", -1.0)):
        ua = add(f"{side}_upper_arm", spine, (s * 0.11, 0.18, 0), [X, Z, Y],
                 [(-2.8, 2.8), (-2.8, 2.8), (-1.5, 1.5)])
        fa = add(f"{side}_forearm", ua, (s * 0.02, -0.15, 0), [X],
                 [(-2.7, 0.0)])
        hand = add(f"{side}_hand", fa, (0, -0.14, 0), [X, Z],
                   [(-0.9, 0.9), (-0.9, 0.9)])
        add(f"{side}_hand_tip", hand, (0, -0.08, 0))
    for side, s in (("l", 1.0), ("r", -1.0)):
        thigh = add(f"{side}_thigh", pelvis, (s * 0.06, -0.03, 0), [X, Z, Y],
                    [(-2.2, 0.9), (-0.9, 0.9), (-0.9, 0.9)])
        shin = add(f"{side}_shin", thigh, (0, -0.24, 0), [X],
                   [(0.0, 2.6)])
        foot = add(f"{side}_foot", shin, (0, -0.25, 0), [X, Z],
                   [(-0.7, 0.7), (-0.5, 0.5)])
        add(f"{side}_foot_tip", foot, (0, -0.03, 0.08))

    by_name = {b.name: i for i, b in enumerate(bones)}
    named = {
        "head": by_name["head"],
        "neck": by_name["neck"],
    }
    for side in ("l", "r"):
        named[f"{side}shoulder"] = by_name[f"{side}_upper_arm"]
        named[f"{side}elbow"] = by_name[f"{side}_forearm"]
        named[f"{side}wrist"] = by_name[f"{side}_hand"]
        named[f"{side}hand"] = by_name[f"{side}_hand_tip"]
        named[f"{side}hip"] = by_name[f"{side}_thigh"]
        named[f"{side}knee"] = by_name[f"{side}_shin"]
        named[f"{side}ankle"] = by_name[f"{side}_foot"]
        named[f"{side}foot"] = by_name[f"{side}_foot_tip"]
    return Skeleton(bones, named)


# ------------------------------------------------------------------- file I/O

def skeleton_to_dict(skeleton):
    return {
        "bones": [
            {
                "name": b.name,
                "parent": b.parent,
                "offset": list(b.offset),
                "dof_axes": [list(a) for a in b.dof_axes],
                "limits": [list(l) for l in b.limits],
            }
            for b in skeleton.bones
        ],
        "named_joints": dict(skeleton.named_joints),
    }


def skeleton_from_dict(data):
    bones = [
        BoneSpec(
            name=b["name"],
            parent=b["parent"],
            offset=np.array(b["offset"], dtype=float),
            dof_axes=np.array(b["dof_axes"], dtype=float).reshape(-1, 3),
            limits=np.array(b["limits"], dtype=float).reshape(-1, 2),
        )
        for b in data["bones"]
    ]
    return Skeleton(bones, data["named_joints"])


def load_skeleton(path):
    with open(path) as fh:
        return skeleton_from_dict(json.load(fh))


def save_skeleton(skeleton, path):
    with open(path, "w") as fh:
        json.dump(skeleton_to_dict(skeleton), fh, indent=2)


def save_poses(poses, path, first_frame=0):
    """Write a pose sequence as JSONL, one frame per line."""
    with open(path, "w") as fh:
        for t, pose in enumerate(poses):
            rec = {
                "frame": first_frame + t,
                "root_t": list(pose.root_translation),
                "root_q_xyzw": list(pose.root_rotation),
                "angles": list(pose.joint_angles),
            }
            fh.write(json.dumps(rec) + "\n")


def load_poses(path):
    poses = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            poses.append(
                PoseVector(
                    root_translation=np.array(rec["root_t"], dtype=float),
                    root_rotation=np.array(rec["root_q_xyzw"], dtype=float),
                    joint_angles=np.array(rec["angles"], dtype=float),
                )
            )
    return poses

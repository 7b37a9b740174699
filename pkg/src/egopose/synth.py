"""Synthetic-scene generator and diagnostic overlay rendering.

Generates ground-truth pose sequences from analytic motion generators,
renders the stereo fisheye views of the blob body at full resolution, and
derives noisy 2D joint detections from the projected ground truth.  Everything
is deterministic given the rng seed; per-frame rng streams are derived from
(seed, frame index) so frame-parallel rendering cannot change results.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from PIL import Image

from .body_model import default_body, load_body, pose_blobs, render_view, save_body
from .camera import default_rig, load_rig, save_rig
from .energy import Detection2D, FrameObservation, save_detections, load_detections
from .errors import ValidationError
from .skeleton import (
    PoseVector,
    default_skeleton,
    forward_kinematics,
    load_poses,
    load_skeleton,
    save_poses,
    save_skeleton,
)

# root pose placing the y-up body below the downward-looking rig
RIG_FACING_QUAT = np.array([-np.sqrt(0.5), 0.0, 0.0, np.sqrt(0.5)])
ROOT_DEPTH_FACTOR = 0.55  # root this fraction of body height below the rig midpoint


@dataclass
class SynthSpec:
    frames: int = 20
    motion: str = "rest"              # rest | walk | random-walk
    amplitude: float = 0.5            # radians, motion-dependent meaning
    period: float = 40.0              # frames per gait cycle
    detection_noise_sigma: float = 0.0  # pixels
    detection_dropout: float = 0.0
    image_size: tuple = (256, 256)
    rng_seed: int = 0
    height: float = 1.7
    skeleton_path: str | None = None
    body_path: str | None = None
    rig_path: str | None = None

    def __post_init__(self):
        if self.frames < 1:
            raise ValidationError("frames must be >= 1")
        if self.detection_noise_sigma < 0:
            raise ValidationError("detection noise must be >= 0")
        if not (0.0 <= self.detection_dropout < 1.0):
            raise ValidationError("dropout must lie in [0, 1)")
        if self.motion not in ("rest", "walk", "random-walk"):
            raise ValidationError(f"unknown motion '{self.motion}'")
        self.image_size = tuple(int(v) for v in self.image_size)


@dataclass
class SynthBundle:
    spec: SynthSpec
    skeleton: object
    body: object
    rig: dict
    gt_poses: list
    images: list          # per frame: camera label -> (H, W, 3) float image
    detections: dict      # frame index -> list of Detection2D

    def observations(self):
        return [
            FrameObservation(frame_index=t, images=self.images[t],
                             detections=self.detections.get(t, []))
            for t in range(len(self.gt_poses))
        ]


def initial_root_pose(skeleton, height):
    """Bootstrap pose: rest angles, root below the rig midpoint, facing forward."""
    return PoseVector(
        root_translation=np.array([0.0, 0.0, ROOT_DEPTH_FACTOR * height]),
        root_rotation=RIG_FACING_QUAT.copy(),
        joint_angles=np.zeros(skeleton.n_dofs),
    )


# ----------------------------------------------------------- motion generators

def _dof_index(skeleton, bone_name, dof):
    return skeleton.dof_offset[skeleton.bone_index(bone_name)] + dof


def _walk_angles(skeleton, t, amplitude, period):
    """Analytic sinusoidal gait; requires the default bone names."""
    angles = np.zeros(skeleton.n_dofs)
    w = 2.0 * np.pi * t / period
    a = amplitude
    # legs: X DoF is index 0; negative swings the leg forward
    angles[_dof_index(skeleton, "l_thigh", 0)] = -a * np.sin(w)
    angles[_dof_index(skeleton, "r_thigh", 0)] = a * np.sin(w)
    angles[_dof_index(skeleton, "l_shin", 0)] = 0.6 * a * (1.0 - np.cos(w)) / 2.0
    angles[_dof_index(skeleton, "r_shin", 0)] = 0.6 * a * (1.0 + np.cos(w)) / 2.0
    # arms counter-swing; elbows flex (negative X) slightly
    angles[_dof_index(skeleton, "l_upper_arm", 0)] = 0.7 * a * np.sin(w)
    angles[_dof_index(skeleton, "r_upper_arm", 0)] = -0.7 * a * np.sin(w)
    angles[_dof_index(skeleton, "l_forearm", 0)] = -0.3 * a * (1.0 + np.sin(w)) / 2.0
    angles[_dof_index(skeleton, "r_forearm", 0)] = -0.3 * a * (1.0 - np.sin(w)) / 2.0
    # slight torso twist
    angles[_dof_index(skeleton, "spine", 2)] = 0.15 * a * np.sin(w)
    return angles


def generate_motion(spec, skeleton):
    """Ground-truth pose sequence for the configured motion generator."""
    base = initial_root_pose(skeleton, spec.height)
    poses = []
    if spec.motion == "rest":
        poses = [base] * spec.frames
    elif spec.motion == "walk":
        for t in range(spec.frames):
            angles = _walk_angles(skeleton, t, spec.amplitude, spec.period)
            bob = 0.01 * np.sin(4.0 * np.pi * t / spec.period)
            poses.append(
                PoseVector(
                    root_translation=base.root_translation + np.array([0.0, 0.0, bob]),
                    root_rotation=base.root_rotation,
                    joint_angles=angles,
                )
            )
    else:  # random-walk
        angles = np.zeros(skeleton.n_dofs)
        step = spec.amplitude / 10.0
        for t in range(spec.frames):
            rng = np.random.default_rng([spec.rng_seed, 977, t])
            angles = angles + rng.normal(0.0, step, skeleton.n_dofs)
            angles = np.clip(angles, skeleton.limits_min, skeleton.limits_max)
            poses.append(
                PoseVector(
                    root_translation=base.root_translation,
                    root_rotation=base.root_rotation,
                    joint_angles=angles.copy(),
                )
            )
    return poses


# ------------------------------------------------------------------ synthesis

def _load_assets(spec):
    skeleton = load_skeleton(spec.skeleton_path) if spec.skeleton_path else default_skeleton(spec.height)
    skeleton.require_detection_labels()
    body = load_body(spec.body_path) if spec.body_path else default_body(skeleton, spec.height)
    rig = load_rig(spec.rig_path) if spec.rig_path else default_rig(image_size=spec.image_size)
    return skeleton, body, rig


def _synth_detections(spec, skeleton, rig, pose, frame):
    rng = np.random.default_rng([spec.rng_seed, frame])
    fk = forward_kinematics(skeleton, pose)
    dets = []
    for cam_label in sorted(rig):
        cam = rig[cam_label]
        w, h = cam.intrinsics.image_size
        labels = sorted(skeleton.named_joints)
        pts = fk.positions[[skeleton.named_joints[l] for l in labels]]
        pixels, in_fov = cam.project_many(pts)
        for i, joint in enumerate(labels):
            # consume the rng in a fixed order so dropout and noise are reproducible
            noise = rng.normal(0.0, spec.detection_noise_sigma, 2) \
                if spec.detection_noise_sigma > 0 else np.zeros(2)
            drop = rng.random() < spec.detection_dropout if spec.detection_dropout > 0 else False
            if not in_fov[i] or drop:
                continue
            pix = np.clip(pixels[i] + noise, [0.0, 0.0], [w - 1.0, h - 1.0])
            dets.append(Detection2D(camera=cam_label, joint=joint, pixel=pix, confidence=1.0))
    return dets


def synth_sequence(spec, threads=1):
    """Generate a full synthetic bundle: gt poses, stereo renders, detections."""
    skeleton, body, rig = _load_assets(spec)
    poses = generate_motion(spec, skeleton)

    def render_frame(pose):
        fk = forward_kinematics(skeleton, pose)
        posed = pose_blobs(body, skeleton, pose, fk)
        return {label: render_view(posed, rig[label]) for label in sorted(rig)}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            images = list(pool.map(render_frame, poses))
    else:
        images = [render_frame(p) for p in poses]

    detections = {
        t: _synth_detections(spec, skeleton, rig, pose, t)
        for t, pose in enumerate(poses)
    }
    return SynthBundle(
        spec=spec, skeleton=skeleton, body=body, rig=rig,
        gt_poses=poses, images=images, detections=detections,
    )


# ----------------------------------------------------------------- image I/O

def save_image(image, path):
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def load_image(path):
    return np.asarray(Image.open(path).convert("RGB"), dtype=float) / 255.0


# ------------------------------------------------------------------- bundles

def write_bundle(bundle, outdir):
    """Write a bundle to disk; returns the manifest path."""
    os.makedirs(outdir, exist_ok=True)
    os.makedirs(os.path.join(outdir, "images"), exist_ok=True)
    save_skeleton(bundle.skeleton, os.path.join(outdir, "skeleton.json"))
    save_body(bundle.body, os.path.join(outdir, "body.json"))
    save_rig(bundle.rig, os.path.join(outdir, "calibration.json"))
    save_poses(bundle.gt_poses, os.path.join(outdir, "gt_poses.jsonl"))
    save_detections(bundle.detections, os.path.join(outdir, "detections.jsonl"))
    image_index = {label: [] for label in sorted(bundle.rig)}
    for t, frame_images in enumerate(bundle.images):
        for label in sorted(frame_images):
            rel = f"images/{t:06d}_{label}.png"
            save_image(frame_images[label], os.path.join(outdir, rel))
            image_index[label].append(rel)
    manifest = {
        "frames": len(bundle.gt_poses),
        "spec": asdict(bundle.spec),
        "skeleton": "skeleton.json",
        "body": "body.json",
        "calibration": "calibration.json",
        "gt_poses": "gt_poses.jsonl",
        "detections": "detections.jsonl",
        "images": image_index,
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


@dataclass
class LoadedBundle:
    manifest: dict
    skeleton: object
    body: object
    rig: dict
    gt_poses: list
    images: list
    detections: dict

    def observations(self):
        return [
            FrameObservation(frame_index=t, images=self.images[t],
                             detections=self.detections.get(t, []))
            for t in range(self.manifest["frames"])
        ]


def load_bundle(manifest_path):
    root = os.path.dirname(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    skeleton = load_skeleton(os.path.join(root, manifest["skeleton"]))
    body = load_body(os.path.join(root, manifest["body"]))
    rig = load_rig(os.path.join(root, manifest["calibration"]))
    gt_poses = load_poses(os.path.join(root, manifest["gt_poses"]))
    detections = load_detections(os.path.join(root, manifest["detections"]))
    images = []
    for t in range(manifest["frames"]):
        images.append(
            {label: load_image(os.path.join(root, manifest["images"][label][t]))
             for label in sorted(manifest["images"])}
        )
    return LoadedBundle(manifest, skeleton, body, rig, gt_poses, images, detections)


# ------------------------------------------------------------------- overlay

_JOINT_COLOR = np.array([1.0, 0.1, 0.1])
_BONE_COLOR = np.array([0.1, 0.9, 0.1])
_SEGMENT_SAMPLES = 16   # 3D samples per bone, polyline-approximating the distorted curve


def _draw_disc(image, center, radius, color):
    h, w = image.shape[:2]
    cx, cy = center
    x0, x1 = int(np.floor(cx - radius)), int(np.ceil(cx + radius))
    y0, y1 = int(np.floor(cy - radius)), int(np.ceil(cy + radius))
    for y in range(max(0, y0), min(h, y1 + 1)):
        for x in range(max(0, x0), min(w, x1 + 1)):
            if (x - cx) ** 2 + (y - cy) ** 2 <= radius**2:
                image[y, x] = color


def _draw_segment_2d(image, p0, p1, color):
    n = int(np.ceil(np.linalg.norm(p1 - p0))) + 1
    h, w = image.shape[:2]
    for s in np.linspace(0.0, 1.0, n + 1):
        p = p0 + s * (p1 - p0)
        x, y = int(round(p[0])), int(round(p[1]))
        if 0 <= x < w and 0 <= y < h:
            image[y, x] = color


def render_overlay(image, pose, skeleton, rig, camera_label):
    """Draw the projected skeleton onto a copy of the image.

    Bones are sampled at 16 points in 3D and connected in the distorted image;
    out-of-FOV joints and samples are skipped, never clamped to the border.
    """
    cam = rig[camera_label]
    out = np.asarray(image, dtype=float).copy()
    fk = forward_kinematics(skeleton, pose)
    for i, bone in enumerate(skeleton.bones):
        if bone.parent is None:
            continue
        a, b = fk.positions[bone.parent], fk.positions[i]
        samples = np.linspace(0.0, 1.0, _SEGMENT_SAMPLES)[:, None] * (b - a) + a
        pixels, in_fov = cam.project_many(samples)
        for k in range(len(samples) - 1):
            if in_fov[k] and in_fov[k + 1]:
                _draw_segment_2d(out, pixels[k], pixels[k + 1], _BONE_COLOR)
    labels = sorted(skeleton.named_joints)
    pts = fk.positions[[skeleton.named_joints[l] for l in labels]]
    pixels, in_fov = cam.project_many(pts)
    for k in range(len(labels)):
        if in_fov[k]:
            _draw_disc(out, pixels[k], 2.0, _JOINT_COLOR)
    return out

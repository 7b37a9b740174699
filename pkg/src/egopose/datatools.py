"""Dataset tooling (annotation reprojection, green-screen augmentation,
recoloring) and evaluation metrics (PCK, 3D joint error)."""

from dataclasses import dataclass

import numpy as np

from .errors import BackgroundTooSmall, LabelMismatch, LengthMismatch, ValidationError
from .skeleton import forward_kinematics


@dataclass(frozen=True)
class Annotation:
    pixel: np.ndarray   # (2,)
    visible: bool


@dataclass
class AnnotatedFrame:
    image: np.ndarray | None        # (H, W, 3) floats in [0,1], None for metrics-only use
    annotations: dict               # joint label -> Annotation
    camera: str
    frame_index: int


@dataclass(frozen=True)
class AugmentSpec:
    key_color: np.ndarray           # (3,) RGB of the screen
    chroma_tolerance: float
    background_source: str          # directory of background images
    hue_shift_deg: float            # max absolute per-region hue shift
    gain_range: tuple               # (lo, hi) value-channel gain
    rng_seed: int

    def __post_init__(self):
        object.__setattr__(self, "key_color", np.asarray(self.key_color, dtype=float))
        if self.chroma_tolerance <= 0:
            raise ValidationError("chroma_tolerance must be positive")
        lo, hi = self.gain_range
        if lo <= 0 or hi <= 0 or lo > hi:
            raise ValidationError("gain_range must be positive with lo <= hi")


# ------------------------------------------------------------ reprojection

def project_annotations(gt_joints, rig):
    """Project named 3D joints (label -> rig-frame position) into every camera.

    Returns camera label -> (joint label -> Annotation); joints outside a
    camera's FOV are marked invisible.
    """
    labels = sorted(gt_joints)
    pts = np.stack([np.asarray(gt_joints[l], dtype=float) for l in labels])
    out = {}
    for cam_label in sorted(rig):
        cam = rig[cam_label]
        pixels, in_fov = cam.project_many(pts)
        anns = {}
        for i, joint in enumerate(labels):
            if in_fov[i]:
                anns[joint] = Annotation(pixel=pixels[i], visible=True)
            else:
                anns[joint] = Annotation(pixel=np.full(2, np.nan), visible=False)
        out[cam_label] = anns
    return out


# ------------------------------------------------------------- augmentation

def chroma_key(image, key_color, tolerance):
    """Foreground mask: True where the pixel is NOT within chroma tolerance of
    the key color.  Distance is measured in the luminance-removed plane
    (r - g, b - g)."""
    image = np.asarray(image, dtype=float)
    key = np.asarray(key_color, dtype=float)
    chroma = np.stack([image[..., 0] - image[..., 1], image[..., 2] - image[..., 1]], axis=-1)
    key_chroma = np.array([key[0] - key[1], key[2] - key[1]])
    dist = np.linalg.norm(chroma - key_chroma, axis=-1)
    return dist >= tolerance


def composite(foreground, mask, background, rng):
    """Replace masked-out pixels with a random crop of the background.

    Pixel-exact: every output pixel equals the corresponding foreground or
    background-crop pixel.
    """
    fg = np.asarray(foreground)
    bg = np.asarray(background)
    fh, fw = fg.shape[:2]
    bh, bw = bg.shape[:2]
    if bh < fh or bw < fw:
        raise BackgroundTooSmall(f"background {bh}x{bw} smaller than foreground {fh}x{fw}")
    oy = int(rng.integers(0, bh - fh + 1))
    ox = int(rng.integers(0, bw - fw + 1))
    crop = bg[oy:oy + fh, ox:ox + fw]
    return np.where(mask[..., None], fg, crop)


def _rgb_to_hsv(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    h = np.zeros_like(v)
    h = np.where((maxc == r) & (delta > 0), ((g - b) / safe) % 6.0, h)
    h = np.where((maxc == g) & (delta > 0), (b - r) / safe + 2.0, h)
    h = np.where((maxc == b) & (delta > 0), (r - g) / safe + 4.0, h)
    return np.stack([h / 6.0, s, v], axis=-1)


def _hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    choices = [
        np.stack([v, t, p], axis=-1),
        np.stack([q, v, p], axis=-1),
        np.stack([p, v, t], axis=-1),
        np.stack([p, q, v], axis=-1),
        np.stack([t, p, v], axis=-1),
        np.stack([v, p, q], axis=-1),
    ]
    return np.select([i[..., None] == k for k in range(6)], choices)


def recolor(image, region_mask, hue_shift_deg, gain):
    """Rotate hue and scale the value channel inside a region, clamped to [0,1]."""
    if not (-180.0 <= hue_shift_deg <= 180.0):
        raise ValidationError("hue_shift must lie in [-180, 180] degrees")
    if gain <= 0:
        raise ValidationError("gain must be positive")
    image = np.asarray(image, dtype=float)
    hsv = _rgb_to_hsv(image)
    hsv[..., 0] = (hsv[..., 0] + hue_shift_deg / 360.0) % 1.0
    hsv[..., 2] = np.clip(hsv[..., 2] * gain, 0.0, 1.0)
    shifted = np.clip(_hsv_to_rgb(hsv), 0.0, 1.0)
    return np.where(region_mask[..., None], shifted, image)


# ------------------------------------------------------------------ metrics

def pck(predicted, gt_frame, threshold_px):
    """Percentage of correct keypoints against an annotated frame.

    predicted: joint label -> 2D pixel.  Invisible ground-truth joints are
    excluded.  Returns (per-joint hit flags for visible joints, mean in [0,100]).
    """
    gt_visible = {l: a for l, a in gt_frame.annotations.items() if a.visible}
    if set(predicted) != set(gt_frame.annotations):
        raise LabelMismatch("prediction and ground-truth label sets differ")
    hits = {}
    for label, ann in sorted(gt_visible.items()):
        d = float(np.linalg.norm(np.asarray(predicted[label], dtype=float) - ann.pixel))
        hits[label] = d <= threshold_px
    if not hits:
        return hits, float("nan")
    mean = 100.0 * sum(hits.values()) / len(hits)
    return hits, mean


def joint_error_3d(pred_poses, gt_poses, skeleton):
    """Mean and population std of per-joint Euclidean distance over all frames,
    over the skeleton's named joints."""
    if len(pred_poses) != len(gt_poses):
        raise LengthMismatch(f"{len(pred_poses)} predicted vs {len(gt_poses)} ground-truth frames")
    joint_bones = np.array([skeleton.named_joints[l] for l in sorted(skeleton.named_joints)])
    dists = []
    for pred, gt in zip(pred_poses, gt_poses):
        pp = forward_kinematics(skeleton, pred).positions[joint_bones]
        gp = forward_kinematics(skeleton, gt).positions[joint_bones]
        dists.append(np.linalg.norm(pp - gp, axis=1))
    dists = np.concatenate(dists)
    return float(dists.mean()), float(dists.std())


def per_frame_error_3d(pred_poses, gt_poses, skeleton):
    """Mean joint error per frame; handy for divergence checks."""
    if len(pred_poses) != len(gt_poses):
        raise LengthMismatch(f"{len(pred_poses)} predicted vs {len(gt_poses)} ground-truth frames")
    joint_bones = np.array([skeleton.named_joints[l] for l in sorted(skeleton.named_joints)])
    out = []
    for pred, gt in zip(pred_poses, gt_poses):
        pp = forward_kinematics(skeleton, pred).positions[joint_bones]
        gp = forward_kinematics(skeleton, gt).positions[joint_bones]
        out.append(float(np.linalg.norm(pp - gp, axis=1).mean()))
    return np.array(out)

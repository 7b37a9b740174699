"""The four alignment energy terms and their analytic pose gradients.

Each term returns (value, gradient) with the gradient laid out over the flat
pose parameterization [root translation, root rotation tangent, joint angles].
The total is the weighted sum w_color * E_color + w_detection * E_detection +
E_pose + E_smooth (the last two carry their weights internally).
"""

import json
from dataclasses import dataclass

import numpy as np

from .body_model import march_rays, march_rays_color_vjp, pose_blobs
from .camera import OutsideFov
from .errors import MissingImage, UnknownJointLabel, ValidationError
from .rotations import quat_conjugate, quat_multiply, quat_to_axis_angle, so3_left_jacobian_inverse
from .skeleton import accumulate_point_gradients, forward_kinematics, point_jacobian


@dataclass(frozen=True)
class Detection2D:
    camera: str               # "left" or "right"
    joint: str                # one of the 18 detection labels
    pixel: np.ndarray         # (2,)
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=float))
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError("detection confidence must lie in [0,1]")


@dataclass
class FrameObservation:
    frame_index: int
    images: dict              # camera label -> (H, W, 3) float array in [0,1]
    detections: list          # list of Detection2D

    def validate(self, rig):
        for label, cam in rig.items():
            img = self.images.get(label)
            if img is None:
                raise MissingImage(f"frame {self.frame_index}: no image for camera '{label}'")
            w, h = cam.intrinsics.image_size
            if img.shape[:2] != (h, w):
                raise ValidationError(
                    f"frame {self.frame_index}: image {img.shape[:2]} does not match calibration {(h, w)}"
                )


@dataclass(frozen=True)
class EnergyWeights:
    w_color: float = 1e-3
    w_detection: float = 1e-2
    w_limit: float = 10.0
    w_rest: float = 1e-2
    w_smooth: float = 1.0
    huber_delta: float = 15.0   # pixels
    ray_stride: int = 4

    def __post_init__(self):
        vals = (self.w_color, self.w_detection, self.w_limit, self.w_rest, self.w_smooth)
        if any(v < 0 for v in vals):
            raise ValidationError("energy weights must be non-negative")
        if self.ray_stride < 1:
            raise ValidationError("ray_stride must be >= 1")


@dataclass(frozen=True)
class EnergyBreakdown:
    e_color: float
    e_detection: float
    e_pose: float
    e_smooth: float
    total: float
    gradient: np.ndarray


@dataclass
class EnergyContext:
    """Everything one frame's objective needs, bundled for the solver."""
    observation: FrameObservation
    rig: dict
    skeleton: object
    body_model: object
    weights: EnergyWeights
    rest_pose: object
    prev_pose: object = None
    prev_prev_pose: object = None


def _joint_point_jacobian(skeleton, fk, bone):
    # the joint position of a bone rides on its parent's frame
    return point_jacobian(skeleton, fk, skeleton.bones[bone].parent, fk.positions[bone])


# -------------------------------------------------------------------- e_color

def e_color(pose, observation, rig, skeleton, body_model, weights, fk=None, want_grad=True):
    """Sum of squared color residuals over a ray-stride-subsampled pixel grid."""
    if fk is None:
        fk = forward_kinematics(skeleton, pose)
    posed = pose_blobs(body_model, skeleton, pose, fk)
    stride = weights.ray_stride
    value = 0.0
    grad_mu = np.zeros((len(posed.centers), 3))
    for label in sorted(rig):
        cam = rig[label]
        image = observation.images.get(label)
        if image is None:
            raise MissingImage(f"no image for camera '{label}'")
        pixels, origins, dirs = cam.ray_grid(stride)
        samples = image[pixels[:, 1].astype(int), pixels[:, 0].astype(int)]
        if want_grad:
            v, g = march_rays_color_vjp(posed, origins, dirs, samples)
            value += v
            grad_mu += g
        else:
            res = march_rays(posed, origins, dirs)
            resid = res["color"] - samples
            value += float(np.sum(resid * resid))
    if not want_grad:
        return value, np.zeros(skeleton.n_params)
    grad = accumulate_point_gradients(skeleton, fk, posed.bone_index, posed.centers, grad_mu)
    return value, grad


# ---------------------------------------------------------------- e_detection

def _huber(r, delta):
    if r <= delta:
        return 0.5 * r * r
    return delta * (r - 0.5 * delta)


def e_detection(pose, detections, rig, skeleton, weights, fk=None):
    """Confidence-weighted Huber penalty between projected joints and detections.

    Joints projecting outside the FOV contribute a constant penalty equal to
    the Huber loss at the image diagonal, with zero gradient, so the solver
    cannot profit from pushing limbs out of view.
    """
    if fk is None:
        fk = forward_kinematics(skeleton, pose)
    delta = weights.huber_delta
    value = 0.0
    grad = np.zeros(skeleton.n_params)
    for det in detections:
        if det.joint not in skeleton.named_joints:
            raise UnknownJointLabel(det.joint)
        cam = rig[det.camera]
        bone = skeleton.named_joints[det.joint]
        x = fk.positions[bone]
        w, h = cam.intrinsics.image_size
        diagonal = float(np.hypot(w, h))
        try:
            pix = cam.project(x)
            J_proj = cam.project_jacobian(x)
        except OutsideFov:
            value += det.confidence * _huber(diagonal, delta)
            continue
        e = pix - det.pixel
        r = float(np.linalg.norm(e))
        value += det.confidence * _huber(r, delta)
        scale = 1.0 if r <= delta else delta / r
        J_point = _joint_point_jacobian(skeleton, fk, bone)
        grad += det.confidence * scale * (e @ J_proj @ J_point)
    return value, grad


# --------------------------------------------------------------------- e_pose

def e_pose(pose, skeleton, rest_pose, weights):
    """Quadratic penalties on joint-limit violations and rest-pose deviation."""
    from .skeleton import clamp_report

    violations = clamp_report(skeleton, pose)
    dev = pose.joint_angles - rest_pose.joint_angles
    value = weights.w_limit * float(np.sum(violations**2)) + weights.w_rest * float(np.sum(dev**2))
    grad = np.zeros(skeleton.n_params)
    grad[6:] = 2.0 * weights.w_limit * violations + 2.0 * weights.w_rest * dev
    return value, grad


# ------------------------------------------------------------------- e_smooth

def _pose_difference(pose, prev):
    """Per-parameter difference with the rotation differenced in tangent space."""
    dt = pose.root_translation - prev.root_translation
    r = quat_to_axis_angle(quat_multiply(pose.root_rotation, quat_conjugate(prev.root_rotation)))
    da = pose.joint_angles - prev.joint_angles
    return dt, r, da


def e_smooth(pose, prev_pose, prev_prev_pose, weights):
    """Temporal regularizer: squared acceleration when two predecessors exist,
    squared velocity with one, zero with none."""
    w = weights.w_smooth
    n_params = 6 + pose.joint_angles.shape[0]
    if prev_pose is None:
        return 0.0, np.zeros(n_params)
    dt1, r1, da1 = _pose_difference(pose, prev_pose)
    Jl_inv = so3_left_jacobian_inverse(r1)
    if prev_prev_pose is None:
        value = w * (dt1 @ dt1 + r1 @ r1 + da1 @ da1)
        grad = np.concatenate([2 * w * dt1, 2 * w * (Jl_inv.T @ r1), 2 * w * da1])
        return float(value), grad
    dt2, r2, da2 = _pose_difference(prev_pose, prev_prev_pose)
    at, ar, aa = dt1 - dt2, r1 - r2, da1 - da2
    value = w * (at @ at + ar @ ar + aa @ aa)
    grad = np.concatenate([2 * w * at, 2 * w * (Jl_inv.T @ ar), 2 * w * aa])
    return float(value), grad


# --------------------------------------------------------------- total energy

def total_energy(pose, ctx, want_grad=True):
    """Weighted sum of all four terms; terms with zero weight are skipped.

    With want_grad=False the color gradient (the expensive part) is skipped
    and the returned gradient is meaningful only for the cheap terms; the
    solver uses this for line-search trial evaluations, which need values
    only.
    """
    wts = ctx.weights
    fk = forward_kinematics(ctx.skeleton, pose)
    n_params = ctx.skeleton.n_params
    zero = (0.0, np.zeros(n_params))

    ec, g_ec = e_color(pose, ctx.observation, ctx.rig, ctx.skeleton, ctx.body_model, wts, fk,
                       want_grad=want_grad) \
        if wts.w_color > 0 else zero
    ed, g_ed = e_detection(pose, ctx.observation.detections, ctx.rig, ctx.skeleton, wts, fk) \
        if wts.w_detection > 0 else zero
    ep, g_ep = e_pose(pose, ctx.skeleton, ctx.rest_pose, wts) \
        if (wts.w_limit > 0 or wts.w_rest > 0) else zero
    es, g_es = e_smooth(pose, ctx.prev_pose, ctx.prev_prev_pose, wts) \
        if wts.w_smooth > 0 else zero

    total = wts.w_color * ec + wts.w_detection * ed + ep + es
    gradient = wts.w_color * g_ec + wts.w_detection * g_ed + g_ep + g_es
    return EnergyBreakdown(
        e_color=ec, e_detection=ed, e_pose=ep, e_smooth=es,
        total=float(total), gradient=gradient,
    )


# ------------------------------------------------------------------- file I/O

def save_detections(detections_by_frame, path):
    """detections_by_frame: mapping frame index -> list of Detection2D."""
    with open(path, "w") as fh:
        for frame in sorted(detections_by_frame):
            for det in detections_by_frame[frame]:
                rec = {
                    "frame": frame,
                    "camera": det.camera,
                    "joint": det.joint,
                    "x": float(det.pixel[0]),
                    "y": float(det.pixel[1]),
                    "conf": det.confidence,
                }
                fh.write(json.dumps(rec) + "\n")


def load_detections(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            det = Detection2D(
                camera=rec["camera"],
                joint=rec["joint"],
                pixel=np.array([rec["x"], rec["y"]]),
                confidence=float(rec["conf"]),
            )
            out.setdefault(int(rec["frame"]), []).append(det)
    return out

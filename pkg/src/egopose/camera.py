"""Equidistant fisheye camera model with polynomial distortion and rig extrinsics.

Projection: a rig-frame point is rotated into the camera frame, its incidence
angle theta against the optical axis is distorted by an odd polynomial
theta_d = theta * (1 + k1 t^2 + k2 t^4 + k3 t^6 + k4 t^8), and the pixel lands
at principal_point + focal * theta_d along the image-plane direction.  Pixels
are continuous coordinates with origin at the top-left pixel center.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePoint, NoConvergence, OutsideFov, ValidationError
from .rotations import quat_to_matrix

_SQRT_EPS = 1e-12


@dataclass(frozen=True)
class FisheyeIntrinsics:
    focal: float                      # pixels per radian
    principal_point: np.ndarray       # (2,) pixels
    distortion: np.ndarray            # (4,) k1..k4
    image_size: tuple                 # (width, height) pixels
    fov_limit: float                  # max incidence angle, radians

    def __post_init__(self):
        object.__setattr__(self, "principal_point", np.asarray(self.principal_point, dtype=float))
        object.__setattr__(self, "distortion", np.asarray(self.distortion, dtype=float))
        if self.focal <= 0:
            raise ValidationError("focal must be positive")
        if not (0 < self.fov_limit <= np.pi):
            raise ValidationError("fov_limit must be in (0, pi]")
        if self.principal_point.shape != (2,) or self.distortion.shape != (4,):
            raise ValidationError("principal_point must be (2,), distortion (4,)")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValidationError("image_size must be positive")
        # admissibility: pixel radius must grow strictly with theta on the FOV
        grid = np.linspace(0.0, self.fov_limit, 1024)
        r = self.distort_theta(grid)
        if np.any(np.diff(r) <= 0):
            raise ValidationError("distortion coefficients are not radially monotone on the FOV")

    def distort_theta(self, theta):
        t2 = np.square(theta)
        k1, k2, k3, k4 = self.distortion
        return theta * (1 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))))

    def distort_theta_deriv(self, theta):
        t2 = np.square(theta)
        k1, k2, k3, k4 = self.distortion
        return 1 + t2 * (3 * k1 + t2 * (5 * k2 + t2 * (7 * k3 + t2 * 9 * k4)))

    @property
    def max_radius(self):
        """Pixel radius of the FOV boundary."""
        return self.focal * float(self.distort_theta(self.fov_limit))


@dataclass(frozen=True)
class RigExtrinsics:
    rotation: np.ndarray     # unit quaternion (x,y,z,w), rig frame -> camera frame
    translation: np.ndarray  # meters; X_cam = R X_rig + t

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if q.shape != (4,) or t.shape != (3,):
            raise ValidationError("rotation must be (4,), translation (3,)")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValidationError("rotation quaternion must be unit-norm within 1e-9")
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class FisheyeCamera:
    intrinsics: FisheyeIntrinsics
    extrinsics: RigExtrinsics
    label: str
    _R: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.label not in ("left", "right"):
            raise ValidationError("camera label must be 'left' or 'right'")
        object.__setattr__(self, "_R", quat_to_matrix(self.extrinsics.rotation))
        object.__setattr__(self, "_grid_cache", {})

    @property
    def rotation_matrix(self):
        return self._R

    @property
    def center(self):
        """Camera center expressed in the rig frame."""
        return -self._R.T @ self.extrinsics.translation

    # ------------------------------------------------------------------ project

    def project(self, point):
        """Project one rig-frame 3D point to a pixel.

        Raises OutsideFov when the incidence angle exceeds fov_limit and
        DegeneratePoint when the point coincides with the camera center.
        """
        pixel, valid = self.project_many(np.asarray(point, dtype=float)[None, :])
        if not valid[0]:
            raise OutsideFov(f"point outside FOV of camera '{self.label}'")
        return pixel[0]

    def project_many(self, points):
        """Vectorized projection of (N, 3) rig-frame points.

        Returns (pixels (N, 2), in_fov (N,) bool); out-of-FOV rows hold NaN.
        """
        points = np.asarray(points, dtype=float)
        pc = points @ self._R.T + self.extrinsics.translation
        x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
        rho = np.hypot(x, y)
        norm = np.sqrt(rho * rho + z * z)
        if np.any(norm < _SQRT_EPS):
            raise DegeneratePoint("point coincides with camera center")
        theta = np.arctan2(rho, z)
        in_fov = theta <= self.intrinsics.fov_limit
        r = self.intrinsics.focal * self.intrinsics.distort_theta(theta)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(rho > _SQRT_EPS, r / np.where(rho > _SQRT_EPS, rho, 1.0), 0.0)
        pix = self.intrinsics.principal_point + np.stack([x * scale, y * scale], axis=1)
        pix = np.where(in_fov[:, None], pix, np.nan)
        return pix, in_fov

    # ---------------------------------------------------------------- unproject

    def unproject(self, pixel):
        """Pixel -> unit ray (origin, direction) in the rig frame."""
        origins, dirs, valid = self.unproject_many(np.asarray(pixel, dtype=float)[None, :])
        if not valid[0]:
            raise OutsideFov("pixel beyond the FOV image circle")
        return origins[0], dirs[0]

    def unproject_many(self, pixels):
        """Vectorized unprojection of (N, 2) pixels.

        Returns (origins (N, 3), directions (N, 3) unit, valid (N,) bool);
        pixels whose radius exceeds the FOV image circle are marked invalid.
        """
        pixels = np.asarray(pixels, dtype=float)
        d = pixels - self.intrinsics.principal_point
        r = np.hypot(d[:, 0], d[:, 1])
        theta_d = r / self.intrinsics.focal
        max_td = float(self.intrinsics.distort_theta(self.intrinsics.fov_limit))
        valid = theta_d <= max_td + 1e-12
        theta = self._invert_distortion(np.minimum(theta_d, max_td))
        with np.errstate(invalid="ignore"):
            u = np.where(r[:, None] > _SQRT_EPS, d / np.where(r[:, None] > _SQRT_EPS, r[:, None], 1.0), 0.0)
        st = np.sin(theta)
        dir_cam = np.stack([st * u[:, 0], st * u[:, 1], np.cos(theta)], axis=1)
        dirs = dir_cam @ self._R
        origins = np.broadcast_to(self.center, dirs.shape).copy()
        return origins, dirs, valid

    def _invert_distortion(self, theta_d, max_iter=50, tol=1e-12):
        """Solve theta from theta_d by safeguarded Newton with bisection fallback.

        Relies on monotonicity of theta_d(theta) on [0, fov_limit], enforced at
        construction.
        """
        theta_d = np.asarray(theta_d, dtype=float)
        lo = np.zeros_like(theta_d)
        hi = np.full_like(theta_d, self.intrinsics.fov_limit)
        theta = np.clip(theta_d, lo, hi)
        for _ in range(max_iter):
            f = self.intrinsics.distort_theta(theta) - theta_d
            if np.all(np.abs(f) < tol):
                return theta
            hi = np.where(f > 0, theta, hi)
            lo = np.where(f < 0, theta, lo)
            fp = self.intrinsics.distort_theta_deriv(theta)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(fp > _SQRT_EPS, f / np.where(fp > _SQRT_EPS, fp, 1.0), np.inf)
            cand = theta - step
            # fall back to bisection when Newton leaves the bracket
            outside = (cand <= lo) | (cand >= hi) | ~np.isfinite(cand)
            theta = np.where(outside, 0.5 * (lo + hi), cand)
        f = self.intrinsics.distort_theta(theta) - theta_d
        if np.any(np.abs(f) >= tol):
            raise NoConvergence("distortion inversion did not converge")
        return theta

    # ----------------------------------------------------------------- jacobian

    def project_jacobian(self, point):
        """Analytic 2x3 Jacobian of project w.r.t. the rig-frame point."""
        point = np.asarray(point, dtype=float)
        pc = self._R @ point + self.extrinsics.translation
        x, y, z = pc
        rho = np.hypot(x, y)
        norm2 = rho * rho + z * z
        if norm2 < _SQRT_EPS:
            raise DegeneratePoint("point coincides with camera center")
        theta = np.arctan2(rho, z)
        if theta >= self.intrinsics.fov_limit - 1e-6:
            raise OutsideFov("point too close to the FOV boundary for a Jacobian")
        f = self.intrinsics.focal
        if rho < 1e-9:
            # on-axis limit: pixel ~ c + f * (x, y) / z
            J_cam = np.array([[f / z, 0.0, 0.0], [0.0, f / z, 0.0]])
            return J_cam @ self._R
        td = float(self.intrinsics.distort_theta(theta))
        tdp = float(self.intrinsics.distort_theta_deriv(theta))
        r = f * td
        u = np.array([x / rho, y / rho])
        # d(theta)/d(pc)
        dtheta = np.array([z * x / rho, z * y / rho, -rho]) / norm2
        # d(u)/d(pc)
        du = np.array([[y * y, -x * y, 0.0], [-x * y, x * x, 0.0]]) / rho**3
        J_cam = np.outer(u, f * tdp * dtheta) + r * du
        return J_cam @ self._R

    # ---------------------------------------------------------------- ray grids

    def ray_grid(self, stride=1):
        """Rays through pixel centers on a stride-subsampled grid.

        Returns (pixels (N,2) int-valued coords, origins (N,3), dirs (N,3)),
        restricted to pixels inside the FOV image circle.  Pixel order is
        row-major over the subsampled grid, so results are deterministic.
        Grids are cached per stride (the camera is immutable).
        """
        cached = self._grid_cache.get(stride)
        if cached is not None:
            return cached
        w, h = self.intrinsics.image_size
        xs = np.arange(0, w, stride, dtype=float)
        ys = np.arange(0, h, stride, dtype=float)
        gx, gy = np.meshgrid(xs, ys)
        pixels = np.stack([gx.ravel(), gy.ravel()], axis=1)
        origins, dirs, valid = self.unproject_many(pixels)
        result = (pixels[valid], origins[valid], dirs[valid])
        self._grid_cache[stride] = result
        return result


# ------------------------------------------------------------------- file I/O

def default_rig(image_size=(256, 256), baseline=0.3, fov_deg=95.0, focal=None):
    """Stereo pair looking down the rig +z axis, separated along x."""
    w, h = image_size
    fov = np.deg2rad(fov_deg)
    if focal is None:
        focal = (min(w, h) / 2.0 - 1.0) / fov
    intr = FisheyeIntrinsics(
        focal=focal,
        principal_point=np.array([(w - 1) / 2.0, (h - 1) / 2.0]),
        distortion=np.zeros(4),
        image_size=(w, h),
        fov_limit=fov,
    )
    cams = {}
    for label, sign in (("left", -1.0), ("right", 1.0)):
        ext = RigExtrinsics(
            rotation=np.array([0.0, 0.0, 0.0, 1.0]),
            translation=np.array([-sign * baseline / 2.0, 0.0, 0.0]),
        )
        cams[label] = FisheyeCamera(intrinsics=intr, extrinsics=ext, label=label)
    return cams


def rig_to_dict(rig):
    cameras = []
    for label in sorted(rig):
        cam = rig[label]
        intr = cam.intrinsics
        cameras.append(
            {
                "label": label,
                "model": "equidistant",
                "focal": intr.focal,
                "principal": list(intr.principal_point),
                "dist": list(intr.distortion),
                "size": list(intr.image_size),
                "fov_deg": float(np.rad2deg(intr.fov_limit)),
                "rotation_xyzw": list(cam.extrinsics.rotation),
                "translation": list(cam.extrinsics.translation),
            }
        )
    return {"cameras": cameras}


def rig_from_dict(data):
    rig = {}
    for entry in data["cameras"]:
        label = entry["label"]
        if label in rig:
            raise ValidationError(f"duplicate camera label '{label}'")
        if entry.get("model", "equidistant") != "equidistant":
            raise ValidationError(f"unsupported camera model '{entry.get('model')}'")
        intr = FisheyeIntrinsics(
            focal=float(entry["focal"]),
            principal_point=np.array(entry["principal"], dtype=float),
            distortion=np.array(entry["dist"], dtype=float),
            image_size=tuple(int(v) for v in entry["size"]),
            fov_limit=float(np.deg2rad(entry["fov_deg"])),
        )
        ext = RigExtrinsics(
            rotation=np.array(entry["rotation_xyzw"], dtype=float),
            translation=np.array(entry["translation"], dtype=float),
        )
        rig[label] = FisheyeCamera(intrinsics=intr, extrinsics=ext, label=label)
    if set(rig) != {"left", "right"}:
        raise ValidationError("calibration must define exactly the labels 'left' and 'right'")
    return rig


def load_rig(path):
    with open(path) as fh:
        return rig_from_dict(json.load(fh))


def save_rig(rig, path):
    with open(path, "w") as fh:
        json.dump(rig_to_dict(rig), fh, indent=2)

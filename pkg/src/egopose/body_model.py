"""Volumetric appearance model: colored isotropic Gaussian blobs on bones.

A ray through the blob cloud accumulates, per blob, the closed-form line
integral of its density, rho = a * sigma * sqrt(2*pi) * exp(-d^2 / (2 sigma^2))
with d the perpendicular distance of the blob center to the ray.  Blobs are
sorted by the depth of closest approach and composited front to back:
v_i = (1 - exp(-rho_i)) * exp(-sum of rho of strictly nearer blobs).  The
expected ray color is sum(v_i * c_i) plus leftover transmittance times the
background color.  Gradients with respect to blob centers are closed-form,
treating the depth ordering as locally constant.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, HeightOutOfRange, ValidationError
from .skeleton import forward_kinematics

SQRT_2PI = np.sqrt(2.0 * np.pi)
MIN_RHO = 1e-8  # blobs with smaller integrated density are skipped


@dataclass(frozen=True)
class GaussianBlob:
    bone: int
    local_offset: np.ndarray   # (3,) meters, bone frame
    sigma: float               # meters, isotropic std
    density: float             # dimensionless magnitude, >= 0
    color: np.ndarray          # (3,) RGB in [0,1]

    def __post_init__(self):
        off = np.asarray(self.local_offset, dtype=float)
        col = np.asarray(self.color, dtype=float)
        if off.shape != (3,) or col.shape != (3,):
            raise ValidationError("blob offset and color must be 3-vectors")
        if self.sigma <= 0:
            raise ValidationError("blob sigma must be positive")
        if self.density < 0:
            raise ValidationError("blob density must be non-negative")
        if np.any(col < 0) or np.any(col > 1):
            raise ValidationError("blob color components must lie in [0,1]")
        object.__setattr__(self, "local_offset", off)
        object.__setattr__(self, "color", col)


class GaussianBodyModel:
    def __init__(self, blobs, background_color):
        self.blobs = tuple(blobs)
        self.background_color = np.asarray(background_color, dtype=float)
        if not self.blobs:
            raise ValidationError("body model needs at least one blob")
        if self.background_color.shape != (3,):
            raise ValidationError("background_color must be a 3-vector")
        self.bone_index = np.array([b.bone for b in self.blobs], dtype=int)
        self.local_offsets = np.stack([b.local_offset for b in self.blobs])
        self.sigmas = np.array([b.sigma for b in self.blobs])
        self.densities = np.array([b.density for b in self.blobs])
        self.colors = np.stack([b.color for b in self.blobs])

    def check_compatible(self, skeleton):
        if np.any(self.bone_index < 0) or np.any(self.bone_index >= skeleton.n_bones):
            raise DimensionMismatch("body model references bones outside the skeleton")


@dataclass(frozen=True)
class PosedBlobs:
    """World-space blob cloud for one pose."""
    centers: np.ndarray    # (B, 3)
    sigmas: np.ndarray     # (B,)
    densities: np.ndarray  # (B,)
    colors: np.ndarray     # (B, 3)
    bone_index: np.ndarray  # (B,)
    background: np.ndarray  # (3,)


def pose_blobs(model, skeleton, pose, fk=None):
    """Rigidly attach the blob cloud to a pose (sigma is rotation-invariant).

    Passing a precomputed FK state avoids recomputing it.
    """
    model.check_compatible(skeleton)
    if fk is None:
        fk = forward_kinematics(skeleton, pose)
    R = fk.rotations[model.bone_index]            # (B, 3, 3)
    p = fk.positions[model.bone_index]            # (B, 3)
    centers = np.einsum("bij,bj->bi", R, model.local_offsets) + p
    return PosedBlobs(
        centers=centers,
        sigmas=model.sigmas,
        densities=model.densities,
        colors=model.colors,
        bone_index=model.bone_index,
        background=model.background_color,
    )


# ------------------------------------------------------------------ marching

def _line_integrals(posed, origins, dirs, want_perp):
    """Per-ray, per-blob integrated density rho and geometry helpers."""
    w = posed.centers[None, :, :] - origins[:, None, :]        # (N, B, 3)
    t = np.einsum("nbk,nk->nb", w, dirs)                       # (N, B)
    d2 = np.maximum(np.einsum("nbk,nbk->nb", w, w) - t * t, 0.0)
    sig = posed.sigmas[None, :]
    rho = posed.densities[None, :] * sig * SQRT_2PI * np.exp(-d2 / (2.0 * sig**2))
    valid = (t > 0) & (rho >= MIN_RHO)
    rho = np.where(valid, rho, 0.0)
    perp = w - t[:, :, None] * dirs[:, None, :] if want_perp else None
    return rho, t, perp, valid


def march_rays(posed, origins, dirs, want_grad=False):
    """Composite the blob cloud along many rays.

    origins, dirs: (N, 3) with unit directions.  Returns a dict with
      color (N, 3), vis (N, B), and when want_grad is set,
      dcolor_drho (N, B, 3) and drho_dcenter (N, B, 3) so that
      dC_c/dmu_b = dcolor_drho[n, b, c] * drho_dcenter[n, b, :].
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    rho, t, perp, valid = _line_integrals(posed, origins, dirs, want_perp=want_grad)

    t_key = np.where(valid, t, np.inf)
    order = np.argsort(t_key, axis=1, kind="stable")           # ties break by blob index
    rho_s = np.take_along_axis(rho, order, axis=1)
    inc = np.cumsum(rho_s, axis=1)
    T = np.exp(rho_s - inc)                                    # transmittance in front
    pass_through = np.exp(-inc)                                # transmittance just behind
    v_s = T - pass_through                                     # (1 - exp(-rho)) * T

    vis = np.zeros_like(v_s)
    np.put_along_axis(vis, order, v_s, axis=1)
    color = vis @ posed.colors + (1.0 - vis.sum(axis=1))[:, None] * posed.background

    out = {"color": color, "vis": vis}
    if want_grad:
        colors_s = posed.colors[order]                         # (N, B, 3)
        vc = v_s[:, :, None] * colors_s
        # exclusive suffix sums over blobs behind each one
        suff_vc = np.flip(np.cumsum(np.flip(vc, axis=1), axis=1), axis=1) - vc
        suff_v = np.flip(np.cumsum(np.flip(v_s, axis=1), axis=1), axis=1) - v_s
        bg = posed.background[None, None, :]
        d_s = pass_through[:, :, None] * (colors_s - bg) - (suff_vc - bg * suff_v[:, :, None])
        dcolor_drho = np.zeros_like(d_s)
        np.put_along_axis(dcolor_drho, order[:, :, None], d_s, axis=1)
        dcolor_drho = np.where(valid[:, :, None], dcolor_drho, 0.0)
        sig2 = posed.sigmas[None, :] ** 2
        drho_dcenter = np.where(valid[:, :, None], -(rho / sig2)[:, :, None] * perp, 0.0)
        out["dcolor_drho"] = dcolor_drho
        out["drho_dcenter"] = drho_dcenter
    return out


def march_rays_color_vjp(posed, origins, dirs, samples):
    """Fused render + squared-residual gradient for many rays.

    Computes color as march_rays does, then contracts the cotangent of
    value = sum ||color - samples||^2 down to blob centers without ever
    materializing per-ray, per-blob 3-vectors.  Returns (value, grad_centers)
    with grad_centers of shape (B, 3).
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    rho, t, _, valid = _line_integrals(posed, origins, dirs, want_perp=False)

    t_key = np.where(valid, t, np.inf)
    order = np.argsort(t_key, axis=1, kind="stable")
    rho_s = np.take_along_axis(rho, order, axis=1)
    inc = np.cumsum(rho_s, axis=1)
    T = np.exp(rho_s - inc)
    pass_through = np.exp(-inc)
    v_s = T - pass_through

    vis = np.zeros_like(v_s)
    np.put_along_axis(vis, order, v_s, axis=1)
    color = vis @ posed.colors + (1.0 - vis.sum(axis=1))[:, None] * posed.background
    resid = color - samples
    value = float(np.sum(resid * resid))

    # per-(ray, blob) scalar cotangent s = dvalue/drho / 2, in sorted order
    cdotr_s = np.take_along_axis(resid @ posed.colors.T, order, axis=1)
    bgdotr = (resid @ posed.background)[:, None]
    vcr = v_s * cdotr_s
    suff_vcr = np.flip(np.cumsum(np.flip(vcr, axis=1), axis=1), axis=1) - vcr
    suff_v = np.flip(np.cumsum(np.flip(v_s, axis=1), axis=1), axis=1) - v_s
    s_sorted = pass_through * (cdotr_s - bgdotr) - (suff_vcr - bgdotr * suff_v)
    s = np.zeros_like(s_sorted)
    np.put_along_axis(s, order, s_sorted, axis=1)

    # grad over centers: sum_n u_nb * perp_nb with perp = mu_b - o_n - t_nb d_n;
    # rho is zero on invalid entries, so u vanishes there automatically
    u = s * (-(rho / posed.sigmas[None, :] ** 2))
    U = u.sum(axis=0)
    grad = 2.0 * (
        U[:, None] * posed.centers - u.T @ origins - (u * t).T @ dirs
    )
    return value, grad


def ray_march(posed, origin, direction):
    """Single-ray convenience wrapper.

    Returns (color (3,), vis (B,), grad_centers (B, 3, 3)) where
    grad_centers[b, c] = d color_c / d center_b.
    """
    res = march_rays(posed, origin, direction, want_grad=True)
    grad = res["dcolor_drho"][0][:, :, None] * res["drho_dcenter"][0][:, None, :]
    return res["color"][0], res["vis"][0], grad


def render_view(posed, camera, stride=1):
    """Render one camera view; pixels beyond the FOV circle show background."""
    w, h = camera.intrinsics.image_size
    xs = np.arange(0, w, stride)
    ys = np.arange(0, h, stride)
    image = np.tile(posed.background, (len(ys), len(xs), 1))
    pixels, origins, dirs = camera.ray_grid(stride)
    if len(pixels):
        res = march_rays(posed, origins, dirs)
        col = (pixels[:, 0] / stride).astype(int)
        row = (pixels[:, 1] / stride).astype(int)
        image[row, col] = res["color"]
    return image


# -------------------------------------------------------------- default body

_PART_COLORS = {
    "torso": (0.20, 0.30, 0.80),
    "head": (0.90, 0.75, 0.50),
    "l_arm": (0.85, 0.15, 0.15),
    "r_arm": (0.85, 0.15, 0.75),
    "l_leg": (0.15, 0.70, 0.20),
    "r_leg": (0.10, 0.70, 0.75),
}


def _part_of(bone_name):
    if bone_name.startswith("l_") or bone_name.startswith("r_"):
        side = bone_name[0]
        if "arm" in bone_name or "hand" in bone_name or "forearm" in bone_name:
            return f"{side}_arm"
        return f"{side}_leg"
    if bone_name == "head":
        return "head"
    return "torso"


def default_body(skeleton, height, background_color=(0.9, 0.9, 0.9)):
    """Deterministic blob placement along every bone segment of a skeleton.

    For each non-root bone, blobs are spread along the segment from its
    parent's joint to its own joint and attached to the parent bone, so they
    move rigidly with the parent frame.  Sigmas scale with segment length.
    """
    if not (1.2 <= height <= 2.2):
        raise HeightOutOfRange(f"height {height} m outside [1.2, 2.2]")
    scale = height / 1.7
    blobs = []
    for i, bone in enumerate(skeleton.bones):
        if bone.parent is None:
            continue
        length = float(np.linalg.norm(bone.offset))
        if length < 1e-9:
            continue
        sigma = float(np.clip(0.22 * length, 0.035 * scale, 0.09 * scale))
        count = max(1, int(np.ceil(length / (2.0 * sigma))))
        color = _PART_COLORS[_part_of(bone.name)]
        for k in range(count):
            s = (k + 0.5) / count
            blobs.append(
                GaussianBlob(
                    bone=bone.parent,
                    local_offset=s * bone.offset,
                    sigma=sigma,
                    density=20.0,
                    color=np.array(color),
                )
            )
    # the head bone has no child segment; give it one larger blob
    try:
        head = skeleton.bone_index("head")
        blobs.append(
            GaussianBlob(
                bone=head,
                local_offset=np.array([0.0, 0.03 * scale, 0.0]),
                sigma=0.08 * scale,
                density=20.0,
                color=np.array(_PART_COLORS["head"]),
            )
        )
    except KeyError:
        pass
    return GaussianBodyModel(blobs, np.asarray(background_color, dtype=float))


# ------------------------------------------------------------------- file I/O

def body_to_dict(model):
    return {
        "background_color": list(model.background_color),
        "blobs": [
            {
                "bone": int(b.bone),
                "offset": list(b.local_offset),
                "sigma": b.sigma,
                "density": b.density,
                "color": list(b.color),
            }
            for b in model.blobs
        ],
    }


def body_from_dict(data):
    blobs = [
        GaussianBlob(
            bone=int(b["bone"]),
            local_offset=np.array(b["offset"], dtype=float),
            sigma=float(b["sigma"]),
            density=float(b["density"]),
            color=np.array(b["color"], dtype=float),
        )
        for b in data["blobs"]
    ]
    return GaussianBodyModel(blobs, np.array(data["background_color"], dtype=float))


def load_body(path):
    with open(path) as fh:
        return body_from_dict(json.load(fh))


def save_body(model, path):
    with open(path, "w") as fh:
        json.dump(body_to_dict(model), fh, indent=2)

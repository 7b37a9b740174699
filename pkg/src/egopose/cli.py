"""Command-line interface: synth, track, evaluate, augment, overlay.

Every subcommand reads one JSON config plus the flags --seed, --trace and
--threads.  Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 numerical failure.
"""

import json
import os
import sys

import click
import numpy as np

from .camera import load_rig
from .datatools import (
    chroma_key,
    composite,
    joint_error_3d,
    pck,
    project_annotations,
    recolor,
)
from .energy import Detection2D, EnergyWeights, save_detections
from .errors import NoConvergence, NonFiniteEnergy, ValidationError
from .skeleton import forward_kinematics, load_poses, load_skeleton, save_poses
from .solver import SolverConfig, track_sequence
from .synth import (
    SynthSpec,
    initial_root_pose,
    load_bundle,
    load_image,
    render_overlay,
    save_image,
    synth_sequence,
    write_bundle,
)


def _load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON config {path}: {exc}") from exc


def _common_options(fn):
    fn = click.option("--seed", type=int, default=None, help="Override the config rng seed.")(fn)
    fn = click.option("--trace", type=click.Path(), default=None,
                      help="Write per-iteration diagnostics (JSONL) where applicable.")(fn)
    fn = click.option("--threads", type=int, default=1, help="Worker thread cap.")(fn)
    return fn


@click.group()
def cli():
    """Egocentric pose tracking from a head-mounted stereo fisheye rig."""


@cli.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output bundle directory (overrides config out_dir).")
@_common_options
def synth(config, out_dir, seed, trace, threads):
    """Generate a synthetic ground-truth bundle."""
    cfg = _load_config(config)
    out_dir = out_dir or cfg.pop("out_dir", None)
    if out_dir is None:
        raise click.UsageError("synth needs --out or out_dir in the config")
    if seed is not None:
        cfg["rng_seed"] = seed
    spec_fields = {k: v for k, v in cfg.items() if k in SynthSpec.__dataclass_fields__}
    unknown = set(cfg) - set(spec_fields)
    if unknown:
        raise ValidationError(f"unknown synth config keys: {sorted(unknown)}")
    bundle = synth_sequence(SynthSpec(**spec_fields), threads=max(1, threads))
    manifest = write_bundle(bundle, out_dir)
    click.echo(f"wrote {manifest}")


@cli.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output pose file (overrides config output).")
@_common_options
def track(config, out_path, seed, trace, threads):
    """Track a sequence from a bundle manifest."""
    cfg = _load_config(config)
    manifest = cfg.get("manifest")
    if manifest is None:
        raise ValidationError("track config must name a bundle 'manifest'")
    out_path = out_path or cfg.get("output")
    if out_path is None:
        raise click.UsageError("track needs --out or 'output' in the config")
    bundle = load_bundle(manifest)
    bundle.skeleton.require_detection_labels()
    weights = EnergyWeights(**cfg.get("weights", {}))
    solver_cfg = SolverConfig(**cfg.get("solver", {}))
    n_frames = cfg.get("frames", bundle.manifest["frames"])
    observations = bundle.observations()[:n_frames]
    init_mode = cfg.get("init", "bootstrap")
    if init_mode == "gt":
        first_init = bundle.gt_poses[0]
    elif init_mode == "bootstrap":
        height = float(cfg.get("height", bundle.manifest["spec"].get("height", 1.7)))
        first_init = initial_root_pose(bundle.skeleton, height)
    else:
        raise ValidationError(f"unknown init mode '{init_mode}'")
    trace_records = [] if trace else None
    result = track_sequence(
        observations, first_init, bundle.rig, bundle.skeleton, bundle.body,
        weights, solver_cfg, trace=trace_records,
    )
    save_poses([f.pose for f in result.frames], out_path)
    if trace:
        with open(trace, "w") as fh:
            for rec in trace_records:
                fh.write(json.dumps(rec) + "\n")
    if result.aborted_at is not None:
        raise NonFiniteEnergy(
            f"tracking aborted at frame {result.aborted_at}; "
            f"{len(result.frames)} frames written to {out_path}"
        )
    click.echo(f"wrote {out_path} ({len(result.frames)} frames)")


@cli.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Metrics report path (overrides config output).")
@_common_options
def evaluate(config, out_path, seed, trace, threads):
    """Compare predicted poses against ground truth (3D error and PCK)."""
    cfg = _load_config(config)
    out_path = out_path or cfg.get("output")
    skeleton = load_skeleton(cfg["skeleton"])
    rig = load_rig(cfg["calibration"])
    pred = load_poses(cfg["pred_poses"])
    gt = load_poses(cfg["gt_poses"])[: len(pred)] if cfg.get("truncate_gt") else load_poses(cfg["gt_poses"])
    threshold = float(cfg.get("pck_threshold_px", 20.0))
    mean_m, std_m = joint_error_3d(pred, gt, skeleton)

    labels = sorted(skeleton.named_joints)
    hit_counts = {l: 0 for l in labels}
    vis_counts = {l: 0 for l in labels}
    pck_values = []
    for pred_pose, gt_pose in zip(pred, gt):
        gt_fk = forward_kinematics(skeleton, gt_pose)
        pred_fk = forward_kinematics(skeleton, pred_pose)
        gt_joints = {l: gt_fk.positions[skeleton.named_joints[l]] for l in labels}
        pred_joints = {l: pred_fk.positions[skeleton.named_joints[l]] for l in labels}
        gt_ann = project_annotations(gt_joints, rig)
        pred_ann = project_annotations(pred_joints, rig)
        for cam_label in sorted(rig):
            frame = _annotated(gt_ann[cam_label], cam_label)
            predicted = {l: pred_ann[cam_label][l].pixel for l in labels}
            hits, mean_pck = pck(predicted, frame, threshold)
            if np.isfinite(mean_pck):
                pck_values.append(mean_pck)
            for l, hit in hits.items():
                vis_counts[l] += 1
                hit_counts[l] += int(hit)
    per_joint = {
        l: (100.0 * hit_counts[l] / vis_counts[l]) if vis_counts[l] else None
        for l in labels
    }
    report = {
        "pck": float(np.mean(pck_values)) if pck_values else None,
        "pck_threshold_px": threshold,
        "per_joint": per_joint,
        "error3d_mean_m": mean_m,
        "error3d_std_m": std_m,
    }
    text = json.dumps(report, indent=2)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    click.echo(text)


def _annotated(annotations, camera, frame_index=0):
    from .datatools import AnnotatedFrame

    return AnnotatedFrame(image=None, annotations=annotations,
                          camera=camera, frame_index=frame_index)


@cli.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (overrides config out_dir).")
@_common_options
def augment(config, out_dir, seed, trace, threads):
    """Green-screen composite + recolor a batch of frames, with annotations."""
    cfg = _load_config(config)
    out_dir = out_dir or cfg.get("out_dir")
    if out_dir is None:
        raise click.UsageError("augment needs --out or out_dir in the config")
    os.makedirs(out_dir, exist_ok=True)
    rng_seed = seed if seed is not None else int(cfg.get("rng_seed", 0))
    skeleton = load_skeleton(cfg["skeleton"])
    rig = load_rig(cfg["calibration"])
    gt_poses = load_poses(cfg["gt_poses"])
    key_color = np.asarray(cfg["key_color"], dtype=float)
    tolerance = float(cfg["chroma_tolerance"])
    hue_max = float(cfg.get("hue_shift_deg", 0.0))
    gain_lo, gain_hi = cfg.get("gain_range", [1.0, 1.0])
    backgrounds = sorted(
        f for f in os.listdir(cfg["background_dir"])
        if f.lower().endswith((".png", ".jpg", ".jpeg"))
    )
    if not backgrounds:
        raise ValidationError(f"no background images in {cfg['background_dir']}")
    annotations_out = {}
    labels = sorted(skeleton.named_joints)
    for item in cfg["images"]:
        frame = int(item["frame"])
        cam_label = item["camera"]
        rng = np.random.default_rng([rng_seed, frame])
        image = load_image(item["path"])
        mask = chroma_key(image, key_color, tolerance)
        bg_path = os.path.join(cfg["background_dir"], backgrounds[int(rng.integers(len(backgrounds)))])
        background = load_image(bg_path)
        hue = float(rng.uniform(-hue_max, hue_max))
        gain = float(rng.uniform(gain_lo, gain_hi))
        recolored = recolor(image, mask, hue, gain)
        out_img = composite(recolored, mask, background, rng)
        name = f"{frame:06d}_{cam_label}.png"
        save_image(out_img, os.path.join(out_dir, name))
        fk = forward_kinematics(skeleton, gt_poses[frame])
        joints = {l: fk.positions[skeleton.named_joints[l]] for l in labels}
        anns = project_annotations(joints, rig)[cam_label]
        dets = [
            Detection2D(camera=cam_label, joint=l, pixel=anns[l].pixel, confidence=1.0)
            for l in labels if anns[l].visible
        ]
        annotations_out.setdefault(frame, []).extend(dets)
    save_detections(annotations_out, os.path.join(out_dir, "annotations.jsonl"))
    click.echo(f"wrote {len(cfg['images'])} augmented frames to {out_dir}")


@cli.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output image path (overrides config out).")
@_common_options
def overlay(config, out_path, seed, trace, threads):
    """Draw a projected skeleton over an image."""
    cfg = _load_config(config)
    out_path = out_path or cfg.get("out")
    if out_path is None:
        raise click.UsageError("overlay needs --out or 'out' in the config")
    skeleton = load_skeleton(cfg["skeleton"])
    rig = load_rig(cfg["calibration"])
    poses = load_poses(cfg["poses"])
    pose = poses[int(cfg.get("frame", 0))]
    image = load_image(cfg["image"])
    out = render_overlay(image, pose, skeleton, rig, cfg.get("camera", "left"))
    save_image(out, out_path)
    click.echo(f"wrote {out_path}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (ValidationError, FileNotFoundError, KeyError, IndexError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (NonFiniteEnergy, NoConvergence) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())

import numpy as np
import pytest

from egopose.body_model import pose_blobs, render_view
from egopose.datatools import per_frame_error_3d
from egopose.energy import EnergyContext, EnergyWeights, FrameObservation
from egopose.errors import ValidationError
from egopose.skeleton import forward_kinematics
from egopose.solver import SolverConfig, solve_frame, track_sequence
from egopose.synth import SynthSpec, initial_root_pose, synth_sequence


def make_context(pose, humanoid, body, rig, weights=None, detections=()):
    posed = pose_blobs(body, humanoid, pose)
    images = {label: render_view(posed, cam) for label, cam in rig.items()}
    obs = FrameObservation(frame_index=0, images=images, detections=list(detections))
    return EnergyContext(
        observation=obs, rig=rig, skeleton=humanoid, body_model=body,
        weights=weights or EnergyWeights(),
        rest_pose=humanoid.rest_pose(),
    )


def gt_detections(pose, humanoid, rig):
    from egopose.energy import Detection2D

    fk = forward_kinematics(humanoid, pose)
    dets = []
    for label, cam in sorted(rig.items()):
        for joint, bone in sorted(humanoid.named_joints.items()):
            try:
                pix = cam.project(fk.positions[bone])
            except Exception:
                continue
            dets.append(Detection2D(camera=label, joint=joint, pixel=pix, confidence=1.0))
    return dets


def test_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValidationError):
        SolverConfig(backtrack_factor=1.5)


def test_solver_at_noiseless_minimum_stays_put(humanoid, body, rig):
    gt = initial_root_pose(humanoid, 1.7)
    ctx = make_context(gt, humanoid, body, rig,
                       weights=EnergyWeights(w_rest=0.0, w_detection=0.0))
    pose, bd, diag = solve_frame(gt, ctx, SolverConfig(max_iterations=50))
    assert diag["converged"]
    assert bd.total < 1e-12
    assert np.linalg.norm(pose.root_translation - gt.root_translation) < 1e-9


def test_solver_recovers_small_perturbation(humanoid, body, rig):
    rng = np.random.default_rng(51)
    gt = initial_root_pose(humanoid, 1.7)
    ctx = make_context(gt, humanoid, body, rig, detections=gt_detections(gt, humanoid, rig))
    start = gt.step(np.concatenate([rng.normal(0, 0.05, 6), rng.normal(0, 0.1, humanoid.n_dofs)]))
    pose, _, diag = solve_frame(start, ctx, SolverConfig(max_iterations=300))
    err = per_frame_error_3d([pose], [gt], humanoid)[0]
    assert err < 0.01  # within 1 cm


def test_accepted_energy_strictly_decreases(humanoid, body, rig):
    rng = np.random.default_rng(52)
    gt = initial_root_pose(humanoid, 1.7)
    ctx = make_context(gt, humanoid, body, rig, detections=gt_detections(gt, humanoid, rig))
    start = gt.step(rng.normal(0, 0.05, humanoid.n_params))
    trace = []
    solve_frame(start, ctx, SolverConfig(max_iterations=60), trace=trace)
    totals = [rec["total"] for rec in trace]
    assert len(totals) > 3
    assert all(b < a for a, b in zip(totals, totals[1:]))


def test_solve_frame_deterministic(humanoid, body, rig):
    rng = np.random.default_rng(53)
    gt = initial_root_pose(humanoid, 1.7)
    ctx = make_context(gt, humanoid, body, rig, detections=gt_detections(gt, humanoid, rig))
    start = gt.step(rng.normal(0, 0.03, humanoid.n_params))
    p1, bd1, _ = solve_frame(start, ctx, SolverConfig(max_iterations=40))
    p2, bd2, _ = solve_frame(start, ctx, SolverConfig(max_iterations=40))
    assert np.array_equal(p1.root_translation, p2.root_translation)
    assert np.array_equal(p1.root_rotation, p2.root_rotation)
    assert np.array_equal(p1.joint_angles, p2.joint_angles)
    assert bd1.total == bd2.total


def test_detection_only_ablation_converges(humanoid, body, rig):
    # with w_color = 0 the solver leans on detections alone
    rng = np.random.default_rng(54)
    gt = initial_root_pose(humanoid, 1.7)
    ctx = make_context(
        gt, humanoid, body, rig,
        weights=EnergyWeights(w_color=0.0, w_rest=0.0),
        detections=gt_detections(gt, humanoid, rig),
    )
    start = gt.step(np.concatenate([rng.normal(0, 0.03, 6), rng.normal(0, 0.05, humanoid.n_dofs)]))
    pose, _, _ = solve_frame(start, ctx, SolverConfig(max_iterations=300))
    err = per_frame_error_3d([pose], [gt], humanoid)[0]
    assert err < 0.02


def test_track_single_frame_reduces_to_solve_frame(humanoid, body, rig):
    rng = np.random.default_rng(55)
    gt = initial_root_pose(humanoid, 1.7)
    ctx = make_context(gt, humanoid, body, rig, detections=gt_detections(gt, humanoid, rig))
    start = gt.step(rng.normal(0, 0.02, humanoid.n_params))
    cfg = SolverConfig(max_iterations=30)
    p_direct, bd_direct, _ = solve_frame(start, ctx, cfg)
    res = track_sequence([ctx.observation], start, rig, humanoid, body, ctx.weights, cfg,
                         rest_pose=ctx.rest_pose)
    assert len(res.frames) == 1
    assert np.array_equal(res.frames[0].pose.joint_angles, p_direct.joint_angles)
    assert res.frames[0].breakdown.total == bd_direct.total


def test_track_rejects_noncontiguous_frames(humanoid, body, rig):
    gt = initial_root_pose(humanoid, 1.7)
    ctx = make_context(gt, humanoid, body, rig)
    obs2 = FrameObservation(frame_index=2, images=ctx.observation.images, detections=[])
    with pytest.raises(ValidationError):
        track_sequence([ctx.observation, obs2], gt, rig, humanoid, body,
                       ctx.weights, SolverConfig(max_iterations=1))


def test_track_sequence_bitwise_repeatable():
    spec = SynthSpec(frames=3, motion="walk", detection_noise_sigma=1.0,
                     detection_dropout=0.1, image_size=(64, 64), rng_seed=9)
    bundle = synth_sequence(spec)
    cfg = SolverConfig(max_iterations=15)
    runs = []
    for _ in range(2):
        res = track_sequence(bundle.observations(), bundle.gt_poses[0], bundle.rig,
                             bundle.skeleton, bundle.body, EnergyWeights(), cfg)
        runs.append(res)
    for a, b in zip(runs[0].frames, runs[1].frames):
        assert np.array_equal(a.pose.root_translation, b.pose.root_translation)
        assert np.array_equal(a.pose.root_rotation, b.pose.root_rotation)
        assert np.array_equal(a.pose.joint_angles, b.pose.joint_angles)


def test_convergence_flag_false_at_iteration_cap(humanoid, body, rig):
    rng = np.random.default_rng(56)
    gt = initial_root_pose(humanoid, 1.7)
    ctx = make_context(gt, humanoid, body, rig, detections=gt_detections(gt, humanoid, rig))
    start = gt.step(rng.normal(0, 0.05, humanoid.n_params))
    _, _, diag = solve_frame(start, ctx, SolverConfig(max_iterations=2))
    assert diag["iterations"] == 2
    assert not diag["converged"]

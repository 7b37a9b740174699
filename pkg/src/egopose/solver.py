"""Per-frame energy minimization and sequential tracking.

Plain gradient descent with a backtracking line search: a step is accepted
only if it strictly decreases the total energy, so accepted iterates are
monotone by construction.  The root rotation is updated through tangent-space
increments with renormalization.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyContext, total_energy
from .errors import NonFiniteEnergy, ValidationError


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-6
    step_tolerance: float = 1e-8
    initial_step: float = 1e-2
    backtrack_factor: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if min(self.max_iterations, self.gradient_tolerance, self.step_tolerance,
               self.initial_step, self.max_backtracks) <= 0:
            raise ValidationError("solver config values must be positive")
        if not (0 < self.backtrack_factor < 1):
            raise ValidationError("backtrack_factor must lie in (0, 1)")


@dataclass(frozen=True)
class FrameResult:
    frame_index: int
    pose: object
    breakdown: object
    iterations: int
    converged: bool
    wall_time: float


@dataclass
class TrackResult:
    frames: list = field(default_factory=list)
    aborted_at: int | None = None   # frame index of a NonFiniteEnergy failure

    @property
    def poses(self):
        return [f.pose for f in self.frames]


def _check_finite(breakdown):
    if not (np.isfinite(breakdown.total) and np.all(np.isfinite(breakdown.gradient))):
        raise NonFiniteEnergy("energy or gradient is not finite")


def solve_frame(initial, ctx, config, trace=None):
    """Minimize the frame energy from an initial pose.

    trace, when given, is a list receiving one record per accepted iterate.
    Returns (pose, EnergyBreakdown, diagnostics dict).
    """
    t0 = time.perf_counter()
    pose = initial
    bd = total_energy(pose, ctx)
    _check_finite(bd)
    step = config.initial_step
    converged = False
    iterations = 0
    for _ in range(config.max_iterations):
        grad = bd.gradient
        gnorm = float(np.linalg.norm(grad))
        if gnorm < config.gradient_tolerance:
            converged = True
            break
        alpha = step
        accepted = False
        for _ in range(config.max_backtracks + 1):
            cand = pose.step(-alpha * grad)
            # line-search trials need values only; the gradient is computed
            # once below at the accepted iterate
            cand_bd = total_energy(cand, ctx, want_grad=False)
            _check_finite(cand_bd)
            if cand_bd.total < bd.total:
                accepted = True
                break
            alpha *= config.backtrack_factor
        if not accepted:
            # no descent even at the smallest trial step
            converged = alpha * gnorm < config.step_tolerance
            break
        pose = cand
        bd = total_energy(cand, ctx)
        _check_finite(bd)
        iterations += 1
        step = alpha * 2.0
        if trace is not None:
            trace.append(
                {
                    "iteration": iterations,
                    "total": bd.total,
                    "e_color": bd.e_color,
                    "e_detection": bd.e_detection,
                    "e_pose": bd.e_pose,
                    "e_smooth": bd.e_smooth,
                    "step": alpha,
                    "grad_norm": gnorm,
                }
            )
        if alpha * gnorm < config.step_tolerance:
            converged = True
            break
    diagnostics = {
        "iterations": iterations,
        "converged": converged,
        "wall_time": time.perf_counter() - t0,
    }
    return pose, bd, diagnostics


def track_sequence(observations, first_init, rig, skeleton, body_model, weights,
                   config, rest_pose=None, trace=None):
    """Track an ordered, contiguous sequence of frame observations.

    Each frame is initialized from the previous optimum (constant-position
    prediction); the optimized history feeds the smoothness term.  A frame
    failing with NonFiniteEnergy aborts the run; the result then carries all
    frames solved so far and the failing frame index in aborted_at.
    """
    observations = list(observations)
    for a, b in zip(observations, observations[1:]):
        if b.frame_index != a.frame_index + 1:
            raise ValidationError("frame observations must be ordered and contiguous")
    if rest_pose is None:
        rest_pose = skeleton.rest_pose()
    result = TrackResult()
    prev_pose = None
    prev_prev_pose = None
    init = first_init
    for obs in observations:
        obs.validate(rig)
        ctx = EnergyContext(
            observation=obs,
            rig=rig,
            skeleton=skeleton,
            body_model=body_model,
            weights=weights,
            rest_pose=rest_pose,
            prev_pose=prev_pose,
            prev_prev_pose=prev_prev_pose,
        )
        frame_trace = [] if trace is not None else None
        try:
            pose, bd, diag = solve_frame(init, ctx, config, trace=frame_trace)
        except NonFiniteEnergy:
            result.aborted_at = obs.frame_index
            return result
        if trace is not None:
            for rec in frame_trace:
                trace.append({"frame": obs.frame_index, **rec})
        result.frames.append(
            FrameResult(
                frame_index=obs.frame_index,
                pose=pose,
                breakdown=bd,
                iterations=diag["iterations"],
                converged=diag["converged"],
                wall_time=diag["wall_time"],
            )
        )
        prev_prev_pose = prev_pose
        prev_pose = pose
        init = pose
    return result

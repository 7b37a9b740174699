"""Egocentric full-body pose tracking from a head-mounted stereo fisheye rig."""

from .camera import FisheyeCamera, FisheyeIntrinsics, RigExtrinsics, default_rig, load_rig, save_rig
from .body_model import (
    GaussianBlob,
    GaussianBodyModel,
    default_body,
    march_rays,
    pose_blobs,
    ray_march,
    render_view,
)
from .energy import (
    Detection2D,
    EnergyBreakdown,
    EnergyContext,
    EnergyWeights,
    FrameObservation,
    e_color,
    e_detection,
    e_pose,
    e_smooth,
    total_energy,
)
from .errors import (
    BackgroundTooSmall,
    DegeneratePoint,
    DimensionMismatch,
    HeightOutOfRange,
    LabelMismatch,
    LengthMismatch,
    MissingImage,
    NoConvergence,
    NonFiniteEnergy,
    OutsideFov,
    UnknownJointLabel,
    ValidationError,
)
from .datatools import (
    AnnotatedFrame,
    Annotation,
    AugmentSpec,
    chroma_key,
    composite,
    joint_error_3d,
    pck,
    per_frame_error_3d,
    project_annotations,
    recolor,
)
from .skeleton import (
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
    point_jacobian,
    save_poses,
    save_skeleton,
)
from .solver import FrameResult, SolverConfig, TrackResult, solve_frame, track_sequence
from .synth import SynthBundle, SynthSpec, initial_root_pose, render_overlay, synth_sequence

__version__ = "0.1.0"

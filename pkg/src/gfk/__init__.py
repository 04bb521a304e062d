"""Gated-frustum kit: simulate gated range-intensity imaging and lift 2D
detections to 3D boxes with a small learned codec regressor."""

from .camera import (
    CamPoint,
    CameraModel,
    DEFAULT_CAMERA,
    PixelPoint,
    load_calibration,
    save_calibration,
    wrap_to_pi,
)
from .codec import (
    FrustumCode,
    FrustumSegment,
    K_DEFAULT,
    decode,
    encode,
    frustum_segment,
    read_predictions,
    triangulate_depth,
)
from .errors import (
    AmbiguousRange,
    BehindCamera,
    ConfigError,
    DegenerateBox,
    EmptyDataset,
    FullyOutOfImage,
    GfkError,
    InsufficientSignal,
    InvalidAlbedo,
    InvalidStats,
    ModelParseError,
    NegativeRange,
    NonPositiveDepth,
    NonPositiveDimension,
    ParseError,
    ShapeMismatch,
)
from .eval import ApResult, EvalConfig, EvalReport, ap_40, evaluate, iou_2d, iou_3d, iou_bev
from .loss import CodeTargets, LossBreakdown, LossWeights, loss_3d, smooth_l1
from .regressor import (
    MlpParams,
    Sample,
    TrainConfig,
    extract_features,
    forward,
    init_params,
    load_model,
    predict,
    save_model,
    train,
)
from .ripsim import (
    DEFAULT_NOISE,
    GateConfig,
    GatedFrame,
    NOISELESS,
    NoiseConfig,
    RipTable,
    SPEED_OF_LIGHT,
    build_rip_tables,
    default_gates,
    depth_from_ratios,
    load_gates,
    measure_pixel,
    render_frame,
    rip_value,
    save_gates,
)
from .scene import (
    Box2D,
    Box3D,
    CAR,
    DEFAULT_CLASSES,
    LabeledObject,
    ObjectClass,
    PEDESTRIAN,
    SceneConfig,
    SceneDescription,
    SceneObject,
    oracle_box2d,
    perturb_box2d,
    read_labels,
    sample_scene,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousRange",
    "ApResult",
    "BehindCamera",
    "Box2D",
    "Box3D",
    "CAR",
    "CamPoint",
    "CameraModel",
    "CodeTargets",
    "ConfigError",
    "DEFAULT_CAMERA",
    "DEFAULT_CLASSES",
    "DEFAULT_NOISE",
    "DegenerateBox",
    "EmptyDataset",
    "EvalConfig",
    "EvalReport",
    "FrustumCode",
    "FrustumSegment",
    "FullyOutOfImage",
    "GateConfig",
    "GatedFrame",
    "GfkError",
    "InsufficientSignal",
    "InvalidAlbedo",
    "InvalidStats",
    "K_DEFAULT",
    "LabeledObject",
    "LossBreakdown",
    "LossWeights",
    "MlpParams",
    "ModelParseError",
    "NOISELESS",
    "NegativeRange",
    "NoiseConfig",
    "NonPositiveDepth",
    "NonPositiveDimension",
    "ObjectClass",
    "PEDESTRIAN",
    "ParseError",
    "PixelPoint",
    "RipTable",
    "SPEED_OF_LIGHT",
    "Sample",
    "SceneConfig",
    "SceneDescription",
    "SceneObject",
    "ShapeMismatch",
    "TrainConfig",
    "ap_40",
    "build_rip_tables",
    "decode",
    "default_gates",
    "depth_from_ratios",
    "encode",
    "evaluate",
    "extract_features",
    "forward",
    "frustum_segment",
    "init_params",
    "iou_2d",
    "iou_3d",
    "iou_bev",
    "load_calibration",
    "load_gates",
    "load_model",
    "loss_3d",
    "measure_pixel",
    "oracle_box2d",
    "perturb_box2d",
    "predict",
    "read_labels",
    "read_predictions",
    "render_frame",
    "rip_value",
    "sample_scene",
    "save_calibration",
    "save_gates",
    "save_model",
    "smooth_l1",
    "train",
    "triangulate_depth",
    "wrap_to_pi",
]

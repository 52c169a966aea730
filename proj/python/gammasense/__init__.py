"""Sensing-area prediction for a drop-in gamma probe.

Thin Python layer over the C++ core. Configs and reports are plain dicts;
images, depth maps and masks are numpy arrays.
"""

from ._core import (
    AmbiguousAxisError,
    BoundsError,
    CameraRig,
    ConfigError,
    ContractViolation,
    Error,
    FormatError,
    GenerationFailure,
    InvalidMaskError,
    MissingDepthError,
    NoIntersectionError,
    NumericError,
    ValidationError,
    back_project,
    build_info,
    compare_reports,
    default_model_config,
    default_scene_spec,
    default_train_config,
    disparity_to_depth,
    error_2d,
    error_3d,
    evaluate,
    extract_axis,
    generate_dataset,
    load_sample,
    percentage_change,
    project,
    selftest,
    train,
)

__version__ = build_info()["gammasense"]

"""biasprobe: measure which image features a small CNN relies on.

Apply parameterized feature ablations (color removal, mean-shift texture
weakening, edge blurring, grid shuffling) to a trained classifier's validation
images and report the feature contribution rate per ablation strength.
"""

__version__ = "0.1.0"

from . import ablation, fcr, imagecore, rng, tasks, tinynn
from .ablation import (
    AblationSpec,
    apply,
    detect_edges,
    mean_shift_filter,
    remove_color,
    shuffle_topology,
    sweep_levels,
    weaken_shape,
)
from .fcr import (
    ComparisonReport,
    ExperimentSpec,
    FcrRecord,
    UndefinedBaseline,
    compare_tasks,
    compute_fcr,
    run_sweep,
)
from .imagecore import (
    LabeledImage,
    center_crop_to_multiple,
    load_image,
    resize_bilinear,
    save_image,
    validate_image,
)
from .tasks import (
    AugmentSpec,
    SyntheticTaskSpec,
    TaskSpec,
    augment,
    build_task_from_dirs,
    generate_synthetic_task,
    materialize_task,
)

__all__ = [
    "AblationSpec", "AugmentSpec", "ComparisonReport", "ExperimentSpec", "FcrRecord",
    "LabeledImage", "SyntheticTaskSpec", "TaskSpec", "UndefinedBaseline", "__version__",
    "ablation", "apply", "augment", "build_task_from_dirs", "center_crop_to_multiple",
    "compare_tasks", "compute_fcr", "detect_edges", "fcr", "generate_synthetic_task",
    "imagecore", "load_image", "materialize_task", "mean_shift_filter", "remove_color",
    "resize_bilinear", "rng", "run_sweep", "save_image", "shuffle_topology",
    "sweep_levels", "tasks", "tinynn", "validate_image", "weaken_shape",
]

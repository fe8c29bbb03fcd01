from .fgsm import fgsm, perturb, raw_input_gradient
from .patch import (
    PATCH_MAGIC,
    apply_patch,
    check_patch,
    default_patch_sizes,
    load_patch,
    patch_eval,
    patch_grid,
    patched_examples,
    random_patch,
    sample_placements,
    save_patch,
    train_patch,
)
from .sweep import epsilon_sweep, rises_until_peak, saturation_point
from .types import (
    PLACEMENT_POLICIES,
    STEP_RULES,
    FgsmConfig,
    Patch,
    PatchReport,
    PatchResult,
    PatchTrainConfig,
    SweepRow,
    SweepTable,
)

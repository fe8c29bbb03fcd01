# Re-export the victim model API so callers can import it from the package
from .data_store import MODEL_MAGIC, checkpoint_bytes, load_checkpoint, model_from_bytes, save_checkpoint
from .models import (
    FLATTEN,
    MAXPOOL2,
    RELU,
    ArchitectureSpec,
    LayerSpec,
    Model,
    TrainConfig,
    conv,
    default_spec,
    dense,
)
from .training import sgd_step, train
from .victim import (
    Prediction,
    build_model,
    forward,
    forward_raw,
    input_gradient,
    loss_and_gradients,
    loss_and_input_gradient,
    predict_topk,
    topk_hits,
    topk_indices,
)

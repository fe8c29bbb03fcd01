from .gradcheck import GradCheckReport, grad_check, numeric_gradient, relative_error
from .layers import (
    LayerContext,
    conv2d,
    conv2d_backward,
    dense,
    dense_backward,
    flatten,
    flatten_backward,
    log_softmax,
    maxpool2,
    maxpool2_backward,
    relu,
    relu_backward,
    softmax,
    softmax_xent,
)
from .tensor import DTYPE, Tensor, as_labels, as_tensor

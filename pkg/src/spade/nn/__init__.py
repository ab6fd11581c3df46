from .tensor import (
    Tensor,
    avg_pool2x2,
    bilinear_sample,
    concat,
    conv2d,
    depthwise_conv2d,
    interpolate_bilinear,
    max_pool2x2,
    no_grad,
    softmax,
    stack,
)
from .layers import (
    BatchNorm2d,
    Conv2d,
    DepthwiseConv2d,
    LayerNorm,
    Linear,
    MLP,
    Module,
    ModuleList,
    Parameter,
)
from .attention import CBAM, DeformAttnConfig, DeformableAttention, TransformerBlock
from .network import (
    CCDTConfig,
    CCDTStage,
    DPTDecoderBlock,
    FeatureFusion,
    FeaturePyramid,
    OutputHead,
    RefinementNet,
    ResNetCBAMBlock,
    SOFTPLUS_INV_ONE,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import fd_gradcheck, scalarize

__all__ = [
    "BatchNorm2d",
    "CBAM",
    "CCDTConfig",
    "CCDTStage",
    "Conv2d",
    "DPTDecoderBlock",
    "DeformAttnConfig",
    "DeformableAttention",
    "DepthwiseConv2d",
    "FeatureFusion",
    "FeaturePyramid",
    "LayerNorm",
    "Linear",
    "MLP",
    "Module",
    "ModuleList",
    "OutputHead",
    "Parameter",
    "RefinementNet",
    "ResNetCBAMBlock",
    "SOFTPLUS_INV_ONE",
    "Tensor",
    "TransformerBlock",
    "avg_pool2x2",
    "bilinear_sample",
    "concat",
    "conv2d",
    "depthwise_conv2d",
    "fd_gradcheck",
    "interpolate_bilinear",
    "load_checkpoint",
    "max_pool2x2",
    "no_grad",
    "save_checkpoint",
    "scalarize",
    "softmax",
    "stack",
]

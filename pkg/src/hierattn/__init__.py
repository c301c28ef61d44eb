"""HierAttn: stage and branch attention for skin-lesion classification."""
from .model import ModelConfig, build_model, count_params, model_config
from .tensor import NonFiniteError, Tape, Tensor, make_rng, precision

__version__ = "0.1.0"

from . import checkpoint, layers, optim, tensor
from .tensor import Tensor

__all__ = ["Tensor", "tensor", "layers", "optim", "checkpoint"]

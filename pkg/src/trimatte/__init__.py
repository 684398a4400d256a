"""Trimap-guided image matting with learnable tri-tokens, built on a small numpy autograd."""
from .tensor import Tensor, no_grad
from .model import MattingNet, ModelConfig
from .encoder import EncoderConfig
from .decoder import DecoderConfig
from .trimap import Trimap, TriTokenTable

__version__ = "0.1.0"

"""The full matting network: tri-token encoder + MGF decoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .decoder import Decoder, DecoderConfig
from .encoder import Encoder, EncoderConfig
from .nn import Module
from .tensor import Tensor, no_grad


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    seed: int = 0

    def validate(self) -> None:
        self.encoder.validate()
        self.decoder.validate(len(self.encoder.cnn_channels) - 1 + 4)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(EncoderConfig(**d.get("encoder", {})), DecoderConfig(**d.get("decoder", {})), d.get("seed", 0))


class MattingNet(Module):
    def __init__(self, config: ModelConfig | None = None):
        config = config or ModelConfig()
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.encoder = Encoder(config.encoder, rng)
        ec = config.encoder
        n_cnn = len(ec.cnn_channels)
        channels = ec.cnn_channels[:-1] + ec.stage_channels
        strides = [2 ** (i + 1) for i in range(n_cnn - 1)] + [ec.stage_stride(s) for s in range(1, 5)]
        self.decoder = Decoder(channels, strides, config.decoder, rng)

    def __call__(self, image: Tensor, classes: np.ndarray, probes: dict | None = None) -> Tensor:
        """[N,3,H,W] image and [N,H,W] trimap classes -> [N,1,H,W] alpha in [0,1]."""
        classes = np.asarray(classes)
        if classes.ndim == 2:
            classes = classes[None]
        return self.decoder(self.encoder(image, classes, probes), classes)

    def predict(self, image: np.ndarray, classes: np.ndarray) -> np.ndarray:
        """Inference on numpy arrays; single [3,H,W] or batched [N,3,H,W] input."""
        single = image.ndim == 3
        x = image[None] if single else image
        c = classes[None] if single else classes
        dtype = self.parameters()[0].dtype
        with no_grad():
            out = self(Tensor(np.asarray(x, dtype=dtype)), c).data
        return out[0, 0] if single else out[:, 0]

    def token_tables(self):
        return self.encoder.token_tables()

    def token_parameter_names(self) -> set[str]:
        ids = {id(t.tokens) for t in self.token_tables()}
        return {name for name, p in self.named_parameters() if id(p) in ids}


def copy_shared_parameters(src: Module, dst: Module) -> list[str]:
    """Copy every parameter whose name and shape exist in both models; returns copied names."""
    src_params = dict(src.named_parameters())
    copied = []
    for name, p in dst.named_parameters():
        q = src_params.get(name)
        if q is not None and q.shape == p.shape:
            p.data = q.data.astype(p.dtype, copy=True)
            copied.append(name)
    return copied

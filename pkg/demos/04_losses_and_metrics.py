"""
Training losses and evaluation metrics
======================================
"""
import numpy as np

from trimatte.data import synth_dataset
from trimatte.losses import combine, laplacian_pyramid, reconstruct_pyramid, total_loss
from trimatte.metrics import conn_error, evaluate_sample, grad_error, mse, sad, tt_tp_report
from trimatte.tensor import Tensor

print("weights applied to (1, 1, 1):", combine(1, 1, 1))

s = synth_dataset(1, 64, seed=3)[0]
gt = s.alpha[None, None].astype(np.float64)
blurred = np.clip(gt + 0.1 * np.random.default_rng(0).standard_normal(gt.shape), 0, 1)

loss, parts = total_loss(Tensor(blurred), gt, s.fg[None], s.bg[None], s.image[None], s.unknown_mask()[None, None])
print({k: round(v, 5) for k, v in parts.items()})

# the pyramid inside the Laplacian loss is invertible
pyr = laplacian_pyramid(Tensor(gt), 5)
print("levels", [p.shape[-1] for p in pyr], "reconstruction error",
      np.abs(reconstruct_pyramid(pyr).data.reshape(gt.shape) - gt).max())

unknown = s.unknown_mask()
pred = blurred[0, 0]
print("SAD", sad(pred, s.alpha, unknown), "MSE", mse(pred, s.alpha, unknown))
print("Grad", grad_error(pred, s.alpha, unknown), "Conn", conn_error(pred, s.alpha, unknown))

# a constant 0.5 miss on a 10x10 unknown patch
z = np.zeros((10, 10))
print(sad(z + 0.5, z), mse(z + 0.5, z))

# TT / TP split
corpus = synth_dataset(10, 64, seed=4)
rows = [evaluate_sample(np.clip(c.alpha + 0.05, 0, 1), c.alpha, c.trimap.classes, c.name) for c in corpus]
print(tt_tp_report(rows, [c.trimap.classes for c in corpus]).to_markdown())

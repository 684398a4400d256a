"""
Train briefly, evaluate, run inference and look at attention
============================================================

A few hundred steps on eight synthetic samples is enough to see the loss fall.
Pass a step count as the first argument (default 200).
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from trimatte.checkpoint import load_checkpoint
from trimatte.config import RunConfig
from trimatte.inference import attn_viz, evaluate, infer
from trimatte.netpbm import write_gray
from trimatte.train import corpus_sad, resolve_samples, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
out = Path(tempfile.mkdtemp())

cfg = RunConfig()
cfg.train.steps = steps
cfg.optim.lr = 1e-3
cfg.train.log_every = 0
samples = resolve_samples(cfg)

result = train(cfg, samples, out_dir=out)
trace = result.trace
print(f"loss {trace[0]['total']:.4f} -> {trace[-1]['total']:.4f} over {steps} steps")
print("train SAD", corpus_sad(result.model, samples))

model, manifest = load_checkpoint(result.checkpoint)
print("checkpoint version", manifest["version"], "tensors", len(manifest["tensors"]))

print(evaluate(model, samples).to_markdown())

s = samples[0]
alpha = infer(model, s.image, s.trimap.classes, clamp_known=True)
write_gray(out / "alpha.pgm", alpha)
print("alpha written to", out / "alpha.pgm")

# attention of one unknown pixel in the first stage, then with its class swapped
ys, xs = np.nonzero(s.unknown_mask())
point = (int(ys[len(ys) // 2]), int(xs[len(xs) // 2]))
plain = attn_viz(model, s.image, s.trimap.classes, point, stage=1, block=0)
swapped = attn_viz(model, s.image, s.trimap.classes, point, stage=1, block=0, substitute_class="background")
for h, (a, b) in enumerate(zip(plain, swapped)):
    write_gray(out / f"attn_h{h}.pgm", a)
    print(f"head {h}: nonzero pixels {int((a > 0).sum())}, max byte change after swap {np.abs(a.astype(int) - b).max()}")

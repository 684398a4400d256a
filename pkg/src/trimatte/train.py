"""Training loop: forward, weighted loss, backward, Adam step with warmup + cosine decay."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import RunConfig
from .data import MattingSample, crop_unknown_centered, load_corpus, stack_samples, synth_dataset
from .errors import ConfigError, DivergenceError
from .losses import total_loss
from .metrics import sad
from .model import MattingNet
from .optim import Adam, cosine_lr
from .tensor import Tensor

log = logging.getLogger(__name__)

TRACE_FIELDS = ("step", "lr", "total", "alpha", "comp", "lap")


@dataclass
class TrainResult:
    model: MattingNet
    trace: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None

    def trace_csv(self) -> str:
        return format_trace(self.trace)


def format_trace(trace: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for row in trace:
        w.writerow([row["step"]] + [repr(float(row[k])) for k in TRACE_FIELDS[1:]])
    return buf.getvalue()


def resolve_samples(config: RunConfig) -> list[MattingSample]:
    d = config.data
    if d.manifest:
        samples = load_corpus(d.manifest, split=d.split, seed=d.synth_seed)
    else:
        samples = synth_dataset(d.synth_n, d.synth_size, d.synth_seed, d.tt_ratio)
    if not samples:
        raise ConfigError("training corpus is empty")
    for s in samples:
        if min(s.shape) < d.crop:
            raise ConfigError(f"sample {s.name} ({s.shape}) smaller than crop {d.crop}")
    return samples


def _batches(n: int, batch: int, rng: np.random.Generator):
    """Endless stream of index batches drawn epoch by epoch without replacement."""
    pool: list[int] = []
    while True:
        out = []
        while len(out) < batch:
            if not pool:
                pool = rng.permutation(n).tolist()
            out.append(pool.pop())
        yield out


def train(config: RunConfig, samples: list[MattingSample] | None = None,
          out_dir: str | Path | None = None) -> TrainResult:
    """Train a fresh model. Deterministic for a given config and corpus.

    Raises :class:`DivergenceError` naming the step if the loss becomes non-finite.
    """
    config.validate()
    samples = samples if samples is not None else resolve_samples(config)
    model = MattingNet(config.model)
    o = config.optim
    opt = Adam(model.parameters(), o.lr, (o.beta1, o.beta2), o.eps, o.weight_decay)
    rng = np.random.default_rng(config.train.seed)
    batches = _batches(len(samples), config.train.batch_size, rng)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    dtype = model.parameters()[0].dtype
    result = TrainResult(model)
    steps = config.train.steps
    for step in range(steps):
        picked = []
        for i in next(batches):
            s = samples[i]
            if s.shape != (config.data.crop, config.data.crop):
                s = crop_unknown_centered(s, config.data.crop, rng)
            picked.append(s)
        batch = stack_samples(picked)
        if "fg" not in batch:
            raise ConfigError("training needs foreground/background planes for the compositing loss")
        lr = cosine_lr(step, steps, o.lr, o.warmup_frac, o.min_lr)
        opt.zero_grad()
        pred = model(Tensor(batch["image"].astype(dtype)), batch["classes"])
        loss, parts = total_loss(pred, batch["alpha"].astype(dtype), batch["fg"], batch["bg"], batch["image"],
                                 batch["unknown"], config.loss.weights, config.loss.lap_levels,
                                 config.loss.unknown_only)
        if not math.isfinite(parts["total"]):
            raise DivergenceError(f"non-finite loss {parts['total']} at step {step}")
        loss.backward()
        opt.step(lr)
        result.trace.append({"step": step, "lr": lr, **parts})
        if config.train.log_every and step % config.train.log_every == 0:
            log.info("step %d lr %.3g loss %.5f", step, lr, parts["total"])
        every = config.train.checkpoint_every
        if out is not None and every and (step + 1) % every == 0 and step + 1 < steps:
            save_checkpoint(out / f"step{step + 1:06d}.ckpt", model, config.to_dict())
    if out is not None:
        result.checkpoint = out / "final.ckpt"
        save_checkpoint(result.checkpoint, model, config.to_dict())
        (out / "loss_trace.csv").write_text(result.trace_csv(), encoding="utf-8")
    return result


def corpus_sad(model: MattingNet, samples: list[MattingSample], batch: int = 8) -> float:
    """Mean per-sample SAD (unknown region, /1000) of the model's predictions."""
    vals = []
    for i in range(0, len(samples), batch):
        chunk = samples[i:i + batch]
        b = stack_samples(chunk)
        preds = model.predict(b["image"], b["classes"])
        for s, p in zip(chunk, preds):
            vals.append(sad(p, s.alpha, s.unknown_mask()))
    return float(np.mean(vals))

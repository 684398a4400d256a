"""Evaluation, single-image inference and attention-map probing."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import MattingSample, stack_samples
from .errors import ConfigError
from .metrics import MetricReport, evaluate_sample, tt_tp_report
from .model import MattingNet
from .tensor import Tensor, no_grad
from .trimap import BACKGROUND, FOREGROUND, UNKNOWN

CLASS_NAMES = {"background": BACKGROUND, "unknown": UNKNOWN, "foreground": FOREGROUND}


def _pad_to_multiple(image: np.ndarray, classes: np.ndarray, mult: int):
    """Reflect-pad on the bottom/right so both sides are multiples of ``mult``."""
    h, w = classes.shape
    ph, pw = (-h) % mult, (-w) % mult
    if not (ph or pw):
        return image, classes
    image = np.pad(image, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    classes = np.pad(classes, ((0, ph), (0, pw)), mode="reflect")
    return image, classes


def infer(model: MattingNet, image: np.ndarray, classes: np.ndarray, clamp_known: bool = False) -> np.ndarray:
    """Alpha [H,W] for an RGB [3,H,W] image in [0,1] and its trimap classes.

    Inputs whose sides are not multiples of the encoder stride are reflect-padded
    on the bottom/right and the prediction is cropped back. With ``clamp_known``
    known-foreground pixels are forced to 1 and known-background pixels to 0.
    """
    classes = np.asarray(classes)
    if image.shape[1:] != classes.shape:
        raise ValueError(f"image {image.shape[1:]} and trimap {classes.shape} differ in size")
    h, w = classes.shape
    img_p, cls_p = _pad_to_multiple(image, classes, model.config.encoder.input_multiple)
    alpha = model.predict(img_p, cls_p)[:h, :w].astype(np.float64)
    if clamp_known:
        alpha = alpha.copy()
        alpha[classes == FOREGROUND] = 1.0
        alpha[classes == BACKGROUND] = 0.0
    return alpha


def predict_samples(model: MattingNet, samples: list[MattingSample], batch: int = 8) -> list[np.ndarray]:
    mult = model.config.encoder.input_multiple
    preds = []
    for i in range(0, len(samples), batch):
        chunk = samples[i:i + batch]
        if len({s.shape for s in chunk}) == 1 and all(d % mult == 0 for d in chunk[0].shape):
            b = stack_samples(chunk)
            preds.extend(p.astype(np.float64) for p in model.predict(b["image"], b["classes"]))
        else:
            preds.extend(infer(model, s.image, s.trimap.classes) for s in chunk)
    return preds


def evaluate(model: MattingNet | None, samples: list[MattingSample], oracle: bool = False,
             threshold: float = 0.05, predictions: list[np.ndarray] | None = None) -> MetricReport:
    """Metrics for every sample plus TT/TP strata.

    ``oracle`` scores the ground truth against itself (a pipeline self-check);
    ``predictions`` scores precomputed mattes instead of running the model.
    """
    if oracle:
        predictions = [s.alpha for s in samples]
    elif predictions is None:
        if model is None:
            raise ConfigError("evaluate needs a model unless oracle mode or predictions are given")
        mult = model.config.encoder.input_multiple
        for s in samples:
            if min(s.shape) < mult:
                raise ConfigError(f"sample {s.name} {s.shape} smaller than the model's minimum size {mult}")
        predictions = predict_samples(model, samples)
    rows = [evaluate_sample(p, s.alpha, s.trimap.classes, s.name or str(i))
            for i, (p, s) in enumerate(zip(predictions, samples))]
    return tt_tp_report(rows, [s.trimap.classes for s in samples], threshold)


def write_report(report: MetricReport, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, md_path = out / "metrics.csv", out / "summary.md"
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    md_path.write_text(report.to_markdown(), encoding="utf-8")
    return csv_path, md_path


def substitute_cell(classes: np.ndarray, point: tuple[int, int], stride: int, new_class: int) -> np.ndarray:
    """Rewrite the stride x stride trimap cell holding ``point`` so the feature position sees ``new_class``."""
    y, x = point
    out = classes.copy()
    y0, x0 = (y // stride) * stride, (x // stride) * stride
    out[y0:y0 + stride, x0:x0 + stride] = new_class
    return out


def attention_rows(model: MattingNet, image: np.ndarray, classes: np.ndarray, point: tuple[int, int],
                   stage: int, block: int) -> tuple[np.ndarray, dict]:
    """Softmax row(s) [heads, M*M] of the query at ``point`` in (stage, block), plus the probe record."""
    h, w = classes.shape
    y, x = point
    if not (0 <= y < h and 0 <= x < w):
        raise ValueError(f"query point {point} outside image {h}x{w}")
    enc = model.config.encoder
    if not 1 <= stage <= 4 or not 0 <= block < enc.stage_depths[stage - 1]:
        raise ValueError(f"no block {block} in stage {stage}")
    img_p, cls_p = _pad_to_multiple(image, classes, enc.input_multiple)
    probes = {(stage, block): {}}
    dtype = model.parameters()[0].dtype
    with no_grad():
        model(Tensor(img_p[None].astype(dtype)), cls_p[None], probes)
    probe = probes[(stage, block)]
    stride = enc.stage_stride(stage)
    gh, gw = probe["grid"]
    m = probe["window"]
    fy, fx = y // stride, x // stride
    win = (fy // m) * (gw // m) + fx // m
    row = (fy % m) * m + fx % m
    probe.update(stride=stride, window_index=win, row=row, feature_pos=(fy, fx))
    return probe["attn"][win, :, row, :], probe


def attn_viz(model: MattingNet, image: np.ndarray, classes: np.ndarray, point: tuple[int, int],
             stage: int, block: int, substitute_class: str | int | None = None) -> list[np.ndarray]:
    """One uint8 [H,W] heatmap per head: the query's attention over its window, max scaled to 255.

    ``substitute_class`` rewrites the query's trimap cell before the forward pass.
    """
    classes = np.asarray(classes)
    h, w = classes.shape
    if substitute_class is not None:
        cls = CLASS_NAMES[substitute_class] if isinstance(substitute_class, str) else int(substitute_class)
        classes = substitute_cell(classes, point, model.config.encoder.stage_stride(stage), cls)
    rows, probe = attention_rows(model, image, classes, point, stage, block)
    stride, m = probe["stride"], probe["window"]
    gh, gw = probe["grid"]
    fy, fx = probe["feature_pos"]
    wy, wx = (fy // m) * m, (fx // m) * m
    maps = []
    for head_row in rows:
        grid = np.zeros((gh, gw))
        grid[wy:wy + m, wx:wx + m] = head_row.reshape(m, m)
        full = np.repeat(np.repeat(grid, stride, axis=0), stride, axis=1)[:h, :w]
        peak = full.max()
        scaled = full / peak if peak > 0 else full
        maps.append(np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8))
    return maps

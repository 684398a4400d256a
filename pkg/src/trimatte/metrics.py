"""Matting metrics (SAD, MSE, Grad, Conn) and TT/TP-stratified reports.

All metrics are evaluated over the unknown region of the trimap. An empty
mask falls back to the whole image; :func:`evaluate_sample` flags that case.
SAD, Grad and Conn are divided by 1000, MSE is multiplied by 1000.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .trimap import FOREGROUND, UNKNOWN

METRICS = ("sad", "mse", "grad", "conn")


def _region(pred, gt, mask) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape} and gt {gt.shape} differ")
    if mask is None:
        m = np.ones(pred.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != pred.shape:
            raise ValueError(f"mask {m.shape} does not match {pred.shape}")
        if not m.any():
            m = np.ones(pred.shape, dtype=bool)
    return pred, gt, m


def sad(pred, gt, unknown_mask=None) -> float:
    pred, gt, m = _region(pred, gt, unknown_mask)
    return float(np.abs(pred - gt)[m].sum() / 1000.0)


def mse(pred, gt, unknown_mask=None) -> float:
    pred, gt, m = _region(pred, gt, unknown_mask)
    return float(((pred - gt) ** 2)[m].mean() * 1000.0)


def gaussian_derivative_kernels(sigma: float = 1.4) -> tuple[np.ndarray, np.ndarray]:
    """First-order Gaussian derivative filters (x, y), truncated at 3 sigma, unit L2 norm."""
    half = int(math.ceil(3 * sigma))
    u = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-u ** 2 / (2 * sigma ** 2)) / (sigma * math.sqrt(2 * math.pi))
    dg = -u * g / sigma ** 2
    hx = np.outer(g, dg)
    hx /= np.sqrt((hx * hx).sum())
    return hx, hx.T.copy()


def _correlate_replicate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    r = kernel.shape[0] // 2
    win = np.lib.stride_tricks.sliding_window_view(np.pad(img, r, mode="edge"), kernel.shape)
    return np.einsum("ijkl,kl->ij", win, kernel)


def gradient_magnitude(img: np.ndarray, sigma: float = 1.4) -> np.ndarray:
    hx, hy = gaussian_derivative_kernels(sigma)
    gx = _correlate_replicate(img, hx)
    gy = _correlate_replicate(img, hy)
    return np.sqrt(gx * gx + gy * gy)


def grad_error(pred, gt, unknown_mask=None, sigma: float = 1.4) -> float:
    pred, gt, m = _region(pred, gt, unknown_mask)
    d = gradient_magnitude(pred, sigma) - gradient_magnitude(gt, sigma)
    return float((d * d)[m].sum() / 1000.0)


_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def connectivity_levels(pred: np.ndarray, gt: np.ndarray, step: float = 0.1) -> np.ndarray:
    """Per pixel, the last threshold at which it was still in the largest shared component."""
    thresholds = np.round(np.arange(0.0, 1.0 + step / 2, step), 10)
    level = np.full(pred.shape, -1.0)
    for i in range(1, len(thresholds)):
        both = (pred >= thresholds[i]) & (gt >= thresholds[i])
        # label the transpose so ties between equal-size components go to the
        # first one in column-major scan order, as in the reference benchmark
        labels, count = ndimage.label(both.T, structure=_FOUR_CONNECTED)
        labels = labels.T
        omega = np.zeros(pred.shape, dtype=bool)
        if count:
            sizes = np.bincount(labels.ravel())[1:]
            omega = labels == (int(np.argmax(sizes)) + 1)
        drop = (level == -1) & ~omega
        level[drop] = thresholds[i - 1]
    level[level == -1] = 1.0
    return level


def conn_error(pred, gt, unknown_mask=None, step: float = 0.1) -> float:
    pred, gt, m = _region(pred, gt, unknown_mask)
    level = connectivity_levels(pred, gt, step)
    dp = pred - level
    dg = gt - level
    phi_p = 1.0 - dp * (dp >= 0.15)
    phi_g = 1.0 - dg * (dg >= 0.15)
    return float(np.abs(phi_p - phi_g)[m].sum() / 1000.0)


def evaluate_sample(pred, gt, classes, sample_id: str = "") -> dict:
    """All four metrics for one prediction; ``classes`` is the trimap class map."""
    classes = np.asarray(classes)
    unknown = classes == UNKNOWN
    row = {"sample_id": sample_id}
    for name, fn in (("sad", sad), ("mse", mse), ("grad", grad_error), ("conn", conn_error)):
        row[name] = fn(pred, gt, unknown)
    row["whole_image"] = not unknown.any()
    row["fg_fraction"] = float((classes == FOREGROUND).mean())
    return row


def is_transparent_totally(classes: np.ndarray, threshold: float = 0.05) -> bool:
    """TT when the known-foreground share of the trimap is below ``threshold``."""
    return float((np.asarray(classes) == FOREGROUND).mean()) < threshold


@dataclass
class MetricReport:
    rows: list[dict]
    strata: dict[str, dict[str, float]] = field(default_factory=dict)
    threshold: float = 0.05

    def mean(self, stratum: str | None = None) -> dict[str, float]:
        rows = self.rows if stratum is None else [r for r in self.rows if r.get("stratum") == stratum]
        if not rows:
            return {m: float("nan") for m in METRICS}
        return {m: float(np.mean([r[m] for r in rows])) for m in METRICS}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["sample_id", *METRICS, "stratum"])
        for r in self.rows:
            writer.writerow([r["sample_id"], *(repr(float(r[m])) for m in METRICS), r.get("stratum", "")])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = ["| subset | n | SAD | MSE | Grad | Conn |", "|---|---|---|---|---|---|"]
        for name, key in (("TT", "TT"), ("TP", "TP"), ("TT+TP", None)):
            n = len(self.rows) if key is None else sum(r.get("stratum") == key for r in self.rows)
            means = self.mean(key)
            vals = " | ".join(f"{means[m]:.4f}" for m in METRICS)
            lines.append(f"| {name} | {n} | {vals} |")
        flagged = sum(bool(r.get("whole_image")) for r in self.rows)
        if flagged:
            lines.append("")
            lines.append(f"{flagged} sample(s) had no unknown pixels and were scored on the whole image.")
        return "\n".join(lines) + "\n"


def tt_tp_report(rows: list[dict], trimaps: list[np.ndarray], threshold: float = 0.05) -> MetricReport:
    """Tag every per-sample row TT or TP and collect per-stratum and combined means."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    tagged = []
    for row, classes in zip(rows, trimaps):
        r = dict(row)
        r["stratum"] = "TT" if is_transparent_totally(classes, threshold) else "TP"
        tagged.append(r)
    report = MetricReport(tagged, threshold=threshold)
    report.strata = {"TT": report.mean("TT"), "TP": report.mean("TP"), "TT+TP": report.mean()}
    return report

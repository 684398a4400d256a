"""Compositing, trimap generation, unknown-centred cropping, corpora and synthetic data."""
from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError
from .netpbm import read_gray, read_rgb, write_gray, write_rgb
from .trimap import BACKGROUND, FOREGROUND, UNKNOWN, Trimap, decode_trimap_bytes, encode_trimap_bytes

EPS = 1.0 / 255.0


@dataclass
class MattingSample:
    """Image/alpha/trimap (and optionally fg, bg) at one resolution.

    Colour planes are float [3,H,W] in [0,1]; alpha is [H,W].
    """

    image: np.ndarray
    alpha: np.ndarray
    trimap: Trimap
    fg: np.ndarray | None = None
    bg: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        h, w = self.alpha.shape
        for key in ("image", "fg", "bg"):
            v = getattr(self, key)
            if v is not None and v.shape != (3, h, w):
                raise ValueError(f"{key} shape {v.shape} does not match alpha {(h, w)}")
        if self.trimap.shape != (h, w):
            raise ValueError(f"trimap shape {self.trimap.shape} does not match alpha {(h, w)}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha.shape

    def unknown_mask(self) -> np.ndarray:
        return self.trimap.classes == UNKNOWN


def composite(fg: np.ndarray, bg: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """alpha * fg + (1 - alpha) * bg, per pixel and channel."""
    fg, bg, alpha = np.asarray(fg), np.asarray(bg), np.asarray(alpha)
    if fg.shape != bg.shape:
        raise ValueError(f"fg {fg.shape} and bg {bg.shape} differ")
    if alpha.shape != fg.shape[-2:]:
        raise ValueError(f"alpha {alpha.shape} does not match image {fg.shape[-2:]}")
    if alpha.size and (alpha.min() < 0 or alpha.max() > 1):
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * fg + (1.0 - alpha) * bg


def erode(mask: np.ndarray, kernel_size: int) -> np.ndarray:
    """Binary erosion by a k x k square with replicate padding."""
    k = kernel_size
    if k == 1:
        return mask.copy()
    r = k // 2
    padded = np.pad(mask, r, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    return win.all(axis=(-2, -1))


def dilate(mask: np.ndarray, kernel_size: int) -> np.ndarray:
    return ~erode(~mask, kernel_size)


def check_kernel(kernel_size: int) -> None:
    if kernel_size < 1 or kernel_size % 2 == 0 or kernel_size > 31:
        raise ValueError(f"kernel size must be odd and in [1, 31], got {kernel_size}")


def random_kernel_size(rng: np.random.Generator, low: int = 1, high: int = 30) -> int:
    """Uniform integer in [low, high], rounded up to the next odd size."""
    k = int(rng.integers(low, high + 1))
    return k if k % 2 else k + 1


def generate_trimap(alpha: np.ndarray, kernel_size: int) -> Trimap:
    """Certain fg/bg are the eroded alpha >= 1-eps / alpha <= eps sets; the rest is unknown."""
    check_kernel(kernel_size)
    alpha = np.asarray(alpha)
    if alpha.size and (alpha.min() < 0 or alpha.max() > 1):
        raise ValueError("alpha must lie in [0, 1]")
    fg = erode(alpha >= 1.0 - EPS, kernel_size)
    bg = erode(alpha <= EPS, kernel_size)
    classes = np.full(alpha.shape, UNKNOWN, dtype=np.uint8)
    classes[fg] = FOREGROUND
    classes[bg] = BACKGROUND
    return Trimap(classes)


def _crop(sample: MattingSample, top: int, left: int, size: int) -> MattingSample:
    sl = (slice(top, top + size), slice(left, left + size))
    cut = (lambda a: None if a is None else a[(slice(None),) + sl].copy())
    return replace(sample, image=cut(sample.image), alpha=sample.alpha[sl].copy(),
                   trimap=Trimap(sample.trimap.classes[sl]), fg=cut(sample.fg), bg=cut(sample.bg))


def crop_window(shape: tuple[int, int], crop: int, center: tuple[int, int]) -> tuple[int, int]:
    """Top-left corner of a crop x crop window centred on ``center`` and clamped inside ``shape``."""
    h, w = shape
    top = min(max(center[0] - crop // 2, 0), h - crop)
    left = min(max(center[1] - crop // 2, 0), w - crop)
    return top, left


def crop_unknown_centered(sample: MattingSample, crop: int, rng: np.random.Generator) -> MattingSample:
    """Crop around a uniformly drawn unknown pixel; uniform random crop if there is none."""
    h, w = sample.shape
    if crop > h or crop > w:
        raise ValueError(f"crop {crop} larger than image {h}x{w}")
    ys, xs = np.nonzero(sample.unknown_mask())
    if len(ys):
        i = int(rng.integers(len(ys)))
        top, left = crop_window((h, w), crop, (int(ys[i]), int(xs[i])))
    else:
        top = int(rng.integers(h - crop + 1))
        left = int(rng.integers(w - crop + 1))
    return _crop(sample, top, left, crop)


# -- synthetic corpus -------------------------------------------------------------

def _smooth_field(rng: np.random.Generator, size: int, channels: int, waves: int = 3) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    out = np.empty((channels, size, size))
    for c in range(channels):
        f = np.full((size, size), rng.uniform(0.2, 0.8))
        for _ in range(waves):
            fy, fx = rng.uniform(0.5, 4.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            f += rng.uniform(0.05, 0.25) * np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
        out[c] = f
    return np.clip(out, 0.0, 1.0)


def _alpha_blob(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    cy, cx = rng.uniform(0.3, 0.7, size=2) * size
    ry, rx = rng.uniform(0.15, 0.3, size=2) * size
    d = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    soft = rng.uniform(0.15, 0.5)
    return np.clip((1.0 + soft - d) / (2 * soft), 0.0, 1.0)


def _alpha_ramp(rng, size):
    yy, xx = np.mgrid[0:size, 0:size] / size
    theta = rng.uniform(0, 2 * np.pi)
    t = np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5)
    width = rng.uniform(0.15, 0.4)
    return np.clip(0.5 + t / width, 0.0, 1.0)


def _alpha_strokes(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    a = _alpha_blob(rng, size) * (rng.uniform() < 0.5)
    for _ in range(int(rng.integers(2, 5))):
        p0, p1 = rng.uniform(0.1, 0.9, size=(2, 2)) * size
        d = p1 - p0
        t = np.clip(((yy - p0[0]) * d[0] + (xx - p0[1]) * d[1]) / (d @ d + 1e-9), 0, 1)
        dist = np.hypot(yy - (p0[0] + t * d[0]), xx - (p0[1] + t * d[1]))
        width = rng.uniform(0.8, 2.5)
        a = np.maximum(a, np.exp(-0.5 * (dist / width) ** 2))
    return np.clip(a, 0.0, 1.0)


_SHAPES = (_alpha_blob, _alpha_ramp, _alpha_strokes)


def synth_sample(seed: int, index: int, size: int, transparent: bool) -> MattingSample:
    """One procedural sample; a pure function of (seed, index, size, transparent)."""
    rng = np.random.default_rng([seed, index])
    alpha = _SHAPES[int(rng.integers(len(_SHAPES)))](rng, size)
    if transparent:
        # nothing is fully opaque: the whole object is semi-transparent
        alpha = alpha * rng.uniform(0.3, 0.85)
    fg = _smooth_field(rng, size, 3, waves=2)
    bg = _smooth_field(rng, size, 3, waves=5)
    image = composite(fg, bg, alpha)
    high = max(1, int(round(30 * size / 512)))
    trimap = generate_trimap(alpha, random_kernel_size(rng, 1, high))
    kind = "tt" if transparent else "tp"
    return MattingSample(image.astype(np.float32), alpha.astype(np.float32), trimap,
                         fg.astype(np.float32), bg.astype(np.float32), name=f"synth{index:04d}_{kind}")


def synth_dataset(n: int, size: int = 64, seed: int = 0, tt_ratio: float = 0.3) -> list[MattingSample]:
    """Deterministic procedural corpus; exactly round(n * tt_ratio) samples are fully transparent."""
    if size <= 0 or size % 32:
        raise ValueError(f"synthetic sample size must be a positive multiple of 32, got {size}")
    if not 0.0 <= tt_ratio <= 1.0:
        raise ValueError("tt_ratio must be in [0, 1]")
    n_tt = int(round(n * tt_ratio))
    tt = set(np.random.default_rng(seed).permutation(n)[:n_tt].tolist())
    return [synth_sample(seed, i, size, i in tt) for i in range(n)]


def stack_samples(samples: list[MattingSample]) -> dict[str, np.ndarray]:
    """Batch arrays: image/fg/bg [N,3,H,W], alpha/unknown [N,1,H,W], classes [N,H,W]."""
    out = {
        "image": np.stack([s.image for s in samples]),
        "alpha": np.stack([s.alpha for s in samples])[:, None],
        "classes": np.stack([s.trimap.classes for s in samples]),
    }
    out["unknown"] = (out["classes"] == UNKNOWN)[:, None]
    if all(s.fg is not None and s.bg is not None for s in samples):
        out["fg"] = np.stack([s.fg for s in samples])
        out["bg"] = np.stack([s.bg for s in samples])
    return out


# -- corpora on disk --------------------------------------------------------------

@dataclass
class ManifestRecord:
    split: str
    fg: Path
    alpha: Path
    bgs: list[Path]
    trimap: Path | None = None


def read_manifest(path: str | os.PathLike) -> list[ManifestRecord]:
    """Tab-separated lines: ``split fg alpha bg [bg ...] [trimap:<path>]``; '#' starts a comment.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    root = path.parent
    records = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.rstrip("\n").split("\t")
        trimap = None
        if cols[-1].startswith("trimap:"):
            trimap = root / cols.pop()[len("trimap:"):]
        if len(cols) < 4:
            raise FormatError(f"{path}:{lineno}: need split, fg, alpha and at least one bg")
        if cols[0] not in ("train", "test"):
            raise FormatError(f"{path}:{lineno}: split must be 'train' or 'test', got {cols[0]!r}")
        rec = ManifestRecord(cols[0], root / cols[1], root / cols[2], [root / c for c in cols[3:]], trimap)
        for p in [rec.fg, rec.alpha, *rec.bgs] + ([rec.trimap] if rec.trimap else []):
            if not p.exists():
                raise FormatError(f"{path}:{lineno}: missing file {p}")
        records.append(rec)
    return records


def write_manifest(path: str | os.PathLike, records: list[ManifestRecord]) -> None:
    root = Path(path).parent
    lines = []
    for r in records:
        cols = [r.split, os.path.relpath(r.fg, root), os.path.relpath(r.alpha, root)]
        cols += [os.path.relpath(b, root) for b in r.bgs]
        if r.trimap is not None:
            cols.append("trimap:" + os.path.relpath(r.trimap, root))
        lines.append("\t".join(cols))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_corpus(manifest: str | os.PathLike, split: str | None = None, seed: int = 0,
                kernel_range: tuple[int, int] = (1, 30)) -> list[MattingSample]:
    """Composite every (fg, alpha, bg) combination listed in a manifest.

    Backgrounds larger than the foreground are cropped at the top-left. When a
    record carries no trimap one is generated with a random kernel size.
    """
    rng = np.random.default_rng(seed)
    samples = []
    for i, rec in enumerate(read_manifest(manifest)):
        if split is not None and rec.split != split:
            continue
        fg = read_rgb(rec.fg)
        alpha = read_gray(rec.alpha).astype(np.float32) / 255.0
        if fg.shape[1:] != alpha.shape:
            raise FormatError(f"{rec.fg}: size {fg.shape[1:]} does not match alpha {alpha.shape}")
        fixed = None
        if rec.trimap is not None:
            fixed = Trimap(decode_trimap_bytes(read_gray(rec.trimap)))
        for j, bg_path in enumerate(rec.bgs):
            bg = read_rgb(bg_path)
            h, w = alpha.shape
            if bg.shape[1] < h or bg.shape[2] < w:
                raise FormatError(f"{bg_path}: background smaller than foreground {h}x{w}")
            bg = bg[:, :h, :w]
            trimap = fixed or generate_trimap(alpha, random_kernel_size(rng, *kernel_range))
            image = composite(fg, bg, alpha).astype(np.float32)
            samples.append(MattingSample(image, alpha, trimap, fg, bg, name=f"{rec.fg.stem}_{j}"))
    return samples


def save_corpus(samples: list[MattingSample], out_dir: str | os.PathLike, split: str = "train") -> Path:
    """Write fg/bg (PPM), alpha/trimap (PGM), composite image (PPM) and a manifest."""
    out = Path(out_dir)
    for sub in ("fg", "bg", "alpha", "trimap", "image"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    records = []
    for s in samples:
        paths = {sub: out / sub / f"{s.name}.{'pgm' if sub in ('alpha', 'trimap') else 'ppm'}"
                 for sub in ("fg", "bg", "alpha", "trimap", "image")}
        write_rgb(paths["fg"], s.fg)
        write_rgb(paths["bg"], s.bg)
        write_rgb(paths["image"], s.image)
        write_gray(paths["alpha"], s.alpha)
        write_gray(paths["trimap"], encode_trimap_bytes(s.trimap.classes))
        records.append(ManifestRecord(split, paths["fg"], paths["alpha"], [paths["bg"]], paths["trimap"]))
    manifest = out / "manifest.tsv"
    write_manifest(manifest, records)
    return manifest

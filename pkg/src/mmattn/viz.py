"""Attention dumps, PGM rasters and matplotlib figures."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy import ndimage  # noqa: E402

log = logging.getLogger(__name__)

UPSAMPLE = 16
MID_GRAY = 128


@dataclass
class DumpRow:
    token: str
    step: int
    alpha_txt: np.ndarray
    alpha_im: np.ndarray


def simplex_digits(v: np.ndarray, places: int = 6) -> list[str]:
    """Round to ``places`` decimals; a probability vector keeps summing to exactly 1.

    Largest-remainder rounding: floor every entry, then hand the leftover
    units to the entries with the biggest remainders.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    unit = 10**places
    if v.size == 0 or abs(v.sum() - 1.0) > 1e-6 or v.min() < 0:
        return [f"{x:.{places}f}" for x in v]
    scaled = v * unit
    ints = np.floor(scaled).astype(np.int64)
    short = unit - int(ints.sum())
    if short > 0:
        ints[np.argsort(-(scaled - ints), kind="stable")[:short]] += 1
    return [f"{q // unit}.{q % unit:0{places}d}" for q in ints]


def format_row(token: str, step: int, alpha_txt, alpha_im) -> str:
    txt = ",".join(simplex_digits(alpha_txt))
    im = ",".join(simplex_digits(alpha_im))
    return f"{token}\tt={step}\ttxt:{txt}\tim:{im}"


def parse_row(line: str) -> DumpRow:
    token, step, txt, im = line.rstrip("\n").split("\t")
    if not (step.startswith("t=") and txt.startswith("txt:") and im.startswith("im:")):
        raise ValueError(f"malformed attention dump line: {line!r}")

    def vec(s):
        return np.array([float(x) for x in s.split(",")]) if s else np.zeros(0)

    return DumpRow(token, int(step[2:]), vec(txt[4:]), vec(im[3:]))


def write_dump(path, rows: Sequence[DumpRow]) -> None:
    text = "".join(format_row(r.token, r.step, r.alpha_txt, r.alpha_im) + "\n" for r in rows)
    Path(path).write_text(text, encoding="utf-8")


def read_dump(path) -> list[DumpRow]:
    return [parse_row(ln) for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]


def grid_side(regions: int) -> int | None:
    g = math.isqrt(regions)
    return g if g * g == regions else None


def upsample(grid: np.ndarray, factor: int = UPSAMPLE) -> np.ndarray:
    """Bilinear upsampling with half-pixel centres and clamped edges."""
    return ndimage.zoom(np.asarray(grid, dtype=np.float64), factor, order=1, grid_mode=True, mode="nearest")


def to_gray(values: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255 so the largest weight is white; a flat map is mid-gray."""
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 1e-12 * max(abs(hi), 1.0):
        return np.full(values.shape, MID_GRAY, dtype=np.uint8)
    return np.rint(255.0 * (values - lo) / (hi - lo)).astype(np.uint8)


def attention_raster(alpha_im: np.ndarray, factor: int = UPSAMPLE) -> np.ndarray | None:
    """8-bit raster of a square region grid, or None when the region count is not a square."""
    alpha_im = np.asarray(alpha_im, dtype=np.float64).reshape(-1)
    g = grid_side(alpha_im.size)
    if g is None:
        return None
    return to_gray(upsample(alpha_im.reshape(g, g), factor))


def write_pgm(path, image: np.ndarray) -> None:
    """Binary (P5) greyscale PGM."""
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    parts = blob.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def plot_alignment(path, src_tokens: Sequence[str], rows: Sequence[DumpRow], title: str = "") -> None:
    """Text-attention heatmap on the left, upsampled image maps per output token on the right."""
    n = len(rows)
    txt = np.array([r.alpha_txt for r in rows]) if n else np.zeros((0, len(src_tokens)))
    has_im = n > 0 and rows[0].alpha_im.size > 0 and grid_side(rows[0].alpha_im.size) is not None
    cols = min(n, 6) if has_im else 0
    lines = math.ceil(n / cols) if cols else 0
    fig = plt.figure(figsize=(4 + 1.6 * max(cols, 1), max(3.0, 0.35 * n + 1.5, 1.6 * lines)))
    gs = fig.add_gridspec(max(lines, 1), 1 + max(cols, 1), width_ratios=[2.5] + [1] * max(cols, 1))
    ax = fig.add_subplot(gs[:, 0])
    ax.imshow(txt, cmap="gray", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(src_tokens)))
    ax.set_xticklabels(src_tokens, rotation=60, ha="right", fontsize=8)
    ax.set_yticks(range(n))
    ax.set_yticklabels([r.token for r in rows], fontsize=8)
    ax.set_title(title or "text attention", fontsize=9)
    for k, r in enumerate(rows[: lines * cols]):
        sub = fig.add_subplot(gs[k // cols, 1 + k % cols])
        g = grid_side(r.alpha_im.size)
        sub.imshow(upsample(r.alpha_im.reshape(g, g)), cmap="gray", interpolation="nearest")
        sub.set_title(r.token, fontsize=8)
        sub.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_curves(path, series: dict[str, Sequence[float]], ylabel: str, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, ys in series.items():
        ax.plot(range(1, len(ys) + 1), ys, label=label, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=7, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_entropy(path, reports: dict[str, float], uniform: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(4, 3))
    names = list(reports)
    ax.bar(names, [reports[n] for n in names], color="0.4")
    if uniform is not None:
        ax.axhline(uniform, color="k", linestyle="--", linewidth=1, label="uniform")
        ax.legend(fontsize=7)
    ax.set_ylabel("mean text-attention entropy (nats)")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)

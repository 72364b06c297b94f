"""SSIM / PSNR and per-blur-level evaluation of a generator on a test manifest."""

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from numpy.lib.stride_tricks import sliding_window_view

from .datapipe import read_manifest
from .errors import DataError, EvaluationError
from .imaging import ImageTensor, from_uint8, load_image, quantize

REPORT_HEADER = ["blur_level", "ssim", "psnr", "n_images"]


def _pixels(x):
    if isinstance(x, ImageTensor):
        x = x.data
    return np.asarray(x, dtype=np.float64)


def psnr(a, b, peak=1.0):
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / mse)


@dataclass(frozen=True)
class GaussianWindowSpec:
    size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    peak: float = 1.0

    def kernel_1d(self):
        x = np.arange(self.size, dtype=np.float64) - (self.size - 1) / 2.0
        g = np.exp(-(x ** 2) / (2.0 * self.sigma ** 2))
        return g / g.sum()


def _filter_valid(x, w):
    # separable correlation over the two leading axes, valid positions only
    n = len(w)
    x = sliding_window_view(x, n, axis=0) @ w
    return sliding_window_view(x, n, axis=1) @ w


def ssim(a, b, window=GaussianWindowSpec()):
    """Mean SSIM over all fully-covered window positions, averaged over channels."""
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if min(a.shape[:2]) < window.size:
        raise ValueError(f"image {a.shape[:2]} smaller than the {window.size}px SSIM window")
    c1 = (window.k1 * window.peak) ** 2
    c2 = (window.k2 * window.peak) ** 2
    w = window.kernel_1d()

    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a ** 2
    var_b = _filter_valid(b * b, w) - mu_b ** 2
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    per_channel = (num / den).mean(axis=(0, 1))
    return float(per_channel.mean())


def _mean_psnr(values):
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return math.inf
    return float(np.mean(finite))


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    checkpoint_id: str = ""
    dataset_id: str = ""

    def row(self, level):
        for r in self.rows:
            if r[0] == level:
                return r
        raise KeyError(level)

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_HEADER)
            for level, s, p, n in self.rows:
                writer.writerow([level, repr(float(s)), "inf" if math.isinf(p) else repr(float(p)), n])
        return path

    def format_table(self):
        lines = [
            f"checkpoint: {self.checkpoint_id}",
            f"dataset:    {self.dataset_id}",
            f"{'BL':>5}  {'SSIM':>7}  {'PSNR':>7}  {'n':>5}",
        ]
        for level, s, p, n in self.rows:
            lines.append(f"{level!s:>5}  {s:7.4f}  {p:7.2f}  {n:5d}")
        return "\n".join(lines) + "\n"


def read_report(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            level = rec["blur_level"]
            rows.append((
                level if level == "all" else int(level),
                float(rec["ssim"]),
                float(rec["psnr"]),
                int(rec["n_images"]),
            ))
    return rows


def aggregate(scores):
    """scores: iterable of (level, ssim, psnr). Per-level rows sorted by level,
    then an "all" row averaged over every image."""
    by_level = defaultdict(list)
    for level, s, p in scores:
        by_level[level].append((s, p))
    rows = []
    everything = []
    for level in sorted(by_level):
        vals = by_level[level]
        everything.extend(vals)
        rows.append((
            level,
            float(np.mean([s for s, _ in vals])),
            _mean_psnr([p for _, p in vals]),
            len(vals),
        ))
    rows.append((
        "all",
        float(np.mean([s for s, _ in everything])),
        _mean_psnr([p for _, p in everything]),
        len(everything),
    ))
    return rows


@torch.no_grad()
def restore(generator, blurred):
    """Run the generator on a unit-range image; returns a unit-range image on
    the 8-bit grid, i.e. exactly what a saved restored PNG would hold."""
    x = torch.from_numpy(blurred.to_signed().data).permute(2, 0, 1).unsqueeze(0)
    y = generator(x)[0].permute(1, 2, 0).float().cpu().numpy()
    return from_uint8(quantize(ImageTensor(np.clip((y + 1.0) / 2.0, 0.0, 1.0), "unit")))


def evaluate(model, manifest, out=None, checkpoint_id=None):
    """Score ``model`` on every (sharp, blurred) pair of a test manifest.

    ``model`` is a checkpoint path or a callable mapping a signed NCHW
    tensor to a signed NCHW tensor.
    """
    from .model import generator_from_checkpoint, load_checkpoint

    if isinstance(model, (str, Path)):
        checkpoint_id = checkpoint_id or str(model)
        model = generator_from_checkpoint(load_checkpoint(model))
    elif checkpoint_id is None:
        checkpoint_id = getattr(model, "__name__", type(model).__name__)
    if isinstance(model, torch.nn.Module):
        model.eval()

    try:
        rows = read_manifest(manifest)
    except DataError as exc:
        raise EvaluationError(str(exc)) from exc
    if not rows:
        raise EvaluationError(f"manifest {manifest} lists no images")

    scores = []
    for sharp_path, blurred_path, level in rows:
        for p in (sharp_path, blurred_path):
            if not p.is_file():
                raise EvaluationError(f"manifest references a missing file: {p}")
        sharp = load_image(sharp_path)
        blurred = load_image(blurred_path)
        try:
            restored = restore(model, blurred)
        except (RuntimeError, ValueError) as exc:
            raise EvaluationError(f"generator failed on {blurred_path}: {exc}") from exc
        if restored.shape != sharp.shape:
            raise EvaluationError(
                f"restored image shape {restored.shape} != sharp shape {sharp.shape}"
            )
        scores.append((level, ssim(restored, sharp), psnr(restored, sharp)))

    report = EvalReport(aggregate(scores), str(checkpoint_id), str(manifest))
    if out is not None:
        out = Path(out)
        report.write_csv(out)
        out.with_suffix(".txt").write_text(report.format_table(), encoding="utf-8")
    return report

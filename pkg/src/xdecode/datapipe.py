"""Corpus scanning, curriculum pair construction and offline test-set generation."""

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyCorpus, InvalidRange
from .imaging import (
    IMAGE_EXTENSIONS,
    ImageTensor,
    box_blur,
    center_crop,
    check_blur_level,
    from_uint8,
    load_image,
    quantize,
    resize,
    save_image,
)
from .schedule import sample_kernel

DATASET_KINDS = ("gopro", "kitti", "cityscapes", "pascalvoc", "flat_folder")
EXTREME_LEVELS = (19, 21, 23, 25, 27, 29)
MANIFEST_HEADER = ["sharp_path", "blurred_path", "blur_level"]


def default_preprocessing(kind, image_size=256):
    steps = []
    if kind in ("kitti", "cityscapes"):
        steps.append(("center_crop", 600))
    steps.append(("resize", image_size, image_size))
    return steps


@dataclass
class DatasetSpec:
    root: str
    kind: str = "flat_folder"
    split: str = "train"
    preprocessing: list | None = None
    image_size: int = 256

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise DataError(f"unknown dataset kind {self.kind!r}; expected one of {DATASET_KINDS}")
        if self.split not in ("train", "test"):
            raise DataError(f"split must be 'train' or 'test', got {self.split!r}")
        if self.preprocessing is None:
            self.preprocessing = default_preprocessing(self.kind, self.image_size)
        self.preprocessing = [tuple(step) for step in self.preprocessing]


@dataclass
class MixingConfig:
    blur_percentage: float = 0.90

    def __post_init__(self):
        if not 0.0 <= self.blur_percentage <= 1.0:
            raise InvalidRange(f"blur_percentage must lie in [0, 1], got {self.blur_percentage}")


@dataclass
class PairSample:
    input: ImageTensor
    target: ImageTensor
    is_sharp_pair: bool
    kernel_used: int | None = None


def scan_corpus(spec):
    root = Path(spec.root)
    if not root.is_dir():
        raise DataError(f"corpus root does not exist: {root}")
    paths = sorted(
        p for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not paths:
        raise EmptyCorpus(f"no images found under {root}")
    return paths


def preprocess(img, steps):
    for step in steps:
        name, *args = step
        if name == "center_crop":
            # frames shorter than the crop (e.g. KITTI at 375 px) are reflect-padded
            img = center_crop(img, args[0], pad=True)
        elif name == "resize":
            img = resize(img, args[0], args[1])
        else:
            raise DataError(f"unknown preprocessing step {name!r}")
    return img


def load_corpus(spec, paths=None):
    """Load and preprocess every image of a corpus, in scan order."""
    paths = scan_corpus(spec) if paths is None else paths
    images = []
    for path in paths:
        img = preprocess(load_image(path), spec.preprocessing)
        if img.channels == 1:
            img = ImageTensor(np.repeat(img.data, 3, axis=2), img.range_tag)
        images.append(img)
    return images


def make_pair(sharp, cap, mix, floor, rng):
    if rng.random() < mix.blur_percentage:
        k = sample_kernel(cap, floor, rng)
        return PairSample(box_blur(sharp, k), sharp, False, k)
    return PairSample(sharp, sharp, True, None)


def make_batch(sharp, state, mix, floor, rng):
    """One Bernoulli(blur_percentage) draw per image; blurred pairs get a
    kernel sampled from {floor, ..., state.cap}."""
    if not sharp:
        raise DataError("make_batch needs at least one sharp image")
    cap = state.cap if hasattr(state, "cap") else int(state)
    return [make_pair(img, cap, mix, floor, rng) for img in sharp]


def _blurred_png(sharp_u8, k):
    blurred = box_blur(from_uint8(sharp_u8), k)
    return quantize(blurred)


def generate_extreme_testset(spec, out_dir, levels=EXTREME_LEVELS, seed=0):
    """Write `<stem>_sharp.png`, `<stem>_bl<k>.png` and `manifest.csv`.

    Kernels are pinned to exactly k, so output depends only on the inputs;
    ``seed`` is recorded for provenance and has no effect on pixels.
    """
    levels = sorted({check_blur_level(k) for k in levels})
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise DataError(f"output directory is not writable: {out_dir}")

    paths = scan_corpus(spec)
    stems = [p.stem for p in paths]
    if len(set(stems)) != len(stems):
        # nested folders can repeat basenames; disambiguate by relative path
        stems = [
            "__".join(p.relative_to(spec.root).with_suffix("").parts) for p in paths
        ]

    rows = []
    for path, stem in zip(paths, stems):
        sharp = load_corpus(spec, [path])[0]
        sharp_u8 = quantize(sharp)
        sharp_name = f"{stem}_sharp.png"
        save_image(from_uint8(sharp_u8), out_dir / sharp_name)
        for k in levels:
            blurred_name = f"{stem}_bl{k}.png"
            save_image(from_uint8(_blurred_png(sharp_u8, k)), out_dir / blurred_name)
            rows.append((sharp_name, blurred_name, k))

    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    return manifest


def read_manifest(path):
    """Rows of (sharp_path, blurred_path, level) with paths resolved against
    the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise DataError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
        for rec in reader:
            rows.append((
                base / rec["sharp_path"],
                base / rec["blurred_path"],
                int(rec["blur_level"]),
            ))
    return rows

"""Image container, uniform box blur, crop/resize and PNG/JPEG I/O.

Images are float32 arrays of shape (H, W, C) with C in {1, 3}. Pixel values
live in either the unit range [0, 1] or the signed range [-1, 1].
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CropTooLarge,
    ImageReadError,
    InvalidBlurLevel,
    UnsupportedFormat,
    UnsupportedKernel,
)

RANGES = {"unit": (0.0, 1.0), "signed": (-1.0, 1.0)}
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
MIN_BLUR, MAX_BLUR = 3, 29


@dataclass(frozen=True, eq=False)
class ImageTensor:
    data: np.ndarray
    range_tag: str = "unit"

    def __post_init__(self):
        if self.range_tag not in RANGES:
            raise ValueError(f"unknown range_tag {self.range_tag!r}")
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"expected HxWxC with C in (1, 3), got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must be non-empty")
        lo, hi = RANGES[self.range_tag]
        if data.size and (data.min() < lo or data.max() > hi or not np.isfinite(data).all()):
            raise ValueError(f"values outside the {self.range_tag} range [{lo}, {hi}]")
        object.__setattr__(self, "data", data)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def to_signed(self):
        if self.range_tag == "signed":
            return self
        return ImageTensor(np.clip(self.data * 2.0 - 1.0, -1.0, 1.0), "signed")

    def to_unit(self):
        if self.range_tag == "unit":
            return self
        return ImageTensor(np.clip((self.data + 1.0) / 2.0, 0.0, 1.0), "unit")

    def equals(self, other):
        return (
            self.range_tag == other.range_tag
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


def check_blur_level(k):
    if int(k) != k or k < MIN_BLUR or k % 2 == 0:
        raise InvalidBlurLevel(f"blur level must be an odd integer >= {MIN_BLUR}, got {k}")
    return int(k)


def _box_1d(x, k, axis):
    # running-sum mean over a reflect-101 padded axis
    r = k // 2
    pad = [(0, 0)] * x.ndim
    pad[axis] = (r, r)
    padded = np.pad(x, pad, mode="reflect")
    csum = np.cumsum(padded, axis=axis, dtype=np.float64)
    zero_shape = list(csum.shape)
    zero_shape[axis] = 1
    csum = np.concatenate([np.zeros(zero_shape), csum], axis=axis)
    n = x.shape[axis]
    hi = np.take(csum, np.arange(k, k + n), axis=axis)
    lo = np.take(csum, np.arange(0, n), axis=axis)
    return (hi - lo) / k


def box_blur(img, k):
    """Mean over each k x k neighbourhood, reflect-101 borders, two 1-D passes."""
    k = check_blur_level(k)
    if k >= min(img.height, img.width):
        raise UnsupportedKernel(
            f"kernel {k} must be smaller than the image ({img.height}x{img.width})"
        )
    x = img.data.astype(np.float64)
    out = _box_1d(_box_1d(x, k, axis=0), k, axis=1)
    lo, hi = RANGES[img.range_tag]
    return ImageTensor(np.clip(out, lo, hi).astype(np.float32), img.range_tag)


def center_crop(img, size, pad=False):
    """Crop a centred size x size square; odd remainders drop bottom/right pixels.

    With ``pad=True`` a side shorter than ``size`` is reflect-padded up to
    ``size`` first instead of raising.
    """
    size = int(size)
    if size < 1:
        raise ValueError("crop size must be positive")
    data = img.data
    h, w = data.shape[:2]
    if size > min(h, w):
        if not pad:
            raise CropTooLarge(f"cannot crop {size}x{size} from a {h}x{w} image")
        ph, pw = max(size - h, 0), max(size - w, 0)
        data = np.pad(
            data,
            ((ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2), (0, 0)),
            mode="reflect" if min(h, w) > 1 else "edge",
        )
        h, w = data.shape[:2]
    top = (h - size) // 2
    left = (w - size) // 2
    return ImageTensor(data[top:top + size, left:left + size].copy(), img.range_tag)


def _bilinear_axis(x, out_n, axis):
    in_n = x.shape[axis]
    if in_n == out_n:
        return x
    src = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
    src = np.clip(src, 0.0, in_n - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_n - 1)
    frac = src - i0
    shape = [1] * x.ndim
    shape[axis] = out_n
    frac = frac.reshape(shape)
    return np.take(x, i0, axis=axis) * (1.0 - frac) + np.take(x, i1, axis=axis) * frac


def resize(img, out_h, out_w):
    """Bilinear resize with half-pixel sample centres (align_corners off)."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    x = img.data.astype(np.float64)
    x = _bilinear_axis(_bilinear_axis(x, int(out_h), 0), int(out_w), 1)
    lo, hi = RANGES[img.range_tag]
    return ImageTensor(np.clip(x, lo, hi).astype(np.float32), img.range_tag)


def quantize(img):
    """Round to the 8-bit grid used on disk; returns uint8 HxWxC."""
    return np.round(img.to_unit().data.astype(np.float64) * 255.0).astype(np.uint8)


def from_uint8(arr):
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return ImageTensor(arr.astype(np.float32) / np.float32(255.0), "unit")


def load_image(path):
    path = Path(path)
    if path.suffix.lower() not in IMAGE_EXTENSIONS:
        raise UnsupportedFormat(f"unsupported image format: {path.suffix or path.name}")
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "I;16", "I", "F", "1"):
                im = im.convert("L")
            elif im.mode != "RGB":
                im = im.convert("RGB")
            arr = np.array(im)
    except FileNotFoundError as exc:
        raise ImageReadError(f"cannot read {path}: no such file") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageReadError(f"cannot read {path}: {exc}") from exc
    return from_uint8(arr)


def save_image(img, path):
    path = Path(path)
    ext = path.suffix.lower()
    if ext not in IMAGE_EXTENSIONS:
        raise UnsupportedFormat(f"unsupported image format: {ext or path.name}")
    arr = quantize(img)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    im = Image.fromarray(arr)
    if ext == ".png":
        im.save(path, format="PNG", optimize=False)
    else:
        im.save(path, format="JPEG", quality=95)
    return path

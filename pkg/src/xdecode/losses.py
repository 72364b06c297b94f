"""Generator and discriminator objectives.

Image losses take NCHW tensors in the signed range [-1, 1]; ImageTensor and
numpy inputs are accepted and converted. Score-map losses take raw
(unsquashed) discriminator outputs.
"""

import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError
from .imaging import ImageTensor


IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
# vgg16.features[:16] ends at the ReLU after conv3_3
VGG16_CONV3_3 = 16


@dataclass
class LossWeights:
    lambda_perc: float = 1.0
    lambda_l1: float = 1.0
    lambda_g: float = 30.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ConfigError(f"{name} must be >= 0, got {value}")

    def to_dict(self):
        return asdict(self)


@dataclass
class LossReport:
    perc: float
    l1: float
    hinge_g: float
    hinge_d: float
    total_g: float

    def is_finite(self):
        return all(np.isfinite(v) for v in asdict(self).values())


def _as_tensor(x):
    if isinstance(x, ImageTensor):
        x = x.data
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(np.ascontiguousarray(x))
    return x


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def l1_loss(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b)
    return (a - b).abs().mean()


class FeatureExtractor(nn.Module):
    """Frozen VGG16 truncated after conv3_3's activation.

    ``weights`` is ``"imagenet"`` (torchvision's pretrained weights, which
    must be cached or downloadable), a path to a saved VGG16 state dict,
    ``"random"`` (seeded init, for offline use) or ``"auto"`` (imagenet if
    obtainable, else random with a warning).
    """

    def __init__(self, weights="auto", seed=0):
        super().__init__()
        from torchvision.models import vgg16

        self.source = weights
        if weights in ("imagenet", "auto"):
            try:
                from torchvision.models import VGG16_Weights

                net = vgg16(weights=VGG16_Weights.IMAGENET1K_V1)
                self.source = "imagenet"
            except Exception as exc:
                if weights == "imagenet":
                    raise ConfigError(f"pretrained VGG16 weights unavailable: {exc}") from exc
                warnings.warn(
                    "pretrained VGG16 weights unavailable; perceptual loss uses a "
                    "seeded random VGG16",
                    RuntimeWarning,
                    stacklevel=2,
                )
                net = self._random_vgg(seed)
                self.source = "random"
        elif weights == "random":
            net = self._random_vgg(seed)
        else:
            path = Path(weights)
            if not path.is_file():
                raise ConfigError(f"VGG16 weight file not found: {path}")
            net = vgg16(weights=None)
            net.load_state_dict(torch.load(path, map_location="cpu"))
        self.features = net.features[:VGG16_CONV3_3].eval()
        for p in self.features.parameters():
            p.requires_grad_(False)
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))

    @staticmethod
    def _random_vgg(seed):
        from torchvision.models import vgg16

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            return vgg16(weights=None)

    def train(self, mode=True):
        # stays in eval mode whatever the parent does
        return super().train(False)

    def prepare(self, x):
        unit = (x + 1.0) / 2.0
        return (unit - self.mean) / self.std

    def forward(self, x):
        return self.features(self.prepare(x))


def perceptual_loss(gen, real, phi):
    gen, real = _as_tensor(gen), _as_tensor(real)
    _same_shape(gen, real)
    if phi is None:
        raise ConfigError("perceptual loss needs a feature extractor")
    return (phi(gen) - phi(real)).abs().mean()


def hinge_d(real_scores, fake_scores):
    real_scores, fake_scores = _as_tensor(real_scores), _as_tensor(fake_scores)
    return F.relu(1.0 - real_scores).mean() + F.relu(1.0 + fake_scores).mean()


def hinge_g(fake_scores):
    return -_as_tensor(fake_scores).mean()


def bce_adversarial(real_scores, fake_scores, side):
    """Sigmoid cross-entropy GAN loss on logits; the generator side is the
    non-saturating -log D(G(z)) form."""
    fake_scores = _as_tensor(fake_scores)
    if side == "d":
        real_scores = _as_tensor(real_scores)
        return (
            F.binary_cross_entropy_with_logits(real_scores, torch.ones_like(real_scores))
            + F.binary_cross_entropy_with_logits(fake_scores, torch.zeros_like(fake_scores))
        )
    if side == "g":
        return F.binary_cross_entropy_with_logits(fake_scores, torch.ones_like(fake_scores))
    raise ValueError(f"side must be 'd' or 'g', got {side!r}")


def total_generator_loss(perc, l1, adv_g, weights):
    return weights.lambda_perc * perc + weights.lambda_l1 * l1 + weights.lambda_g * adv_g

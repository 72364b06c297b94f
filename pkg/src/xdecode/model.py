"""U-Net generator, conditional patch discriminator and checkpoint archives."""

import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from .errors import CheckpointMismatch, ConfigError

CHECKPOINT_FORMAT = "xdecode-checkpoint/1"


@dataclass
class GeneratorConfig:
    in_channels: int = 3
    out_channels: int = 3
    base_width: int = 64
    depth: int = 8
    image_size: int = 256

    def validate(self):
        if self.base_width < 1 or self.depth < 1:
            raise ConfigError("generator base_width and depth must be positive")
        if self.image_size % (2 ** self.depth) != 0:
            raise ConfigError(
                f"generator depth {self.depth} cannot halve a {self.image_size}px input "
                f"down to an integer size >= 1"
            )

    def to_dict(self):
        return asdict(self)


@dataclass
class DiscriminatorConfig:
    in_channels: int = 6
    base_width: int = 64
    n_layers: int = 3

    def validate(self):
        if self.base_width < 1 or self.n_layers < 1 or self.in_channels < 1:
            raise ConfigError("discriminator widths and n_layers must be positive")

    def to_dict(self):
        return asdict(self)


def _width(base, i):
    return base * min(2 ** i, 8)


class UNetGenerator(nn.Module):
    """Encoder-decoder with a skip connection at every resolution.

    The encoder halves the resolution ``depth`` times, so inputs must be
    square with side divisible by ``2 ** depth``. The innermost and
    outermost encoder stages carry no normalization (the innermost map is
    1x1 at the design input size).
    """

    def __init__(self, cfg):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        widths = [_width(cfg.base_width, i) for i in range(cfg.depth)]

        self.downs = nn.ModuleList()
        prev = cfg.in_channels
        for i, w in enumerate(widths):
            layers = [] if i == 0 else [nn.LeakyReLU(0.2)]
            use_norm = 0 < i < cfg.depth - 1
            layers.append(nn.Conv2d(prev, w, 4, 2, 1, bias=not use_norm))
            if use_norm:
                layers.append(nn.InstanceNorm2d(w, affine=True))
            self.downs.append(nn.Sequential(*layers))
            prev = w

        # ups[j] maps resolution level j+1 back to level j
        self.ups = nn.ModuleList()
        for j in range(cfg.depth):
            in_ch = widths[j] if j == cfg.depth - 1 else 2 * widths[j]
            if j == 0:
                layers = [nn.ReLU(), nn.ConvTranspose2d(in_ch, cfg.out_channels, 4, 2, 1), nn.Tanh()]
            else:
                layers = [
                    nn.ReLU(),
                    nn.ConvTranspose2d(in_ch, widths[j - 1], 4, 2, 1, bias=False),
                    nn.InstanceNorm2d(widths[j - 1], affine=True),
                ]
            self.ups.append(nn.Sequential(*layers))

    def forward(self, x):
        side = 2 ** self.cfg.depth
        if x.shape[-1] % side or x.shape[-2] % side:
            raise ValueError(f"input sides must be multiples of {side}, got {tuple(x.shape[-2:])}")
        feats = []
        h = x
        for down in self.downs:
            h = down(h)
            feats.append(h)
        h = self.ups[-1](feats[-1])
        for j in range(self.cfg.depth - 2, -1, -1):
            h = self.ups[j](torch.cat([h, feats[j]], dim=1))
        return h


class PatchDiscriminator(nn.Module):
    """Conditional patch critic over (input, candidate); raw unbounded scores."""

    def __init__(self, cfg):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        w = cfg.base_width
        layers = [nn.Conv2d(cfg.in_channels, w, 4, 2, 1), nn.LeakyReLU(0.2)]
        prev = w
        for n in range(1, cfg.n_layers):
            cur = _width(w, n)
            layers += [nn.Conv2d(prev, cur, 4, 2, 1, bias=False),
                       nn.InstanceNorm2d(cur, affine=True), nn.LeakyReLU(0.2)]
            prev = cur
        cur = _width(w, cfg.n_layers)
        layers += [nn.Conv2d(prev, cur, 4, 1, 1, bias=False),
                   nn.InstanceNorm2d(cur, affine=True), nn.LeakyReLU(0.2)]
        layers.append(nn.Conv2d(cur, 1, 4, 1, 1))
        self.net = nn.Sequential(*layers)

    def forward(self, condition, candidate):
        return self.net(torch.cat([condition, candidate], dim=1))


def init_weights(module, std=0.02):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.InstanceNorm2d) and m.affine:
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)
    return module


def build_generator(cfg=None):
    return init_weights(UNetGenerator(cfg or GeneratorConfig()))


def build_discriminator(cfg=None):
    return init_weights(PatchDiscriminator(cfg or DiscriminatorConfig()))


def count_parameters(module):
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def save_checkpoint(path, payload):
    """Atomically write a checkpoint archive (temp file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format": CHECKPOINT_FORMAT, **payload}
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise CheckpointMismatch(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointMismatch(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatch(f"{path} is not a {CHECKPOINT_FORMAT} archive")
    return payload


def generator_from_checkpoint(payload):
    cfg = GeneratorConfig(**payload["generator_config"])
    gen = UNetGenerator(cfg)
    try:
        gen.load_state_dict(payload["generator"])
    except RuntimeError as exc:
        raise CheckpointMismatch(f"generator weights do not fit the architecture: {exc}") from exc
    return gen.eval()

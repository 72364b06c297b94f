"""Curriculum GAN training loop, checkpointing and learning-rate schedule."""

import contextlib
import csv
import errno
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .datapipe import MixingConfig, load_corpus, make_batch
from .errors import ConfigError, TrainingAborted
from .losses import (
    FeatureExtractor,
    LossReport,
    LossWeights,
    bce_adversarial,
    hinge_d,
    hinge_g,
    l1_loss,
    perceptual_loss,
    total_generator_loss,
)
from .model import (
    DiscriminatorConfig,
    GeneratorConfig,
    build_discriminator,
    build_generator,
    load_checkpoint,
    save_checkpoint,
)
from .schedule import CurriculumState, ScheduleConfig, cap_at_epoch

log = logging.getLogger(__name__)

LOG_HEADER = ["step", "epoch", "perc", "l1", "hinge_g", "hinge_d", "total_g"]
CURRICULUM_HEADER = ["step", "epoch", "blur_cap", "lr", "kernels"]
ADAM_BETAS = (0.5, 0.999)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    lr: float = 0.0002
    lr_mode: str = "fixed"
    mixed_precision: bool = False
    seed: int = 0
    image_size: int = 256
    adversarial: str = "hinge"
    kernel_floor: int | None = None
    perceptual_weights: str = "auto"
    device: str = "auto"
    keep_epoch_checkpoints: bool = False
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    mixing: MixingConfig = field(default_factory=MixingConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr_mode not in ("fixed", "scheduled"):
            raise ConfigError(f"lr_mode must be 'fixed' or 'scheduled', got {self.lr_mode!r}")
        if self.adversarial not in ("hinge", "bce"):
            raise ConfigError(f"adversarial must be 'hinge' or 'bce', got {self.adversarial!r}")
        if self.generator.image_size != self.image_size:
            raise ConfigError("generator.image_size must equal image_size")
        self.generator.validate()
        self.discriminator.validate()

    @property
    def floor(self):
        """Smallest kernel drawn for blurred pairs. The fixed baseline pins
        every kernel to b_max."""
        if self.kernel_floor is not None:
            return self.kernel_floor
        if self.schedule.kind == "fixed":
            return self.schedule.b_max
        return self.schedule.b_min

    def to_dict(self):
        return asdict(self)


def lr_schedule(mode, t, cfg):
    """Fixed: cfg.lr. Scheduled: cfg.lr for the first half of training, then
    linear decay reaching 0 at t == cfg.epochs."""
    if t < 0:
        raise ValueError("epoch must be non-negative")
    if mode == "fixed":
        return cfg.lr
    if mode != "scheduled":
        raise ConfigError(f"unknown lr mode {mode!r}")
    half = cfg.epochs // 2
    if t < half:
        return cfg.lr
    return cfg.lr * max(cfg.epochs - t, 0) / (cfg.epochs - half)


def schedule_epoch(cfg, epoch):
    """Zero-based training epoch expressed in the schedule's own numbering."""
    return epoch + 1 if cfg.schedule.epoch_base == "one" else epoch


def resolve_device(name):
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


def _autocast(device, enabled):
    if not enabled:
        return contextlib.nullcontext()
    dtype = torch.float16 if device.type == "cuda" else torch.bfloat16
    return torch.autocast(device_type=device.type, dtype=dtype)


def to_tensors(pairs, device):
    inp = np.stack([p.input.to_signed().data for p in pairs])
    tgt = np.stack([p.target.to_signed().data for p in pairs])
    inp = torch.from_numpy(inp).permute(0, 3, 1, 2).contiguous().to(device)
    tgt = torch.from_numpy(tgt).permute(0, 3, 1, 2).contiguous().to(device)
    return inp, tgt


@dataclass
class Models:
    generator: torch.nn.Module
    discriminator: torch.nn.Module
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    phi: torch.nn.Module | None = None
    scaler: object = None


def build_models(cfg, device=None):
    device = device or resolve_device(cfg.device)
    torch.manual_seed(cfg.seed)
    gen = build_generator(replace(cfg.generator)).to(device)
    disc = build_discriminator(replace(cfg.discriminator)).to(device)
    phi = None
    if cfg.weights.lambda_perc > 0:
        phi = FeatureExtractor(cfg.perceptual_weights, seed=cfg.seed).to(device)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr, betas=ADAM_BETAS)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=ADAM_BETAS)
    scaler = None
    if cfg.mixed_precision and device.type == "cuda":
        scaler = torch.amp.GradScaler("cuda")
    return Models(gen, disc, opt_g, opt_d, phi, scaler)


def _backward_step(loss, opt, scaler):
    opt.zero_grad(set_to_none=True)
    if scaler is None:
        loss.backward()
        opt.step()
    else:
        scaler.scale(loss).backward()
        scaler.step(opt)
        scaler.update()


def train_step(batch, models, cfg):
    """One discriminator update followed by one generator update."""
    inp, tgt = batch
    gen, disc = models.generator, models.discriminator
    device = inp.device
    gen.train()
    disc.train()

    # discriminator
    disc.requires_grad_(True)
    with _autocast(device, cfg.mixed_precision):
        fake = gen(inp)
        real_scores = disc(inp, tgt).float()
        fake_scores = disc(inp, fake.detach()).float()
    if cfg.adversarial == "hinge":
        loss_d = hinge_d(real_scores, fake_scores)
    else:
        loss_d = bce_adversarial(real_scores, fake_scores, "d")
    _backward_step(loss_d, models.opt_d, models.scaler)

    # generator
    disc.requires_grad_(False)
    with _autocast(device, cfg.mixed_precision):
        fake_scores = disc(inp, fake).float()
        feat_loss = None
        if models.phi is not None:
            feat_loss = perceptual_loss(fake.float(), tgt, models.phi).float()
    fake = fake.float()
    adv = hinge_g(fake_scores) if cfg.adversarial == "hinge" else bce_adversarial(None, fake_scores, "g")
    l1 = l1_loss(fake, tgt)
    perc = feat_loss if feat_loss is not None else torch.zeros((), device=device)
    total = total_generator_loss(perc, l1, adv, cfg.weights)
    _backward_step(total, models.opt_g, models.scaler)
    disc.requires_grad_(True)

    parts = (perc.item(), l1.item(), adv.item())
    return LossReport(
        perc=parts[0],
        l1=parts[1],
        hinge_g=parts[2],
        hinge_d=loss_d.item(),
        total_g=total_generator_loss(*parts, cfg.weights),
    )


@dataclass
class TrainResult:
    checkpoint: Path
    log: Path
    curriculum_log: Path
    models: Models
    epochs_done: int


def _checkpoint_payload(cfg, models, epoch, step):
    return {
        "epoch": epoch,
        "step": step,
        "generator": models.generator.state_dict(),
        "discriminator": models.discriminator.state_dict(),
        "opt_g": models.opt_g.state_dict(),
        "opt_d": models.opt_d.state_dict(),
        "scaler": models.scaler.state_dict() if models.scaler is not None else None,
        "generator_config": cfg.generator.to_dict(),
        "discriminator_config": cfg.discriminator.to_dict(),
        "schedule": cfg.schedule.to_dict(),
        "curriculum_epoch": schedule_epoch(cfg, epoch),
        "train_config": cfg.to_dict(),
        # per-epoch streams are re-derived from (seed, epoch)
        "rng": {"seed": cfg.seed, "next_epoch": epoch + 1},
    }


def _open_log(path, header, resume):
    fresh = not resume or not path.exists()
    fh = open(path, "w" if fresh else "a", newline="", encoding="utf-8")
    writer = csv.writer(fh)
    if fresh:
        writer.writerow(header)
    return fh, writer


def train(cfg, corpus, out_dir, resume=None, stop_after=None):
    """Run (or resume) curriculum training.

    Writes ``train_log.csv``, ``curriculum_log.csv`` and
    ``checkpoints/last.pt`` (refreshed every epoch) under ``out_dir``.
    ``stop_after`` ends the run after that many total epochs while keeping
    ``cfg.epochs`` as the horizon for the lr schedule.
    """
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    device = resolve_device(cfg.device)

    if corpus.image_size != cfg.image_size:
        corpus = replace(corpus, image_size=cfg.image_size, preprocessing=None)
    images = load_corpus(corpus)

    models = build_models(cfg, device)
    start_epoch, step = 0, 0
    if resume is not None:
        payload = load_checkpoint(resume)
        models.generator.load_state_dict(payload["generator"])
        models.discriminator.load_state_dict(payload["discriminator"])
        models.opt_g.load_state_dict(payload["opt_g"])
        models.opt_d.load_state_dict(payload["opt_d"])
        if models.scaler is not None and payload.get("scaler"):
            models.scaler.load_state_dict(payload["scaler"])
        start_epoch = payload["epoch"] + 1
        step = payload["step"]

    end_epoch = cfg.epochs if stop_after is None else min(stop_after, cfg.epochs)
    log_path = out_dir / "train_log.csv"
    cur_path = out_dir / "curriculum_log.csv"
    last = ckpt_dir / "last.pt"
    log_fh, log_writer = _open_log(log_path, LOG_HEADER, resume is not None)
    cur_fh, cur_writer = _open_log(cur_path, CURRICULUM_HEADER, resume is not None)
    state = CurriculumState(cfg.schedule, schedule_epoch(cfg, start_epoch))
    try:
        for epoch in range(start_epoch, end_epoch):
            state.epoch = schedule_epoch(cfg, epoch)
            cap = state.cap
            lr = lr_schedule(cfg.lr_mode, epoch, cfg)
            for opt in (models.opt_g, models.opt_d):
                for group in opt.param_groups:
                    group["lr"] = lr
            rng = np.random.default_rng([cfg.seed, epoch])
            order = rng.permutation(len(images))
            for start in range(0, len(order), cfg.batch_size):
                sharp = [images[i] for i in order[start:start + cfg.batch_size]]
                pairs = make_batch(sharp, cap, cfg.mixing, cfg.floor, rng)
                report = train_step(to_tensors(pairs, device), models, cfg)
                log_writer.writerow([step, epoch, report.perc, report.l1,
                                     report.hinge_g, report.hinge_d, report.total_g])
                kernels = " ".join("-" if p.kernel_used is None else str(p.kernel_used) for p in pairs)
                cur_writer.writerow([step, epoch, cap, lr, kernels])
                if not report.is_finite():
                    log_fh.flush()
                    diag = save_checkpoint(ckpt_dir / "diagnostic.pt",
                                           _checkpoint_payload(cfg, models, epoch, step))
                    raise TrainingAborted(
                        f"non-finite loss at step {step} (epoch {epoch}): {report}; "
                        f"diagnostic checkpoint at {diag}"
                    )
                step += 1
            log_fh.flush()
            cur_fh.flush()
            payload = _checkpoint_payload(cfg, models, epoch, step)
            save_checkpoint(last, payload)
            if cfg.keep_epoch_checkpoints:
                save_checkpoint(ckpt_dir / f"epoch_{epoch:03d}.pt", payload)
            log.info("epoch %d done: cap=%d lr=%.3g last=%s", epoch, cap, lr, report)
    except OSError as exc:
        if exc.errno == errno.ENOSPC:
            raise TrainingAborted(f"disk full while training: {exc}") from exc
        raise
    finally:
        log_fh.close()
        cur_fh.close()
    return TrainResult(last, log_path, cur_path, models, end_epoch)


def cap_for_epoch(cfg, epoch):
    return cap_at_epoch(cfg.schedule, schedule_epoch(cfg, epoch))

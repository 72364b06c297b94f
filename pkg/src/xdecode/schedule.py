"""Curriculum blur-level progressions.

Every progression maps an epoch to a *cap*: the largest box-blur kernel a
training sample may receive at that epoch. Kernels are then drawn uniformly
from the odd sizes between a floor and the cap.
"""

import csv
import math
from dataclasses import asdict, dataclass

from .errors import ConfigError, InvalidEpoch, InvalidRange
from .imaging import check_blur_level

KINDS = ("step5", "step10", "linear", "sigmoid", "exponential", "fixed")


@dataclass
class ScheduleConfig:
    kind: str = "step5"
    b_min: int = 3
    b_max: int = 29
    k_growth: float = 0.1
    midpoint: float = 50.0
    ratio: float = 1.15
    step_interval: int = 6
    b0: int | None = None
    epoch_base: str = "zero"

    def __post_init__(self):
        if self.b0 is None:
            self.b0 = self.b_min
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.epoch_base not in ("zero", "one"):
            raise ConfigError(f"epoch_base must be 'zero' or 'one', got {self.epoch_base!r}")
        for name in ("b_min", "b_max", "b0"):
            value = getattr(self, name)
            if int(value) != value or value % 2 == 0 or value < 3:
                raise ConfigError(f"{name} must be an odd integer >= 3, got {value}")
        if not self.b_min <= self.b0 <= self.b_max:
            raise ConfigError("schedule requires b_min <= b0 <= b_max")
        if self.k_growth <= 0:
            raise ConfigError("k_growth must be positive")
        if self.ratio <= 1:
            raise ConfigError("ratio must exceed 1")
        if int(self.step_interval) != self.step_interval or self.step_interval < 1:
            raise ConfigError("step_interval must be a positive integer")

    def to_dict(self):
        return asdict(self)


@dataclass
class CurriculumState:
    config: ScheduleConfig
    epoch: int = 0

    @property
    def cap(self):
        return cap_at_epoch(self.config, self.epoch)

    def advance(self):
        self.epoch += 1
        return self.cap


def round_to_odd(x):
    """Nearest odd integer; exact ties (even integers) go up."""
    return 2 * math.floor((x - 1.0) / 2.0 + 0.5) + 1


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def cap_at_epoch(cfg, t):
    if int(t) != t:
        raise InvalidEpoch(f"epoch must be an integer, got {t!r}")
    t = int(t)
    if cfg.epoch_base == "one":
        t -= 1
    if t < 0:
        raise InvalidEpoch(f"epoch must be non-negative ({cfg.epoch_base}-based), got {t}")

    lo, hi = cfg.b_min, cfg.b_max
    if cfg.kind == "fixed":
        return hi
    if cfg.kind == "step5":
        return min(lo + 2 * (t // 5), hi)
    if cfg.kind == "step10":
        return min(lo + 2 * (t // 10), hi)
    if cfg.kind == "linear":
        return min(lo + 2 * t, hi)
    if cfg.kind == "sigmoid":
        raw = hi * _sigmoid(cfg.k_growth * (t - cfg.midpoint))
        return round_to_odd(min(max(raw, lo), hi))
    if cfg.kind == "exponential":
        grown = cfg.b0 * cfg.ratio ** (t / cfg.step_interval)
        return min(2 * math.floor(grown / 2) + 1, hi)
    raise ConfigError(f"unknown schedule kind {cfg.kind!r}")


def sample_kernel(cap, floor, rng):
    """Uniform draw from the odd sizes {floor, floor + 2, ..., cap}."""
    cap = check_blur_level(cap)
    floor = check_blur_level(floor)
    if floor > cap:
        raise InvalidRange(f"kernel floor {floor} exceeds cap {cap}")
    n_choices = (cap - floor) // 2 + 1
    return floor + 2 * int(rng.integers(n_choices))


def schedule_table(cfg, n_epochs):
    if n_epochs < 1:
        raise ValueError("n_epochs must be >= 1")
    first = 1 if cfg.epoch_base == "one" else 0
    return [(t, cap_at_epoch(cfg, t)) for t in range(first, first + n_epochs)]


def write_schedule_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "blur_cap"])
        writer.writerows(table)
    return path

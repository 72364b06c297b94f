"""TOML experiment files.

Tables mirror the dataclass fields exactly::

    name = "linear-desk"
    test_manifests = ["testsets/kitti/manifest.csv"]

    [corpus]
    root = "data/cityscapes/train"
    kind = "cityscapes"

    [train]
    profile = "desk"
    epochs = 30

    [train.schedule]
    kind = "linear"

Unknown keys are rejected. Relative paths resolve against the file's folder.
"""

import copy
import dataclasses
import sys
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .datapipe import DatasetSpec, MixingConfig
from .errors import ConfigError, DataError, UnknownKeyError
from .losses import LossWeights
from .model import DiscriminatorConfig, GeneratorConfig
from .schedule import ScheduleConfig
from .trainer import TrainConfig

PROFILES = {
    "paper": {},
    "desk": {
        "batch_size": 8,
        "image_size": 64,
        "generator": {"base_width": 16, "depth": 6},
        "discriminator": {"base_width": 16},
    },
}


@dataclass
class ExperimentSpec:
    name: str
    train_corpus: DatasetSpec
    train: TrainConfig = field(default_factory=TrainConfig)
    test_manifests: list = field(default_factory=list)
    runs_dir: str = "runs"
    profile: str = "paper"

    @property
    def run_dir(self):
        return Path(self.runs_dir) / self.name

    @property
    def expected_outputs(self):
        d = self.run_dir
        outputs = [d / "config.toml", d / "checkpoints" / "last.pt", d / "train_log.csv"]
        outputs += [d / f"report_{tag}.csv" for tag in report_tags(self.test_manifests)]
        return outputs


def report_tags(manifests):
    """Short unique names for report files, from the manifests' folders."""
    tags = []
    for m in manifests:
        p = Path(m)
        tag = p.parent.name if p.stem == "manifest" and p.parent.name else p.stem
        base, n = tag or "testset", 1
        while tag in tags:
            n += 1
            tag = f"{base}_{n}"
        tags.append(tag)
    return tags


def _deep_merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _type_ok(value, tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        return any(_type_ok(value, a) for a in typing.get_args(tp))
    if tp is type(None):
        return value is None
    if tp is bool:
        return isinstance(value, bool)
    if tp is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if tp is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tp is str:
        return isinstance(value, str)
    if tp is list or origin is list:
        return isinstance(value, list)
    return True


def build(cls, data, where):
    """Instantiate dataclass ``cls`` from a dict, rejecting unknown keys and
    mistyped values. ``where`` is the dotted path used in messages."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for key, value in data.items():
        path = f"{where}.{key}" if where else key
        if key not in known:
            raise UnknownKeyError(path)
        tp = hints[key]
        if dataclasses.is_dataclass(tp):
            kwargs[key] = build(tp, value, path)
            continue
        if not _type_ok(value, tp):
            raise ConfigError(
                f"type mismatch for {path}: expected {getattr(tp, '__name__', tp)}, "
                f"got {type(value).__name__} ({value!r})"
            )
        if tp is float and isinstance(value, int):
            value = float(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (ConfigError, DataError):
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where or 'config'}: {exc}") from exc


def _resolve(path, base):
    p = Path(path).expanduser()
    return str(p if p.is_absolute() else (base / p).resolve())


def spec_from_dict(data, base_dir="."):
    base = Path(base_dir)
    data = dict(data)
    allowed = {"name", "corpus", "train", "test_manifests", "runs_dir"}
    for key in data:
        if key not in allowed:
            raise UnknownKeyError(key)
    if "corpus" not in data:
        raise ConfigError("config needs a [corpus] table")

    train = dict(data.get("train", {}))
    profile = train.pop("profile", "paper")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {tuple(PROFILES)}")
    train = _deep_merge(PROFILES[profile], train)
    image_size = train.get("image_size", TrainConfig.image_size)
    train.setdefault("generator", {}).setdefault("image_size", image_size)
    train_cfg = build(TrainConfig, train, "train")

    corpus = dict(data["corpus"])
    if "root" not in corpus:
        raise ConfigError("corpus.root is required")
    corpus["root"] = _resolve(corpus["root"], base)
    corpus.setdefault("image_size", train_cfg.image_size)
    train_corpus = build(DatasetSpec, corpus, "corpus")

    manifests = data.get("test_manifests", [])
    if not isinstance(manifests, list) or not all(isinstance(m, str) for m in manifests):
        raise ConfigError("test_manifests must be a list of paths")
    name = data.get("name", Path(corpus["root"]).name + "-" + train_cfg.schedule.kind)
    if not isinstance(name, str) or not name or "/" in name:
        raise ConfigError(f"invalid experiment name {name!r}")
    runs_dir = data.get("runs_dir", "runs")
    if not isinstance(runs_dir, str):
        raise ConfigError("runs_dir must be a string")
    return ExperimentSpec(
        name=name,
        train_corpus=train_corpus,
        train=train_cfg,
        test_manifests=[_resolve(m, base) for m in manifests],
        runs_dir=_resolve(runs_dir, base),
        profile=profile,
    )


def parse_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from exc
    return spec_from_dict(data, path.parent)


def _drop_none(obj):
    if isinstance(obj, dict):
        return {k: _drop_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_drop_none(v) for v in obj]
    return obj


def spec_to_dict(spec):
    corpus = dataclasses.asdict(spec.train_corpus)
    corpus["preprocessing"] = [list(s) for s in spec.train_corpus.preprocessing]
    train = {"profile": spec.profile, **spec.train.to_dict()}
    return _drop_none({
        "name": spec.name,
        "runs_dir": str(spec.runs_dir),
        "test_manifests": [str(m) for m in spec.test_manifests],
        "corpus": corpus,
        "train": train,
    })


def serialize(spec):
    return tomli_w.dumps(spec_to_dict(spec))


def specs_equal(a, b):
    return spec_to_dict(a) == spec_to_dict(b)

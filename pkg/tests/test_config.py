import pytest

from xdecode.config import parse_config, report_tags, serialize, spec_from_dict, specs_equal
from xdecode.errors import ConfigError, UnknownKeyError
from xdecode.trainer import TrainConfig


def write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


MINIMAL = """
[corpus]
root = "data"

[train.schedule]
kind = "sigmoid"
"""


def test_minimal_defaults(tmp_path):
    spec = parse_config(write(tmp_path, MINIMAL))
    cfg = spec.train
    assert cfg.schedule.kind == "sigmoid"
    assert (cfg.epochs, cfg.batch_size, cfg.lr, cfg.lr_mode) == (100, 256, 0.0002, "fixed")
    assert (cfg.schedule.b_min, cfg.schedule.b_max) == (3, 29)
    assert cfg.mixing.blur_percentage == 0.9
    w = cfg.weights
    assert (w.lambda_perc, w.lambda_l1, w.lambda_g) == (1.0, 1.0, 30.0)
    assert cfg.generator.base_width == 64 and cfg.image_size == 256
    assert spec.train_corpus.root == str((tmp_path / "data").resolve())
    assert spec.name == "data-sigmoid" and spec.profile == "paper"


def test_desk_profile(tmp_path):
    spec = parse_config(write(tmp_path, '[corpus]\nroot = "d"\n[train]\nprofile = "desk"\n'))
    cfg = spec.train
    assert (cfg.batch_size, cfg.image_size) == (8, 64)
    assert cfg.generator.base_width == 16 and cfg.discriminator.base_width == 16
    assert cfg.generator.image_size == 64 and spec.train_corpus.image_size == 64


def test_profile_override(tmp_path):
    text = '[corpus]\nroot = "d"\n[train]\nprofile = "desk"\nbatch_size = 4\n'
    assert parse_config(write(tmp_path, text)).train.batch_size == 4


def test_unknown_key_named(tmp_path):
    text = '[corpus]\nroot = "d"\n[train.mixing]\nblur_percentge = 0.5\n'
    with pytest.raises(UnknownKeyError) as exc:
        parse_config(write(tmp_path, text))
    assert "blur_percentge" in str(exc.value)
    assert exc.value.exit_code == 2


def test_unknown_top_level(tmp_path):
    with pytest.raises(UnknownKeyError):
        parse_config(write(tmp_path, 'foo = 1\n' + MINIMAL))


def test_type_mismatch(tmp_path):
    text = '[corpus]\nroot = "d"\n[train]\nepochs = "ten"\n'
    with pytest.raises(ConfigError, match="train.epochs"):
        parse_config(write(tmp_path, text))


def test_bool_is_not_int(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, '[corpus]\nroot = "d"\n[train]\nepochs = true\n'))


def test_parse_error_has_line(tmp_path):
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(write(tmp_path, '[corpus]\nroot = "d"\nepochs = = 3\n'))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "none.toml")


def test_invalid_values(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, '[corpus]\nroot = "d"\n[train.schedule]\nkind = "cosine"\n'))
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, '[corpus]\nroot = "d"\n[train]\nprofile = "huge"\n'))


def test_round_trip(tmp_path):
    text = """
name = "trip"
test_manifests = ["ts/kitti/manifest.csv", "ts/gopro/manifest.csv"]

[corpus]
root = "data"
kind = "cityscapes"

[train]
profile = "desk"
epochs = 7
lr_mode = "scheduled"
kernel_floor = 5

[train.schedule]
kind = "exponential"
ratio = 1.2

[train.weights]
lambda_g = 10
"""
    spec = parse_config(write(tmp_path, text))
    again = parse_config(write(tmp_path, serialize(spec), "copy.toml"))
    assert specs_equal(spec, again)
    assert again.train.weights.lambda_g == 10.0
    assert again.train_corpus.preprocessing == [("center_crop", 600), ("resize", 64, 64)]


def test_round_trip_without_optional_values(tmp_path):
    spec = parse_config(write(tmp_path, MINIMAL))
    assert specs_equal(spec, parse_config(write(tmp_path, serialize(spec), "copy.toml")))


def test_spec_from_dict_requires_corpus():
    with pytest.raises(ConfigError):
        spec_from_dict({"train": {}})


def test_report_tags():
    assert report_tags(["a/kitti/manifest.csv", "b/kitti/manifest.csv", "c/gopro.csv"]) == [
        "kitti", "kitti_2", "gopro"]


def test_expected_outputs(tmp_path):
    spec = parse_config(write(tmp_path, 'name = "x"\ntest_manifests = ["t/k/manifest.csv"]\n' + MINIMAL))
    names = [p.name for p in spec.expected_outputs]
    assert names == ["config.toml", "last.pt", "train_log.csv", "report_k.csv"]
    assert isinstance(spec.train, TrainConfig)


def test_profiles_not_mutated(tmp_path):
    from xdecode.config import PROFILES

    parse_config(write(tmp_path, '[corpus]\nroot = "d"\n[train]\nprofile = "desk"\nimage_size = 32\n'
                                 '[train.generator]\ndepth = 5\n'))
    assert PROFILES["desk"]["generator"] == {"base_width": 16, "depth": 6}
    assert parse_config(write(tmp_path, '[corpus]\nroot = "d"\n[train]\nprofile = "desk"\n')).train.image_size == 64

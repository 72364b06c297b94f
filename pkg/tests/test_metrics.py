import math

import numpy as np
import pytest
import torch

from xdecode.datapipe import DatasetSpec, generate_extreme_testset, read_manifest
from xdecode.errors import EvaluationError
from xdecode.imaging import ImageTensor, load_image
from xdecode.metrics import (
    GaussianWindowSpec,
    aggregate,
    evaluate,
    psnr,
    read_report,
    ssim,
)

from oracles import definitional_ssim, make_toy_corpus, scalar_psnr


class TestPSNR:
    def test_identical_is_inf(self):
        a = np.random.default_rng(0).uniform(0, 1, (8, 8, 3))
        assert psnr(a, a) == math.inf

    def test_closed_form(self):
        a = np.zeros((10, 10))
        b = np.full((10, 10), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_scalar_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(0, 1, (8, 8, 3)), rng.uniform(0, 1, (8, 8, 3))
        assert abs(psnr(a, b) - scalar_psnr(a, b)) <= 1e-6

    def test_monotone_in_noise(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0.2, 0.8, (32, 32, 3))
        noise = rng.standard_normal(a.shape)
        values = [psnr(a, a + amp * noise) for amp in (0.01, 0.02, 0.05, 0.1)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSSIM:
    def test_identical(self):
        a = np.random.default_rng(0).uniform(0, 1, (20, 24, 3))
        assert abs(ssim(a, a) - 1.0) <= 1e-9

    def test_constant_pair_closed_form(self):
        c1 = 1e-4
        assert abs(ssim(np.zeros((16, 16)), np.ones((16, 16))) - c1 / (1 + c1)) <= 1e-9

    @pytest.mark.parametrize("seed", range(3))
    def test_definitional_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(0, 1, (32, 32, 3)), rng.uniform(0, 1, (32, 32, 3))
        assert abs(ssim(a, b) - definitional_ssim(a, b)) <= 1e-6

    def test_correlated_pair_against_oracle(self):
        rng = np.random.default_rng(9)
        a = rng.uniform(0, 1, (24, 24, 1))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        assert abs(ssim(a, b) - definitional_ssim(a, b)) <= 1e-6

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = rng.uniform(0, 1, (32, 32, 3)), rng.uniform(0, 1, (32, 32, 3))
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-9

    def test_window_weights(self):
        w = GaussianWindowSpec().kernel_1d()
        assert len(w) == 11 and abs(w.sum() - 1) < 1e-12 and w.argmax() == 5

    def test_too_small(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_range(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(0, 1, (16, 16))
        assert -1 <= ssim(a, 1 - a) <= 1


class TestAggregate:
    def test_all_row_is_mean_of_level_means(self):
        scores = [(19, 0.5, 20.0), (19, 0.7, 22.0), (25, 0.3, 18.0), (25, 0.1, 16.0)]
        rows = aggregate(scores)
        assert [r[0] for r in rows] == [19, 25, "all"]
        level_means = [rows[0][1], rows[1][1]]
        assert rows[2][1] == pytest.approx(np.mean(level_means))
        assert rows[2][3] == 4

    def test_inf_psnr_excluded_unless_all_identical(self):
        rows = aggregate([(3, 1.0, math.inf), (3, 0.9, 30.0)])
        assert rows[0][2] == 30.0
        rows = aggregate([(3, 1.0, math.inf), (3, 1.0, math.inf)])
        assert rows[0][2] == math.inf


@pytest.fixture(scope="module")
def testset(tmp_path_factory):
    root = make_toy_corpus(tmp_path_factory.mktemp("sharp"), n=3, size=32, seed=5)
    out = tmp_path_factory.mktemp("testset")
    return generate_extreme_testset(DatasetSpec(str(root), image_size=32), out, [3, 9, 15])


def identity(x):
    return x


class TestEvaluate:
    def test_identity_model_scores_blurred_input(self, testset):
        report = evaluate(identity, testset)
        for level in (3, 9, 15):
            direct = []
            for sharp_p, blurred_p, k in read_manifest(testset):
                if k == level:
                    s, b = load_image(sharp_p), load_image(blurred_p)
                    direct.append((ssim(b, s), psnr(b, s)))
            row = report.row(level)
            assert abs(row[1] - np.mean([d[0] for d in direct])) <= 1e-6
            assert abs(row[2] - np.mean([d[1] for d in direct])) <= 1e-4
            assert row[3] == 3

    def test_oracle_model(self, testset):
        rows = read_manifest(testset)
        lookup = {}
        for sharp_p, blurred_p, _ in rows:
            lookup[load_image(blurred_p).data.tobytes()] = load_image(sharp_p)

        def oracle(x):
            unit = ((x[0].permute(1, 2, 0).numpy() + 1) / 2).astype(np.float32)
            # recover the exact stored blurred pixels to find the paired sharp image
            key = (np.round(unit * 255) / np.float32(255)).astype(np.float32).tobytes()
            sharp = lookup[key].to_signed().data
            return torch.from_numpy(sharp).permute(2, 0, 1).unsqueeze(0)

        report = evaluate(oracle, testset)
        for level, s, p, _ in report.rows:
            assert s == pytest.approx(1.0, abs=1e-9)
            assert p == math.inf

    def test_all_row_equal_counts(self, testset):
        report = evaluate(identity, testset)
        per_level = [r[1] for r in report.rows if r[0] != "all"]
        assert report.row("all")[1] == pytest.approx(np.mean(per_level), abs=1e-12)

    def test_deterministic(self, testset):
        assert evaluate(identity, testset).rows == evaluate(identity, testset).rows

    def test_csv_and_table(self, testset, tmp_path):
        out = tmp_path / "report.csv"
        report = evaluate(identity, testset, out=out)
        lines = out.read_text().splitlines()
        assert lines[0] == "blur_level,ssim,psnr,n_images"
        assert len(lines) == 5
        assert read_report(out) == report.rows
        assert "BL" in out.with_suffix(".txt").read_text()

    def test_inf_written_as_sentinel(self, tmp_path):
        from xdecode.metrics import EvalReport

        out = EvalReport([(3, 1.0, math.inf, 2)]).write_csv(tmp_path / "r.csv")
        assert out.read_text().splitlines()[1] == "3,1.0,inf,2"

    def test_missing_file(self, testset, tmp_path):
        import shutil

        copy = tmp_path / "ts"
        shutil.copytree(testset.parent, copy)
        next(copy.glob("*_bl9.png")).unlink()
        with pytest.raises(EvaluationError):
            evaluate(identity, copy / "manifest.csv")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(EvaluationError):
            evaluate(identity, tmp_path / "manifest.csv")

    def test_checkpoint_mismatch(self, tmp_path, testset):
        from xdecode.errors import CheckpointMismatch
        from xdecode.model import GeneratorConfig, build_generator, save_checkpoint

        gen = build_generator(GeneratorConfig(base_width=4, depth=3, image_size=32))
        bad = dict(gen.state_dict())
        bad.pop(next(iter(bad)))
        path = save_checkpoint(tmp_path / "c.pt", {
            "generator": bad,
            "generator_config": GeneratorConfig(base_width=4, depth=3, image_size=32).to_dict(),
        })
        with pytest.raises(CheckpointMismatch):
            evaluate(path, testset)
        junk = tmp_path / "junk.pt"
        torch.save({"hello": 1}, junk)
        with pytest.raises(CheckpointMismatch):
            evaluate(junk, testset)

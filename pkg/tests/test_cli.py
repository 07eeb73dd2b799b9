import csv

import numpy as np
import pytest

from wavesr import cli, trainer as tr
from wavesr.data import ImageBuffer, load_image, save_image

TINY = ["--features", "4", "--blocks", "1", "--disc-channels", "2", "--crop", "16", "--batch", "2", "--quiet"]


@pytest.fixture
def toy(tmp_path, natural_image):
    d = tmp_path / "toy"
    d.mkdir()
    for i in range(3):
        save_image(d / f"im{i}.png", natural_image[:, 40 * i : 40 * i + 40, :40])
    return d


def test_version(capsys):
    assert cli.main(["version"]) == 0
    assert capsys.readouterr().out.startswith("wavesr ")


def test_usage_errors():
    assert cli.main([]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["sr", "--bogus"]) == 2


def test_train_deterministic(tmp_path, toy):
    out = tmp_path / "run"
    blobs = []
    for _ in range(2):
        rc = cli.main(["train", "--data", str(toy), "--iters", "2", "--seed", "1", "--out", str(out)] + TINY)
        assert rc == 0
        blobs.append((out / "final.wsr").read_bytes())
    assert blobs[0] == blobs[1]
    rows = list(csv.reader(open(out / "loss.csv")))
    assert rows[0] == ["iter", "l_d", "l_c", "l_a", "l_wavelet", "l_total"] and len(rows) == 3


def test_train_config_file_and_flags(tmp_path, toy):
    cfg = tmp_path / "c.txt"
    cfg.write_text(f"data = {toy}\niterations = 1\nlearning_rate = 0.0002\n")
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg), "--no-adv", "--out", str(out)] + TINY) == 0
    saved = tr.TrainConfig.load(out / "config.txt")
    assert saved.lambda_adv == 0.0 and saved.features == 4 and saved.iterations == 1


def test_train_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("lerning_rate = 1\n")
    assert cli.main(["train", "--config", str(cfg)]) == 2
    assert "lerning_rate" in capsys.readouterr().err


def test_train_missing_dataset(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    assert cli.main(["train", "--data", str(missing), "--iters", "1"] + TINY) == 1
    assert str(missing) in capsys.readouterr().err


def test_train_paper_flags_accepted(tmp_path):
    args = cli.build_parser().parse_args(["train", "--lr", "0.0002", "--batch", "16", "--crop", "88"])
    config = cli._train_config(args)
    assert (config.learning_rate, config.batch_size, config.crop_size) == (2e-4, 16, 88)


def test_train_resume(tmp_path, toy):
    out = tmp_path / "r"
    base = ["train", "--data", str(toy), "--seed", "1", "--out", str(out)] + TINY
    assert cli.main(base + ["--iters", "1"]) == 0
    assert cli.main(base + ["--iters", "2", "--resume", str(out / "final.wsr")]) == 0
    assert len((out / "loss.csv").read_text().splitlines()) == 3
    # without repeating the model flags, the stored configuration is reused
    resume = ["train", "--iters", "3", "--quiet", "--resume", str(out / "final.wsr")]
    assert cli.main(resume) == 0
    assert tr.TrainConfig.load(out / "config.txt").features == 4
    assert len((out / "loss.csv").read_text().splitlines()) == 4


@pytest.fixture
def model(tmp_path, toy):
    out = tmp_path / "m"
    assert cli.main(["train", "--data", str(toy), "--iters", "1", "--out", str(out)] + TINY) == 0
    return out / "final.wsr"


def test_sr_output_is_4x_and_deterministic(tmp_path, model, natural_image):
    src = tmp_path / "in.png"
    save_image(src, natural_image[:, :22, :22])
    assert cli.main(["sr", "--model", str(model), "--in", str(src), "--out", str(tmp_path / "a.png")]) == 0
    assert cli.main(["sr", "--model", str(model), "--in", str(src), "--out", str(tmp_path / "b.png")]) == 0
    img = load_image(tmp_path / "a.png")
    assert (img.height, img.width) == (88, 88)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_sr_zero_model_is_black(tmp_path, natural_image):
    t = tr.Trainer(tr.TrainConfig(features=4, blocks=1, disc_channels=2))
    for _, p in t.gen.named_parameters():
        p.data = np.zeros(p.shape)
    tr.save_checkpoint(tmp_path / "zero.wsr", t)
    save_image(tmp_path / "in.png", natural_image[:, :16, :16])
    assert cli.main(["sr", "--model", str(tmp_path / "zero.wsr"), "--in", str(tmp_path / "in.png"),
                     "--out", str(tmp_path / "o.png")]) == 0
    assert not load_image(tmp_path / "o.png").pixels.any()


def test_sr_missing_inputs(tmp_path, model):
    assert cli.main(["sr", "--model", str(tmp_path / "none.wsr"), "--in", "x.png", "--out", "y.png"]) == 1
    assert cli.main(["sr", "--model", str(model), "--in", str(tmp_path / "none.png"), "--out", "y.png"]) == 1


def test_eval_identical_dirs(tmp_path, toy, capsys):
    report = tmp_path / "r.csv"
    assert cli.main(["eval", "--sr", str(toy), "--hr", str(toy), "--csv", str(report)]) == 0
    rows = list(csv.reader(open(report)))
    assert rows[0] == ["id", "psnr", "ssim", "fsim", "uiq", "lbp_chi2"]
    assert [r[0] for r in rows[1:]] == ["im0.png", "im1.png", "im2.png"]
    assert all(float(r[1]) == 99.0 and float(r[2]) == 1.0 for r in rows[1:])
    assert "mean" in capsys.readouterr().out


def test_eval_modes_differ(tmp_path, natural_image, capsys):
    hr, sr = tmp_path / "hr", tmp_path / "sr"
    hr.mkdir()
    sr.mkdir()
    save_image(hr / "a.png", natural_image)
    noisy = np.clip(natural_image + np.random.default_rng(0).normal(0, 0.05, natural_image.shape), 0, 1)
    save_image(sr / "a.png", noisy)
    psnrs = []
    for mode in ("y", "rgb"):
        cli.main(["eval", "--sr", str(sr), "--hr", str(hr), "--mode", mode, "--csv", str(tmp_path / f"{mode}.csv")])
        psnrs.append(float(list(csv.reader(open(tmp_path / f"{mode}.csv")))[1][1]))
    assert psnrs[0] != psnrs[1]


def test_wpt_tiles_and_inverse(tmp_path, natural_image, capsys):
    src = tmp_path / "in.png"
    save_image(src, natural_image[:, :64, :48])
    assert cli.main(["wpt", "--in", str(src), "--out", str(tmp_path / "t.png"), "--inverse", str(tmp_path / "inv")]) == 0
    out = capsys.readouterr().out
    err = float(out.split("max reconstruction error")[1])
    assert err < 1e-10
    tiles = load_image(tmp_path / "t.png")
    assert (tiles.height, tiles.width) == (64, 48)
    assert (tmp_path / "inv" / "coefficients.wsr").exists()
    np.testing.assert_array_equal(load_image(tmp_path / "inv" / "reconstruction.png").pixels, load_image(src).pixels)


def test_wpt_constant_image(tmp_path):
    src = tmp_path / "c.png"
    save_image(src, ImageBuffer(np.full((16, 16, 3), 77, dtype=np.uint8)))
    assert cli.main(["wpt", "--in", str(src), "--out", str(tmp_path / "t.png")]) == 0
    px = load_image(tmp_path / "t.png").pixels[..., 0]
    for b in range(16):
        r, c = divmod(b, 4)
        tile = px[4 * r : 4 * r + 4, 4 * c : 4 * c + 4]
        assert np.all(tile == tile[0, 0])
        if b:
            assert tile[0, 0] == 128


def test_wpt_indivisible(tmp_path, natural_image, capsys):
    src = tmp_path / "odd.png"
    save_image(src, natural_image[:, :16, :10])
    assert cli.main(["wpt", "--in", str(src), "--out", str(tmp_path / "t.png")]) == 1
    assert "10" in capsys.readouterr().err

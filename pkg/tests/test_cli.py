import hashlib

import numpy as np
import pytest

from affact.cli import main
from affact.config import ConfigError, RunConfig, parse_config_text
from affact.evaluation import ErrorTable, emit_table, parse_table

SMALL = [
    "out_size=32", "perturb.std_blur=0.43", "grid.shifts=-1.43 0 1.43", "train.max_epochs=3",
    "train.hidden=16", "checkpoint=models/net.bin",
]


def run(root, command, *settings, config=None, extra=()):
    argv = ["--root", str(root), "-q"]
    if config:
        argv += ["--config", str(config)]
    for s in (*SMALL, *settings):
        argv += ["--set", s]
    return main([*argv, *extra, command])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["--root", str(root), "-q", "--set", "synth.count=60", "--set", "output=.", "synth"]) == 0
    return root


def cfg_path(root):
    return root / "run.cfg"


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_config_parsing():
    raw = parse_config_text("# comment\nseed = 3\n\ngrid.shifts = -5, 0, 5  # trailing\n")
    cfg = RunConfig.build(".", raw)
    assert cfg["seed"] == 3 and cfg.grid().shifts == (-5.0, 0.0, 5.0)
    assert RunConfig.build(".").plan().batch_size == 64


@pytest.mark.parametrize("raw, message", [
    ({"sed": "1"}, "did you mean 'seed'"),
    ({"mode": "X"}, "expected one of"),
    ({"train.learning_rate": "abc"}, "train.learning_rate"),
    ({"perturb.flip_prob": "2"}, "flip_prob"),
    ({"grid.mirror": "maybe"}, "boolean"),
])
def test_config_errors(raw, message):
    with pytest.raises(ConfigError, match=message):
        RunConfig.build(".", raw)


def test_malformed_config_line():
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("seed = 1\nno equals sign\n")


def test_dump_round_trips():
    cfg = RunConfig.build(".", {"grid.mirror": "false", "checkpoints": "a.bin b.bin"})
    again = RunConfig.build(".", parse_config_text(cfg.dump()))
    assert again.values == cfg.values


def test_synth_layout(dataset):
    for name in ("list_attr_celeba.txt", "list_landmarks_celeba.txt", "list_eval_partition.txt",
                 "detections.txt", "run.cfg"):
        assert (dataset / name).exists()
    assert len(list((dataset / "images").glob("*.png"))) == 60


def test_align_is_deterministic(dataset):
    assert run(dataset, "align", "output=a1", config=cfg_path(dataset)) == 0
    assert run(dataset, "align", "output=a2", config=cfg_path(dataset)) == 0
    files = sorted((dataset / "a1").glob("*.png"))
    assert len(files) == 12
    assert all(digest(f) == digest(dataset / "a2" / f.name) for f in files)


def test_align_skips_corrupt_images(dataset, tmp_path, capsys):
    root = tmp_path
    (root / "images").mkdir()
    for name in ("list_attr_celeba.txt", "list_landmarks_celeba.txt"):
        (root / name).write_text((dataset / name).read_text())
    for f in sorted((dataset / "images").glob("*.png"))[:3]:
        (root / "images" / f.name).write_bytes(f.read_bytes())
    (root / "images" / "000001.png").write_bytes(b"garbage")
    code = run(root, "align", "output=out", "split=all")
    assert code == 1
    assert len(list((root / "out").glob("*.png"))) == 2


def test_preview_identity_config_equals_aligned(dataset):
    zero = ["perturb.std_angle=0", "perturb.std_shift=0", "perturb.std_scale=0", "perturb.std_blur=0",
            "perturb.flip_prob=0", "preview.rows=1", "preview.count=2"]
    assert run(dataset, "augment-preview", "output=p0", *zero, config=cfg_path(dataset)) == 0
    from affact.imageio import read_image
    sheet = read_image(dataset / "p0" / "preview.png")
    assert sheet.shape == (32, 3 * 32 + 2 * 2, 3)
    assert np.array_equal(sheet[:, :32], sheet[:, 34:66])
    assert run(dataset, "augment-preview", "output=p1", config=cfg_path(dataset)) == 0
    assert run(dataset, "augment-preview", "output=p2", config=cfg_path(dataset)) == 0
    assert digest(dataset / "p1" / "preview.png") == digest(dataset / "p2" / "preview.png")


@pytest.fixture(scope="module")
def trained(dataset):
    assert run(dataset, "train", config=cfg_path(dataset)) == 0
    return dataset


def test_train_outputs(trained):
    assert (trained / "models" / "net.bin").exists()
    curve = (trained / "models" / "net.bin.curve.csv").read_text().splitlines()
    assert curve[0] == "epoch,iteration,learning_rate,train_loss,val_loss" and len(curve) == 5


def test_training_ignores_worker_count(trained):
    assert run(trained, "train", "checkpoint=models/w4.bin", config=cfg_path(trained), extra=["--workers", "4"]) == 0
    assert digest(trained / "models" / "net.bin") == digest(trained / "models" / "w4.bin")


@pytest.mark.parametrize("mode", ["A", "C", "D", "CD", "T", "TD"])
def test_predict_modes(trained, mode):
    out = f"scores_{mode}.txt"
    assert run(trained, "predict", f"mode={mode}", f"scores={out}", config=cfg_path(trained)) == 0
    lines = (trained / out).read_text().splitlines()
    assert len(lines) == 12 and len(lines[0].split()) == 9


def test_aligned_and_detected_scores_differ(trained):
    for mode in ("A", "D"):
        run(trained, "predict", f"mode={mode}", f"scores=s_{mode}.txt", config=cfg_path(trained))
    assert (trained / "s_A.txt").read_text() != (trained / "s_D.txt").read_text()


def test_ensemble_prediction(trained):
    code = run(trained, "predict", "checkpoints=models/net.bin models/net.bin", "scores=ens.txt", "mode=D",
               config=cfg_path(trained))
    assert code == 0
    single = run(trained, "predict", "scores=one.txt", "mode=D", config=cfg_path(trained))
    assert single == 0
    a = np.array([[float(v) for v in l.split()[1:]] for l in (trained / "ens.txt").read_text().splitlines()])
    b = np.array([[float(v) for v in l.split()[1:]] for l in (trained / "one.txt").read_text().splitlines()])
    assert np.allclose(a, b, atol=1e-12)


def test_mode_without_required_inputs(trained, capsys):
    assert run(trained, "predict", "mode=L", config=cfg_path(trained)) == 2
    assert "detected_landmarks" in capsys.readouterr().err
    assert run(trained, "predict", "mode=T", "detections=", config=cfg_path(trained)) == 2


def test_evaluate_perfect_predictions(trained, capsys):
    lines = (trained / "list_attr_celeba.txt").read_text().splitlines()[2:]
    (trained / "perfect.txt").write_text("".join(l + "\n" for l in lines))
    assert run(trained, "evaluate", "scores=perfect.txt", config=cfg_path(trained)) == 0
    table = parse_table(capsys.readouterr().out)
    assert np.all(table.errors == 0) and len(table.names) == 8


def test_ttest_on_identical_tables(tmp_path, capsys):
    text = emit_table(ErrorTable(["a", "b", "c"], [1.0, 2.0, 3.0]))
    (tmp_path / "x.csv").write_text(text)
    (tmp_path / "y.csv").write_text(text)
    code = main(["--root", str(tmp_path), "--set", "ttest.a=x.csv", "--set", "ttest.b=y.csv", "ttest"])
    assert code == 1
    assert "zero-variance" in capsys.readouterr().err


def test_ttest_between_score_dumps(trained, capsys):
    code = run(trained, "ttest", "ttest.a=s_A.txt", "ttest.b=s_D.txt", "ttest.pairing=image", config=cfg_path(trained))
    assert code == 0
    assert "df = 11" in capsys.readouterr().out


def test_unknown_key_exit_code(tmp_path, capsys):
    assert main(["--root", str(tmp_path), "--set", "bogus=1", "evaluate"]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_calibrate(trained, capsys):
    assert run(trained, "calibrate", config=cfg_path(trained)) == 0
    assert "enlargement =" in capsys.readouterr().out

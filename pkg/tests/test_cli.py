import csv
import io
import json

from tcgan.cli import main
from tcgan.data import DatasetSpec, make_dataset, write_points_csv

RUN = ["--tm", "30", "--ts", "10", "--te", "20", "--classes", "3", "--per-class", "6"]


def _rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def _small_config(tmp_path) -> str:
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"width": 16, "embed_dim": 4, "latent_dim": 4, "batch_size": 8,
                             "eval_every": 15, "modes_per_class": 2}))
    return str(p)


def test_schedule_command(capsys):
    assert main(["schedule", "--ts", "2000", "--te", "4000", "--tm", "6000", "--stride", "1000"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert [(int(r["t"]), float(r["lambda"])) for r in rows] == [
        (0, 0.0), (1000, 0.0), (2000, 0.0), (3000, 0.5), (4000, 1.0), (5000, 1.0), (6000, 1.0)]


def test_schedule_bad_window_exits_1(capsys):
    assert main(["schedule", "--ts", "5", "--te", "5", "--tm", "10"]) == 1
    assert "error" in capsys.readouterr().err


def test_train_then_eval(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", _small_config(tmp_path), *RUN, "--out", str(out)]) == 0
    row = _rows(capsys.readouterr().out)[0]
    assert int(row["step"]) == 30 and float(row["lambda"]) == 1.0
    assert (out / "metrics.csv").exists()
    assert main(["eval", "--checkpoint", str(out / "checkpoint_final.ckpt"), "--lambda", "0"]) == 0
    ev = _rows(capsys.readouterr().out)[0]
    assert float(ev["lambda"]) == 0.0 and float(ev["fid"]) >= 0.0


def test_train_unknown_config_key_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"widht": 3}')
    assert main(["train", "--config", str(p)]) == 1
    assert "widht" in capsys.readouterr().err


def test_eval_corrupt_checkpoint_exits_1(tmp_path, capsys):
    p = tmp_path / "junk.ckpt"
    p.write_bytes(b"not a checkpoint")
    assert main(["eval", "--checkpoint", str(p)]) == 1


def test_numerical_abort_exits_2(tmp_path, capsys):
    p = tmp_path / "hot.json"
    p.write_text(json.dumps({"width": 8, "latent_dim": 2, "embed_dim": 2, "lr": 1e300, "batch_size": 4}))
    assert main(["train", "--config", str(p), *RUN, "--out", str(tmp_path / "o")]) == 2
    assert "numerical abort" in capsys.readouterr().err


def test_sweep_command(tmp_path, capsys):
    args = ["sweep", "--config", _small_config(tmp_path), *RUN, "--axis", "samples_per_class",
            "--values", "4,6", "--seeds", "0,1"]
    assert main(args) == 0
    rows = _rows(capsys.readouterr().out)
    assert [(r["value"], r["seed"], r["status"]) for r in rows] == [
        ("4", "0", "ok"), ("4", "1", "ok"), ("6", "0", "ok"), ("6", "1", "ok")]


def test_metrics_command(tmp_path, capsys):
    ds = make_dataset(DatasetSpec(num_classes=2, samples_per_class=40, modes_per_class=2, seed=1))
    real, fake = tmp_path / "real.csv", tmp_path / "fake.csv"
    write_points_csv(real, ds.points, ds.labels)
    write_points_csv(fake, ds.points + 0.01, ds.labels)
    assert main(["metrics", str(real), str(fake), "--fid", "--pr"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[0] == "fid,precision,recall"
    fid_v, prec, rec = map(float, lines[1].split(","))
    assert abs(fid_v - 2 * 0.01**2) < 1e-9 and prec == 1.0 and rec == 1.0
    assert main(["metrics", str(real), str(fake)]) == 0
    header = capsys.readouterr().out.splitlines()[0].split(",")
    assert header == ["fid", "kid", "precision", "recall", "classwise_fid_mean", "classwise_kid_mean"]

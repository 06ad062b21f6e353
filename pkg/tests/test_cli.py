import json
import xml.etree.ElementTree as ET

import pytest

from clureg.cli import main
from clureg.runner import read_records


@pytest.fixture
def ssl_config(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("""
task = ssl
data.n = 120
data.test_n = 60
train.iterations = 30
train.eval_every = 10
train.batch_labeled = 6
train.batch_unlabeled = 12
""")
    return path


@pytest.fixture
def uda_config(tmp_path):
    path = tmp_path / "uda.cfg"
    path.write_text("""
task = uda
data.kind = two_moons
data.k = 2
data.n = 120
data.noise_sigma = 0.1
data.labels_per_class = 1
weights.beta = 0.9
weights.delta = 1.0
optim.kind = sgd_nesterov
optim.lr = 0.02
schedule.kind = polynomial
train.iterations = 30
train.eval_every = 10
train.batch_labeled = 8
train.batch_unlabeled = 8
""")
    return path


def test_gen_data_writes_csv(tmp_path, ssl_config, capsys):
    out = tmp_path / "data"
    assert main(["gen-data", "--config", str(ssl_config), "--out", str(out)]) == 0
    header = (out / "train.csv").read_text().splitlines()[0]
    assert header == "x0,x1,y"


def test_gen_data_uda_writes_target(tmp_path, uda_config):
    out = tmp_path / "data"
    assert main(["gen-data", "--config", str(uda_config), "--out", str(out)]) == 0
    assert (out / "target.csv").exists()


def test_train_writes_records_and_checkpoints(tmp_path, ssl_config, capsys):
    out = tmp_path / "runs"
    rc = main(["train", "--config", str(ssl_config), "--seeds", "0..1",
               "--out", str(out)])
    assert rc == 0
    records = read_records(out / "records.jsonl")
    assert [r.seed for r in records] == [0, 1]
    printed = capsys.readouterr().out
    assert "seed 0" in printed and "final=" in printed


def test_override_changes_hash(tmp_path, ssl_config):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["train", "--config", str(ssl_config), "--out", str(out1)])
    main(["train", "--config", str(ssl_config), "--out", str(out2),
          "--override", "weights.beta=0"])
    h1 = read_records(out1 / "records.jsonl")[0].config_hash
    h2 = read_records(out2 / "records.jsonl")[0].config_hash
    assert h1 != h2


def test_sweep_cli(tmp_path, ssl_config, capsys):
    out = tmp_path / "sweep"
    rc = main(["sweep", "--config", str(ssl_config), "--out", str(out),
               "--grid", "weights.beta=0,0.2", "--seeds", "0..1",
               "--baseline", "weights.beta=0"])
    assert rc == 0
    lines = (out / "summary.csv").read_text().strip().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("weights.beta,")


def test_pad_cli(uda_config, capsys):
    rc = main(["pad", "--config", str(uda_config), "--seed", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "PAD on raw inputs:" in out


def test_pad_cli_with_checkpoint(tmp_path, uda_config, capsys):
    out = tmp_path / "runs"
    main(["train", "--config", str(uda_config), "--out", str(out)])
    ckpt = next(out.glob("*_best.ckpt"))
    rc = main(["pad", "--config", str(uda_config), "--seed", "0",
               "--checkpoint", str(ckpt)])
    assert rc == 0
    assert "checkpoint features" in capsys.readouterr().out


def test_plot_curve_cli(tmp_path, ssl_config):
    out = tmp_path / "runs"
    main(["train", "--config", str(ssl_config), "--out", str(out)])
    svg = tmp_path / "curve.svg"
    rc = main(["plot", "--input", str(out / "records.jsonl"), "--kind", "curve",
               "--out-file", str(svg)])
    assert rc == 0
    ET.fromstring(svg.read_text())


def test_plot_scatter_cli(tmp_path, ssl_config):
    data = tmp_path / "data"
    main(["gen-data", "--config", str(ssl_config), "--out", str(data)])
    svg = tmp_path / "scatter.svg"
    rc = main(["plot", "--input", str(data / "train.csv"), "--kind", "scatter",
               "--out-file", str(svg)])
    assert rc == 0
    ET.fromstring(svg.read_text())


def test_report_cli(tmp_path, ssl_config, capsys):
    out = tmp_path / "runs"
    main(["train", "--config", str(ssl_config), "--seeds", "0..2",
          "--out", str(out)])
    rc = main(["report", "--input", str(out / "records.jsonl")])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "n=3" in printed and "final=" in printed


def test_report_compare(tmp_path, ssl_config, capsys):
    out = tmp_path / "runs"
    main(["train", "--config", str(ssl_config), "--seeds", "0..2",
          "--out", str(out)])
    main(["train", "--config", str(ssl_config), "--seeds", "0..2",
          "--out", str(out), "--override", "weights.beta=0"])
    records = read_records(out / "records.jsonl")
    hashes = sorted({r.config_hash for r in records})
    rc = main(["report", "--input", str(out / "records.jsonl"),
               "--compare", hashes[0], hashes[1]])
    assert rc == 0
    assert "paired t-test" in capsys.readouterr().out


def test_gen_data_rejects_idx(tmp_path, capsys):
    cfg = tmp_path / "idx.cfg"
    cfg.write_text("data.kind = idx\n")
    rc = main(["gen-data", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == 2


def test_single_value_seeds_flag(tmp_path, ssl_config):
    out = tmp_path / "runs"
    assert main(["train", "--config", str(ssl_config), "--seeds", "5",
                 "--out", str(out)]) == 0
    assert [r.seed for r in read_records(out / "records.jsonl")] == [5]

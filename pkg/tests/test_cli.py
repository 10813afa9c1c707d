import csv
import json
import os

import pytest

from seqmlc.cli import main

CONFIG = """\
[model]
embed = 8
enc_hidden = 8
dec_hidden = 8
br_hidden = 8

[train]
regime = ocd
epochs = 1
batch_size = 8
eval_every = 2
beam = 2
seed = 3

[synth]
labels = 4
vocab = 40
train = 24
val = 8
test = 8
seed = 5
seen_pool = 6
unseen_pool = 3
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(CONFIG)
    return str(path)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_synth_deterministic_files(cfg_path, tmp_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["synth", "--config", cfg_path, "--out", str(out1), "--seed", "7"]) == 0
    assert main(["synth", "--config", cfg_path, "--out", str(out2), "--seed", "7"]) == 0
    names = sorted(os.listdir(out1))
    assert names == ["test_seen.jsonl", "test_unseen.jsonl", "train.jsonl", "val.jsonl"]
    for name in names:
        assert read(out1 / name) == read(out2 / name)


def test_train_eval_decode_pipeline(cfg_path, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--config", cfg_path, "--out", str(run)]) == 0
    assert (run / "best.ckpt").exists()
    assert (run / "curve.csv").exists()
    meta = json.loads((run / "run.json").read_text())
    assert meta["regime"] == "ocd" and meta["seed"] == 3

    out = tmp_path / "eval"
    assert main(["eval", "--config", cfg_path, "--ckpt", str(run / "best.ckpt"),
                 "--split", "test_seen", "--strategy", "rnn",
                 "--out", str(out)]) == 0
    with open(out / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["strategy"] == "rnn"
    assert 0.0 <= float(rows[0]["ebf1"]) <= 1.0

    assert main(["decode", "--config", cfg_path, "--ckpt", str(run / "best.ckpt"),
                 "--split", "test_unseen", "--strategy", "joint",
                 "--out", str(out)]) == 0
    lines = (out / "preds.jsonl").read_text().splitlines()
    assert len(lines) == 8
    rec = json.loads(lines[0])
    assert set(rec) == {"id", "gold", "pred", "log_path", "log_joint", "strategy"}
    assert rec["strategy"] == "joint"


def test_eval_strategies_all_work(cfg_path, tmp_path):
    run = tmp_path / "run"
    main(["train", "--config", cfg_path, "--out", str(run), "--regime", "ocd-mtl"])
    out = tmp_path / "eval"
    for strategy in ("rnn", "br", "rescore", "joint"):
        assert main(["eval", "--config", cfg_path, "--ckpt", str(run / "best.ckpt"),
                     "--strategy", strategy, "--out", str(out)]) == 0
    with open(out / "metrics.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4


def test_eval_unknown_split_fails_cleanly(cfg_path, tmp_path, capsys):
    run = tmp_path / "run"
    main(["train", "--config", cfg_path, "--out", str(run)])
    code = main(["eval", "--config", cfg_path, "--ckpt", str(run / "best.ckpt"),
                 "--split", "nope", "--out", str(tmp_path / "e")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_oracle_check_passes():
    assert main(["oracle-check", "--max-l", "4", "--cases", "200", "--seed", "1"]) == 0


def test_bad_flags_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--config"])  # missing value
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--strategy", "bogus"])
    assert exc.value.code == 2


def test_missing_config_exits_1(tmp_path, capsys):
    code = main(["synth", "--config", str(tmp_path / "absent.ini"),
                 "--out", str(tmp_path / "o")])
    assert code == 1


def test_report_byte_identical_across_reruns(cfg_path, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--config", cfg_path, "--out", str(run)]) == 0
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for out in outs:
        assert main(["report", "--config", cfg_path, "--out", str(out), str(run)]) == 0
    for name in os.listdir(outs[0]):
        assert read(outs[0] / name) == read(outs[1] / name), name


def test_report_builds_tables_and_figures(cfg_path, tmp_path):
    runs = []
    for regime in ("ocd", "mle"):
        run = tmp_path / regime
        assert main(["train", "--config", cfg_path, "--out", str(run),
                     "--regime", regime]) == 0
        runs.append(str(run))
    out = tmp_path / "report"
    assert main(["report", "--config", cfg_path, "--out", str(out), *runs]) == 0
    for name in ("metrics.csv", "metrics.txt", "combos.csv", "poswise.csv",
                 "ebf1_freq.csv", "curve.png", "poswise.png", "ebf1_freq.png"):
        assert (out / name).exists(), name
    with open(out / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    # two regimes x (test_seen, test_unseen), rnn strategy each
    assert len(rows) == 4
    models = {r["model"] for r in rows}
    assert models == {"ocd", "mle"}
    with open(out / "combos.csv") as fh:
        combo_rows = list(csv.DictReader(fh))
    assert any(r["model"] == "reference" for r in combo_rows)
    for r in combo_rows:
        assert int(r["s_test_train"]) <= int(r["s_test"])

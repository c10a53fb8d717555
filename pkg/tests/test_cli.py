import json

import pytest

from relqa.harness.cli import main


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def data(tmp_path):
    tr = _write(tmp_path / "tr.json", {"n_instances": 16, "n_candidates": 3, "seed": 1})
    dv = _write(tmp_path / "dv.json", {"n_instances": 8, "n_candidates": 3, "seed": 2, "id_prefix": "dev"})
    assert main(["gen-synthetic", "--spec", tr, "--out", str(tmp_path / "train.jsonl")]) == 0
    assert main(["gen-synthetic", "--spec", dv, "--out", str(tmp_path / "dev.jsonl")]) == 0
    return tmp_path


def _run_cfg(tmp, out, lr=5e-3, epochs=2):
    return _write(tmp / f"{out}.json", {
        "model": {"arch": "path", "d": 8, "L": 1, "graph": "+reason"},
        "epochs": epochs, "lr": lr, "batch_size": 4,
        "embeddings": [{"name": "hash", "kind": "hash_fallback", "dim": 8}],
        "train_path": str(tmp / "train.jsonl"), "dev_path": str(tmp / "dev.jsonl"),
        "out_dir": str(tmp / out),
    })


def test_gen_synthetic_deterministic(data):
    spec = _write(data / "again.json", {"n_instances": 16, "n_candidates": 3, "seed": 1})
    assert main(["gen-synthetic", "--spec", spec, "--out", str(data / "again.jsonl")]) == 0
    assert (data / "again.jsonl").read_bytes() == (data / "train.jsonl").read_bytes()


def test_build_graphs_and_stats(data, capsys):
    for out in ("g1", "g2"):
        assert main(["build-graphs", str(data / "dev.jsonl"), "--out", str(data / out), "--reason", "--sents"]) == 0
    files = sorted(p.name for p in (data / "g1").iterdir())
    assert len(files) == 8
    for f in files:
        assert (data / "g1" / f).read_bytes() == (data / "g2" / f).read_bytes()
    capsys.readouterr()
    assert main(["stats", str(data / "g1")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["graphs"] == 8 and stats["per_kind"]["QUERY"] == 8


def test_train_eval(data, capsys):
    assert main(["train", "--config", _run_cfg(data, "run")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert main(["eval", "--checkpoint", str(data / "run" / "best.ckpt"), "--data", str(data / "dev.jsonl"),
                 "--out", str(data / "pred.jsonl")]) == 0
    ev = json.loads(capsys.readouterr().out)
    assert ev["accuracy"] == summary["best_dev_acc"]
    assert len((data / "pred.jsonl").read_text().splitlines()) == 8


def test_train_deterministic(data):
    assert main(["train", "--config", _run_cfg(data, "a")]) == 0
    assert main(["train", "--config", _run_cfg(data, "b")]) == 0
    assert (data / "a" / "metrics.jsonl").read_bytes() == (data / "b" / "metrics.jsonl").read_bytes()


def test_grid(data, capsys):
    spec = _write(data / "grid.json", {
        "train_path": str(data / "train.jsonl"), "dev_path": str(data / "dev.jsonl"),
        "base": {"model": {"d": 8, "L": 1}, "epochs": 1, "lr": 5e-3,
         "embeddings": [{"name": "hash", "kind": "hash_fallback", "dim": 8}]},
        "axes": {"arch": ["entity", "mashup"], "graph": ["Base", "+Reason"]},
    })
    assert main(["grid", "--spec", spec, "--out", str(data / "grid")]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[0] == "| Model | Base | +Reason |"
    assert len(table.splitlines()) == 4


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x"}\n')
    assert main(["build-graphs", str(bad), "--out", str(tmp_path / "g")]) == 1
    assert "bad.jsonl:1" in capsys.readouterr().err
    assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--data", str(bad)]) == 1
    spec = _write(tmp_path / "s.json", {"n_instances": 2, "hop_depth": 5})
    assert main(["gen-synthetic", "--spec", spec, "--out", str(tmp_path / "o")]) == 1


@pytest.mark.filterwarnings("ignore:overflow")
def test_numerical_exit_code(data, capsys):
    assert main(["train", "--config", _run_cfg(data, "boom", lr=1e300, epochs=3)]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 1

import csv
import json

import pytest

from lporec import cli
from lporec.catalog import head_size
from lporec.config import KEYS, PRESETS, RunConfig, load_config, parse_config_text, resolve
from lporec.data import load_splits
from lporec.errors import ConfigError
from lporec.model import ModelDims, init_params, save_checkpoint


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["generate", "--users", "120", "--items", "60", "--per-user", "12", "--seed", "3",
                     "--out", str(root / "log.tsv")]) == 0
    assert cli.main(["prepare", str(root / "log.tsv"), "--out", str(root / "splits")]) == 0
    return root


def tiny_config(path, splits, **extra):
    lines = {"data.splits": splits, "model.d": 8, "model.heads": 2, "train.epochs": 2,
             "train.batch_size": 64, "sampler.k": 3, **extra}
    path.write_text("# tiny run\n" + "".join(f"{k} = {v}\n" for k, v in lines.items()))
    return str(path)


def test_config_defaults_and_presets():
    cfg = resolve()
    assert cfg.preset == "desk" and cfg.d == 64 and cfg.heads == 4 and cfg.dropout == 0.2
    paper = resolve({"preset": "paper"})
    assert (paper.d, paper.heads, paper.learning_rate, paper.dropout) == (768, 16, 5e-4, 0.8)
    assert resolve({"preset": "paper", "model.d": "32"}).d == 32
    assert set(PRESETS) == {"desk", "paper"}
    assert set(KEYS.values()) == set(RunConfig().as_dict())


def test_config_rejects_unknown_and_malformed():
    with pytest.raises(ConfigError):
        parse_config_text("model.width = 3\n")
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError):
        resolve({"model.d": "sixty"})
    with pytest.raises(ConfigError):
        resolve({"preset": "huge"})


def test_config_echo_round_trips(tmp_path):
    cfg = resolve({"model.d": "16", "loss.tau": "0.25", "sampler.kind": "uniform_random"})
    (tmp_path / "c.cfg").write_text(cfg.dump())
    assert load_config(tmp_path / "c.cfg") == cfg


def test_threads_env(monkeypatch):
    monkeypatch.setenv("LPO_REC_THREADS", "1")
    assert load_config().threads == 1


def test_generate_default_seed_and_determinism(tmp_path, capsys):
    args = ["generate", "--users", "30", "--items", "20"]
    assert cli.main(args + ["--out", str(tmp_path / "a.tsv")]) == 0
    assert cli.main(args + ["--seed", "0", "--out", str(tmp_path / "b.tsv")]) == 0
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()


def test_generate_rejects_zero_items(tmp_path, capsys):
    assert cli.main(["generate", "--items", "0", "--out", str(tmp_path / "x.tsv")]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: InvalidSpec:") and "\n" not in err


def test_prepare_output(prepared):
    sp = load_splits(prepared / "splits")
    assert len(sp.catalog.head) == head_size(sp.catalog.num_items)
    assert len(sp.test) == len(sp.validation) > 0


def test_prepare_empty_after_filter(tmp_path, capsys):
    (tmp_path / "log.tsv").write_text("".join(f"u{u}\ti{k}\t{k}\n" for u in range(4) for k in range(3)))
    assert cli.main(["prepare", str(tmp_path / "log.tsv"), "--out", str(tmp_path / "s")]) == 2
    assert "EmptyAfterFilter" in capsys.readouterr().err


def test_missing_file_is_runtime_error(tmp_path, capsys):
    assert cli.main(["evaluate", "--checkpoint", str(tmp_path / "no.ckpt"), "--splits", str(tmp_path)]) == 3
    assert capsys.readouterr().err.startswith("error: FileNotFoundError:")


def test_train_evaluate_diagnose(prepared, tmp_path, capsys):
    cfg = tiny_config(tmp_path / "run.cfg", prepared / "splits")
    out = tmp_path / "run"
    assert cli.main(["train", "--config", cfg, "--out", str(out)]) == 0
    for name in ("best.ckpt", "epoch001.ckpt", "epoch002.ckpt", "history.csv", "metrics.json", "config.resolved"):
        assert (out / name).exists()
    metrics = json.loads((out / "metrics.json").read_text())
    assert {"hr@10", "ndcg@10", "tail_hr@10", "num_test_users"} <= set(metrics)
    capsys.readouterr()
    assert cli.main(["evaluate", "--checkpoint", str(out / "best.ckpt"), "--splits", str(prepared / "splits")]) == 0
    assert json.loads(capsys.readouterr().out) == metrics
    assert cli.main(["diagnose", "--checkpoint", str(out / "best.ckpt"), "--splits", str(prepared / "splits"),
                     "--bins", "7", "--out", str(tmp_path / "diag.csv")]) == 0
    assert len((tmp_path / "diag.csv").read_text().splitlines()) == 8
    # re-running from the echoed config reproduces the run
    again = tmp_path / "again"
    assert cli.main(["train", "--config", str(out / "config.resolved"), "--out", str(again)]) == 0
    assert (again / "best.ckpt").read_bytes() == (out / "best.ckpt").read_bytes()
    assert (again / "metrics.json").read_bytes() == (out / "metrics.json").read_bytes()


def test_train_dpo(prepared, tmp_path):
    cfg = tiny_config(tmp_path / "dpo.cfg", prepared / "splits", **{"train.loss": "dpo", "train.epochs": 1})
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "dpo")]) == 0
    assert (tmp_path / "dpo" / "reference" / "best.ckpt").exists()


def test_train_needs_splits(tmp_path, capsys):
    assert cli.main(["train", "--out", str(tmp_path / "r")]) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_evaluate_oracle_checkpoint(prepared, tmp_path, capsys):
    # every test target is item 0; a constant encoder output aligned with item 0 ranks it first
    sp = load_splits(prepared / "splits")
    lines = [f"{','.join(map(str, ex.history))}\t0\ttest\n" for ex in sp.test]
    split_dir = tmp_path / "oracle"
    split_dir.mkdir()
    for name in ("train.tsv", "validation.tsv", "catalog.tsv"):
        (split_dir / name).write_text((prepared / "splits" / name).read_text())
    (split_dir / "test.tsv").write_text("".join(lines))
    params = init_params(ModelDims(sp.catalog.num_items, d=8, heads=2), seed=0)
    params.arrays["blocks.0.ln2_gain"][:] = 0.0
    params.arrays["blocks.0.ln2_bias"][:] = 1.0
    params.arrays["item_emb"][:] = 0.0
    params.arrays["item_emb"][0] = 1.0
    save_checkpoint(params, tmp_path / "oracle.ckpt")
    capsys.readouterr()
    assert cli.main(["evaluate", "--checkpoint", str(tmp_path / "oracle.ckpt"), "--splits", str(split_dir)]) == 0
    metrics = json.loads(capsys.readouterr().out)
    for key in ("hr@5", "hr@10", "hr@20", "ndcg@5", "ndcg@10", "ndcg@20"):
        assert metrics[key] == 1.0


def test_ablate_has_twelve_rows(prepared, tmp_path):
    cfg = tiny_config(tmp_path / "ab.cfg", prepared / "splits", **{"train.epochs": 1})
    assert cli.main(["ablate", "--config", cfg, "--out", str(tmp_path / "ab")]) == 0
    with open(tmp_path / "ab" / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    assert {(r["loss"], r["sampler"], r["reweight"]) for r in rows} == {
        (l, s, w) for l in ("ce", "ce_lpo") for s in cli.SAMPLERS for w in ("on", "off")}
    assert all(0.0 <= float(r["hr@10"]) <= 1.0 for r in rows)

import csv
import json

import pytest

from polarlab.cli import main
from polarlab.nnd import load_checkpoint


@pytest.fixture
def write_cfg(tmp_path):
    def write(d, name="run.json"):
        p = tmp_path / name
        p.write_text(json.dumps(d) if not isinstance(d, str) else d)
        return str(p)
    return write


def test_construct_default_84(write_cfg, capsys):
    assert main(["construct", "--config", write_cfg({"code": {"n": 3, "K": 4}})]) == 0
    info = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert info["info_set"] == [4, 6, 7, 8] and info["d_min"] == 4 and info["r"] == 1


def test_construct_21(write_cfg, capsys):
    assert main(["construct", "--config", write_cfg({"code": {"n": 1, "K": 1}})]) == 0
    info = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert info == {"N": 2, "K": 1, "info_set": [2], "d_min": 2, "r": 0}


def test_malformed_json_exits_2(write_cfg):
    assert main(["construct", "--config", write_cfg("{oops")]) == 2


def test_unknown_key_rejected(write_cfg):
    assert main(["construct", "--config", write_cfg({"code": {"n": 3, "K": 4, "x": 1}})]) == 2
    assert main(["construct", "--config", write_cfg({"typo": 1})]) == 2


def test_bad_code_is_config_error(write_cfg):
    assert main(["construct", "--config", write_cfg({"code": {"n": 2, "K": 5}})]) == 2


def test_unknown_subcommand_is_usage_error():
    assert main(["frobnicate"]) == 2


def test_train_writes_loadable_checkpoint(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["train", "--epochs", "4", "--seed", "1", "--out", str(out)]) == 0
    ck = load_checkpoint(out)
    assert ck.version == 1 and ck.final_epoch == 4
    assert "final_loss=" in capsys.readouterr().out


def test_train_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["train", "--epochs", "3", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_train_baseline_subset(tmp_path, write_cfg):
    conf = write_cfg({"train": {"subset_seed": 9, "hidden": [8]}})
    out = tmp_path / "b.json"
    assert main(["train", "--config", conf, "--scheme", "baseline", "--p", "90",
                 "--epochs", "2", "--out", str(out)]) == 0
    ck = load_checkpoint(out)
    assert len(ck.subset) == 230 and ck.train_config["subset_seed"] == 9


def test_env_seed_and_flag_precedence(tmp_path, monkeypatch, write_cfg):
    conf = write_cfg({"seed": 1, "train": {"hidden": [8]}})
    monkeypatch.setenv("POLARLAB_SEED", "7")
    assert main(["train", "--config", conf, "--epochs", "1", "--out", str(tmp_path / "e.json")]) == 0
    assert load_checkpoint(tmp_path / "e.json").seed == 7
    assert main(["train", "--config", conf, "--epochs", "1", "--seed", "3",
                 "--out", str(tmp_path / "f.json")]) == 0
    assert load_checkpoint(tmp_path / "f.json").seed == 3


def test_sweep_map_nine_rows(tmp_path):
    assert main(["sweep", "--decoder", "map", "--workers", "1", "--min-blocks", "200",
                 "--max-blocks", "200", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep_map.csv")))
    assert len(rows) == 9
    assert [float(r["ebn0_db"]) for r in rows] == list(range(9))


def test_sweep_nnd_without_ckpt():
    assert main(["sweep", "--decoder", "nnd"]) == 2


def test_sweep_missing_ckpt_file(tmp_path):
    assert main(["sweep", "--decoder", "nnd", "--ckpt", str(tmp_path / "none.json")]) == 2


def test_sweep_several_decoders_need_paired():
    assert main(["sweep", "--decoder", "map,sc"]) == 2


def test_paired_reports_share_seed(tmp_path):
    assert main(["sweep", "--decoder", "map,sc", "--paired", "--workers", "1", "--ebn0", "3",
                 "--min-blocks", "300", "--max-blocks", "300", "--seed", "11",
                 "--out", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "sweep_map.json").read_text())
    s = json.loads((tmp_path / "sweep_sc.json").read_text())
    assert m["seed"] == s["seed"] == 11


def test_sweep_with_checkpoint(tmp_path):
    ck = tmp_path / "m.json"
    main(["train", "--epochs", "2", "--out", str(ck)])
    assert main(["sweep", "--decoder", "nnd", "--ckpt", str(ck), "--ebn0", "2", "--workers", "1",
                 "--min-blocks", "100", "--max-blocks", "100", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "sweep_nnd.json").read_text())
    assert len(rep["checkpoint"]) == 16


def test_gencheck_passes(capsys):
    assert main(["gencheck", "--points", "10"]) == 0
    assert "max_rel_error=" in capsys.readouterr().out


def test_gencheck_corrupted_fails(capsys):
    assert main(["gencheck", "--points", "5", "--corrupt-gradient"]) == 1
    assert "reencode_backward" in capsys.readouterr().err


def _genexp(tmp_path, p, out):
    return main(["genexp", "--p", str(p), "--epochs", "2", "--ebn0", "2,4,6", "--workers", "1",
                 "--min-blocks", "100", "--max-blocks", "100", "--out", str(tmp_path / out)])


def test_genexp_p40(tmp_path, capsys):
    assert _genexp(tmp_path, 40, "a") == 0
    assert "seen=102 unseen=154" in capsys.readouterr().out
    for name in ("random", "unseen", "seen"):
        rep = json.loads((tmp_path / "a" / f"genexp_p40_{name}.json").read_text())
        assert rep["source"] == name and len(rep["points"]) == 3


def test_genexp_p100_skips_unseen(tmp_path):
    assert _genexp(tmp_path, 100, "b") == 0
    rep = json.loads((tmp_path / "b" / "genexp_p100_unseen.json").read_text())
    assert rep["skipped"] is True


def test_genexp_repeatable(tmp_path):
    _genexp(tmp_path, 40, "x")
    _genexp(tmp_path, 40, "y")
    for f in sorted((tmp_path / "x").iterdir()):
        assert f.read_bytes() == (tmp_path / "y" / f.name).read_bytes()


def test_genexp_bad_p(tmp_path):
    assert main(["genexp", "--p", "0", "--out", str(tmp_path)]) == 2

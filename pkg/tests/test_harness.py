import csv
import json

import numpy as np
import pytest

from polarlab.codebook import CodeSpec
from polarlab.errors import ConfigurationError, ValidationError
from polarlab.harness import (CSV_COLUMNS, DecoderSpec, EvalReport, PointResult, SweepConfig,
                              emit_report, load_report, run_generalization, run_paired_sweep,
                              run_sweep)
from polarlab.nnd import TrainConfig, codebook_subset, train


def cfg(code, kind="map", **kw):
    base = dict(ebn0_points=[2.0, 4.0], min_blocks=2000, max_blocks=2000, chunk_size=500)
    base.update(kw)
    return SweepConfig(code, DecoderSpec(kind), **base)


def test_noiseless_map_has_no_errors(code168):
    rep = run_sweep(cfg(code168, ebn0_points=[60.0], min_blocks=10**4, max_blocks=10**4))
    (p,) = rep.points
    assert p.blocks == 10**4 and p.block_errors == 0 and p.bit_errors == 0


def test_counters_are_consistent(code168):
    for kind in ("map", "sc", "bp", "bdd"):
        rep = run_sweep(cfg(code168, kind, ebn0_points=[0.0, 3.0]))
        for p in rep.points:
            assert 0 <= p.block_errors <= p.blocks
            assert p.bit_errors <= code168.K * p.block_errors
            assert 0 <= p.ber(code168.K) <= p.bler <= 1


def test_repeat_is_identical(code168, tmp_path):
    a = run_sweep(cfg(code168, "sc"))
    b = run_sweep(cfg(code168, "sc"))
    emit_report(a, "json", tmp_path / "a.json")
    emit_report(b, "json", tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_report_invariant_to_worker_count(code168):
    a = run_sweep(cfg(code168, "sc", min_blocks=500, max_blocks=5000, target_block_errors=30))
    b = run_sweep(cfg(code168, "sc", min_blocks=500, max_blocks=5000, target_block_errors=30,
                      workers=3))
    assert a.to_dict() == b.to_dict()


def test_stop_rule(code168):
    rep = run_sweep(cfg(code168, ebn0_points=[0.0, 8.0], min_blocks=1000, max_blocks=20000,
                        target_block_errors=50))
    low, high = rep.points
    assert low.block_errors >= 50 and 1000 <= low.blocks < 20000
    assert high.blocks == 20000                      # few errors at 8 dB: runs to the cap


def test_max_blocks_not_multiple_of_chunk(code168):
    rep = run_sweep(cfg(code168, min_blocks=0, max_blocks=1234, target_block_errors=10**6))
    assert all(p.blocks == 1234 for p in rep.points)


def test_paired_ordering_map_beats_sc(code168):
    reps = run_paired_sweep(cfg(code168, min_blocks=20000, max_blocks=20000, ebn0_points=[4.0]),
                            [DecoderSpec("map"), DecoderSpec("sc")])
    m, s = reps
    assert m.seed == s.seed and m.config_hash == s.config_hash
    assert m.points[0].block_errors <= s.points[0].block_errors


def test_paired_first_decoder_matches_single_sweep(code168):
    c = cfg(code168, "sc")
    single = run_sweep(c)
    paired = run_paired_sweep(c, [DecoderSpec("sc"), DecoderSpec("bp")])[0]
    assert single.points == paired.points


def test_message_source_restriction(code168, monkeypatch):
    from polarlab import harness
    drawn = []
    real = harness.int_to_bits

    def spy(values, width):
        drawn.append(np.array(values))
        return real(values, width)

    monkeypatch.setattr(harness, "int_to_bits", spy)
    allowed = [3, 77, 200]
    run_sweep(cfg(code168, messages=allowed, source_label="unseen"))
    assert set(np.concatenate(drawn).tolist()) <= set(allowed)


def test_nnd_requires_checkpoint(code168):
    with pytest.raises(ConfigurationError):
        run_sweep(cfg(code168, "nnd"))


@pytest.mark.parametrize("bad", [dict(ebn0_points=[]), dict(min_blocks=10, max_blocks=5),
                                 dict(messages=[]), dict(chunk_size=0)])
def test_sweep_config_validation(code168, bad):
    with pytest.raises(ValidationError):
        cfg(code168, **bad)


def test_csv_header_only_for_empty_report(code168, tmp_path):
    rep = EvalReport("map", code168.to_dict(), 0, [])
    emit_report(rep, "csv", tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().strip() == ",".join(CSV_COLUMNS)


def test_csv_one_row_formula(code168, tmp_path):
    rep = EvalReport("sc", code168.to_dict(), 5, [PointResult(4.0, 1000, 37, 9)])
    emit_report(rep, "csv", tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == 1 and list(rows[0]) == CSV_COLUMNS
    assert float(rows[0]["ber"]) == 37 / (1000 * 8)
    assert float(rows[0]["bler"]) == 9 / 1000
    assert rows[0]["code"] == "(16,8)" and rows[0]["seed"] == "5"
    assert rows[0]["info_set"] == "8 10 11 12 13 14 15 16"


def test_json_round_trip(code168, tmp_path):
    rep = run_sweep(cfg(code168, "bp", ebn0_points=[1.0, 2.5]))
    emit_report(rep, "json", tmp_path / "r.json")
    back = load_report(tmp_path / "r.json")
    assert back == rep
    meta = json.loads((tmp_path / "r.json").read_text())
    assert meta["sigma_convention"] and len(meta["config_hash"]) == 16


def test_unknown_format(code168, tmp_path):
    with pytest.raises(ValidationError):
        emit_report(EvalReport("map", code168.to_dict(), 0), "xml", tmp_path / "x")


@pytest.fixture(scope="module")
def small_subset_ckpt():
    code = CodeSpec.build(4, 8)
    return train(TrainConfig(epochs=20, batch_size=64, hidden=(16,), subset_percent=40), code)


def test_generalization_sets(small_subset_ckpt, monkeypatch):
    from polarlab import harness
    seen_draws = {}
    real = harness.run_sweep

    def spy(c, *a, **k):
        seen_draws[c.source_label] = c.messages
        return real(c, *a, **k)

    monkeypatch.setattr(harness, "run_sweep", spy)
    base = cfg(small_subset_ckpt.code, ebn0_points=[4.0], min_blocks=500, max_blocks=500)
    reps = run_generalization(small_subset_ckpt, base)
    assert set(reps) == {"random", "unseen", "seen"}
    subset = set(codebook_subset(8, 40, 0).tolist())
    assert len(seen_draws["seen"]) == 102 and set(seen_draws["seen"]) == subset
    assert len(seen_draws["unseen"]) == 154 and not set(seen_draws["unseen"]) & subset
    assert seen_draws["random"] is None
    assert all(r.points[0].blocks == 500 for r in reps.values())


def test_generalization_full_codebook_skips_unseen(code168):
    ck = train(TrainConfig(epochs=2, batch_size=16, hidden=(8,), subset_percent=100), code168)
    reps = run_generalization(ck, cfg(code168, min_blocks=100, max_blocks=100))
    assert reps["unseen"].skipped and reps["unseen"].points == []
    assert not reps["seen"].skipped

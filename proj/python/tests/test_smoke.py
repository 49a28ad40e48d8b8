import json

import pytest

import ehrtext


def test_text_helpers():
    assert ehrtext.normalize_identifier("DOSE_VAL_RX") == "dose val rx"
    assert ehrtext.normalize_identifier("doseValRx") == "dose val rx"
    assert ehrtext.normalize_text("  a \t b ") == "a b"


def test_auprc():
    assert ehrtext.auprc([0.9, 0.8, 0.1], [1, 1, 0]) == pytest.approx(1.0)
    with pytest.raises(ehrtext.MetricUndefined):
        ehrtext.auprc([0.1, 0.2], [0, 0])


def test_tokenizer_round_trip(tmp_path):
    tok = ehrtext.Tokenizer.train(["vancomycin hcl", "heparin sodium", "sodium serum"] * 3, 400)
    assert len(tok) <= 400
    ids = tok.encode("heparin  sodium")
    assert tok.decode(ids) == "heparin sodium"
    tok.save(tmp_path / "tok.json")
    assert ehrtext.Tokenizer.load(tmp_path / "tok.json").encode("sodium") == tok.encode("sodium")
    assert ehrtext.digit_place_tokens("-3") == [13, 47]


def test_generate_ingest_and_run(tmp_path):
    gen = ehrtext.generate_hospital(tmp_path / "h", name="h", n_stays=200, seed=3)
    assert gen["oracle_auprc"] > gen["prevalence"]
    report = ehrtext.ingest(gen["manifest"], tmp_path / "h.json", dx_class_map=gen["dx_class_map"])
    assert report["samples_emitted"] > 150
    config = {
        "task": "Mort",
        "family": "UniHPF",
        "mode": "single",
        "datasets": {"h": "h.json"},
        "sources": ["h"],
        "seeds": [0],
        "trainer": {"lr": 0.001, "batch": 32, "max_epochs": 1, "patience": 1},
        "model": {"dim": 16, "heads": 2, "ffn": 32, "f_layers": 1, "g_layers": 1, "h_layers": 1},
        "serialize": {"L_event": 24, "N_max": 16, "L_flat": 256},
        "vocab_size": 450,
    }
    result = ehrtext.run_experiment(config, base_dir=tmp_path)
    assert 0.0 <= result["results"]["h"]["mean"] <= 1.0
    json.dumps(result)


def test_errors_are_typed(tmp_path):
    with pytest.raises(ehrtext.ConfigError):
        ehrtext.generate_hospital(tmp_path / "bad", n_stays=5)
    with pytest.raises(ValueError):
        ehrtext.run_experiment({"task": "Mort", "sources": []})

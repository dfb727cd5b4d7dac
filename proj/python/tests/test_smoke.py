import json
import os
import random
from pathlib import Path

import pytest

import cogscreen

SOURCE = Path(os.environ.get("COGSCREEN_SOURCE_DIR", Path(__file__).resolve().parents[2]))
TOY = SOURCE / "data" / "toy"


def test_features_have_registry_shape():
    names = cogscreen.feature_names()
    assert len(names) == 110
    values = cogscreen.extract_features("the boy is um taking a cookie . the water is running .")
    assert len(values) == 110
    assert values[names.index("word_count")] == 11


def test_metrics_hand_cases():
    labels = ["case", "case", "control", "control"]
    assert cogscreen.roc_auc(labels, [0.9, 0.4, 0.6, 0.1]) == 0.75
    c = cogscreen.confusion_f1(["case"] * 5 + ["control"] * 2, [0.9, 0.9, 0.9, 0.2, 0.2, 0.8, 0.1])
    assert (c["tp"], c["fp"], c["fn"]) == (3, 1, 2)
    assert c["f1"] == pytest.approx(2 / 3)
    roc = cogscreen.curve("roc", labels, [0.9, 0.4, 0.6, 0.1])
    assert roc[0] == (0.0, 0.0) and roc[-1] == (1.0, 1.0)


def test_text_similarity():
    r = cogscreen.bleu([["the", "the", "the"]], [[["the", "cat"]]], max_n=1)
    assert r["precision"][0] == pytest.approx(1 / 3)
    assert cogscreen.bertscore([[1, 0], [0, 1]], [[1, 0]]) == pytest.approx((0.5, 1.0, 2 / 3))
    rng = random.Random(3)
    pts = [[10.0 * c + rng.gauss(0, 1) for _ in range(4)] for c in (0, 1) for _ in range(15)]
    coords, kl = cogscreen.tsne(pts, perplexity=9, iterations=1000, seed=1)
    assert len(coords) == 30 and kl >= 0
    assert cogscreen.silhouette(coords, [0] * 15 + [1] * 15) > 0.8


def test_judge_parsing_and_prompt():
    assert cogscreen.parse_label("{'label': 'AD'}") == "case"
    assert cogscreen.parse_label('```json\n{"label": "Healthy"}\n```') == "control"
    assert cogscreen.parse_label("It could be AD or Healthy.") is None
    prompt = cogscreen.build_classification_prompt("the boy fell")
    assert prompt.endswith("the boy fell") and "cookie theft" in prompt.lower()
    assert cogscreen.cue_hits(cogscreen.build_finetune_prompt("case", 0))


def test_errors_carry_their_kind():
    with pytest.raises(cogscreen.CogscreenError, match="SingleClass"):
        cogscreen.roc_auc(["case", "case"], [0.1, 0.2])
    with pytest.raises(cogscreen.CogscreenError, match="EmptyTranscript"):
        cogscreen.build_classification_prompt("   ")


def test_manifest_and_cli(tmp_path):
    corpus = cogscreen.load_manifest(TOY / "manifest.csv")
    assert len(corpus) == 120
    assert {t["split"] for t in corpus} == {"train", "validation", "test"}
    code, _, err = cogscreen.run_cli(
        ["--config", str(TOY / "config.json"), "--out", str(tmp_path), "--log-level", "error",
         "--seed-list", "0", "train", "--model", "linguistic"])
    assert code == 0, err
    report = json.loads((tmp_path / "train" / "linguistic" / "report.json").read_text())
    assert report["model_kind"] == "linguistic"
    code, _, err = cogscreen.run_cli(["no-such-command"])
    assert code == 2

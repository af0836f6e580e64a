"""Smoke test for the rupture_py extension.

Build and run from the repository root:

    cargo build --release -p rupture-py --features extension-module
    cp target/release/librupture_py.so python/rupture_py.so
    python3 python/smoke_test.py

or `pip install ./crates/py` (built with maturin).
"""

import math
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import rupture_py as rp


def main():
    corpus = rp.Corpus.synth(participants=2, seed=7)
    assert len(corpus) == 2
    pid = corpus.participant_ids()[0]
    labels = corpus.frame_labels(pid)
    onsets = corpus.error_onsets(pid)
    assert len(labels) == corpus.num_frames(pid)
    assert all(labels[f] == sum(o <= f for o in onsets) for f in range(len(labels)))
    assert len(corpus.features(pid, "audio")[0]) == 24

    with tempfile.TemporaryDirectory() as tmp:
        corpus.save(tmp)
        again = rp.Corpus.load(tmp)
        assert again.frame_labels(pid) == labels

    plan = rp.split([0] * 40 + [1] * 20 + [2] * 20 + [3] * 20, "multiple_error_detection", 3)
    assert len(plan["test"]) == 20 and len(plan["val"]) == 8 and len(plan["train"]) == 72

    m = rp.metric_set([0, 1, 2, 2], [0, 1, 1, 2], 3)
    assert m["accuracy"] == 0.75 and m["recall"] == 5 / 6
    agg = rp.aggregate([m, m])
    assert agg["accuracy"]["mean"] == 0.75 and agg["accuracy"]["sd"] == 0.0

    p = rp.softmax([1000.0, 1000.0])
    assert p == [0.5, 0.5] and math.isclose(sum(rp.softmax([0.1, -2.0, 3.0])), 1.0)

    config = {"cell": "gru", "fusion": "late", "modalities": ["facial", "audio"], "hidden": 4, "epochs": 1}
    record = rp.run_fold(corpus, pid, config)
    assert record["status"] == "completed", record
    result = rp.run_config(corpus, config)
    assert len(result["folds"]) == 2
    first = result["folds"][0]
    for key in ("participant_id", "metrics", "confusion", "train_size", "checkpoint_checksum"):
        assert first[key] == record[key], key

    try:
        rp.run_config(corpus, {"cell": ["lstm", "gru"]})
    except ValueError as e:
        assert "run_grid" in str(e)
    else:
        raise AssertionError("multi-combination config accepted")

    try:
        rp.Corpus.load("/nonexistent/corpus")
    except RuntimeError:
        pass
    else:
        raise AssertionError("missing corpus accepted")

    table = rp.run_grid(corpus, {"cell": ["lstm", "gru"], "modalities": ["audio"], "hidden": 4, "epochs": 1})
    assert table.count("\n") >= 4, table
    print("smoke test ok")


if __name__ == "__main__":
    main()

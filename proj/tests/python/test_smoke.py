import json
import subprocess
import sys

import pytest

import score_detect as sd


def test_version():
    assert sd.__version__


def test_sha256_known_vector():
    assert (
        sd.sha256("abc")
        == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )


def test_scope_token_pairs_cover_tokens():
    pairs = sd.scope_token_pairs("x = 1\nprint(x)\n", "python")
    assert pairs
    tokens = [tok for _, tok in pairs]
    assert "print" in tokens
    for scopes, _ in pairs:
        assert scopes
        assert all("." not in atom or atom for atom in scopes)


def test_tree_graph_is_rooted_tree():
    g = sd.tree_graph("if [ -f /tmp/x ]; then cat /tmp/x; fi\n", "bash")
    n = len(g["kinds"])
    assert n > 1
    assert len(g["edges"]) == n - 1
    parents = {}
    for p, c in g["edges"]:
        assert 0 <= p < n and 0 < c < n
        assert c not in parents
        parents[c] = p
    assert len(parents) == n - 1


def test_unified_kinds_closed_set():
    kinds = sd.unified_kinds()
    assert "program" in kinds
    assert len(kinds) == len(set(kinds))


def test_auroc_and_threshold():
    scores = [0.9, 0.8, 0.3, 0.1]
    labels = [1, 1, 0, 0]
    assert sd.auroc(scores, labels) == 1.0
    thr = sd.threshold_at_fpr(scores, labels, 0.0)
    assert thr > 0.3
    with pytest.raises(sd.ScoreError):
        sd.auroc([0.5, 0.6], [1, 1])


def test_obfuscation_scan_base64():
    text = "payload='" + "QUJD" * 20 + "'\n"
    marks = sd.obfuscation_scan(text)
    assert marks["base64"]
    assert not marks["rot13"]


def test_synthesize_and_scan(tmp_path):
    corpus = tmp_path / "corpus"
    n = sd.synthesize(str(corpus), benign=3, malicious=3, seed=11)
    assert n == 6
    manifest = (corpus / "manifest.jsonl").read_text().splitlines()
    assert len(manifest) == 6
    rows = [json.loads(line) for line in manifest]
    assert {r["label"] for r in rows} == {"benign", "malicious"}


def test_gradcheck_small():
    r = sd.gradcheck(seed=3, per_tensor=1)
    assert r["sequential_max_rel_err"] <= 1e-4
    assert r["graph_max_rel_err"] <= 1e-4

import csv
import json

import numpy as np
import pytest

from protoseg.cli import main
from protoseg.grid import read_mask
from protoseg.qlpe import OtConfig, extract_weights, sinkhorn_cost


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.json").write_text(json.dumps({"synth": {"n_episodes": 3, "seed": 2, "corruption": 0.25},
                                            "pipeline": {"tau": 0.5}}))
    assert main(["synth", "--config", str(d / "cfg.json"), "--out", str(d / "corpus")]) == 0
    return d


def test_eval(corpus, tmp_path):
    args = ["eval", "--manifest", str(corpus / "corpus/manifest.json"), "--config", str(corpus / "cfg.json"),
            "--report", str(tmp_path / "r.jsonl"), "--summary", str(tmp_path / "s.json")]
    assert main(args) == 0
    assert len((tmp_path / "r.jsonl").read_text().splitlines()) == 3
    assert json.loads((tmp_path / "s.json").read_text())["n_ok"] == 3


def test_eval_partial_failure(corpus, tmp_path):
    man = json.loads((corpus / "corpus/manifest.json").read_text())
    man["episodes"][0]["support_image"] = "nope.pgm"
    (corpus / "corpus/broken.json").write_text(json.dumps(man))
    args = ["eval", "--manifest", str(corpus / "corpus/broken.json"),
            "--report", str(tmp_path / "r.jsonl"), "--summary", str(tmp_path / "s.json")]
    assert main(args) == 1


def test_ablate_and_sweep(corpus, tmp_path):
    m = str(corpus / "corpus/manifest.json")
    assert main(["ablate", "--manifest", m, "--out", str(tmp_path / "a.csv")]) == 0
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 6
    assert main(["sweep", "--manifest", m, "--k", "4,1", "--out", str(tmp_path / "s.csv")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert [r["k_max"] for r in rows] == ["4", "1"]


def test_infer(corpus, tmp_path):
    c = corpus / "corpus"
    args = ["infer", "--support-img", str(c / "ep0000_support.pgm"), "--support-mask",
            str(c / "ep0000_support_mask.tnsr"), "--query-img", str(c / "ep0000_query.pgm"),
            "--query-mask", str(c / "ep0000_query_mask.tnsr"), "--out", str(tmp_path / "o")]
    assert main(args) == 0
    rec = json.loads((tmp_path / "o/result.json").read_text())
    assert 0 <= rec["dice"] <= 1
    pred = read_mask(tmp_path / "o" / rec["files"]["pred_mask"][0])
    assert pred.shape == read_mask(c / "ep0000_query_mask.tnsr").shape


def test_ot_debug(tmp_path):
    C = np.array([[0.2, 1.1, 0.7], [0.9, 0.1, 1.5]])
    (tmp_path / "c.csv").write_text("\n".join(",".join(str(float(x)) for x in row) for row in C) + "\n")
    assert main(["ot-debug", "--cost", str(tmp_path / "c.csv"), "--epsilon", "0.1", "--out",
                 str(tmp_path / "t.csv")]) == 0
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t0", "t1", "t2", "w"]
    got = np.array([[float(x) for x in r] for r in rows[1:]])
    plan = sinkhorn_cost(C, OtConfig(epsilon=0.1))
    np.testing.assert_allclose(got[:, :3], plan.plan, rtol=1e-11)
    np.testing.assert_allclose(got[:, 3], extract_weights(plan, 1 - C), rtol=1e-11)
    assert all(x == f"{float(x):.12g}" for r in rows[1:] for x in r)


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["sweep", "--manifest", "m.json", "--k", "0,2", "--out", "x.csv"],
    ["eval", "--manifest", "does-not-exist.json", "--report", "r", "--summary", "s"],
])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_format_error_exit(tmp_path):
    (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n0")
    (tmp_path / "m.tnsr").write_bytes(b"XXXX")
    args = ["infer", "--support-img", str(tmp_path / "bad.pgm"), "--support-mask", str(tmp_path / "m.tnsr"),
            "--query-img", str(tmp_path / "bad.pgm"), "--out", str(tmp_path / "o")]
    assert main(args) == 2


def test_empty_manifest_exit(tmp_path):
    (tmp_path / "m.json").write_text('{"episodes": []}')
    assert main(["eval", "--manifest", str(tmp_path / "m.json"), "--report", str(tmp_path / "r"),
                 "--summary", str(tmp_path / "s")]) == 2

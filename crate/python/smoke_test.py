"""End-to-end smoke test for the cospeech Python bindings.

Builds a synthetic corpus, indexes it, embeds a short script with the mock
embedder, renders it twice with a small random-init model and checks the
outputs agree. Run after `pip install --no-build-isolation -e crates/py`.
"""

import json
import math
import os
import sys
import tempfile

import cospeech

SMALL_MODEL = ["--set", "d_model=64", "--set", "layers=1", "--set", "ff_width=128"]


def run(*args):
    code = cospeech.run(list(args))
    if code != 0:
        sys.exit(f"cospeech {args[0]} exited with {code}")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        p = lambda *parts: os.path.join(tmp, *parts)
        run("demo-corpus", "--out-dir", p("corpus"), "--count", "30", "--seed", "4")
        run("build-graph", "--bvh-dir", p("corpus"), "--out", p("art"), "--k", "5")
        with open(p("script.txt"), "w") as f:
            f.write("1.6\tHello there.\n2.2\tThis is a quick check.\n")
        run("mock-embed", "--input", p("script.txt"), "--out-dir", p("emb"))

        os.environ["TRIMM_CONFIG"] = p("art", "cospeech.conf")
        for name in ("a", "b"):
            run("infer", "--text", p("emb", "text.trmf"), "--audio", p("emb", "audio.trmf"),
                "--tail-duration", "2.0", "--out", p(f"{name}.bvh"),
                "--frames-out", p(f"{name}.jsonl"), *SMALL_MODEL)

        a, b = (open(p(f"{n}.bvh")).read() for n in ("a", "b"))
        assert a == b, "inference is not deterministic"
        assert cospeech.normalize_bvh(a) == a, "writer output is not canonical"

        frames = [json.loads(line) for line in open(p("a.jsonl"))]
        stamps = [f["timestamp_ms"] / 1000.0 for f in frames]
        assert all(abs(t2 - t1 - 1 / 60) < 1e-6 for t1, t2 in zip(stamps, stamps[1:]))

    feats = [[float(i + j) for j in range(4)] for i in range(10)]
    assert abs(cospeech.fgd(feats, feats)) < 1e-6
    assert cospeech.beat_align([1.0, 2.0], [1.0, 2.0]) == 1.0
    mid = cospeech.slerp([1, 0, 0, 0], [0, 0, 0, 1], 0.5)
    assert abs(mid[0] - math.sqrt(0.5)) < 1e-12 and abs(mid[3] - math.sqrt(0.5)) < 1e-12
    emb = cospeech.mock_embed(b"hello", 8)
    assert len(emb) == 8 and emb == cospeech.mock_embed(b"hello", 8)

    print(f"smoke test ok: {len(frames)} frames")


if __name__ == "__main__":
    main()

"""Smoke test for the Python bindings.

    pip install --no-build-isolation ./crates/py
    python python/smoke_test.py
"""
import json
import pathlib
import sys
import tempfile

import needlestack

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "data" / "corpus"


def main():
    print("needlestack", needlestack.version())
    assert needlestack.tasks() == ["qa1", "qa2", "qa3", "qa4", "qa5"]

    gen = needlestack.Generator(str(CORPUS), 512)
    tok = gen.tokenizer()
    assert len(tok) <= 512
    records = gen.generate("qa1", 8, 256, 7)
    assert len(records) == 8
    again = gen.generate("qa1", 8, 256, 7)
    assert json.dumps(records) == json.dumps(again)

    for r in records:
        assert needlestack.oracle_answer(r["task"], r["facts"], r["question"]) == r["answer"]
        assert needlestack.score_answer(r["answer"].upper() + ".", r["answer"], "qa1")
        assert tok.decode(tok.encode(r["question"])) == r["question"]

    prompt = needlestack.build_prompt("qa1", records[0]["context"], records[0]["question"])
    assert records[0]["question"] in prompt

    report = needlestack.recall_at_k(records, [1, 3, 5])
    by_series = {}
    for row in report["rows"]:
        by_series.setdefault((row["chunking"], row["length"]), []).append(row["recall"])
    assert all(v == sorted(v) for v in by_series.values())

    with tempfile.TemporaryDirectory() as tmp:
        run = pathlib.Path(tmp) / "train"
        code = needlestack.run_cli([
            "--threads", "1", "--run-dir", str(run), "train",
            "--set", f"data.corpus={CORPUS}",
            "--set", "model.d_model=16", "--set", "model.d_ff=32",
            "--set", "rmt.mem_tokens=2", "--set", "rmt.segment_len=32",
            "--set", "curriculum.stages=[1]", "--set", "train.total_steps=4",
            "--set", "train.batch_size=2", "--set", "train.val_samples=2",
        ])
        assert code == 0, code
        model = needlestack.Model.load(str(run / "checkpoints" / "last.ckpt"))
        assert model.mode == "rmt" and model.segment_len == 32
        short = gen.generate("qa1", 2, 40, 1)
        assert isinstance(model.predict(short[0]), str)
        cells = model.evaluate(short)["cells"]
        assert 0.0 <= cells[0]["accuracy"] <= 1.0

    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())

"""Runs the full CLI pipeline in a directory and collects every output."""

import contextlib
import io
import json
from pathlib import Path

from fallrisk.cli import main


def call(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rc = main([str(a) for a in argv])
    return rc, out.getvalue(), err.getvalue()


def run_pipeline(workdir, n=300, seed=42):
    d = Path(workdir)
    outputs = {}
    data, model = d / "data.jsonl", d / "model.json"

    rc, out, _ = call(["generate", "--n", n, "--class-mix", 0.5, "--seed", seed, "--out", data])
    assert rc == 0
    outputs["generate"] = data.read_bytes()

    rc, out, _ = call(["train", "--data", data, "--feature-set", "kp-knee-head", "--seed", seed,
                       "--out-model", model, "--trees", 30])
    assert rc == 0
    outputs["train"] = model.read_bytes() + out.encode()

    rc, out, _ = call(["evaluate", "--data", data, "--feature-set", "knee-head", "--folds", 5, "--repeats", 2,
                       "--seed", seed, "--trees", 30, "--emit-csv", d / "folds.csv", "--report", d / "report.json"])
    assert rc == 0
    outputs["evaluate"] = out.encode() + (d / "folds.csv").read_bytes() + (d / "report.json").read_bytes()

    frames = d / "frames.jsonl"
    with open(data) as src, open(frames, "w") as dst:
        for line in src:
            obj = json.loads(line)
            if "frame" in obj:
                dst.write(json.dumps(obj["frame"], separators=(",", ":")) + "\n")
    rc, out, _ = call(["monitor", "--model", model, "--input", frames, "--output", d / "alerts.jsonl",
                       "--raise", 2, "--clear", 2])
    assert rc == 0
    outputs["monitor"] = (d / "alerts.jsonl").read_bytes()
    return outputs

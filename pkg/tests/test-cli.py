#!/usr/bin/env python3
"""Tests for the sarcoast command line and the end-to-end pipeline.

Set SARCOAST_FULL_BENCH=1 to also run the full-size demo benchmark.
"""
import json
import os
import shutil
import subprocess
import sys
import tempfile
import time

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

from sarcoast.raster import FloatRaster, read_coastline_csv, read_float_raster, read_mask, write_float_raster

passed = 0
failed = 0


def test(name, func):
    global passed, failed
    try:
        func()
        print("✅ %s" % name)
        passed += 1
    except AssertionError as e:
        print("❌ %s" % name)
        print("   %s" % e)
        failed += 1


def clean_env():
    env = os.environ.copy()
    for key in list(env.keys()):
        if key.startswith('SARCOAST_'):
            del env[key]
    env['PYTHONPATH'] = ROOT
    return env


def sarcoast(args, cwd):
    return subprocess.run(
        [sys.executable, '-m', 'sarcoast'] + args,
        capture_output=True,
        text=True,
        env=clean_env(),
        cwd=cwd
    )


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def in_tmp(func):
    def run():
        tmp = tempfile.mkdtemp()
        try:
            func(tmp)
        finally:
            shutil.rmtree(tmp)
    return run


PREDICTORS = [
    ("softmax-log", "softmax3", "log"),
    ("softmax-linear", "softmax3", "linear"),
    ("sigmoid-log", "sigmoid1", "log"),
    ("sigmoid-linear", "sigmoid1", "linear"),
]


def small_config(path, seed=1, noise=0.08, predictors=PREDICTORS, width=512, height=256):
    lines = [
        "[scene]",
        "width = %d" % width,
        "height = %d" % height,
        "amplitudes = [20.0, 6.0]",
        "frequencies = [2.0, 5.0]",
        "phases = [0.0, 1.0]",
        "point_spacing = 2",
        "seed = %d" % seed,
        "",
        "[tiling]",
        "tile_side = 64",
        "stride = 32",
        "scales = [1.0, 2.0]",
        "",
        "[output]",
        'dir = "out"',
        "",
    ]
    for i, (pid, head, mode) in enumerate(predictors):
        # noise dominated, so each member is about a pixel off independently
        sharpness = 0.02 if head == "softmax3" else 0.0025
        lines += [
            "[[predictors]]",
            'id = "%s"' % pid,
            'head = "%s"' % head,
            'input_mode = "%s"' % mode,
            "backend = { type = \"oracle\", sharpness = %r, noise_sigma = %r, seed = %d }"
            % (sharpness, noise, 100 * seed + i),
            "",
        ]
    with open(path, "w") as f:
        f.write("\n".join(lines))
    return path


@in_tmp
def test_usage_errors(tmp):
    result = sarcoast(["--no-such-flag", "synth", "x"], tmp)
    assert result.returncode == 1, "unknown flag gave %d" % result.returncode
    result = sarcoast(["frobnicate"], tmp)
    assert result.returncode == 1, "unknown subcommand gave %d" % result.returncode
    result = sarcoast([], tmp)
    assert result.returncode == 1, "missing subcommand gave %d" % result.returncode
    result = sarcoast(["synth", "x", "--threads", "many"], tmp)
    assert result.returncode == 1, "bad --threads after the subcommand gave %d" % result.returncode
    result = sarcoast(["--help"], tmp)
    assert result.returncode == 0 and "pipeline" in result.stdout


@in_tmp
def test_data_errors(tmp):
    result = sarcoast(["evaluate", "missing.pgm", "points.csv"], tmp)
    assert result.returncode == 2, "missing file gave %d" % result.returncode
    assert "[evaluate]" in result.stderr, result.stderr
    result = sarcoast(["--config", "nope.toml", "synth", "out"], tmp)
    assert result.returncode == 2, "missing config gave %d" % result.returncode
    assert "[config]" in result.stderr, result.stderr
    result = sarcoast(["synth", "out", "--config", "nope.toml"], tmp)
    assert result.returncode == 2 and "[config]" in result.stderr, result.stderr


@in_tmp
def test_synth(tmp):
    result = sarcoast(["synth", "scene", "--width", "64", "--height", "48",
                       "--amplitudes", "4", "--frequencies", "1", "--phases", "0"], tmp)
    assert result.returncode == 0, result.stderr
    for name in ("image.pgm", "classes.pgm", "coast.pgm", "points.csv"):
        assert os.path.isfile(os.path.join(tmp, "scene", name)), "%s missing" % name
    with open(os.path.join(tmp, "scene", "points.csv")) as f:
        assert f.readline() == "x,y\n"
    assert read_mask(os.path.join(tmp, "scene", "coast.pgm")).width == 64


@in_tmp
def test_extract_sigmoid(tmp):
    prob = os.path.join(tmp, "in.fr")
    write_float_raster(FloatRaster(np.random.default_rng(1).random((12, 20))), prob)
    result = sarcoast(["extract", "--head", "sigmoid", "in.fr", "out.csv", "--mask", "m.pgm"], tmp)
    assert result.returncode == 0, result.stderr
    with open(os.path.join(tmp, "out.csv")) as f:
        lines = f.read().splitlines()
    assert lines[0] == "x,y" and len(lines) == 21, "expected one row per column"
    assert read_mask(os.path.join(tmp, "m.pgm")).data.sum() == 20


@in_tmp
def test_infer_channel_mismatch(tmp):
    write_float_raster(FloatRaster(np.zeros((16, 16))), os.path.join(tmp, "img.fr"))
    result = sarcoast(["infer", "img.fr", "out.fr", "--head", "softmax",
                       "--backend", "constant:0.5:1", "--tile-side", "8", "--stride", "4"], tmp)
    assert result.returncode == 2, "got %d" % result.returncode
    assert "channel mismatch" in result.stderr, result.stderr
    assert not os.path.exists(os.path.join(tmp, "out.fr"))


@in_tmp
def test_infer_threads(tmp):
    sarcoast(["synth", "s", "--width", "96", "--height", "64", "--amplitudes", "6",
              "--frequencies", "1", "--phases", "0"], tmp)
    outputs = []
    for threads in ("1", "4"):
        out = "p%s.fr" % threads
        result = sarcoast(["--threads", threads, "infer", "s/image.pgm", out, "--head", "softmax3",
                           "--backend", "oracle:s/classes.pgm", "--tile-side", "32",
                           "--stride", "16", "--scales", "1,2"], tmp)
        assert result.returncode == 0, result.stderr
        outputs.append(read_bytes(os.path.join(tmp, out)))
    assert outputs[0] == outputs[1], "infer output depends on --threads"
    result = sarcoast(["infer", "s/image.pgm", "p2.fr", "--head", "softmax3", "--threads", "2",
                       "--backend", "oracle:s/classes.pgm", "--tile-side", "32",
                       "--stride", "16", "--scales", "1,2", "-q"], tmp)
    assert result.returncode == 0, "--threads after the subcommand: %s" % result.stderr
    assert read_bytes(os.path.join(tmp, "p2.fr")) == outputs[0]
    assert read_float_raster(os.path.join(tmp, "p1.fr")).channels == 3


@in_tmp
def test_stepwise_pipeline(tmp):
    steps = [
        ["synth", "s", "--width", "96", "--height", "64", "--amplitudes", "6",
         "--frequencies", "1", "--phases", "0", "--point-spacing", "4"],
        ["preprocess", "s/image.pgm", "s/image.fr", "--mode", "linear",
         "--classes", "s/classes.pgm", "--coast", "s/coast.pgm", "--labels-out", "s/labels.fr"],
        ["infer", "s/image.fr", "a.fr", "--head", "sigmoid1", "--backend", "oracle:s/classes.pgm",
         "--tile-side", "32", "--stride", "16", "--scales", "1"],
        ["infer", "s/image.fr", "b.fr", "--head", "softmax3", "--backend", "oracle:s/classes.pgm",
         "--tile-side", "32", "--stride", "16", "--scales", "1", "--flips"],
        ["extract", "--head", "sigmoid1", "a.fr", "a.csv"],
        ["extract", "--head", "softmax3", "b.fr", "b.csv"],
        ["ensemble", "a.csv", "b.csv", "-o", "fused.csv", "--weights", "1,1"],
        ["postprocess", "fused.csv", "fused.pgm", "--width", "96", "--height", "64",
         "--csv", "dense.csv"],
        ["evaluate", "fused.pgm", "s/points.csv", "-o", "score.json"],
    ]
    for args in steps:
        result = sarcoast(args, tmp)
        assert result.returncode == 0, "%s failed: %s" % (args[0], result.stderr)
    assert read_float_raster(os.path.join(tmp, "s", "labels.fr")).channels == 4
    fused = read_coastline_csv(os.path.join(tmp, "fused.csv"))
    assert fused.axis_length == 96
    with open(os.path.join(tmp, "score.json")) as f:
        report = json.load(f)
    assert report["miss_count"] == 0
    assert report["mean_score"] <= 2.0, report["mean_score"]
    assert "mean score" in result.stdout


@in_tmp
def test_augment(tmp):
    sarcoast(["synth", "a", "--width", "80", "--height", "60", "--amplitudes", "5",
              "--frequencies", "1", "--phases", "0", "--seed", "1"], tmp)
    sarcoast(["synth", "b", "--width", "70", "--height", "64", "--amplitudes", "5",
              "--frequencies", "2", "--phases", "0", "--seed", "2"], tmp)
    args = ["augment", "out", "--source", "a/image.pgm,a/classes.pgm",
            "--source", "b/image.pgm,b/classes.pgm", "--count", "6", "--seed", "3",
            "--crop-min", "32", "--crop-max", "48", "--model-side", "32"]
    result = sarcoast(args, tmp)
    assert result.returncode == 0, result.stderr
    first = read_bytes(os.path.join(tmp, "out", "sample_0005_image.fr"))
    provenance = read_bytes(os.path.join(tmp, "out", "provenance.jsonl"))
    lines = provenance.decode().splitlines()
    records = [json.loads(line) for line in lines]
    assert len(records) >= 6, "expected at least one record per sample"
    assert sorted(set(r["index"] for r in records)) == list(range(6))
    assert [r["index"] for r in records] == sorted(r["index"] for r in records)
    assert records[0]["source"] in ("0:image.pgm", "1:image.pgm")
    for i in range(6):
        area = sum(r["dst"][2] * r["dst"][3] for r in records if r["index"] == i)
        assert area == 32 * 32, "sample %d records cover %d pixels" % (i, area)
    label = read_float_raster(os.path.join(tmp, "out", "sample_0000_label.fr"))
    assert (label.width, label.height, label.channels) == (32, 32, 3)
    result = sarcoast(args, tmp)
    assert result.returncode == 0, result.stderr
    assert read_bytes(os.path.join(tmp, "out", "sample_0005_image.fr")) == first, "rerun differs"
    assert read_bytes(os.path.join(tmp, "out", "provenance.jsonl")) == provenance


@in_tmp
def test_pipeline(tmp):
    config = small_config(os.path.join(tmp, "run.toml"))
    result = sarcoast(["--config", config, "pipeline"], tmp)
    assert result.returncode == 0, result.stderr
    out = os.path.join(tmp, "out")
    with open(os.path.join(out, "score.json")) as f:
        report = json.load(f)
    assert report["miss_count"] == 0, report["miss_count"]
    assert report["mean_score"] <= 2.0, report["mean_score"]
    members = report["members"]
    assert sorted(members) == sorted(p[0] for p in PREDICTORS)
    best = min(m["mean_score"] for m in members.values())
    assert report["mean_score"] < best, "ensemble %.4f not better than the best member %.4f" % (
        report["mean_score"], best)
    for name in ("coastline.csv", "coastline.pgm", "image.pgm", "points.csv", "sigmoid-log.csv"):
        assert os.path.isfile(os.path.join(out, name)), "%s missing" % name

    first = read_bytes(os.path.join(out, "score.json"))
    mask = read_bytes(os.path.join(out, "coastline.pgm"))
    result = sarcoast(["pipeline", "--config", config, "--threads", "3"], tmp)
    assert result.returncode == 0, result.stderr
    assert read_bytes(os.path.join(out, "score.json")) == first, "score.json differs on rerun"
    assert read_bytes(os.path.join(out, "coastline.pgm")) == mask, "mask differs on rerun"


@in_tmp
def test_pipeline_stage_errors(tmp):
    config = small_config(os.path.join(tmp, "run.toml"), predictors=[("bad", "softmax3", "log")])
    with open(config) as f:
        text = f.read().replace('type = "oracle"', 'type = "file", pattern = "none/{row}.fr"')
    with open(config, "w") as f:
        f.write(text)
    result = sarcoast(["--config", config, "pipeline"], tmp)
    assert result.returncode == 2, "got %d" % result.returncode
    assert "[infer:bad]" in result.stderr, result.stderr


def pipeline_score(tmp, seed, noise):
    name = "run_%d_%s" % (seed, noise)
    config = small_config(os.path.join(tmp, name + ".toml"), seed=seed, noise=noise,
                          predictors=[PREDICTORS[0], PREDICTORS[2]])
    result = sarcoast(["--config", config, "pipeline", "-o", os.path.join(tmp, name)], tmp)
    assert result.returncode == 0, result.stderr
    with open(os.path.join(tmp, name, "score.json")) as f:
        return json.load(f)["mean_score"]


@in_tmp
def test_noise_degrades_score(tmp):
    seeds = range(1, 6)
    low = sum(pipeline_score(tmp, s, 0.02) for s in seeds) / 5
    high = sum(pipeline_score(tmp, s, 0.3) for s in seeds) / 5
    assert high > low, "noise 0.3 scored %.4f, noise 0.02 scored %.4f" % (high, low)


@in_tmp
def test_full_benchmark(tmp):
    """Full-size demo: four predictors on a 2048x1536 scene."""
    demo = os.path.join(ROOT, "demo", "demo.toml")
    timings = {}
    for threads in ("1", "4"):
        out = os.path.join(tmp, "t" + threads)
        start = time.time()
        result = sarcoast(["--threads", threads, "--config", demo, "pipeline", "-o", out], tmp)
        timings[threads] = time.time() - start
        assert result.returncode == 0, result.stderr
    with open(os.path.join(tmp, "t1", "score.json")) as f:
        report = json.load(f)
    assert report["miss_count"] == 0
    assert report["mean_score"] <= 2.0, report["mean_score"]
    best = min(m["mean_score"] for m in report["members"].values())
    assert report["mean_score"] < best, "ensemble %.4f vs best member %.4f" % (
        report["mean_score"], best)
    assert timings["1"] < 120, "single-threaded run took %.1fs" % timings["1"]
    assert timings["1"] >= 2 * timings["4"], "4 threads: %.1fs vs %.1fs" % (
        timings["4"], timings["1"])
    assert read_bytes(os.path.join(tmp, "t1", "score.json")) == \
        read_bytes(os.path.join(tmp, "t4", "score.json"))


if __name__ == '__main__':
    test("usage errors exit 1", test_usage_errors)
    test("data errors exit 2 with the stage", test_data_errors)
    test("synth", test_synth)
    test("extract sigmoid", test_extract_sigmoid)
    test("infer channel mismatch", test_infer_channel_mismatch)
    test("infer is independent of threads", test_infer_threads)
    test("stepwise pipeline", test_stepwise_pipeline)
    test("augment", test_augment)
    test("pipeline", test_pipeline)
    test("pipeline stage errors", test_pipeline_stage_errors)
    test("noise degrades the score", test_noise_degrades_score)
    if os.environ.get("SARCOAST_FULL_BENCH") == "1":
        test("full benchmark", test_full_benchmark)

    print("")
    print("Passed: %d, Failed: %d" % (passed, failed))
    if failed > 0:
        exit(1)

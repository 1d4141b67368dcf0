#!/usr/bin/env python3
"""Tests for tile predictors, floating-window inference and smoothing."""
import math
import os
import shutil
import sys
import tempfile

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from sarcoast.errors import BackendError, ChannelMismatchError, MissingPredictionError
from sarcoast.predict import (
    ConstantBackend,
    ExternalBackend,
    FileBackend,
    OracleBackend,
    OracleConfig,
    PredictorSpec,
    TileWindow,
    TilingConfig,
    gaussian_smooth,
    oracle_predict,
    predict_tile,
    tiled_predict,
    window_origins,
)
from sarcoast.raster import ClassMap, FloatRaster, write_float_raster
from sarcoast.synth import SceneConfig, generate_scene

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
    except Exception as e:
        print("❌ %s" % name)
        print("   %s: %s" % (type(e).__name__, e))
        failed += 1


def constant(value, head="sigmoid1", channels=None):
    if channels is None:
        channels = 3 if head == "softmax3" else 1
    return PredictorSpec("const", "linear", head, ConstantBackend(value, channels))


def image(h, w, seed=0):
    return FloatRaster(np.random.default_rng(seed).random((h, w, 1)))


def half_planes(h=64, w=48, land_from=40):
    classes = np.zeros((h, w), dtype=np.uint8)
    classes[land_from:] = 2
    return ClassMap(classes)


def test_constant_backend():
    out = predict_tile(constant(0.7), image(8, 8))
    assert (out.data == np.float32(0.7)).all()


def test_channel_mismatch():
    try:
        predict_tile(constant(0.5, "softmax3", channels=1), image(4, 4))
        assert False, "1-channel output accepted for a softmax head"
    except ChannelMismatchError as e:
        assert "channel mismatch" in str(e)


def test_oracle_softmax_logistic():
    cfg = OracleConfig(half_planes(), sharpness=1.0)
    full = oracle_predict(cfg, "softmax3", TileWindow(1.0, 0, 0, 64)).data
    expected = 1.0 / (1.0 + math.exp(-10.0))
    assert abs(full[49, 10, 2] - expected) < 1e-6, full[49, 10]
    assert np.allclose(full[5, 10], [1.0, 0.0, 0.0], atol=1e-6), full[5, 10]


def test_oracle_sigmoid_on_coast():
    scene = generate_scene(SceneConfig(width=64, height=48, amplitudes=(4.0,), frequencies=(1.0,),
                                       phases=(0.0,), point_spacing=4, seed=3))
    cfg = OracleConfig(scene.classes, coast=scene.coast)
    p = oracle_predict(cfg, "sigmoid1", TileWindow(1.0, 0, 0, 64)).data[:48, :, 0]
    rows = np.argmax(p, axis=0)
    truth = np.floor(scene.curve + 0.5).astype(int)
    assert np.array_equal(rows, truth), "argmax rows differ in %d columns" % (rows != truth).sum()
    assert (p[truth, np.arange(64)] == 1.0).all()


def test_file_backend():
    tmp = tempfile.mkdtemp()
    try:
        pattern = os.path.join(tmp, "tile_{scale}_{row}_{col}.fr")
        spec = PredictorSpec("file", "log", "sigmoid1", FileBackend(pattern))
        window = TileWindow(1.0, 0, 0, 4)
        write_float_raster(FloatRaster(np.full((4, 4), 0.25)), pattern.format(scale=1.0, row=0, col=0))
        assert (predict_tile(spec, image(4, 4), window).data == 0.25).all()
        try:
            predict_tile(spec, image(4, 4), TileWindow(1.0, 4, 0, 4))
            assert False, "missing tile accepted"
        except MissingPredictionError:
            pass
    finally:
        shutil.rmtree(tmp)


def test_external_backend():
    script = ("import sys, shutil; shutil.copyfile(sys.argv[1], sys.argv[2])")
    spec = PredictorSpec("ext", "log", "sigmoid1", ExternalBackend([sys.executable, "-c", script]))
    tile = image(4, 4, seed=2)
    assert np.array_equal(predict_tile(spec, tile).data, tile.data)
    failing = PredictorSpec("bad", "log", "sigmoid1",
                            ExternalBackend([sys.executable, "-c", "import sys; sys.exit(3)"]))
    try:
        predict_tile(failing, tile)
        assert False, "nonzero exit accepted"
    except BackendError:
        pass


def test_coverage_mean_is_one():
    rng = np.random.default_rng(11)
    cfg = TilingConfig(tile_side=16, stride=8, scales=(1.0, 1.5, 2.0))
    for _ in range(20):
        h, w = (int(v) for v in rng.integers(1, 80, size=2))
        out = tiled_predict(constant(1.0), image(h, w), cfg)
        assert (out.data == 1.0).all(), "%dx%d image not all ones" % (w, h)
        assert (out.width, out.height) == (w, h)


def test_sum_without_overlap():
    cfg = TilingConfig(tile_side=8, stride=8, scales=(1.0,), smoothing_sigma=0, aggregation="sum")
    out = tiled_predict(constant(1.0), image(24, 32), cfg)
    assert (out.data == 1.0).all()


def test_sum_coverage_count():
    side, step, n = 8, 4, 40
    cfg = TilingConfig(tile_side=side, stride=step, scales=(1.0,), smoothing_sigma=0,
                       aggregation="sum")
    out = tiled_predict(constant(1.0), image(n, n), cfg).plane(0)
    counts = np.zeros((n, n))
    for y in range(0, n - side + 1, step):
        for x in range(0, n - side + 1, step):
            counts[y:y + side, x:x + side] += 1
    assert out[20, 20] == 4.0, out[20, 20]
    assert np.array_equal(out, counts), "coverage differs from enumeration"


def test_thread_count_invariance():
    truth = half_planes(70, 90, 33)
    spec = PredictorSpec("oracle", "log", "softmax3",
                         OracleBackend(OracleConfig(truth, noise_sigma=0.1, seed=5), "softmax3"))
    cfg = TilingConfig(tile_side=16, stride=8, scales=(1.0, 2.0), flips=True)
    img = image(70, 90, seed=4)
    outputs = [tiled_predict(spec, img, cfg, threads=t).data.tobytes() for t in (1, 2, 8)]
    assert outputs[0] == outputs[1] == outputs[2], "output depends on thread count"


def test_window_origins():
    assert window_origins(10, 16, 8) == [0]
    assert window_origins(40, 8, 4) == list(range(0, 33, 4))
    assert window_origins(21, 8, 8) == [0, 8, 13]


def test_gaussian_smooth():
    r = image(9, 9)
    assert gaussian_smooth(r, 0) is r
    flat = FloatRaster(np.full((12, 7, 3), 0.4))
    assert np.allclose(gaussian_smooth(flat, 1.7).data, 0.4, atol=1e-7)

    impulse = np.zeros((9, 9))
    impulse[4, 4] = 1.0
    out = gaussian_smooth(FloatRaster(impulse), 1.0).plane(0)
    grid = np.arange(-3, 4)
    dense = np.exp(-(grid[:, None] ** 2 + grid[None, :] ** 2) / 2.0)
    dense /= dense.sum()
    assert abs(out[4, 4] - dense[3, 3]) < 1e-6, (out[4, 4], dense[3, 3])
    assert np.allclose(out[1:8, 1:8], dense, atol=1e-6)


if __name__ == '__main__':
    test("constant backend", test_constant_backend)
    test("channel mismatch", test_channel_mismatch)
    test("oracle softmax logistic", test_oracle_softmax_logistic)
    test("oracle sigmoid on the coast", test_oracle_sigmoid_on_coast)
    test("file backend", test_file_backend)
    test("external backend", test_external_backend)
    test("coverage mean is one on 20 sizes", test_coverage_mean_is_one)
    test("sum without overlap", test_sum_without_overlap)
    test("sum equals coverage count", test_sum_coverage_count)
    test("thread count invariance", test_thread_count_invariance)
    test("window origins", test_window_origins)
    test("gaussian smoothing", test_gaussian_smooth)

    print("")
    print("Passed: %d, Failed: %d" % (passed, failed))
    if failed > 0:
        exit(1)

"""sarcoast command line.

    sarcoast [--config FILE] [-v|-q] [--threads N] <subcommand> ...

The global options may also follow the subcommand.

Exit status is 0 on success, 1 on a usage error and 2 on a data error,
reported as ``error: [<stage>] <message>``.
"""
import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager

from . import __version__
from . import config
from .augment import Source, generate_samples
from .ensemble import densify_path, ensemble_paths, fill_gaps
from .errors import ConfigError, SarcoastError, UsageError
from .evaluate import score
from .extract import ORIENTATION_RULES, extract, mask_to_path
from .log import setup_logging
from .predict import (
    AGGREGATIONS,
    HEAD_CHANNELS,
    INPUT_MODES,
    ConstantBackend,
    PredictorSpec,
    canonical_head,
    tiled_predict,
)
from .preprocess import encode_labels, normalize
from .raster import (
    LANDSCAPE,
    read_class_map,
    read_coastline_csv,
    read_float_raster,
    read_mask,
    read_points_csv,
    read_raster,
    write_class_map,
    write_coastline_csv,
    write_float_raster,
    write_mask,
    write_points_csv,
    write_raster,
)
from .synth import generate_scene

log = logging.getLogger(__name__)

HEADS = tuple(HEAD_CHANNELS) + ("softmax", "sigmoid")


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("%s: %s" % (self.prog, message))


@contextmanager
def stage(name):
    """Tag data errors raised inside the block with the pipeline stage."""
    try:
        yield
    except SarcoastError as e:
        if e.stage is None:
            e.stage = name
        raise


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated numbers, got %r" % text)


def _threads():
    return int(config.get_conf("run.threads", 1))


def _ensure_dir(path):
    if path:
        os.makedirs(path, exist_ok=True)


def _read_input_raster(path, mode):
    """A .fr file is taken as already normalised; anything else is a u16 PGM."""
    if path.endswith(".fr"):
        return read_float_raster(path)
    return normalize(read_raster(path), config.preprocess_config(mode))


# synth

def cmd_synth(args):
    with stage("synth"):
        scene = generate_scene(config.scene_config())
        _ensure_dir(args.outdir)
        write_scene(scene, args.outdir)
    return 0


def write_scene(scene, outdir):
    write_raster(scene.image, os.path.join(outdir, "image.pgm"))
    write_class_map(scene.classes, os.path.join(outdir, "classes.pgm"))
    write_mask(scene.coast, os.path.join(outdir, "coast.pgm"))
    write_points_csv(scene.points, os.path.join(outdir, "points.csv"))
    log.info("wrote image.pgm, classes.pgm, coast.pgm and points.csv to %s", outdir)


# preprocess

def cmd_preprocess(args):
    with stage("preprocess"):
        img = read_raster(args.image)
        write_float_raster(normalize(img, config.preprocess_config()), args.output)
        if args.classes:
            if not args.labels_out:
                raise UsageError("--classes needs --labels-out")
            classes = read_class_map(args.classes)
            coast = read_mask(args.coast) if args.coast else None
            labels = encode_labels(classes, coast, with_coast=coast is not None,
                                   smoothing=config.label_config())
            write_float_raster(labels, args.labels_out)
    return 0


# augment

def _parse_source(text):
    parts = text.split(",")
    if not 2 <= len(parts) <= 3:
        raise UsageError("--source expects image.pgm,classes.pgm[,coast.pgm], got %r" % text)
    return parts


def cmd_augment(args):
    with stage("augment"):
        pre = config.preprocess_config()
        smoothing = config.label_config()
        sources = []
        for i, text in enumerate(args.source):
            parts = _parse_source(text)
            image = normalize(read_raster(parts[0]), pre)
            coast = read_mask(parts[2]) if len(parts) == 3 else None
            label = encode_labels(read_class_map(parts[1]), coast, with_coast=coast is not None,
                                  smoothing=smoothing)
            sources.append(Source("%d:%s" % (i, os.path.basename(parts[0])), image, label))
        samples = generate_samples(sources, args.count, config.augment_config(), _threads())
        _ensure_dir(args.outdir)
        with open(os.path.join(args.outdir, "provenance.jsonl"), "w") as f:
            for i, s in enumerate(samples):
                write_float_raster(s.image, os.path.join(args.outdir, "sample_%04d_image.fr" % i))
                write_float_raster(s.label, os.path.join(args.outdir, "sample_%04d_label.fr" % i))
                for p in s.provenance:
                    f.write(json.dumps(dict(index=i, **p.to_dict()), sort_keys=True) + "\n")
    return 0


# infer

def parse_backend(text, head):
    """type:arg, e.g. constant:0.5, constant:0.5:1, file:tiles/{scale}_{row}_{col}.fr,
    external:'./model --gpu', oracle:classes.pgm."""
    kind, _, arg = text.partition(":")
    if kind == "constant":
        value, _, channels = arg.partition(":")
        try:
            return ConstantBackend(float(value or 1.0),
                                   int(channels) if channels else HEAD_CHANNELS[canonical_head(head)])
        except ValueError:
            raise UsageError("bad constant backend %r" % text)
    if kind in ("file", "external"):
        if not arg:
            raise UsageError("%s backend needs an argument" % kind)
        table = {"type": kind, "pattern": arg} if kind == "file" else {"type": kind, "command": arg}
        return config.make_backend(table, head)
    if kind == "oracle":
        return config.make_backend({"type": "oracle", "truth": os.path.abspath(arg)}, head)
    raise UsageError("unknown backend %r (constant, file, external or oracle)" % kind)


def _cli_predictor(args):
    if args.predictor:
        for spec in config.predictor_specs():
            if spec.id == args.predictor:
                return spec
        raise ConfigError("no predictor with id %r in the config" % args.predictor)
    if not args.head or not args.backend:
        raise UsageError("infer needs --predictor, or --head and --backend")
    return PredictorSpec("cli", args.input_mode, args.head, parse_backend(args.backend, args.head))


def cmd_infer(args):
    with stage("infer"):
        spec = _cli_predictor(args)
        image = _read_input_raster(args.image, spec.input_mode)
        prob = tiled_predict(spec, image, config.tiling_config(), _threads())
        write_float_raster(prob, args.output)
    return 0


# extract

def cmd_extract(args):
    with stage("extract"):
        prob = read_float_raster(args.input)
        mask = extract(prob, canonical_head(args.head), args.orientation)
        write_coastline_csv(mask_to_path(mask, args.orientation), args.output)
        if args.mask:
            write_mask(mask, args.mask)
    return 0


# ensemble

def _weights(text, n):
    if text is None:
        return [1.0] * n
    try:
        return [float(w) for w in text.split(",")]
    except ValueError:
        raise UsageError("--weights expects comma separated numbers")


def cmd_ensemble(args):
    with stage("ensemble"):
        paths = [read_coastline_csv(p) for p in args.inputs]
        fused = ensemble_paths(paths, _weights(args.weights, len(paths)))
        write_coastline_csv(fused, args.output)
    return 0


# postprocess

def cmd_postprocess(args):
    with stage("postprocess"):
        probe = read_coastline_csv(args.input)
        landscape = probe.orientation == LANDSCAPE
        length, extent = (args.width, args.height) if landscape else (args.height, args.width)
        path = read_coastline_csv(args.input, length=length, extent=extent)
        interpolate = not args.no_interpolate
        mask = fill_gaps(path, extent, length, interpolate=interpolate)
        write_mask(mask, args.output)
        if args.csv:
            write_coastline_csv(densify_path(path, length) if interpolate else path, args.csv)
    return 0


# evaluate

def cmd_evaluate(args):
    with stage("evaluate"):
        mask = read_mask(args.mask)
        report = score(mask, read_points_csv(args.points), config.score_config())
        if args.output:
            with open(args.output, "w") as f:
                f.write(report.to_json())
    print("mean score: %.4f px (%d hits, %d misses)" % (
        report.mean_score, report.hit_count, report.miss_count))
    return 0


# pipeline

def _pipeline_inputs(outdir):
    """Generate the [scene], or read the files named under [input]."""
    image_path = config.get_conf("input.image")
    if image_path is None or config.has_section("scene"):
        with stage("synth"):
            scene = generate_scene(config.scene_config())
            write_scene(scene, outdir)
        return scene.image, scene.points, scene.classes, scene.coast
    with stage("input"):
        image = read_raster(config.resolve_path(image_path))
        points_path = config.get_conf("input.points")
        if points_path is None:
            raise ConfigError("[input] needs points")
        points = read_points_csv(config.resolve_path(points_path))
        classes = coast = None
        if config.get_conf("input.classes"):
            classes = read_class_map(config.resolve_path(config.get_conf("input.classes")))
        if config.get_conf("input.coast"):
            coast = read_mask(config.resolve_path(config.get_conf("input.coast")))
    return image, points, classes, coast


def cmd_pipeline(args):
    outdir = config.get_conf("output.dir")
    outdir = config.resolve_path(outdir) if outdir else os.path.abspath("out")
    _ensure_dir(outdir)
    image, points, classes, coast = _pipeline_inputs(outdir)
    with stage("config"):
        specs = config.predictor_specs(truth=classes, coast=coast)
        tiling = config.tiling_config()
        scoring = config.score_config()
    rule = config.get_conf("ensemble.orientation", "auto")
    interpolate = bool(config.get_conf("ensemble.interpolate", True))
    keep = bool(config.get_conf("output.keep_probabilities", False))
    threads = _threads()

    paths = []
    members = {}
    for spec in specs:
        with stage("infer:%s" % spec.id):
            log.info("predicting with %s (%s, %s input)", spec.id, spec.head, spec.input_mode)
            prob = tiled_predict(spec, normalize(image, config.preprocess_config(spec.input_mode)),
                                 tiling, threads)
            if keep:
                write_float_raster(prob, os.path.join(outdir, "%s_prob.fr" % spec.id))
        with stage("extract:%s" % spec.id):
            path = mask_to_path(extract(prob, spec.head, rule), rule)
            write_coastline_csv(path, os.path.join(outdir, "%s.csv" % spec.id))
        with stage("evaluate:%s" % spec.id):
            member_mask = fill_gaps(path, path.extent, interpolate=interpolate)
            write_mask(member_mask, os.path.join(outdir, "%s.pgm" % spec.id))
            report = score(member_mask, points, scoring)
            log.info("%s: mean score %.4f px, %d misses", spec.id, report.mean_score, report.miss_count)
            members[spec.id] = {
                "mean_score": report.mean_score,
                "miss_count": report.miss_count,
                "weight": spec.ensemble_weight,
                "head": spec.head,
                "input_mode": spec.input_mode,
            }
        paths.append(path)

    with stage("ensemble"):
        fused = ensemble_paths(paths, [s.ensemble_weight for s in specs])
    with stage("postprocess"):
        mask = fill_gaps(fused, fused.extent, interpolate=interpolate)
        write_coastline_csv(densify_path(fused) if interpolate else fused,
                            os.path.join(outdir, "coastline.csv"))
        write_mask(mask, os.path.join(outdir, "coastline.pgm"))
    with stage("evaluate"):
        report = score(mask, points, scoring)
        result = report.to_dict()
        result["members"] = members
        with open(os.path.join(outdir, "score.json"), "w") as f:
            f.write(json.dumps(result, indent=2, sort_keys=True) + "\n")
    print("mean score: %.4f px (%d hits, %d misses)" % (
        report.mean_score, report.hit_count, report.miss_count))
    return 0


def add_global_options(parser, default=None):
    """--config, -v, -q and --threads, accepted before or after the subcommand."""
    parser.add_argument("--config", default=default, help="TOML (or YAML) config file")
    parser.add_argument("-v", "--verbose", action="count", default=0 if default is None else default,
                        help="debug output")
    parser.add_argument("-q", "--quiet", action="store_true",
                        default=False if default is None else default, help="warnings and errors only")
    parser.add_argument("--threads", type=int, dest="run.threads", default=default, help="worker threads")


def build_parser():
    parser = Parser(prog="sarcoast", description="Coastline extraction from SAR intensity images")
    parser.add_argument("--version", action="version", version="sarcoast %s" % __version__)
    add_global_options(parser)
    # SUPPRESS keeps an option given before the subcommand from being reset by the subparser
    common = Parser(add_help=False)
    add_global_options(common, default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", metavar="<subcommand>", parser_class=Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic scene")
    p.add_argument("outdir")
    p.add_argument("--width", type=int, dest="scene.width")
    p.add_argument("--height", type=int, dest="scene.height")
    p.add_argument("--seed", type=int, dest="scene.seed")
    p.add_argument("--looks", type=float, dest="scene.speckle_looks")
    p.add_argument("--point-spacing", type=int, dest="scene.point_spacing")
    p.add_argument("--amplitudes", type=_float_list, dest="scene.amplitudes")
    p.add_argument("--frequencies", type=_float_list, dest="scene.frequencies")
    p.add_argument("--phases", type=_float_list, dest="scene.phases")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[common], help="normalise a PGM to a float raster")
    p.add_argument("image")
    p.add_argument("output")
    p.add_argument("--mode", choices=INPUT_MODES, dest="preprocess.mode")
    p.add_argument("--classes", help="class PGM to encode as labels")
    p.add_argument("--coast", help="coast mask PGM; adds the smoothed coast channel")
    p.add_argument("--labels-out")
    p.add_argument("--coast-radius", type=int, dest="labels.kernel_radius", help="coast kernel radius")
    p.add_argument("--coast-peak", type=float, dest="labels.peak", help="coast channel peak")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("augment", parents=[common], help="generate augmented training samples")
    p.add_argument("outdir")
    p.add_argument("--source", action="append", required=True,
                   help="image.pgm,classes.pgm[,coast.pgm]; repeat for more sources")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, dest="augment.seed")
    p.add_argument("--mode", choices=INPUT_MODES, dest="preprocess.mode")
    p.add_argument("--crop-min", type=int, dest="augment.crop_side_min")
    p.add_argument("--crop-max", type=int, dest="augment.crop_side_max")
    p.add_argument("--model-side", type=int, dest="augment.model_side")
    p.add_argument("--coast-radius", type=int, dest="labels.kernel_radius")
    p.add_argument("--coast-peak", type=float, dest="labels.peak")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("infer", parents=[common], help="floating-window prediction of one model")
    p.add_argument("image", help="u16 PGM, or an already normalised .fr")
    p.add_argument("output")
    p.add_argument("--predictor", help="predictor id from the config")
    p.add_argument("--head", choices=HEADS)
    p.add_argument("--backend", help="constant:V[:C], file:PATTERN, external:CMD or oracle:CLASSES.pgm")
    p.add_argument("--input-mode", choices=INPUT_MODES, default="log")
    p.add_argument("--tile-side", type=int, dest="tiling.tile_side")
    p.add_argument("--stride", type=int, dest="tiling.stride")
    p.add_argument("--scales", type=_float_list, dest="tiling.scales")
    p.add_argument("--sigma", type=float, dest="tiling.smoothing_sigma")
    p.add_argument("--aggregation", choices=AGGREGATIONS, dest="tiling.aggregation")
    p.add_argument("--flips", action="store_const", const=True, dest="tiling.flips")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("extract", parents=[common], help="coastline from a probability raster")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--head", choices=HEADS, required=True)
    p.add_argument("--orientation", choices=ORIENTATION_RULES, default="auto")
    p.add_argument("--mask", help="also write the coast mask PGM")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("ensemble", parents=[common], help="weighted mean of coastline CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--weights", help="comma separated, one per input")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("postprocess", parents=[common], help="gap-fill a coastline CSV into a mask")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--no-interpolate", action="store_true")
    p.add_argument("--csv", help="also write the interpolated coastline CSV")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("evaluate", parents=[common], help="score a coast mask against points")
    p.add_argument("mask")
    p.add_argument("points")
    p.add_argument("-o", "--output", help="score.json")
    p.add_argument("--miss-penalty", type=float, dest="score.miss_penalty")
    p.add_argument("--miss-radius", type=float, dest="score.miss_radius")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common], help="synth/infer/extract/ensemble/postprocess/evaluate from a config")
    p.add_argument("-o", "--outdir", dest="output.dir", type=os.path.abspath)
    p.set_defaults(func=cmd_pipeline)
    return parser


def run(argv=None):
    setup_logging(0)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        log.error("%s", e)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:
        # --help and --version
        return e.code or 0
    setup_logging(-1 if args.quiet else args.verbose)
    overrides = {k: v for k, v in vars(args).items() if "." in k}
    try:
        with stage("config"):
            config.init_config(overrides, args.config)
        return args.func(args)
    except UsageError as e:
        log.error("%s", e)
        return 1
    except SarcoastError as e:
        log.error("[%s] %s", e.stage or args.command, e)
        return 2
    except OSError as e:
        log.error("[%s] %s", args.command, e)
        return 2


def main(argv=None):
    sys.exit(run(argv))

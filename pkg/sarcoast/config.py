"""Configuration cascade: CLI args > environment > config files > defaults.

Keys are dotted paths such as ``tiling.stride``. Config files are read in
order, later ones overriding earlier ones:

    $XDG_CONFIG_HOME/sarcoast/config.toml (or ~/.config/sarcoast/config.toml)
    ~/.sarcoast/config.toml
    ./.sarcoast/config.toml
    the file given with --config

Environment variables SARCOAST_<SECTION>__<KEY> set ``section.key``.
"""
import logging
import os
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

try:
    import yaml
except ImportError:
    yaml = None

from .augment import AugmentConfig, IntensityConfig, MosaicSpec
from .errors import ConfigError
from .evaluate import ScoreConfig
from .predict import (
    ConstantBackend,
    ExternalBackend,
    FileBackend,
    OracleBackend,
    OracleConfig,
    PredictorSpec,
    TilingConfig,
    canonical_head,
)
from .preprocess import LabelSmoothingConfig, PreprocessConfig
from .raster import read_class_map, read_mask
from .synth import SceneConfig

log = logging.getLogger(__name__)

ENV_PREFIX = "SARCOAST_"

CONFIG = {
    "files": {},
    "env": {},
    "args": {},
}


def config_paths():
    xdg = os.environ.get("XDG_CONFIG_HOME") or os.path.join(os.path.expanduser("~"), ".config")
    return [
        os.path.join(xdg, "sarcoast", "config.toml"),
        os.path.join(os.path.expanduser("~"), ".sarcoast", "config.toml"),
        os.path.join(os.getcwd(), ".sarcoast", "config.toml"),
    ]


def load_config_file(path):
    """Parse a TOML or YAML config file into a nested dict."""
    try:
        if path.endswith((".yml", ".yaml")):
            if yaml is None:
                raise ConfigError("%s: YAML config needs pyyaml (pip install sarcoast[full])" % path)
            with open(path) as f:
                data = yaml.safe_load(f) or {}
        else:
            with open(path, "rb") as f:
                data = tomllib.load(f)
    except OSError as e:
        raise ConfigError("cannot read config %s: %s" % (path, e.strerror or e))
    except (ValueError, getattr(yaml, "YAMLError", ValueError)) as e:
        raise ConfigError("cannot parse config %s: %s" % (path, e))
    if not isinstance(data, dict):
        raise ConfigError("config %s must be a table at the top level" % path)
    return data


def flatten(data, prefix=""):
    """Nested tables become dotted keys; arrays (such as predictors) stay values."""
    out = {}
    for key, value in data.items():
        name = "%s.%s" % (prefix, key) if prefix else str(key)
        if isinstance(value, dict):
            out.update(flatten(value, name))
        else:
            out[name] = value
    return out


def parse_scalar(text):
    """Environment values: booleans, numbers, and comma separated lists of those."""
    if "," in text:
        return [parse_scalar(part) for part in text.split(",") if part.strip()]
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def load_env(environ=None):
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX) and len(name) > len(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out[key] = parse_scalar(value)
    return out


def init_config(args=None, config_path=None, environ=None):
    """Fill CONFIG from files, environment and already-parsed CLI overrides."""
    files = {}
    for path in config_paths():
        if os.path.isfile(path):
            log.debug("loading config %s", path)
            files.update(flatten(load_config_file(path)))
    if config_path:
        if not os.path.isfile(config_path):
            raise ConfigError("config file not found: %s" % config_path)
        files.update(flatten(load_config_file(config_path)))
        CONFIG["base_dir"] = os.path.dirname(os.path.abspath(config_path))
    else:
        CONFIG["base_dir"] = os.getcwd()
    CONFIG["files"] = files
    CONFIG["env"] = load_env(environ)
    CONFIG["args"] = {k: v for k, v in (args or {}).items() if v is not None}


def get_conf(key, default=None):
    for source in ("args", "env", "files"):
        if key in CONFIG[source]:
            return CONFIG[source][key]
    return default


def resolve_path(path):
    """Relative paths in config files are relative to the config file."""
    if path is None or os.path.isabs(path):
        return path
    return os.path.join(CONFIG.get("base_dir") or os.getcwd(), path)


def _build(cls, section, **extra):
    """Instantiate a config dataclass from the keys under section."""
    kwargs = {}
    for name in cls.__dataclass_fields__:
        value = get_conf("%s.%s" % (section, name))
        if value is not None:
            if isinstance(value, list):
                value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
            kwargs[name] = value
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError("[%s]: %s" % (section, e))


def tiling_config():
    return _build(TilingConfig, "tiling")


def preprocess_config(mode=None):
    extra = {"mode": mode} if mode else {}
    return _build(PreprocessConfig, "preprocess", **extra)


def label_config():
    return _build(LabelSmoothingConfig, "labels")


def score_config():
    return _build(ScoreConfig, "score")


def scene_config():
    return _build(SceneConfig, "scene")


def augment_config():
    return _build(AugmentConfig, "augment",
                  intensity=_build(IntensityConfig, "augment.intensity"),
                  mosaic=_build(MosaicSpec, "augment.mosaic"))


def has_section(section):
    prefix = section + "."
    return any(k.startswith(prefix) for source in ("args", "env", "files") for k in CONFIG[source])


def make_backend(table, head, truth=None, coast=None):
    """Build a backend from a [predictors.backend] table.

    Oracle backends use the given truth/coast (a generated scene) unless
    the table names class/coast PGM files.
    """
    if not isinstance(table, dict) or "type" not in table:
        raise ConfigError("predictor backend must be a table with a 'type' key")
    kind = table["type"]
    head = canonical_head(head)
    if kind == "constant":
        return ConstantBackend(table.get("value", 1.0), 3 if head == "softmax3" else 1)
    if kind == "file":
        return FileBackend(resolve_path(table["pattern"]))
    if kind == "external":
        return ExternalBackend(table["command"], table.get("max_concurrency", 1))
    if kind == "oracle":
        if "truth" in table:
            truth = read_class_map(resolve_path(table["truth"]))
        if "coast" in table:
            coast = read_mask(resolve_path(table["coast"]))
        if truth is None:
            raise ConfigError("oracle backend needs a ground-truth class map")
        cfg = OracleConfig(truth, sharpness=table.get("sharpness", 1.0),
                           noise_sigma=table.get("noise_sigma", 0.0),
                           seed=table.get("seed", 0), coast=coast)
        return OracleBackend(cfg, head)
    raise ConfigError("unknown backend type %r" % kind)


def predictor_specs(truth=None, coast=None):
    tables = get_conf("predictors") or []
    if not isinstance(tables, list) or not tables:
        raise ConfigError("config defines no [[predictors]]")
    specs = []
    for i, t in enumerate(tables):
        try:
            head = t["head"]
            spec = PredictorSpec(
                id=str(t.get("id", "model%d" % i)),
                input_mode=t.get("input_mode", "log"),
                head=head,
                backend=make_backend(t.get("backend", {}), head, truth, coast),
                ensemble_weight=float(t.get("weight", 1.0)),
                metadata={k: v for k, v in t.items()
                          if k not in ("id", "input_mode", "head", "backend", "weight")},
            )
        except KeyError as e:
            raise ConfigError("predictor %d is missing key %s" % (i, e))
        specs.append(spec)
    return specs

"""Run configuration: JSON file, then command-line flags, then environment defaults."""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from models.models import TrainConfig
from utils.errors import ConfigError, ToolkitError
from utils.parallel import default_threads

logger = logging.getLogger(__name__)

TOOLKIT_VERSION = "0.1.0"

SUBCOMMANDS = ("train", "eval", "fgsm", "sweep", "patch-train", "patch-eval", "report")
DATA_FORMATS = ("synthetic", "idx", "image_dir")
REPORT_FORMATS = ("csv", "json", "svg")
EPS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class DataConfig:
    format: str = "synthetic"
    train_images: str = None
    train_labels: str = None
    test_images: str = None
    test_labels: str = None
    image_dir: str = None
    class_names: str = None
    synthetic_count: int = 3000
    synthetic_size: int = 28
    synthetic_seed: int = 0
    test_fraction: float = 0.2
    split_seed: int = 0
    eval_limit: int = None


@dataclass(frozen=True)
class AttackConfig:
    eps_list: tuple = tuple(round(0.01 * i, 2) for i in range(1, 11))
    fgsm_epsilon: float = 0.1
    fgsm_images: int = 8
    top_k: int = 5
    patch_sizes: tuple = ()
    target_classes: tuple = (0,)
    steps: int = 1000
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0
    eval_seed: int = 0
    placement_policy: str = "random"
    step_rule: str = "sign"
    include_control: bool = True
    patch_examples: int = 4
    patches: tuple = ()


@dataclass(frozen=True)
class OutputConfig:
    out_dir: str = "runs"
    formats: tuple = ("csv", "json")
    pivot: bool = False


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    checkpoints: tuple = ()
    report_input: str = None
    threads: int = 1

    def to_dict(self):
        return asdict(self)

    def seeds(self):
        return {
            "synthetic": self.data.synthetic_seed,
            "split": self.data.split_seed,
            "train": self.train.seed,
            "patch": self.attack.seed,
            "patch_eval": self.attack.eval_seed,
        }


_SECTIONS = {"data": DataConfig, "train": TrainConfig, "attack": AttackConfig, "output": OutputConfig}
_LIST_FIELDS = {"eps_list", "patch_sizes", "target_classes", "patches", "formats", "checkpoints"}
_ITEM_TYPES = {"eps_list": float, "patch_sizes": int, "target_classes": int,
               "patches": str, "formats": str, "checkpoints": str}


def _freeze(name, value):
    if name in _LIST_FIELDS and value is not None:
        if isinstance(value, (str, int, float)):
            value = [value]
        return tuple(value)
    return value


def _typed(kind, value, where):
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ConfigError(f"{where} must be {kind.__name__}, got {type(value).__name__} {value!r}")
    return value


def _check_types(cls, values, where):
    """JSON values must match the field types; lists are checked item by item."""
    declared = {f.name: f for f in fields(cls)}
    checked = {}
    for key, value in values.items():
        spec = declared[key]
        if value is None and spec.default is None:
            checked[key] = None
        elif key in _LIST_FIELDS:
            if not isinstance(value, (list, tuple, str, int, float)) or isinstance(value, bool):
                raise ConfigError(f"{where}.{key} must be a list, got {type(value).__name__}")
            checked[key] = tuple(_typed(_ITEM_TYPES[key], item, f"{where}.{key}[{i}]")
                                 for i, item in enumerate(_freeze(key, value)))
        elif key in _SECTIONS:
            checked[key] = value
        else:
            checked[key] = _typed(spec.type, value, f"{where}.{key}")
    return checked


def _build(cls, payload, where):
    if not isinstance(payload, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")
    try:
        return cls(**_check_types(cls, payload, where))
    except TypeError as exc:
        raise ConfigError(f"bad {where}: {exc}") from exc


def config_from_dict(payload):
    if not isinstance(payload, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(payload) - {f.name for f in fields(RunConfig)})
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    values = _check_types(RunConfig, payload, "config")
    for key, value in values.items():
        if key in _SECTIONS:
            values[key] = _build(_SECTIONS[key], value, key)
    return RunConfig(**values)


def load_config(path):
    """Read a config file or a manifest.json; returns (RunConfig, replayed subcommand or None)."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(payload, dict) and "resolved_config" in payload:
        logger.info("replaying manifest %s (%s)", path, payload.get("subcommand"))
        return config_from_dict(payload["resolved_config"]), payload.get("subcommand")
    return config_from_dict(payload), None


def override(config, section=None, **values):
    """Replace the given fields, skipping values that are None."""
    values = {key: _freeze(key, value) for key, value in values.items() if value is not None}
    if not values:
        return config
    try:
        if section is None:
            return replace(config, **values)
        return replace(config, **{section: replace(getattr(config, section), **values)})
    except ToolkitError as exc:
        raise ConfigError(str(exc)) from exc


def env_threads(config, explicit):
    """Thread count: explicit flag, then config file, then GRADSIGN_THREADS."""
    if explicit is not None:
        return replace(config, threads=explicit)
    if config.threads == 1 and "GRADSIGN_THREADS" in os.environ:
        return replace(config, threads=default_threads())
    return config


def parse_eps(text):
    """'a,b,c' or 'start:stop:step' (stop included within 1e-9) -> list of floats."""
    text = str(text).strip()
    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            if step <= 0:
                raise ConfigError(f"epsilon step must be positive, got {step}")
            values, index = [], 0
            while start + index * step <= stop + EPS_TOLERANCE:
                values.append(round(start + index * step, 9))
                index += 1
            return values
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse epsilon list {text!r}") from exc


def _require_file(path, what):
    if not path:
        raise ConfigError(f"{what} is required")
    if not Path(path).exists():
        raise ConfigError(f"{what} {path} does not exist")


def _validate_data(data):
    if data.format not in DATA_FORMATS:
        raise ConfigError(f"data format must be one of {DATA_FORMATS}, got {data.format!r}")
    if data.format == "idx":
        _require_file(data.train_images, "data.train_images")
        _require_file(data.train_labels, "data.train_labels")
        if bool(data.test_images) != bool(data.test_labels):
            raise ConfigError("data.test_images and data.test_labels go together")
        if data.test_images:
            _require_file(data.test_images, "data.test_images")
            _require_file(data.test_labels, "data.test_labels")
    elif data.format == "image_dir":
        _require_file(data.image_dir, "data.image_dir")
    elif data.synthetic_count < 2 or data.synthetic_size < 8:
        raise ConfigError("synthetic data needs at least 2 images of at least 8x8 pixels")
    if data.class_names:
        _require_file(data.class_names, "data.class_names")
    if not 0.0 < data.test_fraction < 1.0:
        raise ConfigError(f"data.test_fraction must lie in (0, 1), got {data.test_fraction}")
    if data.eval_limit is not None and data.eval_limit < 1:
        raise ConfigError(f"data.eval_limit must be positive, got {data.eval_limit}")


def _validate_attack(attack, subcommand):
    if subcommand == "sweep":
        if not attack.eps_list:
            raise ConfigError("eps_list is empty")
        if any(b <= a for a, b in zip(attack.eps_list, attack.eps_list[1:])):
            raise ConfigError(f"eps_list must be strictly ascending, got {list(attack.eps_list)}")
        if any(not 0.0 <= eps <= 1.0 for eps in attack.eps_list):
            raise ConfigError(f"every epsilon must lie in [0, 1], got {list(attack.eps_list)}")
    if subcommand == "fgsm":
        if not 0.0 <= attack.fgsm_epsilon <= 1.0:
            raise ConfigError(f"fgsm_epsilon must lie in [0, 1], got {attack.fgsm_epsilon}")
        if attack.fgsm_images < 1 or attack.top_k < 1:
            raise ConfigError("fgsm_images and top_k must be positive")
    if subcommand == "patch-train":
        if not attack.target_classes:
            raise ConfigError("target_classes is empty")
        if any(size < 1 for size in attack.patch_sizes):
            raise ConfigError(f"patch sizes must be positive, got {list(attack.patch_sizes)}")
        if attack.steps < 1 or attack.batch_size < 1 or not attack.learning_rate > 0:
            raise ConfigError("steps, batch_size and learning_rate must be positive")
        if attack.placement_policy not in ("random", "center", "corner"):
            raise ConfigError(f"unknown placement policy {attack.placement_policy!r}")
        if attack.step_rule not in ("sign", "gradient"):
            raise ConfigError(f"unknown patch step rule {attack.step_rule!r}")
    if subcommand in ("patch-train", "patch-eval") and (attack.patch_examples < 0 or attack.top_k < 1):
        raise ConfigError("patch_examples must not be negative and top_k must be positive")
    if subcommand == "patch-eval":
        if not attack.patches:
            raise ConfigError("patch-eval needs at least one patch file")
        for path in attack.patches:
            _require_file(path, "patch file")


def validate(config, subcommand):
    """Check everything that can be checked before any output is written."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    if config.threads < 1:
        raise ConfigError(f"threads must be at least 1, got {config.threads}")
    bad = [fmt for fmt in config.output.formats if fmt not in REPORT_FORMATS]
    if bad or not config.output.formats:
        raise ConfigError(f"report formats must be drawn from {REPORT_FORMATS}, got {list(config.output.formats)}")
    if subcommand == "report":
        _require_file(config.report_input, "report input")
        return config
    _validate_data(config.data)
    if subcommand != "train":
        if not config.checkpoints:
            raise ConfigError(f"{subcommand} needs a model checkpoint (--checkpoint)")
        if subcommand != "eval" and len(config.checkpoints) > 1:
            raise ConfigError(f"{subcommand} takes exactly one checkpoint")
        for path in config.checkpoints:
            _require_file(path, "checkpoint")
    _validate_attack(config.attack, subcommand)
    return config

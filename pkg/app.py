import argparse
import logging
import os
import sys

from routes.adversarial import adversarial
from routes.context import RunContext
from routes.patches import patches
from routes.reporting import reporting
from routes.training import training
from utils.config import RunConfig, env_threads, load_config, override, parse_eps, validate
from utils.errors import ConfigError, FormatError, ToolkitError

# Configure logging
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Unknown flags and subcommands print usage and exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def configure_logging(level=None):
    level = (level or os.environ.get("GRADSIGN_LOG_LEVEL", "INFO")).upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"log level must be one of {', '.join(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(part) for part in text.split(",") if part.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from exc
    return parse


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file or a manifest.json to replay")
    parser.add_argument("--out-dir", help="directory for every output of the run")
    parser.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    parser.add_argument("--format", dest="formats", type=_csv_list(str), help="comma list of csv,json,svg")
    parser.add_argument("--pivot", action="store_true", default=None, help="also write patch-by-size CSV")
    parser.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS, help="logging threshold")


def _add_data(parser):
    group = parser.add_argument_group("data")
    group.add_argument("--data-format", choices=("synthetic", "idx", "image_dir"))
    group.add_argument("--train-images")
    group.add_argument("--train-labels")
    group.add_argument("--test-images")
    group.add_argument("--test-labels")
    group.add_argument("--image-dir")
    group.add_argument("--class-names")
    group.add_argument("--synthetic-count", type=int)
    group.add_argument("--synthetic-size", type=int)
    group.add_argument("--synthetic-seed", type=int)
    group.add_argument("--test-fraction", type=float)
    group.add_argument("--split-seed", type=int)
    group.add_argument("--eval-limit", type=int, help="evaluate on the first N test images only")


def _add_train(parser):
    group = parser.add_argument_group("training")
    group.add_argument("--epochs", type=int)
    group.add_argument("--batch-size", type=int)
    group.add_argument("--learning-rate", type=float)
    group.add_argument("--momentum", type=float)
    group.add_argument("--seed", type=int)


def _add_models(parser):
    parser.add_argument("--checkpoint", dest="checkpoints", action="append", help="model checkpoint (repeatable)")


def _add_fgsm(parser):
    group = parser.add_argument_group("fgsm")
    group.add_argument("--eps", type=float, help="attack strength in raw pixel units")
    group.add_argument("--images", type=int, help="number of test images to attack")
    group.add_argument("--top-k", type=int)


def _add_sweep(parser):
    parser.add_argument("--eps", help="'a,b,c' or inclusive 'start:stop:step'")


def _add_patch(parser):
    group = parser.add_argument_group("patch")
    group.add_argument("--sizes", type=_csv_list(int), help="patch side lengths (default: area-matched)")
    group.add_argument("--targets", type=_csv_list(int), help="target class indices")
    group.add_argument("--steps", type=int)
    group.add_argument("--patch-lr", type=float)
    group.add_argument("--patch-batch", type=int)
    group.add_argument("--seed", type=int)
    group.add_argument("--eval-seed", type=int)
    group.add_argument("--placement", choices=("random", "center", "corner"))
    group.add_argument("--step-rule", choices=("sign", "gradient"), help="signed fixed steps or raw gradient steps")
    group.add_argument("--no-control", dest="include_control", action="store_false", default=None)
    group.add_argument("--examples", type=int, help="patched images to write with confidence breakdowns")
    group.add_argument("--top-k", type=int)


def _add_patch_files(parser):
    parser.add_argument("--patch", dest="patches", action="append", help="patch file (repeatable)")
    parser.add_argument("--eval-seed", type=int)
    parser.add_argument("--examples", type=int, help="patched images to write with confidence breakdowns")
    parser.add_argument("--top-k", type=int)


def _add_report(parser):
    parser.add_argument("--input", dest="report_input", help="JSON report to re-emit")


FLAG_SETS = {
    "data": _add_data,
    "train": _add_train,
    "models": _add_models,
    "fgsm": _add_fgsm,
    "sweep": _add_sweep,
    "patch": _add_patch,
    "patch-files": _add_patch_files,
    "report": _add_report,
}


class CommandApp:
    """Argument parser plus the subcommands registered from command groups."""

    def __init__(self, prog):
        self.prog = prog
        self.commands = {}

    def register_group(self, group):
        for command in group.commands:
            if command.name in self.commands:
                raise ValueError(f"subcommand {command.name!r} registered twice")
            self.commands[command.name] = command

    def parser(self):
        parser = _Parser(prog=self.prog, description="FGSM and adversarial-patch experiments on a small CNN")
        subparsers = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", parser_class=_Parser)
        subparsers.required = True
        for command in self.commands.values():
            sub = subparsers.add_parser(command.name, help=command.help, description=command.help)
            _add_common(sub)
            for flag_set in command.flags:
                FLAG_SETS[flag_set](sub)
        return parser


def resolve_config(args):
    """Config file (or replayed manifest), then flags, then environment defaults."""
    config, replayed = (load_config(args.config) if args.config else (RunConfig(), None))
    if replayed is not None and replayed != args.subcommand:
        raise ConfigError(f"manifest was written by {replayed!r}, not {args.subcommand!r}")
    flags = vars(args)
    get = flags.get
    config = override(config, None, checkpoints=get("checkpoints"), report_input=get("report_input"))
    config = override(config, "output", out_dir=get("out_dir"), formats=get("formats"), pivot=get("pivot"))
    config = override(
        config, "data", format=get("data_format"), train_images=get("train_images"),
        train_labels=get("train_labels"), test_images=get("test_images"), test_labels=get("test_labels"),
        image_dir=get("image_dir"), class_names=get("class_names"), synthetic_count=get("synthetic_count"),
        synthetic_size=get("synthetic_size"), synthetic_seed=get("synthetic_seed"),
        test_fraction=get("test_fraction"), split_seed=get("split_seed"), eval_limit=get("eval_limit"),
    )
    if args.subcommand == "train":
        config = override(config, "train", epochs=get("epochs"), batch_size=get("batch_size"),
                          learning_rate=get("learning_rate"), momentum=get("momentum"), seed=get("seed"))
    elif args.subcommand == "fgsm":
        config = override(config, "attack", fgsm_epsilon=get("eps"), fgsm_images=get("images"), top_k=get("top_k"))
    elif args.subcommand == "sweep":
        eps = get("eps")
        config = override(config, "attack", eps_list=parse_eps(eps) if eps is not None else None)
    elif args.subcommand == "patch-train":
        config = override(
            config, "attack", patch_sizes=get("sizes"), target_classes=get("targets"), steps=get("steps"),
            learning_rate=get("patch_lr"), batch_size=get("patch_batch"), seed=get("seed"),
            eval_seed=get("eval_seed"), placement_policy=get("placement"), step_rule=get("step_rule"),
            include_control=get("include_control"), patch_examples=get("examples"), top_k=get("top_k"),
        )
    elif args.subcommand == "patch-eval":
        config = override(config, "attack", patches=get("patches"), eval_seed=get("eval_seed"),
                          patch_examples=get("examples"), top_k=get("top_k"))
    return validate(env_threads(config, get("threads")), args.subcommand)


def run(argv=None):
    """Execute one subcommand; returns 0 on success, 1 on invalid input, 2 on failure."""
    try:
        args = app.parser().parse_args(argv)
    except UsageError:
        return EXIT_INVALID
    except SystemExit as exc:
        # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        configure_logging(args.log_level)
        config = resolve_config(args)
    except ConfigError as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_INVALID

    ctx = RunContext(args.subcommand, config)
    logger.info("running %s, outputs under %s", args.subcommand, ctx.out_dir)
    try:
        app.commands[args.subcommand].handler(ctx)
        ctx.write_manifest()
    except (ConfigError, FormatError) as exc:
        logger.error("%s: invalid input: %s", args.subcommand, exc)
        return EXIT_INVALID
    except (ToolkitError, OSError) as exc:
        logger.error("%s failed: %s", args.subcommand, exc)
        return EXIT_FAILED
    logger.info("%s finished, %d outputs written", args.subcommand, len(ctx.outputs))
    return EXIT_OK


# Register command groups
app = CommandApp("gradsign")
app.register_group(training)
app.register_group(adversarial)
app.register_group(patches)
app.register_group(reporting)

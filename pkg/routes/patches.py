"""patch-train and patch-eval subcommands."""
import logging

from attacks.patch import (
    check_patch,
    default_patch_sizes,
    load_patch,
    patch_eval,
    patch_grid,
    patched_examples,
    random_patch,
    save_patch,
)
from attacks.types import PatchReport, PatchTrainConfig
from evalkit.metrics import confidence_breakdown
from routes.registry import CommandGroup
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

patches = CommandGroup("patches", __name__)


def _check_targets(targets, model):
    bad = [int(t) for t in targets if not 0 <= int(t) < model.num_classes]
    if bad:
        raise ConfigError(f"target classes {bad} outside the model's {model.num_classes} classes")


def _write_examples(ctx, model, dataset, trained):
    """Confidence breakdowns and PNGs for the first few images, clean and with each patch pasted."""
    attack = ctx.config.attack
    count = min(attack.patch_examples, len(dataset))
    if count == 0:
        return
    k = min(attack.top_k, model.num_classes)
    clean = [confidence_breakdown(model, dataset.images[i], int(dataset.labels[i]), k, image_id=f"image{i:04d}")
             for i in range(count)]
    rows = []
    for patch in trained:
        stem = f"{ctx.safe_name(patch.name)}-{patch.size}"
        ctx.write_png(patch.pixels, "patch_images", f"{stem}.png")
        for index, image in enumerate(patched_examples(dataset, patch, attack.eval_seed, count)):
            rows.append(confidence_breakdown(model, image, int(dataset.labels[index]), k,
                                             image_id=f"{stem}/image{index:04d}"))
            ctx.write_png(image, "patched", stem, f"image{index:04d}.png")
    ctx.emit(clean, "patch_clean")
    ctx.emit(rows, "patched")


@patches.command("patch-train", help="Train adversarial patches per target class and size", flags=("data", "models", "patch"))
def patch_train_command(ctx):
    (model,) = ctx.load_models()
    attack = ctx.config.attack
    _check_targets(attack.target_classes, model)
    train_set, _ = ctx.load_datasets()
    eval_set = ctx.eval_set()
    _, height, width = train_set.image_shape
    sizes = sorted(attack.patch_sizes) or default_patch_sizes(height, width)
    base = PatchTrainConfig(
        size=sizes[0], target_class=attack.target_classes[0], steps=attack.steps,
        learning_rate=attack.learning_rate, batch_size=attack.batch_size, seed=attack.seed,
        placement_policy=attack.placement_policy, step_rule=attack.step_rule,
    )
    report, trained = patch_grid(model, train_set, eval_set, attack.target_classes, sizes, base,
                                 attack.eval_seed, ctx.threads)

    rows = list(report.rows)
    if attack.include_control:
        for target in attack.target_classes:
            control = random_patch(sizes[0], train_set.image_shape[0], int(target), attack.seed,
                                   name=f"control-{model.class_names[int(target)]}")
            rows.append(patch_eval(model, eval_set, control, attack.eval_seed, ctx.threads))

    for patch in trained:
        path = ctx.output_path("patches", f"{ctx.safe_name(patch.name)}-{patch.size}.gstp")
        save_patch(patch, path)
        ctx.outputs.append(str(path))
    ctx.emit(PatchReport(tuple(rows), model_id=ctx.model_id(), dataset_id=eval_set.source),
             "patches", pivot=ctx.config.output.pivot)
    _write_examples(ctx, model, eval_set, trained)


@patches.command("patch-eval", help="Evaluate saved patches against a checkpoint", flags=("data", "models", "patch-files"))
def patch_eval_command(ctx):
    (model,) = ctx.load_models()
    loaded = []
    for path in ctx.config.attack.patches:
        ctx.record_input(path)
        patch = load_patch(path)
        check_patch(patch, model.num_classes, model.spec.input_shape)
        loaded.append(patch)
    dataset = ctx.eval_set()
    rows = [patch_eval(model, dataset, patch, ctx.config.attack.eval_seed, ctx.threads) for patch in loaded]
    ctx.emit(PatchReport(tuple(rows), model_id=ctx.model_id(), dataset_id=dataset.source),
             "patches", pivot=ctx.config.output.pivot)
    _write_examples(ctx, model, dataset, loaded)

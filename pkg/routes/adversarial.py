"""fgsm and sweep subcommands."""
import logging

from attacks.fgsm import fgsm
from attacks.sweep import epsilon_sweep, saturation_point
from attacks.types import FgsmConfig
from evalkit.metrics import confidence_breakdown
from routes.registry import CommandGroup

logger = logging.getLogger(__name__)

adversarial = CommandGroup("adversarial", __name__)


@adversarial.command("fgsm", help="Attack a few images and compare clean and adversarial top-k", flags=("data", "models", "fgsm"))
def fgsm_command(ctx):
    (model,) = ctx.load_models()
    dataset = ctx.eval_set()
    attack = ctx.config.attack
    config = FgsmConfig(attack.fgsm_epsilon)
    k = min(attack.top_k, model.num_classes)
    count = min(attack.fgsm_images, len(dataset))

    clean, adversarial_rows = [], []
    adversarial_images = []
    for index in range(count):
        image, label = dataset.images[index], int(dataset.labels[index])
        adv = fgsm(model, image, label, config)
        clean.append(confidence_breakdown(model, image, label, k, image_id=f"image{index:04d}"))
        adversarial_rows.append(confidence_breakdown(model, adv, label, k, image_id=f"image{index:04d}"))
        adversarial_images.append(adv)

    flipped = sum(c.true_ranked_first and not a.true_ranked_first for c, a in zip(clean, adversarial_rows))
    logger.info("eps %.4f flipped %d of %d correctly classified images", config.epsilon, flipped,
                sum(c.true_ranked_first for c in clean))
    ctx.emit(clean, "fgsm_clean")
    ctx.emit(adversarial_rows, "fgsm_adversarial")
    for index, adv in enumerate(adversarial_images):
        ctx.write_png(adv, "adversarial", f"image{index:04d}.png")


@adversarial.command("sweep", help="Top-1/top-5 error under FGSM across a list of epsilons", flags=("data", "models", "sweep"))
def sweep_command(ctx):
    (model,) = ctx.load_models()
    dataset = ctx.eval_set()
    table = epsilon_sweep(model, dataset, ctx.config.attack.eps_list, ctx.threads,
                          model_id=ctx.model_id(), dataset_id=dataset.source)
    logger.info("top-1 error saturates from eps %s", saturation_point(table))
    ctx.emit(table, "sweep")

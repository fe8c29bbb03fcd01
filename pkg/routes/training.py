"""train and eval subcommands."""
import logging

import pandas as pd

from data.datasets import NormalizationSpec
from evalkit.metrics import compare_models, evaluate
from models.data_store import save_checkpoint
from models.models import default_spec
from models.training import train
from models.victim import build_model
from routes.registry import CommandGroup

logger = logging.getLogger(__name__)

training = CommandGroup("training", __name__)


@training.command("train", help="Train the victim network and save a checkpoint", flags=("data", "train"))
def train_command(ctx):
    train_set, test_set = ctx.load_datasets()
    train_set.require_nonempty("training set")
    normalization = NormalizationSpec.from_images(train_set.images)
    spec = default_spec(train_set.image_shape, train_set.num_classes)
    model = build_model(spec, ctx.config.train.seed, train_set.class_names, normalization)
    model, history = train(model, train_set, ctx.config.train)

    checkpoint = ctx.output_path("model.gstm")
    save_checkpoint(model, checkpoint)
    ctx.outputs.append(str(checkpoint))
    history_frame = pd.DataFrame(
        [[str(epoch), f"{loss:.4f}", f"{error:.2f}"] for epoch, (loss, error) in enumerate(history, start=1)],
        columns=["epoch", "train_loss", "train_error"],
    )
    ctx.write_text("training_history.csv", history_frame.to_csv(index=False, lineterminator="\n"))
    ctx.emit(evaluate(model, test_set, ctx.threads, model_id=checkpoint.stem), "eval")


@training.command("eval", help="Clean top-1/top-5 error of one or more checkpoints", flags=("data", "models"))
def eval_command(ctx):
    models = ctx.load_models()
    dataset = ctx.eval_set()
    model_ids = [ctx.model_id(i) for i in range(len(models))]
    ctx.emit(compare_models(models, dataset, ctx.threads, model_ids), "eval")

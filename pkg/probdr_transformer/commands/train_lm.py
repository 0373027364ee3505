import math
import typing

from loguru import logger

from probdr_transformer.base.command import BaseCommand
from probdr_transformer.exceptions import ConfigError, TrainingDivergedError
from probdr_transformer.lm.data import CharVocab
from probdr_transformer.lm.model import LmConfig
from probdr_transformer.lm.train import TrainConfig, TrainRun, train
from probdr_transformer.synthetic import synthetic_corpus
from probdr_transformer.utils.config import Config, add_lm_args
from probdr_transformer.utils.io import write_json, write_jsonl


def load_corpus(config: Config) -> str:
    if config.corpus is not None:
        with open(config.corpus, encoding="utf-8") as f:
            text = f.read()
        logger.info(f"Read {len(text)} characters from {config.corpus}")
        return text
    if config.synthetic == "text":
        return synthetic_corpus(seed=config.seed)
    raise ConfigError("language model commands need --corpus or --synthetic text")


def lm_config(config: Config, vocab_size: int, seed: int) -> LmConfig:
    cfg = config.lm
    return LmConfig(
        vocab_size=vocab_size,
        block_size=cfg.block_size,
        n_layer=cfg.n_layer,
        n_head=cfg.n_head,
        n_embd=cfg.n_embd,
        attention_mode=cfg.attention_mode,
        dropout=cfg.dropout,
        seed=seed,
        dtype=cfg.dtype,
    )


def train_config(config: Config) -> TrainConfig:
    cfg = config.train
    return TrainConfig(
        max_iters=cfg.max_iters,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
        eval_interval=cfg.eval_interval,
        eval_iters=cfg.eval_iters,
        lr_schedule=cfg.lr_schedule,
        grad_clip=cfg.grad_clip,
        warmup_iters=cfg.warmup_iters,
        split_fraction=cfg.split_fraction,
    )


def run_summary(run: TrainRun, vocab_size: int) -> typing.Dict[str, typing.Any]:
    summary = {
        "mode": run.mode,
        "seed": run.seed,
        "vocab_size": vocab_size,
        "uniform_loss": math.log(vocab_size),
        "evaluations": len(run.records),
        "wall_time": run.wall_time,
        "diverged_at": run.diverged_at,
    }
    if run.records:
        summary.update(final_iter=run.final.iter, final_train_loss=run.final.train_loss, final_val_loss=run.final.val_loss)
    return summary


class TrainLmCommand(BaseCommand):
    """Trains a character-level transformer with standard or diffusion attention."""

    name = "train-lm"

    @classmethod
    def add_args(cls, parser):
        super().add_args(parser)
        add_lm_args(cls, parser)

    def write_outputs(self, run: TrainRun, vocab_size: int):
        write_jsonl(self.path("metrics.jsonl"), run.metrics())
        write_json(self.path("summary.json"), run_summary(run, vocab_size))

    def run(self) -> int:
        corpus = load_corpus(self.config)
        vocab = CharVocab.from_text(corpus)
        lm_cfg = lm_config(self.config, vocab.size, self.config.seed)
        try:
            run = train(lm_cfg, train_config(self.config), corpus, checkpoint_path=self.path("state.pt"))
        except TrainingDivergedError as e:
            if e.run is not None:
                self.write_outputs(e.run, vocab.size)
            raise
        self.write_outputs(run, vocab.size)
        logger.success(
            f"{run.mode} model: final train {run.final.train_loss:.4f}, val {run.final.val_loss:.4f} "
            f"(uniform {math.log(vocab.size):.4f})"
        )
        return 0

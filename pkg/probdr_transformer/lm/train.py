"""Seeded AdamW training loop with periodic train/val loss estimates."""

import math
import time
import typing
from dataclasses import asdict, dataclass, field

import torch
from loguru import logger

from probdr_transformer.exceptions import InvalidParameterError, TrainingDivergedError
from probdr_transformer.lm.data import CharVocab, get_batch, split_tokens
from probdr_transformer.lm.model import GPT, LmConfig, save_checkpoint
from probdr_transformer.utils.config import log_event
from probdr_transformer.utils.hashing import derive_seed

LR_SCHEDULES = ("constant", "cosine")
OPTIMIZERS = ("adamw",)


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.1
    eval_interval: int = 100
    eval_iters: int = 20
    optimizer: str = "adamw"
    lr_schedule: str = "constant"
    grad_clip: float = 1.0
    warmup_iters: int = 0
    split_fraction: float = 0.9

    def __post_init__(self):
        for name in ("max_iters", "batch_size", "eval_interval", "eval_iters"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not self.learning_rate > 0:
            raise InvalidParameterError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0 or self.grad_clip < 0 or self.warmup_iters < 0:
            raise InvalidParameterError("weight_decay, grad_clip and warmup_iters must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidParameterError(f"optimizer must be one of {OPTIMIZERS}, got '{self.optimizer}'")
        if self.lr_schedule not in LR_SCHEDULES:
            raise InvalidParameterError(f"lr_schedule must be one of {LR_SCHEDULES}, got '{self.lr_schedule}'")
        if not 0.0 < self.split_fraction < 1.0:
            raise InvalidParameterError(f"split_fraction must lie in (0, 1), got {self.split_fraction}")

    def learning_rate_at(self, it: int) -> float:
        """Constant, or linear warm-up then cosine decay to learning_rate/10 at max_iters."""
        if self.lr_schedule == "constant":
            return self.learning_rate
        min_lr = self.learning_rate / 10.0
        if it < self.warmup_iters:
            return self.learning_rate * (it + 1) / self.warmup_iters
        span = max(1, self.max_iters - self.warmup_iters)
        ratio = min(1.0, (it - self.warmup_iters) / span)
        coeff = 0.5 * (1.0 + math.cos(math.pi * ratio))
        return min_lr + coeff * (self.learning_rate - min_lr)


class TrainRecord(typing.NamedTuple):
    iter: int
    train_loss: float
    val_loss: float


@dataclass
class TrainRun:
    """
    Attributes:
    - config: ``{"lm": LmConfig dict, "train": TrainConfig dict}``.
    - records: evaluations in strictly increasing iteration order.
    - wall_time: seconds spent in :func:`train`.
    - diverged_at: iteration of a non-finite loss, ``None`` for a completed run.
    """

    config: typing.Dict[str, dict]
    records: typing.List[TrainRecord] = field(default_factory=list)
    wall_time: float = 0.0
    diverged_at: typing.Optional[int] = None

    @property
    def mode(self) -> str:
        return self.config["lm"]["attention_mode"]

    @property
    def seed(self) -> int:
        return self.config["lm"]["seed"]

    @property
    def final(self) -> TrainRecord:
        return self.records[-1]

    def metrics(self) -> typing.List[dict]:
        """JSON-lines rows ``{"iter", "split", "loss", "mode", "seed"}``, train before val per record."""
        rows = []
        for r in self.records:
            for split, loss in (("train", r.train_loss), ("val", r.val_loss)):
                rows.append({"iter": r.iter, "split": split, "loss": loss, "mode": self.mode, "seed": self.seed})
        return rows

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "records": [list(r) for r in self.records],
            "wall_time": self.wall_time,
            "diverged_at": self.diverged_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainRun":
        return cls(
            config=d["config"],
            records=[TrainRecord(int(i), float(t), float(v)) for i, t, v in d["records"]],
            wall_time=float(d["wall_time"]),
            diverged_at=d.get("diverged_at"),
        )


@torch.no_grad()
def estimate_loss(model: GPT, data: torch.Tensor, split: str, cfg: TrainConfig, seed: int, it: int) -> float:
    """Mean loss over ``eval_iters`` batches drawn from their own (seed, "eval", split, it) stream."""
    was_training = model.training
    model.eval()
    losses = []
    for k in range(cfg.eval_iters):
        x, y = get_batch(data, model.config.block_size, cfg.batch_size, seed, f"eval-{split}", it * cfg.eval_iters + k)
        losses.append(float(model(x, y)[1]))
    model.train(was_training)
    return sum(losses) / len(losses)


def encode_corpus(corpus: str, lm_cfg: LmConfig) -> torch.Tensor:
    vocab = CharVocab.from_text(corpus)
    if vocab.size > lm_cfg.vocab_size:
        raise InvalidParameterError(
            f"corpus has {vocab.size} distinct characters but vocab_size is {lm_cfg.vocab_size}"
        )
    return torch.tensor(vocab.encode(corpus), dtype=torch.long)


def train(
    lm_cfg: LmConfig,
    train_cfg: TrainConfig,
    corpus: str,
    checkpoint_path: typing.Optional[str] = None,
) -> TrainRun:
    """
    Trains a fresh :class:`GPT` on ``corpus``.

    Evaluations happen at iteration 0, every ``eval_interval`` iterations and at
    ``max_iters``. Initial parameters and every batch derive from ``lm_cfg.seed`` only,
    so two runs that differ in ``attention_mode`` see identical batches.

    Raises:
        TrainingDivergedError: On a non-finite loss; ``run`` holds the records so far.
    """
    started = time.perf_counter()
    tokens = encode_corpus(corpus, lm_cfg)
    train_data, val_data = split_tokens(tokens, train_cfg.split_fraction)
    seed = lm_cfg.seed
    if lm_cfg.dropout > 0:
        # dropout masks come from the global generator
        torch.manual_seed(derive_seed(seed, "dropout"))

    model = GPT(lm_cfg)
    model.train()
    optimizer = model.configure_optimizers(train_cfg.weight_decay, train_cfg.learning_rate)
    run = TrainRun(config={"lm": lm_cfg.to_dict(), "train": asdict(train_cfg)})
    logger.info(
        f"Training {lm_cfg.attention_mode} model (seed {seed}, {model.num_parameters()} parameters) "
        f"for {train_cfg.max_iters} iterations"
    )

    def diverge(it: int, what: str):
        run.diverged_at = it
        run.wall_time = time.perf_counter() - started
        logger.error(f"Non-finite {what} at iteration {it} ({lm_cfg.attention_mode}, seed {seed})")
        raise TrainingDivergedError(f"non-finite {what} at iteration {it}", run=run)

    for it in range(train_cfg.max_iters + 1):
        if it % train_cfg.eval_interval == 0 or it == train_cfg.max_iters:
            record = TrainRecord(
                it,
                estimate_loss(model, train_data, "train", train_cfg, seed, it),
                estimate_loss(model, val_data, "val", train_cfg, seed, it),
            )
            if not (math.isfinite(record.train_loss) and math.isfinite(record.val_loss)):
                diverge(it, "evaluation loss")
            run.records.append(record)
            log_event(
                f"{lm_cfg.attention_mode} seed={seed} iter={it} train={record.train_loss:.4f} val={record.val_loss:.4f}"
            )
        if it == train_cfg.max_iters:
            break

        lr = train_cfg.learning_rate_at(it)
        for group in optimizer.param_groups:
            group["lr"] = lr
        x, y = get_batch(train_data, lm_cfg.block_size, train_cfg.batch_size, seed, "train", it)
        _, loss = model(x, y)
        if not torch.isfinite(loss):
            diverge(it, "training loss")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        if train_cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
        optimizer.step()

    run.wall_time = time.perf_counter() - started
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, train_cfg.max_iters, {"train_config": asdict(train_cfg)})
        logger.info(f"Saved checkpoint to {checkpoint_path}")
    return run

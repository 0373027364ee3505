"""
Paired standard-vs-diffusion training runs over several seeds.

Both runs of a seed share initial parameters and batch sequence, so per-seed loss
differences isolate the effect of the attention mode.
"""

import dataclasses
import json
import statistics
import typing
from concurrent.futures import ThreadPoolExecutor

from loguru import logger

from probdr_transformer.exceptions import InvalidParameterError
from probdr_transformer.lm.model import ATTENTION_MODES, LmConfig
from probdr_transformer.lm.train import TrainConfig, TrainRun, train

SPLIT_FIELDS = {"train": "train_loss", "val": "val_loss"}


class DifferenceRow(typing.NamedTuple):
    iter: int
    loss_standard_median: float
    loss_diffusion_median: float
    difference: float


@dataclasses.dataclass
class ComparisonReport:
    """
    Attributes:
    - seeds: seeds in the order they were requested.
    - runs: one :class:`TrainRun` per (seed, mode), ordered by seed then standard, diffusion.

    Differences are ``standard − diffusion``: positive means the diffusion run has the
    lower loss.
    """

    seeds: typing.List[int]
    runs: typing.List[TrainRun]

    def run(self, seed: int, mode: str) -> TrainRun:
        for r in self.runs:
            if r.seed == seed and r.mode == mode:
                return r
        raise KeyError((seed, mode))

    def iterations(self) -> typing.List[int]:
        """Evaluation iterations common to every run."""
        common = None
        for r in self.runs:
            its = {rec.iter for rec in r.records}
            common = its if common is None else common & its
        return sorted(common or ())

    def _loss(self, seed: int, mode: str, it: int, split: str) -> float:
        field = SPLIT_FIELDS[split]
        for rec in self.run(seed, mode).records:
            if rec.iter == it:
                return getattr(rec, field)
        raise KeyError((seed, mode, it))

    def difference_curve(self, seed: int, split: str = "train") -> typing.List[typing.Tuple[int, float]]:
        return [
            (it, self._loss(seed, "standard", it, split) - self._loss(seed, "diffusion", it, split))
            for it in self.iterations()
        ]

    def difference_curves(self, split: str = "train") -> typing.Dict[int, typing.List[typing.Tuple[int, float]]]:
        return {seed: self.difference_curve(seed, split) for seed in self.seeds}

    def difference_rows(self, split: str = "train") -> typing.List[DifferenceRow]:
        """
        Per evaluation iteration: median loss of each mode across seeds and the median of
        the paired per-seed differences.
        """
        if split not in SPLIT_FIELDS:
            raise InvalidParameterError(f"split must be one of {tuple(SPLIT_FIELDS)}, got '{split}'")
        rows = []
        for it in self.iterations():
            standard = [self._loss(s, "standard", it, split) for s in self.seeds]
            diffusion = [self._loss(s, "diffusion", it, split) for s in self.seeds]
            rows.append(
                DifferenceRow(
                    it,
                    statistics.median(standard),
                    statistics.median(diffusion),
                    statistics.median(a - b for a, b in zip(standard, diffusion)),
                )
            )
        return rows

    def summary(self) -> dict:
        final_train = self.difference_rows("train")[-1]
        final_val = self.difference_rows("val")[-1]
        return {
            "seeds": list(self.seeds),
            "runs": len(self.runs),
            "final_iter": final_val.iter,
            "final_train_difference_median": final_train.difference,
            "final_val_difference_median": final_val.difference,
            "final_val_loss_standard_median": final_val.loss_standard_median,
            "final_val_loss_diffusion_median": final_val.loss_diffusion_median,
            "diffusion_ahead": final_val.difference > 0,
        }

    def to_json(self) -> str:
        return json.dumps(
            {"seeds": self.seeds, "runs": [r.to_dict() for r in self.runs]},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ComparisonReport":
        d = json.loads(text)
        return cls(seeds=[int(s) for s in d["seeds"]], runs=[TrainRun.from_dict(r) for r in d["runs"]])


def compare_modes(
    lm_cfg: LmConfig,
    train_cfg: TrainConfig,
    corpus: str,
    seeds: typing.Sequence[int],
    workers: int = 1,
) -> ComparisonReport:
    """
    Trains one standard and one diffusion model per seed with otherwise identical settings.

    Runs share no mutable state and may execute concurrently in ``workers`` threads,
    except with dropout, whose masks come from the global generator.
    """
    seeds = list(seeds)
    if not seeds:
        raise InvalidParameterError("compare_modes needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise InvalidParameterError(f"seeds must be distinct, got {seeds}")
    if workers < 1:
        raise InvalidParameterError(f"workers must be at least 1, got {workers}")
    if workers > 1 and lm_cfg.dropout > 0:
        logger.warning("dropout > 0 draws from the global generator; running comparisons sequentially")
        workers = 1

    jobs = [
        (seed, mode, dataclasses.replace(lm_cfg, seed=seed, attention_mode=mode))
        for seed in seeds
        for mode in ATTENTION_MODES
    ]
    logger.info(f"Comparing attention modes over seeds {seeds} ({len(jobs)} runs, {workers} worker(s))")
    if workers == 1:
        results = {(seed, mode): train(cfg, train_cfg, corpus) for seed, mode, cfg in jobs}
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {(seed, mode): pool.submit(train, cfg, train_cfg, corpus) for seed, mode, cfg in jobs}
            results = {key: future.result() for key, future in futures.items()}

    return ComparisonReport(seeds=seeds, runs=[results[(seed, mode)] for seed, mode, _ in jobs])

from loguru import logger

from probdr_transformer.base.command import BaseCommand
from probdr_transformer.commands.train_lm import lm_config, load_corpus, train_config
from probdr_transformer.lm.compare import compare_modes
from probdr_transformer.lm.data import CharVocab
from probdr_transformer.utils.config import add_compare_args, log_event
from probdr_transformer.utils.io import write_csv, write_json, write_jsonl

DIFFERENCE_HEADER = ("iter", "loss_standard_median", "loss_diffusion_median", "difference")


class CompareLmCommand(BaseCommand):
    """Trains paired standard and diffusion models over several seeds and reports loss differences."""

    name = "compare-lm"

    @classmethod
    def add_args(cls, parser):
        super().add_args(parser)
        add_compare_args(cls, parser)

    def run(self) -> int:
        corpus = load_corpus(self.config)
        vocab = CharVocab.from_text(corpus)
        report = compare_modes(
            lm_config(self.config, vocab.size, self.config.seed),
            train_config(self.config),
            corpus,
            self.config.seeds,
            workers=self.config.compare.workers,
        )

        for run in report.runs:
            write_jsonl(self.path("metrics", f"{run.mode}_seed{run.seed}.jsonl"), run.metrics())
        for split, filename in (("train", "difference.csv"), ("val", "difference_val.csv")):
            write_csv(
                self.path(filename),
                DIFFERENCE_HEADER,
                report.difference_rows(split),
            )
        with open(self.path("report.json"), "w") as f:
            f.write(report.to_json())
        summary = report.summary()
        write_json(self.path("summary.json"), summary)

        sign = "diffusion ahead" if summary["diffusion_ahead"] else "standard ahead or tied"
        log_event(f"final val difference median {summary['final_val_difference_median']:.4f} ({sign})")
        logger.success(f"Compared {len(report.runs)} runs over seeds {report.seeds}: {sign}")
        return 0

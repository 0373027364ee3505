from loguru import logger

from probdr_transformer.base.command import BaseCommand
from probdr_transformer.exceptions import ConfigError
from probdr_transformer.graph import knn_graph
from probdr_transformer.pipeline.data import LabeledDataset, load_idx
from probdr_transformer.pipeline.unroll import DimredParams, emit_scatter, run_dimred, step_diagnostics
from probdr_transformer.synthetic import make_blobs
from probdr_transformer.utils.config import add_dimred_args, log_event
from probdr_transformer.utils.io import write_json


class DimredCommand(BaseCommand):
    """Random projection followed by unrolled ProbDR transformer blocks; reports clustering per step."""

    name = "dimred"

    @classmethod
    def add_args(cls, parser):
        super().add_args(parser)
        add_dimred_args(cls, parser)

    def load_dataset(self) -> LabeledDataset:
        data = self.config.data
        if data.images is not None or data.labels is not None:
            if data.images is None or data.labels is None:
                raise ConfigError("--images and --labels must be given together")
            return load_idx(data.images, data.labels, data.limit)
        if self.config.synthetic is None:
            logger.warning("No IDX files given; falling back to the synthetic blobs dataset")
        return make_blobs(data.n, data.d, data.centers, data.separation, self.config.seed)

    def params(self) -> DimredParams:
        cfg = self.config.dimred
        return DimredParams(
            q=cfg.q,
            kappa=cfg.kappa,
            eta=cfg.eta,
            beta=cfg.beta,
            n_blocks=cfg.n_blocks,
            mask=cfg.mask,
            init=cfg.init,
            layer_norm=cfg.layer_norm,
            beta_in_mask=cfg.beta_in_mask,
            seed=self.config.seed,
        )

    def run(self) -> int:
        dataset = self.load_dataset()
        params = self.params()
        trace, weights, mask = run_dimred(dataset, params)

        reference = None
        if self.config.dimred.knn_k > 0:
            reference = knn_graph(dataset.features, self.config.dimred.knn_k)
        steps = step_diagnostics(trace, dataset.labels, weights, mask, reference)
        for record in steps:
            log_event(f"step {record['step']}: cluster_ratio={record['cluster_ratio']:.6g}")

        rows = emit_scatter(trace, dataset.labels, self.path("scatter.csv"), self.config.dimred.all_steps)
        first, last = steps[0]["cluster_ratio"], steps[-1]["cluster_ratio"]
        write_json(
            self.path("cluster_ratio.json"),
            {
                "source": dataset.source,
                "n": dataset.n,
                "d": dataset.d,
                "steps": steps,
                "first": first,
                "last": last,
                "improved": last < first,
            },
        )
        logger.success(f"cluster_ratio {first:.6g} -> {last:.6g}; wrote {rows} scatter rows to {self.out}")
        return 0

from loguru import logger
import torch

from probdr_transformer.base.command import BaseCommand
from probdr_transformer.exceptions import ConfigError
from probdr_transformer.graph import knn_graph
from probdr_transformer.objective import closed_form_embedding, constrained_embedding, embedding_eigenvalues
from probdr_transformer.pipeline.data import LabeledDataset, load_idx
from probdr_transformer.synthetic import chain_dataset, make_blobs
from probdr_transformer.utils.config import add_eigenmaps_args
from probdr_transformer.utils.io import read_matrix_csv, write_json, write_matrix_csv


class EigenmapsCommand(BaseCommand):
    """Closed-form and constrained Laplacian Eigenmaps embeddings of a kNN graph."""

    name = "eigenmaps"

    @classmethod
    def add_args(cls, parser):
        super().add_args(parser)
        add_eigenmaps_args(cls, parser)

    def load_dataset(self) -> LabeledDataset:
        data = self.config.data
        if data.csv is not None:
            features = read_matrix_csv(data.csv)
            return LabeledDataset(features, torch.zeros(features.shape[0], dtype=torch.long), f"csv({data.csv})")
        if data.images is not None or data.labels is not None:
            if data.images is None or data.labels is None:
                raise ConfigError("--images and --labels must be given together")
            return load_idx(data.images, data.labels, data.limit)
        if self.config.synthetic == "chain":
            return chain_dataset()
        if self.config.synthetic == "blobs":
            return make_blobs(data.n, data.d, data.centers, data.separation, self.config.seed)
        raise ConfigError("eigenmaps needs --data, --images/--labels or --synthetic")

    def run(self) -> int:
        cfg = self.config.eigenmaps
        dataset = self.load_dataset()
        logger.info(f"Building {cfg.k}-NN graph on {dataset.n} points from {dataset.source}")
        reference = knn_graph(dataset.features, cfg.k)

        closed = closed_form_embedding(reference.laplacian, cfg.q, cfg.beta, method=cfg.method)
        constrained = constrained_embedding(reference.laplacian, cfg.q, method=cfg.method)
        eigenvalues = embedding_eigenvalues(reference.laplacian, cfg.q, method=cfg.method)

        write_matrix_csv(self.path("closed_form.csv"), closed)
        write_matrix_csv(self.path("constrained.csv"), constrained)
        write_json(
            self.path("eigenvalues.json"),
            {
                "source": dataset.source,
                "n": dataset.n,
                "k": cfg.k,
                "q": cfg.q,
                "beta": cfg.beta,
                "eigenvalues": eigenvalues,
                "trace": float(torch.trace(constrained.T @ reference.laplacian @ constrained)),
            },
        )
        logger.success(f"Wrote embeddings of {dataset.n} points to {self.out}")
        return 0

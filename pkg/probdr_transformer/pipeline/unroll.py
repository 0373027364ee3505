"""
The dimensionality-reduction experiment: project data to q dimensions, normalise, run
a stack of ProbDR transformer blocks and measure how tightly the latents cluster.
"""

import math
import typing
from dataclasses import asdict, dataclass, field

import torch
from loguru import logger

from probdr_transformer import block as blk
from probdr_transformer import graph
from probdr_transformer.exceptions import DegenerateRowError, InvalidInputError, InvalidParameterError, ShapeError
from probdr_transformer.linalg import as_matrix, gaussian_matrix
from probdr_transformer.pipeline.data import LabeledDataset
from probdr_transformer.utils.hashing import derive_seed
from probdr_transformer.utils.io import write_csv

SCATTER_HEADER = ("step", "point", "dim0", "dim1", "label")
MASKS = ("none", "self", "causal")
INITS = ("random", "pca")
LAYER_NORMS = ("experiment", "derivation")


@dataclass(frozen=True)
class DimredParams:
    """Hyperparameters of one pipeline run; defaults are the published experiment settings."""

    q: int = 128
    kappa: float = 30.0
    eta: float = 0.4
    beta: float = 1.0
    n_blocks: int = 8
    mask: str = "none"
    init: str = "random"
    layer_norm: str = "experiment"
    beta_in_mask: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.q < 1:
            raise InvalidParameterError(f"q must be at least 1, got {self.q}")
        if self.n_blocks < 0:
            raise InvalidParameterError(f"n_blocks must be non-negative, got {self.n_blocks}")
        for name, allowed in (("mask", MASKS), ("init", INITS), ("layer_norm", LAYER_NORMS)):
            if getattr(self, name) not in allowed:
                raise InvalidParameterError(f"{name} must be one of {allowed}, got '{getattr(self, name)}'")


@dataclass
class UnrollTrace:
    """
    Attributes:
    - states: n_blocks + 1 matrices; states[0] is the normalised initial embedding.
    - config: snapshot of the settings that produced the trace.
    """

    states: typing.List[torch.Tensor]
    config: typing.Dict[str, typing.Any] = field(default_factory=dict)

    @property
    def n_blocks(self) -> int:
        return len(self.states) - 1

    @property
    def final(self) -> torch.Tensor:
        return self.states[-1]


def random_projection(y, q: int, seed: int) -> torch.Tensor:
    """Y·W with W ~ N(0, 1/d) of shape (d, q), drawn from ``seed``."""
    if q < 1:
        raise InvalidParameterError(f"q must be at least 1, got {q}")
    y = as_matrix(y, "data")
    d = y.shape[1]
    return y @ gaussian_matrix(d, q, 1.0 / math.sqrt(d), seed)


def pca_projection(y, q: int) -> torch.Tensor:
    """Scores of the centred data on its top-q principal directions."""
    y = as_matrix(y, "data")
    if not 1 <= q <= min(y.shape):
        raise InvalidParameterError(f"q must lie in [1, {min(y.shape)}] for PCA, got {q}")
    centred = y - y.mean(dim=0, keepdim=True)
    _, _, vh = torch.linalg.svd(centred, full_matrices=False)
    return centred @ vh[:q].T


def make_mask(name: str, n: int) -> torch.Tensor:
    if name == "none":
        return graph.mask_none(n)
    if name == "self":
        return graph.mask_self_exclusion(n)
    if name == "causal":
        return graph.mask_causal(n)
    raise InvalidParameterError(f"mask must be one of {MASKS}, got '{name}'")


def make_weights(n: int, params: DimredParams) -> blk.BlockWeights:
    if params.layer_norm == "experiment":
        return blk.experiment_init(n, params.q, params.kappa, params.eta, params.beta)
    return blk.derivation_init(params.q, params.kappa, params.eta, params.beta)


def initial_state(y, params: DimredParams, weights: blk.BlockWeights) -> torch.Tensor:
    """Projects the data (random or PCA) and normalises rows with the first LayerNorm gain."""
    if params.init == "pca":
        x = pca_projection(y, params.q)
    else:
        x = random_projection(y, params.q, derive_seed(params.seed, "projection"))
    return blk.layer_norm_rows(x, weights.ln_gain_1)


def unroll(
    x0,
    weights: blk.BlockWeights,
    mask,
    n_blocks: int,
    seed: typing.Optional[int] = None,
    snapshot: typing.Optional[dict] = None,
) -> UnrollTrace:
    """
    Applies :func:`block_forward` ``n_blocks`` times, keeping every intermediate state.

    The trace config always holds kappa, eta, beta, q, n_blocks, seed and mode; values
    the weights do not know are None. ``snapshot`` adds to it.

    Raises:
        DegenerateRowError: With ``block`` set to the index of the failing block.
    """
    if n_blocks < 0:
        raise InvalidParameterError(f"n_blocks must be non-negative, got {n_blocks}")
    x = as_matrix(x0, "initial state", cols=weights.q)
    states = [x]
    for b in range(n_blocks):
        try:
            x = blk.block_forward(x, weights, mask)
        except DegenerateRowError as e:
            raise e.at_block(b) from e
        logger.debug(f"block {b}: mean row norm {float(x.norm(dim=1).mean()):.6g}")
        states.append(x)
    config = {
        "kappa": weights.kappa,
        "eta": weights.eta,
        "beta": weights.beta,
        "q": weights.q,
        "n_blocks": n_blocks,
        "seed": seed,
        "mode": weights.mode,
    }
    config.update(snapshot or {})
    return UnrollTrace(states, config)


def run_dimred(dataset: LabeledDataset, params: DimredParams) -> typing.Tuple[UnrollTrace, blk.BlockWeights, torch.Tensor]:
    """Builds weights and mask for ``dataset`` and unrolls; returns the trace, weights and mask."""
    n = dataset.n
    weights = make_weights(n, params)
    mask = make_mask(params.mask, n)
    if params.beta_in_mask:
        mask = graph.mask_with_beta(mask, params.beta)
    logger.info(
        f"Unrolling {params.n_blocks} blocks on {n} points ({dataset.source}), q={params.q}, "
        f"kappa={params.kappa}, eta={params.eta}, init={params.init}, layer_norm={params.layer_norm}"
    )
    x0 = initial_state(dataset.features, params, weights)
    return unroll(x0, weights, mask, params.n_blocks, seed=params.seed, snapshot=asdict(params)), weights, mask


def cluster_ratio(x, labels) -> float:
    """
    Mean within-class pairwise distance over mean between-class pairwise distance.

    Means are pooled over pairs; a class with fewer than two members contributes no
    within-class pairs.

    Raises:
        InvalidInputError: If no class has two members, there is only one class, or every
            between-class distance is zero.
    """
    x = as_matrix(x, "embedding")
    labels = torch.as_tensor(labels, dtype=torch.long)
    if labels.shape != (x.shape[0],):
        raise ShapeError(f"expected {x.shape[0]} labels, got shape {tuple(labels.shape)}")
    distances = graph.pairwise_distances(x)
    upper = torch.triu(torch.ones_like(distances, dtype=torch.bool), diagonal=1)
    same = labels[:, None] == labels[None, :]
    within = distances[upper & same]
    between = distances[upper & ~same]
    if within.numel() == 0:
        raise InvalidInputError("no class has at least two members")
    if between.numel() == 0:
        raise InvalidInputError("cluster_ratio needs at least two classes")
    between_mean = float(between.mean())
    if between_mean == 0.0:
        raise InvalidInputError("all between-class distances are zero")
    return float(within.mean()) / between_mean


def scatter_steps(trace: UnrollTrace, all_steps: bool = False) -> typing.List[int]:
    if not trace.states:
        raise InvalidInputError("trace is empty")
    if all_steps:
        return list(range(len(trace.states)))
    return sorted({0, len(trace.states) - 1})


def emit_scatter(trace: UnrollTrace, labels, path: str, all_steps: bool = False) -> int:
    """
    Writes ``step,point,dim0,dim1,label`` rows for the first and last states (or all).

    Returns:
        int: Number of data rows written.
    """
    steps = scatter_steps(trace, all_steps)
    labels = torch.as_tensor(labels, dtype=torch.long).tolist()
    if trace.states[0].shape[1] < 2:
        raise ShapeError("scatter output needs at least two latent dimensions")
    rows = []
    for step in steps:
        for point, (dim0, dim1) in enumerate(trace.states[step][:, :2].tolist()):
            rows.append((step, point, dim0, dim1, labels[point]))
    write_csv(path, SCATTER_HEADER, rows)
    return len(rows)


def step_diagnostics(
    trace: UnrollTrace,
    labels,
    weights: typing.Optional[blk.BlockWeights] = None,
    mask=None,
    reference: typing.Optional[graph.KnnGraph] = None,
) -> typing.List[typing.Dict[str, typing.Any]]:
    """
    Per-step ``cluster_ratio`` and, given the block weights and a reference kNN graph,
    the mass of each step's attention matrix on reference edges.
    """
    out = []
    for step, x in enumerate(trace.states):
        record = {"step": step, "cluster_ratio": cluster_ratio(x, labels)}
        if reference is not None and weights is not None:
            mask = graph.mask_none(x.shape[0]) if mask is None else mask
            record["adjacency_match"] = graph.adjacency_match_score(blk.attention_matrix(x, weights, mask), reference)
        out.append(record)
    return out

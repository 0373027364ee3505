"""
Soft (differentiable) adjacencies and Laplacians built from latents, hard kNN
reference graphs built from data, and the logit masks subtracted inside the softmax.
"""

import typing
from dataclasses import dataclass

import torch

from probdr_transformer.exceptions import InvalidInputError, InvalidParameterError, ShapeError
from probdr_transformer.linalg import DTYPE, as_matrix, as_square, row_softmax

# exp(-1e9) underflows to exactly 0.0 in float64.
DEFAULT_IOTA = 1e9
STOCHASTIC_TOLERANCE = 1e-9


@dataclass(frozen=True)
class GraphSpec:
    """Soft adjacency Ã = σ(κZZᵀ − M) with its Laplacian L̃ = I − Ã."""

    adjacency: torch.Tensor
    laplacian: torch.Tensor
    kappa: float
    mask: torch.Tensor

    @classmethod
    def from_latents(cls, z, kappa: float, mask=None) -> "GraphSpec":
        z = as_matrix(z, "latents")
        mask = mask_none(z.shape[0]) if mask is None else mask
        adjacency = soft_adjacency(z, kappa, mask)
        return cls(adjacency, soft_laplacian(adjacency), float(kappa), as_matrix(mask, "mask"))


@dataclass(frozen=True)
class KnnGraph:
    """Symmetrised 0/1 kNN graph with degree matrix D and Laplacian L = D − A."""

    adjacency: torch.Tensor
    degree: torch.Tensor
    laplacian: torch.Tensor
    k: int


def _check_iota(iota: float):
    if not iota > 0:
        raise InvalidParameterError(f"iota must be positive, got {iota}")


def _check_n(n: int):
    if n < 1:
        raise ShapeError(f"mask size must be at least 1, got {n}")


def mask_none(n: int) -> torch.Tensor:
    _check_n(n)
    return torch.zeros(n, n, dtype=DTYPE)


def mask_self_exclusion(n: int, iota: float = DEFAULT_IOTA) -> torch.Tensor:
    """ιI: forbids self-adjacency."""
    _check_n(n)
    _check_iota(iota)
    return iota * torch.eye(n, dtype=DTYPE)


def mask_causal(n: int, iota: float = DEFAULT_IOTA) -> torch.Tensor:
    """ι at (i, j) for j > i: row i may only attend to positions ≤ i."""
    _check_n(n)
    _check_iota(iota)
    return iota * torch.triu(torch.ones(n, n, dtype=DTYPE), diagonal=1)


def mask_with_beta(mask, beta: float) -> torch.Tensor:
    """Folds the −βI diagonal logit offset into a mask: M + βI."""
    mask = as_square(mask, "mask")
    return mask + beta * torch.eye(mask.shape[0], dtype=DTYPE)


def soft_adjacency(z, kappa: float, mask) -> torch.Tensor:
    """
    Row-stochastic soft adjacency σ(κZZᵀ − M).

    Args:
        z: Latents of shape (n, q).
        kappa (float): Concentration, must be positive.
        mask: (n, n) non-negative matrix subtracted from the logits.
    """
    if not kappa > 0:
        raise InvalidParameterError(f"kappa must be positive, got {kappa}")
    z = as_matrix(z, "latents")
    n = z.shape[0]
    mask = as_matrix(mask, "mask", rows=n, cols=n)
    return row_softmax(kappa * (z @ z.T) - mask)


def soft_laplacian(adjacency) -> torch.Tensor:
    """
    L̃ = I − Ã for a row-stochastic Ã.

    Raises:
        InvalidInputError: If a row of ``adjacency`` does not sum to 1 within 1e-9.
    """
    adjacency = as_square(adjacency, "adjacency")
    deviation = float((adjacency.sum(dim=1) - 1.0).abs().max())
    if deviation > STOCHASTIC_TOLERANCE:
        raise InvalidInputError(
            f"adjacency is not row-stochastic (max row-sum deviation {deviation:.3e})"
        )
    return torch.eye(adjacency.shape[0], dtype=DTYPE) - adjacency


def pairwise_distances(y) -> torch.Tensor:
    """Exact Euclidean distances between rows (no matmul expansion, so ties stay exact)."""
    y = as_matrix(y, "data")
    return torch.cdist(y, y, compute_mode="donot_use_mm_for_euclid_dist")


def laplacian_from_adjacency(adjacency: torch.Tensor) -> typing.Tuple[torch.Tensor, torch.Tensor]:
    degree = torch.diag(adjacency.sum(dim=1))
    return degree, degree - adjacency


def knn_graph(y, k: int) -> KnnGraph:
    """
    Symmetrised k-nearest-neighbour graph of the rows of ``y``.

    Neighbours are chosen by Euclidean distance with ties going to the lower index
    (stable sort); the directed graph is symmetrised as A ← max(A, Aᵀ). Duplicate
    points are valid neighbours at distance 0; a point is never its own neighbour.

    Raises:
        InvalidParameterError: If k is not in [1, n).
    """
    y = as_matrix(y, "data")
    n = y.shape[0]
    if not 1 <= k < n:
        raise InvalidParameterError(f"k must satisfy 1 <= k < n={n}, got {k}")
    distances = pairwise_distances(y)
    distances.fill_diagonal_(float("inf"))
    order = torch.sort(distances, dim=1, stable=True).indices[:, :k]

    directed = torch.zeros(n, n, dtype=DTYPE)
    directed.scatter_(1, order, 1.0)
    adjacency = torch.maximum(directed, directed.T)
    degree, laplacian = laplacian_from_adjacency(adjacency)
    return KnnGraph(adjacency, degree, laplacian, k)


def adjacency_match_score(soft, ref: KnnGraph) -> float:
    """
    Mean over rows of the soft-adjacency mass lying on reference edges.

    Returns 1.0 iff every row of ``soft`` puts all its mass on edges of ``ref``; rows
    that are isolated in ``ref`` contribute 0.
    """
    soft = as_square(soft, "soft adjacency")
    if soft.shape != ref.adjacency.shape:
        raise ShapeError(
            f"soft adjacency {tuple(soft.shape)} does not match reference {tuple(ref.adjacency.shape)}"
        )
    on_edges = (ref.adjacency > 0).to(DTYPE)
    return float((soft * on_edges).sum(dim=1).mean())

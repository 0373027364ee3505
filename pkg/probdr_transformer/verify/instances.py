"""Random problem instances shared by the verification suites and the unit tests."""

import torch

from probdr_transformer.block import project_rows
from probdr_transformer.linalg import DTYPE


def random_symmetric(n: int, g: torch.Generator) -> torch.Tensor:
    a = torch.randn(n, n, generator=g, dtype=DTYPE)
    return 0.5 * (a + a.T)


def random_spd(n: int, g: torch.Generator, shift: float = 0.1) -> torch.Tensor:
    a = torch.randn(n, n, generator=g, dtype=DTYPE)
    return a @ a.T + shift * torch.eye(n, dtype=DTYPE)


def random_projected(n: int, q: int, g: torch.Generator) -> torch.Tensor:
    """Rows with zero mean and unit norm."""
    return project_rows(torch.randn(n, q, generator=g, dtype=DTYPE))


def random_symmetric_laplacian(n: int, g: torch.Generator) -> torch.Tensor:
    """D − W for a dense symmetric W with uniform [0, 1/n) weights and zero diagonal."""
    w = torch.rand(n, n, generator=g, dtype=DTYPE) / n
    w = torch.triu(w, diagonal=1)
    w = w + w.T
    return torch.diag(w.sum(dim=1)) - w


def random_centred_orthonormal(n: int, q: int, g: torch.Generator) -> torch.Tensor:
    """n×q orthonormal columns, each orthogonal to the all-ones vector."""
    a = torch.randn(n, q, generator=g, dtype=DTYPE)
    a = a - a.mean(dim=0, keepdim=True)
    qmat, _ = torch.linalg.qr(a)
    return qmat


def line_points(n: int) -> torch.Tensor:
    """n evenly spaced 1-D points; their 1-NN graph is the path 0 - 1 - … - (n-1)."""
    return torch.arange(n, dtype=DTYPE)[:, None]

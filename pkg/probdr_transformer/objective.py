"""
The stop-grad ProbDR objective

    KL ∝ tr(L̃(XXᵀ + βI)) − logdet(XXᵀ + βI),

its gradients with the Laplacian L̃ held constant, and the closed-form optimal
embeddings of the probabilistic Laplacian Eigenmaps model.
"""

import math
import typing
from dataclasses import dataclass

import torch
from loguru import logger

from probdr_transformer.exceptions import InsufficientRankError, InvalidParameterError, ShapeError
from probdr_transformer.linalg import DTYPE, as_matrix, as_square, log_det_psd, sym_eig

ZERO_EIGENVALUE_THRESHOLD = 1e-9
PROJECTION_TOLERANCE = 1e-10


@dataclass(frozen=True)
class ObjectiveParams:
    """
    Attributes:
    - beta: Wishart scale regulariser β.
    - kappa: softmax concentration κ.
    - q: latent dimension.
    - d: Wishart degrees of freedom (bookkeeping only).
    """

    beta: float
    kappa: float
    q: int
    d: int = 1

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidParameterError(f"beta must be positive, got {self.beta}")
        if not self.kappa > 0:
            raise InvalidParameterError(f"kappa must be positive, got {self.kappa}")
        if self.q < 1:
            raise InvalidParameterError(f"q must be at least 1, got {self.q}")


@dataclass(frozen=True)
class EmbeddingState:
    x: torch.Tensor
    projected: bool = False

    @classmethod
    def of(cls, x) -> "EmbeddingState":
        """Wraps ``x``, setting ``projected`` when every row is zero-mean with unit norm."""
        x = as_matrix(x, "embedding")
        return cls(x, is_projected(x))


def is_projected(x: torch.Tensor, tol: float = PROJECTION_TOLERANCE) -> bool:
    means_ok = bool((x.sum(dim=1).abs() <= tol).all())
    norms_ok = bool(((x.norm(dim=1) - 1.0).abs() <= tol).all())
    return means_ok and norms_ok


def _check_pair(x, ltilde) -> typing.Tuple[torch.Tensor, torch.Tensor]:
    x = as_matrix(x, "X")
    ltilde = as_square(ltilde, "Laplacian")
    if ltilde.shape[0] != x.shape[0]:
        raise ShapeError(
            f"Laplacian is {ltilde.shape[0]}x{ltilde.shape[0]} but X has {x.shape[0]} rows"
        )
    return x, ltilde


def data_term(x, ltilde, beta: float) -> float:
    """tr(L̃XXᵀ) + β·tr(L̃), evaluated as Σ (L̃X)∘X so XXᵀ is never formed."""
    x, ltilde = _check_pair(x, ltilde)
    return float(((ltilde @ x) * x).sum() + beta * torch.trace(ltilde))


def reg_term(x, beta: float) -> float:
    """logdet(XXᵀ + βI) via the q×q identity logdet(XᵀX + βI) + (n − q)·log β."""
    if not beta > 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    x = as_matrix(x, "X")
    n, q = x.shape
    gram = x.T @ x + beta * torch.eye(q, dtype=DTYPE)
    return log_det_psd(gram) + (n - q) * math.log(beta)


def kl_objective(x, ltilde, params: ObjectiveParams) -> float:
    """data_term − reg_term (the additive constant of the KL is dropped)."""
    return data_term(x, ltilde, params.beta) - reg_term(x, params.beta)


def grad_data(x, ltilde) -> torch.Tensor:
    """2L̃X, with L̃ treated as a constant (no differentiation through Ã(X))."""
    x, ltilde = _check_pair(x, ltilde)
    return 2.0 * (ltilde @ x)


def grad_data_exact(x, ltilde) -> torch.Tensor:
    """(L̃ + L̃ᵀ)X, the exact gradient of the data term; equals :func:`grad_data` for symmetric L̃."""
    x, ltilde = _check_pair(x, ltilde)
    return (ltilde + ltilde.T) @ x


def grad_reg_exact(x, beta: float) -> torch.Tensor:
    """2(XXᵀ + βI)⁻¹X computed as 2X(XᵀX + βI)⁻¹ (a q×q solve)."""
    if not beta > 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    x = as_matrix(x, "X")
    q = x.shape[1]
    gram = x.T @ x + beta * torch.eye(q, dtype=DTYPE)
    # gram is symmetric, so X·gram⁻¹ = (gram⁻¹·Xᵀ)ᵀ
    return 2.0 * torch.linalg.solve(gram, x.T).T


def grad_reg_approx(x, beta: float, q: int) -> torch.Tensor:
    """The linear approximation (2/(q + β))·X."""
    if not beta > 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    return (2.0 / (q + beta)) * as_matrix(x, "X")


def reg_grad_gap(x, beta: float, q: typing.Optional[int] = None) -> typing.Dict[str, float]:
    """
    Relative Frobenius gap between the exact regulariser gradient and two linear
    approximations: the 2/(q+β) constant and 2q/(n+βq), the constant implied by the
    push-through identity for row-normalised X. Reported, never asserted.
    """
    x = as_matrix(x, "X")
    n = x.shape[0]
    q = x.shape[1] if q is None else q
    exact = grad_reg_exact(x, beta)
    scale = max(float(exact.norm()), 1e-300)
    return {
        "constant_q_beta": float((exact - (2.0 / (q + beta)) * x).norm()) / scale,
        "constant_push_through": float((exact - (2.0 * q / (n + beta * q)) * x).norm()) / scale,
    }


def _smallest_nonzero(l, q: int, method: str = "jacobi") -> typing.Tuple[torch.Tensor, torch.Tensor]:
    l = as_square(l, "Laplacian")
    n = l.shape[0]
    if not 1 <= q < n:
        raise InvalidParameterError(f"q must satisfy 1 <= q < n={n}, got {q}")
    values, vectors = sym_eig(l, method=method)
    keep = values >= ZERO_EIGENVALUE_THRESHOLD
    if int(keep.sum()) < q:
        raise InsufficientRankError(
            f"need {q} non-zero eigenvalues, found {int(keep.sum())}", values.tolist()
        )
    return values[keep][:q], vectors[:, keep][:, :q]


def closed_form_embedding(l, q: int, beta: float, method: str = "jacobi") -> torch.Tensor:
    """
    X̂ = U_q·diag(max(λᵢ⁻¹ − β, 0))^{1/2}, the ELBO maximiser with R = I.

    Eigenvalues below 1e-9 (the constant modes) are discarded before the q smallest
    are taken, so disconnected graphs are handled.

    Raises:
        InsufficientRankError: If fewer than q eigenvalues are non-zero.
    """
    values, vectors = _smallest_nonzero(l, q, method)
    scale = 1.0 / values - beta
    if bool((scale < 0).any()):
        logger.warning(
            f"beta={beta} exceeds 1/lambda for {int((scale < 0).sum())} of {q} eigenvalues; clamping to zero columns"
        )
    return vectors * torch.sqrt(scale.clamp(min=0.0))


def constrained_embedding(l, q: int, method: str = "jacobi") -> torch.Tensor:
    """X̂ = U_q, the minimiser of tr(LXXᵀ) subject to XᵀX = I (R = I)."""
    _, vectors = _smallest_nonzero(l, q, method)
    return vectors


def embedding_eigenvalues(l, q: int, method: str = "jacobi") -> typing.List[float]:
    values, _ = _smallest_nonzero(l, q, method)
    return values.tolist()

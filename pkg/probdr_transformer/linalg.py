"""
Dense linear-algebra kernels used by every other module.

All matrices are ``torch.float64`` tensors of rank 2. Functions never modify their
inputs and keep no state between calls, so they are safe to share across threads.
"""

import math
import typing
from functools import lru_cache

import torch

from probdr_transformer.exceptions import (
    ConvergenceError,
    InvalidInputError,
    InvalidParameterError,
    NotPSDError,
    ShapeError,
)

DTYPE = torch.float64

JACOBI_MAX_SWEEPS = 100
JACOBI_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10
LOG_CLAMP = 1e-300


class EigenPair(typing.NamedTuple):
    """Eigenvalues sorted ascending; column ``i`` of ``eigenvectors`` pairs with eigenvalue ``i``."""

    eigenvalues: torch.Tensor
    eigenvectors: torch.Tensor


def as_matrix(
    m,
    name: str = "matrix",
    rows: typing.Optional[int] = None,
    cols: typing.Optional[int] = None,
) -> torch.Tensor:
    """
    Validates ``m`` as a finite rank-2 float64 matrix and returns it as a tensor.

    Args:
        m: A tensor or nested sequence of numbers.
        name (str): Name used in error messages.
        rows (int, optional): Required number of rows.
        cols (int, optional): Required number of columns.

    Raises:
        ShapeError: If ``m`` is not rank 2 or the dimensions do not match.
        InvalidInputError: If ``m`` contains NaN or Inf.
    """
    t = torch.as_tensor(m, dtype=DTYPE)
    if t.dim() != 2:
        raise ShapeError(f"{name} must be a matrix, got shape {tuple(t.shape)}")
    if rows is not None and t.shape[0] != rows:
        raise ShapeError(f"{name} must have {rows} rows, got {t.shape[0]}")
    if cols is not None and t.shape[1] != cols:
        raise ShapeError(f"{name} must have {cols} columns, got {t.shape[1]}")
    if not torch.isfinite(t).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    return t


def as_square(m, name: str = "matrix") -> torch.Tensor:
    t = as_matrix(m, name)
    if t.shape[0] != t.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {tuple(t.shape)}")
    return t


def row_softmax(m) -> torch.Tensor:
    """
    Row-wise softmax, stabilised by subtracting each row maximum before exponentiation.

    Returns:
        torch.Tensor: A row-stochastic matrix of the same shape as ``m``.
    """
    m = as_matrix(m, "softmax input")
    shifted = m - m.max(dim=1, keepdim=True).values
    e = torch.exp(shifted)
    return e / e.sum(dim=1, keepdim=True)


@lru_cache(maxsize=64)
def _round_robin(n: int) -> typing.Tuple[typing.Tuple[torch.Tensor, torch.Tensor], ...]:
    """Tournament schedule: n-1 (or n) rounds of disjoint index pairs covering every pair once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [
            (players[i], players[m - 1 - i])
            for i in range(m // 2)
            if players[i] < n and players[m - 1 - i] < n
        ]
        p = torch.tensor([min(a, b) for a, b in pairs], dtype=torch.long)
        q = torch.tensor([max(a, b) for a, b in pairs], dtype=torch.long)
        rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _off_diagonal_norm(a: torch.Tensor) -> float:
    return float((a - torch.diag_embed(torch.diagonal(a))).norm())


def _jacobi(s: torch.Tensor, max_sweeps: int, tol: float) -> EigenPair:
    n = s.shape[0]
    a = s.clone()
    v = torch.eye(n, dtype=DTYPE)
    threshold = tol * max(1.0, float(s.norm()))
    off = _off_diagonal_norm(a)
    sweeps = 0
    while off > threshold:
        if sweeps == max_sweeps:
            raise ConvergenceError(
                f"Jacobi eigensolver did not converge within {max_sweeps} sweeps",
                residual=off,
            )
        for p, q in _round_robin(n):
            app = a[p, p]
            aqq = a[q, q]
            apq = a[p, q]
            rotate = apq != 0
            theta = (aqq - app) / torch.where(rotate, 2.0 * apq, torch.ones_like(apq))
            sign = torch.ones_like(theta)
            sign[theta < 0] = -1.0
            t = sign / (theta.abs() + torch.hypot(theta, torch.ones_like(theta)))
            t = torch.where(rotate, t, torch.zeros_like(t))
            c = 1.0 / torch.sqrt(t * t + 1.0)
            s_ = t * c

            # A <- A J
            col_p, col_q = a[:, p], a[:, q]
            a[:, p] = c * col_p - s_ * col_q
            a[:, q] = s_ * col_p + c * col_q
            # A <- J^T A
            row_p, row_q = a[p, :], a[q, :]
            a[p, :] = c[:, None] * row_p - s_[:, None] * row_q
            a[q, :] = s_[:, None] * row_p + c[:, None] * row_q
            # V <- V J
            vec_p, vec_q = v[:, p], v[:, q]
            v[:, p] = c * vec_p - s_ * vec_q
            v[:, q] = s_ * vec_p + c * vec_q
        a = 0.5 * (a + a.T)
        sweeps += 1
        off = _off_diagonal_norm(a)

    values, order = torch.sort(torch.diagonal(a), stable=True)
    return EigenPair(values.clone(), v[:, order].contiguous())


def sym_eig(
    s,
    method: str = "jacobi",
    max_sweeps: int = JACOBI_MAX_SWEEPS,
    tol: float = JACOBI_TOLERANCE,
) -> EigenPair:
    """
    Eigendecomposition of a symmetric matrix with eigenvalues in ascending order.

    The input is symmetrised as (s + sᵀ)/2. The default solver is cyclic Jacobi with a
    round-robin ordering: each round applies n/2 disjoint Givens rotations at once,
    every off-diagonal pair is visited once per sweep. Sweeps stop when the off-diagonal
    Frobenius norm drops below ``tol * max(1, ‖s‖_F)``.

    Args:
        s: Symmetric matrix.
        method (str): ``"jacobi"`` or ``"lapack"`` (``torch.linalg.eigh``).
        max_sweeps (int): Jacobi sweep cap.
        tol (float): Relative off-diagonal tolerance.

    Raises:
        ShapeError: If ``s`` is not square.
        InvalidInputError: If ``s`` is visibly asymmetric (beyond 1e-9).
        ConvergenceError: If Jacobi does not converge within ``max_sweeps``.
    """
    s = as_square(s, "symmetric matrix")
    if s.numel() == 0:
        raise ShapeError("cannot decompose an empty matrix")
    asymmetry = float((s - s.T).abs().max())
    if asymmetry > 1e-9 * max(1.0, float(s.abs().max())):
        raise InvalidInputError(f"matrix is not symmetric (max asymmetry {asymmetry:.3e})")
    s = 0.5 * (s + s.T)
    if method == "lapack":
        values, vectors = torch.linalg.eigh(s)
        return EigenPair(values, vectors)
    if method != "jacobi":
        raise InvalidParameterError(f"unknown eigensolver method '{method}'")
    return _jacobi(s, max_sweeps, tol)


def log_det_psd(s, method: str = "jacobi") -> float:
    """
    Log-determinant of a symmetric positive semi-definite matrix.

    Eigenvalues are clamped below at 1e-300 before taking logs, so singular inputs give a
    large negative but finite value.

    Raises:
        NotPSDError: If an eigenvalue is below -1e-10.
    """
    values = sym_eig(s, method=method).eigenvalues
    if values.numel() == 0:
        return 0.0
    smallest = float(values.min())
    if smallest < -PSD_TOLERANCE:
        raise NotPSDError("matrix is not positive semi-definite", smallest)
    return float(torch.log(values.clamp(min=LOG_CLAMP)).sum())


def generator(seed: int) -> torch.Generator:
    """
    A CPU ``torch.Generator`` (mt19937) seeded with ``seed``.

    Gaussians come from torch's own sampler, so streams match across runs of one torch
    version only.
    """
    g = torch.Generator(device="cpu")
    g.manual_seed(int(seed))
    return g


def gaussian_matrix(rows: int, cols: int, std: float, seed: int) -> torch.Tensor:
    """
    I.i.d. N(0, std²) entries; the same seed always gives a bit-identical matrix.

    Raises:
        ShapeError: If either dimension is not positive.
        InvalidParameterError: If ``std`` is not a positive finite number.
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"gaussian matrix dimensions must be positive, got ({rows}, {cols})")
    if not (std > 0 and math.isfinite(std)):
        raise InvalidParameterError(f"std must be positive, got {std}")
    return torch.randn(rows, cols, generator=generator(seed), dtype=DTYPE) * std


def orthogonal_matrix(q: int, seed: int) -> torch.Tensor:
    """Haar-distributed random orthogonal q×q matrix (QR of a Gaussian matrix)."""
    g = gaussian_matrix(q, q, 1.0, seed)
    qmat, r = torch.linalg.qr(g)
    signs = torch.sign(torch.diagonal(r))
    signs[signs == 0] = 1.0
    return qmat * signs

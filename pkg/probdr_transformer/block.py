"""
A single-head encoder transformer block written as alternating optimisation steps on
the ProbDR objective:

    attention (a gradient step on the data term)  →  LayerNorm (projection)
    →  linear layer (a step on the regulariser)    →  LayerNorm (projection)

In ``diffusion`` mode the attention step uses (A − I), the negative soft Laplacian;
in ``standard`` mode it uses A as an ordinary transformer does.
"""

import dataclasses
import math
import typing

import torch

from probdr_transformer.exceptions import DegenerateRowError, InvalidParameterError, ShapeError
from probdr_transformer.linalg import DTYPE, as_matrix, row_softmax
from probdr_transformer.objective import grad_data, grad_reg_approx

MODES = ("standard", "diffusion")
LOGIT_SCALES = ("scaled_dot", "raw")
DEGENERATE_TOLERANCE = 1e-12
MAX_EXPERIMENT_ETA = 0.5


@dataclasses.dataclass(frozen=True)
class BlockWeights:
    """
    Weights of one block.

    Attributes:
    - w_q, w_k, w_v, w_lin: (q, q) query, key, value and feed-forward weights.
    - ln_gain_1, ln_gain_2: per-dimension LayerNorm gains (length q, no bias).
    - eta: the step size the weights were built from.
    - kappa, beta: concentration and Wishart scale the weights were built from, if known.
    - mode: ``standard`` (A·X) or ``diffusion`` ((A − I)·X).
    - logit_scale: ``scaled_dot`` divides logits by √q, ``raw`` does not.
    """

    w_q: torch.Tensor
    w_k: torch.Tensor
    w_v: torch.Tensor
    w_lin: torch.Tensor
    ln_gain_1: torch.Tensor
    ln_gain_2: torch.Tensor
    eta: float
    mode: str = "diffusion"
    logit_scale: str = "scaled_dot"
    kappa: typing.Optional[float] = None
    beta: typing.Optional[float] = None

    def __post_init__(self):
        q = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v", "w_lin"):
            w = getattr(self, name)
            if tuple(w.shape) != (q, q):
                raise ShapeError(f"{name} must be {q}x{q}, got {tuple(w.shape)}")
        for name in ("ln_gain_1", "ln_gain_2"):
            g = getattr(self, name)
            if tuple(g.shape) != (q,):
                raise ShapeError(f"{name} must have length {q}, got {tuple(g.shape)}")
        if self.mode not in MODES:
            raise InvalidParameterError(f"mode must be one of {MODES}, got '{self.mode}'")
        if self.logit_scale not in LOGIT_SCALES:
            raise InvalidParameterError(
                f"logit_scale must be one of {LOGIT_SCALES}, got '{self.logit_scale}'"
            )

    @property
    def q(self) -> int:
        return self.w_q.shape[0]

    def as_standard(self) -> "BlockWeights":
        return dataclasses.replace(self, mode="standard")

    def as_diffusion(self) -> "BlockWeights":
        return dataclasses.replace(self, mode="diffusion")


def _eye(q: int) -> torch.Tensor:
    return torch.eye(q, dtype=DTYPE)


def _gain(q: int, value: float) -> torch.Tensor:
    return torch.full((q,), value, dtype=DTYPE)


def experiment_init(n: int, q: int, kappa: float, eta: float, beta: float = 1.0) -> BlockWeights:
    """
    Experiment weights: W_q = √(κn)·I, W_k = √(κn/q)·I, W_v = 2η·I, W_lin = −2η·I,
    LayerNorm gains 1/√n, scaled-dot logits and diffusion mode. With rows of standard
    deviation 1/√n the pre-mask logit diagonal equals κ.

    ``beta`` does not enter these weights (the experiment's W_lin is −2η·I); it is
    validated so the signature mirrors :func:`derivation_init`.

    Raises:
        InvalidParameterError: If eta is outside (0, 0.5] or kappa/beta are not positive.
    """
    if not 0 < eta <= MAX_EXPERIMENT_ETA:
        raise InvalidParameterError(f"eta must lie in (0, {MAX_EXPERIMENT_ETA}], got {eta}")
    if not kappa > 0:
        raise InvalidParameterError(f"kappa must be positive, got {kappa}")
    if not beta > 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    if n < 1 or q < 1:
        raise InvalidParameterError(f"n and q must be positive, got n={n}, q={q}")
    return BlockWeights(
        w_q=math.sqrt(kappa * n) * _eye(q),
        w_k=math.sqrt(kappa * n / q) * _eye(q),
        w_v=2.0 * eta * _eye(q),
        w_lin=-2.0 * eta * _eye(q),
        ln_gain_1=_gain(q, 1.0 / math.sqrt(n)),
        ln_gain_2=_gain(q, 1.0 / math.sqrt(n)),
        eta=eta,
        mode="diffusion",
        logit_scale="scaled_dot",
        kappa=float(kappa),
        beta=float(beta),
    )


paper_init = experiment_init

def derivation_init(q: int, kappa: float, eta: float, beta: float) -> BlockWeights:
    """
    Weights under which one block is exactly one projected gradient-descent step:
    W_q = W_k = √κ·I (raw logits κXXᵀ), W_v = 2η·I, W_lin = −(2η/(β+q))·I and
    LayerNorm gains 1/√q (unit-norm rows).
    """
    if not 0 < eta <= MAX_EXPERIMENT_ETA:
        raise InvalidParameterError(f"eta must lie in (0, {MAX_EXPERIMENT_ETA}], got {eta}")
    if not kappa > 0 or not beta > 0:
        raise InvalidParameterError(f"kappa and beta must be positive, got {kappa}, {beta}")
    return BlockWeights(
        w_q=math.sqrt(kappa) * _eye(q),
        w_k=math.sqrt(kappa) * _eye(q),
        w_v=2.0 * eta * _eye(q),
        w_lin=-(2.0 * eta / (beta + q)) * _eye(q),
        ln_gain_1=_gain(q, 1.0 / math.sqrt(q)),
        ln_gain_2=_gain(q, 1.0 / math.sqrt(q)),
        eta=eta,
        mode="diffusion",
        logit_scale="raw",
        kappa=float(kappa),
        beta=float(beta),
    )


def attention_logits(x, w: BlockWeights) -> torch.Tensor:
    """Pre-mask logits (XW_q)(XW_k)ᵀ, divided by √q for ``scaled_dot``."""
    x = as_matrix(x, "X", cols=w.q)
    logits = (x @ w.w_q) @ (x @ w.w_k).T
    if w.logit_scale == "scaled_dot":
        logits = logits / math.sqrt(w.q)
    return logits


def attention_matrix(x, w: BlockWeights, mask) -> torch.Tensor:
    x = as_matrix(x, "X", cols=w.q)
    n = x.shape[0]
    mask = as_matrix(mask, "mask", rows=n, cols=n)
    return row_softmax(attention_logits(x, w) - mask)


def attention_step(x, w: BlockWeights, mask) -> torch.Tensor:
    """X + (A − I)X·W_v in diffusion mode, X + A·X·W_v in standard mode."""
    x = as_matrix(x, "X", cols=w.q)
    a = attention_matrix(x, w, mask)
    mixed = a @ x
    if w.mode == "diffusion":
        mixed = mixed - x
    return x + mixed @ w.w_v


def _centre(x: torch.Tensor) -> torch.Tensor:
    return x - x.mean(dim=1, keepdim=True)


def _first_degenerate(scale: torch.Tensor) -> typing.Optional[int]:
    bad = torch.nonzero(scale < DEGENERATE_TOLERANCE)
    return int(bad[0, 0]) if bad.numel() else None


def project_rows(x) -> torch.Tensor:
    """
    Centres every row to mean 0 and scales it to unit ℓ2 norm.

    Raises:
        DegenerateRowError: Naming the first row whose centred norm is below 1e-12.
    """
    x = as_matrix(x, "X")
    centred = _centre(x)
    norms = centred.norm(dim=1)
    row = _first_degenerate(norms)
    if row is not None:
        raise DegenerateRowError(row)
    return centred / norms[:, None]


def layer_norm_rows(x, gain) -> torch.Tensor:
    """Per row (x − mean)/std with the population std, times ``gain``; no bias, no epsilon."""
    x = as_matrix(x, "X")
    gain = torch.as_tensor(gain, dtype=DTYPE)
    if gain.dim() == 0:
        gain = gain.expand(x.shape[1])
    if tuple(gain.shape) != (x.shape[1],):
        raise ShapeError(f"gain must have length {x.shape[1]}, got {tuple(gain.shape)}")
    centred = _centre(x)
    std = torch.sqrt((centred * centred).mean(dim=1))
    row = _first_degenerate(std)
    if row is not None:
        raise DegenerateRowError(row)
    return centred / std[:, None] * gain


def ffn_step(x, w_lin) -> torch.Tensor:
    """Residual linear layer X + X·W_lin (no activation)."""
    x = as_matrix(x, "X")
    w_lin = as_matrix(w_lin, "w_lin", rows=x.shape[1], cols=x.shape[1])
    return x + x @ w_lin


def block_forward(x, w: BlockWeights, mask) -> torch.Tensor:
    h = attention_step(x, w, mask)
    h = layer_norm_rows(h, w.ln_gain_1)
    h = ffn_step(h, w.w_lin)
    return layer_norm_rows(h, w.ln_gain_2)


def gd_reference_step(x, ltilde, eta: float, beta: float, q: int) -> torch.Tensor:
    """
    Two projected gradient steps with L̃ frozen:
    X₁ = X − η·2L̃X, X₂ = P(X₁), X₃ = X₂ − η·(2/(q+β))·X₂, returns P(X₃),
    where P is :func:`project_rows`.
    """
    x1 = as_matrix(x, "X") - eta * grad_data(x, ltilde)
    x2 = project_rows(x1)
    x3 = x2 - eta * grad_reg_approx(x2, beta, q)
    return project_rows(x3)


def weight_scale(w) -> float:
    """|det W|^{1/q}: the isotropic scale of W, read as a learnt step size."""
    w = as_matrix(w, "weight")
    q = w.shape[0]
    _, logabsdet = torch.linalg.slogdet(w)
    return float(torch.exp(logabsdet / q))


def polar_decompose(w) -> typing.Tuple[torch.Tensor, torch.Tensor]:
    """W = R·P with R orthogonal (a rotation/reflection) and P symmetric PSD."""
    w = as_matrix(w, "weight")
    u, s, vh = torch.linalg.svd(w)
    return u @ vh, vh.T @ torch.diag(s) @ vh

"""
Character-level decoder transformer whose attention heads mix values with either the
attention matrix A (``standard``) or the negative soft Laplacian A − I (``diffusion``).

Everything except that subtraction is shared between the two modes.
"""

import math
import typing
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
from torch.nn import functional as F

from probdr_transformer.exceptions import InvalidInputError, InvalidParameterError, ShapeError
from probdr_transformer.linalg import generator
from probdr_transformer.utils.hashing import derive_seed

ATTENTION_MODES = ("standard", "diffusion")
DTYPES = {"float32": torch.float32, "float64": torch.float64}
INIT_STD = 0.02
GRADIENT_CHECK_STEP = 1e-4
GRADIENT_CHECK_FLOOR = 1e-3


@dataclass(frozen=True)
class LmConfig:
    vocab_size: int
    block_size: int = 64
    n_layer: int = 2
    n_head: int = 2
    n_embd: int = 128
    attention_mode: str = "diffusion"
    dropout: float = 0.0
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.vocab_size < 1:
            raise InvalidParameterError(f"vocab_size must be positive, got {self.vocab_size}")
        if self.block_size < 1:
            raise InvalidParameterError(f"block_size must be at least 1, got {self.block_size}")
        if self.n_layer < 1 or self.n_head < 1:
            raise InvalidParameterError(f"n_layer and n_head must be positive, got {self.n_layer}, {self.n_head}")
        if self.n_embd % self.n_head != 0:
            raise InvalidParameterError(f"n_embd={self.n_embd} is not divisible by n_head={self.n_head}")
        if self.attention_mode not in ATTENTION_MODES:
            raise InvalidParameterError(
                f"attention_mode must be one of {ATTENTION_MODES}, got '{self.attention_mode}'"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidParameterError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.dtype not in DTYPES:
            raise InvalidParameterError(f"dtype must be one of {tuple(DTYPES)}, got '{self.dtype}'")

    @property
    def torch_dtype(self) -> torch.dtype:
        return DTYPES[self.dtype]

    def to_dict(self) -> dict:
        return asdict(self)


class CausalSelfAttention(nn.Module):
    def __init__(self, config: LmConfig):
        super().__init__()
        # key, query, value projections for all heads, in a batch
        self.c_attn = nn.Linear(config.n_embd, 3 * config.n_embd)
        self.c_proj = nn.Linear(config.n_embd, config.n_embd)
        self.attn_dropout = nn.Dropout(config.dropout)
        self.resid_dropout = nn.Dropout(config.dropout)
        self.n_head = config.n_head
        self.n_embd = config.n_embd
        self.mode = config.attention_mode
        self.register_buffer(
            "bias",
            torch.tril(torch.ones(config.block_size, config.block_size, dtype=torch.bool)).view(
                1, 1, config.block_size, config.block_size
            ),
            persistent=False,
        )

    def _heads(self, x: torch.Tensor) -> typing.Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        B, T, C = x.size()
        q, k, v = self.c_attn(x).split(self.n_embd, dim=2)
        k = k.view(B, T, self.n_head, C // self.n_head).transpose(1, 2)  # (B, nh, T, hs)
        q = q.view(B, T, self.n_head, C // self.n_head).transpose(1, 2)
        v = v.view(B, T, self.n_head, C // self.n_head).transpose(1, 2)
        return q, k, v

    def attention(self, x: torch.Tensor) -> torch.Tensor:
        """Row-stochastic causal A of every head, shape (B, nh, T, T)."""
        q, k, _ = self._heads(x)
        return self._softmax(q, k)

    def _softmax(self, q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
        T = q.size(-2)
        att = (q @ k.transpose(-2, -1)) * (1.0 / math.sqrt(k.size(-1)))
        att = att.masked_fill(~self.bias[:, :, :T, :T], float("-inf"))
        return F.softmax(att, dim=-1)

    def mixing(self, att: torch.Tensor) -> torch.Tensor:
        """A in standard mode, A − I in diffusion mode (applied before dropout)."""
        if self.mode == "diffusion":
            T = att.size(-1)
            att = att - torch.eye(T, dtype=att.dtype, device=att.device)
        return att

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, T, C = x.size()
        q, k, v = self._heads(x)
        att = self.attn_dropout(self.mixing(self._softmax(q, k)))
        y = att @ v  # (B, nh, T, hs)
        y = y.transpose(1, 2).contiguous().view(B, T, C)
        return self.resid_dropout(self.c_proj(y))


class MLP(nn.Module):
    def __init__(self, config: LmConfig):
        super().__init__()
        self.c_fc = nn.Linear(config.n_embd, 4 * config.n_embd)
        self.c_proj = nn.Linear(4 * config.n_embd, config.n_embd)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x):
        return self.dropout(self.c_proj(F.relu(self.c_fc(x))))


class Block(nn.Module):
    def __init__(self, config: LmConfig):
        super().__init__()
        self.ln_1 = nn.LayerNorm(config.n_embd)
        self.attn = CausalSelfAttention(config)
        self.ln_2 = nn.LayerNorm(config.n_embd)
        self.mlp = MLP(config)

    def forward(self, x):
        x = x + self.attn(self.ln_1(x))
        x = x + self.mlp(self.ln_2(x))
        return x


class GPT(nn.Module):
    """
    Token and learned positional embeddings, ``n_layer`` pre-LayerNorm blocks, a final
    LayerNorm and an untied vocabulary projection.

    Parameters are drawn from a private generator seeded by ``derive_seed(seed, "init")``,
    so two models with the same config are identical whatever their attention mode.
    """

    def __init__(self, config: LmConfig):
        super().__init__()
        self.config = config
        self.transformer = nn.ModuleDict(
            dict(
                wte=nn.Embedding(config.vocab_size, config.n_embd),
                wpe=nn.Embedding(config.block_size, config.n_embd),
                drop=nn.Dropout(config.dropout),
                h=nn.ModuleList([Block(config) for _ in range(config.n_layer)]),
                ln_f=nn.LayerNorm(config.n_embd),
            )
        )
        self.lm_head = nn.Linear(config.n_embd, config.vocab_size, bias=False)
        self.to(config.torch_dtype)
        self._init_weights(generator(derive_seed(config.seed, "init")))

    @torch.no_grad()
    def _init_weights(self, g: torch.Generator):
        # residual projections get the scaled GPT-2 std
        residual_std = INIT_STD / math.sqrt(2 * self.config.n_layer)
        for name, module in self.named_modules():
            if isinstance(module, (nn.Linear, nn.Embedding)):
                std = residual_std if name.endswith("c_proj") else INIT_STD
                noise = torch.randn(module.weight.shape, generator=g, dtype=torch.float64) * std
                module.weight.copy_(noise)
                if getattr(module, "bias", None) is not None:
                    module.bias.zero_()

    @property
    def attention_mode(self) -> str:
        return self.config.attention_mode

    def set_attention_mode(self, mode: str):
        """Switches every head between A and A − I without touching the parameters."""
        if mode not in ATTENTION_MODES:
            raise InvalidParameterError(f"attention_mode must be one of {ATTENTION_MODES}, got '{mode}'")
        for block in self.transformer.h:
            block.attn.mode = mode
        self.config = _replace_mode(self.config, mode)

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, idx: torch.Tensor, targets: typing.Optional[torch.Tensor] = None):
        if idx.dim() != 2:
            raise ShapeError(f"token batch must have shape (B, T), got {tuple(idx.shape)}")
        B, T = idx.size()
        if T > self.config.block_size:
            raise ShapeError(f"cannot forward sequence of length {T}, block size is {self.config.block_size}")
        if idx.numel() and (int(idx.min()) < 0 or int(idx.max()) >= self.config.vocab_size):
            raise InvalidInputError(
                f"token ids must lie in [0, {self.config.vocab_size}), got range [{int(idx.min())}, {int(idx.max())}]"
            )
        pos = torch.arange(0, T, dtype=torch.long, device=idx.device)
        x = self.transformer.drop(self.transformer.wte(idx) + self.transformer.wpe(pos))
        for block in self.transformer.h:
            x = block(x)
        logits = self.lm_head(self.transformer.ln_f(x))
        loss = None
        if targets is not None:
            loss = cross_entropy(logits, targets)
        return logits, loss

    def configure_optimizers(self, weight_decay: float, learning_rate: float) -> torch.optim.AdamW:
        """AdamW with weight decay on every parameter of rank ≥ 2 (matrices, embeddings) only."""
        params = [p for p in self.parameters() if p.requires_grad]
        decay = [p for p in params if p.dim() >= 2]
        no_decay = [p for p in params if p.dim() < 2]
        groups = [
            {"params": decay, "weight_decay": weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ]
        return torch.optim.AdamW(groups, lr=learning_rate, betas=(0.9, 0.99))


def _replace_mode(config: LmConfig, mode: str) -> LmConfig:
    values = config.to_dict()
    values["attention_mode"] = mode
    return LmConfig(**values)


def lm_forward(model: GPT, tokens: torch.Tensor) -> torch.Tensor:
    logits, _ = model(tokens)
    return logits


def cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean negative log-softmax of the target ids (log-sum-exp stabilised)."""
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"logits {tuple(logits.shape)} do not conform to targets {tuple(targets.shape)}")
    return F.cross_entropy(logits.reshape(-1, logits.size(-1)), targets.reshape(-1))


def lm_backward(model: GPT, batch: typing.Tuple[torch.Tensor, torch.Tensor]) -> typing.Tuple[float, typing.Dict[str, torch.Tensor]]:
    """
    Loss and reverse-mode gradients of every parameter for ``batch`` = (inputs, targets).

    Gradients flow through the attention matrix; nothing is treated as constant.
    """
    x, y = batch
    model.zero_grad(set_to_none=True)
    _, loss = model(x, y)
    loss.backward()
    grads = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }
    model.zero_grad(set_to_none=True)
    return float(loss.detach()), grads


@torch.no_grad()
def _loss(model: GPT, x: torch.Tensor, y: torch.Tensor) -> float:
    return float(model(x, y)[1])


def gradient_check(
    model: GPT,
    batch: typing.Tuple[torch.Tensor, torch.Tensor],
    step: float = GRADIENT_CHECK_STEP,
) -> typing.Dict[str, float]:
    """
    Compares :func:`lm_backward` with central finite differences, one parameter entry at a time.

    Returns:
        Dict[str, float]: Per parameter tensor, ‖g_fd − g‖ / max(‖g_fd‖, ‖g‖, 1e-3).
            The floor keeps tensors whose exact gradient is zero (e.g. key biases) from
            reporting pure rounding noise as a large relative error.
    """
    was_training = model.training
    model.eval()
    x, y = batch
    _, grads = lm_backward(model, batch)
    errors = {}
    for name, p in model.named_parameters():
        fd = torch.zeros_like(p, dtype=torch.float64)
        flat, fd_flat = p.data.view(-1), fd.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            plus = _loss(model, x, y)
            flat[i] = orig - step
            minus = _loss(model, x, y)
            flat[i] = orig
            fd_flat[i] = (plus - minus) / (2.0 * step)
        exact = grads[name].to(torch.float64)
        scale = max(float(fd.norm()), float(exact.norm()), GRADIENT_CHECK_FLOOR)
        errors[name] = float((fd - exact).norm()) / scale
    model.train(was_training)
    return errors


def save_checkpoint(model: GPT, path: str, step: int, extra: typing.Optional[dict] = None):
    """Writes ``{"model", "step", "lm_config", ...extra}`` with ``torch.save``."""
    state = {"model": model.state_dict(), "step": step, "lm_config": model.config.to_dict()}
    state.update(extra or {})
    torch.save(state, path)


def load_checkpoint(path: str) -> typing.Tuple[GPT, dict]:
    """Rebuilds the model saved by :func:`save_checkpoint`; returns it with the raw state."""
    state = torch.load(path, map_location="cpu")
    model = GPT(LmConfig(**state["lm_config"]))
    model.load_state_dict(state["model"])
    return model, state

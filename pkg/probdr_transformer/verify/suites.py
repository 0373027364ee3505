"""
Property and equivalence checks, grouped into the suites ``verify`` runs.

Every check returns ``(residual, tolerance)``; the residual is the worst value seen over
all random instances of the check.
"""

import math
import typing

import torch

from probdr_transformer import block, graph, objective
from probdr_transformer.lm import model as lm_model
from probdr_transformer.linalg import DTYPE, generator, orthogonal_matrix
from probdr_transformer.utils.hashing import derive_seed
from probdr_transformer.verify import instances
from probdr_transformer.verify.checks import CheckResult, SuiteContext, check, failed

CheckFn = typing.Callable[[SuiteContext], typing.Tuple[float, float]]
SUITES: typing.Dict[str, typing.List[typing.Tuple[str, CheckFn]]] = {}


def register(suite: str, name: str):
    def decorator(fn: CheckFn) -> CheckFn:
        SUITES.setdefault(suite, []).append((name, fn))
        return fn

    return decorator


def run_suite(suite: str, ctx: SuiteContext) -> typing.List[CheckResult]:
    results = []
    for name, fn in SUITES[suite]:
        try:
            residual, tolerance = fn(ctx)
            results.append(check(suite, name, residual, tolerance))
        except Exception as e:
            results.append(failed(suite, name, e))
    return results


def _randint(g: torch.Generator, low: int, high: int) -> int:
    """Uniform integer in [low, high]."""
    return low + int(torch.randint(high - low + 1, (1,), generator=g))


def _uniform(g: torch.Generator, low: float, high: float) -> float:
    return low + (high - low) * float(torch.rand(1, generator=g, dtype=DTYPE))


def _scale(m: torch.Tensor) -> float:
    return max(1.0, float(m.abs().max()))


# linalg


@register("linalg", "eig_reconstruction")
def _eig_reconstruction(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("linalg", "eig", i)
        s = instances.random_symmetric(_randint(g, 1, 16), g)
        values, vectors = ctx.impl.sym_eig(s)
        worst = max(worst, float((vectors @ torch.diag(values) @ vectors.T - s).abs().max()) / _scale(s))
    return worst, 1e-10


@register("linalg", "eig_orthonormal")
def _eig_orthonormal(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("linalg", "eig", i)
        n = _randint(g, 1, 16)
        _, vectors = ctx.impl.sym_eig(instances.random_symmetric(n, g))
        worst = max(worst, float((vectors.T @ vectors - torch.eye(n, dtype=DTYPE)).abs().max()))
    return worst, 1e-10


@register("linalg", "eig_ascending")
def _eig_ascending(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("linalg", "eig", i)
        values, _ = ctx.impl.sym_eig(instances.random_symmetric(_randint(g, 1, 16), g))
        if values.numel() > 1:
            worst = max(worst, float((values[:-1] - values[1:]).max()))
    return max(worst, 0.0), 0.0


@register("linalg", "eig_matches_lapack")
def _eig_matches_lapack(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("linalg", "eig", i)
        s = instances.random_symmetric(_randint(g, 1, 16), g)
        values, _ = ctx.impl.sym_eig(s)
        worst = max(worst, float((values - torch.linalg.eigvalsh(s)).abs().max()) / _scale(s))
    return worst, 1e-10


@register("linalg", "log_det_spd")
def _log_det_spd(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("linalg", "logdet", i)
        s = instances.random_spd(_randint(g, 1, 12), g)
        expected = float(torch.logdet(s))
        worst = max(worst, abs(ctx.impl.log_det_psd(s) - expected) / max(1.0, abs(expected)))
    return worst, 1e-9


@register("linalg", "softmax_row_stochastic")
def _softmax_row_stochastic(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("linalg", "softmax", i)
        n = _randint(g, 1, 16)
        logits = 1000.0 * torch.randn(n, n, generator=g, dtype=DTYPE)
        a = ctx.impl.row_softmax(logits)
        if not bool(torch.isfinite(a).all()) or bool((a < 0).any()):
            return math.inf, 1e-12
        worst = max(worst, float((a.sum(dim=1) - 1.0).abs().max()))
    return worst, 1e-12


# graph


def _random_mask(g: torch.Generator, n: int) -> torch.Tensor:
    return (graph.mask_none, graph.mask_self_exclusion, graph.mask_causal)[_randint(g, 0, 2)](n)


@register("graph", "soft_adjacency_row_stochastic")
def _soft_adjacency_row_stochastic(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("graph", "soft", i)
        n, q = _randint(g, 2, 16), _randint(g, 1, 8)
        z = torch.randn(n, q, generator=g, dtype=DTYPE)
        a = ctx.impl.soft_adjacency(z, _uniform(g, 0.5, 50.0), _random_mask(g, n))
        worst = max(worst, float((a.sum(dim=1) - 1.0).abs().max()))
    return worst, 1e-9


@register("graph", "soft_laplacian_rows_zero")
def _soft_laplacian_rows_zero(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("graph", "soft", i)
        n, q = _randint(g, 2, 16), _randint(g, 1, 8)
        z = torch.randn(n, q, generator=g, dtype=DTYPE)
        a = ctx.impl.soft_adjacency(z, _uniform(g, 0.5, 50.0), _random_mask(g, n))
        worst = max(worst, float(graph.soft_laplacian(a).sum(dim=1).abs().max()))
    return worst, 1e-9


@register("graph", "self_mask_zero_diagonal")
def _self_mask_zero_diagonal(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("graph", "mask", i)
        n, q = _randint(g, 2, 16), _randint(g, 1, 8)
        z = torch.randn(n, q, generator=g, dtype=DTYPE)
        a = ctx.impl.soft_adjacency(z, _uniform(g, 0.5, 50.0), graph.mask_self_exclusion(n))
        worst = max(worst, float(torch.diagonal(a).abs().max()))
    return worst, 0.0


@register("graph", "causal_mask_upper_zero")
def _causal_mask_upper_zero(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("graph", "mask", i)
        n, q = _randint(g, 2, 16), _randint(g, 1, 8)
        z = torch.randn(n, q, generator=g, dtype=DTYPE)
        a = ctx.impl.soft_adjacency(z, _uniform(g, 0.5, 50.0), graph.mask_causal(n))
        worst = max(worst, float(torch.triu(a, diagonal=1).abs().max()))
    return worst, 0.0


@register("graph", "knn_laplacian_psd")
def _knn_laplacian_psd(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("graph", "knn", i)
        n = _randint(g, 4, 16)
        y = torch.randn(n, _randint(g, 1, 5), generator=g, dtype=DTYPE)
        ref = ctx.impl.knn_graph(y, _randint(g, 1, n - 1))
        worst = max(
            worst,
            float((ref.adjacency - ref.adjacency.T).abs().max()),
            float(ref.laplacian.sum(dim=1).abs().max()),
            -float(torch.linalg.eigvalsh(ref.laplacian).min()),
        )
    return worst, 1e-9


@register("graph", "knn_min_degree")
def _knn_min_degree(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("graph", "knn", i)
        n = _randint(g, 4, 16)
        y = torch.randn(n, _randint(g, 1, 5), generator=g, dtype=DTYPE)
        k = _randint(g, 1, n - 1)
        ref = ctx.impl.knn_graph(y, k)
        worst = max(worst, k - float(torch.diagonal(ref.degree).min()))
    return worst, 0.0


# objective


def _central_difference(f: typing.Callable[[torch.Tensor], float], x: torch.Tensor, h: float) -> torch.Tensor:
    grad = torch.zeros_like(x)
    for idx in range(x.numel()):
        e = torch.zeros_like(x).view(-1)
        e[idx] = h
        e = e.view_as(x)
        grad.view(-1)[idx] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad


def _relative(a: torch.Tensor, b: torch.Tensor) -> float:
    return float((a - b).norm()) / max(float(b.norm()), 1e-300)


@register("objective", "grad_data_finite_difference")
def _grad_data_fd(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("objective", "grad_data", i)
        n, q = _randint(g, 2, 16), _randint(g, 1, 8)
        beta = _uniform(g, 0.1, 2.0)
        x = torch.randn(n, q, generator=g, dtype=DTYPE)
        lt = instances.random_symmetric_laplacian(n, g)
        fd = _central_difference(lambda v: objective.data_term(v, lt, beta), x, 1e-5)
        worst = max(worst, _relative(ctx.impl.grad_data(x, lt), fd))
    return worst, 1e-6


@register("objective", "grad_reg_finite_difference")
def _grad_reg_fd(ctx):
    worst = 0.0
    for i in range(min(ctx.instances, 5)):
        g = ctx.rng("objective", "grad_reg", i)
        n, q = _randint(g, 2, 8), _randint(g, 1, 4)
        beta = _uniform(g, 0.1, 2.0)
        x = torch.randn(n, q, generator=g, dtype=DTYPE)
        fd = _central_difference(lambda v: ctx.impl.reg_term(v, beta), x, 1e-5)
        worst = max(worst, _relative(ctx.impl.grad_reg_exact(x, beta), fd))
    return worst, 1e-6


@register("objective", "push_through_logdet")
def _push_through_logdet(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("objective", "logdet", i)
        n, q = _randint(g, 2, 16), _randint(g, 1, 8)
        beta = _uniform(g, 0.1, 2.0)
        x = torch.randn(n, q, generator=g, dtype=DTYPE)
        direct = float(torch.linalg.slogdet(x @ x.T + beta * torch.eye(n, dtype=DTYPE))[1])
        worst = max(worst, abs(ctx.impl.reg_term(x, beta) - direct) / max(1.0, abs(direct)))
    return worst, 1e-9


@register("objective", "rotation_invariance")
def _rotation_invariance(ctx):
    worst = 0.0
    g = ctx.rng("objective", "rotation")
    n, q = 12, 4
    params = objective.ObjectiveParams(beta=0.7, kappa=1.0, q=q)
    x = torch.randn(n, q, generator=g, dtype=DTYPE)
    lt = instances.random_symmetric_laplacian(n, g)
    base = ctx.impl.kl_objective(x, lt, params)
    for i in range(10):
        r = orthogonal_matrix(q, derive_seed(ctx.seed, "verify", "rotation", i))
        worst = max(worst, abs(ctx.impl.kl_objective(x @ r, lt, params) - base) / max(1.0, abs(base)))
    return worst, 1e-9


def _chain_laplacian() -> torch.Tensor:
    return graph.knn_graph(instances.line_points(3), 1).laplacian


def _up_to_sign(x: torch.Tensor, target: torch.Tensor) -> float:
    return min(float((x - target).abs().max()), float((x + target).abs().max()))


@register("objective", "chain_constrained_embedding")
def _chain_constrained(ctx):
    x = ctx.impl.constrained_embedding(_chain_laplacian(), 1)
    target = torch.tensor([[1.0], [0.0], [-1.0]], dtype=DTYPE) / math.sqrt(2.0)
    return _up_to_sign(x, target), 1e-9


@register("objective", "chain_trace")
def _chain_trace(ctx):
    l = _chain_laplacian()
    x = ctx.impl.constrained_embedding(l, 1)
    return abs(float(torch.trace(x.T @ l @ x)) - 1.0), 1e-9


@register("objective", "chain_closed_form")
def _chain_closed_form(ctx):
    x = ctx.impl.closed_form_embedding(_chain_laplacian(), 1, 0.5)
    target = torch.tensor([[0.5], [0.0], [-0.5]], dtype=DTYPE)
    return _up_to_sign(x, target), 1e-9


@register("objective", "trace_minimisation")
def _trace_minimisation(ctx):
    n, q = 10, 2
    l = graph.knn_graph(instances.line_points(n), 1).laplacian
    u = ctx.impl.constrained_embedding(l, q)
    optimum = float(torch.trace(u.T @ l @ u))
    g = ctx.rng("objective", "trace_min")
    best = math.inf
    for _ in range(1000):
        v = instances.random_centred_orthonormal(n, q, g)
        best = min(best, float(torch.trace(v.T @ l @ v)))
    return max(0.0, optimum - best), 1e-9


@register("objective", "closed_form_beta_zero")
def _closed_form_beta_zero(ctx):
    l = graph.knn_graph(instances.line_points(10), 1).laplacian
    q = 3
    constrained = ctx.impl.constrained_embedding(l, q)
    closed = ctx.impl.closed_form_embedding(l, q, 0.0)
    values = torch.tensor(objective.embedding_eigenvalues(l, q), dtype=DTYPE)
    return float((closed - constrained / torch.sqrt(values)).abs().max()), 1e-9


# block


def _block_instance(ctx, label: str, i: int):
    g = ctx.rng("block", label, i)
    n, q = _randint(g, 2, 16), _randint(g, 2, 8)
    kappa = _uniform(g, 0.5, 5.0)
    eta = _uniform(g, 0.01, 0.5)
    beta = _uniform(g, 0.1, 2.0)
    return instances.random_projected(n, q, g), kappa, eta, beta


@register("block", "experiment_init_logit_diagonal")
def _experiment_init_logit_diagonal(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("block", "diagonal", i)
        n, q = _randint(g, 2, 16), _randint(g, 2, 8)
        kappa = _uniform(g, 0.5, 50.0)
        w = block.experiment_init(n, q, kappa, 0.4)
        x = block.layer_norm_rows(torch.randn(n, q, generator=g, dtype=DTYPE), 1.0 / math.sqrt(n))
        worst = max(worst, float((torch.diagonal(block.attention_logits(x, w)) - kappa).abs().max()))
    return worst, 1e-6


@register("block", "block_equals_gradient_descent")
def _block_equals_gd(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        x, kappa, eta, beta = _block_instance(ctx, "equivalence", i)
        n, q = x.shape
        mask = graph.mask_none(n)
        w = block.derivation_init(q, kappa, eta, beta)
        lt = graph.soft_laplacian(graph.soft_adjacency(x, kappa, mask))
        expected = block.gd_reference_step(x, lt, eta, beta, q)
        worst = max(worst, float((ctx.impl.block_forward(x, w, mask) - expected).abs().max()))
    return worst, 1e-10


@register("block", "attention_is_data_gradient_step")
def _attention_is_gradient_step(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        x, kappa, eta, beta = _block_instance(ctx, "attention", i)
        n, q = x.shape
        mask = graph.mask_causal(n) if i % 2 else graph.mask_none(n)
        w = block.derivation_init(q, kappa, eta, beta)
        lt = graph.soft_laplacian(graph.soft_adjacency(x, kappa, mask))
        expected = x - eta * objective.grad_data(x, lt)
        worst = max(worst, float((ctx.impl.attention_step(x, w, mask) - expected).abs().max()))
    return worst, 1e-12


@register("block", "diffusion_minus_standard")
def _diffusion_minus_standard(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        x, kappa, eta, beta = _block_instance(ctx, "modes", i)
        n, q = x.shape
        mask = graph.mask_none(n)
        w = block.experiment_init(n, q, kappa, eta)
        delta = ctx.impl.attention_step(x, w.as_diffusion(), mask) - ctx.impl.attention_step(x, w.as_standard(), mask)
        worst = max(worst, float((delta + x @ w.w_v).abs().max()))
    return worst, 1e-12


@register("block", "unrolled_row_norms")
def _unrolled_row_norms(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("block", "unroll", i)
        n, q = _randint(g, 2, 16), _randint(g, 2, 8)
        w = block.experiment_init(n, q, _uniform(g, 1.0, 30.0), 0.4)
        x = block.layer_norm_rows(torch.randn(n, q, generator=g, dtype=DTYPE), w.ln_gain_1)
        bound = math.sqrt(q) / math.sqrt(n)
        for _ in range(3):
            x = ctx.impl.block_forward(x, w, graph.mask_none(n))
            if not bool(torch.isfinite(x).all()):
                return math.inf, 1e-9
            worst = max(worst, float((x.norm(dim=1) - bound).abs().max()))
    return worst, 1e-9


@register("block", "weight_scale_identity")
def _weight_scale_identity(ctx):
    worst = 0.0
    for i in range(ctx.instances):
        g = ctx.rng("block", "scale", i)
        q = _randint(g, 1, 8)
        c = _uniform(g, -2.0, 2.0)
        w = c * torch.eye(q, dtype=DTYPE)
        rotation, positive = block.polar_decompose(w)
        worst = max(
            worst,
            abs(block.weight_scale(w) - abs(c)),
            float((rotation @ positive - w).abs().max()),
            float((rotation.abs() - torch.eye(q, dtype=DTYPE)).abs().max()),
        )
    return worst, 1e-12


# lm


def small_model(mode: str, seed: int) -> lm_model.GPT:
    """1-layer, n_embd=8, vocab 5, context 4 model in float64 with O(0.3) random parameters."""
    cfg = lm_model.LmConfig(
        vocab_size=5, block_size=4, n_layer=1, n_head=2, n_embd=8,
        attention_mode=mode, seed=seed, dtype="float64",
    )
    model = lm_model.GPT(cfg)
    g = generator(derive_seed(seed, "perturb"))
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.3 * torch.randn(p.shape, generator=g, dtype=torch.float64))
    return model


def small_batch(seed: int) -> typing.Tuple[torch.Tensor, torch.Tensor]:
    g = generator(derive_seed(seed, "batch"))
    return torch.randint(5, (2, 4), generator=g), torch.randint(5, (2, 4), generator=g)


def _gradient_check(ctx, mode: str):
    model = small_model(mode, ctx.seed)
    errors = lm_model.gradient_check(model, small_batch(ctx.seed))
    return max(errors.values()), 1e-4


@register("lm", "gradient_finite_difference_standard")
def _lm_gradient_standard(ctx):
    return _gradient_check(ctx, "standard")


@register("lm", "gradient_finite_difference_diffusion")
def _lm_gradient_diffusion(ctx):
    return _gradient_check(ctx, "diffusion")


def _attention_input(model: lm_model.GPT, seed: int) -> torch.Tensor:
    x, _ = small_batch(seed)
    pos = torch.arange(x.shape[1])
    with torch.no_grad():
        h = model.transformer.wte(x) + model.transformer.wpe(pos)
        return model.transformer.h[0].ln_1(h)


@register("lm", "attention_rows")
def _lm_attention_rows(ctx):
    model = small_model("diffusion", ctx.seed)
    attn = model.transformer.h[0].attn
    with torch.no_grad():
        a = attn.attention(_attention_input(model, ctx.seed))
        stochastic = float((a.sum(dim=-1) - 1.0).abs().max())
        zero_rows = float(attn.mixing(a).sum(dim=-1).abs().max())
        first_row = float(attn.mixing(a)[..., 0, :].abs().max())
    return max(stochastic, zero_rows, first_row), 1e-9


@register("lm", "mode_value_identity")
def _lm_mode_value_identity(ctx):
    model = small_model("standard", ctx.seed)
    model.eval()
    attn = model.transformer.h[0].attn
    with torch.no_grad():
        h = _attention_input(model, ctx.seed)
        B, T, C = h.shape
        _, _, v = attn._heads(h)
        standard = attn(h)
        attn.mode = "diffusion"
        diffusion = attn(h)
        expected = v.transpose(1, 2).reshape(B, T, C) @ attn.c_proj.weight.T
    return float((standard - diffusion - expected).abs().max()), 1e-12


@register("lm", "uniform_logits_loss")
def _lm_uniform_logits(ctx):
    model = small_model("diffusion", ctx.seed)
    with torch.no_grad():
        model.lm_head.weight.zero_()
        _, loss = model(*small_batch(ctx.seed))
    return abs(float(loss) - math.log(5)), 1e-12

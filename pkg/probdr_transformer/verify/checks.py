"""Check results, injectable implementations and the per-suite context."""

import math
import typing
from dataclasses import dataclass, field

import torch

from probdr_transformer import block, graph, linalg, objective
from probdr_transformer.linalg import generator
from probdr_transformer.utils.hashing import derive_seed


class CheckResult(typing.NamedTuple):
    suite: str
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        d = self._asdict()
        # inf/nan are not valid JSON
        if not math.isfinite(d["residual"]):
            d["residual"] = repr(d["residual"])
        return d


@dataclass
class Implementations:
    """
    The functions the suites exercise. Tests swap entries for deliberately broken
    versions to make sure the suites catch them.
    """

    sym_eig: typing.Callable = linalg.sym_eig
    log_det_psd: typing.Callable = linalg.log_det_psd
    row_softmax: typing.Callable = linalg.row_softmax
    soft_adjacency: typing.Callable = graph.soft_adjacency
    knn_graph: typing.Callable = graph.knn_graph
    grad_data: typing.Callable = objective.grad_data
    grad_reg_exact: typing.Callable = objective.grad_reg_exact
    reg_term: typing.Callable = objective.reg_term
    kl_objective: typing.Callable = objective.kl_objective
    closed_form_embedding: typing.Callable = objective.closed_form_embedding
    constrained_embedding: typing.Callable = objective.constrained_embedding
    attention_step: typing.Callable = block.attention_step
    block_forward: typing.Callable = block.block_forward


@dataclass
class SuiteContext:
    instances: int = 20
    seed: int = 0
    impl: Implementations = field(default_factory=Implementations)

    def rng(self, *labels) -> torch.Generator:
        return generator(derive_seed(self.seed, "verify", *labels))


def check(suite: str, name: str, residual: float, tolerance: float, detail: str = "") -> CheckResult:
    """A check passes when its worst residual is finite and within tolerance."""
    residual = float(residual)
    passed = math.isfinite(residual) and residual <= tolerance
    return CheckResult(suite, name, passed, residual, tolerance, detail)


def failed(suite: str, name: str, error: Exception) -> CheckResult:
    return CheckResult(suite, name, False, float("inf"), 0.0, f"{type(error).__name__}: {error}")

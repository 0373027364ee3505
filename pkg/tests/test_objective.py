# The MIT License (MIT)
# Copyright © 2024 probdr-transformer developers

# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the “Software”), to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software,
# and to permit persons to whom the Software is furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all copies or substantial portions of
# the Software.

# THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO
# THE WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL
# THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION
# OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
# DEALINGS IN THE SOFTWARE.

import math
import unittest

import torch

from probdr_transformer.exceptions import InsufficientRankError, InvalidParameterError, ShapeError
from probdr_transformer.linalg import DTYPE
from probdr_transformer.objective import (
    EmbeddingState,
    ObjectiveParams,
    closed_form_embedding,
    constrained_embedding,
    data_term,
    embedding_eigenvalues,
    grad_data,
    grad_data_exact,
    grad_reg_exact,
    kl_objective,
    reg_grad_gap,
    reg_term,
)
from probdr_transformer.verify.instances import random_symmetric_laplacian
from probdr_transformer.linalg import generator
from tests.helpers import CLOSE_IN_VALUE, random_matrix, random_orthogonal, random_projected

CHAIN = torch.tensor([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]], dtype=DTYPE)


def central_difference(f, x, h=1e-5):
    grad = torch.zeros_like(x)
    for idx in torch.cartesian_prod(*(torch.arange(s) for s in x.shape)).tolist():
        idx = tuple(idx)
        plus, minus = x.clone(), x.clone()
        plus[idx] += h
        minus[idx] -= h
        grad[idx] = (f(plus) - f(minus)) / (2 * h)
    return grad


def up_to_sign(x, target):
    return min(float((x - target).abs().max()), float((x + target).abs().max()))


class ChainEmbeddingTestCase(unittest.TestCase):
    def test_constrained(self):
        x = constrained_embedding(CHAIN, 1)
        target = torch.tensor([[1.0], [0.0], [-1.0]], dtype=DTYPE) / math.sqrt(2)
        self.assertLess(up_to_sign(x, target), 1e-9)
        self.assertEqual(float(torch.trace(x.T @ CHAIN @ x)), CLOSE_IN_VALUE(1.0, 1e-9))

    def test_closed_form(self):
        x = closed_form_embedding(CHAIN, 1, 0.5)
        target = torch.tensor([[0.5], [0.0], [-0.5]], dtype=DTYPE)
        self.assertLess(up_to_sign(x, target), 1e-9)

    def test_lapack_method_agrees(self):
        x = closed_form_embedding(CHAIN, 2, 0.1, method="lapack")
        y = closed_form_embedding(CHAIN, 2, 0.1)
        for j in range(2):
            self.assertLess(up_to_sign(x[:, j], y[:, j]), 1e-9)

    def test_eigenvalues_skip_constant_mode(self):
        values = embedding_eigenvalues(CHAIN, 2)
        self.assertEqual(values[0], CLOSE_IN_VALUE(1.0, 1e-9))
        self.assertEqual(values[1], CLOSE_IN_VALUE(3.0, 1e-9))

    def test_large_beta_clamps_to_zero(self):
        x = closed_form_embedding(CHAIN, 1, 2.0)
        self.assertEqual(float(x.abs().max()), 0.0)

    def test_rank_and_q_validation(self):
        two_edges = torch.tensor(
            [[1.0, -1.0, 0.0, 0.0], [-1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0], [0.0, 0.0, -1.0, 1.0]],
            dtype=DTYPE,
        )
        with self.assertRaises(InsufficientRankError):
            constrained_embedding(two_edges, 3)
        with self.assertRaises(InvalidParameterError):
            constrained_embedding(CHAIN, 3)


class GradientTestCase(unittest.TestCase):
    def setUp(self):
        self.x = random_projected(7, 3, seed=1)
        self.lt = random_symmetric_laplacian(7, generator(2))

    def test_grad_data_matches_finite_differences(self):
        fd = central_difference(lambda x: data_term(x, self.lt, 0.5), self.x)
        g = grad_data(self.x, self.lt)
        self.assertLess(float((fd - g).norm() / g.norm()), 1e-6)

    def test_exact_data_gradient_for_asymmetric_laplacian(self):
        lt = self.lt.clone()
        lt[0, 1] += 0.3
        lt[0, 0] -= 0.3
        fd = central_difference(lambda x: data_term(x, lt, 0.5), self.x)
        self.assertLess(float((fd - grad_data_exact(self.x, lt)).norm()), 1e-6)
        self.assertTrue(torch.allclose(grad_data_exact(self.x, self.lt), grad_data(self.x, self.lt)))

    def test_data_gradient_step_decreases_data_term(self):
        for seed in range(10):
            x = random_matrix(9, 3, seed=20 + seed)
            lt = random_symmetric_laplacian(9, generator(40 + seed))
            stepped = x - 0.1 * grad_data(x, lt)
            self.assertLess(data_term(stepped, lt, 0.5), data_term(x, lt, 0.5), f"seed {seed}")

    def test_grad_reg_matches_finite_differences(self):
        fd = central_difference(lambda x: reg_term(x, 0.7), self.x)
        g = grad_reg_exact(self.x, 0.7)
        self.assertLess(float((fd - g).norm() / g.norm()), 1e-6)

    def test_reg_term_push_through(self):
        x = random_matrix(6, 2, seed=3)
        direct = float(torch.linalg.slogdet(x @ x.T + 0.4 * torch.eye(6, dtype=DTYPE))[1])
        self.assertEqual(reg_term(x, 0.4), CLOSE_IN_VALUE(direct, 1e-9))

    def test_reg_grad_gap_is_reported(self):
        gap = reg_grad_gap(self.x, 1.0)
        self.assertEqual(set(gap), {"constant_q_beta", "constant_push_through"})
        self.assertTrue(all(v >= 0 for v in gap.values()))

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            grad_data(self.x, torch.eye(6, dtype=DTYPE))


class ObjectiveTestCase(unittest.TestCase):
    def test_rotation_invariance(self):
        x = random_projected(9, 4, seed=6)
        lt = random_symmetric_laplacian(9, generator(7))
        params = ObjectiveParams(beta=0.5, kappa=2.0, q=4)
        base = kl_objective(x, lt, params)
        for seed in range(10):
            rotated = kl_objective(x @ random_orthogonal(4, seed=seed), lt, params)
            self.assertEqual(rotated, CLOSE_IN_VALUE(base, 1e-9))

    def test_params_validation(self):
        with self.assertRaises(InvalidParameterError):
            ObjectiveParams(beta=0.0, kappa=1.0, q=2)
        with self.assertRaises(InvalidParameterError):
            ObjectiveParams(beta=1.0, kappa=1.0, q=0)

    def test_embedding_state(self):
        self.assertTrue(EmbeddingState.of(random_projected(4, 3, seed=0)).projected)
        self.assertFalse(EmbeddingState.of(random_matrix(4, 3, seed=0)).projected)


if __name__ == "__main__":
    unittest.main()

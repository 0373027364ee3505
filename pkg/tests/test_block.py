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

import dataclasses
import math
import unittest

import torch

from probdr_transformer import block
from probdr_transformer.exceptions import DegenerateRowError, InvalidParameterError, ShapeError
from probdr_transformer.graph import mask_causal, mask_none, soft_adjacency, soft_laplacian
from probdr_transformer.linalg import DTYPE
from probdr_transformer.objective import data_term, grad_data
from tests.helpers import CLOSE_IN_VALUE, random_matrix, random_orthogonal, random_projected


class InitTestCase(unittest.TestCase):
    def test_experiment_init_logit_diagonal_is_kappa(self):
        for n, q, kappa in ((10, 4, 30.0), (3, 2, 0.5), (50, 8, 7.0)):
            w = block.experiment_init(n, q, kappa, 0.4)
            x = block.layer_norm_rows(random_matrix(n, q, seed=n), 1.0 / math.sqrt(n))
            diagonal = torch.diagonal(block.attention_logits(x, w))
            self.assertLess(float((diagonal - kappa).abs().max()), 1e-6)

    def test_experiment_init_weights(self):
        w = block.experiment_init(100, 4, 30.0, 0.4)
        self.assertEqual(w.mode, "diffusion")
        self.assertEqual(w.logit_scale, "scaled_dot")
        self.assertEqual(w.w_v[0, 0].item(), CLOSE_IN_VALUE(0.8, 1e-15))
        self.assertEqual(w.w_lin[0, 0].item(), CLOSE_IN_VALUE(-0.8, 1e-15))
        self.assertEqual(w.ln_gain_1[0].item(), CLOSE_IN_VALUE(0.1, 1e-15))

    def test_eta_range(self):
        for eta in (0.0, 0.6):
            with self.assertRaises(InvalidParameterError):
                block.experiment_init(4, 2, 1.0, eta)
            with self.assertRaises(InvalidParameterError):
                block.derivation_init(2, 1.0, eta, 1.0)

    def test_weight_shapes_are_validated(self):
        w = block.derivation_init(3, 1.0, 0.1, 1.0)
        with self.assertRaises(ShapeError):
            dataclasses.replace(w, w_v=torch.eye(2, dtype=DTYPE))
        with self.assertRaises(InvalidParameterError):
            dataclasses.replace(w, mode="other")

    def test_weights_record_kappa_and_beta(self):
        w = block.derivation_init(3, 2.5, 0.1, 0.75)
        self.assertEqual((w.kappa, w.beta), (2.5, 0.75))
        w = block.paper_init(10, 3, 30.0, 0.4)
        self.assertEqual((w.kappa, w.beta), (30.0, 1.0))
        self.assertIs(block.paper_init, block.experiment_init)

    def test_mode_toggles(self):
        w = block.derivation_init(3, 1.0, 0.1, 1.0)
        self.assertEqual(w.as_standard().mode, "standard")
        self.assertEqual(w.as_standard().as_diffusion().mode, "diffusion")


class BlockAsGradientDescentTestCase(unittest.TestCase):
    def test_block_equals_projected_gradient_steps(self):
        for seed, (n, q, kappa, eta, beta) in enumerate(
            ((6, 3, 2.0, 0.1, 1.0), (12, 5, 4.5, 0.45, 0.3), (3, 2, 0.7, 0.02, 1.7))
        ):
            x = random_projected(n, q, seed=seed)
            mask = mask_none(n)
            w = block.derivation_init(q, kappa, eta, beta)
            lt = soft_laplacian(soft_adjacency(x, kappa, mask))
            expected = block.gd_reference_step(x, lt, eta, beta, q)
            self.assertLess(float((block.block_forward(x, w, mask) - expected).abs().max()), 1e-10)

    def test_attention_is_a_data_gradient_step(self):
        x = random_projected(8, 3, seed=4)
        mask = mask_causal(8)
        w = block.derivation_init(3, 3.0, 0.25, 1.0)
        lt = soft_laplacian(soft_adjacency(x, 3.0, mask))
        expected = x - 0.25 * grad_data(x, lt)
        self.assertLess(float((block.attention_step(x, w, mask) - expected).abs().max()), 1e-12)

    def test_attention_step_decreases_data_term(self):
        for seed in range(20):
            eta = (0.1, 0.25, 0.4)[seed % 3]
            x = random_projected(10, 3, seed=50 + seed)
            mask = mask_none(10)
            w = block.derivation_init(3, 2.0, eta, 1.0)
            lt = soft_laplacian(soft_adjacency(x, 2.0, mask))
            stepped = block.attention_step(x, w, mask)
            self.assertLess(data_term(stepped, lt, 1.0), data_term(x, lt, 1.0), f"seed {seed}")

    def test_diffusion_minus_standard(self):
        x = random_projected(5, 4, seed=2)
        w = block.experiment_init(5, 4, 10.0, 0.3)
        mask = mask_none(5)
        delta = block.attention_step(x, w.as_diffusion(), mask) - block.attention_step(x, w.as_standard(), mask)
        self.assertLess(float((delta + x @ w.w_v).abs().max()), 1e-12)

    def test_output_rows_are_normalised(self):
        n, q = 9, 4
        w = block.experiment_init(n, q, 30.0, 0.4)
        x = block.layer_norm_rows(random_matrix(n, q, seed=1), w.ln_gain_1)
        out = block.block_forward(x, w, mask_none(n))
        self.assertLess(float(out.sum(dim=1).abs().max()), 1e-12)
        self.assertLess(float((out.norm(dim=1) - math.sqrt(q / n)).abs().max()), 1e-12)


class NormalisationTestCase(unittest.TestCase):
    def test_project_rows(self):
        x = block.project_rows(random_matrix(4, 5, seed=3))
        self.assertLess(float(x.sum(dim=1).abs().max()), 1e-12)
        self.assertLess(float((x.norm(dim=1) - 1).abs().max()), 1e-12)

    def test_project_rows_is_idempotent(self):
        x = block.project_rows(random_matrix(6, 4, seed=7))
        self.assertLess(float((block.project_rows(x) - x).abs().max()), 1e-12)

    def test_layer_norm_with_unit_row_gain_projects(self):
        y = random_matrix(6, 4, seed=8)
        projected = block.project_rows(y)
        self.assertLess(float((block.layer_norm_rows(y, 1.0 / math.sqrt(4)) - projected).abs().max()), 1e-12)

    def test_degenerate_row_is_named(self):
        x = random_matrix(4, 3, seed=0)
        x[2] = 1.5
        with self.assertRaises(DegenerateRowError) as ctx:
            block.project_rows(x)
        self.assertEqual(ctx.exception.row, 2)
        with self.assertRaises(DegenerateRowError):
            block.layer_norm_rows(x, 1.0)

    def test_layer_norm_gain_shape(self):
        with self.assertRaises(ShapeError):
            block.layer_norm_rows(random_matrix(3, 4), torch.ones(3, dtype=DTYPE))

    def test_ffn_step(self):
        x = random_matrix(3, 2, seed=5)
        self.assertTrue(torch.allclose(block.ffn_step(x, -0.5 * torch.eye(2, dtype=DTYPE)), 0.5 * x))


class WeightInterpretationTestCase(unittest.TestCase):
    def test_scaled_identity(self):
        w = -1.5 * torch.eye(3, dtype=DTYPE)
        self.assertEqual(block.weight_scale(w), CLOSE_IN_VALUE(1.5, 1e-12))
        rotation, positive = block.polar_decompose(w)
        self.assertTrue(torch.allclose(rotation.abs(), torch.eye(3, dtype=DTYPE)))
        self.assertTrue(torch.allclose(rotation @ positive, w))

    def test_general_polar_decomposition(self):
        w = random_orthogonal(4, seed=1) @ torch.diag(torch.tensor([0.5, 1.0, 2.0, 3.0], dtype=DTYPE))
        rotation, positive = block.polar_decompose(w)
        self.assertTrue(torch.allclose(rotation @ positive, w, atol=1e-12))
        self.assertTrue(torch.allclose(rotation.T @ rotation, torch.eye(4, dtype=DTYPE), atol=1e-12))
        self.assertTrue(torch.allclose(positive, positive.T, atol=1e-12))
        self.assertEqual(block.weight_scale(w), CLOSE_IN_VALUE(3.0 ** 0.25, 1e-12))


if __name__ == "__main__":
    unittest.main()

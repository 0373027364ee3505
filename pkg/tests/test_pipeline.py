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

import gzip
import math
import os
import statistics
import struct
import tempfile
import unittest

import torch

from probdr_transformer.exceptions import (
    ConsistencyError,
    FormatError,
    InvalidInputError,
    InvalidParameterError,
    ShapeError,
)
from probdr_transformer.graph import knn_graph, pairwise_distances
from probdr_transformer.linalg import DTYPE, generator
from probdr_transformer.pipeline.data import IDX_IMAGES_MAGIC, LabeledDataset, load_idx, write_idx
from probdr_transformer.pipeline.unroll import (
    SCATTER_HEADER,
    DimredParams,
    UnrollTrace,
    cluster_ratio,
    emit_scatter,
    pca_projection,
    random_projection,
    run_dimred,
    step_diagnostics,
    unroll,
)
from probdr_transformer.block import derivation_init
from probdr_transformer.graph import mask_none
from probdr_transformer.synthetic import chain_dataset, make_blobs
from probdr_transformer.utils.io import read_csv
from tests.helpers import CLOSE_IN_VALUE, random_matrix, random_projected


def idx_fixture(directory, count=6, rows=3, cols=2):
    images = torch.arange(count * rows * cols, dtype=torch.int64).reshape(count, rows, cols) % 256
    labels = torch.arange(count) % 3
    paths = os.path.join(directory, "images.idx"), os.path.join(directory, "labels.idx")
    write_idx(paths[0], paths[1], images, labels)
    return paths, images, labels


class IdxTestCase(unittest.TestCase):
    def test_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            (images_path, labels_path), images, labels = idx_fixture(tmp)
            dataset = load_idx(images_path, labels_path)
            self.assertEqual((dataset.n, dataset.d), (6, 6))
            self.assertTrue(torch.equal(dataset.labels, labels))
            self.assertTrue(torch.allclose(dataset.features, images.reshape(6, 6).to(DTYPE) / 255.0))
            self.assertEqual(load_idx(images_path, labels_path, limit=4).n, 4)

    def test_gzip(self):
        with tempfile.TemporaryDirectory() as tmp:
            (images_path, labels_path), _, _ = idx_fixture(tmp)
            for path in (images_path, labels_path):
                with open(path, "rb") as f, gzip.open(path + ".gz", "wb") as g:
                    g.write(f.read())
            plain = load_idx(images_path, labels_path)
            packed = load_idx(images_path + ".gz", labels_path + ".gz")
            self.assertTrue(torch.equal(plain.features, packed.features))

    def test_bad_magic_reports_observed_value(self):
        with tempfile.TemporaryDirectory() as tmp:
            (images_path, labels_path), _, _ = idx_fixture(tmp)
            # swapped files: each has the other's magic
            with self.assertRaises(FormatError) as ctx:
                load_idx(labels_path, images_path)
            self.assertEqual(ctx.exception.observed, 0x801)

    def test_truncated_payload(self):
        with tempfile.TemporaryDirectory() as tmp:
            (images_path, labels_path), _, _ = idx_fixture(tmp)
            with open(images_path, "r+b") as f:
                f.truncate(16 + 10)
            with self.assertRaises(FormatError):
                load_idx(images_path, labels_path)

    def test_truncated_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "short.idx")
            with open(path, "wb") as f:
                f.write(struct.pack(">II", IDX_IMAGES_MAGIC, 1))
            (_, labels_path), _, _ = idx_fixture(tmp)
            with self.assertRaises(FormatError):
                load_idx(path, labels_path)

    def test_count_mismatch(self):
        with tempfile.TemporaryDirectory() as tmp:
            (images_path, _), _, _ = idx_fixture(tmp, count=6)
            other = os.path.join(tmp, "other")
            os.makedirs(other)
            (_, labels_path), _, _ = idx_fixture(other, count=5)
            with self.assertRaises(ConsistencyError):
                load_idx(images_path, labels_path)

    def test_missing_file(self):
        with self.assertRaises(OSError):
            load_idx("/nonexistent/images", "/nonexistent/labels")


class DatasetTestCase(unittest.TestCase):
    def test_blobs_are_reproducible(self):
        a, b = make_blobs(30, 5, 3, seed=4), make_blobs(30, 5, 3, seed=4)
        self.assertTrue(torch.equal(a.features, b.features))
        self.assertEqual(a.labels.tolist()[:4], [0, 1, 2, 0])
        self.assertEqual(a.n_classes, 3)

    def test_blobs_validation(self):
        with self.assertRaises(InvalidParameterError):
            make_blobs(10, 2, 3)

    def test_label_shape_is_checked(self):
        with self.assertRaises(InvalidInputError):
            LabeledDataset(torch.zeros(3, 2), torch.zeros(2), "bad")

    def test_chain(self):
        self.assertEqual(chain_dataset().features.flatten().tolist(), [0.0, 1.0, 2.0])


class ProjectionTestCase(unittest.TestCase):
    def test_random_projection_preserves_distances(self):
        d, q = 200, 100
        y = random_matrix(20, d, seed=1)
        x = random_projection(y, q, seed=2) * math.sqrt(d / q)
        upper = torch.triu(torch.ones(20, 20, dtype=torch.bool), diagonal=1)
        ratio = pairwise_distances(x)[upper] / pairwise_distances(y)[upper]
        self.assertGreater(float(ratio.min()), 0.5)
        self.assertLess(float(ratio.max()), 1.5)

    def test_random_projection_is_seeded(self):
        y = random_matrix(5, 4)
        self.assertTrue(torch.equal(random_projection(y, 3, 7), random_projection(y, 3, 7)))

    def test_pca_scores_are_uncorrelated(self):
        x = pca_projection(random_matrix(30, 6, seed=3), 3)
        cov = x.T @ x
        off = cov - torch.diag(torch.diagonal(cov))
        self.assertLess(float(off.abs().max()), 1e-9)
        self.assertTrue(bool((torch.diagonal(cov)[:-1] >= torch.diagonal(cov)[1:]).all()))
        with self.assertRaises(InvalidParameterError):
            pca_projection(random_matrix(5, 3), 4)


class ClusterRatioTestCase(unittest.TestCase):
    def test_oracle(self):
        x = torch.tensor([[0.0], [1.0], [10.0], [11.0]], dtype=DTYPE)
        self.assertEqual(cluster_ratio(x, [0, 0, 1, 1]), CLOSE_IN_VALUE(0.1, 1e-15))

    def test_shuffled_labels_give_ratio_near_one(self):
        x = random_matrix(300, 5, seed=11)
        labels = torch.randperm(300, generator=generator(12)) % 3
        self.assertEqual(cluster_ratio(x, labels), CLOSE_IN_VALUE(1.0, 0.1))

    def test_degenerate_labelings(self):
        x = random_matrix(4, 2)
        with self.assertRaises(InvalidInputError):
            cluster_ratio(x, [0, 0, 0, 0])
        with self.assertRaises(InvalidInputError):
            cluster_ratio(x, [0, 1, 2, 3])
        with self.assertRaises(ShapeError):
            cluster_ratio(x, [0, 1])


class UnrollTestCase(unittest.TestCase):
    def test_trace_length_and_zero_blocks(self):
        x0 = random_projected(6, 3, seed=1)
        w = derivation_init(3, 2.0, 0.2, 1.0)
        self.assertEqual(unroll(x0, w, mask_none(6), 4).n_blocks, 4)
        trace = unroll(x0, w, mask_none(6), 0)
        self.assertEqual(len(trace.states), 1)
        self.assertTrue(torch.equal(trace.final, x0))

    def test_trace_config_is_complete_without_snapshot(self):
        w = derivation_init(3, 2.0, 0.2, 0.5)
        trace = unroll(random_projected(6, 3, seed=1), w, mask_none(6), 2, seed=7)
        self.assertEqual(
            trace.config,
            {"kappa": 2.0, "eta": 0.2, "beta": 0.5, "q": 3, "n_blocks": 2, "seed": 7, "mode": "diffusion"},
        )
        self.assertIsNone(unroll(random_projected(6, 3, seed=1), w, mask_none(6), 1).config["seed"])

    def test_run_records_seed(self):
        trace, _, _ = run_dimred(make_blobs(12, 6, 3, seed=5), DimredParams(q=4, n_blocks=1, kappa=7.0, seed=5))
        self.assertEqual((trace.config["kappa"], trace.config["beta"], trace.config["seed"]), (7.0, 1.0, 5))

    def test_derivation_layer_norm_keeps_unit_rows(self):
        dataset = make_blobs(40, 10, 2, seed=1)
        params = DimredParams(q=8, kappa=5.0, n_blocks=3, layer_norm="derivation", seed=1)
        trace, _, _ = run_dimred(dataset, params)
        for x in trace.states:
            self.assertLess(float((x.norm(dim=1) - 1).abs().max()), 1e-12)

    def test_params_validation(self):
        with self.assertRaises(InvalidParameterError):
            DimredParams(mask="diagonal")
        with self.assertRaises(InvalidParameterError):
            DimredParams(n_blocks=-1)

    def test_blobs_cluster_more_tightly(self):
        ratios = []
        for seed in range(5):
            dataset = make_blobs(300, 50, 3, seed=seed)
            trace, _, _ = run_dimred(dataset, DimredParams(seed=seed))
            ratios.append([cluster_ratio(x, dataset.labels) for x in trace.states])
        improved = sum(r[-1] < r[0] for r in ratios)
        self.assertGreaterEqual(improved, 4)

        medians = [statistics.median(r[step] for r in ratios) for step in range(9)]
        self.assertLess(medians[8], medians[2])
        for step in range(2, 8):
            self.assertLessEqual(medians[step + 1], medians[step] + 1e-12, f"step {step + 1}")

    def test_beta_in_mask_offsets_the_diagonal(self):
        dataset = make_blobs(20, 6, 2, seed=4)
        _, _, plain = run_dimred(dataset, DimredParams(q=4, n_blocks=1, beta=2.5, seed=4))
        _, _, offset = run_dimred(dataset, DimredParams(q=4, n_blocks=1, beta=2.5, beta_in_mask=True, seed=4))
        self.assertTrue(torch.equal(offset - plain, 2.5 * torch.eye(20, dtype=DTYPE)))

    def test_step_diagnostics(self):
        dataset = make_blobs(30, 8, 3, seed=2)
        trace, weights, mask = run_dimred(dataset, DimredParams(q=8, n_blocks=2, seed=2))
        steps = step_diagnostics(trace, dataset.labels, weights, mask, knn_graph(dataset.features, 5))
        self.assertEqual([s["step"] for s in steps], [0, 1, 2])
        for s in steps:
            self.assertTrue(0.0 <= s["adjacency_match"] <= 1.0)
        self.assertNotIn("adjacency_match", step_diagnostics(trace, dataset.labels)[0])


class ScatterTestCase(unittest.TestCase):
    def setUp(self):
        self.dataset = make_blobs(12, 6, 3, seed=3)
        self.trace, _, _ = run_dimred(self.dataset, DimredParams(q=4, n_blocks=3, seed=3))

    def test_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "scatter.csv")
            self.assertEqual(emit_scatter(self.trace, self.dataset.labels, path), 24)
            header, rows = read_csv(path)
            self.assertEqual(tuple(header), SCATTER_HEADER)
            self.assertEqual({int(r[0]) for r in rows}, {0, 3})
            for step, point, dim0, dim1, label in rows:
                state = self.trace.states[int(step)]
                self.assertEqual(float(dim0), state[int(point), 0].item())
                self.assertEqual(float(dim1), state[int(point), 1].item())
                self.assertEqual(int(label), int(self.dataset.labels[int(point)]))

    def test_all_steps(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "scatter.csv")
            self.assertEqual(emit_scatter(self.trace, self.dataset.labels, path, all_steps=True), 48)

    def test_needs_two_dimensions(self):
        trace = UnrollTrace([random_matrix(6, 1)])
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ShapeError):
                emit_scatter(trace, torch.zeros(6, dtype=torch.long), os.path.join(tmp, "s.csv"))


if __name__ == "__main__":
    unittest.main()

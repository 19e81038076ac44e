import math

import numpy as np
import torch
from django.test import SimpleTestCase

from evaluation.features import RandomProjectionExtractor
from evaluation.metrics import (
    GaussianFit,
    frechet_distance,
    perceptual_patch_distance,
    recall_at_k,
    recall_curve,
    report_similarity,
)
from exceptions import ShapeError


class GaussianFitTests(SimpleTestCase):
    def test_enough_samples_give_the_sample_covariance(self):
        values = np.random.default_rng(0).normal(size=(50, 3))
        fit = GaussianFit.fit(values)
        np.testing.assert_allclose(fit.covariance, np.cov(values, rowvar=False))
        np.testing.assert_allclose(fit.mean, values.mean(axis=0))

    def test_too_few_samples_are_regularized(self):
        values = np.random.default_rng(1).normal(size=(3, 5))
        fit = GaussianFit.fit(values, eps=1e-6)
        np.testing.assert_allclose(fit.covariance, np.cov(values, rowvar=False) + 1e-6 * np.eye(5))
        self.assertTrue((np.linalg.eigvalsh(fit.covariance) > 0).all())

    def test_single_sample(self):
        fit = GaussianFit.fit(np.ones((1, 2)))
        np.testing.assert_allclose(fit.covariance, 1e-6 * np.eye(2))

    def test_accepts_tensors(self):
        fit = GaussianFit.fit(torch.zeros(4, 2))
        self.assertEqual(fit.dim, 2)


class FrechetDistanceTests(SimpleTestCase):
    def test_one_dimensional_shift(self):
        distance = frechet_distance(GaussianFit.of([0.0], [[1.0]]), GaussianFit.of([1.0], [[1.0]]))
        self.assertAlmostEqual(distance, 1.0, delta=1e-6)

    def test_commuting_diagonals(self):
        a = GaussianFit.of([0.0, 0.0], np.diag([1.0, 4.0]))
        b = GaussianFit.of([0.0, 0.0], np.diag([4.0, 1.0]))
        self.assertAlmostEqual(frechet_distance(a, b), 2.0, delta=1e-6)

    def test_self_distance(self):
        fit = GaussianFit.fit(np.random.default_rng(2).normal(size=(200, 8)))
        self.assertLessEqual(frechet_distance(fit, fit), 1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = GaussianFit.fit(rng.normal(size=(100, 4)))
        b = GaussianFit.fit(rng.normal(1.0, 2.0, size=(100, 4)))
        self.assertAlmostEqual(frechet_distance(a, b), frechet_distance(b, a), delta=1e-6)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(4)
        x, y = rng.normal(size=(150, 4)), rng.normal(0.5, 1.5, size=(150, 4))
        rotation, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        plain = frechet_distance(GaussianFit.fit(x), GaussianFit.fit(y))
        rotated = frechet_distance(GaussianFit.fit(x @ rotation), GaussianFit.fit(y @ rotation))
        self.assertAlmostEqual(plain, rotated, delta=1e-4)

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeError):
            frechet_distance(GaussianFit.of([0.0], [[1.0]]), GaussianFit.of([0.0, 0.0], np.eye(2)))


def naive_perceptual(x: torch.Tensor, y: torch.Tensor, extractor) -> float:
    per_frame = []
    for n in range(x.shape[0]):
        for t in range(x.shape[2]):
            total = 0.0
            maps_x = extractor.layers(x[n : n + 1, :, t])
            maps_y = extractor.layers(y[n : n + 1, :, t])
            for map_x, map_y in zip(maps_x, maps_y):
                _, channels, height, width = map_x.shape
                layer = 0.0
                for i in range(height):
                    for j in range(width):
                        vx = [float(map_x[0, c, i, j]) for c in range(channels)]
                        vy = [float(map_y[0, c, i, j]) for c in range(channels)]
                        nx = math.sqrt(sum(v * v for v in vx)) + 1e-10
                        ny = math.sqrt(sum(v * v for v in vy)) + 1e-10
                        layer += sum((a / nx - b / ny) ** 2 for a, b in zip(vx, vy))
                total += layer / (height * width)
            per_frame.append(total)
    return sum(per_frame) / len(per_frame)


class PerceptualPatchDistanceTests(SimpleTestCase):
    def setUp(self):
        self.extractor = RandomProjectionExtractor(seed=0)
        generator = torch.Generator().manual_seed(0)
        self.x = torch.rand(1, 1, 2, 8, 8, generator=generator)
        self.y = torch.rand(1, 1, 2, 8, 8, generator=generator)

    def test_identical_clips(self):
        self.assertEqual(perceptual_patch_distance(self.x, self.x.clone(), self.extractor), 0.0)

    def test_symmetry(self):
        forward = perceptual_patch_distance(self.x, self.y, self.extractor)
        backward = perceptual_patch_distance(self.y, self.x, self.extractor)
        self.assertAlmostEqual(forward, backward, delta=1e-6)
        self.assertGreater(forward, 0.0)

    def test_matches_scalar_loops(self):
        expected = naive_perceptual(self.x, self.y, self.extractor)
        self.assertAlmostEqual(perceptual_patch_distance(self.x, self.y, self.extractor), expected, delta=1e-5)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            perceptual_patch_distance(self.x, self.y[:, :, :1], self.extractor)


class ReportSimilarityTests(SimpleTestCase):
    def setUp(self):
        self.embeddings = torch.tensor([[1.0, 0.0], [0.0, 1.0], [3.0, 4.0]])

    def test_identical_reports(self):
        score = report_similarity([0, 2, 1], [0, 2, 1], self.embeddings)
        self.assertAlmostEqual(score.precision, 1.0)
        self.assertAlmostEqual(score.recall, 1.0)
        self.assertAlmostEqual(score.f1, 1.0)

    def test_orthogonal_tokens(self):
        self.assertEqual(report_similarity([0], [1], self.embeddings).f1, 0.0)

    def test_hand_computed_matching(self):
        # Candidate token 1 is (0, 1); references are (0.6, 0.8) and (1, 0).
        score = report_similarity([1], [2, 0], self.embeddings)
        self.assertAlmostEqual(score.recall, 0.4)
        self.assertAlmostEqual(score.precision, 0.8)
        self.assertAlmostEqual(score.f1, 2 * 0.8 * 0.4 / 1.2)

    def test_empty_sequences(self):
        with self.assertRaises(ShapeError):
            report_similarity([], [0], self.embeddings)


class RecallAtKTests(SimpleTestCase):
    def test_self_match(self):
        features = np.random.default_rng(0).normal(size=(20, 6))
        for k in (1, 5):
            self.assertEqual(recall_at_k(features, features, k), 1.0)

    def test_unrelated_pairs_sit_at_chance(self):
        recalls = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            recalls.append(recall_at_k(rng.normal(size=(100, 16)), rng.normal(size=(100, 16)), 5))
        sigma = math.sqrt(0.05 * 0.95 / 100 / 20)
        self.assertLess(abs(np.mean(recalls) - 0.05), 3 * sigma)

    def test_ties_break_towards_lower_indices(self):
        features = np.ones((10, 3))
        self.assertEqual(recall_at_k(features, features, 4), 0.4)

    def test_monotone_in_k_and_complete_at_n(self):
        rng = np.random.default_rng(5)
        gen, gt = rng.normal(size=(30, 4)), rng.normal(size=(30, 4))
        recalls = [recall_at_k(gen, gt, k) for k in range(1, 31)]
        self.assertEqual(recalls, sorted(recalls))
        self.assertEqual(recalls[-1], 1.0)

    def test_k_beyond_corpus(self):
        features = np.eye(3)
        with self.assertRaises(ShapeError):
            recall_at_k(features, features, 4)

    def test_curve_averages_the_configured_ks(self):
        rng = np.random.default_rng(6)
        gen, gt = rng.normal(size=(60, 4)), rng.normal(size=(60, 4))
        recalls, average = recall_curve(gen, gt, (5, 10, 50))
        self.assertEqual(set(recalls), {5, 10, 50})
        self.assertAlmostEqual(average, sum(recalls.values()) / 3)

import math

import torch
from django.test import SimpleTestCase

from exceptions import ShapeError
from wavelet.haar import (
    DETAIL_BANDS,
    WaveletPyramid,
    causal_lowpass,
    causal_upsample,
    dwt3d,
    haar_analysis,
    idwt3d,
    lowpass_level,
    synthesis_level,
)


class HaarTests(SimpleTestCase):
    def setUp(self):
        self.generator = torch.Generator().manual_seed(0)

    def test_pair_coefficients(self):
        low, high = haar_analysis(torch.tensor([3.0, 1.0]), -1)
        self.assertAlmostEqual(low.item(), 2 * math.sqrt(2), places=6)
        self.assertAlmostEqual(high.item(), math.sqrt(2), places=6)

    def test_constant_video(self):
        pyramid = dwt3d(torch.full((1, 8, 8, 8), 0.3), levels=2)
        for level in pyramid.subbands:
            for name in DETAIL_BANDS:
                self.assertTrue(torch.allclose(level[name], torch.zeros_like(level[name]), atol=1e-7))
        expected = 0.3 * math.sqrt(2) ** 6
        self.assertTrue(torch.allclose(pyramid.top, torch.full_like(pyramid.top, expected), atol=1e-5))

    def test_perfect_reconstruction_and_parseval(self):
        for _ in range(100):
            x = torch.randn(1, 8, 8, 8, generator=self.generator)
            pyramid = dwt3d(x, levels=2)
            self.assertLessEqual((idwt3d(pyramid) - x).abs().max().item(), 1e-5)
            energy = x.double().pow(2).sum().item()
            self.assertLessEqual(abs(pyramid.energy() - energy) / energy, 1e-4)

    def test_critical_sampling(self):
        x = torch.randn(2, 8, 16, 8, generator=self.generator)
        self.assertEqual(dwt3d(x, levels=3).coefficient_count(), x.numel())

    def test_linearity(self):
        x = torch.randn(1, 4, 4, 4, generator=self.generator)
        y = torch.randn(1, 4, 4, 4, generator=self.generator)
        combined = dwt3d(2.0 * x - 0.5 * y, levels=1)
        separate_x, separate_y = dwt3d(x, levels=1), dwt3d(y, levels=1)
        for name in combined.subbands[0]:
            expected = 2.0 * separate_x.subbands[0][name] - 0.5 * separate_y.subbands[0][name]
            self.assertTrue(torch.allclose(combined.subbands[0][name], expected, atol=1e-5))

    def test_zero_pyramid_synthesizes_zero(self):
        pyramid = dwt3d(torch.randn(1, 4, 4, 4, generator=self.generator), levels=2)
        self.assertTrue(torch.equal(idwt3d(pyramid.map(torch.zeros_like)), torch.zeros(1, 4, 4, 4)))

    def test_unit_top_coefficient_footprint(self):
        pyramid = dwt3d(torch.zeros(1, 8, 8, 8), levels=2)
        pyramid.subbands[-1]["LLL"][0, 0, 0, 0] = 1.0
        video = idwt3d(pyramid)
        block = video[0, :4, :4, :4]
        self.assertTrue(torch.allclose(block, torch.full_like(block, (1 / math.sqrt(2)) ** 6), atol=1e-7))
        self.assertEqual(video.abs().gt(0).sum().item(), 64)

    def test_non_divisible_extent_is_rejected(self):
        with self.assertRaisesMessage(ShapeError, "divisible by 2^2"):
            dwt3d(torch.zeros(1, 6, 8, 8), levels=2)

    def test_inconsistent_bands_are_rejected(self):
        pyramid = dwt3d(torch.zeros(1, 4, 4, 4), levels=1)
        pyramid.subbands[0]["HHH"] = torch.zeros(1, 1, 1, 1)
        with self.assertRaises(ShapeError):
            idwt3d(pyramid)

    def test_level_count_mismatch_is_rejected(self):
        with self.assertRaises(ShapeError):
            idwt3d(WaveletPyramid(2, dwt3d(torch.zeros(1, 4, 4, 4), levels=1).subbands))


class CausalLowpassTests(SimpleTestCase):
    def test_spatial_only_lowpass_shape(self):
        x = torch.randn(1, 8, 8, 8, generator=torch.Generator().manual_seed(1))
        spatial = causal_lowpass(x, spatial_levels=2, temporal_levels=0)
        self.assertEqual(spatial.shape, (1, 8, 2, 2))

    def test_frame_count_rule(self):
        for frames, expected in ((1, 1), (2, 1), (9, 5), (10, 5), (21, 11)):
            out = causal_lowpass(torch.zeros(1, frames, 4, 4), 1, 1)
            self.assertEqual(out.shape, (1, expected, 2, 2))

    def test_is_causal(self):
        x = torch.randn(1, 9, 4, 4, generator=torch.Generator().manual_seed(2))
        base = causal_lowpass(x, 1, 1)
        for tau in range(8):
            perturbed = x.clone()
            perturbed[:, tau + 1 :] += 1.0
            out = causal_lowpass(perturbed, 1, 1)
            covered = tau // 2 + 1
            self.assertTrue(torch.equal(out[:, :covered], base[:, :covered]))

    def test_upsample_inverts_geometry(self):
        low = torch.randn(1, 5, 8, 8)
        self.assertEqual(causal_upsample(low, 2, 1).shape, (1, 9, 32, 32))

    def test_constant_roundtrip(self):
        x = torch.full((1, 9, 8, 8), 0.25)
        restored = causal_upsample(causal_lowpass(x, 1, 1), 1, 1)
        self.assertTrue(torch.allclose(restored, x, atol=1e-6))

    def test_spatial_level_matches_separable_filters(self):
        x = torch.randn(1, 4, 8, 8, generator=torch.Generator().manual_seed(3))
        expected, _ = haar_analysis(haar_analysis(x, -2)[0], -1)
        self.assertTrue(torch.allclose(lowpass_level(x, spatial=True, temporal=False), expected, atol=1e-6))

    def test_synthesis_level_is_undone_by_analysis(self):
        low = torch.randn(1, 3, 4, 4, generator=torch.Generator().manual_seed(4))
        for spatial, temporal in ((True, True), (True, False), (False, True)):
            with self.subTest(spatial=spatial, temporal=temporal):
                restored = lowpass_level(synthesis_level(low, spatial, temporal), spatial, temporal)
                self.assertTrue(torch.allclose(restored, low, atol=1e-6))

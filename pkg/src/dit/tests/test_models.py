import torch
import torch.nn.functional as F
from django.test import SimpleTestCase

from dit.models import CrossDiT, CrossDiTBlock, DitConfig, TextEncoder, TimestepEmbedder, sinusoidal_embedding
from dit.vocabulary import VOCABULARY, PromptTokens
from exceptions import ConfigError, ShapeError
from numerics.autograd import finite_difference_check, layer_params


def toy_config(**overrides) -> DitConfig:
    options = dict(hidden_size=16, depth=2, heads=2, text_max_length=8, latent_extents=(3, 4, 4))
    options.update(overrides)
    return DitConfig(**options)


class DitConfigTests(SimpleTestCase):
    def test_heads_must_divide_width(self):
        with self.assertRaisesMessage(ConfigError, "dit.heads"):
            toy_config(heads=3)

    def test_patch_must_divide_latent(self):
        with self.assertRaisesMessage(ConfigError, "dit.patch_size"):
            toy_config(patch_size=(2, 2, 2))

    def test_token_grid(self):
        self.assertEqual(toy_config().token_grid, (3, 2, 2))
        self.assertEqual(toy_config().token_count, 12)


class TimestepEmbeddingTests(SimpleTestCase):
    def test_zero_step(self):
        self.assertEqual(sinusoidal_embedding(0, 4).tolist(), [0.0, 0.0, 1.0, 1.0])

    def test_odd_width_is_rejected(self):
        with self.assertRaises(ShapeError):
            sinusoidal_embedding(3, 5)

    def test_distant_steps_are_distinguishable(self):
        a, b = sinusoidal_embedding(1, 64), sinusoidal_embedding(999, 64)
        self.assertLess(F.cosine_similarity(a, b, dim=0).item(), 0.99)

    def test_batched_steps(self):
        self.assertEqual(sinusoidal_embedding(torch.tensor([0, 5, 9]), 8).shape, (3, 8))

    def test_projection_is_deterministic(self):
        torch.manual_seed(0)
        embedder = TimestepEmbedder(16)
        t = torch.tensor([17, 17])
        out = embedder(t)
        self.assertTrue(torch.equal(out[0], out[1]))
        self.assertTrue(torch.equal(out, embedder(t)))


class TextEncoderTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.config = toy_config()
        self.encoder = TextEncoder(self.config).eval()

    def test_unconditional_prompt_is_zero(self):
        cond = self.encoder(PromptTokens.unconditional(8))
        self.assertEqual(cond.shape, (1, 8, 16))
        self.assertTrue(torch.equal(cond, torch.zeros_like(cond)))

    def test_padding_positions_are_zero(self):
        cond = self.encoder(VOCABULARY.encode("left eye leakage", 8))
        self.assertTrue(torch.equal(cond[0, 3:], torch.zeros(5, 16)))
        self.assertGreater(cond[0, :3].abs().sum().item(), 0)

    def test_identical_prompts_give_identical_outputs(self):
        prompt = VOCABULARY.encode("right eye, microaneurysms", 8)
        self.assertTrue(torch.equal(self.encoder(prompt), self.encoder(prompt)))

    def test_token_order_matters(self):
        prompt = VOCABULARY.encode("left eye leakage", 8)
        ids = prompt.ids.clone()
        ids[[0, 2]] = ids[[2, 0]]
        swapped = PromptTokens(ids, prompt.mask)
        self.assertGreater((self.encoder(prompt) - self.encoder(swapped)).norm().item(), 0)

    def test_out_of_vocabulary_id_is_rejected(self):
        ids = torch.full((8,), len(VOCABULARY), dtype=torch.long)
        with self.assertRaises(ShapeError):
            self.encoder(PromptTokens(ids, torch.ones(8, dtype=torch.bool)))

    def test_wrong_length_is_rejected(self):
        with self.assertRaises(ShapeError):
            self.encoder(PromptTokens.unconditional(4))


class CrossDiTTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(1)
        self.generator = torch.Generator().manual_seed(2)

    def test_fresh_model_predicts_zero(self):
        config = toy_config()
        model = CrossDiT(config)
        z = torch.randn(2, 4, 3, 4, 4, generator=self.generator)
        cond = torch.randn(2, 8, 16, generator=self.generator)
        eps = model(z, torch.tensor([0, 999]), cond)
        self.assertTrue(torch.equal(eps, torch.zeros_like(z)))

    def test_shape_is_preserved(self):
        for extents, patch in (((3, 4, 4), (1, 2, 2)), ((2, 6, 4), (2, 1, 2)), ((5, 16, 16), (1, 2, 2))):
            config = toy_config(latent_extents=extents, patch_size=patch)
            model = CrossDiT(config)
            with torch.no_grad():
                for layer in (model.head, model.final_modulation):
                    layer.weight.normal_()
            z = torch.randn(1, 4, *extents, generator=self.generator)
            eps = model(z, 10, torch.zeros(8, 16))
            self.assertEqual(eps.shape, z.shape)

    def test_patchify_inverts(self):
        model = CrossDiT(toy_config())
        z = torch.randn(2, 4, 3, 4, 4, generator=self.generator)
        self.assertTrue(torch.equal(model.unpatchify(model.patchify(z)), z))

    def test_geometry_mismatch_is_rejected(self):
        model = CrossDiT(toy_config())
        with self.assertRaises(ShapeError):
            model(torch.zeros(1, 4, 3, 8, 8), 0, torch.zeros(1, 8, 16))

    def test_timestep_out_of_range_is_rejected(self):
        model = CrossDiT(toy_config())
        with self.assertRaises(ShapeError):
            model(torch.zeros(1, 4, 3, 4, 4), 1000, torch.zeros(1, 8, 16))


class CrossDiTBlockTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(3)
        self.generator = torch.Generator().manual_seed(4)
        self.block = CrossDiTBlock(8, 2).double()

    def test_identity_at_init(self):
        x = torch.randn(2, 5, 8, dtype=torch.float64, generator=self.generator)
        temb = torch.randn(2, 8, dtype=torch.float64, generator=self.generator)
        cond = torch.randn(2, 3, 8, dtype=torch.float64, generator=self.generator)
        self.assertTrue(torch.equal(self.block(x, temb, cond), x))

    def test_gradient_check(self):
        with torch.no_grad():
            self.block.gates.fill_(0.5)
            self.block.modulation.weight.normal_(std=0.1, generator=self.generator)
        x = torch.randn(1, 4, 8, dtype=torch.float64, generator=self.generator)
        temb = torch.randn(1, 8, dtype=torch.float64, generator=self.generator)
        cond = torch.randn(1, 3, 8, dtype=torch.float64, generator=self.generator)
        error = finite_difference_check(
            lambda: self.block(x, temb, cond).pow(2).sum(), layer_params(self.block)
        )
        self.assertLess(error, 1e-3)
